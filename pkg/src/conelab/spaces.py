"""Compact probability metric spaces and finitely generated actions on them.

Three base spaces are supported: the flat 2-torus R^2/Z^2, the unit-quaternion
3-sphere (the group of unit quaternions), and the circle R/Z.  Each intrinsic
metric is divided by its exact diameter so that diam(Y) = 1; every distance
returned by this module is in those rescaled units.  The measure is always the
uniform probability measure.

Points are plain float arrays: shape (..., 2) for the torus, (..., 4) for the
sphere (unit quaternions), (..., 1) for the circle.  All operations are pure
and broadcast over leading axes; randomness always comes in through an
explicit seed or ``numpy.random.Generator``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError

SPACE_KINDS = ("torus2", "sphere3", "circle")

# exact diameters of the intrinsic (pre-rescale) metrics
_TORUS_DIAM = math.sqrt(2.0) / 2.0
_CIRCLE_DIAM = 0.5
_SPHERE_DIAM = math.pi


class CompactSpace:
    """Base class: a compact metric probability space with diam = 1."""

    kind: str
    growth_exponent: int  # k with m(B(r)) = O(r^k); equals the dimension
    point_dim: int
    diameter_factor: float  # intrinsic diameter the metric was divided by

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def reduce(self, pts: np.ndarray) -> np.ndarray:
        """Canonical coordinates: mod-1 reduction or unit normalisation."""
        raise NotImplementedError

    def distance(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Rescaled distance, broadcasting over leading axes."""
        raise NotImplementedError

    def cross_distance(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Distance matrix between row sets ``a`` (n,d) and ``b`` (m,d)."""
        return self.distance(a[:, None, :], b[None, :, :])

    def ball_measure_exact(self, r: float) -> float:
        """Exact measure of a metric ball of rescaled radius ``r``.

        The spaces are homogeneous, so the value does not depend on the
        centre.  Used as the analytic oracle for the Monte-Carlo estimator.
        """
        raise NotImplementedError

    def check_points(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        if pts.shape[-1] != self.point_dim:
            raise UsageError(
                f"{self.kind} points have dimension {self.point_dim}, "
                f"got shape {pts.shape}"
            )
        return pts


class Torus2(CompactSpace):
    kind = "torus2"
    growth_exponent = 2
    point_dim = 2
    diameter_factor = _TORUS_DIAM

    def sample(self, rng, n):
        return rng.random((n, 2))

    def reduce(self, pts):
        return np.asarray(pts, dtype=float) % 1.0

    def distance(self, a, b):
        d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
        d = np.minimum(d, 1.0 - d)
        return np.sqrt(np.sum(d * d, axis=-1)) / _TORUS_DIAM

    def ball_measure_exact(self, r):
        rho = min(r, 1.0) * _TORUS_DIAM  # euclidean radius of the ball
        if rho <= 0.5:
            return math.pi * rho * rho
        # beyond half the fundamental cell, wrap overlaps: clip at full mass
        if rho >= _TORUS_DIAM:
            return 1.0
        # area of a disc minus the four circular segments outside the cell
        seg = rho * rho * math.acos(0.5 / rho) - 0.5 * math.sqrt(rho * rho - 0.25)
        return min(1.0, math.pi * rho * rho - 4.0 * seg)


class Circle(CompactSpace):
    kind = "circle"
    growth_exponent = 1
    point_dim = 1
    diameter_factor = _CIRCLE_DIAM

    def sample(self, rng, n):
        return rng.random((n, 1))

    def reduce(self, pts):
        return np.asarray(pts, dtype=float) % 1.0

    def distance(self, a, b):
        d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
        d = np.minimum(d, 1.0 - d)
        return d[..., 0] / _CIRCLE_DIAM

    def ball_measure_exact(self, r):
        return min(1.0, r * 2.0 * _CIRCLE_DIAM)


class Sphere3(CompactSpace):
    kind = "sphere3"
    growth_exponent = 3
    point_dim = 4
    diameter_factor = _SPHERE_DIAM

    def sample(self, rng, n):
        v = rng.standard_normal((n, 4))
        return v / np.linalg.norm(v, axis=-1, keepdims=True)

    def reduce(self, pts):
        pts = np.asarray(pts, dtype=float)
        return pts / np.linalg.norm(pts, axis=-1, keepdims=True)

    def distance(self, a, b):
        dot = np.sum(np.asarray(a, dtype=float) * np.asarray(b, dtype=float), axis=-1)
        return np.arccos(np.clip(dot, -1.0, 1.0)) / _SPHERE_DIAM

    def cross_distance(self, a, b):
        dot = np.asarray(a, dtype=float) @ np.asarray(b, dtype=float).T
        return np.arccos(np.clip(dot, -1.0, 1.0)) / _SPHERE_DIAM

    def ball_measure_exact(self, r):
        rho = min(r, 1.0) * _SPHERE_DIAM  # geodesic angle radius
        # normalised volume of a geodesic ball in S^3
        return (rho - math.sin(rho) * math.cos(rho)) / math.pi


_SPACES = {"torus2": Torus2, "sphere3": Sphere3, "circle": Circle}


def make_space(kind: str) -> CompactSpace:
    if kind not in _SPACES:
        raise UsageError(f"unknown space kind {kind!r}; expected one of {SPACE_KINDS}")
    return _SPACES[kind]()


def base_distance(space: CompactSpace, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Rescaled base-space distance between points ``x`` and ``y``."""
    return space.distance(space.check_points(x), space.check_points(y))


# ---------------------------------------------------------------------------
# group actions


@dataclass(frozen=True)
class Generator:
    """One generator of the acting group: a homeomorphism of the base space.

    ``payload`` is a 2x2 integer matrix (torus), a rotation angle (circle),
    a unit quaternion (sphere), or None for the identity.
    """

    label: str
    inverse: str
    payload: object
    lipschitz: float


def _hamilton(q: np.ndarray, x: np.ndarray) -> np.ndarray:
    w1, x1, y1, z1 = q
    w2, x2, y2, z2 = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
    return np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )


@dataclass(frozen=True)
class GroupAction:
    """A finite symmetric generating set acting on a compact space.

    The generator list is closed under inverses (the pairing is recorded on
    each generator) and every generator preserves the uniform measure.
    """

    space: CompactSpace
    generators: tuple[Generator, ...]
    name: str = "action"
    _by_label: dict = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "_by_label", {g.label: g for g in self.generators})
        for g in self.generators:
            if g.inverse not in self._by_label:
                raise UsageError(f"generator {g.label!r} lacks inverse {g.inverse!r}")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(g.label for g in self.generators)

    @property
    def max_lipschitz(self) -> float:
        return max((g.lipschitz for g in self.generators), default=1.0)

    def generator(self, label: str) -> Generator:
        try:
            return self._by_label[label]
        except KeyError:
            raise UsageError(f"unknown generator label {label!r}") from None


@dataclass(frozen=True)
class Word:
    """A word in the generators; acts by right-to-left composition."""

    labels: tuple[str, ...]

    def __len__(self):
        return len(self.labels)


def apply(action: GroupAction, label: str, pts: np.ndarray) -> np.ndarray:
    """Apply one generator to points of the action's space."""
    g = action.generator(label)
    pts = action.space.check_points(pts)
    if g.payload is None:
        return pts.copy()
    if action.space.kind == "torus2":
        return (pts @ np.asarray(g.payload, dtype=float).T) % 1.0
    if action.space.kind == "circle":
        return (pts + g.payload) % 1.0
    out = _hamilton(np.asarray(g.payload, dtype=float), pts)
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def apply_word(action: GroupAction, word: Word | tuple, pts: np.ndarray) -> np.ndarray:
    """Apply a word: ``(a, b)`` maps x to a(b(x))."""
    labels = word.labels if isinstance(word, Word) else tuple(word)
    out = action.space.check_points(pts).copy()
    for label in reversed(labels):
        out = apply(action, label, out)
    return out


def _matrix_opnorm(m: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(m, dtype=float), 2))


def sl2_torus_action(matrices: list | None = None) -> GroupAction:
    """SL2(Z) acting on the torus by integer matrices mod 1.

    Defaults to the elementary pair [[1,1],[0,1]], [[1,0],[1,1]] together
    with their inverses.  Any list of determinant-one integer matrices is
    accepted; inverses are adjoined automatically.
    """
    space = Torus2()
    if matrices is None:
        matrices = [
            ("A", np.array([[1, 1], [0, 1]])),
            ("B", np.array([[1, 0], [1, 1]])),
        ]
    gens = []
    for name, m in matrices:
        m = np.asarray(m, dtype=np.int64)
        if m.shape != (2, 2) or int(round(np.linalg.det(m))) != 1:
            raise UsageError(f"generator {name!r} is not an SL2(Z) matrix")
        minv = np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]], dtype=np.int64)
        gens.append(Generator(name, name + "i", m, _matrix_opnorm(m)))
        gens.append(Generator(name + "i", name, minv, _matrix_opnorm(minv)))
    return GroupAction(space, tuple(gens), name="sl2")


def circle_rotation_action(alpha: float) -> GroupAction:
    """Rotation of the circle by ``alpha`` (mod 1); an isometry."""
    gens = (
        Generator("R", "Ri", float(alpha) % 1.0, 1.0),
        Generator("Ri", "R", (-float(alpha)) % 1.0, 1.0),
    )
    return GroupAction(Circle(), gens, name="rotation")


GOLDEN_ANGLE = (math.sqrt(5.0) - 1.0) / 2.0

# default unit quaternions (1,2,0,0)/sqrt5, (1,0,2,0)/sqrt5, (1,0,0,2)/sqrt5:
# rational-direction rotations generating a free subgroup of the unit quaternions
_SU2_DEFAULT = [
    ("Q1", (1.0, 2.0, 0.0, 0.0)),
    ("Q2", (1.0, 0.0, 2.0, 0.0)),
    ("Q3", (1.0, 0.0, 0.0, 2.0)),
]


def su2_action(quaternions: list | None = None) -> GroupAction:
    """Left translations of the unit-quaternion group by a finite set."""
    space = Sphere3()
    if quaternions is None:
        quaternions = _SU2_DEFAULT
    gens = []
    for name, q in quaternions:
        q = np.asarray(q, dtype=float)
        q = q / np.linalg.norm(q)
        qinv = np.array([q[0], -q[1], -q[2], -q[3]])
        gens.append(Generator(name, name + "i", q, 1.0))
        gens.append(Generator(name + "i", name, qinv, 1.0))
    return GroupAction(space, tuple(gens), name="su2")


def identity_action(space: CompactSpace) -> GroupAction:
    """Trivial action; useful as a no-shortcut control."""
    return GroupAction(space, (Generator("E", "E", None, 1.0),), name="identity")


# ---------------------------------------------------------------------------
# sampled estimates


@dataclass(frozen=True)
class BallMeasure:
    value: float
    stderr: float
    n_samples: int


def ball_measure(
    space: CompactSpace, x: np.ndarray, r: float, n_samples: int, seed: int
) -> BallMeasure:
    """Monte-Carlo estimate of the measure of the ball B(x, r)."""
    if r <= 0 or n_samples < 1:
        raise UsageError("ball_measure needs r > 0 and n_samples >= 1")
    rng = np.random.default_rng(seed)
    x = space.check_points(x)
    hits = 0
    remaining = int(n_samples)
    while remaining > 0:
        chunk = min(remaining, 200_000)
        pts = space.sample(rng, chunk)
        hits += int(np.count_nonzero(space.distance(x[None, :], pts) <= r))
        remaining -= chunk
    p = hits / n_samples
    stderr = math.sqrt(max(p * (1.0 - p), 1.0 / n_samples) / n_samples)
    return BallMeasure(p, stderr, int(n_samples))


def lipschitz_estimate(
    action: GroupAction, label: str, n_pairs: int, seed: int
) -> float:
    """Largest sampled ratio d(sx, sy)/d(x, y) for one generator.

    Half the pairs are global, half are short pairs (x, x + eps*u), which is
    where the supremum is attained for linear torus maps.
    """
    if n_pairs < 1:
        raise UsageError("n_pairs must be >= 1")
    rng = np.random.default_rng(seed)
    space = action.space
    n_half = max(1, n_pairs // 2)
    xs = space.sample(rng, n_half)
    ys = space.sample(rng, n_half)
    eps = 1e-5
    xl = space.sample(rng, n_pairs - n_half)
    u = rng.standard_normal(xl.shape)
    u /= np.linalg.norm(u, axis=-1, keepdims=True)
    yl = space.reduce(xl + eps * u)
    best = 0.0
    for a, b in ((xs, ys), (xl, yl)):
        if len(a) == 0:
            continue
        d0 = space.distance(a, b)
        mask = d0 > 1e-12
        if not np.any(mask):
            continue
        d1 = space.distance(apply(action, label, a[mask]), apply(action, label, b[mask]))
        best = max(best, float(np.max(d1 / d0[mask])))
    return best
