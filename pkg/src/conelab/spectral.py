"""Averaging operator of an action on a net, and spectral-gap estimates.

The Markov operator moves from node i to the nearest net point of s(x_i)
with probability 1/|S| for each generator s; the generating set is symmetric,
so the operator is self-adjoint in the weighted inner product whenever the
snapped maps are exact permutations, and is explicitly symmetrised otherwise.

The mean-zero operator norm ``lambda`` feeds the displacement constant
kappa_lb = sqrt(2 * (1 - lambda)): for a symmetric generator average,
<(I - A)f, f> equals the mean of ||f - pi_s f||^2 / 2 over generators, so
every mean-zero f is displaced by at least kappa_lb * ||f|| by some
generator.  The norm itself is computed by shifted power iteration with a
residual certificate, cross-checked against a dense symmetric eigensolve on
small nets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConvergenceError, DataError, UsageError
from .nets import Net, snap_to_net
from .spaces import GroupAction, apply

DENSE_ORACLE_CAP = 4200


@dataclass(frozen=True)
class MarkovOperator:
    """Row-stochastic generator average on a net.

    ``idx[k, i]`` is the node nearest to generator-k applied to node i; the
    operator acts by (A f)(i) = mean_k f(idx[k, i]).  Weights give the inner
    product <f, g> = sum_i w_i f_i g_i.
    """

    net: Net
    labels: tuple[str, ...]
    idx: np.ndarray  # (|S|, N) int64
    weights: np.ndarray  # (N,)
    _pushed: np.ndarray = field(init=False, repr=False, compare=False, default=None)
    _inv: np.ndarray = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        # per-generator pushforward of the weights, used by the adjoint
        pushed = np.stack(
            [np.bincount(ix, weights=self.weights, minlength=self.n_nodes) for ix in self.idx]
        )
        object.__setattr__(self, "_pushed", pushed)
        # inverse maps exist when every row is a permutation (the built case)
        inv = None
        if all(
            np.bincount(ix, minlength=self.n_nodes).max() == 1 for ix in self.idx
        ):
            inv = np.empty_like(self.idx)
            ar = np.arange(self.n_nodes)
            for k, ix in enumerate(self.idx):
                inv[k, ix] = ar
        object.__setattr__(self, "_inv", inv)

    @property
    def n_nodes(self) -> int:
        return self.idx.shape[1]

    @property
    def n_generators(self) -> int:
        return self.idx.shape[0]

    def compose(self, label: str, f: np.ndarray) -> np.ndarray:
        """Composition operator of one generator: f o (snapped s)."""
        try:
            k = self.labels.index(label)
        except ValueError:
            raise UsageError(f"unknown generator label {label!r}") from None
        return f[self.idx[k]]

    def apply(self, f: np.ndarray) -> np.ndarray:
        acc = f[self.idx[0]].astype(float).copy()
        for k in range(1, self.n_generators):
            acc += f[self.idx[k]]
        return acc / self.n_generators

    def apply_adjoint(self, f: np.ndarray) -> np.ndarray:
        wf = self.weights * f
        if self._inv is not None:
            acc = wf[self._inv[0]].astype(float).copy()
            for k in range(1, self.n_generators):
                acc += wf[self._inv[k]]
        else:
            acc = np.zeros(self.n_nodes)
            for k in range(self.n_generators):
                acc += np.bincount(self.idx[k], weights=wf, minlength=self.n_nodes)
        return acc / (self.n_generators * self.weights)

    def apply_symmetrized(self, f: np.ndarray) -> np.ndarray:
        return 0.5 * (self.apply(f) + self.apply_adjoint(f))

    def mean(self, f: np.ndarray) -> float:
        return float(np.dot(self.weights, f))

    def center(self, f: np.ndarray) -> np.ndarray:
        return f - self.mean(f)

    def norm(self, f: np.ndarray, p: float = 2.0) -> float:
        if p == 2.0:
            return float(np.sqrt(np.dot(self.weights, f * f)))
        return float(np.dot(self.weights, np.abs(f) ** p) ** (1.0 / p))

    def max_collision_multiplicity(self) -> int:
        return int(
            max(np.bincount(ix, minlength=self.n_nodes).max() for ix in self.idx)
        )

    def adjoint_unit_defect(self) -> float:
        """How far the adjoint is from fixing constants: max |A*1 - 1|.

        Zero exactly when every snapped generator map preserves the weights
        (e.g. permutations with uniform weights).
        """
        a1 = self._pushed.sum(axis=0) / (self.n_generators * self.weights)
        return float(np.max(np.abs(a1 - 1.0)))

    def to_matrix(self) -> sp.csr_matrix:
        n = self.n_nodes
        rows = np.tile(np.arange(n, dtype=np.int64), self.n_generators)
        cols = self.idx.ravel()
        vals = np.full(rows.shape, 1.0 / self.n_generators)
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _resolve_permutation(net: Net, images: np.ndarray, raw: np.ndarray) -> np.ndarray:
    """Turn a snapped map into a permutation of the net.

    The continuum generators preserve the measure, so their discrete
    counterparts should permute the nodes; plain nearest-node snapping
    instead collides where cells contract and leaves orphans where they
    expand, which breaks the isometry of the composition operators.  Each
    contested target keeps its nearest source (ties to the lowest index);
    every displaced source is re-routed to the nearest orphan target, in
    ascending source order.
    """
    n = len(net)
    d_raw = net.space.distance(images, net.points[raw])
    order = np.lexsort((np.arange(n), d_raw, raw))
    sraw = raw[order]
    winner_pos = np.ones(n, dtype=bool)
    winner_pos[1:] = sraw[1:] != sraw[:-1]
    perm = np.full(n, -1, dtype=np.int64)
    winners = order[winner_pos]
    perm[winners] = raw[winners]
    losers = np.sort(order[~winner_pos])
    if len(losers) == 0:
        return perm
    taken = np.zeros(n, dtype=bool)
    taken[raw[winners]] = True
    orphans = np.flatnonzero(~taken)
    free = np.ones(len(orphans), dtype=bool)
    orphan_pts = net.points[orphans]

    # orphans bucketed by grid cell make the nearest-free-orphan query local
    buckets = None
    if net.meta.get("kind") == "grid" and net.space.point_dim == 2:
        n_grid = net.meta["grid_n"]
        cells = np.floor(orphan_pts * n_grid).astype(np.int64) % n_grid
        buckets = {}
        for k, (ci, cj) in enumerate(cells):
            buckets.setdefault((int(ci), int(cj)), []).append(k)

    for i in losers:
        k = -1
        if buckets is not None:
            ci, cj = (int(c) % n_grid for c in np.floor(images[i] * n_grid))
            for reach in range(1, 7):
                cand = [
                    k2
                    for di in range(-reach, reach + 1)
                    for dj in range(-reach, reach + 1)
                    for k2 in buckets.get(((ci + di) % n_grid, (cj + dj) % n_grid), ())
                    if free[k2]
                ]
                if cand:
                    cand = np.array(sorted(cand))
                    d = net.space.distance(images[i][None, :], orphan_pts[cand])
                    k = int(cand[np.argmin(d)])
                    break
        if k < 0:  # window exhausted (rare): global exact fallback
            d = np.where(free, net.space.distance(images[i][None, :], orphan_pts), np.inf)
            k = int(np.argmin(d))
        perm[i] = orphans[k]
        free[k] = False
    return perm


def build_markov(net: Net, action: GroupAction) -> MarkovOperator:
    """Snap every generator image of every net point, resolved to permutations."""
    if action.space.kind != net.space.kind:
        raise UsageError("net and action live on different spaces")
    labels = action.labels
    for g in action.generators:
        if g.inverse not in labels:
            raise UsageError("generating set is not symmetric")
    rows = []
    for s in labels:
        images = apply(action, s, net.points)
        raw = snap_to_net(net, images)
        rows.append(_resolve_permutation(net, images, raw))
    return MarkovOperator(net, labels, np.stack(rows), net.weights.copy())


@dataclass(frozen=True)
class NormEstimate:
    value: float
    residual: float
    iterations: int
    certified: bool
    method: str


@dataclass(frozen=True)
class SpectralGapReport:
    p: float
    lam: float
    residual: float
    iterations: int
    kappa_lb: float
    certified: bool
    asymmetry: float
    max_collision: int
    n_nodes: int


FAIL_RESIDUAL = 1e-6  # a residual above this certifies nothing useful


def _power_extreme(op, sign, seed, tol, max_iter):
    """Extreme signed eigenvalue of the symmetrised operator on mean-zero.

    Power iteration on 2*I + sign*B, whose spectrum is positive; returns the
    signed extreme eigenvalue of B in direction ``sign`` with a residual
    certificate and the iteration count.  The residual bounds the distance
    from the returned value to a true eigenvalue, so stalling below the
    certification threshold still yields a certified estimate.
    """
    n = op.n_nodes
    if n < 2:
        return 0.0, 0.0, 0
    rng = np.random.default_rng(seed)
    v = op.center(rng.standard_normal(n))
    v /= op.norm(v)
    history = []
    rho = 2.0
    for it in range(1, max_iter + 1):
        bv = op.center(op.apply_symmetrized(v))
        u = 2.0 * v + sign * bv
        rho = float(np.dot(op.weights, v * u))
        resid = op.norm(u - rho * v)
        history.append(resid)
        if resid <= tol:
            return sign * (rho - 2.0), resid, it
        v = u / op.norm(u)
    if history[-1] <= FAIL_RESIDUAL:
        return sign * (rho - 2.0), history[-1], max_iter
    raise ConvergenceError(
        f"power iteration did not reach residual {tol} in {max_iter} iterations "
        f"(last residual {history[-1]:.3e})",
        residual_history=history[-50:],
    )


def mean_zero_norm(
    op: MarkovOperator,
    p: float = 2.0,
    seed: int = 0,
    tol: float = 1e-10,
    max_iter: int = 100_000,
) -> NormEstimate:
    """Operator norm of the averaging operator on mean-zero functions.

    p = 2: certified two-sided power iteration on the symmetrised operator
    (largest magnitude over both spectral ends, residual-certified).
    p != 2: seeded random search plus renormalised iteration; reported as a
    heuristic lower bound only.
    """
    if not 1.0 < p < np.inf:
        raise UsageError("p must lie in (1, inf)")
    if p == 2.0:
        hi, r1, i1 = _power_extreme(op, +1.0, seed, tol, max_iter)
        lo, r2, i2 = _power_extreme(op, -1.0, seed + 1, tol, max_iter)
        # hi is the largest and lo the smallest signed eigenvalue; the norm
        # is the largest magnitude over both spectral ends
        lam = max(hi, -lo, 0.0)
        return NormEstimate(lam, max(r1, r2), i1 + i2, True, "power")
    rng = np.random.default_rng(seed)
    n = op.n_nodes
    best = 0.0
    for _ in range(32):
        f = op.center(rng.standard_normal(n))
        best = max(best, op.norm(op.apply(f), p) / op.norm(f, p))
    f = op.center(rng.standard_normal(n))
    f /= op.norm(f, p)
    for _ in range(200):
        g = op.center(op.apply(f))
        ng = op.norm(g, p)
        if ng < 1e-300:
            break
        best = max(best, ng / op.norm(f, p))
        f = g / ng
    return NormEstimate(best, float("nan"), 232, False, "heuristic-lower-bound")


def dense_mean_zero_norm(op: MarkovOperator) -> float:
    """Dense symmetric eigensolve oracle for the mean-zero norm (small nets)."""
    n = op.n_nodes
    if n > DENSE_ORACLE_CAP:
        raise UsageError(f"dense oracle capped at {DENSE_ORACLE_CAP} nodes, got {n}")
    a = op.to_matrix().toarray()
    d = np.sqrt(op.weights)
    a_hat = (d[:, None] * a) / d[None, :]
    c = 0.5 * (a_hat + a_hat.T)
    v0 = d / np.linalg.norm(d)
    proj = np.eye(n) - np.outer(v0, v0)
    h = proj @ c @ proj
    eigs = np.linalg.eigvalsh(h)
    return float(np.max(np.abs(eigs)))


def kappa_lower_bound(
    op: MarkovOperator,
    seed: int = 0,
    tol: float = 1e-10,
    max_iter: int = 100_000,
) -> SpectralGapReport:
    """Certified displacement constant kappa_lb = sqrt(2 * (1 - lambda)).

    Conservative: the norm estimate is inflated by its residual before the
    gap is taken, so the defining inequality max_s ||f - pi_s f|| >=
    kappa_lb * ||f|| cannot be overstated by iteration error.
    """
    est = mean_zero_norm(op, 2.0, seed, tol, max_iter)
    lam_safe = min(1.0, est.value + est.residual)
    kappa = float(np.sqrt(max(0.0, 2.0 * (1.0 - lam_safe))))
    return SpectralGapReport(
        p=2.0,
        lam=min(est.value, 1.0),
        residual=est.residual,
        iterations=est.iterations,
        kappa_lb=kappa,
        certified=est.certified,
        asymmetry=op.adjoint_unit_defect(),
        max_collision=op.max_collision_multiplicity(),
        n_nodes=op.n_nodes,
    )


def p_sweep(
    op: MarkovOperator, p_list, seed: int = 0, tol: float = 1e-10, max_iter: int = 100_000
) -> list[tuple[float, NormEstimate]]:
    """Mean-zero norm across exponents; only p = 2 is certified."""
    out = []
    for k, p in enumerate(p_list):
        out.append((float(p), mean_zero_norm(op, float(p), seed + 101 * k, tol, max_iter)))
    return out


# ---------------------------------------------------------------------------
# net adaptation: pruning dynamically trapped micro-structure
#
# Fixed points and low-order periodic orbits of the action carry zero
# measure, but the net nodes nearest to them are snapped back onto themselves
# and act as (near-)invariant atoms of the averaging operator, holding
# spurious eigenvalues at or near one at every resolution.  Two detectors
# remove this discrete shadow of the singular orbit set: an exact one (small
# forward-closed node sets) and a spectral one (near-top eigenvectors that
# are strongly localised get their support pruned until the top of the
# spectrum is carried by delocalised functions).


def _forward_closures(idx: np.ndarray, cap: int) -> np.ndarray:
    """Mark nodes whose forward orbit closure under all maps stays <= cap."""
    n = idx.shape[1]
    n_maps = idx.shape[0]
    trapped = np.zeros(n, dtype=bool)
    for start in range(n):
        if trapped[start]:
            continue
        seen = {start}
        frontier = [start]
        small = True
        while frontier and small:
            nxt = []
            for i in frontier:
                for k in range(n_maps):
                    j = int(idx[k, i])
                    if j not in seen:
                        seen.add(j)
                        nxt.append(j)
                        if len(seen) > cap:
                            small = False
                            break
                if not small:
                    break
            frontier = nxt
        if small:
            trapped[list(seen)] = True
    return trapped


def _integer_matrices(action) -> list | None:
    mats = []
    for g in action.generators:
        if not isinstance(g.payload, np.ndarray) or g.payload.shape != (2, 2):
            return None
        mats.append(np.asarray(g.payload, dtype=np.int64))
    return mats if mats else None


def _torsion_orbit_labels(q: int, mats: list) -> dict:
    """Orbit id of every exact-order-q rational point under the matrices.

    Points (a/q, b/q) with gcd(a, b, q) = 1; the matrices act mod q, so the
    orbit partition is exact integer arithmetic.
    """
    import math as _math

    labels = {}
    next_id = 0
    for a in range(q):
        for b in range(q):
            if _math.gcd(_math.gcd(a, b), q) != 1:
                continue
            if (a, b) in labels:
                continue
            frontier = [(a, b)]
            labels[(a, b)] = next_id
            while frontier:
                x, y = frontier.pop()
                for m in mats:
                    nx = (m[0, 0] * x + m[0, 1] * y) % q
                    ny = (m[1, 0] * x + m[1, 1] * y) % q
                    if (nx, ny) not in labels:
                        labels[(nx, ny)] = next_id
                        frontier.append((nx, ny))
            next_id += 1
    return labels


def _sticky_torsion_mask(net, action, op, rho_factor, esc_threshold, size_cap=256):
    """Flag nodes in near-closed clusters around low-order periodic points.

    Nodes are assigned to the orbit cluster of the nearest rational point of
    order q within radius rho; a cluster whose snapped images stay inside it
    for more than 1 - esc_threshold of all node/generator moves is sticky and
    gets flagged.  Exact rational orbits come from integer arithmetic mod q,
    so the detection is deterministic.  The tested orders scale with the net
    resolution so that clusters stay geometrically isolated micro-structures;
    clusters above ``size_cap`` nodes are never flagged.
    """
    mats = _integer_matrices(action)
    if mats is None or net.meta.get("kind") != "grid":
        return np.zeros(len(net), dtype=bool)
    n_grid = net.meta["grid_n"]
    spacing = (1.0 + 2.0 * net.meta.get("jitter", 0.0)) / n_grid
    rho = rho_factor * spacing
    # keep distinct rational clusters separated by a few halo radii
    q_max = max(4, int(round(0.5 * (1.0 / spacing) ** 0.5)))
    pts = net.points
    assign = np.full(len(net), -1, dtype=np.int64)
    next_base = 0
    for q in range(1, q_max + 1):
        lattice = np.round(pts * q) % q  # nearest (1/q)-lattice point, integer coords
        d = net.space.distance(pts, lattice / q)
        li = lattice.astype(np.int64)
        g = np.gcd(np.gcd(li[:, 0], li[:, 1]), q)
        exact = g == 1 if q > 1 else np.ones(len(net), bool)
        cand = (assign < 0) & (d <= rho) & exact
        if not np.any(cand):
            continue
        orbit = _torsion_orbit_labels(q, mats)
        ids = np.array([orbit[(int(a), int(b))] for a, b in li[cand]])
        assign[cand] = next_base + ids
        next_base += max(orbit.values(), default=-1) + 1
    if not np.any(assign >= 0):
        return np.zeros(len(net), dtype=bool)
    n_labels = int(assign.max()) + 1
    mask = assign >= 0
    sizes = np.bincount(assign[mask], minlength=n_labels)
    stay = np.zeros(n_labels, dtype=np.int64)
    total = np.zeros(n_labels, dtype=np.int64)
    for k in range(op.n_generators):
        img = assign[op.idx[k]]
        np.add.at(total, assign[mask], 1)
        same = mask & (img == assign)
        np.add.at(stay, assign[same], 1)
    sticky = np.zeros(n_labels, dtype=bool)
    nz = total > 0
    sticky[nz] = (total[nz] - stay[nz]) < esc_threshold * total[nz]
    sticky &= sizes <= size_cap
    return mask & sticky[np.clip(assign, 0, n_labels - 1)]


def _top_vector(op, sign, seed, iters):
    """Rough extreme eigenpair of the symmetrised operator (for detection)."""
    rng = np.random.default_rng(seed)
    v = op.center(rng.standard_normal(op.n_nodes))
    v /= op.norm(v)
    rho = 2.0
    for _ in range(iters):
        u = 2.0 * v + sign * op.center(op.apply_symmetrized(v))
        rho = float(np.dot(op.weights, v * u))
        resid = op.norm(u - rho * v)
        v = u / op.norm(u)
        if resid <= 1e-6:
            break
    return v, sign * (rho - 2.0)


def _participation(v: np.ndarray) -> float:
    """Inverse participation count of a unit vector: ~k when spread over k nodes."""
    s2 = float(np.dot(v, v))
    return s2 * s2 / float(np.dot(v * v, v * v))


def adapt_net_to_action(
    net: Net,
    action: GroupAction,
    closure_cap: int = 64,
    detect_iters: int = 4000,
    max_participation: int = 160,
    participation_fraction: float = 0.04,
    peak_fraction: float = 0.02,
    max_round_prune: int = 256,
    max_rounds: int = 24,
    seed: int = 0,
) -> Net:
    """Prune net nodes trapped by the snapped dynamics of the action.

    Returns a net on which the averaging operator has no exactly trapped
    components and whose extreme mean-zero eigenvectors are delocalised.
    Localisation is judged by participation count below
    min(max_participation, participation_fraction * nodes): the periodic-point
    scars this hunts keep a resolution-independent support, so the absolute
    cap makes the pruning scale-consistent.  Actions without sticky structure
    (irrational rotations, free translations) come through unchanged.  The
    pruned count is recorded in ``net.meta``.
    """
    from .nets import prune_nodes

    current = net
    budget = max(closure_cap, len(net) // 10)  # total prune allowance
    for _ in range(max_rounds):
        op = build_markov(current, action)
        trapped = _forward_closures(op.idx, min(closure_cap, len(current) // 4))
        # a cluster indicator's Rayleigh quotient is roughly its stay
        # fraction, so only nearly-closed clusters can rival the bulk norm
        trapped |= _sticky_torsion_mask(
            current, action, op, rho_factor=2.2, esc_threshold=0.06
        )
        if trapped.any():
            current = prune_nodes(current, trapped)
            continue
        loc_cut = min(max_participation, participation_fraction * len(current))
        scores = np.zeros(len(current))
        for k, sign in enumerate((+1.0, -1.0)):
            v, _rho = _top_vector(op, sign, seed + k, detect_iters)
            if _participation(v) < loc_cut:
                scores = np.maximum(scores, v * v / float(np.max(v * v)))
        flagged = scores >= peak_fraction
        if flagged.sum() > max_round_prune:
            # keep the prune surgical: only the strongest part of the support
            cut = np.partition(scores, -max_round_prune)[-max_round_prune]
            flagged = scores >= max(cut, peak_fraction)
        if not flagged.any():
            return current
        if current.meta.get("pruned", 0) + int(flagged.sum()) > budget:
            raise DataError(
                "dynamically trapped structure exceeds the pruning budget; "
                "the action does not mix on this net"
            )
        current = prune_nodes(current, flagged)
    raise DataError(
        f"trapped structure kept reappearing after {max_rounds} pruning rounds"
    )


def markov_to_csv(op: MarkovOperator) -> str:
    """Transition triplets as ``row,col,prob`` CSV (duplicates merged)."""
    m = op.to_matrix().tocoo()
    lines = ["row,col,prob"]
    order = np.lexsort((m.col, m.row))
    for r, c, v in zip(m.row[order], m.col[order], m.data[order]):
        lines.append(f"{r},{c},{float(v)!r}")
    return "\n".join(lines) + "\n"
