"""C-nets of the base spaces with measure weights.

A net is a finite point set meeting every point of the space within distance
C (rescaled units), together with nonnegative weights summing to one that
discretise the uniform measure.

Torus and circle nets are regular grids, optionally jittered: each grid point
may be displaced by a seeded uniform offset of at most ``jitter`` cells while
keeping its cell's exact measure as weight.  Jitter exists because aligned
grids are mapped exactly onto themselves by integer torus matrices, which
makes the snapped dynamics an affine permutation with parasitic invariant
functions; a jittered net restores generic behaviour.  Sphere nets use greedy
farthest-point sampling with Monte-Carlo Voronoi weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ResourceCapError, UsageError
from .spaces import CompactSpace

DEFAULT_MAX_POINTS = 70_000

_CSV_HEADER = "index,{coords},weight"


@dataclass(frozen=True)
class Net:
    """A C-net: points, weights and construction metadata."""

    space: CompactSpace
    radius: float
    points: np.ndarray  # (N, d)
    weights: np.ndarray  # (N,), sums to 1
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class CoveringReport:
    radius: float
    max_gap: float
    passed: bool
    n_samples: int


def _grid_points(n: int, dim: int, jitter: float, fraction: float, rng: np.random.Generator):
    axes = [np.arange(n, dtype=float) for _ in range(dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    if jitter > 0.0 and fraction > 0.0:
        u = rng.uniform(-jitter, jitter, size=pts.shape)
        if fraction < 1.0:
            # doped lattice: only a seeded fraction of nodes is displaced
            defect = rng.random(len(pts)) < fraction
            u[~defect] = 0.0
        pts = pts + u
    return (pts / n) % 1.0


_PRUNE_MARGIN = 1.6  # covering slack left for isolated pruning holes


def build_net(
    space: CompactSpace,
    radius: float,
    seed: int,
    jitter: float = 0.0,
    jitter_fraction: float = 1.0,
    max_points: int = DEFAULT_MAX_POINTS,
    adapt_to=None,
) -> Net:
    """Construct a net of covering radius ``radius`` (rescaled units).

    With ``adapt_to`` set to a group action, nodes trapped by the snapped
    dynamics are pruned (see :func:`adapt_net_to_action`); the grid is then
    built finer so the declared radius still covers the pruning holes.
    """
    if not 0.0 < radius <= 1.0:
        raise UsageError("net radius must lie in (0, 1]")
    if not 0.0 <= jitter <= 0.45:
        raise UsageError("jitter must lie in [0, 0.45] cells")
    rng = np.random.default_rng(seed)
    if space.kind in ("torus2", "circle"):
        # a jittered grid of pitch 1/n has covering radius <= (1+2*jitter)/n
        margin = _PRUNE_MARGIN if adapt_to is not None else 1.0
        n = math.ceil(margin * (1.0 + 2.0 * jitter) / radius)
        return build_grid_net(
            space, n, seed, jitter, jitter_fraction, max_points,
            radius=radius, adapt_to=adapt_to,
        )
    net = _build_fps_net(space, radius, rng, max_points)
    if adapt_to is not None:
        from .spectral import adapt_net_to_action  # deferred: spectral imports nets

        net = adapt_net_to_action(net, adapt_to)
    return net


def build_grid_net(
    space: CompactSpace,
    n: int,
    seed: int,
    jitter: float = 0.0,
    jitter_fraction: float = 1.0,
    max_points: int = DEFAULT_MAX_POINTS,
    radius: float | None = None,
    adapt_to=None,
) -> Net:
    """Grid net with an explicit per-axis resolution ``n``."""
    if space.kind not in ("torus2", "circle"):
        raise UsageError("grid nets exist only for torus2 and circle")
    if n < 1:
        raise UsageError("grid resolution must be >= 1")
    dim = space.point_dim
    count = n**dim
    if count > max_points:
        raise ResourceCapError(
            f"grid net would have {count} points, over the max_points cap {max_points}"
        )
    rng = np.random.default_rng(seed)
    pts = _grid_points(n, dim, jitter, jitter_fraction, rng)
    weights = np.full(count, 1.0 / count)
    # each point represents its own grid cell, so cell weights stay exact
    if radius is None:
        margin = _PRUNE_MARGIN if adapt_to is not None else 1.0
        radius = margin * (1.0 + 2.0 * jitter) / n
    meta = {
        "kind": "grid",
        "grid_n": n,
        "jitter": float(jitter),
        "jitter_fraction": float(jitter_fraction),
    }
    net = Net(space, float(radius), pts, weights, meta)
    if adapt_to is not None:
        from .spectral import adapt_net_to_action  # deferred: spectral imports nets

        net = adapt_net_to_action(net, adapt_to)
    return net


def _build_fps_net(space, radius, rng, max_points):
    pool = space.sample(rng, 20_000)
    first = pool[0]
    chosen = [0]
    dist = space.distance(pool, first[None, :])
    # stop short of the target radius so fresh samples still land within it
    target = 0.85 * radius
    while float(dist.max()) > target:
        if len(chosen) >= max_points:
            raise ResourceCapError(
                f"farthest-point net exceeded the max_points cap {max_points}"
            )
        nxt = int(np.argmax(dist))
        chosen.append(nxt)
        dist = np.minimum(dist, space.distance(pool, pool[nxt][None, :]))
    pts = pool[np.array(chosen)]
    N = len(pts)
    net = Net(space, float(radius), pts, np.full(N, 1.0 / N), {"kind": "fps"})
    weights = voronoi_weights(net, n_samples=max(100_000, 200 * N), seed=int(rng.integers(2**31)))
    return Net(space, float(radius), pts, weights, {"kind": "fps"})


def snap_to_net(net: Net, pts: np.ndarray) -> np.ndarray:
    """Index of the nearest net point for each query point.

    Exact nearest neighbours; ties resolve to the lowest index.  Grid nets
    use O(1) cell arithmetic, farthest-point nets a chunked argmin.
    """
    pts = net.space.check_points(np.atleast_2d(pts))
    if net.meta.get("kind") == "grid":
        n = net.meta["grid_n"]
        if net.meta.get("jitter", 0.0) == 0.0 and "cell_map" not in net.meta:
            idx = np.floor(pts * n + 0.5).astype(np.int64) % n
            if net.space.kind == "circle":
                return idx[:, 0]
            return idx[:, 0] * n + idx[:, 1]
        return _snap_grid_window(net, pts, n)
    return _snap_bruteforce(net, pts)


def _snap_grid_window(net, pts, n, chunk=8192):
    out = np.empty(len(pts), dtype=np.int64)
    for lo in range(0, len(pts), chunk):
        out[lo : lo + chunk] = _snap_grid_window_chunk(net, pts[lo : lo + chunk], n)
    return out


def _snap_grid_window_chunk(net, pts, n):
    # candidates: nodes whose nominal cell lies in a window around the query
    # cell; jitter below half a cell plus isolated pruning holes keep the
    # true nearest within a 7x7 (circle: 1x7) window
    dim = net.space.point_dim
    cell_map = net.meta.get("cell_map")  # nominal cell -> node id, -1 = hole
    reach = 3 if cell_map is not None else 2
    cells = np.floor(pts * n).astype(np.int64) % n
    offs = np.arange(-reach, reach + 1)
    if dim == 1:
        cand_cell = (cells[:, 0][:, None] + offs[None, :]) % n
    else:
        oi, oj = np.meshgrid(offs, offs, indexing="ij")
        block = np.stack([oi.ravel(), oj.ravel()], axis=-1)
        ci = (cells[:, 0][:, None] + block[None, :, 0]) % n
        cj = (cells[:, 1][:, None] + block[None, :, 1]) % n
        cand_cell = ci * n + cj
    if cell_map is not None:
        cand = cell_map[cand_cell]
    else:
        cand = cand_cell
    cand_sorted = np.sort(np.where(cand < 0, np.iinfo(np.int64).max, cand), axis=1)
    valid = cand_sorted < np.iinfo(np.int64).max
    safe = np.where(valid, cand_sorted, 0)
    d = net.space.distance(pts[:, None, :], net.points[safe])
    d = np.where(valid, d, np.inf)
    # candidates ascend by node id, so the first argmin is the lowest index
    out = cand_sorted[np.arange(len(pts)), np.argmin(d, axis=1)]
    missing = ~valid.any(axis=1)  # window entirely pruned: exact fallback
    if missing.any():
        out[missing] = _snap_bruteforce(net, pts[missing])
    return out


def _snap_bruteforce(net, pts, chunk=2048):
    out = np.empty(len(pts), dtype=np.int64)
    for lo in range(0, len(pts), chunk):
        hi = min(lo + chunk, len(pts))
        d = net.space.cross_distance(pts[lo:hi], net.points)
        out[lo:hi] = np.argmin(d, axis=1)  # first minimum = lowest index
    return out


def prune_nodes(net: Net, trapped: np.ndarray) -> Net:
    """Remove the flagged nodes, renormalising the surviving weights.

    The removed mass is spread uniformly: keeping the weights proportional
    preserves the exact measure invariance of permutation-resolved generator
    maps, at the cost of a relative weight error of the pruned fraction.
    """
    n_trapped = int(trapped.sum())
    if n_trapped == 0:
        return net
    if n_trapped >= len(net) // 2:
        raise DataError(
            "more than half of the net would be pruned; "
            "the action does not mix on this net"
        )
    keep = ~trapped
    pts = net.points[keep]
    w = net.weights[keep]
    meta = dict(net.meta)
    removed_total = meta.get("pruned", 0) + n_trapped
    if meta.get("kind") == "grid":
        n = meta["grid_n"]
        cells = meta.get("nominal_cells")
        if cells is None:
            cells = np.arange(len(net), dtype=np.int64)
        cells = cells[keep]
        cell_map = np.full(n ** net.space.point_dim, -1, dtype=np.int64)
        cell_map[cells] = np.arange(len(pts))
        meta.update(nominal_cells=cells, cell_map=cell_map, pruned=removed_total)
    else:
        meta["pruned"] = removed_total
    return Net(net.space, net.radius, pts, w / w.sum(), meta)


def voronoi_weights(net: Net, n_samples: int, seed: int) -> np.ndarray:
    """Fraction of seeded uniform samples nearest to each net point."""
    if len(net) == 0:
        raise UsageError("net is empty")
    rng = np.random.default_rng(seed)
    counts = np.zeros(len(net), dtype=np.int64)
    remaining = int(n_samples)
    while remaining > 0:
        chunk = min(remaining, 100_000)
        samples = net.space.sample(rng, chunk)
        counts += np.bincount(snap_to_net(net, samples), minlength=len(net))
        remaining -= chunk
    w = counts / float(n_samples)
    w[int(np.argmax(w))] += 1.0 - w.sum()  # exact normalisation
    return w


def verify_net(net: Net, n_samples: int, seed: int) -> CoveringReport:
    """Sampled covering check: max distance from fresh points to the net."""
    rng = np.random.default_rng(seed)
    max_gap = 0.0
    remaining = int(n_samples)
    while remaining > 0:
        chunk = min(remaining, 50_000)
        samples = net.space.sample(rng, chunk)
        idx = snap_to_net(net, samples)
        gaps = net.space.distance(samples, net.points[idx])
        max_gap = max(max_gap, float(gaps.max()))
        remaining -= chunk
    return CoveringReport(net.radius, max_gap, max_gap <= net.radius, int(n_samples))


def net_to_csv(net: Net) -> str:
    """Serialise a net as ``index,x0..,weight`` CSV."""
    dim = net.space.point_dim
    lines = ["index," + ",".join(f"x{i}" for i in range(dim)) + ",weight"]
    for i, (p, w) in enumerate(zip(net.points, net.weights)):
        coords = ",".join(repr(float(c)) for c in p)
        lines.append(f"{i},{coords},{w!r}")
    return "\n".join(lines) + "\n"
