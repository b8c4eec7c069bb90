"""Level-set approximation of the warped metric by a weighted graph.

A warped level graph lives on the nodes of a net at level t.  Two move types
are encoded as edges:

* cone edges between net points at base distance <= theta*C, of weight
  t * d(x_i, x_j): short moves priced by the cone metric at level t;
* generator edges from each node i to the nearest net point of s(x_i), of
  weight 1 + t * (snap error), for every generator s: group moves cost one
  unit plus the price of the snap correction.

Shortest paths in this graph give the best mixed chain of cone moves and
generator jumps available on the net, an upper approximation of the warped
metric restricted to one level.  Edge weights are floor-quantised to
multiples of 2^-30 so that all path sums are exact in double precision:
symmetry and the triangle inequality then hold exactly, not just to
tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra

from .errors import DataError, GraphConstructionError, ResourceCapError, UsageError
from .nets import Net, snap_to_net
from .spaces import GroupAction, apply

DEFAULT_MAX_EDGES = 5_000_000

_QUANTUM = 2.0**-30


def _quantize(w: np.ndarray) -> np.ndarray:
    # floor, so quantisation never pushes a weight above its exact value
    return np.floor(np.asarray(w) / _QUANTUM) * _QUANTUM


@dataclass(frozen=True)
class WarpedLevelGraph:
    net: Net
    action: GroupAction
    level: float
    theta: float
    matrix: sp.csr_matrix  # symmetric, positive weights
    edge_src: np.ndarray
    edge_dst: np.ndarray
    edge_weight: np.ndarray
    edge_kind: np.ndarray  # strings: "cone" or "generator:<label>"
    max_generator_weight: float  # largest generator-edge weight (>= 1)

    @property
    def n_nodes(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_edges(self) -> int:
        return len(self.edge_weight)


@dataclass(frozen=True)
class DistanceField:
    source: int
    distances: np.ndarray


def _cone_edges_grid(net, theta):
    n = net.meta["grid_n"]
    space = net.space
    cutoff = theta * net.radius
    dim = space.point_dim
    if dim == 1:
        k_max = min(n - 1, int(math.ceil(cutoff * n / 2.0)) + 1)
        offsets = [(k,) for k in range(1, k_max + 1)]
    else:
        # enough index offsets to reach cutoff even with maximal jitter
        k_max = int(math.ceil(theta * (1.0 + 2.0 * net.meta.get("jitter", 0.0)))) + 1
        k_max = min(k_max, n - 1)
        offsets = [
            (di, dj)
            for di in range(0, k_max + 1)
            for dj in range(-k_max, k_max + 1)
            if (di > 0 or dj > 0) and di * di + dj * dj <= (k_max + 1) ** 2
        ]
    idx = np.arange(len(net), dtype=np.int64)
    cells = net.meta.get("nominal_cells")
    cell_map = net.meta.get("cell_map")  # pruned grids: cell -> node or -1
    if cells is None:
        cells = idx
    src_all, dst_all, w_all = [], [], []
    for off in offsets:
        if dim == 1:
            dst_cell = (cells + off[0]) % n
        else:
            ii, jj = cells // n, cells % n
            dst_cell = ((ii + off[0]) % n) * n + ((jj + off[1]) % n)
        dst = dst_cell if cell_map is None else cell_map[dst_cell]
        src = idx
        if cell_map is not None:
            ok = dst >= 0
            src, dst = src[ok], dst[ok]
        d = space.distance(net.points[src], net.points[dst])
        keep = d <= cutoff
        src_all.append(src[keep])
        dst_all.append(dst[keep])
        w_all.append(d[keep])
    return (
        np.concatenate(src_all),
        np.concatenate(dst_all),
        np.concatenate(w_all),
    )


def _cone_edges_dense(net, theta, chunk=1024):
    cutoff = theta * net.radius
    src_all, dst_all, w_all = [], [], []
    pts = net.points
    for lo in range(0, len(net), chunk):
        hi = min(lo + chunk, len(net))
        d = net.space.cross_distance(pts[lo:hi], pts)
        ii, jj = np.nonzero(d <= cutoff)
        keep = (ii + lo) < jj  # upper triangle only
        src_all.append(ii[keep] + lo)
        dst_all.append(jj[keep])
        w_all.append(d[ii[keep], jj[keep]])
    return np.concatenate(src_all), np.concatenate(dst_all), np.concatenate(w_all)


def build_level_graph(
    net: Net,
    action: GroupAction,
    t: float,
    theta: float = 3.0,
    max_edges: int = DEFAULT_MAX_EDGES,
) -> WarpedLevelGraph:
    """Assemble the level graph at parameter ``t``."""
    if t < 1.0:
        raise UsageError("level t must be >= 1")
    if theta < 2.0:
        raise UsageError("theta must be >= 2 so that grid neighbours connect")
    if action.space.kind != net.space.kind:
        raise UsageError("net and action live on different spaces")
    N = len(net)

    if net.meta.get("kind") == "grid":
        ci, cj, cd = _cone_edges_grid(net, theta)
    else:
        ci, cj, cd = _cone_edges_dense(net, theta)
    cw = _quantize(t * cd)

    gi_all, gj_all, gw_all = [ci, cj], [cj, ci], [cw, cw]
    kind_list = ["cone"]
    kinds = [np.zeros(len(ci) * 2, dtype=np.int32)]
    max_gen_w = 0.0
    for label in action.labels:
        img = apply(action, label, net.points)
        tgt = snap_to_net(net, img)
        err = net.space.distance(img, net.points[tgt])
        src = np.arange(N, dtype=np.int64)
        keep = src != tgt  # generator self-loops never shorten a path
        if not np.any(keep):
            continue
        w = _quantize(1.0 + t * err[keep])
        max_gen_w = max(max_gen_w, float(w.max()))
        # the reverse edge carries the same weight: walking the jump backwards
        # is realised by the inverse generator with the same snap correction
        gi_all += [src[keep], tgt[keep]]
        gj_all += [tgt[keep], src[keep]]
        gw_all += [w, w]
        kinds.append(np.full(2 * int(keep.sum()), len(kind_list), dtype=np.int32))
        kind_list.append(f"generator:{label}")

    src = np.concatenate(gi_all)
    dst = np.concatenate(gj_all)
    w = np.concatenate(gw_all)
    kind_codes = np.concatenate(kinds)
    if len(src) > 2 * max_edges:
        raise ResourceCapError(
            f"level graph would have {len(src) // 2} edges, over the max_edges cap {max_edges}"
        )

    # keep the lightest parallel edge per ordered pair
    order = np.lexsort((w, dst, src))
    src, dst, w, kind_codes = src[order], dst[order], w[order], kind_codes[order]
    first = np.ones(len(src), dtype=bool)
    first[1:] = (src[1:] != src[:-1]) | (dst[1:] != dst[:-1])
    src, dst, w, kind_codes = src[first], dst[first], w[first], kind_codes[first]

    kind_names = np.array(kind_list, dtype=object)
    matrix = sp.csr_matrix((w, (src, dst)), shape=(N, N))
    n_comp, _ = connected_components(matrix, directed=False)
    if n_comp != 1:
        raise GraphConstructionError(
            f"level graph has {n_comp} components; increase theta (currently {theta})"
        )
    return WarpedLevelGraph(
        net=net,
        action=action,
        level=float(t),
        theta=float(theta),
        matrix=matrix,
        edge_src=src,
        edge_dst=dst,
        edge_weight=w,
        edge_kind=kind_names[kind_codes],
        max_generator_weight=max_gen_w,
    )


def all_distances(g: WarpedLevelGraph, sources: np.ndarray) -> list[DistanceField]:
    """Exact shortest-path distance fields from the given source nodes."""
    sources = np.asarray(sources, dtype=np.int64)
    mat = dijkstra(g.matrix, directed=True, indices=sources)
    return [DistanceField(int(s), mat[k]) for k, s in enumerate(sources)]


def distance_matrix(g: WarpedLevelGraph, sources: np.ndarray | None = None) -> np.ndarray:
    """(len(sources), N) shortest-path distances; all-pairs when sources is None."""
    if sources is None:
        sources = np.arange(g.n_nodes)
    return dijkstra(g.matrix, directed=True, indices=np.asarray(sources, dtype=np.int64))


def warped_distance(g: WarpedLevelGraph, i: int, j: int) -> float:
    """Exact shortest-path distance between two nodes."""
    if not (0 <= i < g.n_nodes and 0 <= j < g.n_nodes):
        raise UsageError("node index out of range")
    d = dijkstra(g.matrix, directed=True, indices=[i])
    return float(d[0, j])


def _sample_sources(n_nodes: int, sources_sample: int, seed: int) -> np.ndarray:
    if sources_sample >= n_nodes:
        return np.arange(n_nodes, dtype=np.int64)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n_nodes, size=sources_sample, replace=False))


def pair_measure_within(
    g: WarpedLevelGraph,
    weights: np.ndarray,
    R: float,
    sources_sample: int,
    seed: int,
    _dists: np.ndarray | None = None,
    _sources: np.ndarray | None = None,
) -> float:
    """Estimate of the product measure of node pairs within warped distance R.

    Sums weight_i * (sum of weight_j over nodes within R of i) over sampled
    source nodes, normalised by the sampled source mass.
    """
    if R < 0:
        raise UsageError("R must be >= 0")
    if _sources is None:
        _sources = _sample_sources(g.n_nodes, sources_sample, seed)
    if _dists is None:
        _dists = distance_matrix(g, _sources)
    w = np.asarray(weights)
    inner = (_dists <= R) @ w
    src_w = w[_sources]
    return float(np.dot(src_w, inner) / src_w.sum())


def half_measure_radius(
    g: WarpedLevelGraph,
    weights: np.ndarray,
    sources_sample: int,
    seed: int,
) -> float:
    """Largest radius R_t keeping the pair measure at or below one half.

    Returns R_t with pair_measure_within(R_t) <= 1/2 < pair_measure_within(R_t + 1),
    located on the sorted multiset of sampled pairwise distances.
    """
    sources = _sample_sources(g.n_nodes, sources_sample, seed)
    dists = distance_matrix(g, sources)
    w = np.asarray(weights)
    pair_w = np.outer(w[sources], w).ravel()
    pair_w /= w[sources].sum()
    flat = dists.ravel()
    order = np.argsort(flat, kind="stable")
    flat = flat[order]
    cum = np.cumsum(pair_w[order])
    k0 = int(np.searchsorted(flat, 0.0, side="right"))
    if k0 > 0 and cum[k0 - 1] > 0.5:
        raise DataError("pair measure exceeds 1/2 already at R = 0: weights too atomic")
    over = cum > 0.5
    k = int(np.argmax(over))  # first index with cumulative mass > 1/2
    if not over[k]:
        raise DataError("pair measure never exceeds 1/2; weights do not sum to 1?")
    v_next = float(flat[k])  # smallest distance whose inclusion crosses 1/2
    below = flat[:k][flat[:k] < v_next]
    v_star = float(below[-1]) if len(below) else 0.0
    if v_next - v_star <= 1.0:
        return v_star
    return v_next - 1.0


def ball_cover_bound(
    R: float, t: float, k: float, L: float, s_count: int, ball_const: float
) -> float:
    """Theoretical cap on the level-set measure of a warped R-ball.

    min(1, s_count^R * ball_const * (R * L^R / t)^k), evaluated in log space:
    at most s_count^R group elements move the centre, and each cone ball that
    covers the displaced centre has radius R * L^R / t in the base.
    """
    if R < 0 or t <= 0 or k <= 0 or L <= 0 or s_count < 1 or ball_const <= 0:
        raise UsageError("ball_cover_bound arguments must be positive")
    if R == 0.0:
        return 0.0
    log_bound = (
        R * math.log(s_count)
        + math.log(ball_const)
        + k * (math.log(R) + R * math.log(L) - math.log(t))
    )
    return math.exp(min(0.0, log_bound))


def half_bound_coefficient(
    t: float, k: float, L: float, s_count: int, ball_const: float, tol: float = 1e-12
) -> float:
    """Largest c such that the cover bound at R = c*log(t) stays <= 1/2."""
    if t <= 1.0:
        raise UsageError("t must be > 1")
    logt = math.log(t)
    lo, hi = 0.0, 1.0
    while ball_cover_bound(hi * logt, t, k, L, s_count, ball_const) <= 0.5:
        hi *= 2.0
        if hi > 1e6:
            return hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if ball_cover_bound(mid * logt, t, k, L, s_count, ball_const) <= 0.5:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol:
            break
    return lo


def graph_to_csv(g: WarpedLevelGraph) -> str:
    """Edge list as ``i,j,weight,kind`` CSV."""
    lines = ["i,j,weight,kind"]
    for i, j, w, kind in zip(g.edge_src, g.edge_dst, g.edge_weight, g.edge_kind):
        lines.append(f"{i},{j},{float(w)!r},{kind}")
    return "\n".join(lines) + "\n"
