"""Embedding distortion of level-set nets: upper and lower bounds.

The upper route embeds a finite metric space into l2 with the classic
randomized Bourgain construction (coordinates are distances to random
subsets, O(log^2 n) of them) and measures the realised distortion exactly.

The lower route multiplies the certified displacement gap kappa_lb of the
averaging operator with the half-measure radius of the level graph:
kappa_lb * R_half / 4 bounds the distortion of any embedding from below,
because functions moved little by every generator concentrate near their
mean, while half the pair mass sits at distance beyond R_half.

The auditor replays that chain of inequalities on a concrete embedding:
(a) the generator displacement is controlled by the image spread over
short pairs, (b) the centred norm is at most the displacement over
kappa_lb, and (c) the pair-averaged p-th power gap is at most 2^p times
the centred norm to the p.  (b) and (c) hold for every embedding at p = 2;
a failure means an implementation bug, and the report says so.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .spectral import MarkovOperator
from .warped import WarpedLevelGraph, distance_matrix


@dataclass(frozen=True)
class DistortionReport:
    expansion: float
    contraction: float
    value: float  # expansion * contraction; inf when collapsed pairs exist
    n_points: int
    p: float


@dataclass(frozen=True)
class LowerBound:
    value: float
    vacuous: bool  # kappa_lb = 0: no gap, the bound says nothing


@dataclass(frozen=True)
class EmbeddingAudit:
    level: float
    p: float
    dim: int
    expansion: float
    contraction: float
    distortion: float
    displacement: float  # max_s || f - f o sigma_s ||_p
    centered_norm: float  # || f - Mf ||_p
    double_integral: float  # sum_ij w_i w_j ||f_i - f_j||^p
    short_pair_spread: float  # max ||f_i - f_j|| over pairs within tau
    tau: float
    passed_displacement: bool
    passed_gap: bool
    passed_double: bool
    gap_margin: float
    double_margin: float
    note: str


def bourgain_embed(distances: np.ndarray, n: int, seed: int, q: float = 2.0) -> np.ndarray:
    """Randomized Bourgain coordinates for an n-point metric space.

    For scale j = 1..ceil(log2 n) and repetition r = 1..ceil(q * ln n), one
    coordinate maps x to d(x, A_jr) with A_jr containing each point
    independently with probability 2^-j.  Every coordinate is 1-Lipschitz.
    """
    distances = np.asarray(distances, dtype=float)
    if n < 2:
        raise UsageError("need at least two points to embed")
    if distances.shape != (n, n):
        raise UsageError(f"distance matrix must be {n}x{n}, got {distances.shape}")
    rng = np.random.default_rng(seed)
    scales = max(1, math.ceil(math.log2(n)))
    reps = max(1, math.ceil(q * math.log(n)))
    coords = np.zeros((n, scales * reps))
    col = 0
    for j in range(1, scales + 1):
        for _ in range(reps):
            mask = rng.random(n) < 2.0 ** (-j)
            if mask.any():
                coords[:, col] = distances[:, mask].min(axis=1)
            col += 1
    return coords


def random_embedding(n: int, dim: int, seed: int) -> np.ndarray:
    """Seeded Gaussian point cloud; a generic embedding for audits."""
    return np.random.default_rng(seed).standard_normal((n, dim))


def _pair_norms(coords: np.ndarray, block: np.ndarray, p: float) -> np.ndarray:
    """Target-space norms ||f_i - f_j|| for i in block, all j."""
    if p == 2.0:
        sq = np.sum(coords * coords, axis=1)
        g = coords[block] @ coords.T
        d2 = sq[block][:, None] + sq[None, :] - 2.0 * g
        return np.sqrt(np.maximum(d2, 0.0))
    diff = np.abs(coords[block][:, None, :] - coords[None, :, :])
    return np.sum(diff**p, axis=-1) ** (1.0 / p)


def embedding_distortion(
    distances: np.ndarray, coords: np.ndarray, p: float = 2.0, chunk: int = 512
) -> DistortionReport:
    """Exact distortion of a concrete embedding: sup-ratio both ways.

    Pairs at positive metric distance with coincident images make the
    contraction (and the distortion) infinite; that is reported, not raised.
    """
    distances = np.asarray(distances, dtype=float)
    coords = np.asarray(coords, dtype=float)
    n = len(distances)
    if coords.shape[0] != n:
        raise UsageError("coordinate rows must match the distance matrix")
    expansion = 0.0
    contraction = 0.0
    collapsed = False
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        block = np.arange(lo, hi)
        emb = _pair_norms(coords, block, p)
        d = distances[lo:hi]
        # ratios only over unordered pairs i < j
        mask = np.arange(n)[None, :] > block[:, None]
        pos = mask & (d > 0)
        if np.any(pos):
            expansion = max(expansion, float(np.max(emb[pos] / d[pos])))
            emb_pos = emb[pos]
            if np.any(emb_pos == 0.0):
                collapsed = True
            nz = emb_pos > 0
            if np.any(nz):
                contraction = max(contraction, float(np.max(d[pos][nz] / emb_pos[nz])))
    if collapsed:
        return DistortionReport(expansion, math.inf, math.inf, n, p)
    return DistortionReport(expansion, contraction, expansion * contraction, n, p)


def distortion_lower_bound(
    kappa_lb: float, half_radius: float, unit_lipschitz: float = 1.0
) -> LowerBound:
    """Distortion floor kappa_lb * R_half / 4 for the level-set net.

    ``unit_lipschitz`` is accepted for interface completeness: the Lipschitz
    constant enters the derivation once upstairs and once downstairs and
    cancels exactly.
    """
    if kappa_lb < 0 or half_radius < 0:
        raise UsageError("kappa_lb and half_radius must be nonnegative")
    del unit_lipschitz
    if kappa_lb == 0.0:
        return LowerBound(0.0, True)
    return LowerBound(kappa_lb * half_radius / 4.0, False)


def _bochner_norm(weights: np.ndarray, vecs: np.ndarray, p: float) -> float:
    """L_p(w; l_p^D) norm of a node-indexed vector field."""
    if p == 2.0:
        return float(np.sqrt(np.dot(weights, np.sum(vecs * vecs, axis=1))))
    node = np.sum(np.abs(vecs) ** p, axis=1)
    return float(np.dot(weights, node) ** (1.0 / p))


def audit_embedding(
    g: WarpedLevelGraph,
    op: MarkovOperator,
    coords: np.ndarray,
    kappa_lb: float,
    p: float = 2.0,
    distances: np.ndarray | None = None,
    rel_tol: float = 1e-9,
) -> EmbeddingAudit:
    """Replay the lower-bound inequality chain on one concrete embedding."""
    coords = np.asarray(coords, dtype=float)
    n = g.n_nodes
    if coords.shape[0] != n or op.n_nodes != n:
        raise UsageError("embedding, graph and operator must share the node set")
    w = op.weights
    if distances is None:
        distances = distance_matrix(g)

    # (a) generator displacement vs image spread over short pairs
    displacement = 0.0
    tau = 0.0
    for k in range(op.n_generators):
        sigma = op.idx[k]
        displacement = max(displacement, _bochner_norm(w, coords - coords[sigma], p))
        tau = max(tau, float(np.max(distances[np.arange(n), sigma])))
    spread = 0.0
    chunk = max(1, 2**22 // max(n, 1))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        block = np.arange(lo, hi)
        emb = _pair_norms(coords, block, p)
        short = distances[lo:hi] <= tau
        if np.any(short):
            spread = max(spread, float(np.max(emb[short])))
    passed_a = displacement <= spread * (1.0 + rel_tol) + 1e-12

    # (b) spectral gap: centred norm controlled by displacement
    mean_vec = w @ coords
    centered = _bochner_norm(w, coords - mean_vec[None, :], p)
    if kappa_lb > 0.0:
        gap_margin = displacement / kappa_lb - centered
        passed_b = centered * kappa_lb <= displacement * (1.0 + rel_tol) + 1e-12
    else:
        gap_margin = math.inf
        passed_b = True

    # (c) pair-averaged gap vs centred norm, by direct pair summation
    double = 0.0
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        block = np.arange(lo, hi)
        emb = _pair_norms(coords, block, p)
        double += float(w[lo:hi] @ (emb**p) @ w)
    bound_c = (2.0**p) * centered**p
    double_margin = bound_c - double
    passed_c = double <= bound_c * (1.0 + rel_tol) + 1e-12

    rep = embedding_distortion(distances, coords, p)
    notes = []
    if not passed_b:
        notes.append("gap inequality failed: implementation bug in kappa or norms")
    if not passed_c:
        notes.append("double-integral inequality failed: implementation bug")
    if p != 2.0:
        notes.append("p != 2: gap inequality uses the heuristic p-gap, not certified")
    return EmbeddingAudit(
        level=g.level,
        p=p,
        dim=coords.shape[1],
        expansion=rep.expansion,
        contraction=rep.contraction,
        distortion=rep.value,
        displacement=displacement,
        centered_norm=centered,
        double_integral=double,
        short_pair_spread=spread,
        tau=tau,
        passed_displacement=passed_a,
        passed_gap=passed_b,
        passed_double=passed_c,
        gap_margin=gap_margin,
        double_margin=double_margin,
        note="; ".join(notes),
    )


def embedding_to_csv(coords: np.ndarray) -> str:
    """Node coordinates as ``node,c1..cD`` CSV."""
    coords = np.asarray(coords, dtype=float)
    lines = ["node," + ",".join(f"c{i+1}" for i in range(coords.shape[1]))]
    for i, row in enumerate(coords):
        lines.append(f"{i}," + ",".join(repr(float(c)) for c in row))
    return "\n".join(lines) + "\n"
