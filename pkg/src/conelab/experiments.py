"""The five canonical experiments, emitting deterministic CSV tables.

E1  spectral-gap convergence across grid resolutions
E2  warped-ball measures against the theoretical cover bound
E3  distortion sandwich: spectral floor vs measured Bourgain distortion
E4  half-measure radius against log level
E5  mean-zero norm across exponents (heuristic away from p = 2)

Every run is a pure function of the configuration: identical config text
gives byte-identical CSV.  Each row carries the config hash and master seed.
Wall-clock timings are logged to stderr only, never written into results.
"""

from __future__ import annotations

import math
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .distortion import (
    audit_embedding,
    bourgain_embed,
    distortion_lower_bound,
    embedding_distortion,
    random_embedding,
)
from .errors import ResourceCapError, UsageError
from .nets import build_grid_net, build_net
from .spaces import (
    GroupAction,
    circle_rotation_action,
    identity_action,
    make_space,
    sl2_torus_action,
    su2_action,
)
from .spectral import build_markov, kappa_lower_bound, p_sweep
from .warped import (
    ball_cover_bound,
    build_level_graph,
    distance_matrix,
    half_measure_radius,
)

EXPERIMENT_IDS = ("E1", "E2", "E3", "E4", "E5")

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ResultTable:
    experiment: str
    columns: tuple
    rows: list
    config_sha: str

    def to_csv(self) -> str:
        lines = [
            f"# conelab {__version__}",
            f"# schema={SCHEMA_VERSION}",
            f"# experiment={self.experiment}",
            f"# config_sha256={self.config_sha}",
            ",".join(self.columns),
        ]
        for row in self.rows:
            lines.append(",".join(_cell(v) for v in row))
        return "\n".join(lines) + "\n"


def _cell(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def build_action(cfg: ExperimentConfig) -> GroupAction:
    """The configured action; presets cover the canonical examples."""
    if cfg.preset == "sl2":
        mats = None
        if cfg.matrices:
            mats = []
            for k, block in enumerate(cfg.matrices.split(";")):
                vals = [int(v) for v in block.split()]
                if len(vals) != 4:
                    raise UsageError("matrices must be blocks of four integers")
                mats.append((f"M{k}", np.array(vals).reshape(2, 2)))
        return sl2_torus_action(mats)
    if cfg.preset == "rotation":
        return circle_rotation_action(cfg.angle)
    if cfg.preset == "su2":
        quats = None
        if cfg.quaternions:
            quats = []
            for k, block in enumerate(cfg.quaternions.split(";")):
                vals = [float(v) for v in block.split()]
                if len(vals) != 4:
                    raise UsageError("quaternions must be blocks of four reals")
                quats.append((f"Q{k}", tuple(vals)))
        return su2_action(quats)
    return identity_action(make_space(cfg.kind))


def _expected_space(cfg: ExperimentConfig) -> str:
    return {"sl2": "torus2", "rotation": "circle", "su2": "sphere3"}.get(
        cfg.preset, cfg.kind
    )


def level_net(cfg: ExperimentConfig, action: GroupAction, t: float):
    """Net used at level t: grid resolution clipped to [grid_floor, grid_cap]."""
    space = action.space
    if space.kind == "sphere3":
        radius = max(1.0 / t, 0.12)  # fps nets get expensive quickly
        return build_net(space, radius, cfg.derived_seed("net"), max_points=cfg.max_nodes,
                         adapt_to=action)
    n = int(min(max(round(t), cfg.grid_floor), cfg.grid_cap))
    return build_grid_net(
        space,
        n,
        cfg.derived_seed("net"),
        jitter=cfg.jitter,
        jitter_fraction=cfg.jitter_fraction,
        max_points=cfg.max_nodes,
        adapt_to=action,
    )


def grid_net_for(cfg: ExperimentConfig, action: GroupAction, n: int):
    if action.space.kind == "sphere3":
        return build_net(action.space, max(1.0 / n, 0.12), cfg.derived_seed("net"),
                         max_points=cfg.max_nodes, adapt_to=action)
    return build_grid_net(
        action.space,
        n,
        cfg.derived_seed("net"),
        jitter=cfg.jitter,
        jitter_fraction=cfg.jitter_fraction,
        max_points=cfg.max_nodes,
        adapt_to=action,
    )


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def run_experiment(cfg: ExperimentConfig, experiment_id: str) -> ResultTable:
    if experiment_id not in EXPERIMENT_IDS:
        raise UsageError(
            f"unknown experiment {experiment_id!r}; expected one of {EXPERIMENT_IDS}"
        )
    if cfg.kind != _expected_space(cfg):
        raise UsageError(
            f"preset {cfg.preset!r} lives on {_expected_space(cfg)!r}, "
            f"config says {cfg.kind!r}"
        )
    runner = {
        "E1": _run_e1,
        "E2": _run_e2,
        "E3": _run_e3,
        "E4": _run_e4,
        "E5": _run_e5,
    }[experiment_id]
    t0 = time.time()
    table = runner(cfg)
    _log(f"{experiment_id} finished in {time.time() - t0:.1f}s")
    return table


def _run_e1(cfg: ExperimentConfig) -> ResultTable:
    action = build_action(cfg)
    columns = (
        "n", "nodes", "pruned", "lam", "residual", "iterations", "kappa_lb",
        "certified", "asymmetry", "max_collision", "status", "seed", "config",
    )
    rows = []
    for n in cfg.grid_sizes:
        try:
            net = grid_net_for(cfg, action, n)
        except ResourceCapError as exc:
            _log(f"E1 truncated at n={n}: {exc}")
            rows.append((n, 0, 0, math.nan, math.nan, 0, math.nan, False,
                         math.nan, 0, "truncated", cfg.seed, cfg.sha256()))
            break
        op = build_markov(net, action)
        rep = kappa_lower_bound(
            op, cfg.derived_seed("power", n), cfg.power_tol, cfg.power_max_iter
        )
        rows.append((
            n, len(net), net.meta.get("pruned", 0), rep.lam, rep.residual,
            rep.iterations, rep.kappa_lb, rep.certified, rep.asymmetry,
            rep.max_collision, "ok", cfg.seed, cfg.sha256(),
        ))
    return ResultTable("E1", columns, rows, cfg.sha256())


def _run_e2(cfg: ExperimentConfig) -> ResultTable:
    action = build_action(cfg)
    columns = ("t", "n_grid", "nodes", "center", "radius", "measured", "bound",
               "within_bound", "status", "seed", "config")
    k_growth = action.space.growth_exponent
    lip = action.max_lipschitz
    s_count = len(action.labels)
    rows = []
    for t in cfg.scales:
        try:
            net = level_net(cfg, action, float(t))
            g = build_level_graph(net, action, float(t), cfg.theta, cfg.max_edges)
        except ResourceCapError as exc:
            _log(f"E2 truncated at t={t}: {exc}")
            rows.append((t, 0, 0, -1, math.nan, math.nan, math.nan, False,
                         "truncated", cfg.seed, cfg.sha256()))
            break
        rng = np.random.default_rng(cfg.derived_seed("ball", t))
        centers = rng.choice(g.n_nodes, size=min(cfg.ball_samples, g.n_nodes), replace=False)
        radii = rng.uniform(1.0, 8.0, size=len(centers))
        dmat = distance_matrix(g, np.sort(centers))
        order = np.argsort(centers, kind="stable")
        for pos, (ci, radius) in enumerate(zip(np.sort(centers), radii[order])):
            measured = float(net.weights[dmat[pos] <= radius].sum())
            bound = ball_cover_bound(float(radius), float(t), k_growth, lip,
                                     s_count, cfg.ball_const)
            rows.append((t, net.meta.get("grid_n", 0), g.n_nodes, int(ci),
                         float(radius), measured, bound, measured <= bound,
                         "ok", cfg.seed, cfg.sha256()))
    return ResultTable("E2", columns, rows, cfg.sha256())


def _run_e3(cfg: ExperimentConfig) -> ResultTable:
    action = build_action(cfg)
    columns = (
        "t", "n_grid", "nodes", "kappa_net", "kappa_used", "r_half", "lower",
        "upper", "expansion", "contraction", "dim", "audits_passed",
        "audit_total", "status", "seed", "config",
    )
    levels = []
    truncated = None
    for t in cfg.scales:
        try:
            net = level_net(cfg, action, float(t))
            g = build_level_graph(net, action, float(t), cfg.theta, cfg.max_edges)
        except ResourceCapError as exc:
            _log(f"E3 truncated at t={t}: {exc}")
            truncated = t
            break
        op = build_markov(net, action)
        rep = kappa_lower_bound(
            op, cfg.derived_seed("power", t), cfg.power_tol, cfg.power_max_iter
        )
        dm = distance_matrix(g)
        r_half = half_measure_radius(g, net.weights, g.n_nodes, cfg.derived_seed("pairs", t))
        coords = bourgain_embed(dm, g.n_nodes, cfg.derived_seed("bourgain", t),
                                cfg.bourgain_q)
        dist = embedding_distortion(dm, coords)
        levels.append((t, net, g, op, rep, dm, r_half, coords, dist))
        _log(f"E3 level t={t}: nodes={g.n_nodes} kappa={rep.kappa_lb:.4f} "
             f"R={r_half:.3f} upper={dist.value:.3f}")
    kappa_used = min((rep.kappa_lb for _, _, _, _, rep, _, _, _, _ in levels), default=0.0)
    rows = []
    for t, net, g, op, rep, dm, r_half, coords, dist in levels:
        audits = [audit_embedding(g, op, coords, kappa_used, distances=dm)]
        for k in range(cfg.audit_random_embeddings):
            audits.append(audit_embedding(
                g, op,
                random_embedding(g.n_nodes, cfg.audit_random_dim,
                                 cfg.derived_seed("audit", t * 1000 + k)),
                kappa_used, distances=dm,
            ))
        passed = sum(a.passed_gap and a.passed_double for a in audits)
        lower = distortion_lower_bound(kappa_used, r_half)
        rows.append((
            t, net.meta.get("grid_n", 0), g.n_nodes, rep.kappa_lb, kappa_used,
            r_half, lower.value, dist.value, dist.expansion, dist.contraction,
            coords.shape[1], passed, len(audits), "ok", cfg.seed, cfg.sha256(),
        ))
    if truncated is not None:
        rows.append((truncated, 0, 0, math.nan, math.nan, math.nan, math.nan,
                     math.nan, math.nan, math.nan, 0, 0, 0, "truncated",
                     cfg.seed, cfg.sha256()))
    return ResultTable("E3", columns, rows, cfg.sha256())


def _run_e4(cfg: ExperimentConfig) -> ResultTable:
    action = build_action(cfg)
    columns = ("t", "n_grid", "nodes", "r_half", "log_t", "status", "seed", "config")
    rows = []
    for t in cfg.scales:
        try:
            net = level_net(cfg, action, float(t))
            g = build_level_graph(net, action, float(t), cfg.theta, cfg.max_edges)
        except ResourceCapError as exc:
            _log(f"E4 truncated at t={t}: {exc}")
            rows.append((t, 0, 0, math.nan, math.log(t), "truncated",
                         cfg.seed, cfg.sha256()))
            break
        r_half = half_measure_radius(
            g, net.weights, min(cfg.pair_sources, g.n_nodes),
            cfg.derived_seed("pairs", t),
        )
        rows.append((t, net.meta.get("grid_n", 0), g.n_nodes, r_half,
                     math.log(t), "ok", cfg.seed, cfg.sha256()))
        _log(f"E4 level t={t}: R={r_half:.3f}")
    return ResultTable("E4", columns, rows, cfg.sha256())


def _run_e5(cfg: ExperimentConfig) -> ResultTable:
    action = build_action(cfg)
    n = min(cfg.grid_sizes)
    net = grid_net_for(cfg, action, n)
    op = build_markov(net, action)
    sweep = p_sweep(op, cfg.p_list, cfg.derived_seed("psweep"),
                    cfg.power_tol, cfg.power_max_iter)
    columns = ("n", "nodes", "p", "lambda_p", "certified", "method",
               "status", "seed", "config")
    rows = [
        (n, len(net), p, est.value, est.certified, est.method, "ok",
         cfg.seed, cfg.sha256())
        for p, est in sweep
    ]
    return ResultTable("E5", columns, rows, cfg.sha256())
