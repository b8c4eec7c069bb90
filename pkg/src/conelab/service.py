"""FastAPI service wrapping the core laboratory.

Every endpoint is stateless and a pure function of its request, so results
are reproducible across clients.  The CLI is a thin client of this app; it
talks to it in-process by default or over HTTP against ``conelab serve``.
"""

from __future__ import annotations

import math

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import __version__, schemas
from .config import config_from_text
from .distortion import (
    audit_embedding,
    bourgain_embed,
    distortion_lower_bound,
    embedding_distortion,
    random_embedding,
)
from .errors import ResourceCapError, UsageError
from .experiments import build_action, grid_net_for, level_net, run_experiment
from .nets import net_to_csv, verify_net
from .plotting import PlotSpec, parse_table_csv, render_line_plot
from .spectral import build_markov, kappa_lower_bound
from .warped import build_level_graph, distance_matrix, graph_to_csv, half_measure_radius

app = FastAPI(
    title="conelab",
    version=__version__,
    description="Warped-cone level sets: spectral gaps and embedding distortion.",
)


@app.exception_handler(UsageError)
async def _usage_handler(_: Request, exc: UsageError):
    return JSONResponse(status_code=400, content={"code": "usage", "message": str(exc)})


@app.exception_handler(ResourceCapError)
async def _resource_handler(_: Request, exc: ResourceCapError):
    return JSONResponse(status_code=422, content={"code": "resource", "message": str(exc)})


@app.exception_handler(Exception)
async def _internal_handler(_: Request, exc: Exception):
    return JSONResponse(
        status_code=500, content={"code": "internal", "message": f"{type(exc).__name__}: {exc}"}
    )


def _cfg(req: schemas.ConfigRequest):
    cfg = config_from_text(req.config_text) if req.config_text else config_from_text("")
    if req.seed is not None:
        cfg = cfg.with_overrides(seed=req.seed)
    return cfg


@app.get("/health", response_model=schemas.HealthResponse)
def health():
    return schemas.HealthResponse(status="ok", version=__version__)


@app.post("/net", response_model=schemas.NetResponse)
def make_net(req: schemas.NetRequest):
    cfg = _cfg(req)
    action = build_action(cfg)
    net = level_net(cfg, action, req.scale)
    report = verify_net(net, cfg.covering_samples, cfg.derived_seed("covering"))
    return schemas.NetResponse(
        nodes=len(net),
        radius=net.radius,
        pruned=net.meta.get("pruned", 0),
        covering_max_gap=report.max_gap,
        covering_passed=report.passed,
        csv=net_to_csv(net) if req.include_csv else "",
    )


@app.post("/warp", response_model=schemas.WarpResponse)
def make_warp(req: schemas.WarpRequest):
    cfg = _cfg(req)
    action = build_action(cfg)
    net = level_net(cfg, action, req.scale)
    g = build_level_graph(net, action, req.scale, cfg.theta, cfg.max_edges)
    return schemas.WarpResponse(
        nodes=g.n_nodes,
        edges=g.n_edges,
        level=g.level,
        theta=g.theta,
        max_generator_weight=g.max_generator_weight,
        csv=graph_to_csv(g) if req.include_csv else "",
    )


@app.post("/gap", response_model=schemas.GapResponse)
def compute_gap(req: schemas.GapRequest):
    cfg = _cfg(req)
    action = build_action(cfg)
    n = req.grid_size if req.grid_size is not None else cfg.grid_sizes[0]
    net = grid_net_for(cfg, action, n)
    op = build_markov(net, action)
    rep = kappa_lower_bound(op, cfg.derived_seed("power", n), cfg.power_tol,
                            cfg.power_max_iter)
    return schemas.GapResponse(
        nodes=len(net),
        pruned=net.meta.get("pruned", 0),
        lam=rep.lam,
        residual=rep.residual,
        iterations=rep.iterations,
        kappa_lb=rep.kappa_lb,
        certified=rep.certified,
        asymmetry=rep.asymmetry,
        max_collision=rep.max_collision,
    )


@app.post("/distort", response_model=schemas.DistortResponse)
def compute_distortion(req: schemas.DistortRequest):
    cfg = _cfg(req)
    action = build_action(cfg)
    net = level_net(cfg, action, req.scale)
    g = build_level_graph(net, action, req.scale, cfg.theta, cfg.max_edges)
    op = build_markov(net, action)
    rep = kappa_lower_bound(op, cfg.derived_seed("power", int(req.scale)),
                            cfg.power_tol, cfg.power_max_iter)
    dm = distance_matrix(g)
    r_half = half_measure_radius(g, net.weights, g.n_nodes,
                                 cfg.derived_seed("pairs", int(req.scale)))
    coords = bourgain_embed(dm, g.n_nodes,
                            cfg.derived_seed("bourgain", int(req.scale)),
                            cfg.bourgain_q)
    dist = embedding_distortion(dm, coords)
    lower = distortion_lower_bound(rep.kappa_lb, r_half)
    return schemas.DistortResponse(
        nodes=g.n_nodes,
        level=g.level,
        kappa_lb=rep.kappa_lb,
        r_half=r_half,
        lower=lower.value,
        lower_vacuous=lower.vacuous,
        upper=dist.value if math.isfinite(dist.value) else -1.0,
        expansion=dist.expansion,
        contraction=dist.contraction if math.isfinite(dist.contraction) else -1.0,
        dim=coords.shape[1],
    )


@app.post("/audit", response_model=schemas.AuditResponse)
def run_audit(req: schemas.AuditRequest):
    cfg = _cfg(req)
    action = build_action(cfg)
    net = level_net(cfg, action, req.scale)
    g = build_level_graph(net, action, req.scale, cfg.theta, cfg.max_edges)
    op = build_markov(net, action)
    rep = kappa_lower_bound(op, cfg.derived_seed("power", int(req.scale)),
                            cfg.power_tol, cfg.power_max_iter)
    dm = distance_matrix(g)
    if req.embedding == "bourgain":
        coords = bourgain_embed(dm, g.n_nodes,
                                cfg.derived_seed("bourgain", int(req.scale)),
                                cfg.bourgain_q)
    else:
        coords = random_embedding(g.n_nodes, req.random_dim,
                                  cfg.derived_seed("audit", int(req.scale)))
    audit = audit_embedding(g, op, coords, rep.kappa_lb, p=req.p, distances=dm)
    return schemas.AuditResponse(
        level=audit.level,
        p=audit.p,
        dim=audit.dim,
        distortion=audit.distortion if math.isfinite(audit.distortion) else -1.0,
        displacement=audit.displacement,
        centered_norm=audit.centered_norm,
        double_integral=audit.double_integral,
        short_pair_spread=audit.short_pair_spread,
        tau=audit.tau,
        passed_displacement=audit.passed_displacement,
        passed_gap=audit.passed_gap,
        passed_double=audit.passed_double,
        gap_margin=audit.gap_margin if math.isfinite(audit.gap_margin) else -1.0,
        double_margin=audit.double_margin,
        note=audit.note,
    )


@app.post("/experiment", response_model=schemas.ExperimentResponse)
def run_experiment_endpoint(req: schemas.ExperimentRequest):
    cfg = _cfg(req)
    table = run_experiment(cfg, req.experiment_id)
    truncated = any("truncated" in map(str, row) for row in table.rows)
    return schemas.ExperimentResponse(
        experiment_id=req.experiment_id,
        n_rows=len(table.rows),
        truncated=truncated,
        config_sha256=table.config_sha,
        csv=table.to_csv(),
    )


@app.post("/plot", response_model=schemas.PlotResponse)
def render_plot(req: schemas.PlotRequest):
    columns = parse_table_csv(req.csv)
    spec = PlotSpec(title=req.title, x=req.x, y=tuple(req.y),
                    logx=req.logx, logy=req.logy)
    return schemas.PlotResponse(svg=render_line_plot(columns, spec))
