"""Request and response models of the conelab service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class ErrorBody(BaseModel):
    code: str  # usage | resource | internal
    message: str


class ConfigRequest(BaseModel):
    """Base for compute requests: optional config text plus a seed override."""

    config_text: str = Field("", description="INI config; empty means defaults")
    seed: int | None = Field(None, description="overrides [sampling] seed")


class NetRequest(ConfigRequest):
    scale: float = Field(8.0, ge=1.0, description="level t; net radius follows the config")
    include_csv: bool = True


class NetResponse(BaseModel):
    nodes: int
    radius: float
    pruned: int
    covering_max_gap: float
    covering_passed: bool
    csv: str = ""


class WarpRequest(ConfigRequest):
    scale: float = Field(8.0, ge=1.0)
    include_csv: bool = False


class WarpResponse(BaseModel):
    nodes: int
    edges: int
    level: float
    theta: float
    max_generator_weight: float
    csv: str = ""


class GapRequest(ConfigRequest):
    grid_size: int | None = Field(None, ge=2, description="defaults to the first configured size")


class GapResponse(BaseModel):
    nodes: int
    pruned: int
    lam: float
    residual: float
    iterations: int
    kappa_lb: float
    certified: bool
    asymmetry: float
    max_collision: int


class DistortRequest(ConfigRequest):
    scale: float = Field(8.0, ge=1.0)


class DistortResponse(BaseModel):
    nodes: int
    level: float
    kappa_lb: float
    r_half: float
    lower: float
    lower_vacuous: bool
    upper: float
    expansion: float
    contraction: float
    dim: int


class AuditRequest(ConfigRequest):
    scale: float = Field(8.0, ge=1.0)
    embedding: str = Field("bourgain", pattern="^(bourgain|random)$")
    p: float = Field(2.0, gt=1.0)
    random_dim: int = Field(6, ge=1)


class AuditResponse(BaseModel):
    level: float
    p: float
    dim: int
    distortion: float
    displacement: float
    centered_norm: float
    double_integral: float
    short_pair_spread: float
    tau: float
    passed_displacement: bool
    passed_gap: bool
    passed_double: bool
    gap_margin: float
    double_margin: float
    note: str


class ExperimentRequest(ConfigRequest):
    experiment_id: str = Field(pattern="^E[1-5]$")


class ExperimentResponse(BaseModel):
    experiment_id: str
    n_rows: int
    truncated: bool
    config_sha256: str
    csv: str


class PlotRequest(BaseModel):
    csv: str
    title: str = ""
    x: str
    y: list[str]
    logx: bool = False
    logy: bool = False


class PlotResponse(BaseModel):
    svg: str
