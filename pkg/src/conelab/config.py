"""Experiment configuration: flat key = value text with sections.

The format is plain INI (configparser dialect) with a fixed section and key
layout, documented in the README.  Serialisation is canonical: fixed section
order, fixed key order, repr-formatted floats, space-joined lists; a config
therefore round-trips bit-exactly and its SHA-256 identifies every result
row derived from it.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import math
from dataclasses import dataclass, replace

from .errors import UsageError

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

# section, key, type tag ("int" | "float" | "str" | "ints" | "floats")
_LAYOUT = [
    ("space", "kind", "str"),
    ("action", "preset", "str"),
    ("action", "angle", "float"),
    ("action", "matrices", "str"),
    ("action", "quaternions", "str"),
    ("net", "jitter", "float"),
    ("net", "jitter_fraction", "float"),
    ("net", "grid_floor", "int"),
    ("net", "grid_cap", "int"),
    ("net", "max_nodes", "int"),
    ("graph", "theta", "float"),
    ("graph", "max_edges", "int"),
    ("levels", "scales", "ints"),
    ("levels", "grid_sizes", "ints"),
    ("spectral", "power_tol", "float"),
    ("spectral", "power_max_iter", "int"),
    ("spectral", "p_list", "floats"),
    ("embedding", "bourgain_q", "float"),
    ("embedding", "audit_random_embeddings", "int"),
    ("embedding", "audit_random_dim", "int"),
    ("sampling", "seed", "int"),
    ("sampling", "covering_samples", "int"),
    ("sampling", "weight_samples", "int"),
    ("sampling", "pair_sources", "int"),
    ("sampling", "ball_samples", "int"),
    ("bounds", "ball_const", "float"),
    ("output", "dir", "str"),
]


@dataclass(frozen=True)
class ExperimentConfig:
    """Every knob of the experiment harness, with reproducible defaults."""

    kind: str = "torus2"
    preset: str = "sl2"
    angle: float = _GOLDEN
    matrices: str = ""
    quaternions: str = ""
    jitter: float = 0.3
    jitter_fraction: float = 1.0
    grid_floor: int = 32
    grid_cap: int = 64
    max_nodes: int = 70_000
    theta: float = 3.0
    max_edges: int = 5_000_000
    scales: tuple = (8, 16, 32, 64, 128, 256)
    grid_sizes: tuple = (64, 128, 256)
    power_tol: float = 1e-10
    power_max_iter: int = 100_000
    p_list: tuple = (1.5, 2.0, 3.0, 4.0)
    bourgain_q: float = 2.0
    audit_random_embeddings: int = 20
    audit_random_dim: int = 6
    seed: int = 7
    covering_samples: int = 10_000
    weight_samples: int = 200_000
    pair_sources: int = 1024
    ball_samples: int = 50
    ball_const: float = math.pi
    dir: str = "results"

    def __post_init__(self):
        if self.kind not in ("torus2", "sphere3", "circle"):
            raise UsageError(f"unknown space kind {self.kind!r}")
        if self.preset not in ("sl2", "rotation", "su2", "identity"):
            raise UsageError(f"unknown action preset {self.preset!r}")
        if any(s < 1 for s in self.scales) or any(n < 1 for n in self.grid_sizes):
            raise UsageError("scales and grid sizes must be >= 1")

    def to_text(self) -> str:
        """Canonical serialisation; bit-exact round trip through from_text."""
        out = io.StringIO()
        current = None
        for section, key, tag in _LAYOUT:
            if section != current:
                if current is not None:
                    out.write("\n")
                out.write(f"[{section}]\n")
                current = section
            out.write(f"{key} = {_format(getattr(self, key), tag)}\n")
        return out.getvalue()

    def sha256(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

    def with_overrides(self, **kwargs) -> "ExperimentConfig":
        return replace(self, **kwargs)

    def derived_seed(self, purpose: str, index: int = 0) -> int:
        """Stable sub-seed for one sampling purpose."""
        digest = hashlib.sha256(f"{self.seed}:{purpose}:{index}".encode()).digest()
        return int.from_bytes(digest[:4], "big")


def _format(value, tag):
    if tag == "int":
        return str(int(value))
    if tag == "float":
        return repr(float(value))
    if tag == "ints":
        return " ".join(str(int(v)) for v in value)
    if tag == "floats":
        return " ".join(repr(float(v)) for v in value)
    return str(value)


def _parse(raw, tag):
    if tag == "int":
        return int(raw)
    if tag == "float":
        return float(raw)
    if tag == "ints":
        return tuple(int(v) for v in raw.split())
    if tag == "floats":
        return tuple(float(v) for v in raw.split())
    return raw


def config_from_text(text: str) -> ExperimentConfig:
    """Parse a config; unknown sections or keys are usage errors."""
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise UsageError(f"malformed config: {exc}") from exc
    known = {(s, k): tag for s, k, tag in _LAYOUT}
    values = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            if (section, key) not in known:
                raise UsageError(f"unknown config key [{section}] {key}")
            try:
                values[key] = _parse(raw, known[(section, key)])
            except ValueError as exc:
                raise UsageError(f"bad value for [{section}] {key}: {raw!r}") from exc
    return ExperimentConfig(**values)


def default_config() -> ExperimentConfig:
    return ExperimentConfig()
