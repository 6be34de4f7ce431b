"""Experiment configuration: TOML round-trip and static validation."""

from __future__ import annotations

import copy
import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .randfield import COVARIANCE_KINDS
from .metricfield import TRANSFORM_KINDS

EXPERIMENT_KINDS = ("field", "distance", "mu", "shape", "lattice-verify", "geodesic", "enumerate")


@dataclass
class WindowConfig:
    half_width: float = 75.0
    spacing: float = 0.2
    # explicit corner and side lengths override the centered square/cube
    origin: list = field(default_factory=list)
    extent: list = field(default_factory=list)


@dataclass
class CovarianceConfig:
    kind: str = "spherical"
    variance: float = 1.0
    range: float = 1.0
    k: int = 2


@dataclass
class MetricConfig:
    transform: str = "paper-diagonal"
    parameters: list = field(default_factory=list)
    interp_order: int = 1


@dataclass
class SolverConfig:
    h: float = 0.2
    stencil: int = 3
    n_sub: int = 8
    padding: float = 0.5


@dataclass
class StatsConfig:
    t_list: list = field(default_factory=lambda: [10.0, 20.0, 30.0, 40.0])
    replicates: int = 20
    base_seed: int = 0
    n_directions: int = 16
    ball_t: float = 40.0
    eps: float = 0.1
    confidence: float = 0.95
    required_pass: int = 18
    positivity_factor: float = 0.9
    isotropy_tol: float = 1.05
    workers: int = 1


SECTIONS = {"window": WindowConfig, "covariance": CovarianceConfig, "metric": MetricConfig,
            "solver": SolverConfig, "stats": StatsConfig}


@dataclass
class ExperimentConfig:
    kind: str = "mu"
    dim: int = 2
    output_dir: str = "out"
    checks: list = field(default_factory=list)
    window: WindowConfig = field(default_factory=WindowConfig)
    covariance: CovarianceConfig = field(default_factory=CovarianceConfig)
    metric: MetricConfig = field(default_factory=MetricConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    stats: StatsConfig = field(default_factory=StatsConfig)
    # experiment-specific settings (pairs, n, directions, ...)
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        cfg, errors = _build(raw)
        if errors:
            raise ConfigError(errors)
        return cfg

    def to_toml(self) -> str:
        d = _strip_empty(self.to_dict())
        # params is free-form; sort it so a config rebuilt from a manifest writes the same bytes
        d["params"] = _sort_keys(d["params"])
        return tomli_w.dumps(d)

    @classmethod
    def from_toml(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(tomllib.loads(text))

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_toml())
        return path

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_toml(Path(path).read_text())

    def digest(self) -> str:
        """sha256 of the canonical JSON form (output directory excluded)."""
        d = self.to_dict()
        d.pop("output_dir", None)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _strip_empty(d):
    # TOML has no null; empty lists and dicts round-trip fine, None values are dropped
    if isinstance(d, dict):
        return {k: _strip_empty(v) for k, v in d.items() if v is not None}
    return d


def _sort_keys(d):
    if isinstance(d, dict):
        return {k: _sort_keys(d[k]) for k in sorted(d)}
    if isinstance(d, list):
        return [_sort_keys(v) for v in d]
    return d


_NUMBER = (int, float)


def _coerce(value, default, name: str, errors: list):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            errors.append(f"{name}: expected a boolean")
            return default
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            errors.append(f"{name}: expected an integer")
            return default
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, _NUMBER):
            errors.append(f"{name}: expected a number")
            return default
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            errors.append(f"{name}: expected a string")
            return default
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            errors.append(f"{name}: expected a list")
            return default
        return copy.deepcopy(value)
    if isinstance(default, dict):
        if not isinstance(value, dict):
            errors.append(f"{name}: expected a table")
            return default
        return copy.deepcopy(value)
    return value


def _build_section(cls, raw, name: str, errors: list):
    obj = cls()
    if raw is None:
        return obj
    if not isinstance(raw, dict):
        errors.append(f"{name}: expected a table")
        return obj
    known = {f.name for f in fields(cls)}
    for key, value in raw.items():
        if key not in known:
            errors.append(f"{name}.{key}: unknown setting")
            continue
        setattr(obj, key, _coerce(value, getattr(obj, key), f"{name}.{key}", errors))
    return obj


def _build(raw) -> tuple[ExperimentConfig, list[str]]:
    errors: list[str] = []
    cfg = ExperimentConfig()
    if not isinstance(raw, dict):
        return cfg, ["config: expected a table at top level"]
    top = {f.name for f in fields(ExperimentConfig)}
    for key, value in raw.items():
        if key not in top:
            errors.append(f"{key}: unknown setting")
        elif key in SECTIONS:
            setattr(cfg, key, _build_section(SECTIONS[key], value, key, errors))
        else:
            setattr(cfg, key, _coerce(value, getattr(cfg, key), key, errors))
    return cfg, errors


def _finite_pos(x) -> bool:
    return isinstance(x, _NUMBER) and not isinstance(x, bool) and math.isfinite(x) and x > 0


def _is_point(p, d: int) -> bool:
    return (isinstance(p, list) and len(p) == d
            and all(isinstance(v, _NUMBER) and not isinstance(v, bool) and math.isfinite(v) for v in p))


def window_bounds(cfg: ExperimentConfig):
    """(lo, hi) corners of the metric window."""
    w = cfg.window
    if w.origin:
        lo = [float(v) for v in w.origin]
        return lo, [a + float(e) for a, e in zip(lo, w.extent)]
    return [-w.half_width] * cfg.dim, [w.half_width] * cfg.dim


def _check_rules(cfg: ExperimentConfig) -> list[str]:
    e: list[str] = []
    if cfg.kind not in EXPERIMENT_KINDS:
        e.append(f"kind: must be one of {', '.join(EXPERIMENT_KINDS)}")
    if cfg.dim not in (2, 3):
        e.append("dim: must be 2 or 3")
        return e
    d = cfg.dim
    w, cov, met, sol, st = cfg.window, cfg.covariance, cfg.metric, cfg.solver, cfg.stats

    if not _finite_pos(w.spacing):
        e.append("window.spacing: must be a positive number")
    if w.origin or w.extent:
        if not _is_point(w.origin, d) or not _is_point(w.extent, d):
            e.append(f"window.origin/extent: need {d} finite numbers each")
        elif any(not _finite_pos(x) for x in w.extent):
            e.append("window.extent: must be positive")
        elif _finite_pos(w.spacing):
            for x in w.extent:
                n = x / w.spacing
                if abs(n - round(n)) > 1e-9 * max(1.0, n):
                    e.append("window.extent: must be a whole number of spacings")
                    break
    else:
        if not _finite_pos(w.half_width):
            e.append("window.half_width: must be a positive number")
        elif _finite_pos(w.spacing):
            n = 2 * w.half_width / w.spacing
            if abs(n - round(n)) > 1e-9 * max(1.0, n):
                e.append("window.half_width: 2*half_width must be a whole number of spacings")

    if cov.kind not in COVARIANCE_KINDS or cov.kind == "tabulated":
        e.append("covariance.kind: must be spherical or wendland")
    if not _finite_pos(cov.variance):
        e.append("covariance.variance: must be positive")
    if not _finite_pos(cov.range):
        e.append("covariance.range: must be positive")
    if cov.kind == "wendland" and cov.k not in (0, 1, 2):
        e.append("covariance.k: must be 0, 1 or 2")

    if met.transform not in TRANSFORM_KINDS or met.transform == "user":
        e.append("metric.transform: must be paper-diagonal, constant, conformal or hyperbolic-halfplane")
    if met.interp_order not in (1, 3):
        e.append("metric.interp_order: must be 1 or 3")
    if not all(isinstance(p, _NUMBER) and not isinstance(p, bool) for p in met.parameters):
        e.append("metric.parameters: must be numbers")
    elif met.transform == "constant" and not (met.parameters and _finite_pos(met.parameters[0])):
        e.append("metric.parameters: constant metric needs a positive value")
    elif met.transform == "paper-diagonal" and met.parameters and not _finite_pos(met.parameters[0]):
        e.append("metric.parameters: paper-diagonal scale must be positive")

    if not _finite_pos(sol.h):
        e.append("solver.h: must be a positive number")
    if not (isinstance(sol.stencil, int) and 1 <= sol.stencil <= 8):
        e.append("solver.stencil: must be an integer in 1..8")
    if not (isinstance(sol.n_sub, int) and sol.n_sub >= 2 and sol.n_sub % 2 == 0):
        e.append("solver.n_sub: must be an even integer >= 2")
    if not (isinstance(sol.padding, _NUMBER) and sol.padding >= 0 and math.isfinite(sol.padding)):
        e.append("solver.padding: must be a nonnegative number")

    if not st.t_list or not all(_finite_pos(t) for t in st.t_list):
        e.append("stats.t_list: must be a nonempty list of positive numbers")
    elif list(st.t_list) != sorted(st.t_list):
        e.append("stats.t_list: must be increasing")
    if not (isinstance(st.replicates, int) and st.replicates >= 1):
        e.append("stats.replicates: must be a positive integer")
    if not (isinstance(st.base_seed, int) and 0 <= st.base_seed < 2**64):
        e.append("stats.base_seed: must be an unsigned 64-bit integer")
    if not (isinstance(st.n_directions, int) and st.n_directions >= 8):
        e.append("stats.n_directions: must be an integer >= 8")
    if not _finite_pos(st.eps):
        e.append("stats.eps: must be positive")
    if not (0 < st.confidence < 1):
        e.append("stats.confidence: must be in (0, 1)")
    if not (isinstance(st.workers, int) and st.workers >= 1):
        e.append("stats.workers: must be a positive integer")
    if not (isinstance(st.required_pass, int) and 0 <= st.required_pass):
        e.append("stats.required_pass: must be a nonnegative integer")
    elif cfg.kind == "shape" and isinstance(st.replicates, int) and st.required_pass > st.replicates:
        e.append("stats.required_pass: cannot exceed stats.replicates")
    if e:
        return e

    # cross-field guards
    lo, hi = window_bounds(cfg)
    half = min(min(-a for a in lo), min(b for b in hi))
    side = min(b - a for a, b in zip(lo, hi))
    uses_field = met.transform in ("paper-diagonal", "conformal") and cfg.kind != "enumerate"
    if uses_field and side <= 2 * cov.range:
        e.append("window: side length must exceed twice covariance.range (field embedding)")
    if met.transform == "hyperbolic-halfplane" and lo[-1] <= 0:
        e.append("window.origin: hyperbolic metric needs the window above the axis")
    if met.transform == "conformal" and not uses_field:
        e.append("metric.transform: conformal metrics need a field")
    if cfg.kind in ("mu", "shape"):
        cap = st.t_list[-1] * (1 + sol.padding)
        if cap > half:
            e.append(f"stats.t_list: largest t ({st.t_list[-1]}) times (1 + solver.padding) = {cap:.4g} "
                     f"exceeds the window half-width {half:.4g} (distance padding rule)")
    if cfg.kind == "shape" and not _finite_pos(st.ball_t):
        e.append("stats.ball_t: must be positive")
    if cfg.kind == "geodesic" and met.transform == "paper-diagonal" and met.interp_order != 3:
        e.append("metric.interp_order: geodesics need cubic interpolation (3) for a C^2 metric")
    if cfg.kind == "distance":
        pairs = cfg.params.get("pairs", [])
        if not isinstance(pairs, list) or not pairs:
            e.append("params.pairs: need a list of [x, y] point pairs")
        else:
            for n, p in enumerate(pairs):
                if not (isinstance(p, list) and len(p) == 2 and _is_point(p[0], d) and _is_point(p[1], d)):
                    e.append(f"params.pairs[{n}]: must be [[x...], [y...]] with {d} coordinates each")
                    continue
                x, y = p
                dist = math.dist(x, y)
                for a in range(d):
                    pad = sol.padding * dist
                    if min(x[a], y[a]) - pad < lo[a] - 1e-9 or max(x[a], y[a]) + pad > hi[a] + 1e-9:
                        e.append(f"params.pairs[{n}]: padded box (padding {sol.padding} * |x - y|) leaves the window")
                        break
    if cfg.kind == "enumerate":
        n = cfg.params.get("n", 6)
        if not (isinstance(n, int) and not isinstance(n, bool) and 1 <= n <= 14):
            e.append("params.n: must be an integer in 1..14")
    if cfg.kind == "lattice-verify":
        for key in ("A", "B"):
            v = cfg.params.get(key, 1.0)
            if not _finite_pos(v):
                e.append(f"params.{key}: must be positive")
    if not isinstance(cfg.checks, list) or not all(isinstance(c, str) for c in cfg.checks):
        e.append("checks: must be a list of check names")
    return e


def validate(cfg_or_raw) -> list[str]:
    """Every violated rule as 'field: message'; never raises."""
    try:
        if isinstance(cfg_or_raw, ExperimentConfig):
            cfg, errors = cfg_or_raw, []
        else:
            cfg, errors = _build(cfg_or_raw)
        return errors + _check_rules(cfg)
    except Exception as exc:  # pragma: no cover - defensive, validation must not crash
        return [f"config: could not be validated ({type(exc).__name__}: {exc})"]


def load_config(path) -> tuple[ExperimentConfig | None, list[str]]:
    """Parse a TOML file; returns (config, errors) and never raises on bad input."""
    try:
        raw = tomllib.loads(Path(path).read_text())
    except (OSError, UnicodeDecodeError, tomllib.TOMLDecodeError) as exc:
        return None, [f"config: cannot read {path} ({exc})"]
    cfg, errors = _build(raw)
    errors += _check_rules(cfg) if not errors else []
    return (cfg if not errors else None), errors


def default_config(kind: str) -> ExperimentConfig:
    """A small valid configuration for each experiment kind."""
    cfg = ExperimentConfig(kind=kind)
    if kind == "field":
        cfg.window = WindowConfig(half_width=10.0, spacing=0.1)
    elif kind == "distance":
        cfg.window = WindowConfig(half_width=20.0, spacing=0.05)
        cfg.metric = MetricConfig("constant", [1.0])
        cfg.solver = SolverConfig(h=0.05)
        cfg.params = {"pairs": [[[0.0, 0.0], [3.0, 4.0]]]}
    elif kind == "mu":
        cfg.window = WindowConfig(half_width=30.0, spacing=0.2)
        cfg.stats = StatsConfig(t_list=[5.0, 10.0, 20.0], replicates=4, ball_t=10.0)
    elif kind == "shape":
        cfg.window = WindowConfig(half_width=30.0, spacing=0.2)
        cfg.stats = StatsConfig(t_list=[5.0, 10.0], replicates=4, ball_t=10.0, eps=0.25,
                                required_pass=3)
    elif kind == "lattice-verify":
        cfg.window = WindowConfig(half_width=8.0, spacing=0.1)
        cfg.params = {"A": 1.0, "B": 1.0, "n_list": [1, 2, 3, 4], "random_sets": 200}
    elif kind == "geodesic":
        cfg.window = WindowConfig(origin=[-3.0, 0.2], extent=[6.0, 2.8], spacing=0.01)
        cfg.metric = MetricConfig("hyperbolic-halfplane", [], 3)
        cfg.solver = SolverConfig(h=0.01)
        cfg.params = {"start": [0.0, 1.0], "angles": [0.0, 0.7853981633974483, 1.5707963267948966],
                      "length": 1.0, "step": 1e-3, "shoot": [[[0.0, 1.0], [1.0, 1.0]]]}
    elif kind == "enumerate":
        cfg.params = {"n": 6}
    return cfg
