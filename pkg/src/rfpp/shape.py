"""Time constants mu_v, the limiting shape and the checks run against them.

An ensemble draws independent metric environments; in each one a single
distance field from the origin yields d(0, t v) for every direction and t,
and (optionally) the ball boundary at one level.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import geodist
from .metricfield import MetricField, constant_metric, paper_metric
from .randfield import CovarianceModel, GridSpec, sample_field
from .seeding import replicate_seeds


def directions_2d(n: int, offset: float = 0.0) -> np.ndarray:
    th = offset + 2 * np.pi * np.arange(n) / n
    return np.stack([np.cos(th), np.sin(th)], axis=1)


def directions_3d(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    phi = np.pi * (1 + 5**0.5) * i
    r = np.sqrt(1 - z * z)
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def unit_directions(n: int, dim: int = 2) -> np.ndarray:
    """Evenly spread unit vectors; 2D includes the coordinate axes, 3D appends them."""
    if dim == 2:
        return directions_2d(n)
    return np.concatenate([np.eye(3), directions_3d(n)])


def batch_means_ci(samples, n_batches: int | None = None, confidence: float = 0.95):
    """(mean, half-width) from contiguous batch means with a t interval.

    With fewer than two samples the half-width is 0.
    """
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n < 2:
        return float(x.mean()) if n else math.nan, 0.0
    b = min(n, 10) if n_batches is None else min(n_batches, n)
    means = np.array([c.mean() for c in np.array_split(x, b)])
    se = means.std(ddof=1) / math.sqrt(b)
    return float(x.mean()), float(stats.t.ppf(0.5 + confidence / 2, b - 1) * se)


@dataclass
class MuTable:
    """Direction-wise estimates of the time constant.

    ``samples[r, i, j]`` is d(0, t_i v_j) / t_i in replicate r.
    """

    directions: np.ndarray
    t_list: tuple[float, ...]
    samples: np.ndarray
    seeds: tuple[int, ...] = ()
    confidence: float = 0.95
    n_batches: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.directions = np.atleast_2d(np.asarray(self.directions, dtype=float))
        self.directions /= np.linalg.norm(self.directions, axis=1, keepdims=True)
        self.samples = np.asarray(self.samples, dtype=float)
        self.t_list = tuple(float(t) for t in self.t_list)
        if self.samples.shape[1:] != (len(self.t_list), len(self.directions)):
            raise ValueError("samples must have shape (replicates, len(t_list), n_directions)")
        means = self.samples.mean(axis=0)
        hw = np.zeros_like(means)
        for i in range(means.shape[0]):
            for j in range(means.shape[1]):
                hw[i, j] = batch_means_ci(self.samples[:, i, j], self.n_batches, self.confidence)[1]
        self.trace_mean = means
        self.trace_halfwidth = hw

    @classmethod
    def from_values(cls, directions, mu, halfwidth=0.0, t: float = 1.0) -> "MuTable":
        """Table holding given estimates (one pseudo-replicate); for oracles and injection."""
        mu = np.asarray(mu, dtype=float)
        tab = cls(directions, (t,), mu[None, None, :])
        tab.trace_halfwidth = np.broadcast_to(np.asarray(halfwidth, dtype=float), mu.shape)[None, :].copy()
        return tab

    @property
    def dim(self) -> int:
        return self.directions.shape[1]

    @property
    def replicates(self) -> int:
        return self.samples.shape[0]

    @property
    def t(self) -> float:
        return self.t_list[-1]

    @property
    def mu_hat(self) -> np.ndarray:
        return self.trace_mean[-1]

    @property
    def halfwidth(self) -> np.ndarray:
        return self.trace_halfwidth[-1]

    @property
    def ci_low(self) -> np.ndarray:
        return self.mu_hat - self.halfwidth

    @property
    def ci_high(self) -> np.ndarray:
        return self.mu_hat + self.halfwidth

    @property
    def angles(self) -> np.ndarray:
        return np.arctan2(self.directions[:, 1], self.directions[:, 0])

    def max_angular_gap(self) -> float:
        if self.dim == 2:
            a = np.sort(np.mod(self.angles, 2 * np.pi))
            return float(np.max(np.diff(np.concatenate([a, [a[0] + 2 * np.pi]]))))
        cos = np.clip(self.directions @ self.directions.T, -1, 1)
        np.fill_diagonal(cos, -1)
        return float(np.max(np.arccos(cos.max(axis=1))))

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            head = ["angle"] if self.dim == 2 else ["vx", "vy", "vz"]
            w.writerow(head + ["mu_hat", "ci_lo", "ci_hi", "t", "replicates"])
            for j, v in enumerate(self.directions):
                key = [repr(float(self.angles[j]))] if self.dim == 2 else [repr(float(c)) for c in v]
                w.writerow(key + [repr(float(self.mu_hat[j])), repr(float(self.ci_low[j])),
                                  repr(float(self.ci_high[j])), repr(self.t), self.replicates])
        return path

    def trace_to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "direction", "mean", "halfwidth"])
            for i, t in enumerate(self.t_list):
                for j in range(len(self.directions)):
                    w.writerow([repr(t), j, repr(float(self.trace_mean[i, j])),
                                repr(float(self.trace_halfwidth[i, j]))])
        return path


def _interp_weights(table: MuTable, u: np.ndarray):
    """Interpolation of mu over the unit sphere at unit vectors u (rows)."""
    if table.dim == 2:
        ang = np.mod(table.angles, 2 * np.pi)
        order = np.argsort(ang)
        a = ang[order]
        vals = table.mu_hat[order]
        a_ext = np.concatenate([a, [a[0] + 2 * np.pi]])
        v_ext = np.concatenate([vals, [vals[0]]])
        q = np.mod(np.arctan2(u[:, 1], u[:, 0]), 2 * np.pi)
        q = np.where(q < a[0], q + 2 * np.pi, q)
        return np.interp(q, a_ext, v_ext)
    # inverse-distance weighting over the nearest tabulated directions (exact at knots)
    cos = np.clip(u @ table.directions.T, -1, 1)
    ang = np.arccos(cos)
    k = min(6, ang.shape[1])
    idx = np.argsort(ang, axis=1)[:, :k]
    a = np.take_along_axis(ang, idx, axis=1)
    w = 1.0 / np.maximum(a, 1e-15) ** 2
    vals = table.mu_hat[idx]
    out = (w * vals).sum(axis=1) / w.sum(axis=1)
    exact = a[:, 0] < 1e-12
    out[exact] = vals[exact, 0]
    return out


def mu_norm(x, table: MuTable) -> np.ndarray | float:
    """|x| times the interpolated mu at x/|x|; 0 at the origin."""
    p = np.asarray(x, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    r = np.linalg.norm(p, axis=1)
    out = np.zeros(len(p))
    nz = r > 0
    if np.any(nz):
        out[nz] = r[nz] * _interp_weights(table, p[nz] / r[nz, None])
    return float(out[0]) if single else out


class NonPositiveMuError(ValueError):
    pass


@dataclass
class LimitShape:
    vertices: np.ndarray
    table: MuTable

    def radius(self, direction) -> float:
        u = np.asarray(direction, dtype=float)
        u = u / np.linalg.norm(u)
        return 1.0 / float(_interp_weights(self.table, u[None, :])[0])

    @property
    def radii(self) -> np.ndarray:
        return np.linalg.norm(self.vertices, axis=1)

    @property
    def circularity(self) -> float:
        r = self.radii
        return float(r.max() / r.min())

    def to_csv(self, path) -> Path:
        path = Path(path)
        verts = self.vertices
        if self.table.dim == 2:
            order = np.argsort(np.mod(np.arctan2(verts[:, 1], verts[:, 0]), 2 * np.pi))
            verts = verts[order]
            verts = np.concatenate([verts, verts[:1]])
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "z"][: self.table.dim])
            for v in verts:
                w.writerow([repr(float(c)) for c in v])
        return path


def limit_shape(table: MuTable) -> LimitShape:
    if np.any(table.mu_hat <= 0):
        raise NonPositiveMuError("limit shape needs every mu_hat > 0")
    return LimitShape(table.directions / table.mu_hat[:, None], table)


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    details: dict = field(default_factory=dict)


def positivity_check(table: MuTable, lambda_min: float | None = None, factor: float = 1.0) -> CheckResult:
    """Every lower CI bound positive and mu_hat >= factor * sqrt(lambda_min)."""
    lows = table.ci_low
    ok = bool(np.all(lows > 0))
    details = {"min_ci_low": float(lows.min()), "min_mu_hat": float(table.mu_hat.min())}
    if lambda_min is None:
        lambda_min = table.meta.get("lambda_min")
    if lambda_min is not None:
        floor = factor * math.sqrt(lambda_min)
        details.update(lambda_min=float(lambda_min), floor=floor, factor=factor)
        # relative 1e-12 absorbs rounding when the floor is attained (constant metrics)
        ok = ok and bool(np.all(table.mu_hat >= floor * (1 - 1e-12)))
    return CheckResult("positivity", ok, float(lows.min()), details)


def isotropy_check(table: MuTable, tol: float = 1.05) -> CheckResult:
    """max mu / min mu <= tol, after moving both ends inward by their CI half-widths."""
    mu, hw = table.mu_hat, table.halfwidth
    ratio = float(mu.max() / mu.min())
    lower = float(np.max(mu - hw) / np.min(mu + hw))
    return CheckResult("isotropy", lower <= tol, ratio, {"ratio_ci_lower": lower, "slack": ratio - lower, "tol": tol})


def _slerp_mid(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m = a + b
    return m / np.linalg.norm(m)


def continuity_pairs(table: MuTable) -> list[tuple[int, int]]:
    if table.dim == 2:
        order = np.argsort(np.mod(table.angles, 2 * np.pi))
        return [(int(order[i]), int(order[(i + 1) % len(order)])) for i in range(len(order))]
    cos = table.directions @ table.directions.T
    np.fill_diagonal(cos, -2)
    return sorted({tuple(sorted((i, int(np.argmax(cos[i]))))) for i in range(len(cos))})


def continuity_directions(table: MuTable) -> np.ndarray:
    """Unit vectors (v - v') / |v - v'| for the adjacent pairs of the table."""
    out = []
    for i, j in continuity_pairs(table):
        d = table.directions[i] - table.directions[j]
        out.append(d / np.linalg.norm(d))
    return np.array(out)


def continuity_check(table: MuTable, u_table: MuTable | None = None) -> CheckResult:
    """Worst |mu_v - mu_v'| / (mu_u |v - v'|) over adjacent pairs, u = (v - v')/|v - v'|.

    ``u_table`` holds estimates in the directions of ``continuity_directions``
    (computed on demand by the ensemble); otherwise mu_u is interpolated.
    Passes when the ratio, with CI slack taken against it, is at most 1.
    """
    if len(table.directions) < 8:
        raise ValueError("continuity check needs at least 8 directions")
    pairs = continuity_pairs(table)
    mu, hw = table.mu_hat, table.halfwidth
    worst = worst_lower = 0.0
    us = continuity_directions(table)
    for n, (i, j) in enumerate(pairs):
        gap = float(np.linalg.norm(table.directions[i] - table.directions[j]))
        if u_table is not None:
            k = int(np.argmax(u_table.directions @ us[n]))
            if u_table.directions[k] @ us[n] < 1 - 1e-9:
                # u and -u have the same law; accept the antipodal estimate
                k = int(np.argmax(-(u_table.directions @ us[n])))
            mu_u, hw_u = u_table.mu_hat[k], u_table.halfwidth[k]
        else:
            mu_u, hw_u = float(_interp_weights(table, us[n][None, :])[0]), 0.0
        diff = abs(mu[i] - mu[j])
        worst = max(worst, diff / (mu_u * gap))
        worst_lower = max(worst_lower, max(0.0, diff - hw[i] - hw[j]) / ((mu_u + hw_u) * gap))
    return CheckResult("continuity", worst_lower <= 1.0, worst, {"ratio_ci_lower": worst_lower})


def coordinate_bound_check(table: MuTable) -> CheckResult:
    """mu_v <= sum_i |v^i| mu_{sign(v^i) e_i} + CI slack for every tabulated v."""
    mu, hw = table.mu_hat, table.halfwidth
    d = table.dim
    axis_idx = {}
    for a in range(d):
        for s in (1, -1):
            e = np.zeros(d)
            e[a] = s
            k = int(np.argmax(table.directions @ e))
            if table.directions[k] @ e < 1 - 1e-9:
                raise ValueError("table must contain the coordinate directions")
            axis_idx[a, s] = k
    violations = []
    worst = -math.inf
    for j, v in enumerate(table.directions):
        bound = slack = 0.0
        for a in range(d):
            if abs(v[a]) < 1e-15:
                continue
            k = axis_idx[a, 1 if v[a] > 0 else -1]
            bound += abs(v[a]) * mu[k]
            slack += abs(v[a]) * hw[k]
        excess = mu[j] - bound
        worst = max(worst, excess)
        if excess > slack + hw[j] + 1e-12:
            violations.append(j)
    return CheckResult("coordinate_bound", not violations, worst, {"violations": violations})


def subadditivity_check(table: MuTable) -> CheckResult:
    """E d(0,(m+n)v) <= E d(0,mv) + E d(0,nv) within CI, over t-list triples."""
    ts = table.t_list
    D = table.trace_mean * np.array(ts)[:, None]
    H = table.trace_halfwidth * np.array(ts)[:, None]
    idx = {t: i for i, t in enumerate(ts)}
    checked, bad = 0, []
    for a, ta in enumerate(ts):
        for b in range(a, len(ts)):
            tc = ta + ts[b]
            c = next((idx[t] for t in idx if abs(t - tc) < 1e-9), None)
            if c is None:
                continue
            checked += 1
            excess = D[c] - D[a] - D[b] - (H[c] + H[a] + H[b])
            if np.any(excess > 0):
                bad.append((ta, ts[b]))
    return CheckResult("subadditivity", not bad, float(checked), {"violations": bad})


def uniform_convergence_check(table: MuTable, eps: float) -> CheckResult:
    """Per t the sup over directions of |mean d(0,tv)/t - mu_hat_v|; earliest t below eps."""
    dev = np.max(np.abs(table.trace_mean - table.mu_hat[None, :]), axis=1)
    hits = [t for t, e in zip(table.t_list, dev) if e <= eps]
    first = hits[0] if hits else None
    return CheckResult("uniform_convergence", first is not None, math.nan if first is None else first,
                       {"deviation": dev.tolist(), "eps": eps})


@dataclass
class ContainmentReport:
    eps: float
    t: float
    per_replicate: list  # (passed, min mu_norm, max mu_norm)
    required: int

    @property
    def pass_count(self) -> int:
        return sum(1 for p in self.per_replicate if p[0])

    @property
    def passed(self) -> bool:
        return self.pass_count >= self.required

    @property
    def margin(self) -> float:
        """Largest |mu_norm - 1| seen over all replicates."""
        return max(max(1 - lo, hi - 1) for _, lo, hi in self.per_replicate)


def containment_for_boundary(points, t: float, table: MuTable, eps: float) -> tuple[bool, float, float]:
    m = mu_norm(np.asarray(points) / t, table)
    lo, hi = float(m.min()), float(m.max())
    return (1 - eps <= lo and hi <= 1 + eps), lo, hi


def shape_containment_check(boundaries, t: float, eps: float, table: MuTable,
                            required: int | None = None) -> ContainmentReport:
    """Boundary form of (1-eps)A within B_t/t within (1+eps)A, per replicate ball.

    ``boundaries`` holds one BallBoundary (or point array) per replicate; by
    default every replicate must pass.
    """
    rows = []
    for b in boundaries:
        pts = b.points if isinstance(b, geodist.BallBoundary) else np.asarray(b)
        rows.append(containment_for_boundary(pts, t, table, eps))
    return ContainmentReport(eps, t, rows, len(rows) if required is None else required)


# ---------------------------------------------------------------------------
# ensembles


@dataclass(frozen=True)
class EnsembleSpec:
    """Protocol for a replicate ensemble of independent environments."""

    t_list: tuple[float, ...] = (10.0, 20.0, 30.0, 40.0)
    n_directions: int = 16
    replicates: int = 20
    base_seed: int = 0
    dim: int = 2
    window_half_width: float = 75.0
    field_spacing: float = 0.2
    h: float = 0.2
    stencil: int = 3
    n_sub: int = 8
    covariance: CovarianceModel = CovarianceModel("spherical", 1.0, 1.0)
    transform: str = "paper-diagonal"
    transform_parameters: tuple[float, ...] = ()
    interp_order: int = 1
    ball_t: float | None = 40.0
    continuity_directions: bool = True
    workers: int = 1
    n_batches: int | None = None

    def window(self) -> GridSpec:
        return GridSpec.centered(self.window_half_width, self.field_spacing, self.dim)

    def make_metric(self, seed: int) -> MetricField:
        w = self.window()
        if self.transform == "constant":
            return constant_metric(self.transform_parameters[0] if self.transform_parameters else 1.0, w)
        if self.transform != "paper-diagonal":
            raise ValueError(f"ensembles support paper-diagonal or constant metrics, not {self.transform}")
        fld = sample_field(w, self.covariance, seed)
        scale = self.transform_parameters[0] if self.transform_parameters else 1.0
        return paper_metric(fld, w, self.interp_order, scale)

    def directions(self) -> np.ndarray:
        return unit_directions(self.n_directions, self.dim)


@dataclass
class EnsembleResult:
    spec: EnsembleSpec
    table: MuTable
    u_table: MuTable | None
    balls: list
    lambda_min: list
    seeds: list
    timings: list

    def containment(self, eps: float, required: int | None = None) -> ContainmentReport:
        if self.spec.ball_t is None:
            raise ValueError("ensemble was run without balls")
        return shape_containment_check(self.balls, self.spec.ball_t, eps, self.table, required)


def _run_replicate(spec: EnsembleSpec, seed: int, dirs: np.ndarray, u_dirs: np.ndarray | None):
    t0 = time.perf_counter()
    metric = spec.make_metric(seed)
    box = (metric.window.lo, metric.window.hi)
    t_max = math.inf
    dfield = geodist.distance_field(metric, np.zeros(spec.dim), t_max, spec.h, spec.stencil, box, spec.n_sub)
    ts = np.array(spec.t_list)
    pts = (ts[:, None, None] * dirs[None, :, :]).reshape(-1, spec.dim)
    vals = dfield.value_at(pts).reshape(len(ts), len(dirs)) / ts[:, None]
    uvals = None
    if u_dirs is not None:
        upts = (ts[:, None, None] * u_dirs[None, :, :]).reshape(-1, spec.dim)
        uvals = dfield.value_at(upts).reshape(len(ts), len(u_dirs)) / ts[:, None]
    ball = geodist.ball_from_field(dfield, spec.ball_t) if spec.ball_t is not None else None
    lam = metric.window_lambda_min()
    return vals, uvals, ball, lam, time.perf_counter() - t0


def run_ensemble(spec: EnsembleSpec) -> EnsembleResult:
    """Independent environments, one distance field each; seeds from the base seed."""
    seeds = replicate_seeds(spec.base_seed, spec.replicates)
    dirs = spec.directions()
    u_dirs = None
    if spec.continuity_directions:
        probe = MuTable.from_values(dirs, np.ones(len(dirs)))
        u_dirs = continuity_directions(probe)
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as pool:
            out = list(pool.map(_run_replicate, [spec] * len(seeds), seeds,
                                [dirs] * len(seeds), [u_dirs] * len(seeds)))
    else:
        out = [_run_replicate(spec, s, dirs, u_dirs) for s in seeds]
    samples = np.stack([o[0] for o in out])
    lam = [o[3] for o in out]
    meta = {"lambda_min": float(min(lam)), "h": spec.h, "stencil": spec.stencil}
    table = MuTable(dirs, spec.t_list, samples, tuple(seeds), n_batches=spec.n_batches, meta=meta)
    u_table = None
    if u_dirs is not None:
        u_table = MuTable(u_dirs, spec.t_list, np.stack([o[1] for o in out]), tuple(seeds),
                          n_batches=spec.n_batches, meta=meta)
    return EnsembleResult(spec, table, u_table, [o[2] for o in out], lam, seeds, [o[4] for o in out])


def estimate_mu(direction, t_list, replicates: int, base_seed: int, **spec_kw) -> MuTable:
    """Estimate mu_v in one direction; the table's trace holds every t."""
    v = np.asarray(direction, dtype=float)
    spec = EnsembleSpec(t_list=tuple(t_list), replicates=replicates, base_seed=base_seed,
                        dim=v.size, ball_t=None, continuity_directions=False, **spec_kw)
    seeds = replicate_seeds(base_seed, replicates)
    dirs = (v / np.linalg.norm(v))[None, :]
    samples = np.stack([_run_replicate(spec, s, dirs, None)[0] for s in seeds])
    return MuTable(dirs, spec.t_list, samples, tuple(seeds), n_batches=spec.n_batches)


def single_environment_mu(metric: MetricField, directions, t_list, h: float, stencil: int = 3,
                          n_sub: int = 8) -> MuTable:
    """d(0, tv)/t along growing t in one environment (one replicate, zero-width CI)."""
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    ts = np.array(t_list, dtype=float)
    dfield = geodist.distance_field(metric, np.zeros(metric.dim), math.inf, h, stencil,
                                    (metric.window.lo, metric.window.hi), n_sub)
    pts = (ts[:, None, None] * dirs[None, :, :]).reshape(-1, metric.dim)
    vals = dfield.value_at(pts).reshape(len(ts), len(dirs)) / ts[:, None]
    return MuTable(dirs, tuple(ts), vals[None], meta={"lambda_min": metric.window_lambda_min()})
