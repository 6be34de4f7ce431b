"""Geodesic integration, shooting and escape-ratio probes for smooth metrics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import optimize

from .metricfield import MetricField, segment_length
from .randfield import OutOfWindowError

# central differences of g; small enough that the O(fd^2) error stays below RK4 error
DEFAULT_FD_STEP = 1e-4


class SmoothnessError(ValueError):
    """The metric is not marked as C^2, so geodesics are not well defined."""


class ShootingFailure(RuntimeError):
    pass


def _require_c2(metric: MetricField):
    if not metric.c2:
        raise SmoothnessError("geodesics need a C^2 metric (use cubic interpolation of the fields)")


def _stencil_points(x: np.ndarray, fd: float) -> np.ndarray:
    d = x.size
    pts = np.repeat(x[None, :], 2 * d + 1, axis=0)
    for j in range(d):
        pts[1 + 2 * j, j] += fd
        pts[2 + 2 * j, j] -= fd
    return pts


def _christoffel_from(g: np.ndarray, fd: float) -> np.ndarray:
    """Second-kind symbols from g at x (g[0]) and at x +/- fd e_j."""
    d = g.shape[1]
    # dg[j, l, k] = d_j g_lk
    dg = np.stack([(g[1 + 2 * j] - g[2 + 2 * j]) / (2 * fd) for j in range(d)])
    first = (np.transpose(dg, (1, 0, 2))       # d_j g_lk  -> [l, j, k]
             + np.transpose(dg, (1, 2, 0))     # d_k g_lj  -> [l, j, k]
             - dg)                             # d_l g_jk  -> [l, j, k]
    gamma = 0.5 * np.einsum("il,ljk->ijk", np.linalg.inv(g[0]), first)
    return 0.5 * (gamma + np.transpose(gamma, (0, 2, 1)))


def _check_interior(metric: MetricField, x: np.ndarray, margin: float):
    w = metric.window
    if np.any(x - w.lo <= margin) or np.any(w.hi - x <= margin):
        raise OutOfWindowError("point too close to the window boundary for finite differences")


def christoffel(metric: MetricField, x, fd_step: float = DEFAULT_FD_STEP) -> np.ndarray:
    """Gamma[i, j, k] by central differences of g; symmetric in (j, k)."""
    _require_c2(metric)
    x = np.asarray(x, dtype=float)
    _check_interior(metric, x, fd_step)
    if metric.is_constant:
        return np.zeros((x.size,) * 3)
    g = metric.metric_batch(_stencil_points(x, fd_step), check=False)
    return _christoffel_from(g, fd_step)


@dataclass
class GeodesicCurve:
    t: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    speeds: np.ndarray
    step: float
    truncated: bool = False
    parametrization: str = "riemannian-arclength"

    @property
    def length(self) -> float:
        return float(self.t[-1])

    @property
    def speed_drift(self) -> float:
        return float(np.max(np.abs(self.speeds - 1.0)))

    def escape_ratios(self) -> np.ndarray:
        """|gamma(t) - gamma(0)| / t for t > 0."""
        r = np.linalg.norm(self.points[1:] - self.points[0], axis=1)
        return r / self.t[1:]

    def to_csv(self, path) -> Path:
        path = Path(path)
        d = self.points.shape[1]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + ["x", "y", "z"][:d] + ["speed"])
            for t, p, s in zip(self.t, self.points, self.speeds):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in p] + [repr(float(s))])
        return path


class _Flow:
    """Right-hand side of x' = v, v'^i = -Gamma^i_jk v^j v^k."""

    def __init__(self, metric: MetricField, fd: float):
        self.metric = metric
        self.fd = fd
        w = metric.window
        self.lo = w.lo + fd
        self.hi = w.hi - fd

    def inside(self, x) -> bool:
        return bool(np.all(x > self.lo) and np.all(x < self.hi))

    def accel(self, x, v):
        if self.metric.is_constant:
            return np.zeros_like(v)
        if self.metric.transform.diagonal:
            # diagonal g: a_i = -(2 v_i sum_j d_j g_i v_j - sum_j d_i g_j v_j^2) / (2 g_i)
            g = self.metric.diag_batch(_stencil_points(x, self.fd), check=False)
            dg = (g[1::2] - g[2::2]) / (2 * self.fd)  # dg[j, i] = d_j g_i
            return -(2 * v * (v @ dg) - dg @ (v * v)) / (2 * g[0])
        g = self.metric.metric_batch(_stencil_points(x, self.fd), check=False)
        gam = _christoffel_from(g, self.fd)
        return -np.einsum("ijk,j,k->i", gam, v, v)

    def speed(self, x, v) -> float:
        return float(self.metric.speed_batch(x[None, :], v, check=False)[0])


def integrate_geodesic(metric: MetricField, x0, v0, T: float, step: float = 1e-3,
                       fd_step: float = DEFAULT_FD_STEP) -> GeodesicCurve:
    """Classical RK4 for the geodesic system from x0 with initial direction v0.

    v0 is rescaled to unit Riemannian speed, so t is Riemannian arclength.
    Integration stops early (``truncated``) if a stage would leave the window.
    """
    _require_c2(metric)
    flow = _Flow(metric, fd_step)
    x = np.asarray(x0, dtype=float).copy()
    if not flow.inside(x):
        raise OutOfWindowError("start point outside the window interior")
    v = np.asarray(v0, dtype=float).copy()
    s0 = flow.speed(x, v)
    if s0 == 0:
        raise ValueError("initial velocity must be nonzero")
    v /= s0
    n = max(1, int(math.ceil(T / step - 1e-9)))
    h = T / n
    ts, xs, vs = [0.0], [x.copy()], [v.copy()]
    truncated = False
    for i in range(n):
        k1x, k1v = v, flow.accel(x, v)
        x2 = x + 0.5 * h * k1x
        if not flow.inside(x2):
            truncated = True
            break
        v2 = v + 0.5 * h * k1v
        k2x, k2v = v2, flow.accel(x2, v2)
        x3 = x + 0.5 * h * k2x
        if not flow.inside(x3):
            truncated = True
            break
        v3 = v + 0.5 * h * k2v
        k3x, k3v = v3, flow.accel(x3, v3)
        x4 = x + h * k3x
        if not flow.inside(x4):
            truncated = True
            break
        v4 = v + h * k3v
        k4x, k4v = v4, flow.accel(x4, v4)
        xn = x + h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
        if not flow.inside(xn):
            truncated = True
            break
        v = v + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        x = xn
        ts.append((i + 1) * h)
        xs.append(x.copy())
        vs.append(v.copy())
    pts = np.array(xs)
    vel = np.array(vs)
    speeds = metric.speed_batch(pts, vel, check=False)
    return GeodesicCurve(np.array(ts), pts, vel, speeds, h, truncated)


def _closest_approach(curve: GeodesicCurve, y: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """(t*, gamma(t*), gamma'(t*)) minimizing |gamma(t) - y|, by cubic Hermite refinement."""
    dist = np.linalg.norm(curve.points - y, axis=1)
    i = int(np.argmin(dist))
    h = curve.step

    def herm(tau):
        j = min(max(int(math.floor(tau / h)), 0), len(curve.t) - 2)
        s = tau / h - j
        p0, p1 = curve.points[j], curve.points[j + 1]
        m0, m1 = curve.velocities[j] * h, curve.velocities[j + 1] * h
        h00, h10 = 2 * s**3 - 3 * s**2 + 1, s**3 - 2 * s**2 + s
        h01, h11 = -2 * s**3 + 3 * s**2, s**3 - s**2
        p = h00 * p0 + h10 * m0 + h01 * p1 + h11 * m1
        dp = ((6 * s**2 - 6 * s) * p0 + (3 * s**2 - 4 * s + 1) * m0
              + (-6 * s**2 + 6 * s) * p1 + (3 * s**2 - 2 * s) * m1) / h
        return p, dp

    if len(curve.t) < 2:
        return 0.0, curve.points[0], curve.velocities[0]
    a = curve.t[max(i - 1, 0)]
    b = curve.t[min(i + 1, len(curve.t) - 1)]
    res = optimize.minimize_scalar(lambda tau: float(np.sum((herm(tau)[0] - y) ** 2)),
                                   bounds=(a, b), method="bounded", options={"xatol": 1e-12})
    tau = float(res.x)
    p, dp = herm(tau)
    return tau, p, dp


@dataclass
class ShotResult:
    curve: GeodesicCurve
    length: float
    miss: float
    angle: float
    iterations: int
    lower: float | None = None
    upper: float | None = None


def shoot(metric: MetricField, x, y, tolerance: float = 1e-6, step: float = 1e-3,
          n_sweep: int = 72, max_length: float | None = None, fd_step: float = DEFAULT_FD_STEP,
          max_iter: int = 100, bracket=None, sweep_step: float | None = None) -> ShotResult:
    """Geodesic from x that passes within ``tolerance`` of y (2D).

    Initial angles are swept (with the coarser ``sweep_step``, default
    max(step, 0.01)), then the signed miss (side of the curve on
    which y lies at closest approach) is driven to zero by Brent's method in
    the angle.  The reported length is the arclength at closest approach.
    ``bracket`` (e.g. a DistanceResult error bracket) is attached for
    comparison.  Only locally minimizing geodesics are found.
    """
    _require_c2(metric)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != 2:
        raise ValueError("shooting is implemented for planar metrics")
    if max_length is None:
        max_length = 1.5 * segment_length(metric, x, y, 16) + 10 * step
    sweep_step = max(step, 0.01) if sweep_step is None else sweep_step
    cache = {}

    def fire(theta, h=step):
        if (theta, h) not in cache:
            c = integrate_geodesic(metric, x, (math.cos(theta), math.sin(theta)), max_length, h, fd_step)
            tau, p, dp = _closest_approach(c, y)
            r = y - p
            signed = (dp[0] * r[1] - dp[1] * r[0]) / max(np.linalg.norm(dp), 1e-300)
            cache[theta, h] = (c, tau, float(np.linalg.norm(r)), signed)
        return cache[theta, h]

    base = math.atan2(y[1] - x[1], y[0] - x[0])
    thetas = base + np.linspace(-np.pi, np.pi, n_sweep, endpoint=False)
    vals = [fire(float(th), sweep_step) for th in thetas]
    candidates = []
    for i in range(n_sweep):
        j = (i + 1) % n_sweep
        a, b = vals[i], vals[j]
        # sign change with a small miss on both sides marks a genuine crossing
        if a[3] == 0:
            candidates.append((a[2], float(thetas[i]), None))
        elif a[3] * b[3] < 0 and max(a[2], b[2]) < 0.5 * np.linalg.norm(y - x) + 10 * step:
            hi = float(thetas[j]) if j else float(thetas[j]) + 2 * np.pi
            candidates.append((min(a[2], b[2]), float(thetas[i]), hi))
    candidates.sort()
    best = None
    iters = 0
    for _, lo, hi in candidates:
        if hi is not None and fire(lo)[3] * fire(hi)[3] > 0:
            # the coarse sweep misplaced the sign change; widen by one sweep cell
            cell = 2 * np.pi / n_sweep
            lo, hi = lo - cell, hi + cell
            if fire(lo)[3] * fire(hi)[3] > 0:
                continue
        if hi is None:
            th = lo
        else:
            th, info = optimize.brentq(lambda t: fire(t)[3], lo, hi, xtol=1e-14, maxiter=max_iter,
                                       full_output=True, disp=False)
            iters += info.iterations
        c, tau, miss, _ = fire(th)
        if miss <= tolerance and (best is None or tau < best.length):
            best = ShotResult(_trim(c, tau), tau, miss, th, iters)
    if best is None:
        raise ShootingFailure(f"no initial direction from {x.tolist()} reached {y.tolist()}")
    if bracket is not None:
        best.lower, best.upper = float(bracket[0]), float(bracket[1])
    return best


def _trim(c: GeodesicCurve, tau: float) -> GeodesicCurve:
    keep = c.t <= tau + 1e-12
    return GeodesicCurve(c.t[keep], c.points[keep], c.velocities[keep], c.speeds[keep], c.step, c.truncated)


@dataclass(frozen=True)
class ProbeRow:
    replicate: int
    angle: float
    sup_ratio: float
    final_ratio: float
    bound: float
    violated: bool
    truncated: bool


def completeness_probe(metrics, angles, T: float, step: float = 1e-2, origin=None,
                       fd_step: float = DEFAULT_FD_STEP, refine: int = 4) -> list[ProbeRow]:
    """Escape ratios sup_t |gamma(t)| / t of unit-speed geodesics from ``origin``.

    Each metric's window must have Euclidean radius (about the origin) above
    T / sqrt(lambda_min), so no unit-speed curve can reach the boundary.  A ratio
    above 1 / sqrt(lambda_min) flags a solver error.
    """
    rows = []
    for rep, metric in enumerate(metrics):
        _require_c2(metric)
        o = np.zeros(metric.dim) if origin is None else np.asarray(origin, dtype=float)
        lam = metric.window_lambda_min(refine)
        radius = float(min(np.min(o - metric.window.lo), np.min(metric.window.hi - o)))
        if radius - fd_step <= T / math.sqrt(lam):
            raise OutOfWindowError(f"window radius {radius} does not exceed T/sqrt(lambda) = {T / math.sqrt(lam)}")
        for th in angles:
            c = integrate_geodesic(metric, o, (math.cos(th), math.sin(th)), T, step, fd_step)
            r = c.escape_ratios()
            # the speed bound holds pointwise, so include eigenvalues met along the curve
            lam_curve = min(lam, float(metric.eig_extremes_batch(c.points, check=False)[0].min()))
            bound = 1.0 / math.sqrt(lam_curve)
            sup = float(r.max()) if r.size else 0.0
            rows.append(ProbeRow(rep, float(th), sup, float(r[-1]) if r.size else 0.0, bound,
                                 sup > bound * (1 + 1e-9), c.truncated))
    return rows


def write_probe_csv(path, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replicate", "angle", "sup_ratio", "final_ratio", "bound", "violated"])
        for r in rows:
            w.writerow([r.replicate, repr(r.angle), repr(r.sup_ratio), repr(r.final_ratio),
                        repr(r.bound), int(r.violated)])
    return path
