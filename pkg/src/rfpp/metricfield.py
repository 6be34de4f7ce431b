"""Riemannian metrics built from scalar fields, lengths and eigenvalue extremes."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .randfield import GridSpec, OutOfWindowError, ScalarField

# Simpson sub-intervals per smooth piece; 2 leaves relative errors near 1e-4 on
# short pieces of multilinear fields
MIN_PIECE = 4

TRANSFORM_KINDS = ("paper-diagonal", "constant", "conformal", "hyperbolic-halfplane", "user")


@dataclass(frozen=True)
class MetricTransform:
    """Map from scalar field values (or position) to an SPD matrix.

    kinds
      paper-diagonal        g_ii = s * log(1 + exp(xi_i)) with s = parameters[0] (default 1);
                            one source field is shared by all diagonal entries, d fields
                            give one per entry
      constant              g = parameters[0] * I
      conformal             g = exp(2 * parameters[0] * phi) * I, phi from the field
                            or from ``func(points)``
      hyperbolic-halfplane  g = I / y**2 with y the last coordinate
      user                  ``func(points) -> (N, d, d)`` SPD matrices
    """

    kind: str
    parameters: tuple[float, ...] = ()
    func: Callable | None = None
    smooth: bool = False

    def __post_init__(self):
        if self.kind not in TRANSFORM_KINDS:
            raise ValueError(f"unknown transform kind {self.kind!r}")
        object.__setattr__(self, "parameters", tuple(float(p) for p in self.parameters))
        if self.kind == "constant" and not (self.parameters and self.parameters[0] > 0):
            raise ValueError("constant transform needs a positive value")
        if self.kind == "paper-diagonal" and self.parameters and not self.parameters[0] > 0:
            raise ValueError("paper-diagonal scale must be positive")
        if self.kind == "user" and self.func is None:
            raise ValueError("user transform needs func")

    @property
    def diagonal(self) -> bool:
        return self.kind != "user"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "parameters": list(self.parameters)}


@dataclass(frozen=True, eq=False)
class MetricField:
    """Random (or oracle) Riemannian metric on a rectangular window.

    ``interp_order`` selects multilinear (1) or cubic spline (3) interpolation
    of the source fields; the transform is applied after interpolation so the
    metric stays SPD.
    """

    transform: MetricTransform
    window: GridSpec
    fields: tuple[ScalarField, ...] = ()
    interp_order: int = 1
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(self.fields))
        kind = self.transform.kind
        if kind == "paper-diagonal" and len(self.fields) not in (1, self.dim):
            raise ValueError("paper-diagonal needs one field or one field per axis")
        if kind == "conformal" and not self.fields and self.transform.func is None:
            raise ValueError("conformal needs a field or func")
        if self.interp_order not in (1, 3):
            raise ValueError("interp_order must be 1 or 3")
        for f in self.fields:
            if f.grid.dim != self.dim:
                raise ValueError("field dimension mismatch")
            if not (np.all(f.grid.lo <= self.window.lo + 1e-9) and np.all(f.grid.hi >= self.window.hi - 1e-9)):
                raise ValueError("field grid does not cover the metric window")

    @property
    def dim(self) -> int:
        return self.window.dim

    @property
    def is_constant(self) -> bool:
        return self.transform.kind == "constant"

    @property
    def c2(self) -> bool:
        """True when the metric is at least C^2 in the interior of the window."""
        kind = self.transform.kind
        if kind in ("constant", "hyperbolic-halfplane"):
            return True
        if kind == "user":
            return self.transform.smooth
        if self.fields:
            return self.interp_order == 3
        return True

    @property
    def field_lattice(self) -> tuple[np.ndarray, float] | None:
        """(origin, spacing) of the source-field nodes, where the metric has kinks."""
        if not self.fields or self.interp_order != 1:
            return None
        g = self.fields[0].grid
        return g.lo, g.spacing

    def _check(self, p: np.ndarray):
        if not np.all(self.window.contains(p)):
            raise OutOfWindowError("point outside metric window")

    def diag_batch(self, points, check: bool = True) -> np.ndarray:
        """Diagonal entries of g at each point, shape (N, d)."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if check:
            self._check(p)
        n, d = p.shape
        kind = self.transform.kind
        if kind == "constant":
            return np.full((n, d), self.transform.parameters[0])
        if kind == "hyperbolic-halfplane":
            y = p[:, -1]
            if np.any(y <= 0):
                raise OutOfWindowError("hyperbolic metric requires positive last coordinate")
            return np.repeat((1.0 / y**2)[:, None], d, axis=1)
        if kind == "paper-diagonal":
            xi = [f.values_at(p, self.interp_order, check=False) for f in self.fields]
            g = np.logaddexp(0.0, np.stack(xi, axis=1))
            if self.transform.parameters:
                g = self.transform.parameters[0] * g
            return g if g.shape[1] == d else np.repeat(g, d, axis=1)
        if kind == "conformal":
            scale = self.transform.parameters[0] if self.transform.parameters else 1.0
            if self.fields:
                phi = self.fields[0].values_at(p, self.interp_order, check=False)
            else:
                phi = np.asarray(self.transform.func(p), dtype=float)
            return np.repeat(np.exp(2.0 * scale * phi)[:, None], d, axis=1)
        raise TypeError("user transform is not diagonal")

    def metric_batch(self, points, check: bool = True) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if self.transform.diagonal:
            diag = self.diag_batch(p, check)
            out = np.zeros(diag.shape + (diag.shape[1],))
            idx = np.arange(diag.shape[1])
            out[:, idx, idx] = diag
            return out
        if check:
            self._check(p)
        g = np.asarray(self.transform.func(p), dtype=float)
        return 0.5 * (g + np.swapaxes(g, 1, 2))

    def speed_batch(self, points, vectors, check: bool = True) -> np.ndarray:
        """sqrt(v^T g(x) v) for rows of points / vectors (vectors may broadcast)."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        v = np.broadcast_to(np.asarray(vectors, dtype=float), p.shape)
        if self.transform.diagonal:
            q = np.einsum("ni,ni->n", self.diag_batch(p, check), v * v)
        else:
            q = np.einsum("ni,nij,nj->n", v, self.metric_batch(p, check), v)
        return np.sqrt(np.maximum(q, 0.0))

    def eig_extremes_batch(self, points, check: bool = True) -> tuple[np.ndarray, np.ndarray]:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if self.transform.diagonal:
            diag = self.diag_batch(p, check)
            return diag.min(axis=1), diag.max(axis=1)
        ev = np.linalg.eigvalsh(self.metric_batch(p, check))
        return ev[:, 0], ev[:, -1]

    def window_lambda_min(self, refine: int = 1) -> float:
        """Smallest eigenvalue over window nodes (refined ``refine`` times per axis).

        For multilinear interpolation of a monotone transform the minimum over
        the window is attained at field nodes, so refine=1 is exact there.
        """
        return float(self._window_extreme(refine)[0])

    def window_lambda_max(self, refine: int = 1) -> float:
        return float(self._window_extreme(refine)[1])

    def _window_extreme(self, refine: int):
        if self.is_constant:
            v = self.transform.parameters[0]
            return v, v
        w = self.window
        step = w.spacing / refine
        axes = [np.linspace(lo, hi, int(round((hi - lo) / step)) + 1) for lo, hi in zip(w.lo, w.hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        lo_vals, hi_vals = [], []
        for chunk in np.array_split(pts, max(1, len(pts) // 200_000)):
            a, b = self.eig_extremes_batch(chunk)
            lo_vals.append(a.min())
            hi_vals.append(b.max())
        return min(lo_vals), max(hi_vals)


def constant_metric(value: float, window: GridSpec) -> MetricField:
    """g = value * I on ``window``."""
    return MetricField(MetricTransform("constant", (value,)), window)


def hyperbolic_metric(window: GridSpec) -> MetricField:
    if window.lo[-1] <= 0:
        raise ValueError("hyperbolic window must lie in the upper half-space")
    return MetricField(MetricTransform("hyperbolic-halfplane"), window)


def paper_metric(fields: Sequence[ScalarField] | ScalarField, window: GridSpec | None = None,
                 interp_order: int = 1, scale: float = 1.0) -> MetricField:
    fields = (fields,) if isinstance(fields, ScalarField) else tuple(fields)
    window = fields[0].grid if window is None else window
    params = () if scale == 1.0 else (scale,)
    return MetricField(MetricTransform("paper-diagonal", params), window, fields, interp_order)


def conformal_metric(window: GridSpec, phi: Callable | ScalarField, scale: float = 1.0,
                     interp_order: int = 3) -> MetricField:
    if isinstance(phi, ScalarField):
        return MetricField(MetricTransform("conformal", (scale,)), window, (phi,), interp_order)
    return MetricField(MetricTransform("conformal", (scale,), func=phi), window)


def metric_at(metric: MetricField, x) -> np.ndarray:
    return metric.metric_batch(np.asarray(x, dtype=float)[None, :])[0]


def riemannian_speed(metric: MetricField, x, v) -> float:
    return float(metric.speed_batch(np.asarray(x, dtype=float)[None, :], np.asarray(v, dtype=float))[0])


def simpson_rule(breaks: Sequence[float], n_sub: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Composite Simpson nodes/weights on [0, 1] split at ``breaks``.

    Each piece between consecutive breakpoints gets an even number of
    sub-intervals, at least 2, roughly proportional to its length so the total
    is about ``n_sub``.  Weights sum to 1.
    """
    cuts = np.unique(np.concatenate([[0.0], np.asarray(breaks, dtype=float), [1.0]]))
    cuts = cuts[(cuts >= 0) & (cuts <= 1)]
    nodes, weights = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b - a <= 1e-14:
            continue
        m = max(MIN_PIECE, 2 * math.ceil((b - a) * n_sub / 2))
        s = np.linspace(a, b, m + 1)
        w = np.ones(m + 1)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        nodes.append(s)
        weights.append(w * (b - a) / (3 * m))
    s = np.concatenate(nodes)
    w = np.concatenate(weights)
    # merge duplicated piece endpoints
    key = np.round(s, 14)
    uniq, inv = np.unique(key, return_inverse=True)
    wsum = np.zeros(len(uniq))
    np.add.at(wsum, inv, w)
    return uniq, wsum


def lattice_breaks(start, delta, lattice) -> np.ndarray:
    """Parameters s in (0, 1) where start + s * delta crosses a lattice hyperplane."""
    if lattice is None:
        return np.empty(0)
    origin, spacing = lattice
    u0 = (np.asarray(start, dtype=float) - origin) / spacing
    du = np.asarray(delta, dtype=float) / spacing
    out = []
    for a in range(len(u0)):
        if abs(du[a]) < 1e-15:
            continue
        lo, hi = sorted((u0[a], u0[a] + du[a]))
        ks = np.arange(math.floor(lo) + 1, math.ceil(hi))
        out.append((ks - u0[a]) / du[a])
    if not out:
        return np.empty(0)
    s = np.concatenate(out)
    return s[(s > 1e-12) & (s < 1 - 1e-12)]


def segment_length(metric: MetricField, a, b, n_sub: int = 8) -> float:
    a = np.asarray(a, dtype=float)
    delta = np.asarray(b, dtype=float) - a
    if not np.any(delta):
        return 0.0
    if metric.is_constant:
        return float(math.sqrt(metric.transform.parameters[0]) * np.linalg.norm(delta))
    s, w = simpson_rule(lattice_breaks(a, delta, metric.field_lattice), n_sub)
    pts = a + s[:, None] * delta
    return float(np.dot(w, metric.speed_batch(pts, delta)))


def curve_length(metric: MetricField, curve, n_sub: int = 8) -> tuple[float, float]:
    """Riemannian and Euclidean length of a polyline (rows are vertices).

    Each segment is integrated with composite Simpson, split where the segment
    crosses source-field cell faces so the integrand is smooth on every piece.
    """
    pts = np.atleast_2d(np.asarray(curve, dtype=float))
    if not np.all(metric.window.contains(pts)):
        raise OutOfWindowError("curve leaves the metric window")
    R = sum(segment_length(metric, a, b, n_sub) for a, b in zip(pts[:-1], pts[1:]))
    L = float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))
    return R, L


@dataclass(frozen=True)
class CubeExtremes:
    site: tuple[int, ...]
    lambda_z: float
    Lambda_z: float
    samples_per_axis: int


def _cube_points(z, n: int) -> np.ndarray:
    # left-closed sub-grid z - 1/2 + i/n, nested for n | m
    offs = -0.5 + np.arange(n) / n
    mesh = np.meshgrid(*[zi + offs for zi in z], indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def cube_extremes(metric: MetricField, z, samples_per_axis: int = 16) -> CubeExtremes:
    z = tuple(int(v) for v in z)
    if len(z) != metric.dim:
        raise ValueError("site dimension mismatch")
    lo = np.array(z) - 0.5
    if not (np.all(metric.window.contains(lo[None, :])) and np.all(metric.window.contains((lo + 1)[None, :]))):
        raise OutOfWindowError(f"cube at {z} not inside the metric window")
    a, b = metric.eig_extremes_batch(_cube_points(z, samples_per_axis))
    return CubeExtremes(z, float(a.min()), float(b.max()), samples_per_axis)


def cube_extremes_grid(metric: MetricField, lo_site, hi_site, samples_per_axis: int = 16):
    """Vectorized cube extremes for all sites in the box lo_site..hi_site (inclusive).

    Returns (lambda, Lambda) arrays of shape hi - lo + 1.
    """
    lo_site = np.asarray(lo_site, dtype=int)
    hi_site = np.asarray(hi_site, dtype=int)
    n = samples_per_axis
    lo_pt, hi_pt = lo_site - 0.5, hi_site + 0.5
    if not (np.all(metric.window.contains(lo_pt[None, :])) and np.all(metric.window.contains(hi_pt[None, :]))):
        raise OutOfWindowError("site box not inside the metric window")
    counts = hi_site - lo_site + 1
    axes = [lo_pt[a] + np.arange(counts[a] * n) / n for a in range(metric.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    a, b = metric.eig_extremes_batch(pts)
    shape = []
    for c in counts:
        shape += [int(c), n]
    a = a.reshape(shape)
    b = b.reshape(shape)
    red = tuple(range(1, 2 * metric.dim, 2))
    return a.min(axis=red), b.max(axis=red)


def write_cube_extremes_csv(path, extremes: Sequence[CubeExtremes]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["z", "lambda_z", "Lambda_z"])
        for e in extremes:
            w.writerow([" ".join(str(c) for c in e.site), repr(e.lambda_z), repr(e.Lambda_z)])
    return path


@dataclass(frozen=True)
class MgfEstimate:
    value: float
    ci_low: float
    ci_high: float
    n: int


def mgf_estimate(Lambda_samples, r: float, confidence: float = 0.95, n_resamples: int = 2000,
                 seed: int = 0) -> MgfEstimate:
    """Sample mean of exp(r * Lambda) with a percentile bootstrap interval."""
    x = np.asarray(Lambda_samples, dtype=float)
    if x.size == 0:
        raise ValueError("no samples")
    vals = np.exp(r * x)
    mean = float(vals.mean())
    if np.all(vals == vals[0]):
        v0 = float(vals[0])  # exact, the running mean can be off by an ulp
        return MgfEstimate(v0, v0, v0, x.size)
    res = stats.bootstrap((vals,), np.mean, confidence_level=confidence, n_resamples=n_resamples,
                          method="percentile", random_state=np.random.default_rng(seed))
    return MgfEstimate(mean, float(res.confidence_interval.low), float(res.confidence_interval.high), x.size)


@dataclass(frozen=True)
class TailCheck:
    u: float
    empirical: float
    bound: float
    std_error: float
    passed: bool


def tail_check(Lambda_samples, u: float) -> TailCheck:
    """Compare P(Lambda_0 > u) with 2 exp(-u^2/2), allowing 3 binomial standard errors."""
    x = np.asarray(Lambda_samples, dtype=float)
    if x.size == 0:
        raise ValueError("no samples")
    p = float(np.mean(x > u))
    se = math.sqrt(max(p * (1 - p), 1.0 / x.size) / x.size)
    bound = 2.0 * math.exp(-u * u / 2.0)
    return TailCheck(u, p, bound, se, p <= bound + 3 * se)
