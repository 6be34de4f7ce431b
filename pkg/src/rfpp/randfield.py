"""Stationary Gaussian fields with compactly supported covariance.

Fields are sampled exactly on a regular grid by circulant embedding and
evaluated between nodes by multilinear (or cubic spline) interpolation.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import fft, ndimage

COVARIANCE_KINDS = ("spherical", "wendland", "tabulated")

# negative circulant eigenvalues above -CLIP_TOL * max are clipped to zero
CLIP_TOL = 1e-8


class EmbeddingError(RuntimeError):
    """Circulant embedding produced a significantly negative eigenvalue."""


class OutOfWindowError(ValueError):
    pass


@dataclass(frozen=True)
class CovarianceModel:
    """Isotropic covariance c(r) with c(r) = 0 for r >= range.

    ``kind`` is one of ``spherical``, ``wendland`` or ``tabulated``.  For
    ``wendland`` the smoothness index ``k`` (0, 1 or 2) selects the
    polynomial; all three are positive definite up to ``max_dim = 3``.
    ``tabulated`` interpolates ``table`` (pairs of r/range, c/variance)
    linearly.
    """

    kind: str = "spherical"
    variance: float = 1.0
    range: float = 1.0
    k: int = 2
    table: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.kind not in COVARIANCE_KINDS:
            raise ValueError(f"unknown covariance kind {self.kind!r}")
        if not self.variance > 0:
            raise ValueError("variance must be positive")
        if not self.range > 0:
            raise ValueError("range must be positive")
        if self.kind == "wendland" and self.k not in (0, 1, 2):
            raise ValueError("wendland smoothness k must be 0, 1 or 2")
        if self.kind == "tabulated":
            tab = np.asarray(self.table, dtype=float)
            if tab.ndim != 2 or tab.shape[1] != 2 or len(tab) < 2:
                raise ValueError("tabulated covariance needs (r, c) pairs")
            if tab[0, 0] != 0.0 or tab[0, 1] != 1.0:
                raise ValueError("table must start at (0, 1)")
            if np.any(np.diff(tab[:, 0]) <= 0) or np.any(np.diff(tab[:, 1]) > 0):
                raise ValueError("table must be increasing in r and nonincreasing in c")

    @property
    def max_dim(self) -> int:
        return 3

    def correlation(self, r):
        """Normalized covariance c(r)/c(0) as a function of the raw distance."""
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ValueError("distance must be nonnegative")
        s = np.minimum(r / self.range, 1.0)
        if self.kind == "spherical":
            rho = 1.0 - 1.5 * s + 0.5 * s**3
        elif self.kind == "wendland":
            if self.k == 0:
                rho = (1.0 - s) ** 2
            elif self.k == 1:
                rho = (1.0 - s) ** 4 * (4.0 * s + 1.0)
            else:
                rho = (1.0 - s) ** 6 * (35.0 * s**2 + 18.0 * s + 3.0) / 3.0
        else:
            tab = np.asarray(self.table, dtype=float)
            rho = np.interp(s, tab[:, 0], tab[:, 1], right=0.0)
        return np.where(r >= self.range, 0.0, rho)

    def __call__(self, r):
        return self.variance * self.correlation(r)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "variance": self.variance, "range": self.range}
        if self.kind == "wendland":
            out["k"] = self.k
        if self.kind == "tabulated":
            out["table"] = [list(p) for p in self.table]
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "CovarianceModel":
        d = dict(d)
        if "table" in d:
            d["table"] = tuple(tuple(float(v) for v in p) for p in d["table"])
        return cls(**d)


def covariance_eval(model: CovarianceModel, r: float) -> float:
    if r < 0:
        raise ValueError(f"negative distance {r}")
    return float(model(r))


@dataclass(frozen=True)
class GridSpec:
    """Regular grid: nodes at ``origin + spacing * i`` for i = 0..extent/spacing."""

    origin: tuple[float, ...]
    extent: tuple[float, ...]
    spacing: float

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "extent", tuple(float(v) for v in self.extent))
        if len(self.origin) != len(self.extent):
            raise ValueError("origin and extent dimensions differ")
        if self.dim not in (2, 3):
            raise ValueError("grid dimension must be 2 or 3")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        for e in self.extent:
            n = e / self.spacing
            if e <= 0 or abs(n - round(n)) > 1e-9 * max(1.0, n) or round(n) < 1:
                raise ValueError(f"extent {e} is not a positive multiple of spacing {self.spacing}")

    @property
    def dim(self) -> int:
        return len(self.origin)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(round(e / self.spacing)) + 1 for e in self.extent)

    @property
    def lo(self) -> np.ndarray:
        return np.array(self.origin)

    @property
    def hi(self) -> np.ndarray:
        return np.array(self.origin) + np.array(self.extent)

    def axes(self) -> list[np.ndarray]:
        return [o + self.spacing * np.arange(n) for o, n in zip(self.origin, self.shape)]

    def contains(self, points, tol: float = 1e-9) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return np.all((p >= self.lo - tol) & (p <= self.hi + tol), axis=1)

    def to_dict(self) -> dict:
        return {"dimension": self.dim, "origin": list(self.origin),
                "extent": list(self.extent), "spacing": self.spacing}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(tuple(d["origin"]), tuple(d["extent"]), float(d["spacing"]))

    @classmethod
    def centered(cls, half_width: float, spacing: float, dim: int = 2) -> "GridSpec":
        return cls((-half_width,) * dim, (2 * half_width,) * dim, spacing)


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: GridSpec
    values: np.ndarray
    seed: int
    covariance: CovarianceModel
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise ValueError(f"value shape {vals.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @cached_property
    def _spline_coeffs(self) -> np.ndarray:
        return ndimage.spline_filter(self.values, order=3, mode="mirror")

    def grid_coords(self, points) -> np.ndarray:
        """Fractional node coordinates, shape (d, N)."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return ((p - self.grid.lo) / self.grid.spacing).T

    def values_at(self, points, order: int = 1, check: bool = True) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if check and not np.all(self.grid.contains(p)):
            raise OutOfWindowError("point outside field window")
        coords = self.grid_coords(p)
        if order == 1:
            return ndimage.map_coordinates(self.values, coords, order=1, mode="nearest")
        if order == 3:
            return ndimage.map_coordinates(self._spline_coeffs, coords, order=3,
                                           mode="mirror", prefilter=False)
        raise ValueError("interpolation order must be 1 or 3")

    def save(self, path) -> tuple[Path, Path]:
        """Write ``<path>.bin`` (little-endian float64, C order) and ``<path>.json``."""
        path = Path(path)
        bin_path, json_path = path.with_suffix(".bin"), path.with_suffix(".json")
        self.values.astype("<f8").tofile(bin_path)
        header = self.grid.to_dict()
        header.update(seed=int(self.seed), covariance=self.covariance.to_dict(),
                      shape=list(self.grid.shape))
        json_path.write_text(json.dumps(header, indent=2, sort_keys=True))
        return bin_path, json_path

    @classmethod
    def load(cls, path) -> "ScalarField":
        path = Path(path)
        header = json.loads(path.with_suffix(".json").read_text())
        grid = GridSpec.from_dict(header)
        vals = np.fromfile(path.with_suffix(".bin"), dtype="<f8").reshape(grid.shape)
        return cls(grid, vals, int(header["seed"]), CovarianceModel.from_dict(header["covariance"]))

    def to_csv(self, path) -> Path:
        path = Path(path)
        axes = np.meshgrid(*self.grid.axes(), indexing="ij")
        names = ["x", "y", "z"][: self.grid.dim]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names + ["value"])
            for row in zip(*(a.ravel() for a in axes), self.values.ravel()):
                w.writerow([repr(float(v)) for v in row])
        return path


def field_value(fld: ScalarField, x) -> float:
    """Multilinear interpolation of node values at a single point."""
    return float(fld.values_at(np.asarray(x, dtype=float)[None, :], order=1)[0])


def embedding_shape(grid: GridSpec, model: CovarianceModel) -> tuple[int, ...]:
    pad = 2 * int(np.ceil(model.range / grid.spacing))
    return tuple(fft.next_fast_len(n + pad) for n in grid.shape)


def circulant_eigenvalues(grid: GridSpec, model: CovarianceModel, shape=None) -> np.ndarray:
    """Eigenvalues of the periodic (torus) covariance matrix on the embedding grid."""
    shape = embedding_shape(grid, model) if shape is None else shape
    lags = []
    for m in shape:
        i = np.arange(m)
        lags.append(np.minimum(i, m - i) * grid.spacing)
    mesh = np.meshgrid(*lags, indexing="ij", sparse=True)
    r = np.sqrt(sum(g**2 for g in mesh))
    base = model(r)
    return fft.fftn(base).real


def sample_field(grid: GridSpec, model: CovarianceModel, seed: int) -> ScalarField:
    """Exact sample of the stationary field on ``grid`` via circulant embedding.

    The embedding adds at least ``2 * range / spacing`` nodes per axis.  If the
    circulant spectrum has negative eigenvalues, the embedding is enlarged
    (up to three doublings) before giving up.
    """
    if grid.dim > model.max_dim:
        raise ValueError(f"{model.kind} covariance is not valid in dimension {grid.dim}")
    if any(e <= 2 * model.range for e in grid.extent):
        raise ValueError("grid extent per axis must exceed twice the covariance range")
    shape = embedding_shape(grid, model)
    for attempt in range(4):
        eig = circulant_eigenvalues(grid, model, shape)
        top = eig.max()
        low = eig.min()
        if low >= -CLIP_TOL * top:
            break
        shape = tuple(fft.next_fast_len(2 * m) for m in shape)
    else:
        raise EmbeddingError(
            f"circulant embedding failed: min eigenvalue {low:.3e} vs max {top:.3e}")
    clipped = int(np.count_nonzero(eig < 0))
    eig = np.clip(eig, 0.0, None)

    rng = np.random.default_rng(np.uint64(seed))
    total = int(np.prod(shape))
    noise = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    sample = fft.fftn(np.sqrt(eig / total) * noise).real
    values = np.ascontiguousarray(sample[tuple(slice(0, n) for n in grid.shape)])
    meta = {"embedding_shape": list(shape), "clipped_eigenvalues": clipped,
            "min_eigenvalue": float(low), "max_eigenvalue": float(top)}
    return ScalarField(grid, values, int(seed), model, meta)
