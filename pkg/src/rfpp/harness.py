"""Run experiments from a config: build metrics, call the modules, write results.

Each run writes into one output directory: CSV data, ``summary.json`` with
every check, ``config.toml`` and ``manifest.json`` (config hash, seeds, file
inventory with sha256, timings).  Result files never contain timings, so a
re-run from the manifest reproduces them byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, geodesics, geodist, shape, starlattice
from .config import ConfigError, ExperimentConfig, validate, window_bounds
from .metricfield import (MetricField, conformal_metric, constant_metric, hyperbolic_metric,
                          paper_metric, segment_length)
from .randfield import CovarianceModel, GridSpec, sample_field
from .seeding import derive_seed, replicate_seeds


@dataclass
class RunManifest:
    config_hash: str
    version: str
    kind: str
    seeds: dict
    files: list
    timings: dict
    passed: bool
    config: dict = field(default_factory=dict)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True))
        return path

    @classmethod
    def load(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


class _Run:
    """Output directory bookkeeping: files, checks, seeds, timings."""

    def __init__(self, cfg: ExperimentConfig, out_dir: Path):
        self.cfg = cfg
        self.out = out_dir
        self.out.mkdir(parents=True, exist_ok=True)
        self.files: list[Path] = []
        self.checks: dict = {}
        self.values: dict = {}
        self.flags: dict = {}
        self.seeds: dict = {}
        self.timings: dict = {}

    def path(self, name: str) -> Path:
        p = self.out / name
        self.files.append(p)
        return p

    def check(self, name: str, passed: bool, value=None, **details):
        self.checks[name] = {"passed": bool(passed), "value": value, **details}

    def timed(self, name: str):
        run = self

        class _T:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                run.timings[name] = time.perf_counter() - self.t0

        return _T()


def build_window(cfg: ExperimentConfig) -> GridSpec:
    w = cfg.window
    if w.origin:
        return GridSpec(tuple(w.origin), tuple(w.extent), w.spacing)
    return GridSpec.centered(w.half_width, w.spacing, cfg.dim)


def build_covariance(cfg: ExperimentConfig) -> CovarianceModel:
    c = cfg.covariance
    return CovarianceModel(c.kind, c.variance, c.range, c.k)


def build_metric(cfg: ExperimentConfig, seed: int) -> MetricField:
    window = build_window(cfg)
    m = cfg.metric
    if m.transform == "constant":
        return constant_metric(m.parameters[0], window)
    if m.transform == "hyperbolic-halfplane":
        return hyperbolic_metric(window)
    fld = sample_field(window, build_covariance(cfg), seed)
    scale = m.parameters[0] if m.parameters else 1.0
    if m.transform == "conformal":
        return conformal_metric(window, fld, scale, m.interp_order)
    return paper_metric(fld, window, m.interp_order, scale)


def _write_rows(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


# ---------------------------------------------------------------------------
# experiments


def _exp_field(run: _Run):
    cfg = run.cfg
    seed = replicate_seeds(cfg.stats.base_seed, 1)[0]
    run.seeds["field"] = seed
    with run.timed("sample"):
        fld = sample_field(build_window(cfg), build_covariance(cfg), seed)
    b, j = fld.save(run.out / "field")
    run.files += [b, j]
    if cfg.params.get("csv", fld.values.size <= 1_000_000):
        fld.to_csv(run.path("field.csv"))
    run.check("finite_values", bool(np.all(np.isfinite(fld.values))))
    run.values.update(mean=float(fld.values.mean()), variance=float(fld.values.var()),
                      clipped_eigenvalues=fld.meta["clipped_eigenvalues"])


def _exp_distance(run: _Run):
    cfg = run.cfg
    seed = replicate_seeds(cfg.stats.base_seed, 1)[0]
    run.seeds["metric"] = seed
    metric = build_metric(cfg, seed)
    lam = metric.window_lambda_min()
    sol = cfg.solver
    direct = bool(cfg.params.get("direct_edge", True))
    rows, results = [], []
    sandwich_ok = bracket_ok = True
    expected = cfg.params.get("expected")
    rel_tol = float(cfg.params.get("rel_tol", 0.02))
    expected_ok = True
    with run.timed("distances"):
        for n, (x, y) in enumerate(cfg.params["pairs"]):
            r = geodist.distance(metric, x, y, sol.h, sol.stencil, sol.padding, sol.n_sub,
                                 direct_edge=direct, lambda_min=lam)
            results.append(r)
            seg = segment_length(metric, x, y, 2 * sol.n_sub)
            eucl = math.dist(x, y)
            lo, hi = r.error_bracket
            bracket_ok &= lo <= r.value <= hi and lo >= math.sqrt(lam) * eucl * (1 - 1e-12)
            sandwich_ok &= math.sqrt(lam) * eucl <= r.value * (1 + 1e-12)
            if direct:
                sandwich_ok &= r.value <= seg * (1 + 2 * geodist.quadrature_tolerance(sol.n_sub))
            row = [n, r.value, lo, hi, seg, int(r.certified)]
            if cfg.params.get("richardson"):
                r2 = geodist.distance(metric, x, y, sol.h / 2, sol.stencil, sol.padding, sol.n_sub,
                                      direct_edge=direct, lambda_min=lam)
                row.append(geodist.richardson_refine(r.value, r2.value).value)
            if expected is not None:
                expected_ok &= abs(r.value - expected[n]) <= rel_tol * abs(expected[n])
            rows.append(row)
    header = ["pair", "value", "lower", "upper", "segment_length", "certified"]
    if cfg.params.get("richardson"):
        header.append("richardson")
    _write_rows(run.path("distances.csv"), header, rows)
    geodist.write_distance_csv(run.path("distance_results.csv"), results)
    run.check("bracket", bracket_ok)
    run.check("sandwich", sandwich_ok, lambda_min=lam)
    if expected is not None:
        run.check("expected", expected_ok, rel_tol=rel_tol)


def _ensemble_spec(cfg: ExperimentConfig, with_balls: bool) -> shape.EnsembleSpec:
    st, sol, m = cfg.stats, cfg.solver, cfg.metric
    return shape.EnsembleSpec(
        t_list=tuple(st.t_list), n_directions=st.n_directions, replicates=st.replicates,
        base_seed=st.base_seed, dim=cfg.dim, window_half_width=cfg.window.half_width,
        field_spacing=cfg.window.spacing, h=sol.h, stencil=sol.stencil, n_sub=sol.n_sub,
        covariance=build_covariance(cfg), transform=m.transform,
        transform_parameters=tuple(m.parameters), interp_order=m.interp_order,
        ball_t=st.ball_t if with_balls else None, workers=st.workers)


def _mu_checks(run: _Run, res: shape.EnsembleResult):
    st = run.cfg.stats
    tab = res.table
    tab.to_csv(run.path("mu_table.csv"))
    tab.trace_to_csv(run.path("mu_trace.csv"))
    if res.u_table is not None:
        res.u_table.to_csv(run.path("mu_u_table.csv"))
    run.seeds["replicates"] = [int(s) for s in res.seeds]
    for c in (shape.positivity_check(tab, factor=st.positivity_factor),
              shape.isotropy_check(tab, st.isotropy_tol),
              shape.coordinate_bound_check(tab),
              shape.continuity_check(tab, res.u_table),
              shape.subadditivity_check(tab)):
        run.check(c.name, c.passed, _jsonable(c.value), **_jsonable(c.details))
    uc = shape.uniform_convergence_check(tab, 0.05 * float(tab.mu_hat.mean()))
    run.values["uniform_convergence"] = _jsonable({"first_t": uc.value, **uc.details})
    run.values["mu_hat"] = _jsonable(tab.mu_hat)
    if np.all(tab.mu_hat > 0):
        shape.limit_shape(tab).to_csv(run.path("limit_shape.csv"))


def _exp_mu(run: _Run):
    spec = _ensemble_spec(run.cfg, with_balls=False)
    with run.timed("ensemble"):
        res = shape.run_ensemble(spec)
    run.timings["replicates"] = res.timings
    _mu_checks(run, res)


def _exp_shape(run: _Run):
    cfg = run.cfg
    spec = _ensemble_spec(cfg, with_balls=True)
    with run.timed("ensemble"):
        res = shape.run_ensemble(spec)
    run.timings["replicates"] = res.timings
    _mu_checks(run, res)
    for i, b in enumerate(res.balls):
        b.to_csv(run.path(f"ball_{i:03d}.csv"))
    rep = res.containment(cfg.stats.eps, cfg.stats.required_pass)
    _write_rows(run.path("containment.csv"), ["replicate", "passed", "mu_norm_min", "mu_norm_max"],
                [[i, int(p), lo, hi] for i, (p, lo, hi) in enumerate(rep.per_replicate)])
    run.check("containment", rep.passed, rep.pass_count, required=rep.required, eps=rep.eps,
              margin=rep.margin)
    neg_eps = float(cfg.params.get("negative_eps", 1e-3))
    neg = res.containment(neg_eps, cfg.stats.required_pass)
    run.check("negative_control", not neg.passed, neg.pass_count, eps=neg_eps)
    if cfg.dim == 2:
        run.flags["star_fraction"] = [b.star_fraction() for b in res.balls]


def _random_star_set(rng, size: int, d: int) -> set:
    cells = [(0,) * d]
    members = {cells[0]}
    while len(cells) < size:
        base = cells[rng.integers(len(cells))]
        w = starlattice.star_neighbors(base)[rng.integers(3**d - 1)]
        if w not in members:
            members.add(w)
            cells.append(w)
    return members


def _random_polyline(rng, d: int) -> np.ndarray:
    n = int(rng.integers(2, 8))
    return np.cumsum(rng.uniform(-3, 3, size=(n, d)), axis=0)


def proof_construction_checks(n_sets: int, seed: int, d: int = 2, R_values=(1, 2, 3)) -> dict:
    """Violation counts of the R-separation, residue and curve-discretization properties."""
    rng = np.random.default_rng(seed)
    out = {"rsep_separation": 0, "rsep_covering": 0, "rsep_count": 0, "residue": 0, "curve_connected": 0}
    for _ in range(n_sets):
        gamma = _random_star_set(rng, int(rng.integers(1, 40)), d)
        R = int(R_values[rng.integers(len(R_values))])
        sub = list(starlattice.rsep_subset(gamma, R))
        arr = np.array(sub, dtype=float)
        if len(sub) > 1:
            dd = np.linalg.norm(arr[:, None] - arr[None], axis=2)
            np.fill_diagonal(dd, np.inf)
            out["rsep_separation"] += int(dd.min() <= R)
        out["rsep_count"] += int(len(gamma) > len(sub) * (2 * R + 1) ** d)
        cover = all(any(sum((a - b) ** 2 for a, b in zip(z, c)) <= R * R for c in sub) for z in gamma)
        out["rsep_covering"] += int(not cover)
        parts = starlattice.residue_partition(gamma, R)
        union = set().union(*parts)
        disjoint = sum(len(p) for p in parts) == len(union)
        sep = True
        for p in parts:
            pa = np.array(sorted(p), dtype=float)
            if len(pa) > 1:
                dd = np.linalg.norm(pa[:, None] - pa[None], axis=2)
                np.fill_diagonal(dd, np.inf)
                sep &= bool(dd.min() >= R)
        out["residue"] += int(not (disjoint and union == gamma and len(parts) == R**d and sep))
        curve = _random_polyline(rng, d)
        out["curve_connected"] += int(not starlattice.curve_to_sites(curve).connected)
    return out


def _exp_lattice(run: _Run):
    cfg = run.cfg
    seed = replicate_seeds(cfg.stats.base_seed, 1)[0]
    run.seeds["metric"] = seed
    metric = build_metric(cfg, seed)
    p = cfg.params
    with run.timed("site_fields"):
        lam = starlattice.lattice_from_metric(metric, "lambda")
        Lam = starlattice.lattice_from_metric(metric, "Lambda")
    _write_rows(run.path("site_field.csv"), ["site", "lambda_z", "Lambda_z"],
                [[" ".join(map(str, z)), lam[z], Lam[z]] for z in lam.sites()])
    n_list = [int(n) for n in p.get("n_list", [1, 2, 3, 4])]
    mode = p.get("mode", "exact")
    with run.timed("searches"):
        try:
            ps = starlattice.passstep_table(lam, float(p.get("A", 1.0)), n_list, mode=mode)
            ub = starlattice.upbound_table(Lam, float(p.get("B", 1.0)), n_list, mode=mode)
        except starlattice.ResourceGuardError:
            # exact search too large for this budget: greedy growth gives lower bounds
            mode = "greedy"
            ps = starlattice.passstep_table(lam, float(p.get("A", 1.0)), n_list, mode=mode)
            ub = starlattice.upbound_table(Lam, float(p.get("B", 1.0)), n_list, mode=mode)
    run.values["search_mode"] = mode
    ps.to_csv(run.path("passstep.csv"))
    ub.to_csv(run.path("upbound.csv"))
    run.values.update(B_hat=ps.slope, C_hat=ub.slope, dependence_range=lam.R,
                      zero_probability=starlattice.zero_probability(lam.values)[0])
    with run.timed("constructions"):
        v = proof_construction_checks(int(p.get("random_sets", 1000)),
                                      derive_seed(cfg.stats.base_seed, 1, 0), cfg.dim)
    for name, count in v.items():
        run.check(name, count == 0, count)


def _exp_geodesic(run: _Run):
    cfg = run.cfg
    seed = replicate_seeds(cfg.stats.base_seed, 1)[0]
    run.seeds["metric"] = seed
    metric = build_metric(cfg, seed)
    p = cfg.params
    start = np.asarray(p.get("start", [0.0] * cfg.dim), dtype=float)
    step = float(p.get("step", 1e-3))
    length = float(p.get("length", 1.0))
    lam = metric.window_lambda_min(4)
    drift_tol = float(p.get("speed_tol", 1e-6))
    worst_drift, escape_ok = 0.0, True
    with run.timed("integrate"):
        for i, a in enumerate(p.get("angles", [0.0])):
            c = geodesics.integrate_geodesic(metric, start, (math.cos(a), math.sin(a)), length, step)
            c.to_csv(run.path(f"curve_{i:03d}.csv"))
            worst_drift = max(worst_drift, c.speed_drift)
            lam_c = min(lam, float(metric.eig_extremes_batch(c.points, check=False)[0].min()))
            r = c.escape_ratios()
            escape_ok &= bool(r.size == 0 or r.max() <= (1 + 1e-9) / math.sqrt(lam_c))
    run.check("speed_drift", worst_drift < drift_tol, worst_drift, tol=drift_tol)
    run.check("escape_bound", escape_ok)
    shots = p.get("shoot", [])
    if shots:
        rows, ok = [], True
        tol = float(p.get("shoot_tol", 1e-3))
        with run.timed("shoot"):
            for n, (x, y) in enumerate(shots):
                ref = geodist.distance(metric, x, y, cfg.solver.h, cfg.solver.stencil,
                                       cfg.solver.padding, cfg.solver.n_sub, lambda_min=lam)
                try:
                    s = geodesics.shoot(metric, x, y, step=float(p.get("shoot_step", 1e-2)),
                                        bracket=ref.error_bracket)
                    good = ref.error_bracket[0] - tol <= s.length <= ref.value + tol
                    rows.append([n, s.length, s.miss, ref.error_bracket[0], ref.value, int(good)])
                except geodesics.ShootingFailure:
                    good = False
                    rows.append([n, "nan", "nan", ref.error_bracket[0], ref.value, 0])
                ok &= good
        _write_rows(run.path("shots.csv"), ["pair", "length", "miss", "lower", "upper", "consistent"], rows)
        run.check("shoot_consistent", ok, tol=tol)


def _exp_enumerate(run: _Run):
    cfg = run.cfg
    n = int(cfg.params.get("n", 6))
    with run.timed("enumerate"):
        rep = starlattice.enumerate_connected_sets(n, cfg.dim)
    rep.to_csv(run.path("enumeration.csv"))
    naive_max = int(cfg.params.get("naive_max", 7 if cfg.dim == 2 else 5))
    m = min(n, naive_max)
    with run.timed("naive"):
        naive = starlattice.count_connected_sets_naive(m, cfg.dim)
    run.check("naive_match", naive == rep.counts[:m], list(naive), compared_up_to=m)
    run.check("sigma_bound", rep.sigma_bound_holds, rep.sigma_hat)
    bad = [(a, b) for a, b, _, _, ok in rep.fekete_pairs("S") if not ok]
    run.check("fekete_subadditive", not bad, len(bad), violations=bad)
    run.values["animals_superadditive"] = rep.animals_superadditive


EXPERIMENTS = {"field": _exp_field, "distance": _exp_distance, "mu": _exp_mu, "shape": _exp_shape,
               "lattice-verify": _exp_lattice, "geodesic": _exp_geodesic, "enumerate": _exp_enumerate}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run(cfg: ExperimentConfig, out_dir=None) -> RunManifest:
    """Execute the configured experiment; raises ConfigError listing every invalid field."""
    errors = validate(cfg)
    if errors:
        raise ConfigError(errors)
    out = Path(cfg.output_dir if out_dir is None else out_dir)
    r = _Run(cfg, out)
    t0 = time.perf_counter()
    EXPERIMENTS[cfg.kind](r)
    r.timings["total"] = time.perf_counter() - t0
    selected = cfg.checks or sorted(r.checks)
    unknown = [c for c in selected if c not in r.checks]
    if unknown:
        raise ConfigError([f"checks: unknown check {c!r} for {cfg.kind}" for c in unknown])
    passed = all(r.checks[c]["passed"] for c in selected)
    summary = {"kind": cfg.kind, "passed": passed, "selected_checks": selected,
               "checks": r.checks, "values": r.values, "flags": r.flags}
    r.path("summary.json").write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True))
    cfg.save(r.path("config.toml"))
    files = [{"path": p.name, "sha256": _sha256(p), "bytes": p.stat().st_size} for p in r.files]
    manifest = RunManifest(cfg.digest(), __version__, cfg.kind, _jsonable(r.seeds), files,
                           _jsonable(r.timings), passed, cfg.to_dict())
    manifest.save(out / "manifest.json")
    return manifest


def rerun(manifest_path, out_dir) -> RunManifest:
    """Re-execute the configuration stored in a manifest into ``out_dir``."""
    m = RunManifest.load(manifest_path)
    cfg = ExperimentConfig.from_dict(m.config)
    return run(cfg, out_dir)


def compare_manifests(a: RunManifest, b: RunManifest) -> list[str]:
    """Names of result files whose content differs (timings are not compared)."""
    ha = {f["path"]: f["sha256"] for f in a.files}
    hb = {f["path"]: f["sha256"] for f in b.files}
    return sorted(k for k in set(ha) | set(hb) if ha.get(k) != hb.get(k))


def bounds_for(cfg: ExperimentConfig):
    return window_bounds(cfg)
