"""One test per acceptance criterion, each registering a single PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from rfpp import geodesics as Q
from rfpp import geodist as G
from rfpp import shape as S
from rfpp import starlattice as L
from rfpp.config import EXPERIMENT_KINDS, default_config
from rfpp.harness import compare_manifests, proof_construction_checks, rerun, run
from rfpp.metricfield import conformal_metric, constant_metric, hyperbolic_metric, paper_metric, segment_length
from rfpp.randfield import CovarianceModel, GridSpec, sample_field


def record(n: int, name: str, ok: bool, detail: str):
    line = f"[{'PASS' if ok else 'FAIL'}] {n:2d} {name}: {detail}"
    ACCEPTANCE[n] = line
    print(line)
    assert ok, line


def _pairs_in_window(rng, half, n, padding=0.5, min_dist=1.0):
    out = []
    while len(out) < n:
        x, y = rng.uniform(-half, half, size=(2, 2))
        d = math.dist(x, y)
        if d >= min_dist and np.all(np.minimum(x, y) - padding * d >= -half) \
                and np.all(np.maximum(x, y) + padding * d <= half):
            out.append((x, y))
    return out


def test_euclidean_oracle():
    # pure stencil graph: with the direct x-y edge the ratio would be identically 1
    t0 = time.perf_counter()
    m = constant_metric(1.0, GridSpec.centered(20.0, 0.05))
    eta = G.stencil_factor(3, 2)
    ratios, refined = [], []
    for x, y in _pairs_in_window(np.random.default_rng(1), 20.0, 20):
        d = math.dist(x, y)
        a = G.distance(m, x, y, 0.05, 3, direct_edge=False).value
        b = G.distance(m, x, y, 0.025, 3, direct_edge=False).value
        ratios.append(a / d)
        refined.append(G.richardson_refine(a, b).value / d)
    ratios, refined = np.array(ratios), np.array(refined)
    elapsed = time.perf_counter() - t0
    in_bracket = bool(np.all(ratios >= 1 - 1e-12) and np.all(ratios <= eta + 1e-12))
    close = np.abs(refined - 1) <= 0.005
    ok = in_bracket and bool(close.all()) and elapsed <= 60
    record(1, "Euclidean oracle", ok,
           f"ratios in [1, eta={eta:.6f}]: {in_bracket}; Richardson within 0.5%: {close.sum()}/20 "
           f"(worst {np.abs(refined - 1).max():.4%}); {elapsed:.1f}s")


def test_hyperbolic_oracle():
    t0 = time.perf_counter()
    m = hyperbolic_metric(GridSpec((-3.0, 0.1), (6.0, 3.9), 0.01))
    dxs = np.linspace(0.1, 1.0, 10)
    d_err, s_err, arc_err = [], [], []
    for dx in dxs:
        x, y = np.array([-dx / 2, 1.0]), np.array([dx / 2, 1.0])
        exact = math.acosh(1 + dx * dx / 2)
        d_err.append(abs(G.distance(m, x, y, 0.01).value / exact - 1))
        shot = Q.shoot(m, x, y)
        s_err.append(abs(shot.length / exact - 1))
        # geodesic through (+-dx/2, 1) is the semicircle centered at the origin
        arc_err.append(np.abs(np.linalg.norm(shot.curve.points, axis=1) - math.hypot(dx / 2, 1)).max())
    elapsed = time.perf_counter() - t0
    ok = max(d_err) <= 0.02 and max(s_err) <= 0.002 and max(arc_err) <= 1e-3 and elapsed <= 120
    record(2, "Hyperbolic oracle", ok,
           f"graph worst {max(d_err):.3%} (<=2%), shoot worst {max(s_err):.2e} (<=0.2%), "
           f"semicircle worst {max(arc_err):.2e} (<=1e-3); {elapsed:.1f}s")


def test_sandwich_and_triangle():
    cov = CovarianceModel("spherical", 1.0, 1.0)
    w = GridSpec.centered(5.0, 0.1)
    qtol = G.quadrature_tolerance(8)
    rng = np.random.default_rng(11)
    sandwich_bad = triangle_bad = 0
    worst = -math.inf
    for rep in range(10):
        m = paper_metric(sample_field(w, cov, 500 + rep))
        lam = m.window_lambda_min()
        for _ in range(100):
            p = rng.uniform(-2.0, 2.0, size=(3, 2))
            d = {}
            for i, j in ((0, 1), (1, 2), (0, 2)):
                v = G.distance(m, p[i], p[j], 0.1, lambda_min=lam).value
                d[i, j] = v
                lower = math.sqrt(lam) * np.linalg.norm(p[i] - p[j])
                upper = segment_length(m, p[i], p[j], 16)
                sandwich_bad += not (lower <= v * (1 + 1e-12) and v <= upper * (1 + 2 * qtol))
            excess = d[0, 2] - (d[0, 1] + d[1, 2]) * (1 + 2 * qtol)
            worst = max(worst, excess)
            triangle_bad += excess > 0
    ok = sandwich_bad == 0 and triangle_bad == 0
    record(3, "Metric sandwich and triangle inequality", ok,
           f"{sandwich_bad} sandwich / {triangle_bad} triangle violations over 3000 pairs, 1000 triples "
           f"(worst triangle excess {worst:.2e})")


def test_enumeration_oracle():
    t0 = time.perf_counter()
    rep = L.enumerate_connected_sets(6, 2)
    naive = L.count_connected_sets_naive(6, 2)
    match = tuple(rep.counts) == tuple(naive)
    bad = [(a, b) for a, b, _, _, ok in rep.fekete_pairs("S") if not ok]
    sigma = max(s ** (1 / k) for k, s in enumerate(rep.counts, 1))
    sigma_ok = all(s <= sigma**k * (1 + 1e-12) for k, s in enumerate(rep.counts, 1))
    elapsed = time.perf_counter() - t0
    ok = match and not bad and sigma_ok and elapsed <= 300
    record(4, "Enumeration oracle", ok,
           f"S_1..S_6={list(rep.counts)} naive match: {match}; Fekete log-subadditivity violations: "
           f"{len(bad)} (first {bad[:3]}); S_n <= {sigma:.4f}^n: {sigma_ok}; {elapsed:.1f}s")


def test_proof_constructions():
    counts = proof_construction_checks(1000, 20240)
    ok = sum(counts.values()) == 0
    record(5, "Proof-construction properties", ok, f"violations {counts} over 10^3 sets and polylines")


@pytest.fixture(scope="module")
def ensemble():
    t0 = time.perf_counter()
    res = S.run_ensemble(S.EnsembleSpec())  # spherical range 1, 16 directions, t up to 40, 20 replicates
    return res, time.perf_counter() - t0


def test_positivity(ensemble):
    res, elapsed = ensemble
    tab = res.table
    lam = min(res.lambda_min)
    chk = S.positivity_check(tab, lambda_min=lam, factor=0.9)
    ok = chk.passed and elapsed <= 1800
    record(6, "Positivity", ok,
           f"min CI low {tab.ci_low.min():.4f}, min mu {tab.mu_hat.min():.4f} vs 0.9*sqrt(lambda_min)="
           f"{0.9 * math.sqrt(lam):.4f}; ensemble {elapsed:.0f}s")


def test_isotropy(ensemble):
    tab = ensemble[0].table
    chk = S.isotropy_check(tab, 1.05)
    record(7, "Isotropy", chk.passed,
           f"max/min mu {chk.value:.4f}, CI-adjusted {chk.details['ratio_ci_lower']:.4f} (<=1.05)")


def test_shape_containment(ensemble):
    res = ensemble[0]
    rep = res.containment(0.1, required=18)
    bracket = res.spec.h / res.spec.ball_t
    neg = res.containment(bracket / 2, required=18)
    ok = rep.passed and not neg.passed
    record(8, "Shape containment", ok,
           f"eps=0.1 passes {rep.pass_count}/20 (need 18, worst |mu_norm-1| {rep.margin:.4f}); "
           f"negative control eps={bracket / 2:.4f} passes {neg.pass_count}/20")


def test_coordinate_bound(ensemble):
    chk = S.coordinate_bound_check(ensemble[0].table)
    record(9, "Coordinate bound", chk.passed,
           f"{len(chk.details['violations'])} violations over 16 directions (worst excess {chk.value:.2e})")


def _hyperbolic_gamma(y):
    g = np.zeros((2, 2, 2))
    g[0, 0, 1] = g[0, 1, 0] = -1 / y
    g[1, 0, 0] = 1 / y
    g[1, 1, 1] = -1 / y
    return g


def test_geodesic_integrity():
    hyp = hyperbolic_metric(GridSpec((-3.0, 0.1), (6.0, 3.9), 0.01))
    w = GridSpec.centered(4.0, 0.05)
    smooth = [(hyp, (0.0, 1.0)),
              (conformal_metric(w, lambda p: 0.3 * np.sin(p[:, 0]) * np.cos(p[:, 1])), (0.0, 0.0))]
    wend = CovarianceModel("wendland", 1.0, 1.0, k=2)
    smooth += [(paper_metric(sample_field(w, wend, s), interp_order=3), (0.0, 0.0)) for s in range(3)]
    drift, escape_bad = 0.0, 0
    for m, x0 in smooth:
        bound = 1 / math.sqrt(m.window_lambda_min())
        for th in np.linspace(0, 2 * np.pi, 8, endpoint=False):
            c = Q.integrate_geodesic(m, x0, (math.cos(th), math.sin(th)), 1.0, 1e-3)
            drift = max(drift, c.speed_drift)
            escape_bad += int(np.max(c.escape_ratios()) > bound)
    errs = [np.abs(Q.christoffel(hyp, (0.3, 1.2), fd) - _hyperbolic_gamma(1.2)).max()
            for fd in (1e-2, 5e-3, 2.5e-3)]
    order = min(math.log2(a / b) for a, b in zip(errs, errs[1:]))
    ok = drift < 1e-6 and order >= 1.9 and escape_bad == 0
    record(10, "Geodesic integrity", ok,
           f"max speed drift {drift:.2e} (<1e-6), Christoffel order {order:.3f} (>=1.9), "
           f"escape-bound violations {escape_bad}/40")


def test_determinism(tmp_path):
    diffs = {}
    for kind in EXPERIMENT_KINDS:
        a = run(default_config(kind), tmp_path / kind / "a")
        b = rerun(tmp_path / kind / "a" / "manifest.json", tmp_path / kind / "b")
        diffs[kind] = compare_manifests(a, b)
        for f in a.files:
            if (tmp_path / kind / "a" / f["path"]).read_bytes() != (tmp_path / kind / "b" / f["path"]).read_bytes():
                diffs[kind].append(f["path"])
    bad = {k: v for k, v in diffs.items() if v}
    record(11, "Determinism", not bad, f"{len(EXPERIMENT_KINDS)} experiments re-run from manifest, differing files: {bad}")
