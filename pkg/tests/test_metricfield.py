import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rfpp.metricfield import (MetricField, MetricTransform, conformal_metric, constant_metric,
                              cube_extremes, cube_extremes_grid, curve_length, hyperbolic_metric,
                              metric_at, mgf_estimate, paper_metric, riemannian_speed, segment_length,
                              simpson_rule, tail_check)
from rfpp.randfield import CovarianceModel, GridSpec, OutOfWindowError, ScalarField, sample_field
from rfpp.geodist import quadrature_tolerance
from rfpp.starlattice import lattice_from_metric

W = GridSpec.centered(5.0, 0.1)
COV = CovarianceModel("spherical", 1.0, 1.0)


@pytest.fixture(scope="module")
def paper():
    return paper_metric(sample_field(W, COV, 21))


@pytest.fixture(scope="module")
def paper_smooth():
    return paper_metric(sample_field(W, COV, 21), interp_order=3)


def test_constant_identity():
    m = constant_metric(1.0, W)
    assert np.array_equal(metric_at(m, (1.3, -2.0)), np.eye(2))


def test_paper_diagonal_at_zero_field():
    f = ScalarField(W, np.zeros(W.shape), 0, COV)
    g = metric_at(paper_metric(f), (0.37, 1.2))
    assert np.allclose(g, math.log(2) * np.eye(2), rtol=0, atol=1e-15)
    assert g[0, 0] == pytest.approx(0.6931, abs=1e-4)


def test_paper_diagonal_scale():
    f = ScalarField(W, np.zeros(W.shape), 0, COV)
    assert metric_at(paper_metric(f, scale=3.0), (0, 0))[1, 1] == pytest.approx(3 * math.log(2))


@given(st.floats(-3, 3), st.floats(0.2, 4))
def test_hyperbolic_closed_form(x, y):
    m = hyperbolic_metric(GridSpec((-3.0, 0.2), (6.0, 3.8), 0.1))
    assert np.allclose(metric_at(m, (x, y)), np.eye(2) / y**2, rtol=1e-14)


def test_out_of_window(paper):
    with pytest.raises(OutOfWindowError):
        metric_at(paper, (6.0, 0.0))


def test_speed_examples():
    assert riemannian_speed(constant_metric(1.0, W), (0, 0), (0.6, 0.8)) == pytest.approx(1.0)
    assert riemannian_speed(constant_metric(4.0, W), (1, 1), (0.0, 1.0)) == pytest.approx(2.0)


COMPONENT = st.floats(-5, 5).filter(lambda v: v == 0 or abs(v) > 1e-100)


@given(st.floats(-4.9, 4.9), st.floats(-4.9, 4.9), COMPONENT, COMPONENT)
def test_speed_homogeneous(x, y, a, b):
    m = paper_metric(sample_field(W, COV, 21))
    s1 = riemannian_speed(m, (x, y), (a, b))
    assert riemannian_speed(m, (x, y), (2 * a, 2 * b)) == pytest.approx(2 * s1, rel=1e-12, abs=1e-300)
    assert (s1 == 0) == (a == 0 and b == 0)


def test_spd_everywhere(paper, paper_smooth):
    rng = np.random.default_rng(0)
    pts = rng.uniform(-5, 5, size=(10_000, 2))
    conf = conformal_metric(W, sample_field(W, COV, 4), 0.5)
    hyp = hyperbolic_metric(GridSpec((-5.0, 0.1), (10.0, 4.9), 0.1))
    for m, p in ((paper, pts), (paper_smooth, pts), (conf, pts), (constant_metric(2.0, W), pts),
                 (hyp, np.column_stack([pts[:, 0], 0.9 * np.abs(pts[:, 1]) + 0.1]))):
        g = m.metric_batch(p)
        assert np.allclose(g, np.swapaxes(g, 1, 2))
        assert np.linalg.eigvalsh(g)[:, 0].min() > 0


def test_user_transform_spd():
    def func(p):
        a = 2 + np.sin(p[:, 0])
        out = np.zeros((len(p), 2, 2))
        out[:, 0, 0] = a
        out[:, 1, 1] = a
        out[:, 0, 1] = out[:, 1, 0] = 0.5
        return out
    m = MetricField(MetricTransform("user", func=func), W)
    lo, hi = m.eig_extremes_batch([(0.0, 0.0)])
    assert lo[0] == pytest.approx(1.5) and hi[0] == pytest.approx(2.5)


def test_curve_length_examples():
    R, L = curve_length(constant_metric(1.0, W), [(0, 0), (3, 4)])
    assert R == pytest.approx(5.0) and L == pytest.approx(5.0)


@given(st.lists(st.tuples(st.floats(-4.9, 4.9), st.floats(-4.9, 4.9)), min_size=2, max_size=6),
       st.floats(0.1, 3))
def test_constant_length_scales(pts, c):
    R, L = curve_length(constant_metric(c * c, W), pts)
    assert R == pytest.approx(c * L, rel=1e-12, abs=1e-12)


def test_length_additive_over_partition(paper):
    # split a segment at its unit-cube crossings and compare the sum of pieces
    a, b = np.array([-3.3, -1.1]), np.array([2.7, 3.4])
    s = [0.0]
    for ax in range(2):
        for k in range(-5, 6):
            t = (k + 0.5 - a[ax]) / (b[ax] - a[ax])
            if 0 < t < 1:
                s.append(t)
    s = sorted(s) + [1.0]
    pieces = sum(segment_length(paper, a + u * (b - a), a + v * (b - a), 32) for u, v in zip(s[:-1], s[1:]))
    assert pieces == pytest.approx(segment_length(paper, a, b, 32), rel=quadrature_tolerance(32))


def test_length_sandwich(paper):
    rng = np.random.default_rng(5)
    lam, Lam = paper.window_lambda_min(), paper.window_lambda_max()
    for _ in range(100):
        pts = rng.uniform(-4.9, 4.9, size=(4, 2))
        R, L = curve_length(paper, pts)
        assert math.sqrt(lam) * L <= R * (1 + 1e-9)
        assert R <= math.sqrt(Lam) * L * (1 + 1e-9)


def test_partition_bound_per_cube(paper):
    # R(gamma within C_z) <= sqrt(Lambda_z) sqrt(d); the unsquared Lambda_z form only when Lambda_z >= 1
    z = (1, -2)
    ext = cube_extremes(paper, z)
    diag = np.array([[0.5, -2.5], [1.5, -1.5]]) - 1e-9
    R, _ = curve_length(paper, diag)
    assert R <= math.sqrt(ext.Lambda_z) * math.sqrt(2) * (1 + 1e-6)
    if ext.Lambda_z >= 1:
        assert R <= ext.Lambda_z * math.sqrt(2)


def test_quadrature_converges_fourth_order():
    m = conformal_metric(W, lambda p: np.sin(p[:, 0]) * np.cos(0.7 * p[:, 1]), 0.5)
    a, b = (-4.0, -3.0), (3.5, 4.1)
    v = [segment_length(m, a, b, n) for n in (8, 16, 32, 1024)]
    e = [abs(x - v[-1]) for x in v[:3]]
    assert e[1] < e[0] / 12 and e[2] < e[1] / 12


def test_quadrature_converges_on_cubic_field(paper_smooth):
    # the field varies on the 0.1 node scale, so the asymptotic regime starts near 1000 nodes
    a, b = (-4.0, -3.0), (3.5, 4.1)
    v = [segment_length(paper_smooth, a, b, n) for n in (1024, 2048, 16384)]
    assert abs(v[1] - v[2]) < abs(v[0] - v[2]) / 8


def test_simpson_weights():
    s, w = simpson_rule([0.3, 0.71], 8)
    assert w.sum() == pytest.approx(1.0)
    assert np.dot(w, s**3) == pytest.approx(0.25)


def test_cube_extremes_constant():
    e = cube_extremes(constant_metric(2.25, W), (2, -3))
    assert (e.lambda_z, e.Lambda_z) == (2.25, 2.25)


def test_cube_extremes_diagonal_entries(paper):
    e = cube_extremes(paper, (0, 1), 16)
    offs = -0.5 + np.arange(16) / 16
    pts = np.array([(x, 1 + y) for x in offs for y in offs])
    d = paper.diag_batch(pts)
    assert e.lambda_z == d.min() and e.Lambda_z == d.max()


def test_cube_extremes_refinement_monotone(paper):
    for z in [(0, 0), (-3, 2), (4, 4)]:
        c8, c16 = cube_extremes(paper, z, 8), cube_extremes(paper, z, 16)
        assert c16.lambda_z <= c8.lambda_z and c8.Lambda_z <= c16.Lambda_z


def test_cube_extremes_grid_matches_single(paper):
    lam, Lam = cube_extremes_grid(paper, (-2, -2), (2, 2), 8)
    e = cube_extremes(paper, (1, -1), 8)
    assert lam[3, 1] == e.lambda_z and Lam[3, 1] == e.Lambda_z


def test_cube_outside_window(paper):
    with pytest.raises(OutOfWindowError):
        cube_extremes(paper, (5, 0))


def test_mgf_trivial_cases():
    assert mgf_estimate([0.7] * 20, 1.3).value == math.exp(1.3 * 0.7)
    m = mgf_estimate(np.random.default_rng(0).exponential(size=100), 0.0)
    assert (m.value, m.ci_low, m.ci_high) == (1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        mgf_estimate([], 1.0)


@pytest.fixture(scope="module")
def lambda_samples():
    # Lambda_0 samples from unit cubes two sites apart (independent: range 1 < 2)
    g = GridSpec.centered(30.5, 0.1)
    out, s = [], 0
    while sum(len(o) for o in out) < 100_000:
        m = paper_metric(sample_field(g, COV, s))
        out.append(lattice_from_metric(m, "Lambda", samples_per_axis=8).values[::2, ::2].ravel())
        s += 1
    return np.concatenate(out)[:100_000]


def test_mgf_baseline(lambda_samples):
    est = mgf_estimate(lambda_samples[:10_000], 1.0)
    assert math.isfinite(est.value) and math.isfinite(est.ci_low) and math.isfinite(est.ci_high)
    assert est.ci_low <= est.value <= est.ci_high
    assert est.value == pytest.approx(7.1585752462048315, rel=1e-9)


def test_tail_u0(lambda_samples):
    r = tail_check(lambda_samples, 0.0)
    assert r.bound == 2.0 and r.passed


# The 2 exp(-u^2/2) bound ignores E[sup xi] over the cube; with cube maxima the
# empirical tail exceeds it (0.328 vs 0.271 at u=2, 0.026 vs 0.022 at u=3).
@pytest.mark.xfail(strict=True, reason="bound omits the expected supremum over the cube")
@pytest.mark.parametrize("u", [2.0, 3.0])
def test_tail_bound_cube_maximum(lambda_samples, u):
    r = tail_check(lambda_samples, u)
    assert r.bound == pytest.approx(2 * math.exp(-u * u / 2))
    assert r.passed


@pytest.mark.parametrize("u", [2.0, 3.0])
def test_tail_bound_pointwise(u):
    # one value per cube (its corner): the single-point Gaussian tail obeys the bound
    g = GridSpec.centered(30.5, 0.1)
    x = np.concatenate([lattice_from_metric(paper_metric(sample_field(g, COV, s)), "Lambda",
                                            samples_per_axis=1).values[::2, ::2].ravel()
                        for s in range(30)])
    assert tail_check(x, u).passed
