import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rfpp import geodist as G
from rfpp import shape as S
from rfpp.metricfield import constant_metric
from rfpp.randfield import GridSpec

SMALL = dict(window_half_width=15.0, field_spacing=0.2, h=0.2)
ETA3 = G.stencil_factor(3, 2)


@pytest.fixture(scope="module")
def small_ensemble():
    spec = S.EnsembleSpec(t_list=(4.0, 8.0, 12.0), n_directions=16, replicates=6, base_seed=2024,
                          ball_t=8.0, **SMALL)
    return S.run_ensemble(spec)


@pytest.fixture(scope="module")
def constant_ensemble():
    spec = S.EnsembleSpec(t_list=(3.0, 6.0, 9.0), n_directions=16, replicates=2, ball_t=6.0,
                          transform="constant", transform_parameters=(4.0,), **SMALL)  # g = 4 I, mu = 2
    return S.run_ensemble(spec)


def ellipse_table(a=1.0, b=1.6, n=16):
    dirs = S.unit_directions(n)
    return S.MuTable.from_values(dirs, np.sqrt((dirs[:, 0] / a) ** 2 + (dirs[:, 1] / b) ** 2))


# directions and statistics


def test_direction_grid():
    d = S.unit_directions(16)
    assert d.shape == (16, 2)
    assert np.allclose(np.linalg.norm(d, axis=1), 1)
    assert S.MuTable.from_values(d, np.ones(16)).max_angular_gap() == pytest.approx(np.pi / 8)
    for e in ([1, 0], [0, 1], [-1, 0], [0, -1]):
        assert np.max(d @ e) == pytest.approx(1)
    d3 = S.unit_directions(30, 3)
    assert d3.shape == (33, 3) and np.allclose(d3[:3], np.eye(3))
    assert np.allclose(np.linalg.norm(d3, axis=1), 1)


def test_batch_means_by_hand():
    x = np.arange(20.0)
    mean, hw = S.batch_means_ci(x, n_batches=4)
    bm = np.array([2.0, 7.0, 12.0, 17.0])
    expected = 3.182446305284263 * bm.std(ddof=1) / 2  # t_{0.975, 3}
    assert mean == 9.5 and hw == pytest.approx(expected, rel=1e-12)
    assert S.batch_means_ci([3.0]) == (3.0, 0.0)


def test_mutable_shape_validation():
    with pytest.raises(ValueError):
        S.MuTable(S.unit_directions(4), (1.0, 2.0), np.ones((3, 1, 4)))


# mu_norm


def test_mu_norm_origin():
    assert S.mu_norm([0.0, 0.0], ellipse_table()) == 0.0


@given(st.floats(-50, 50), st.floats(-50, 50))
def test_mu_norm_homogeneity_exact(x, y):
    tab = ellipse_table()
    assert S.mu_norm([2 * x, 2 * y], tab) == 2 * S.mu_norm([x, y], tab)


def test_mu_norm_at_knots():
    tab = ellipse_table()
    for v, m in zip(tab.directions, tab.mu_hat):
        assert S.mu_norm(3 * v, tab) == pytest.approx(3 * m, rel=1e-15)


def test_mu_norm_triangle_inequality():
    # slack: worst interpolation error delta of the tabulated ellipse norm, applied to all three terms
    a, b = 1.0, 1.6
    tab = ellipse_table(a, b)
    th = np.linspace(0, 2 * np.pi, 20001)
    u = np.stack([np.cos(th), np.sin(th)], axis=1)
    delta = np.max(np.abs(S.mu_norm(u, tab) - np.sqrt((u[:, 0] / a) ** 2 + (u[:, 1] / b) ** 2)))
    rng = np.random.default_rng(3)
    x, y = rng.normal(size=(1000, 2)), rng.normal(size=(1000, 2))
    lhs = S.mu_norm(x + y, tab)
    rhs = S.mu_norm(x, tab) + S.mu_norm(y, tab)
    slack = delta * (np.linalg.norm(x + y, axis=1) + np.linalg.norm(x, axis=1) + np.linalg.norm(y, axis=1))
    assert np.all(lhs <= rhs + slack)


# limit shape


def test_limit_shape_circle():
    tab = S.MuTable.from_values(S.unit_directions(16), np.full(16, 2.0))
    A = S.limit_shape(tab)
    assert np.allclose(A.radii, 0.5, rtol=0, atol=1e-15)
    assert A.circularity == pytest.approx(1.0)


def test_limit_shape_scaling_and_duality():
    tab = ellipse_table()
    A = S.limit_shape(tab)
    A2 = S.limit_shape(S.MuTable.from_values(tab.directions, 2 * tab.mu_hat))
    assert np.allclose(A2.vertices, A.vertices / 2, rtol=1e-15)
    for v, m in zip(tab.directions, tab.mu_hat):
        assert A.radius(v) == 1.0 / m


def test_limit_shape_rejects_nonpositive():
    with pytest.raises(S.NonPositiveMuError):
        S.limit_shape(S.MuTable.from_values(S.unit_directions(8), np.r_[np.ones(7), 0.0]))


def test_limit_shape_csv_closed(tmp_path):
    p = S.limit_shape(ellipse_table()).to_csv(tmp_path / "A.csv")
    rows = list(csv.reader(p.open()))
    assert rows[0] == ["x", "y"] and rows[1] == rows[-1] and len(rows) == 18


# checks on injected tables


def test_positivity():
    d = S.unit_directions(16)
    assert S.positivity_check(S.MuTable.from_values(d, np.full(16, 2.0)), lambda_min=4.0).passed
    assert not S.positivity_check(S.MuTable.from_values(d, np.r_[np.ones(15), 0.0])).passed
    assert not S.positivity_check(S.MuTable.from_values(d, np.full(16, 1.0)), lambda_min=4.0).passed


def test_isotropy():
    assert S.isotropy_check(S.MuTable.from_values(S.unit_directions(16), np.ones(16))).passed
    assert not S.isotropy_check(ellipse_table()).passed


def test_continuity():
    d = S.unit_directions(16)
    assert S.continuity_check(S.MuTable.from_values(d, np.ones(16))).value == 0
    assert S.continuity_check(ellipse_table()).passed
    jump = np.ones(16)
    jump[3] = 3.0
    assert not S.continuity_check(S.MuTable.from_values(d, jump)).passed
    with pytest.raises(ValueError):
        S.continuity_check(S.MuTable.from_values(S.unit_directions(6), np.ones(6)))


def test_coordinate_bound():
    assert S.coordinate_bound_check(ellipse_table()).passed
    d = S.unit_directions(16)
    mu = np.ones(16)
    mu[2] = 1.5  # diagonal direction above |v1| + |v2| = sqrt(2)
    res = S.coordinate_bound_check(S.MuTable.from_values(d, mu))
    assert not res.passed and res.details["violations"] == [2]


def test_subadditivity_on_trace():
    d = S.unit_directions(8)
    ts = (2.0, 4.0, 6.0)
    ok = np.stack([np.full((3, 8), 1.0)])
    assert S.subadditivity_check(S.MuTable(d, ts, ok)).passed
    bad = ok.copy()
    bad[0, 1] = 1.2  # E d(0,4v) = 4.8 > 2 E d(0,2v) = 4
    res = S.subadditivity_check(S.MuTable(d, ts, bad))
    assert not res.passed and res.value == 2


def test_uniform_convergence_synthetic():
    d = S.unit_directions(8)
    samples = np.array([1.3, 1.1, 1.02, 1.0])[None, :, None] * np.ones((1, 4, 8))
    tab = S.MuTable(d, (5.0, 10.0, 20.0, 40.0), samples)
    assert S.uniform_convergence_check(tab, 0.05).value == 20.0
    assert S.uniform_convergence_check(tab, 0.5).value == 5.0


# ensembles


def test_constant_metric_mu(constant_ensemble):
    tab = constant_ensemble.table
    assert np.all(tab.mu_hat >= 2.0 - 1e-12) and np.all(tab.mu_hat <= 2.0 * ETA3 + 1e-12)
    assert S.positivity_check(tab).passed
    assert S.continuity_check(tab, constant_ensemble.u_table).passed
    assert S.coordinate_bound_check(tab).passed
    dev = S.uniform_convergence_check(tab, 1.0).details["deviation"]
    assert max(dev) <= 2.0 * (ETA3 - 1) + 1e-12


def test_constant_metric_containment(constant_ensemble):
    # exact A is the disk of radius 1/2; the graph ball sits between it and the stencil polygon
    exact = S.MuTable.from_values(S.unit_directions(64), np.full(64, 2.0))
    bracket = ETA3 - 1 + 2 * 0.2 / 6.0
    rep = S.shape_containment_check(constant_ensemble.balls, 6.0, bracket, exact)
    assert rep.passed
    neg = S.shape_containment_check(constant_ensemble.balls, 6.0, 1e-4, exact)
    assert neg.pass_count == 0


def test_containment_monotone_in_eps(small_ensemble):
    counts = [small_ensemble.containment(e, 0).pass_count for e in (0.05, 0.1, 0.2, 0.3, 0.5)]
    assert counts == sorted(counts) and counts[-1] == 6


def test_estimate_mu_constant():
    tab = S.estimate_mu((1, 1), (3.0, 6.0), 1, 0, transform="constant", transform_parameters=(9.0,), **SMALL)
    assert 3.0 - 1e-12 <= tab.mu_hat[0] <= 3.0 * ETA3


def test_mu_scaling_exact_at_solver_level():
    kw = dict(t_list=(4.0, 8.0), replicates=2, base_seed=5, **SMALL)
    a = S.estimate_mu((0.6, 0.8), **kw).mu_hat[0]
    b = S.estimate_mu((0.6, 0.8), transform_parameters=(4.0,), **kw).mu_hat[0]
    assert b == pytest.approx(2 * a, rel=1e-12)


def test_estimate_mu_regression_baseline():
    # six spherical-covariance environments, seed 2024, window half-width 15, h = 0.2
    tab = S.estimate_mu((1, 0), (4.0, 8.0, 12.0), 6, 2024, **SMALL)
    assert tab.mu_hat[0] == pytest.approx(0.6758925231224268, rel=1e-10)
    assert S.subadditivity_check(tab).passed


def test_ensemble_matches_single_direction(small_ensemble):
    # same seeds and environments, so the e1 column equals estimate_mu exactly
    assert small_ensemble.table.mu_hat[0] == pytest.approx(0.6758925231224268, rel=1e-10)


def test_small_ensemble_checks(small_ensemble):
    tab = small_ensemble.table
    assert S.positivity_check(tab, factor=0.9).passed
    assert S.coordinate_bound_check(tab).passed
    assert S.continuity_check(tab, small_ensemble.u_table).passed
    uc = S.uniform_convergence_check(tab, 0.05 * tab.mu_hat.mean())
    assert uc.value == 12.0
    assert np.all(np.diff(uc.details["deviation"]) <= 0)


def test_single_environment_mode():
    m = constant_metric(2.25, GridSpec.centered(12.0, 0.2))
    tab = S.single_environment_mu(m, S.unit_directions(8), (3.0, 6.0, 9.0), 0.2)
    assert tab.replicates == 1 and np.all(tab.halfwidth == 0)
    assert np.all(tab.mu_hat >= 1.5 - 1e-12) and np.all(tab.mu_hat <= 1.5 * ETA3 + 1e-12)


def test_mutable_csv(tmp_path, small_ensemble):
    p = small_ensemble.table.to_csv(tmp_path / "mu.csv")
    rows = list(csv.reader(p.open()))
    assert rows[0] == ["angle", "mu_hat", "ci_lo", "ci_hi", "t", "replicates"]
    assert len(rows) == 17 and all(r[-1] == "6" for r in rows[1:])
    assert float(rows[1][1]) == small_ensemble.table.mu_hat[0]
