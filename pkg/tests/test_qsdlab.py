import math

import numpy as np
import pytest

from fkpp_qsd.dual import DualConfiguration
from fkpp_qsd.engine import constant_profile, make_field, step_profile
from fkpp_qsd.params import ModelParams
from fkpp_qsd.qsdlab import (SurvivalCurve, conditioned_two_point,
                             duality_check, entrance_moment, eval_D, eval_E,
                             fit_rate, fleming_viot, girsanov_check,
                             sandwich_constants, survival_curve)
from fkpp_qsd.rng import RngStream
from fkpp_qsd.spectral import fixation_rate

P = ModelParams(1.0, 0.0, 1.0)


def test_eval_D_basics():
    f0 = make_field(constant_profile(0.0), 16, 17)
    f1 = make_field(constant_profile(1.0), 16, 17)
    pts = [0.1, 0.4, 0.9]
    assert eval_D(f0, pts) == 1.0
    assert eval_D(f1, pts) == 0.0
    c = 6 / 17
    fc = make_field(constant_profile(c), 17, 17)
    assert eval_D(fc, pts) == pytest.approx((1 - 6 / 17) ** 3)
    assert eval_D(lambda x: 0.25, pts) == pytest.approx(0.75 ** 3)


def test_eval_E_basics():
    z = DualConfiguration([0.2, 0.6], [0.4])
    assert eval_E(make_field(constant_profile(0.0), 8, 9), z) == 0.0
    assert eval_E(make_field(constant_profile(1.0), 8, 9), z) == 0.0
    c = 3 / 9
    fc = make_field(constant_profile(c), 9, 9)
    n, m = 2, 1
    expect = (1 - c) ** n * (1 - (1 - c) ** m)
    assert eval_E(fc, z) == pytest.approx(expect)
    assert eval_E(fc, DualConfiguration([0.1], [])) == 0.0


def test_fit_rate_exact_exponential():
    ts = np.linspace(0.5, 3.0, 8)
    curve = SurvivalCurve(ts, np.exp(-2.0 * ts), 10**9)
    k, err = fit_rate(curve, (0.4, 3.1))
    assert abs(k - 2.0) < 1e-12


def test_fit_rate_window_error():
    ts = np.array([0.5, 1.0, 1.5, 2.0])
    curve = SurvivalCurve(ts, np.array([0.5, 0.3, 0.2, 0.1]), 100)
    with pytest.raises(ValueError, match="usable"):
        fit_rate(curve, (1.6, 2.0))


def test_survival_curve_monotone_and_initial():
    u0 = make_field(constant_profile(0.5), 16, 17)
    curve, taus, sides = survival_curve(u0, P, [0.1, 0.5, 1.0], 400,
                                        RngStream(30, 0))
    assert curve.surviving_fraction[0] > 0.9
    assert np.all(np.diff(curve.surviving_fraction) <= 1e-12)
    lo, hi = curve.ci()
    assert np.all(lo <= curve.surviving_fraction)
    assert np.all(curve.surviving_fraction <= hi)


def test_sandwich_shape():
    u0 = make_field(constant_profile(0.5), 16, 17)
    cps = [0.25 * k for k in range(1, 13)]
    curve, taus, _ = survival_curve(u0, P, cps, 2000, RngStream(31, 0))
    fin = taus[np.isfinite(taus)]
    k, _ = fit_rate(curve, (float(np.quantile(fin, 0.5)),
                            float(np.quantile(fin, 0.99))))
    c_lo, c_hi = sandwich_constants(curve, k)
    assert 0.0 < c_lo <= c_hi < math.inf


def test_duality_t0_exact_and_degenerate_fields():
    u0 = make_field(step_profile(0.5), 32, 33)
    z0 = DualConfiguration([0.2, 0.6], [0.4])
    rep = duality_check(u0, z0, 0.0, P, 10, RngStream(32, 0))
    assert rep.lhs == rep.rhs == eval_E(u0, z0)
    assert rep.z_score == 0.0
    ones = make_field(constant_profile(1.0), 32, 33)
    rep = duality_check(ones, z0, 0.0, P, 10, RngStream(32, 1))
    assert rep.lhs == rep.rhs == 0.0


def test_duality_small_case_consistency():
    u0 = make_field(step_profile(0.5), 32, 33)
    z0 = DualConfiguration([0.2, 0.6], [0.4])
    rep = duality_check(u0, z0, 0.1, P, 3000, RngStream(33, 0))
    assert rep.z_score < 4.0, (rep.lhs, rep.rhs, rep.z_score)
    assert rep.cb_z < 4.0


def test_girsanov_trivial_and_formula():
    u0 = make_field(constant_profile(0.5), 16, 17)
    rep = girsanov_check(u0, ModelParams(1.0, 0.5, 1.0), 0.5, 1500,
                         RngStream(34, 0))
    assert rep["lower_ok"] and rep["upper_ok"]
    # the lower factor decreases in t
    f = [math.exp(-(0.5 + 0.25 * t / 8.0)) for t in (0.5, 1.0, 2.0)]
    assert f[0] > f[1] > f[2]
    with pytest.raises(ValueError):
        girsanov_check(u0, ModelParams(1.0, -0.5, 1.0), 0.5, 10,
                       RngStream(34, 1))


def test_entrance_moment_exact_point_start():
    eig = fixation_rate(P)
    best, trend = entrance_moment([0.3], [2], P, eig, 50, RngStream(35, 0),
                                  L=64)
    # both particles at one point: tau_one = 0 exactly, moment 1
    assert best.estimate == pytest.approx(1.0)
    assert best.stderr == 0.0
    assert not best.flagged


def test_entrance_moment_monotone_in_set():
    eig = fixation_rate(P)
    n_grid = [8, 16]
    reps = 1200
    b_small, _ = entrance_moment([0.0, 0.5], n_grid, P, eig, reps,
                                 RngStream(36, 0), L=64)
    b_all, _ = entrance_moment("circle", n_grid, P, eig, reps,
                               RngStream(37, 0), L=64)
    assert b_small.estimate < b_all.estimate + 3 * math.hypot(
        b_small.stderr, b_all.stderr)
    assert b_all.estimate > 1.0


def test_fleming_viot_smoke_and_mean():
    u0 = make_field(constant_profile(0.5), 16, 17)
    est, (k_hat, k_err) = fleming_viot(u0, P, 32, 2.0, 8.0, RngStream(38, 0),
                                       probe_points=(0.0, 0.5),
                                       probe_distances=(0.0, 0.25))
    m = est["mean_u@0.0"]
    assert abs(m.value - 0.5) < 6 * max(m.stderr, 0.01)
    assert est["twopoint@0.0"].value > 0
    assert k_hat > 0


def test_fleming_viot_rejects_tiny_ensemble():
    u0 = make_field(constant_profile(0.5), 16, 17)
    with pytest.raises(ValueError):
        fleming_viot(u0, P, 1, 0.5, 1.0, RngStream(39, 0))


def test_conditioned_two_point_stabilizes():
    # survivor-conditioned functionals at t and 2t agree within joint bands
    u0 = make_field(constant_profile(0.5), 16, 17)
    t = 1.5
    e1, s1, n1 = conditioned_two_point(u0, P, t, 4000, RngStream(40, 0),
                                       distances=(0.0, 0.25))
    e2, s2, n2 = conditioned_two_point(u0, P, 2 * t, 12000, RngStream(41, 0),
                                       distances=(0.0, 0.25))
    for a, sa, b, sb in zip(e1, s1, e2, s2):
        assert abs(a - b) < 3.5 * math.hypot(sa, sb), (a, b)


def test_conditioned_initial_condition_independence():
    # two different starting profiles give matching conditioned functionals
    t = 2.0
    f1 = make_field(constant_profile(0.3), 16, 17)
    f2 = make_field(step_profile(0.5), 16, 17)
    e1, s1, _ = conditioned_two_point(f1, P, t, 8000, RngStream(42, 0),
                                      distances=(0.25,))
    e2, s2, _ = conditioned_two_point(f2, P, t, 8000, RngStream(43, 0),
                                      distances=(0.25,))
    assert abs(e1[0] - e2[0]) < 3.5 * math.hypot(s1[0], s2[0])
