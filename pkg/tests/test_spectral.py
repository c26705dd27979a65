import math

import mpmath as mp
import numpy as np
import pytest
from scipy.integrate import quad

from fkpp_qsd.params import ModelParams
from fkpp_qsd.spectral import (EigenSolution, fixation_rate, kappa_series,
                               local_fixation_prob, mstar_from_entrance,
                               qsd_density, qsd_moments,
                               right_efn_extended, right_efn_two_particle,
                               theta_star, theta_star_mp)


def test_theta_star_at_pi():
    # 4*(pi/4)*tan(pi/4) = pi exactly
    assert abs(theta_star(math.pi) - math.pi / 4) < 1e-14


def test_theta_star_unit_ratio_backsubstitution():
    th = theta_star(1.0)
    assert abs(th - 0.4801) < 5e-4
    assert abs(4 * th * math.tan(th) - 1.0) < 1e-10


def test_theta_star_limits():
    assert theta_star(1e12) > math.pi / 2 - 1e-5
    # kappa -> pi^2*alpha in the slow-diffusion limit
    alpha = 1e-4
    eig = fixation_rate(ModelParams(alpha, 0.0, 1.0))
    assert abs(eig.kappa / (math.pi ** 2 * alpha) - 1.0) < 0.01


def test_theta_star_domain():
    for bad in (0.0, -1.0):
        with pytest.raises(ValueError):
            theta_star(bad)
        with pytest.raises(ValueError):
            theta_star_mp(bad)


def test_root_residual_grid_extended_precision():
    # residual < 1e-12 over 100 log-spaced ratios in [1e-6, 1e6]
    ratios = np.logspace(-6, 6, 100)
    with mp.workdps(40):
        for r in ratios:
            th = theta_star_mp(float(r))
            res = abs(4 * th * mp.tan(th) - mp.mpf(float(r)))
            assert res < mp.mpf("1e-12"), (r, float(res))
            # float solver is within 2 ulp of the true root
            thf = theta_star(float(r))
            assert abs(thf - float(th)) <= 2 * math.ulp(float(th))


def test_theta_monotone_and_kappa_monotone():
    rs = np.logspace(-6, 6, 120)
    ths = [theta_star(float(r)) for r in rs]
    assert all(a < b for a, b in zip(ths, ths[1:]))
    alphas = np.logspace(-3, 4, 80)
    kappas = [fixation_rate(ModelParams(float(a), 0.0, 1.0)).kappa
              for a in alphas]
    assert all(a < b for a, b in zip(kappas, kappas[1:]))
    assert all(k < 1.0 for k in kappas)  # increases toward gamma


def test_fixation_rate_fast_limit():
    gamma = 1.0
    eig = fixation_rate(ModelParams(1e4 * gamma, 0.0, gamma))
    lo = 0.9999 * (1 - gamma / (12 * 1e4 * gamma))
    assert lo <= eig.kappa / gamma < 1.0


def test_fixation_rate_rejects_selection():
    with pytest.raises(ValueError):
        fixation_rate(ModelParams(1.0, 0.5, 1.0))


def test_kappa_series_leading_terms():
    p = ModelParams(2.0, 0.0, 3.0)
    assert kappa_series(p, "fast", 0) == 3.0
    assert kappa_series(p, "slow", 0) == pytest.approx(math.pi ** 2 * 2.0)
    with pytest.raises(ValueError):
        kappa_series(p, "fast", 4)
    with pytest.raises(ValueError):
        kappa_series(p, "slow", 3)
    with pytest.raises(ValueError):
        kappa_series(p, "sideways", 1)


def test_series_consistency_fast():
    # remainder of the order-3 fast series is O((gamma/alpha)^4)
    for r in (0.05, 0.02, 0.01):
        p = ModelParams(1.0, 0.0, r)
        exact = fixation_rate(p).kappa
        s3 = kappa_series(p, "fast", 3)
        assert abs(exact - s3) <= 2 * p.gamma * r ** 4


def test_series_consistency_slow_documented_constant():
    # empirical sweep: |kappa - series2| / (pi^2 alpha q^3) -> |32 pi^2/3-256|
    # ~= 150.7 as q -> 0 and stays below 170 for q <= 0.02
    for q in (0.02, 0.01, 0.005, 0.002):
        p = ModelParams(q, 0.0, 1.0)
        exact = fixation_rate(p).kappa
        s2 = kappa_series(p, "slow", 2)
        ratio = abs(exact - s2) / (math.pi ** 2 * q * q ** 3)
        assert 120.0 < ratio < 170.0


def _eigen(alpha=1.0, gamma=1.0, mstar=None):
    eig = fixation_rate(ModelParams(alpha, 0.0, gamma))
    if mstar is not None:
        eig = mstar_from_entrance(1.0 / (2 * math.cos(eig.theta) * mstar),
                                  0.0, eig)
    return eig


def test_qsd_density_values_and_mass():
    eig = _eigen()
    assert qsd_density(0.5, eig) == pytest.approx(eig.norm_A)
    assert qsd_density(0.0, eig) == pytest.approx(
        eig.norm_A * math.cos(eig.theta))
    mass, _ = quad(lambda d: 2 * qsd_density(d, eig), 0, 0.5, epsabs=1e-13)
    assert abs(mass - 1.0) < 1e-10
    ds = np.linspace(0, 0.5, 101)
    assert np.all(qsd_density(ds, eig) > 0)


def test_right_efn_requires_and_matches_density_shape():
    eig = _eigen()
    with pytest.raises(ValueError):
        right_efn_two_particle(0.2, eig)
    eig = mstar_from_entrance(1.7, 0.01, eig)
    ds = np.linspace(0, 0.5, 41)
    ratio = right_efn_two_particle(ds, eig) / qsd_density(ds, eig)
    assert np.max(np.abs(ratio - ratio[0])) < 1e-12
    assert right_efn_two_particle(0.0, eig) == pytest.approx(
        eig.M_star * math.cos(eig.theta))
    assert right_efn_extended(eig, None) == 0.0


def test_mstar_identities_and_domain():
    eig = _eigen()
    with pytest.raises(ValueError):
        mstar_from_entrance(0.97, 0.0, eig)
    got = mstar_from_entrance(1.0, 0.0, eig)
    assert got.M_star == pytest.approx(1.0 / (2.0 * math.cos(eig.theta)))
    got = mstar_from_entrance(2.3, 0.1, eig)
    assert got.M_star * math.cos(eig.theta) * 2.3 == pytest.approx(0.5)
    assert got.M_star_stderr == pytest.approx(got.M_star * 0.1 / 2.3)


def test_qsd_moments():
    eig = mstar_from_entrance(1.9, 0.0, _eigen())
    m = qsd_moments(0.1, 0.45, eig)
    assert m["mean"] == 0.5
    d = 0.35
    c = math.cos(2 * eig.theta * (0.5 - d))
    assert m["cross"] == pytest.approx(0.5 - eig.M_star * c)
    assert m["covariance"] + eig.M_star * c == pytest.approx(0.25)
    # Fubini: Var of the spatial mean equals the distance-averaged covariance
    integral, _ = quad(lambda dd: 2 * qsd_moments(0.0, dd, eig)["covariance"],
                       0, 0.5, epsabs=1e-13)
    assert abs(m["var_integral"] - integral) < 1e-10


def test_local_fixation_probabilities():
    assert local_fixation_prob(2.0, 2.0) == {"not_fixed": 1.0, "zero_on_F": 0.0}
    out = local_fixation_prob(1.5, 2.0)
    assert 0.0 < out["zero_on_F"] < 0.5
    assert local_fixation_prob(1.8, 2.0)["not_fixed"] > out["not_fixed"]
    with pytest.raises(ValueError):
        local_fixation_prob(2.5, 2.0)
    with pytest.raises(ValueError):
        local_fixation_prob(0.5, 2.0)
