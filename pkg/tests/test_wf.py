import math

import numpy as np
import pytest
from scipy.stats import chi2_contingency, kstest

from fkpp_qsd.rng import RngStream
from fkpp_qsd.wf import (KingmanState, WfParams, kingman_block_counts,
                         kingman_martingale_values, kingman_step, wf_ensemble_final,
                         wf_simulate, wf_spectrum, wf_survival_asymptotic)


def test_spectrum_values():
    assert wf_spectrum(2, 1.0) == -1.0
    assert wf_spectrum(3, 1.0) == -3.0
    assert wf_spectrum(2, 2.0) == -2.0
    with pytest.raises(ValueError):
        wf_spectrum(1, 1.0)


def test_spectrum_ordering():
    vals = [wf_spectrum(n) for n in range(2, 51)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_survival_asymptotic():
    assert wf_survival_asymptotic(0.5, 0.0, 1.0) == pytest.approx(1.5)
    assert wf_survival_asymptotic(1e-9, 0.0) < 1e-8
    r = wf_survival_asymptotic(0.3, 2.0, 1.3) / wf_survival_asymptotic(0.3, 1.0, 1.3)
    assert r == pytest.approx(math.exp(-1.3))
    with pytest.raises(ValueError):
        wf_survival_asymptotic(0.0, 1.0)


def test_kingman_absorbing_and_merge_time():
    s = KingmanState(1, 0.0)
    assert kingman_step(s, 1.0, RngStream(1, 0)) is s
    # mean 2 -> 1 merge time = 1/gamma within 3 sigma over 1e5 runs
    gamma = 1.4
    counts = kingman_block_counts(2, gamma, [0.0], RngStream(1, 1), 1)
    assert counts.shape == (1, 1)
    gen = RngStream(1, 2).generator()
    waits = gen.exponential(1.0, size=100_000) / (gamma * 1.0)
    # exercise the step API on a subsample as well
    times = [kingman_step(KingmanState(2), gamma, RngStream(1, 3 + i)).time
             for i in range(200)]
    assert abs(np.mean(times) - 1 / gamma) < 3 * np.std(times) / math.sqrt(200)
    assert abs(waits.mean() - 1 / gamma) < 3 * waits.std() / math.sqrt(len(waits))


def test_kingman_martingale_constant_mean():
    gamma, n0 = 1.0, 10
    ts = [0.0, 0.5, 1.0]
    counts = kingman_block_counts(n0, gamma, ts, RngStream(2, 0), 100_000)
    vals = kingman_martingale_values(counts, ts, gamma)
    m0 = vals[:, 0].mean()
    for j in range(1, len(ts)):
        se = vals[:, j].std(ddof=1) / math.sqrt(vals.shape[0])
        assert abs(vals[:, j].mean() - m0) < 3 * se


def test_wf_simulate_absorbed_start():
    x, absorbed = wf_simulate(0.0, WfParams(0.0, 1.0), RngStream(3, 0), 1.0)
    assert x == 0.0 and absorbed


def test_wf_conditioned_law_is_near_uniform():
    finals, absorbed, _ = wf_ensemble_final(0.5, WfParams(0.0, 1.0),
                                            RngStream(3, 1), 3.0, 20_000, 512)
    survivors = finals[~absorbed]
    assert len(survivors) > 800
    assert kstest(survivors, "uniform").statistic < 0.05


def test_wf_moment_duality_cross_check():
    # E_x[(1-X_t)^n] (chain) vs E_n[(1-x)^{N_t}] (block-counting dual)
    n, x, t, gamma = 3, 0.4, 1.0, 1.0
    reps = 20_000
    finals, absorbed, _ = wf_ensemble_final(x, WfParams(0.0, gamma),
                                            RngStream(4, 0), t, reps, 256)
    lhs_vals = (1.0 - finals) ** n
    lhs, lse = lhs_vals.mean(), lhs_vals.std(ddof=1) / math.sqrt(reps)
    counts = kingman_block_counts(n, gamma, [t], RngStream(4, 1), reps)[:, 0]
    rhs_vals = (1.0 - x) ** counts
    rhs, rse = rhs_vals.mean(), rhs_vals.std(ddof=1) / math.sqrt(reps)
    z = abs(lhs - rhs) / math.hypot(lse, rse)
    assert z < 3.5, (lhs, rhs, z)


def test_wf_conditioned_law_stationary_between_times():
    # conditioned histograms at gamma*t = 3 and 4 agree within MC noise
    out = []
    for j, t in enumerate((3.0, 4.0)):
        finals, absorbed, _ = wf_ensemble_final(0.5, WfParams(0.0, 1.0),
                                                RngStream(5, j << 20), t,
                                                30_000, 256)
        out.append(np.histogram(finals[~absorbed], bins=8, range=(0, 1))[0])
    _, pvalue, _, _ = chi2_contingency(np.array(out))
    assert pvalue > 1e-3


def test_wf_selection_small_noise_trend():
    # beta = 1 fixed: as gamma decreases the conditioned law piles up near 1
    # (replica counts grow as survival thins at small gamma)
    mass_hi = []
    for j, (gamma, reps) in enumerate(((1.0, 8000), (0.3, 8000),
                                       (0.1, 40000))):
        finals, absorbed, _ = wf_ensemble_final(
            0.5, WfParams(1.0, gamma), RngStream(6, j << 20), 1.0 / gamma,
            reps, 128)
        surv = finals[~absorbed]
        assert len(surv) > 50, (gamma, len(surv))
        mass_hi.append(float((surv >= 0.9).mean()))
    assert mass_hi[0] < mass_hi[1] < mass_hi[2]
