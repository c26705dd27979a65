"""Acceptance suite: every criterion at its stated tolerance, one printed
pass/fail line each (run with `pytest -v -rA` to see the lines).

Monte Carlo sizes are the stated ones; master seeds are fixed per criterion.
Criterion 2's slow branch is implemented exactly as stated and is a known,
documented red (strict xfail): the true order-2 remainder constant is
|32*pi^2/3 - 256| ~= 150.7 > 100, so no correct rate can satisfy the bound.
"""

import math

import mpmath as mp
import numpy as np
import pytest
from scipy.stats import kstest

from fkpp_qsd.circle import heat_kernel
from fkpp_qsd.config import parse_config
from fkpp_qsd.dual import (DualConfiguration, colour_blind_run,
                           martingale_functional, pair_checkpoint_ensemble,
                           run_dual)
from fkpp_qsd.engine import constant_profile, make_field
from fkpp_qsd.experiments import default_duality_battery, run_duality_battery
from fkpp_qsd.params import ModelParams
from fkpp_qsd.qsdlab import (SurvivalCurve, entrance_moment, eval_E,
                             fit_rate, fleming_viot, girsanov_check,
                             survival_curve)
from fkpp_qsd.rng import RngStream
from fkpp_qsd.spectral import (fixation_rate, kappa_series,
                               mstar_from_entrance, right_efn_two_particle,
                               theta_star, theta_star_mp)

P11 = ModelParams(1.0, 0.0, 1.0)
KAPPA = fixation_rate(P11).kappa


def report(criterion: str, ok: bool, detail: str):
    print(f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"{criterion}: {detail}"


def test_criterion_1_theta_star_residual():
    ratios = np.logspace(-6, 6, 100)
    worst = 0.0
    with mp.workdps(40):
        for r in ratios:
            th = theta_star_mp(float(r))
            worst = max(worst, float(abs(4 * th * mp.tan(th) - mp.mpf(float(r)))))
    pi_err = abs(theta_star(math.pi) - math.pi / 4)
    ok = worst < 1e-12 and pi_err < 1e-14
    report("criterion 1 (root residual)", ok,
           f"max residual {worst:.3g} over 100 ratios in [1e-6,1e6]; "
           f"|theta(pi)-pi/4| = {pi_err:.3g}")


def test_criterion_2_fast_series():
    gamma, alpha = 0.01, 1.0  # gamma/alpha = 0.01
    p = ModelParams(alpha, 0.0, gamma)
    exact = fixation_rate(p).kappa
    rem = abs(exact - kappa_series(p, "fast", 3))
    bound = 2 * gamma * (gamma / alpha) ** 4
    report("criterion 2 (fast series)", rem <= bound,
           f"remainder {rem:.3g} vs bound {bound:.3g}")


@pytest.mark.xfail(
    strict=True,
    reason="spec defect: the true order-2 remainder is (32*pi^2/3-256) * "
    "pi^2*alpha*q^3 ~= -150.7*pi^2*alpha*q^3 (measured -157.4 at q=0.01), "
    "so the stated bound 100*pi^2*alpha*q^3 is unattainable by any correct "
    "rate; see the decisions ledger")
def test_criterion_2_slow_series():
    alpha, gamma = 0.01, 1.0  # alpha/gamma = 0.01
    p = ModelParams(alpha, 0.0, gamma)
    exact = fixation_rate(p).kappa
    rem = abs(exact - kappa_series(p, "slow", 2))
    bound = 100 * math.pi ** 2 * alpha * (alpha / gamma) ** 3
    report("criterion 2 (slow series)", rem <= bound,
           f"remainder {rem:.3g} vs stated bound {bound:.3g} "
           f"(ratio {rem / bound:.3f})")


def test_criterion_3_two_particle_dual_rate():
    L, reps = 256, 100_000
    master = RngStream(1003, 0)
    z0 = DualConfiguration([0.0], [0.0])
    taus = np.empty(reps)
    for r in range(reps):
        taus[r] = run_dual(z0, P11, "lattice", math.inf, master.child(r),
                           L=L).tau_partial
    q50, q99 = np.quantile(taus, [0.5, 0.99])
    grid = np.linspace(q50, q99, 14)
    frac = (taus[:, None] > grid[None, :]).mean(axis=0)
    curve = SurvivalCurve(grid, frac, reps)
    k_hat, err = fit_rate(curve, (grid[0], grid[-1]))
    rel = abs(k_hat / KAPPA - 1.0)
    ok = rel < 0.05 and 3 * err < 0.05 * KAPPA
    report("criterion 3 (two-particle dual rate)", ok,
           f"kappa_hat {k_hat:.4f} +- {err:.4f} vs {KAPPA:.4f} "
           f"(rel {rel * 100:.2f}%, 3sigma power "
           f"{3 * err / KAPPA * 100:.2f}% < 5%)")


def test_criterion_4_spde_fixation_rate():
    L, M, reps = 64, 65, 10_000
    u0 = make_field(constant_profile(0.5), L, M)
    cps = [0.25 * k for k in range(1, 15)]
    curve, taus, _ = survival_curve(u0, P11, cps, reps, RngStream(1004, 0))
    fin = taus[np.isfinite(taus)]
    window = (float(np.quantile(fin, 0.5)), float(np.quantile(fin, 0.99)))
    k_hat, err = fit_rate(curve, window)
    rel = abs(k_hat / KAPPA - 1.0)
    ok = rel < 0.10
    # doubled resolution: bias must not grow (reduced replicas; the L=64 bias
    # is itself ~1 sigma at this budget, so this is a non-inferiority check)
    u0b = make_field(constant_profile(0.5), 128, 130)
    curve_b, taus_b, _ = survival_curve(u0b, P11, cps, 1200,
                                        RngStream(1004, 1 << 40))
    fin_b = taus_b[np.isfinite(taus_b)]
    k_hat_b, err_b = fit_rate(curve_b, (float(np.quantile(fin_b, 0.5)),
                                        float(np.quantile(fin_b, 0.99))))
    shrink_ok = (abs(k_hat_b - KAPPA)
                 <= abs(k_hat - KAPPA) + 3 * math.hypot(err, err_b))
    report("criterion 4 (field fixation rate)", ok and shrink_ok,
           f"L=64: kappa_hat {k_hat:.4f} +- {err:.4f} vs {KAPPA:.4f} "
           f"(rel {rel * 100:.2f}% < 10%); L=128: {k_hat_b:.4f} +- {err_b:.4f}"
           f" (bias non-increase: {shrink_ok})")


def test_criterion_5_well_mixed_anchors():
    from fkpp_qsd.wf import WfParams, wf_ensemble_final

    reps, M_wf, gamma = 100_000, 1024, 1.0
    cps = [0.25 * k for k in range(4, 17)]  # 1.0 .. 4.0
    finals, absorbed, alive = wf_ensemble_final(
        0.5, WfParams(0.0, gamma), RngStream(1005, 0), 4.0, reps, M_wf,
        checkpoints=cps)
    curve = SurvivalCurve(np.array(cps), alive.mean(axis=0), reps)
    k_hat, err = fit_rate(curve, (1.0, 4.0))
    rate_ok = abs(k_hat - gamma) < 0.05 * gamma

    # survivor law at gamma*t = 3 (survivors of the 4.0 horizon ensemble are
    # conditioned further than needed, so draw a dedicated t = 3 ensemble)
    finals3, absorbed3, _ = wf_ensemble_final(
        0.5, WfParams(0.0, gamma), RngStream(1005, 1 << 40), 3.0, reps, M_wf)
    surv = finals3[~absorbed3]
    ks = kstest(surv, "uniform").statistic
    ks_ok = ks < 0.05

    # amplitude: P(tau > t) e^t within a 99% CI of 6*x(1-x)|_{x=1/2} = 1.5
    amp_ok = True
    amp_detail = []
    for t in (2.0, 3.0, 4.0):
        j = cps.index(t)
        p = curve.surviving_fraction[j]
        se = math.sqrt(p * (1 - p) / reps)
        val, band = p * math.exp(t), 2.576 * se * math.exp(t)
        amp_ok &= abs(val - 1.5) < band
        amp_detail.append(f"t={t}: {val:.3f}+-{band:.3f}")
    report("criterion 5 (well-mixed anchors)", rate_ok and ks_ok and amp_ok,
           f"kappa_hat {k_hat:.4f} (|err|<5%: {rate_ok}); KS {ks:.4f} < 0.05: "
           f"{ks_ok}; amplitude vs 1.5: {'; '.join(amp_detail)}")


def test_criterion_6_duality_battery():
    cfg = parse_config("""
experiment: duality-check
alpha: 1.0
gamma: 1.0
L: 48
M: 49
replicas: 10000
seed: 1006
""")
    rows, reports = run_duality_battery(cfg)
    n_bad = sum(1 for _, _, _, z in rows if z > 3.0)
    # the t = 0 members of each case family are exact to floating point
    exact_ok = True
    for case in default_duality_battery()[:3]:
        from fkpp_qsd.experiments import build_u0
        from fkpp_qsd.qsdlab import duality_check

        u0 = build_u0(case["u0"], 48, 49)
        z0 = DualConfiguration(case["z0"]["greens"], case["z0"]["reds"])
        rep = duality_check(u0, z0, 0.0, P11, 10, RngStream(1006, 99))
        exact_ok &= rep.lhs == rep.rhs == eval_E(u0, z0) and rep.z_score == 0.0
    ok = n_bad <= 1 and exact_ok
    zs = ", ".join(f"{z:.2f}" for _, _, _, z in rows)
    report("criterion 6 (duality battery)", ok,
           f"{n_bad}/12 cases above z=3 (allow 1); z-scores: {zs}; "
           f"t=0 exact: {exact_ok}")


def test_criterion_7_stationary_two_point_law():
    eigen = fixation_rate(P11)
    best, trend = entrance_moment("circle", [8, 16, 32, 64], P11, eigen,
                                  3000, RngStream(1007, 0), L=128)
    eigen = mstar_from_entrance(best.estimate, best.stderr, eigen)
    u0 = make_field(constant_profile(0.5), 64, 65)
    probes = (0.0, 0.25, 0.5, 0.75)
    dists = (0.0, 0.1, 0.25, 0.5)
    est, (k_fv, k_err) = fleming_viot(u0, P11, 128, 20.0, 40.0,
                                      RngStream(1007, 1 << 40),
                                      probe_points=probes,
                                      probe_distances=dists)
    one_ok = True
    one_detail = []
    for x in probes:
        e = est[f"mean_u@{x}"]
        z = abs(e.value - 0.5) / e.stderr
        one_ok &= z < 3.0
        one_detail.append(f"{z:.2f}")
    two_ok = True
    two_detail = []
    for d in dists:
        e = est[f"twopoint@{d}"]
        ana = float(right_efn_two_particle(d, eigen))
        ana_err = abs(ana) * eigen.M_star_stderr / eigen.M_star
        z = abs(e.value - ana) / math.hypot(e.stderr, ana_err)
        two_ok &= z < 3.0
        two_detail.append(f"d={d}: {e.value:.4f} vs {ana:.4f} (z={z:.2f})")
    report("criterion 7 (stationary two-point law)", one_ok and two_ok,
           f"E_S={best.estimate:.3f}+-{best.stderr:.3f}, "
           f"M*={eigen.M_star:.4f}; one-point z: {', '.join(one_detail)}; "
           f"{'; '.join(two_detail)}")


def test_criterion_8_pair_martingale():
    eigen = mstar_from_entrance(1.0, 0.0, fixation_rate(P11))
    z0 = DualConfiguration([0.0], [0.0])
    cps = [0.0, 0.25, 0.5, 1.0]
    dists = pair_checkpoint_ensemble(z0, P11, cps, 100_000,
                                     RngStream(1008, 0), L=64)
    rows = martingale_functional(cps, dists, eigen)
    ref = float(right_efn_two_particle(0.0, eigen))
    ok = rows[0]["mean"] == ref
    detail = []
    for row in rows[1:]:
        z = abs(row["mean"] - ref) / row["stderr"]
        ok &= z < 3.0
        detail.append(f"t={row['t']}: {row['mean']:.4f} (z={z:.2f})")
    report("criterion 8 (pair martingale)", ok,
           f"reference {ref:.4f}; " + "; ".join(detail))


def test_criterion_9_drift_bracket_and_rescaling():
    u0 = make_field(constant_profile(0.5), 32, 33)
    rep = girsanov_check(u0, ModelParams(1.0, 1.0, 1.0), 1.0, 4000,
                         RngStream(1009, 0))
    bracket_ok = rep["lower_ok"] and rep["upper_ok"]
    kernel_ok = True
    ell = 2.0
    for t, x, y in [(0.05, 0.1, 0.7), (0.4, 0.0, 0.3), (1.3, 0.8, 0.25)]:
        lhs = heat_kernel(t, x, y, 1.0)
        rhs = ell * heat_kernel(ell * ell * t, ell * x, ell * y, 1.0,
                                circumference=ell)
        kernel_ok &= abs(lhs - rhs) < 1e-12
    report("criterion 9 (drift bracket + rescaling identity)",
           bracket_ok and kernel_ok,
           f"P^b {rep['p_beta']:.4f} in [{rep['lower_factor']:.3f}, "
           f"{rep['upper_factor']:.3f}] x P^0 {rep['p_neutral']:.4f} "
           f"(3sigma): {bracket_ok}; kernel identity 1e-12: {kernel_ok}")


def test_criterion_10_monotonicity_suite():
    # (a) kappa strictly increasing in alpha toward gamma
    gamma = 1.0
    alphas = np.logspace(-2, 3, 60)
    kappas = [fixation_rate(ModelParams(float(a), 0.0, gamma)).kappa
              for a in alphas]
    mono_ok = all(a < b for a, b in zip(kappas, kappas[1:])) and kappas[-1] < gamma

    # (b) entrance moments ordered in the set within CIs
    eigen = fixation_rate(P11)
    n_grid = [16]
    e1, _ = entrance_moment([0.0], n_grid, P11, eigen, 1500,
                            RngStream(1010, 0), L=64)
    e2, _ = entrance_moment([0.0, 0.5], n_grid, P11, eigen, 1500,
                            RngStream(1010, 1), L=64)
    e3, _ = entrance_moment("circle", n_grid, P11, eigen, 1500,
                            RngStream(1010, 2), L=64)
    slack12 = 3 * math.hypot(e1.stderr, e2.stderr)
    slack23 = 3 * math.hypot(e2.stderr, e3.stderr)
    entr_ok = (e1.estimate <= e2.estimate + slack12
               and e2.estimate <= e3.estimate + slack23)

    # (c) particle count non-increasing path-wise at beta = 0
    cps = np.linspace(0.05, 0.5, 8)
    count_ok = True
    for r in range(200):
        res = colour_blind_run([i / 9 for i in range(9)], P11, 0.5,
                               RngStream(1010, (1 << 20) + r), L=64,
                               checkpoints=cps)
        ns = res.series_green + res.series_red
        count_ok &= all(a >= b for a, b in zip(ns, ns[1:]))

    # (d) E[N_1]/n decreasing in n at beta = 1
    pb = ModelParams(1.0, 1.0, 1.0)
    ratios = []
    for j, n in enumerate((50, 100, 200)):
        tot = 0
        reps = 400
        for r in range(reps):
            res = colour_blind_run([i / n for i in range(n)], pb, 1.0,
                                   RngStream(1010, (j + 2 << 20) + r), L=64)
            tot += res.n_green + res.n_red
        ratios.append(tot / reps / n)
    conc_ok = ratios[0] > ratios[1] > ratios[2]

    report("criterion 10 (monotonicity suite)",
           mono_ok and entr_ok and count_ok and conc_ok,
           f"kappa(alpha) monotone to gamma: {mono_ok}; entrance moments "
           f"{e1.estimate:.3f} <= {e2.estimate:.3f} <= {e3.estimate:.3f} "
           f"(CIs): {entr_ok}; counts non-increasing: {count_ok}; "
           f"E[N_1]/n {', '.join(f'{r:.3f}' for r in ratios)} decreasing: "
           f"{conc_ok}")
