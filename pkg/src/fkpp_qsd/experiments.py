"""Named experiment drivers: each consumes a validated ExperimentConfig,
runs the relevant estimators, and emits plot-ready CSV files plus a
run_manifest.json.  Data files are byte-deterministic for identical
(config, seed) regardless of worker count; the manifest records wall time
and environment and is excluded from that guarantee.
"""

from __future__ import annotations

import json
import math
import os
import time

import numpy as np

from . import __version__, _kernels
from .config import ExperimentConfig
from .dual import (DualConfiguration, martingale_functional,
                   pair_checkpoint_ensemble)
from .engine import (LatticeField, constant_profile, interval_profile,
                     make_field, run_to_fixation, step_profile)
from .params import ModelParams, default_resolution
from .qsdlab import (DualityReport, SurvivalCurve, duality_check,
                     entrance_moment, fit_rate, fleming_viot, girsanov_check,
                     survival_curve)
from .rng import RngStream
from .spectral import (fixation_rate, local_fixation_prob,
                       mstar_from_entrance, right_efn_two_particle,
                       theta_star)
from .wf import WfParams, wf_ensemble_final


def build_u0(spec: dict, L: int, M: int) -> LatticeField:
    kind = spec["kind"]
    if kind == "constant":
        prof = constant_profile(spec["value"])
    elif kind == "step":
        prof = step_profile(spec["edge"])
    else:
        prof = interval_profile(spec["a"], spec["b"])
    return make_field(prof, L, M)


def _fmt(x) -> str:
    if isinstance(x, float):
        if math.isinf(x):
            return "inf"
        return f"{x:.10g}"
    return str(x)


def write_csv(path: str, header: list, rows: list, cfg_hash: str, seed: int):
    with open(path, "w") as fh:
        fh.write(f"# config_hash={cfg_hash} seed={seed}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _survival_rows(curve: SurvivalCurve):
    lo, hi = curve.ci()
    return [(t, f, l, h) for t, f, l, h in
            zip(curve.times, curve.surviving_fraction, lo, hi)]


# ---------------------------------------------------------------------------
# individual experiments
# ---------------------------------------------------------------------------

def _exp_analytics_table(cfg: ExperimentConfig, outdir, h, files):
    alphas = cfg.extra.get("alpha_grid")
    gammas = cfg.extra.get("gamma_grid")
    if alphas is None and gammas is None:
        alphas = list(np.logspace(-2, 2, 41))
    alphas = [float(a) for a in (alphas or [cfg.params.alpha])]
    gammas = [float(g) for g in (gammas or [cfg.params.gamma])]
    rows = []
    for g in gammas:
        for a in alphas:
            th = theta_star(g / a)
            kappa = 4.0 * a * th * th
            rows.append((a, g, th, kappa, math.exp(-kappa),
                         th / math.sin(th)))
    path = os.path.join(outdir, "analytics.csv")
    write_csv(path, ["alpha", "gamma", "theta_star", "kappa", "lambda", "A"],
              rows, h, cfg.seed)
    files.append(path)


def _default_checkpoints(cfg: ExperimentConfig):
    if cfg.checkpoints:
        return list(cfg.checkpoints)
    n = 16
    return [cfg.horizon * (k + 1) / n for k in range(n)]


def _write_trajectories(cfg, outdir, h, files, taus, sides, mean_u0):
    rows = []
    for r, (tau, side) in enumerate(zip(taus, sides)):
        label = {0: "all-zero", 1: "all-one"}.get(int(side), "none")
        rows.append((r, float(tau), label, mean_u0))
    path = os.path.join(outdir, "trajectories.csv")
    write_csv(path, ["replica", "tau_fix", "absorbed_side", "mean_u0"],
              rows, h, cfg.seed)
    files.append(path)


def _write_snapshots(cfg, outdir, h, files, u0):
    ids = cfg.extra.get("snapshot_replicas") or []
    times = [float(t) for t in (cfg.extra.get("snapshot_times") or [])]
    if not ids or not times:
        return
    master = RngStream(cfg.seed, 0)
    for rid in ids:
        stream = RngStream(master.master_seed, int(rid))
        _, traj = run_to_fixation(u0.copy(), cfg.params, stream, cfg.horizon,
                                  snapshot_times=times)
        rows = []
        for t in times:
            snap = traj.snapshots.get(t)
            if snap is None:
                continue
            for i, v in enumerate(snap):
                rows.append((t, i, float(v)))
        path = os.path.join(outdir, f"snapshots_r{int(rid)}.csv")
        write_csv(path, ["t", "site_index", "u"], rows, h, cfg.seed)
        files.append(path)


def _exp_survival(cfg: ExperimentConfig, outdir, h, files, with_fit: bool):
    u0 = build_u0(cfg.extra["u0"], cfg.L, cfg.M)
    cps = _default_checkpoints(cfg)
    master = RngStream(cfg.seed, 0)
    curve, taus, sides = survival_curve(u0, cfg.params, cps, cfg.replicas,
                                        master, workers=cfg.workers)
    path = os.path.join(outdir, "survival.csv")
    write_csv(path, ["t", "fraction", "ci_low", "ci_high"],
              _survival_rows(curve), h, cfg.seed)
    files.append(path)
    _write_trajectories(cfg, outdir, h, files, taus, sides, u0.spatial_mean())
    _write_snapshots(cfg, outdir, h, files, u0)
    if with_fit:
        finite = taus[np.isfinite(taus)]
        window = cfg.extra.get("fit_window")
        if window is None:
            window = (float(np.quantile(finite, 0.5)),
                      float(np.quantile(finite, 0.99)))
        kappa_hat, err = fit_rate(curve, window)
        analytic = (fixation_rate(cfg.params).kappa
                    if cfg.params.beta == 0.0 else float("nan"))
        path = os.path.join(outdir, "rates.csv")
        write_csv(path, ["method", "kappa_hat", "stderr", "kappa_analytic"],
                  [("survival-fit", kappa_hat, err, analytic)], h, cfg.seed)
        files.append(path)


def _exp_qsd_twopoint(cfg: ExperimentConfig, outdir, h, files):
    if cfg.params.beta != 0.0:
        raise ValueError("the stationary two-point experiment requires beta=0")
    eigen = fixation_rate(cfg.params)
    master = RngStream(cfg.seed, 0)
    n_grid = [int(n) for n in cfg.extra.get("entrance_n_grid", (8, 16, 32, 64))]
    ent_reps = int(cfg.extra.get("entrance_replicas", 4000))
    dual_L = int(cfg.extra.get("dual_L", 128))
    best, trend = entrance_moment("circle", n_grid, cfg.params, eigen,
                                  ent_reps, master, L=dual_L,
                                  workers=cfg.workers)
    eigen = mstar_from_entrance(best.estimate, best.stderr, eigen)

    u0 = build_u0(cfg.extra["u0"], cfg.L, cfg.M)
    n_ens = int(cfg.extra.get("n_ensemble", 128))
    burn = float(cfg.extra.get("burn_in", cfg.horizon / 2.0))
    probes = tuple(cfg.extra.get("probe_points", (0.0, 0.25, 0.5, 0.75)))
    dists = tuple(cfg.extra.get("probe_distances", (0.0, 0.1, 0.25, 0.5)))
    est, (k_fv, k_err) = fleming_viot(u0, cfg.params, n_ens, burn,
                                      cfg.horizon, master.child(1 << 40),
                                      probe_points=probes,
                                      probe_distances=dists)
    rows = []
    for d in dists:
        e = est[f"twopoint@{d}"]
        rows.append((d, e.value, e.stderr,
                     float(right_efn_two_particle(d, eigen))))
    path = os.path.join(outdir, "qsd_twopoint.csv")
    write_csv(path, ["d", "estimate", "stderr", "analytic"], rows, h, cfg.seed)
    files.append(path)

    rows = [(x, est[f"mean_u@{x}"].value, est[f"mean_u@{x}"].stderr, 0.5)
            for x in probes]
    path = os.path.join(outdir, "qsd_onepoint.csv")
    write_csv(path, ["x", "estimate", "stderr", "analytic"], rows, h, cfg.seed)
    files.append(path)

    rows = [("fv-replacement", k_fv, k_err, eigen.kappa),
            ("entrance-moment-E_S", best.estimate, best.stderr, float("nan")),
            ("M_star", eigen.M_star, eigen.M_star_stderr, float("nan"))]
    path = os.path.join(outdir, "rates.csv")
    write_csv(path, ["method", "kappa_hat", "stderr", "kappa_analytic"],
              rows, h, cfg.seed)
    files.append(path)


def default_duality_battery(t_grid=(0.05, 0.2)):
    """12 cases: beta in {0,1} x t in t_grid x three (u0, z0) shapes with at
    most 3 particles of each colour."""
    shapes = [
        ({"kind": "constant", "value": 0.3},
         {"greens": [0.2], "reds": [0.7]}),
        ({"kind": "step", "edge": 0.5},
         {"greens": [0.1, 0.6], "reds": [0.35]}),
        ({"kind": "constant", "value": 0.5},
         {"greens": [0.0, 0.33, 0.66], "reds": [0.15, 0.8]}),
    ]
    cases = []
    for beta in (0.0, 1.0):
        for t in t_grid:
            for u0_spec, z0_spec in shapes:
                cases.append({"beta": beta, "t": float(t),
                              "u0": u0_spec, "z0": z0_spec})
    return cases


def run_duality_battery(cfg: ExperimentConfig, cases=None):
    """Run each case at (L, M) and at (L/2, M) to price the lattice bias;
    returns rows (case_id, lhs, rhs, z) and the full reports."""
    master = RngStream(cfg.seed, 0)
    cases = cases or default_duality_battery(
        tuple(cfg.extra.get("t_grid", (0.05, 0.2))))
    rows, reports = [], []
    for idx, case in enumerate(cases):
        params = ModelParams(cfg.params.alpha, case["beta"], cfg.params.gamma)
        z0 = DualConfiguration(case["z0"]["greens"], case["z0"]["reds"])
        L2 = max(8, cfg.L // 2)
        _, M2 = default_resolution(params, L2)
        M2 = max(M2, cfg.M)
        u0 = build_u0(case["u0"], cfg.L, cfg.M)
        u0_h = build_u0(case["u0"], L2, M2)
        base = master.child(idx << 16)
        rep_full = duality_check(u0, z0, case["t"], params, cfg.replicas,
                                 base, L=cfg.L, workers=cfg.workers)
        rep_half = duality_check(u0_h, z0, case["t"], params,
                                 max(500, cfg.replicas // 4),
                                 base.child(1 << 15), L=L2,
                                 workers=cfg.workers)
        budget = (abs(rep_full.lhs - rep_half.lhs)
                  + abs(rep_full.rhs - rep_half.rhs))
        final = DualityReport.build(rep_full.lhs, rep_full.lhs_stderr,
                                    rep_full.rhs, rep_full.rhs_stderr,
                                    bias=budget, cb_lhs=rep_full.cb_lhs,
                                    cb_rhs=rep_full.cb_rhs, cb_z=rep_full.cb_z)
        rows.append((idx, final.lhs, final.rhs, final.z_score))
        reports.append(final)
    return rows, reports


def _exp_duality(cfg: ExperimentConfig, outdir, h, files):
    rows, _ = run_duality_battery(cfg)
    path = os.path.join(outdir, "duality.csv")
    write_csv(path, ["case_id", "lhs", "rhs", "z"], rows, h, cfg.seed)
    files.append(path)


def _exp_wf_reference(cfg: ExperimentConfig, outdir, h, files):
    x0 = float(cfg.extra.get("x0", 0.5))
    M_wf = int(cfg.extra.get("M_wf", 100))
    gamma = cfg.params.gamma
    wfp = WfParams(beta=cfg.params.beta, gamma=gamma)
    cps = cfg.checkpoints or [k * 0.25 / gamma for k in range(1, 17)]
    t_end = max(max(cps), float(cfg.extra.get("histogram_time", 3.0 / gamma)))
    master = RngStream(cfg.seed, 0)
    finals, absorbed, alive = wf_ensemble_final(
        x0, wfp, master, t_end, cfg.replicas, M_wf, checkpoints=cps)
    frac = alive.mean(axis=0)
    curve = SurvivalCurve(np.array(cps), frac, cfg.replicas)
    lo, hi = curve.ci()
    rows = [(x0, t, f, l, u) for t, f, l, u in zip(cps, frac, lo, hi)]
    path = os.path.join(outdir, "survival.csv")
    write_csv(path, ["x0", "t", "survival_fraction", "ci_low", "ci_high"],
              rows, h, cfg.seed)
    files.append(path)

    nbins = int(cfg.extra.get("histogram_bins", 20))
    survivors = finals[~absorbed]
    hist, edges = np.histogram(survivors, bins=nbins, range=(0.0, 1.0))
    mass = hist / max(len(survivors), 1)
    rows = [(edges[i], edges[i + 1], mass[i]) for i in range(nbins)]
    path = os.path.join(outdir, "histogram.csv")
    write_csv(path, ["bin_left", "bin_right", "mass"], rows, h, cfg.seed)
    files.append(path)

    window = cfg.extra.get("fit_window") or (1.0 / gamma, 3.5 / gamma)
    kappa_hat, err = fit_rate(curve, window)
    path = os.path.join(outdir, "rates.csv")
    write_csv(path, ["method", "kappa_hat", "stderr", "kappa_analytic"],
              [("survival-fit", kappa_hat, err, gamma)], h, cfg.seed)
    files.append(path)


def _exp_martingale(cfg: ExperimentConfig, outdir, h, files):
    if cfg.params.beta != 0.0:
        raise ValueError("the martingale check requires beta = 0")
    z0_spec = cfg.extra.get("z0") or {"greens": [0.0], "reds": [0.0]}
    z0 = DualConfiguration(z0_spec["greens"], z0_spec["reds"])
    cps = cfg.checkpoints or [0.0, 0.25, 0.5, 1.0]
    dual_L = int(cfg.extra.get("dual_L", 64))
    # the eigenfunction scale cancels between both sides; unit normalization
    eigen = mstar_from_entrance(1.0, 0.0, fixation_rate(cfg.params))
    master = RngStream(cfg.seed, 0)
    dists = pair_checkpoint_ensemble(z0, cfg.params, cps, cfg.replicas,
                                     master, L=dual_L)
    rows_m = martingale_functional(cps, dists, eigen)
    d0 = abs(z0.greens[0] - z0.reds[0])
    d0 = min(d0, 1.0 - d0)
    ref = float(right_efn_two_particle(d0, eigen))
    rows = [(r["t"], r["mean"], r["stderr"], ref) for r in rows_m]
    path = os.path.join(outdir, "martingale.csv")
    write_csv(path, ["t", "mean", "stderr", "reference"], rows, h, cfg.seed)
    files.append(path)


def _exp_local_fixation(cfg: ExperimentConfig, outdir, h, files):
    if cfg.params.beta != 0.0:
        raise ValueError("local-fixation estimates require beta = 0")
    eigen = fixation_rate(cfg.params)
    F = cfg.extra.get("F", [0.0])
    n_grid = [int(n) for n in cfg.extra.get("entrance_n_grid", (8, 16, 32, 64))]
    reps = int(cfg.extra.get("entrance_replicas", 4000))
    dual_L = int(cfg.extra.get("dual_L", 128))
    master = RngStream(cfg.seed, 0)
    best_F, _ = entrance_moment(F, n_grid, cfg.params, eigen, reps, master,
                                L=dual_L, workers=cfg.workers)
    best_S, _ = entrance_moment("circle", n_grid, cfg.params, eigen, reps,
                                master.child(1 << 30), L=dual_L,
                                workers=cfg.workers)
    e_f = min(best_F.estimate, best_S.estimate)
    probs = local_fixation_prob(max(1.0, e_f), max(1.0, best_S.estimate))
    rows = [("F", best_F.estimate, best_F.stderr,
             probs["not_fixed"], probs["zero_on_F"]),
            ("circle", best_S.estimate, best_S.stderr, 1.0, 0.0)]
    path = os.path.join(outdir, "local_fixation.csv")
    write_csv(path, ["set", "entrance_moment", "stderr", "not_fixed",
                     "zero_on_F"], rows, h, cfg.seed)
    files.append(path)


def _exp_girsanov(cfg: ExperimentConfig, outdir, h, files):
    if cfg.params.beta <= 0.0:
        raise ValueError("the drift bracket check requires beta > 0")
    u0 = build_u0(cfg.extra["u0"], cfg.L, cfg.M)
    master = RngStream(cfg.seed, 0)
    rep = girsanov_check(u0, cfg.params, cfg.horizon, cfg.replicas, master,
                         workers=cfg.workers)
    rows = [(k, float(v) if not isinstance(v, bool) else int(v))
            for k, v in rep.items()]
    path = os.path.join(outdir, "girsanov.csv")
    write_csv(path, ["field", "value"], rows, h, cfg.seed)
    files.append(path)


_DISPATCH = {
    "analytics-table": _exp_analytics_table,
    "fixation-rate": lambda c, o, h, f: _exp_survival(c, o, h, f, True),
    "survival-curve": lambda c, o, h, f: _exp_survival(c, o, h, f, False),
    "qsd-twopoint": _exp_qsd_twopoint,
    "duality-check": _exp_duality,
    "wf-reference": _exp_wf_reference,
    "martingale-check": _exp_martingale,
    "local-fixation": _exp_local_fixation,
    "girsanov-check": _exp_girsanov,
}


def run_experiment(cfg: ExperimentConfig) -> int:
    """Execute one experiment; returns a process exit status."""
    outdir = cfg.output_dir
    os.makedirs(outdir, exist_ok=True)
    h = cfg.config_hash()
    files = []
    t0 = time.time()
    try:
        _DISPATCH[cfg.experiment](cfg, outdir, h, files)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        manifest = {
            "status": "error", "error": f"{type(exc).__name__}: {exc}",
            "config": cfg.echo_dict(), "config_hash": h,
        }
        with open(os.path.join(outdir, "run_manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, default=float)
        raise
    manifest = {
        "status": "ok",
        "config": cfg.echo_dict(),
        "config_hash": h,
        "seed": cfg.seed,
        "outputs": [os.path.basename(p) for p in files],
        "version": __version__,
        "backend": _kernels.backend_name(),
        "numpy": np.__version__,
        "wall_time_s": round(time.time() - t0, 3),
    }
    with open(os.path.join(outdir, "run_manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, default=float)
    return 0
