"""Estimators tying the simulators to the closed-form theory: survival
curves and rate fits, the resampled-ensemble stationary estimator, entrance
exponential moments, the forward/dual consistency harness, and the
change-of-drift bracket check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .circle import canon
from .dual import DualConfiguration, run_dual
from .engine import LatticeField, run_to_fixation
from .params import ModelParams, check_stability, time_step
from .parallel import chunked_map
from .rng import RngStream, substream_base
from .spectral import EigenSolution


# ---------------------------------------------------------------------------
# dual functions
# ---------------------------------------------------------------------------

def _value_at(f, x: float) -> float:
    if isinstance(f, LatticeField):
        return f.value_at(x)
    v = float(f(canon(x)))
    return v


def eval_D(f, points) -> float:
    """Product of (1 - f(x_i)) over the point multiset; f is a lattice field
    (nearest-site lookup) or a callable profile."""
    out = 1.0
    for x in points:
        out *= 1.0 - _value_at(f, x)
    return out


def eval_E(f, z: DualConfiguration) -> float:
    """Two-colour moment functional: prod_greens(1-f) * (1 - prod_reds(1-f))."""
    if not z.greens or not z.reds:
        return 0.0
    return eval_D(f, z.greens) * (1.0 - eval_D(f, z.reds))


# ---------------------------------------------------------------------------
# survival curves and rate fitting
# ---------------------------------------------------------------------------

@dataclass
class SurvivalCurve:
    times: np.ndarray
    surviving_fraction: np.ndarray
    replica_count: int

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.surviving_fraction = np.asarray(self.surviving_fraction, dtype=float)
        if np.any(np.diff(self.surviving_fraction) > 1e-12):
            raise ValueError("surviving fraction must be non-increasing")

    def counts(self) -> np.ndarray:
        return np.rint(self.surviving_fraction * self.replica_count).astype(int)

    def ci(self, z: float = 1.96):
        """Normal-approximation binomial band, clipped to [0, 1]."""
        p = self.surviving_fraction
        se = np.sqrt(p * (1.0 - p) / self.replica_count)
        return np.clip(p - z * se, 0.0, 1.0), np.clip(p + z * se, 0.0, 1.0)


def _survival_chunk(lo, hi, payload):
    params = ModelParams(*payload["params"])
    field = LatticeField(payload["demes"].copy(), payload["M"])
    cps = payload["checkpoints"]
    t_max = payload["t_max"]
    alive = np.zeros((hi - lo, len(cps)), dtype=bool)
    taus = np.full(hi - lo, np.inf)
    sides = np.full(hi - lo, -1, dtype=np.int8)
    for r in range(lo, hi):
        stream = RngStream(payload["seed"], payload["stream_base"] + r)
        outcome, traj = run_to_fixation(field.copy(), params, stream, t_max,
                                        checkpoints=cps,
                                        engine=payload["engine"])
        filled = {t: a for t, a in zip(traj.checkpoint_times, traj.alive)}
        alive[r - lo] = [filled[t] for t in cps]
        if outcome.tau_fix is not None:
            taus[r - lo] = outcome.tau_fix
            sides[r - lo] = 0 if outcome.absorbed_state == "all-zero" else 1
    return alive, taus, sides


def survival_curve(u0: LatticeField, params: ModelParams, checkpoints,
                   replicas: int, master: RngStream, *,
                   engine: str = "stepping", workers: int = 1,
                   stream_kind: int = 0):
    """Empirical P(fixation time > t) at the checkpoints over independent
    replicas (recommended >= 1000 for meaningful tails).

    Returns (SurvivalCurve, taus, sides); taus is inf where the run was
    censored at max(checkpoints).
    """
    check_stability(params, u0.L, u0.M)
    cps = sorted(float(t) for t in checkpoints)
    payload = {
        "demes": u0.demes, "M": u0.M,
        "params": (params.alpha, params.beta, params.gamma),
        "checkpoints": cps, "t_max": max(cps), "engine": engine,
        "seed": master.master_seed,
        "stream_base": master.stream_id + substream_base(stream_kind),
    }
    parts = chunked_map(_survival_chunk, replicas, payload, workers)
    alive = np.concatenate([p[0] for p in parts])
    taus = np.concatenate([p[1] for p in parts])
    sides = np.concatenate([p[2] for p in parts])
    curve = SurvivalCurve(np.array(cps), alive.mean(axis=0), replicas)
    return curve, taus, sides


def fit_rate(curve: SurvivalCurve, window) -> tuple[float, float]:
    """Decay-rate fit: generalized least squares of log P(t) on t inside the
    window, with the nested-indicator binomial covariance
    Cov(log P_s, log P_t) ~= (1 - P_s) / (N P_s) for s <= t.

    Returns (kappa_hat, stderr); requires >= 4 checkpoints in the window each
    with >= 30 survivors.
    """
    lo, hi = window
    mask = (curve.times >= lo) & (curve.times <= hi)
    counts = curve.counts()
    usable = mask & (counts >= 30)
    if usable.sum() < 4:
        raise ValueError(
            f"fit window [{lo}, {hi}] has {int(usable.sum())} usable "
            f"checkpoints (need >= 4 with >= 30 survivors)")
    t = curve.times[usable]
    p = curve.surviving_fraction[usable]
    n = curve.replica_count
    m = len(t)
    cov = np.empty((m, m))
    for i in range(m):
        for j in range(m):
            s = min(i, j)
            cov[i, j] = (1.0 - p[s]) / (n * p[s])
    y = np.log(p)
    X = np.column_stack([np.ones(m), t])
    cinv = np.linalg.inv(cov)
    A = X.T @ cinv @ X
    beta = np.linalg.solve(A, X.T @ cinv @ y)
    var = np.linalg.inv(A)[1, 1]
    return float(-beta[1]), float(math.sqrt(max(var, 0.0)))


def sandwich_constants(curve: SurvivalCurve, kappa_hat: float):
    """Empirical envelope constants c, C with c*exp(-kt) <= P(t) <= C*exp(-kt)
    over the observed checkpoints (shape check of the two-sided bound)."""
    lam = np.exp(-kappa_hat * curve.times)
    pos = curve.surviving_fraction > 0
    ratios = curve.surviving_fraction[pos] / lam[pos]
    return float(ratios.min()), float(ratios.max())


# ---------------------------------------------------------------------------
# resampled-ensemble stationary estimator
# ---------------------------------------------------------------------------

@dataclass
class EnsembleEstimate:
    functional_id: str
    value: float
    stderr: float
    conditioning: str  # "on-survival" | "fv-stationary"

    def __post_init__(self):
        if self.stderr < 0 or not math.isfinite(self.value):
            raise ValueError("estimate must be finite with nonnegative stderr")


def _batch_stderr(series: np.ndarray, n_batches: int = 20) -> float:
    """Batch-means standard error for an autocorrelated stationary series."""
    series = np.asarray(series, dtype=float)
    m = len(series) // n_batches
    if m < 1:
        return float(series.std(ddof=1) / math.sqrt(max(len(series) - 1, 1)))
    means = series[: m * n_batches].reshape(n_batches, m).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def fleming_viot(u0: LatticeField, params: ModelParams, n_replicas: int,
                 burn_in: float, horizon: float, rng: RngStream, *,
                 probe_points=(0.0, 0.25, 0.5, 0.75),
                 probe_distances=(0.0, 0.1, 0.25, 0.5),
                 sample_every_steps: Optional[int] = None):
    """Conditioned-stationary estimator: n_replicas coupled copies where each
    fixated copy is replaced by a duplicate of a uniformly chosen survivor.

    After the burn-in, stationary functionals are sampled: one-point means at
    probe_points, the two-point functional E[(1-u(x))u(y)] at the probe
    distances (site-averaged), and the variance of the spatial mean.  The
    decay-rate estimate is replacements / (n_replicas * elapsed).  Standard
    errors use batch means (20 batches).

    Returns (dict of EnsembleEstimate, (kappa_hat, kappa_stderr)).
    """
    if n_replicas < 2:
        raise ValueError("need at least 2 ensemble copies")
    check_stability(params, u0.L, u0.M)
    delta = time_step(params, u0.L, u0.M)
    n_steps = int(round(horizon / delta))
    burn_steps = int(round(burn_in / delta))
    if sample_every_steps is None:
        sample_every_steps = max(1, int(round(0.01 / delta)))
    L = u0.L
    states = np.tile(u0.demes, (n_replicas, 1)).astype(np.int64)
    mig = params.alpha * delta * L * L / 2.0
    sel = params.beta * delta
    sites = np.array([int(round(canon(x) * L)) % L for x in probe_points],
                     dtype=np.int64)
    offsets = np.array([int(round(d * L)) % L for d in probe_distances],
                       dtype=np.int64)
    res = _kernels.resampled_ensemble_run(
        states, u0.M, mig, sel, n_steps, burn_steps, sample_every_steps,
        sites, offsets, rng.bit_generator())

    out = {}
    for j, x in enumerate(probe_points):
        series = res["onept"][:, j]
        out[f"mean_u@{x}"] = EnsembleEstimate(
            f"mean_u@{x}", float(series.mean()), _batch_stderr(series),
            "fv-stationary")
    for j, d in enumerate(probe_distances):
        series = res["twopt"][:, j]
        out[f"twopoint@{d}"] = EnsembleEstimate(
            f"twopoint@{d}", float(series.mean()), _batch_stderr(series),
            "fv-stationary")
    m1 = res["meanstats"][:, 0]
    m2 = res["meanstats"][:, 1]
    var_series = m2 - m1 * m1
    out["var_spatial_mean"] = EnsembleEstimate(
        "var_spatial_mean", float(var_series.mean()), _batch_stderr(var_series),
        "fv-stationary")

    elapsed = (n_steps - burn_steps) * delta
    kappa_hat = res["replaced_after_burn"] / (n_replicas * elapsed)
    # window replacement counts give the batch-means error of the rate
    rate_series = res["repl"] / (n_replicas * sample_every_steps * delta)
    kappa_err = _batch_stderr(rate_series) if len(rate_series) > 1 else float("nan")
    return out, (float(kappa_hat), float(kappa_err))


# ---------------------------------------------------------------------------
# entrance exponential moments
# ---------------------------------------------------------------------------

def entrance_points(F, n: int) -> list[float]:
    """n starting points cycling through the target closed set: the whole
    circle uses the equispaced n-grid; a finite set is cycled in order."""
    if F == "circle":
        return [i / n for i in range(n)]
    pts = [float(canon(x)) for x in F]
    if not pts:
        raise ValueError("F must be 'circle' or a non-empty point list")
    return [pts[i % len(pts)] for i in range(n)]


def _entrance_chunk(lo, hi, payload):
    params = ModelParams(*payload["params"])
    from .dual import colour_blind_run

    pts = payload["points"]
    taus = np.empty(hi - lo)
    for r in range(lo, hi):
        stream = RngStream(payload["seed"], payload["stream_base"] + r)
        res = colour_blind_run(pts, params, payload["t_max"], stream,
                               L=payload["L"], stop_at_tau_one=True)
        taus[r - lo] = res.tau_one
    return (taus,)


@dataclass
class EntranceMoment:
    n: int
    estimate: float
    stderr: float
    censored_fraction: float
    discarded_mass: float
    flagged: bool


def entrance_moment(F, n_grid, params: ModelParams, eigen: EigenSolution,
                    replicas: int, master: RngStream, *, L: int = 128,
                    t_max: float = 64.0, workers: int = 1,
                    stream_kind: int = 1):
    """Exponential moment E[exp(kappa * tau_one)] from n-particle starts
    cycling through F ("circle" or a point list), for each n in n_grid.

    Averaging truncates (winsorises) above the 99.9% sample quantile; an
    estimate is flagged when the discarded mass exceeds 1% or any run was
    censored at t_max.  Returns (largest-n EntranceMoment, per-n list); the
    per-n trend is the extrapolation diagnostic.
    """
    if params.beta != 0.0:
        raise ValueError("entrance moments are defined for beta = 0")
    results = []
    for gi, n in enumerate(sorted(n_grid)):
        pts = entrance_points(F, n)
        payload = {
            "points": pts, "params": (params.alpha, params.beta, params.gamma),
            "t_max": t_max, "L": L, "seed": master.master_seed,
            "stream_base": master.stream_id + substream_base(stream_kind)
            + (gi << 24),
        }
        parts = chunked_map(_entrance_chunk, replicas, payload, workers)
        taus = np.concatenate([p[0] for p in parts])
        censored = ~np.isfinite(taus)
        taus = np.where(censored, t_max, taus)
        vals = np.exp(eigen.kappa * taus)
        q = np.quantile(vals, 0.999)
        capped = np.minimum(vals, q)
        discarded = 1.0 - capped.sum() / vals.sum()
        est = float(capped.mean())
        err = float(capped.std(ddof=1) / math.sqrt(len(capped)))
        results.append(EntranceMoment(
            n=n, estimate=est, stderr=err,
            censored_fraction=float(censored.mean()),
            discarded_mass=float(discarded),
            flagged=bool(discarded > 0.01 or censored.any())))
    return results[-1], results


# ---------------------------------------------------------------------------
# forward/dual consistency
# ---------------------------------------------------------------------------

@dataclass
class DualityReport:
    lhs: float
    lhs_stderr: float
    rhs: float
    rhs_stderr: float
    z_score: float
    bias_budget: float = 0.0
    cb_lhs: float = float("nan")
    cb_rhs: float = float("nan")
    cb_z: float = float("nan")

    @staticmethod
    def build(lhs, lse, rhs, rse, bias=0.0, **kw):
        denom = math.sqrt(lse * lse + rse * rse)
        gap = max(0.0, abs(lhs - rhs) - bias)
        z = gap / denom if denom > 0 else (0.0 if gap == 0 else float("inf"))
        return DualityReport(lhs, lse, rhs, rse, z, bias, **kw)


def _duality_forward_chunk(lo, hi, payload):
    params = ModelParams(*payload["params"])
    field = LatticeField(payload["demes"].copy(), payload["M"])
    z0 = DualConfiguration(payload["z_greens"], payload["z_reds"])
    t = payload["t"]
    vals = np.zeros(hi - lo)
    dvals = np.zeros(hi - lo)
    for r in range(lo, hi):
        stream = RngStream(payload["seed"], payload["stream_base"] + r)
        outcome, traj = run_to_fixation(field.copy(), params, stream, t,
                                        snapshot_times=[t])
        u_t = traj.snapshots.get(t)
        ut_field = LatticeField(
            np.rint(u_t * payload["M"]).astype(np.int64), payload["M"])
        if outcome.tau_fix is None:
            vals[r - lo] = eval_E(ut_field, z0)
        dvals[r - lo] = eval_D(ut_field, payload["cb_points"])
    return vals, dvals


def _duality_dual_chunk(lo, hi, payload):
    params = ModelParams(*payload["params"])
    u0 = LatticeField(payload["demes"].copy(), payload["M"])
    z0 = DualConfiguration(payload["z_greens"], payload["z_reds"])
    t = payload["t"]
    vals = np.zeros(hi - lo)
    dvals = np.zeros(hi - lo)
    from .dual import colour_blind_run

    for r in range(lo, hi):
        stream = RngStream(payload["seed"], payload["stream_base"] + r)
        res = run_dual(z0, params, "lattice", t, stream, L=payload["L"],
                       accelerate=False)
        if not math.isfinite(res.tau_partial):
            vals[r - lo] = eval_E(u0, res.final)
        res_cb = colour_blind_run(
            payload["cb_points"], params, t,
            RngStream(payload["seed"], payload["stream_base"] + (1 << 23) + r),
            L=payload["L"], accelerate=False)
        # colour-blind walk never kills; evaluate D at the surviving points
        dvals[r - lo] = eval_D(u0, _cb_final_points(res_cb))
    return vals, dvals


def _cb_final_points(res):
    if res.final is not None:
        return res.final.greens + res.final.reds
    return []


def duality_check(u0: LatticeField, z0: DualConfiguration, t: float,
                  params: ModelParams, replicas: int, master: RngStream, *,
                  L: Optional[int] = None, bias_budget: float = 0.0,
                  workers: int = 1) -> DualityReport:
    """Two independent estimates of the same killed moment functional:
    forward side E[E(u_t, z0); no fixation] versus dual side
    E[E(u0, Z_t); no killing], plus the colour-blind (unkilled) product
    check E[D(u_t; pts)] vs E[D(u0; walk_t)].

    t = 0 is evaluated exactly (no simulation).  The bias budget (lattice
    discretization allowance, usually from halving L) is subtracted from the
    discrepancy before the z-score.
    """
    z0.require_valid()
    if L is None:
        L = u0.L
    if t == 0.0:
        v = eval_E(u0, z0)
        return DualityReport.build(v, 0.0, v, 0.0, cb_lhs=v, cb_rhs=v, cb_z=0.0)
    cb_points = z0.greens + z0.reds
    base = {
        "demes": u0.demes, "M": u0.M,
        "params": (params.alpha, params.beta, params.gamma),
        "z_greens": z0.greens, "z_reds": z0.reds, "t": float(t), "L": L,
        "cb_points": cb_points, "seed": master.master_seed,
    }
    fwd = dict(base, stream_base=master.stream_id + substream_base(2))
    dlu = dict(base, stream_base=master.stream_id + substream_base(3))
    fparts = chunked_map(_duality_forward_chunk, replicas, fwd, workers)
    dparts = chunked_map(_duality_dual_chunk, replicas, dlu, workers)
    fv = np.concatenate([p[0] for p in fparts])
    fd = np.concatenate([p[1] for p in fparts])
    dv = np.concatenate([p[0] for p in dparts])
    dd = np.concatenate([p[1] for p in dparts])

    def mse(a):
        return float(a.mean()), float(a.std(ddof=1) / math.sqrt(len(a)))

    lhs, lse = mse(fv)
    rhs, rse = mse(dv)
    cl, cle = mse(fd)
    cr, cre = mse(dd)
    cbz = abs(cl - cr) / math.sqrt(cle * cle + cre * cre)
    return DualityReport.build(lhs, lse, rhs, rse, bias=bias_budget,
                               cb_lhs=cl, cb_rhs=cr, cb_z=float(cbz))


# ---------------------------------------------------------------------------
# change-of-drift bracket
# ---------------------------------------------------------------------------

def girsanov_check(u0: LatticeField, params: ModelParams, t: float,
                   replicas: int, master: RngStream, *, workers: int = 1,
                   slack_sigmas: float = 3.0) -> dict:
    """Verify exp(-(beta/gamma + beta^2 t/(8 gamma))) * P0(tau > t)
    <= Pbeta(tau > t) <= exp(beta/gamma) * P0(tau > t) within Monte Carlo
    slack.  beta = 0 degenerates to an identical-estimator pass."""
    if params.beta < 0:
        raise ValueError("use the u -> 1-u symmetry for negative beta")
    neutral = ModelParams(params.alpha, 0.0, params.gamma)
    curve_b, _, _ = survival_curve(u0, params, [t], replicas, master,
                                   workers=workers, stream_kind=4)
    curve_0, _, _ = survival_curve(u0, neutral, [t], replicas, master,
                                   workers=workers, stream_kind=5)
    pb = float(curve_b.surviving_fraction[0])
    p0 = float(curve_0.surviving_fraction[0])
    se_b = math.sqrt(pb * (1 - pb) / replicas)
    se_0 = math.sqrt(p0 * (1 - p0) / replicas)
    lo_fac = math.exp(-(params.beta / params.gamma
                        + params.beta ** 2 * t / (8 * params.gamma)))
    hi_fac = math.exp(params.beta / params.gamma)
    slack_lo = slack_sigmas * math.hypot(se_b, lo_fac * se_0)
    slack_hi = slack_sigmas * math.hypot(se_b, hi_fac * se_0)
    return {
        "p_beta": pb, "p_beta_stderr": se_b,
        "p_neutral": p0, "p_neutral_stderr": se_0,
        "lower_factor": lo_fac, "upper_factor": hi_fac,
        "lower_ok": pb >= lo_fac * p0 - slack_lo,
        "upper_ok": pb <= hi_fac * p0 + slack_hi,
    }


# ---------------------------------------------------------------------------
# conditioned (on-survival) functionals
# ---------------------------------------------------------------------------

def _conditioned_chunk(lo, hi, payload):
    params = ModelParams(*payload["params"])
    field = LatticeField(payload["demes"].copy(), payload["M"])
    t = payload["t"]
    offs = payload["offsets"]
    sums = np.zeros(len(offs))
    count = 0
    for r in range(lo, hi):
        stream = RngStream(payload["seed"], payload["stream_base"] + r)
        outcome, traj = run_to_fixation(field.copy(), params, stream, t,
                                        snapshot_times=[t])
        if outcome.tau_fix is None:
            u = traj.snapshots[t]
            count += 1
            for j, off in enumerate(offs):
                sums[j] += float(np.mean((1.0 - u) * np.roll(u, -off)))
    return sums, count


def conditioned_two_point(u0: LatticeField, params: ModelParams, t: float,
                          replicas: int, master: RngStream,
                          distances=(0.0, 0.1, 0.25, 0.5), *,
                          workers: int = 1, stream_kind: int = 6):
    """Survivor-ensemble estimate of E[(1-u(x))u(x+d) | alive at t],
    site-averaged, at the given distances.  Returns (estimates, stderrs,
    survivor count); stderr treats survivors as iid (binomial-scale)."""
    offs = [int(round(d * u0.L)) % u0.L for d in distances]
    payload = {
        "demes": u0.demes, "M": u0.M,
        "params": (params.alpha, params.beta, params.gamma),
        "t": float(t), "offsets": offs, "seed": master.master_seed,
        "stream_base": master.stream_id + substream_base(stream_kind),
    }
    parts = chunked_map(_conditioned_chunk, replicas, payload, workers)
    sums = np.sum([p[0] for p in parts], axis=0)
    count = sum(p[1] for p in parts)
    if count == 0:
        raise ValueError(f"no survivors at t={t}; shorten t or add replicas")
    est = sums / count
    # crude per-survivor spread: values bounded in [0, 1/4]
    err = np.minimum(0.25, np.sqrt(est * (1 - est))) / math.sqrt(count)
    return est, err, count
