"""The 2-type branching-coalescing particle system and its functionals.

Particles carry a colour (green/red), move as independent walkers, branch at
rate beta (child at the parent's position, same colour), and coalesce
pairwise through co-location: a mixed pair kills the red, a same-colour pair
kills a uniformly chosen member.  The system is killed when the reds die out
(tau_partial).  Two engines:

* lattice (canonical): continuous-time walk on the L-site ring, jump rate
  alpha*L^2 per particle and pair coalescence rate gamma*L while co-located
  (the occupation-time surrogate of local-time coalescence at rate
  gamma/2alpha; validated against the exact killed-pair generator, whose
  principal eigenvalue is computed here as an oracle).
* continuous: fixed-step wrapped Gaussian increments with per-pair
  coalescence probability 1 - exp(-(gamma/2alpha) * window local time).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from typing import Optional

import numpy as np

from . import _kernels
from .circle import canon, pair_coalescence_prob
from .params import ModelParams
from .rng import RngStream
from .spectral import EigenSolution, right_efn_two_particle


@dataclass
class DualConfiguration:
    """Coloured particle positions on the circle.

    killed is true exactly when no reds remain; prior to killing a valid
    configuration has at least one particle of each colour.
    """

    greens: list
    reds: list
    time: float = 0.0

    def __post_init__(self):
        self.greens = [float(canon(x)) for x in self.greens]
        self.reds = [float(canon(x)) for x in self.reds]

    @property
    def killed(self) -> bool:
        return len(self.reds) == 0

    def require_valid(self):
        if not self.greens or not self.reds:
            raise ValueError(
                "configuration must contain at least one green and one red")

    def to_sites(self, L: int):
        sites = np.array(
            [int(round(x * L)) % L for x in self.greens + self.reds],
            dtype=np.int64)
        cols = np.array([0] * len(self.greens) + [1] * len(self.reds),
                        dtype=np.uint8)
        return sites, cols


@dataclass
class DualOutcome:
    """Hitting times and optional series from one run.

    tau_partial: killing time (math.inf while reds survive)
    tau_meet: first state = exactly one green + one red, co-located
    tau_one: first state = exactly two particles co-located (colour-blind)
    """

    tau_partial: float
    tau_meet: float
    tau_one: float
    t_final: float
    n_green: int
    n_red: int
    series_times: Optional[np.ndarray] = None
    series_green: Optional[np.ndarray] = None
    series_red: Optional[np.ndarray] = None
    series_pair_distance: Optional[np.ndarray] = None  # circle units; -1 if n != 2
    final: Optional[DualConfiguration] = None

    def __post_init__(self):
        if math.isfinite(self.tau_meet) and math.isfinite(self.tau_partial):
            assert self.tau_meet <= self.tau_partial


@lru_cache(maxsize=16)
def _coal_prob_table_cached(alpha: float, gamma: float, delta: float,
                            n_grid: int) -> tuple:
    d = np.linspace(0.0, 0.5, n_grid)
    return tuple(pair_coalescence_prob(float(x), delta, alpha, gamma) for x in d)


def coalescence_prob_table(params: ModelParams, delta: float,
                           n_grid: int = 1025) -> np.ndarray:
    """Per-step pair coalescence probability on a uniform distance grid over
    [0, 1/2], for the continuous engine's linear interpolation."""
    return np.array(_coal_prob_table_cached(params.alpha, params.gamma,
                                            float(delta), n_grid))


def _bitgen(rng):
    return rng.bit_generator() if isinstance(rng, RngStream) else rng


def run_dual(config: DualConfiguration, params: ModelParams, engine: str,
             t_max: float, rng, *, L: int = 256, delta: float = 1e-3,
             checkpoints=None, accelerate: bool = True,
             max_particles: Optional[int] = None) -> DualOutcome:
    """Run the 2-type system to min(killing time, t_max).

    engine="lattice" (canonical) or "continuous".  Checkpoints request
    (n_green, n_red, pair-distance) snapshots; the lattice engine's exact
    two-particle endgame acceleration is only used when no checkpoints are
    requested.  On the continuous engine tau_meet is resolved only for an
    exactly co-located initial mixed pair (co-location off-lattice is a null
    event; coalescence carries one-step resolution).
    """
    config.require_valid()
    n0 = len(config.greens) + len(config.reds)
    cap = max_particles or max(4 * n0 + 64, 1024)
    bg = _bitgen(rng)
    if engine == "lattice":
        sites, cols = config.to_sites(L)
        res = _kernels.lattice_walk_run(
            sites, cols, L, params.alpha, params.beta, params.gamma,
            t_max, checkpoints, True, False, accelerate, cap, bg)
        dist_scale = 1.0 / L
        final = None
        if res["final_sites"] is not None:
            fs, fc = res["final_sites"], res["final_cols"]
            final = DualConfiguration(
                greens=[s / L for s, c in zip(fs, fc) if c == 0],
                reds=[s / L for s, c in zip(fs, fc) if c == 1],
                time=res["t_final"])
    elif engine == "continuous":
        pos = np.array(config.greens + config.reds, dtype=float)
        cols = np.array([0] * len(config.greens) + [1] * len(config.reds),
                        dtype=np.uint8)
        tab = coalescence_prob_table(params, delta)
        if tab[0] >= 0.2:
            warnings.warn(
                f"per-step coalescence probability at contact is {tab[0]:.3f} "
                f">= 0.2; reduce delta", stacklevel=2)
        res = _kernels.continuous_walk_run(
            pos, cols, params.alpha, params.beta, params.gamma, delta,
            t_max, checkpoints, True, tab, cap, bg)
        res = dict(res)
        res.setdefault("tau_one", float("inf"))
        dist_scale = 1.0
        fp, fc = res["final_pos"], res["final_cols"]
        final = DualConfiguration(
            greens=[x for x, c in zip(fp, fc) if c == 0],
            reds=[x for x, c in zip(fp, fc) if c == 1],
            time=res["t_final"])
    else:
        raise ValueError(f"unknown engine {engine!r}")

    series_dist = None
    if checkpoints is not None:
        dist = np.asarray(res["cp_dist"], dtype=float)
        series_dist = np.where(dist >= 0, dist * dist_scale, -1.0)
    return DualOutcome(
        tau_partial=res["tau_kill"],
        tau_meet=res["tau_meet"],
        tau_one=res.get("tau_one", float("inf")),
        t_final=res["t_final"],
        n_green=int(res["n_green"]),
        n_red=int(res["n_red"]),
        series_times=(None if checkpoints is None
                      else np.asarray(checkpoints, dtype=float)),
        series_green=(None if checkpoints is None else res["cp_green"]),
        series_red=(None if checkpoints is None else res["cp_red"]),
        series_pair_distance=series_dist,
        final=final,
    )


def dual_step_lattice(config: DualConfiguration, params: ModelParams, L: int,
                      rng) -> DualConfiguration:
    """Advance the lattice engine by exactly one event (jump, branch, or
    coalescence) and return the new configuration."""
    config.require_valid()
    sites, cols = config.to_sites(L)
    cap = max(4 * len(sites) + 64, 1024)
    res = _kernels.lattice_walk_run(
        sites, cols, L, params.alpha, params.beta, params.gamma,
        float("inf"), None, True, False, False, cap, _bitgen(rng), 1)
    fs, fc = res["final_sites"], res["final_cols"]
    return DualConfiguration(
        greens=[s / L for s, c in zip(fs, fc) if c == 0],
        reds=[s / L for s, c in zip(fs, fc) if c == 1],
        time=config.time + res["t_final"])


def dual_step_continuous(config: DualConfiguration, params: ModelParams,
                         delta: float, rng) -> DualConfiguration:
    """Advance the continuous engine by one step of length delta."""
    config.require_valid()
    pos = np.array(config.greens + config.reds, dtype=float)
    cols = np.array([0] * len(config.greens) + [1] * len(config.reds),
                    dtype=np.uint8)
    tab = coalescence_prob_table(params, delta)
    if tab[0] >= 0.2:
        warnings.warn(
            f"per-step coalescence probability at contact is {tab[0]:.3f} "
            f">= 0.2; reduce delta", stacklevel=2)
    cap = max(4 * len(pos) + 64, 1024)
    res = _kernels.continuous_walk_run(
        pos, cols, params.alpha, params.beta, params.gamma, delta,
        delta, None, True, tab, cap, _bitgen(rng))
    fp, fc = res["final_pos"], res["final_cols"]
    return DualConfiguration(
        greens=[x for x, c in zip(fp, fc) if c == 0],
        reds=[x for x, c in zip(fp, fc) if c == 1],
        time=config.time + delta)


def colour_blind_run(positions, params: ModelParams, t_max: float, rng, *,
                     L: int = 256, checkpoints=None, stop_at_tau_one=False,
                     accelerate: bool = True,
                     max_particles: Optional[int] = None) -> DualOutcome:
    """Colour-ignoring coalescing/branching walk (every pair coalescence
    kills a uniform member; no killing state).  Used for tau_one ensembles
    and particle-count statistics."""
    sites = np.array([int(round(canon(x) * L)) % L for x in positions],
                     dtype=np.int64)
    cols = np.zeros(len(sites), dtype=np.uint8)
    cap = max_particles or max(4 * len(sites) + 64, 1024)
    res = _kernels.lattice_walk_run(
        sites, cols, L, params.alpha, params.beta, params.gamma,
        t_max, checkpoints, False, stop_at_tau_one, accelerate, cap,
        _bitgen(rng))
    series_dist = None
    if checkpoints is not None:
        dist = np.asarray(res["cp_dist"], dtype=float)
        series_dist = np.where(dist >= 0, dist / L, -1.0)
    final = None
    if res["final_sites"] is not None:
        final = DualConfiguration(
            greens=[s / L for s in res["final_sites"]], reds=[],
            time=res["t_final"])
    return DualOutcome(
        tau_partial=float("inf"),
        tau_meet=float("inf"),
        tau_one=res["tau_one"],
        t_final=res["t_final"],
        n_green=int(res["n_green"]),
        n_red=int(res["n_red"]),
        series_times=(None if checkpoints is None
                      else np.asarray(checkpoints, dtype=float)),
        series_green=(None if checkpoints is None else res["cp_green"]),
        series_red=(None if checkpoints is None else res["cp_red"]),
        series_pair_distance=series_dist,
        final=final,
    )


# ---------------------------------------------------------------------------
# exact lattice-pair oracle
# ---------------------------------------------------------------------------

def pair_generator(L: int, alpha: float, gamma: float) -> np.ndarray:
    """Generator of the killed site-difference walk of a mixed pair: +-1
    jumps at rate alpha*L^2 each, kill rate gamma*L at difference 0."""
    jr = alpha * L * L
    Q = np.zeros((L, L))
    for d in range(L):
        Q[d, (d + 1) % L] += jr
        Q[d, (d - 1) % L] += jr
        Q[d, d] -= 2 * jr
    Q[0, 0] -= gamma * L
    return Q

def pair_lattice_kappa(L: int, alpha: float, gamma: float) -> float:
    """Principal decay rate of the killed lattice pair (exact eigensolve);
    converges to the analytic two-particle rate as L grows."""
    ev = np.linalg.eigvals(pair_generator(L, alpha, gamma))
    return float(-ev.real.max())


def pair_survival_exact(L: int, alpha: float, gamma: float, d0: int,
                        ts) -> np.ndarray:
    """Exact kill-time survival P(tau > t) for the lattice pair started d0
    sites apart (matrix exponential of the killed generator)."""
    from scipy.linalg import expm

    Q = pair_generator(L, alpha, gamma)
    e = np.zeros(L)
    e[d0 % L] = 1.0
    return np.array([float(e @ expm(Q * t) @ np.ones(L)) for t in ts])


# ---------------------------------------------------------------------------
# martingale functional
# ---------------------------------------------------------------------------

def martingale_functional(times, pair_distances: np.ndarray,
                          eigen: EigenSolution) -> list[dict]:
    """Empirical means of exp(kappa*t) * extended-eigenfunction(state) along
    two-particle paths.

    pair_distances: (paths, checkpoints) circle distances, -1 where the pair
    has been resolved (killed); those paths contribute 0.  Returns one row
    {t, mean, stderr} per checkpoint.
    """
    times = np.asarray(times, dtype=float)
    d = np.asarray(pair_distances, dtype=float)
    if d.ndim != 2 or d.shape[1] != times.shape[0]:
        raise ValueError("pair_distances must be (paths, len(times))")
    rows = []
    for j, t in enumerate(times):
        alive = d[:, j] >= 0
        vals = np.zeros(d.shape[0])
        if alive.any():
            vals[alive] = right_efn_two_particle(d[alive, j], eigen)
        vals *= math.exp(eigen.kappa * t)
        rows.append({
            "t": float(t),
            "mean": float(vals.mean()),
            "stderr": float(vals.std(ddof=1) / math.sqrt(len(vals))),
        })
    return rows


def pair_checkpoint_ensemble(z0: DualConfiguration, params: ModelParams,
                             checkpoints, replicas: int, master: RngStream,
                             L: int = 64) -> np.ndarray:
    """Distance-at-checkpoint matrix for one green + one red started at z0
    (lattice engine, no acceleration since series are recorded); -1 marks
    resolved paths.  Replica r uses stream master.child(r)."""
    if len(z0.greens) != 1 or len(z0.reds) != 1:
        raise ValueError("pair ensemble requires exactly one green and one red")
    cps = np.asarray(checkpoints, dtype=float)
    out = np.empty((replicas, len(cps)))
    for r in range(replicas):
        res = run_dual(z0, params, "lattice", float(cps.max()) + 1e-9,
                       master.child(r), L=L, checkpoints=cps, accelerate=False)
        out[r] = res.series_pair_distance
    return out
