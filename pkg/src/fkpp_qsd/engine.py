"""Forward simulation of the noisy gene-frequency field on the ring.

The canonical engine is a stepping-stone chain: L demes of M individuals,
one step = conservative nearest-neighbour migration, a deterministic
selection tilt, then per-deme binomial resampling.  The step size
delta = 1/(gamma*L*M) makes the binomial noise variance match the target
quadratic variation gamma*u(1-u) per unit time.  Absorption (the constant-0
or constant-1 field) is detected exactly on integer counts.

An explicit Euler-Maruyama engine on a dense real field is provided as an
alternative for cross-checks; it is biased near the boundary by clamping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .params import ModelParams, check_stability, time_step
from .rng import RngStream


@dataclass
class LatticeField:
    """State of the stepping-stone chain: integer counts per deme."""

    demes: np.ndarray  # int64, values in {0..M}
    M: int
    time: float = 0.0

    def __post_init__(self):
        self.demes = np.ascontiguousarray(self.demes, dtype=np.int64)
        if self.demes.ndim != 1 or self.demes.shape[0] < 1:
            raise ValueError("demes must be a 1-D array")
        if (self.demes < 0).any() or (self.demes > self.M).any():
            raise ValueError("deme counts must lie in {0..M}")

    @property
    def L(self) -> int:
        return self.demes.shape[0]

    @property
    def u(self) -> np.ndarray:
        """Site frequencies k/M."""
        return self.demes / float(self.M)

    def value_at(self, x) -> float:
        """Frequency at the nearest lattice site to circle point x."""
        i = int(round(float(x) % 1.0 * self.L)) % self.L
        return self.demes[i] / float(self.M)

    def spatial_mean(self) -> float:
        return float(self.demes.sum()) / (self.L * self.M)

    def absorbed_side(self) -> Optional[int]:
        tot = int(self.demes.sum())
        if tot == 0:
            return 0
        if tot == self.L * self.M:
            return 1
        return None

    def copy(self) -> "LatticeField":
        return LatticeField(self.demes.copy(), self.M, self.time)


@dataclass(frozen=True)
class FixationOutcome:
    """Absorption record: tau_fix is None while fixation has not happened."""

    tau_fix: Optional[float]
    absorbed_state: str  # "all-zero" | "all-one" | "none"

    def __post_init__(self):
        finite = self.tau_fix is not None
        if finite != (self.absorbed_state != "none"):
            raise ValueError("absorbed_state must be set iff tau_fix is recorded")


@dataclass
class Trajectory:
    """Optional per-run records collected by run_to_fixation."""

    checkpoint_times: list = dc_field(default_factory=list)
    alive: list = dc_field(default_factory=list)
    spatial_mean: list = dc_field(default_factory=list)
    snapshots: dict = dc_field(default_factory=dict)  # time -> u array


def constant_profile(c: float) -> Callable[[float], float]:
    return lambda x: c


def step_profile(edge: float = 0.5, low: float = 0.0, high: float = 1.0):
    """high on [0, edge), low on [edge, 1)."""
    return lambda x: high if (x % 1.0) < edge else low


def interval_profile(a: float, b: float, inside: float = 1.0, outside: float = 0.0):
    """Indicator-style profile of the arc [a, b) (no wrap)."""
    return lambda x: inside if a <= (x % 1.0) < b else outside


def make_field(profile: Callable[[float], float], L: int, M: int,
               time: float = 0.0) -> LatticeField:
    """Discretize a [0,1]-valued profile: k_i = round(M * profile(i/L)).

    Discontinuous profiles (steps, indicators) are fine; values outside
    [0, 1] are a domain error.
    """
    if L < 2 and L != 1:
        raise ValueError("L must be >= 2 (or 1 for the well-mixed chain)")
    if M < 1:
        raise ValueError("M must be >= 1")
    k = np.empty(L, dtype=np.int64)
    for i in range(L):
        v = float(profile(i / L))
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"profile value {v} at x={i / L} outside [0, 1]")
        k[i] = int(round(M * v))
    return LatticeField(k, M, time)


def _step_constants(params: ModelParams, L: int, M: int):
    delta = time_step(params, L, M)
    mig = params.alpha * delta * L * L / 2.0
    sel = params.beta * delta
    return delta, mig, sel


def spde_step(field: LatticeField, params: ModelParams,
              rng: RngStream | np.random.BitGenerator) -> LatticeField:
    """One resampling step (returns a new field; time advances by delta)."""
    check_stability(params, field.L, field.M)
    delta, mig, sel = _step_constants(params, field.L, field.M)
    bg = rng.bit_generator() if isinstance(rng, RngStream) else rng
    out = field.copy()
    _kernels.spde_evolve(out.demes, out.M, mig, sel, 1, bg)
    out.time = field.time + delta
    return out


def run_to_fixation(field: LatticeField, params: ModelParams, rng: RngStream,
                    t_max: float, checkpoints=None, snapshot_times=None,
                    engine: str = "stepping") -> tuple[FixationOutcome, Trajectory]:
    """Run until absorption or t_max, recording per-checkpoint liveness and
    spatial means, plus field snapshots at requested times.

    engine="stepping" is canonical; engine="euler" runs the clamped explicit
    scheme at the same step size (cross-check use only).
    """
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    check_stability(params, field.L, field.M)
    side0 = field.absorbed_side()
    if side0 is not None:
        outcome = FixationOutcome(0.0, "all-zero" if side0 == 0 else "all-one")
        traj = Trajectory()
        for t in sorted(set([float(t) for t in (checkpoints or [])] + [t_max])):
            traj.checkpoint_times.append(t)
            traj.alive.append(False)
            traj.spatial_mean.append(field.spatial_mean())
        for t in (snapshot_times or []):
            traj.snapshots[float(t)] = field.u.copy()
        return outcome, traj
    delta, mig, sel = _step_constants(params, field.L, field.M)
    bg = rng.bit_generator() if isinstance(rng, RngStream) else rng

    marks = sorted(set(
        [float(t) for t in (checkpoints or []) if t <= t_max]
        + [float(t) for t in (snapshot_times or []) if t <= t_max]
        + [float(t_max)]))
    snapshot_set = set(float(t) for t in (snapshot_times or []))
    checkpoint_set = set(float(t) for t in (checkpoints or []))

    traj = Trajectory()
    state = field.copy()
    if engine == "euler":
        dense = state.u.copy()
    elif engine != "stepping":
        raise ValueError(f"unknown engine {engine!r}")

    def record(t_mark, absorbed):
        if t_mark in checkpoint_set or t_mark == t_max:
            traj.checkpoint_times.append(t_mark)
            traj.alive.append(not absorbed)
            traj.spatial_mean.append(
                state.spatial_mean() if engine == "stepping"
                else float(dense.mean()))
        if t_mark in snapshot_set:
            traj.snapshots[t_mark] = (
                state.u.copy() if engine == "stepping" else dense.copy())

    steps_done = 0
    absorbed_at = None
    side = -1
    t0 = state.time
    for t_mark in marks:
        target_steps = int(round((t_mark - t0) / delta))
        seg = target_steps - steps_done
        if seg > 0 and absorbed_at is None:
            if engine == "stepping":
                st, sd = _kernels.spde_evolve(state.demes, state.M, mig, sel,
                                              seg, bg)
            else:
                st, sd = _kernels.euler_evolve(
                    dense, mig, sel,
                    math.sqrt(params.gamma * delta * state.L), seg, bg)
            if st >= 0:
                absorbed_at = (steps_done + st + 1) * delta + t0
                side = sd
            steps_done = target_steps
        elif seg > 0:
            steps_done = target_steps
        state.time = t0 + steps_done * delta
        record(t_mark, absorbed_at is not None and absorbed_at <= t_mark)

    if absorbed_at is not None:
        outcome = FixationOutcome(absorbed_at,
                                  "all-zero" if side == 0 else "all-one")
    else:
        outcome = FixationOutcome(None, "none")
    return outcome, traj


def euler_step_alternative(u: np.ndarray, params: ModelParams, delta: float,
                           rng: RngStream | np.random.BitGenerator) -> np.ndarray:
    """One explicit Euler-Maruyama step on a dense field (new array)."""
    L = u.shape[0]
    if delta > 1.0 / (params.alpha * L * L):
        raise ValueError(
            f"unstable Euler step: need delta <= 1/(alpha*L^2) = "
            f"{1.0 / (params.alpha * L * L):.3g}, got {delta:.3g}")
    bg = rng.bit_generator() if isinstance(rng, RngStream) else rng
    out = np.array(u, dtype=float, copy=True)
    mig = params.alpha * delta * L * L / 2.0
    _kernels.euler_evolve(out, mig, params.beta * delta,
                          math.sqrt(params.gamma * delta * L), 1, bg)
    return out


@dataclass(frozen=True)
class RescaledSystem:
    """Coefficient map onto a circle of circumference ell with clock factor
    c^2/ell^2: v(t, x~) = u(c^2 t / ell^2, x~/ell)."""

    params: ModelParams
    circumference: float
    time_factor: float  # one unit of original time = time_factor units for v
    field: Optional[LatticeField] = None


def rescale(field: Optional[LatticeField], params: ModelParams,
            c: float, ell: float) -> RescaledSystem:
    """Map the unit-circle system to a circumference-ell circle.

    Coefficients transform as alpha -> alpha*c^2, beta -> beta*c^2/ell^2,
    gamma -> gamma*c^2/ell; the deme array is reused with lattice spacing
    ell/L.  Fixation times scale by ell^2/c^2 (so rates scale by c^2/ell^2).
    """
    if c <= 0 or ell <= 0:
        raise ValueError("c and ell must be positive")
    new = ModelParams(
        alpha=params.alpha * c * c,
        beta=params.beta * c * c / (ell * ell),
        gamma=params.gamma * c * c / ell,
    )
    return RescaledSystem(
        params=new,
        circumference=ell,
        time_factor=ell * ell / (c * c),
        field=field.copy() if field is not None else None,
    )
