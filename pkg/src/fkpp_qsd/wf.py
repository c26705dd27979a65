"""Well-mixed (0-dimensional) reference: exact spectral facts for the killed
neutral diffusion on (0,1), survival asymptotics, the block-counting
coalescent dual, and a binomial-chain simulator (the L = 1 lattice engine,
so the spatial code's noise calibration is validated by the same chain).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .params import ModelParams
from .rng import RngStream


@dataclass(frozen=True)
class WfParams:
    beta: float = 0.0
    gamma: float = 1.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")


def wf_spectrum(n: int, gamma: float = 1.0) -> float:
    """Killed-generator eigenvalues -gamma*n(n-1)/2 for n >= 2 (the n-th
    moment mode; general gamma is a linear time change of the standard case)."""
    if n < 2:
        raise ValueError(f"spectrum is indexed by n >= 2, got {n}")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    return -gamma * n * (n - 1) / 2.0


def wf_survival_asymptotic(x: float, t: float, gamma: float = 1.0) -> float:
    """Leading-order neutral survival 6x(1-x)exp(-gamma t), 0 < x < 1."""
    if not 0.0 < x < 1.0:
        raise ValueError(f"x must lie in (0,1), got {x}")
    return 6.0 * x * (1.0 - x) * math.exp(-gamma * t)


@dataclass(frozen=True)
class KingmanState:
    block_count: int
    time: float = 0.0

    def __post_init__(self):
        if self.block_count < 1:
            raise ValueError("block_count must be >= 1")


def kingman_step(state: KingmanState, gamma: float,
                 rng: RngStream | np.random.Generator) -> KingmanState:
    """One merge: wait Exp(gamma*N(N-1)/2), decrement N.  N = 1 is absorbing
    (returned unchanged)."""
    if state.block_count == 1:
        return state
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    rate = gamma * state.block_count * (state.block_count - 1) / 2.0
    wait = gen.exponential(1.0 / rate)
    return KingmanState(state.block_count - 1, state.time + wait)


def kingman_block_counts(n0: int, gamma: float, times, rng: RngStream,
                         replicas: int) -> np.ndarray:
    """Block counts N_t at the given times for `replicas` independent runs,
    vectorized over replicas (one stream; holding times drawn level by level).

    Returns an int array of shape (replicas, len(times)).
    """
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    times = np.asarray(times, dtype=float)
    levels = np.arange(n0, 1, -1)  # n0, n0-1, ..., 2
    rates = gamma * levels * (levels - 1) / 2.0
    waits = gen.exponential(1.0, size=(replicas, len(levels))) / rates
    merge_times = np.cumsum(waits, axis=1)
    # N at time t = n0 - (number of merges completed by t)
    merged = (merge_times[:, :, None] <= times[None, None, :]).sum(axis=1)
    return n0 - merged


def kingman_martingale_values(counts: np.ndarray, times, gamma: float) -> np.ndarray:
    """exp(gamma*t) * (1/2 - 1/(N_t + 1)) evaluated elementwise."""
    times = np.asarray(times, dtype=float)
    return np.exp(gamma * times)[None, :] * (0.5 - 1.0 / (counts + 1.0))


def wf_simulate(x0: float, params: WfParams, rng: RngStream, t: float,
                M_wf: int = 100) -> tuple[float, bool]:
    """Binomial chain to time t (the L = 1 stepping-stone engine): step size
    1/(gamma*M_wf), success probability tilted by beta before resampling.

    Returns (frequency at min(t, absorption), absorbed flag).
    """
    if not 0.0 <= x0 <= 1.0:
        raise ValueError("x0 must lie in [0,1]")
    if M_wf < 1:
        raise ValueError("M_wf must be >= 1")
    k = np.array([int(round(M_wf * x0))], dtype=np.int64)
    delta = 1.0 / (params.gamma * M_wf)
    steps = int(round(t / delta))
    bg = rng.bit_generator()
    st, _side = _kernels.spde_evolve(k, M_wf, 0.0, params.beta * delta,
                                     steps, bg)
    return k[0] / float(M_wf), st >= 0


def wf_ensemble_final(x0: float, params: WfParams, master: RngStream,
                      t: float, replicas: int, M_wf: int = 100,
                      checkpoints=None):
    """Per-replica final frequencies plus liveness at checkpoints.

    Returns (finals array, absorbed bool array, alive matrix of shape
    (replicas, n_checkpoints)).  Replica r uses stream master.child(r).
    """
    cps = sorted(float(c) for c in (checkpoints or []))
    finals = np.empty(replicas)
    absorbed = np.zeros(replicas, dtype=bool)
    alive = np.ones((replicas, len(cps)), dtype=bool)
    delta = 1.0 / (params.gamma * M_wf)
    sel = params.beta * delta
    k0 = int(round(M_wf * x0))
    for r in range(replicas):
        bg = master.child(r).bit_generator()
        k = np.array([k0], dtype=np.int64)
        steps_done = 0
        absorbed_step = None
        for j, c in enumerate(cps + [t]):
            target = int(round(c / delta))
            seg = target - steps_done
            if seg > 0 and absorbed_step is None:
                st, _ = _kernels.spde_evolve(k, M_wf, 0.0, sel, seg, bg)
                if st >= 0:
                    absorbed_step = steps_done + st + 1
            steps_done = target
            if j < len(cps):
                alive[r, j] = absorbed_step is None or absorbed_step > target
        finals[r] = k[0] / float(M_wf)
        absorbed[r] = absorbed_step is not None
    return finals, absorbed, alive
