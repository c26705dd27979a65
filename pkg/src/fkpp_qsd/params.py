"""Model coefficients and lattice-resolution bookkeeping."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class ModelParams:
    """Coefficients of the field equation: diffusion alpha, selection beta,
    noise strength gamma.  Negative beta is handled upstream by the u -> 1-u
    symmetry; alpha and gamma must be positive."""

    alpha: float
    beta: float = 0.0
    gamma: float = 1.0

    def __post_init__(self):
        if not (self.alpha > 0):
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not (self.gamma > 0):
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    @property
    def ratio(self) -> float:
        """gamma / alpha, the argument of the spectral root."""
        return self.gamma / self.alpha


def time_step(params: ModelParams, L: int, M: int) -> float:
    """Derived step size 1/(gamma*L*M): binomial resampling variance per unit
    time then matches the target noise quadratic variation gamma*u(1-u)*L."""
    return 1.0 / (params.gamma * L * M)


def min_deme_size(params: ModelParams, L: int) -> int:
    """Smallest M with a strictly stable migration step, delta < 1/(alpha*L^2).

    The bound is strict: at equality the migration weight on the centre site
    is exactly zero, the even and odd sublattices decouple, and the chain can
    freeze in a never-fixating period-2 checkerboard.
    """
    m = math.ceil(params.alpha * L / params.gamma)
    if m * params.gamma == params.alpha * L:
        m += 1
    return max(1, m)


def check_stability(params: ModelParams, L: int, M: int) -> None:
    if M * params.gamma <= params.alpha * L:
        raise ValueError(
            f"unstable resolution: delta=1/(gamma*L*M) must satisfy "
            f"delta < 1/(alpha*L^2), i.e. M > alpha*L/gamma = "
            f"{params.alpha * L / params.gamma:.6g}; got M={M} "
            f"(equality decouples the even/odd sublattices). "
            f"Raise M to at least {min_deme_size(params, L)}."
        )


def default_resolution(params: ModelParams, L: int = 64) -> tuple[int, int]:
    """Desk-scale default: L sites and M = max(64, smallest stable size)."""
    return L, max(64, min_deme_size(params, L))
