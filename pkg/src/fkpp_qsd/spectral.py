"""Closed-form spectral quantities of the neutral (beta = 0) model.

Everything here hangs off the root theta* of 4*theta*tan(theta) = gamma/alpha
on (0, pi/2): the fixation rate kappa = 4*alpha*theta*^2, the eigenvalue
lambda = exp(-kappa), the stationary pair-distance density, the two-particle
right eigenfunction (up to the constant M*, which has no closed form and must
come from an entrance-law estimate), and the second-order moment formulas of
the quasi-stationary field law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import mpmath as mp

from .circle import geodesic_distance
from .params import ModelParams

_HALF_PI = math.pi / 2.0


@dataclass(frozen=True)
class EigenSolution:
    """Spectral data for one (alpha, gamma) pair.

    theta: root of 4*theta*tan(theta) = gamma/alpha in (0, pi/2)
    kappa: fixation rate 4*alpha*theta^2
    lam:   eigenvalue exp(-kappa)
    norm_A: pair-density normalization theta/sin(theta)
    M_star: estimated eigenfunction constant (None until supplied), with stderr
    """

    alpha: float
    gamma: float
    theta: float
    kappa: float
    lam: float
    norm_A: float
    M_star: Optional[float] = None
    M_star_stderr: float = 0.0

    def require_mstar(self) -> float:
        if self.M_star is None:
            raise ValueError(
                "M_star is not set; supply an entrance-law estimate via "
                "mstar_from_entrance (there is no closed form)"
            )
        return self.M_star


def _g(theta: float) -> float:
    return 4.0 * theta * math.tan(theta)


def theta_star(ratio: float, iterations: int = 80) -> float:
    """Root of 4*theta*tan(theta) = ratio by bisection on (0, pi/2).

    The map is strictly increasing from 0 to +infinity, so bisection is
    unconditionally safe; 80 halvings exhaust float64 resolution.  Note the
    returned double carries the full attainable accuracy in theta, but for
    ratio >~ 500 the *residual* 4t*tan(t)-ratio of any double is floored by
    conditioning (g'(theta)*ulp); use theta_star_mp when that matters.
    """
    if not ratio > 0:
        raise ValueError(f"ratio must be positive, got {ratio}")
    lo, hi = 0.0, _HALF_PI
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if _g(mid) < ratio:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def theta_star_mp(ratio, dps: int = 40):
    """Extended-precision root of 4*theta*tan(theta) = ratio (mpmath).

    Bisection bracket plus Newton polish at `dps` digits; the residual is
    below 1e-12 (typically ~1e-(dps-10)) uniformly over ratio in [1e-6, 1e6].
    """
    if not ratio > 0:
        raise ValueError(f"ratio must be positive, got {ratio}")
    with mp.workdps(dps):
        r = mp.mpf(ratio)
        lo, hi = mp.mpf(0), mp.pi / 2
        for _ in range(60):
            mid = (lo + hi) / 2
            if 4 * mid * mp.tan(mid) < r:
                lo = mid
            else:
                hi = mid
        th = (lo + hi) / 2
        for _ in range(80):
            f = 4 * th * mp.tan(th) - r
            df = 4 * mp.tan(th) + 4 * th / mp.cos(th) ** 2
            step = f / df
            th -= step
            if abs(step) < mp.mpf(10) ** (-(dps - 2)):
                break
        return +th


def fixation_rate(params: ModelParams) -> EigenSolution:
    """Neutral-case spectral solution: kappa = 4*alpha*theta*^2, lam = e^-kappa,
    A = theta*/sin(theta*).  M_star is left unset."""
    if params.beta != 0.0:
        raise ValueError(
            "closed-form spectral data exists only for beta = 0; "
            f"got beta = {params.beta}"
        )
    th = theta_star(params.ratio)
    kappa = 4.0 * params.alpha * th * th
    return EigenSolution(
        alpha=params.alpha,
        gamma=params.gamma,
        theta=th,
        kappa=kappa,
        lam=math.exp(-kappa),
        norm_A=th / math.sin(th),
    )


_FAST_COEFFS = (1.0, -1.0 / 12.0, 1.0 / 180.0, -1.0 / 3780.0)
_SLOW_COEFFS = (1.0, -8.0, 48.0)


def kappa_series(params: ModelParams, regime: str, order: int) -> float:
    """Asymptotic expansion of the fixation rate.

    fast (gamma/alpha -> 0): gamma * sum_k c_k (gamma/alpha)^k, order <= 3
    slow (alpha/gamma -> 0): pi^2*alpha * sum_k s_k (alpha/gamma)^k, order <= 2
    """
    if params.beta != 0.0:
        raise ValueError("series expansions are for beta = 0")
    if regime == "fast":
        if not 0 <= order <= 3:
            raise ValueError(f"fast regime supports order 0..3, got {order}")
        r = params.gamma / params.alpha
        return params.gamma * sum(c * r**k for k, c in enumerate(_FAST_COEFFS[: order + 1]))
    if regime == "slow":
        if not 0 <= order <= 2:
            raise ValueError(f"slow regime supports order 0..2, got {order}")
        q = params.alpha / params.gamma
        return (
            math.pi**2
            * params.alpha
            * sum(c * q**k for k, c in enumerate(_SLOW_COEFFS[: order + 1]))
        )
    raise ValueError(f"regime must be 'fast' or 'slow', got {regime!r}")


def qsd_density(d, eigen: EigenSolution):
    """Stationary pair-distance density A*cos(2*theta*(1/2 - d)) of the
    conditioned two-particle system; strictly positive on [0, 1/2].  Integrates
    to 1 over the torus product (factor 2 for the two arcs at each distance)."""
    import numpy as np

    d = np.asarray(d, dtype=float)
    out = eigen.norm_A * np.cos(2.0 * eigen.theta * (0.5 - d))
    return float(out) if out.ndim == 0 else out


def right_efn_two_particle(d, eigen: EigenSolution):
    """Two-particle right eigenfunction M* * cos(2*theta*(1/2 - d)); requires
    M_star."""
    import numpy as np

    m = eigen.require_mstar()
    d = np.asarray(d, dtype=float)
    out = m * np.cos(2.0 * eigen.theta * (0.5 - d))
    return float(out) if out.ndim == 0 else out


def right_efn_extended(eigen: EigenSolution, d: Optional[float]):
    """Extension of the eigenfunction to killed states: d = None encodes the
    no-red configuration and maps to 0."""
    if d is None:
        return 0.0
    return right_efn_two_particle(d, eigen)


def qsd_moments(x: float, y: float, eigen: EigenSolution) -> dict:
    """Second-order moments of the stationary conditioned field law.

    mean = 1/2 by symmetry; cross = E[u(x)u(y)]; covariance at distance d;
    var_integral = Var of the spatial mean.  Requires M_star.
    """
    m = eigen.require_mstar()
    d = float(geodesic_distance(x, y))
    c = math.cos(2.0 * eigen.theta * (0.5 - d))
    return {
        "mean": 0.5,
        "cross": 0.5 - m * c,
        "covariance": 0.25 - m * c,
        "var_integral": 0.25 - m * math.sin(eigen.theta) / eigen.theta,
    }


def mstar_from_entrance(
    e_s_estimate: float, e_s_stderr: float, eigen: EigenSolution
) -> EigenSolution:
    """Fill in M* = 1 / (2 cos(theta*) E_hat) from an estimated full-circle
    entrance exponential moment E_hat >= 1, with first-order stderr
    propagation."""
    if not e_s_estimate >= 1.0:
        raise ValueError(
            f"entrance exponential moment must be >= 1, got {e_s_estimate}"
        )
    if e_s_stderr < 0:
        raise ValueError("stderr must be nonnegative")
    m = 1.0 / (2.0 * math.cos(eigen.theta) * e_s_estimate)
    m_err = m * e_s_stderr / e_s_estimate
    return replace(eigen, M_star=m, M_star_stderr=m_err)


def local_fixation_prob(e_f: float, e_s: float) -> dict:
    """Probability content of local fixation under the stationary conditioned
    law, from entrance moments over a closed set F and over the full circle:
    not_fixed = E_F/E_S and zero_on_F = (1 - E_F/E_S)/2."""
    if not 1.0 <= e_f <= e_s:
        raise ValueError(
            f"need 1 <= E_F <= E_S (monotone in F); got E_F={e_f}, E_S={e_s}"
        )
    ratio = e_f / e_s
    return {"not_fixed": ratio, "zero_on_F": 0.5 * (1.0 - ratio)}
