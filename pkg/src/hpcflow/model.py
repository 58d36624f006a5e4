"""Throttling and flux formulas shared by the discrete and continuum models.

Scalar functions validate their arguments and are the reference API.  The
``*_array`` kernels evaluate the same formulas elementwise on numpy arrays
without validation; the simulators call those in their inner loops.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import InputError, ParameterError
from .profiles import AlphaProfile


@dataclass(frozen=True)
class ModelParams:
    """O(1) parameters of the rescaled model.

    ``eta`` has one entry per lattice axis (length 1 for the 1D model).
    ``alpha_max`` caches the sup of the α profile on the grid where it is used.
    """

    r_star: float
    beta: float
    eta: tuple
    alpha_max: float

    def __post_init__(self):
        eta = self.eta
        if np.isscalar(eta):
            eta = (eta,)
        eta = tuple(float(e) for e in eta)
        object.__setattr__(self, "eta", eta)
        problems = []
        if not self.r_star > 0:
            problems.append(f"r_star must be positive, got {self.r_star}")
        if not 0 < self.beta <= 1:
            problems.append(f"beta must lie in (0, 1], got {self.beta}")
        if len(eta) == 0 or not all(e > 0 for e in eta):
            problems.append(f"every eta must be positive, got {eta}")
        if not self.alpha_max > 0:
            problems.append(f"alpha_max must be positive, got {self.alpha_max}")
        if problems:
            raise ParameterError("; ".join(problems))

    @classmethod
    def from_profile(cls, alpha: AlphaProfile, samples, r_star=1.0, beta=1.0, eta=1.0) -> "ModelParams":
        """Build params with ``alpha_max`` taken as the max of ``alpha`` on ``samples``."""
        amax = float(np.max(np.asarray(alpha(np.asarray(samples, dtype=float)))))
        return cls(r_star=r_star, beta=beta, eta=eta, alpha_max=amax)

    @property
    def ndim(self) -> int:
        return len(self.eta)

    @property
    def eta1(self) -> float:
        return self.eta[0]

    def lipschitz_bound(self, alpha: float) -> float:
        """Max partial-derivative magnitude of w over (r, D-, D+) in 1D."""
        e = max(self.eta)
        return alpha * max(1.0 / self.r_star, e / (self.beta * self.r_star), 1.0 / (self.beta * self.r_star))


@dataclass(frozen=True)
class ThrottleState:
    """Rescaled stage density with forward/backward neighbor increments.

    ``d_plus`` / ``d_minus`` are scalars in 1D or one entry per axis in n-D.
    """

    r: float
    d_plus: Union[float, Sequence[float]]
    d_minus: Union[float, Sequence[float]]

    def __post_init__(self):
        if not self.r >= 0:
            raise InputError(f"stage density r must be nonnegative, got {self.r}")

    def axes(self):
        dp = np.atleast_1d(np.asarray(self.d_plus, dtype=float))
        dm = np.atleast_1d(np.asarray(self.d_minus, dtype=float))
        if dp.shape != dm.shape:
            raise ParameterError("d_plus and d_minus must have the same number of axes")
        return dm, dp


def _check_beta(beta):
    if not 0 < beta <= 1:
        raise ParameterError(f"beta must lie in (0, 1], got {beta}")


def v1_self_throttle(q: float, q_star: float) -> float:
    """Fraction of maximum throughput sustained with ``q`` units of data available."""
    if not q_star > 0:
        raise ParameterError(f"q_star must be positive, got {q_star}")
    return max(0.0, min(1.0, q / q_star))


def v2_neighbor_throttle(q: float, delta_plus: float, delta_minus: float, beta: float) -> float:
    """Data on a processor that can be processed given what its neighbors have finished."""
    _check_beta(beta)
    return min(q, max(delta_plus, 0.0) / beta, max(delta_minus, 0.0) / beta)


def w1(r: float, r_star: float) -> float:
    return v1_self_throttle(r, r_star)


def w2(r: float, d_minus: float, d_plus: float, eta: float, beta: float) -> float:
    _check_beta(beta)
    return min(r, max(eta * d_plus + r, 0.0) / beta, max(eta * d_minus + r, 0.0) / beta)


def w_composite(state: ThrottleState, params: ModelParams, alpha: float) -> float:
    """Throttled throughput α·w1(min_d w2(...)) for one stage; lies in [0, α]."""
    if not alpha >= 0:
        raise ParameterError(f"alpha must be nonnegative, got {alpha}")
    dm, dp = state.axes()
    if len(dm) != params.ndim:
        raise ParameterError(f"state has {len(dm)} axes, params have {params.ndim}")
    avail = min(w2(state.r, dm[d], dp[d], params.eta[d], params.beta) for d in range(len(dm)))
    return alpha * w1(avail, params.r_star)


def w_array(r, d_minus, d_plus, alpha, r_star, eta, beta):
    """Elementwise 1D composite throughput; no argument checks."""
    avail = np.minimum(
        r,
        np.minimum(np.maximum(eta * d_plus + r, 0.0), np.maximum(eta * d_minus + r, 0.0)) / beta,
    )
    return alpha * np.clip(avail / r_star, 0.0, 1.0)


class Region(enum.Enum):
    OMEGA1 = 1
    OMEGA2 = 2
    OMEGA3 = 3
    OMEGA4 = 4
    # |eta*D| > r: one neighbor has nothing usable, flux vanishes
    OUTSIDE = 5


def phi0(r: float, D: float, params: ModelParams, alpha: float) -> float:
    """Lowest-order flux: w with D- = -D, D+ = D."""
    if not r >= 0:
        raise InputError(f"density must be nonnegative, got {r}")
    return w_composite(ThrottleState(r, D, -D), params, alpha)


def phi0_piecewise(r: float, D: float, params: ModelParams, alpha: float):
    """Lowest-order flux from its region decomposition of the (D, r) half-plane.

    Returns ``(value, region)``. On region boundaries the lowest-numbered
    region is reported; the branch formulas agree there.
    """
    if params.ndim != 1:
        raise ParameterError("phi0_piecewise is defined for the 1D model only")
    if not r >= 0:
        raise InputError(f"density must be nonnegative, got {r}")
    rs, beta, eta = params.r_star, params.beta, params.eta1
    eD = eta * D
    aD = abs(eD)
    if r >= rs and r - aD >= beta * rs:
        return alpha, Region.OMEGA1
    if r <= rs and aD <= (1.0 - beta) * r:
        return alpha * r / rs, Region.OMEGA2
    if eD <= 0 and r + eD >= 0:
        return alpha * (r + eD) / (beta * rs), Region.OMEGA3
    if eD >= 0 and r - eD >= 0:
        return alpha * (r - eD) / (beta * rs), Region.OMEGA4
    return 0.0, Region.OUTSIDE


def phi1(r: float, D: float, D2: float, epsilon: float, params: ModelParams, alpha: float) -> float:
    """First-order-corrected flux using the second x-derivative ``D2`` at scale ``epsilon``."""
    if not epsilon >= 0:
        raise ParameterError(f"epsilon must be nonnegative, got {epsilon}")
    if not r >= 0:
        raise InputError(f"density must be nonnegative, got {r}")
    shift = 0.5 * epsilon * D2
    return w_composite(ThrottleState(r, D + shift, -D + shift), params, alpha)


def flux_array(rho, sigma, upsilon, alpha, params: ModelParams, order: int = 0, epsilon: float = 0.0):
    """Continuum flux Φ(ℓ)(ρ, ∂xP, ∂xxP) on arrays (1D model)."""
    if order == 0:
        d_minus, d_plus = -sigma, sigma
    else:
        shift = 0.5 * epsilon * upsilon
        d_minus, d_plus = -sigma + shift, sigma + shift
    return w_array(rho, d_minus, d_plus, alpha, params.r_star, params.eta1, params.beta)


def flux_equivalence_report(params: ModelParams, alpha: float, r_values, d_values) -> dict:
    """Compare the piecewise and composite flux forms on a (D, r) grid.

    Returns the max absolute mismatch overall and per region, plus sample counts
    per region. An empty ``mismatches`` dict means the forms agree to 1e-12.
    """
    per_region = {reg.name: 0.0 for reg in Region}
    counts = {reg.name: 0 for reg in Region}
    rr, dd = np.meshgrid(np.asarray(r_values, float), np.asarray(d_values, float), indexing="ij")
    comp = w_array(rr, -dd, dd, alpha, params.r_star, params.eta1, params.beta)
    # region labels and branch values vectorized with the same precedence as phi0_piecewise
    rs, beta, eta = params.r_star, params.beta, params.eta1
    eD = eta * dd
    aD = np.abs(eD)
    m1 = (rr >= rs) & (rr - aD >= beta * rs)
    m2 = ~m1 & (rr <= rs) & (aD <= (1.0 - beta) * rr)
    m3 = ~m1 & ~m2 & (eD <= 0) & (rr + eD >= 0)
    m4 = ~m1 & ~m2 & ~m3 & (eD >= 0) & (rr - eD >= 0)
    m5 = ~(m1 | m2 | m3 | m4)
    piece = np.select(
        [m1, m2, m3, m4, m5],
        [
            np.full_like(rr, alpha),
            alpha * rr / rs,
            alpha * (rr + eD) / (beta * rs),
            alpha * (rr - eD) / (beta * rs),
            np.zeros_like(rr),
        ],
    )
    err = np.abs(piece - comp)
    for reg, mask in zip(Region, (m1, m2, m3, m4, m5)):
        counts[reg.name] = int(mask.sum())
        if mask.any():
            per_region[reg.name] = float(err[mask].max())
    mismatches = {k: v for k, v in per_region.items() if v > 1e-12}
    return {
        "max_abs": float(err.max()),
        "per_region": per_region,
        "counts": counts,
        "mismatches": mismatches,
    }
