"""Continuum model: Hamilton-Jacobi equation for the potential P(x, z, t).

    ∂t P = Φ(ℓ)(-∂z P, ∂x P, ∂xx P)   on T¹ × (0, 1)
    P(x, 0, t) = ∫₀¹ ρ0(x, ξ) dξ + ∫₀ᵗ φ_bc(x, s) ds
    P(x, z, 0) = ∫_z¹ ρ0(x, ξ) dξ

Discretized with WENO5 biased derivatives, a global Lax-Friedrichs numerical
Hamiltonian and the optimal three-stage SSP Runge-Kutta scheme.  P is stored
on nodes x_n = n/N (n = 0..N-1, periodic) and z_m = m/M (m = 0..M) padded
with three ghost layers on every side.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, InputError, ParameterError, SimulationError
from .model import ModelParams, flux_array
from .profiles import AlphaProfile, FieldSpec
from .weno import GHOST, second_derivative_central, weno5_biased_derivatives

log = logging.getLogger(__name__)

MONOTONE_TOL = 1e-8
CFL_MAX = 0.6


@dataclass(frozen=True)
class SolverGrid:
    N: int
    M: int

    def __post_init__(self):
        if self.N < 7 or self.M < 7:
            raise ParameterError(f"solver grid needs N, M >= 7, got {self.N}x{self.M}")

    @property
    def dx(self) -> float:
        return 1.0 / self.N

    @property
    def dz(self) -> float:
        return 1.0 / self.M

    @property
    def ghost(self) -> int:
        return GHOST

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.N) / self.N

    @property
    def z(self) -> np.ndarray:
        return np.arange(self.M + 1) / self.M

    @property
    def padded_shape(self) -> tuple:
        return (self.N + 2 * GHOST, self.M + 1 + 2 * GHOST)


@dataclass
class PotentialField:
    """Padded grid function P plus the accumulated boundary inflow ∫₀ᵗ φ_bc."""

    P: np.ndarray
    t: float
    boundary_accum: np.ndarray

    @property
    def nodes(self) -> np.ndarray:
        g = GHOST
        return self.P[g:-g, g:-g]

    def copy(self) -> "PotentialField":
        return PotentialField(self.P.copy(), self.t, self.boundary_accum.copy())


@dataclass(frozen=True)
class HJParams:
    """Solver parameters; λ's are the global Lax-Friedrichs bounds built from ``alpha_max``."""

    model: ModelParams
    alpha: AlphaProfile
    flux_order: int = 0
    epsilon: float = 0.0
    cfl: float = CFL_MAX
    lambda_x: float = field(default=0.0)
    lambda_z: float = field(default=0.0)

    def __post_init__(self):
        m = self.model
        if m.ndim != 1:
            raise ParameterError("the continuum solver supports one lattice axis only")
        if self.flux_order not in (0, 1):
            raise ParameterError(f"flux order must be 0 or 1, got {self.flux_order}")
        if not 0 < self.cfl <= CFL_MAX:
            raise ParameterError(f"cfl must lie in (0, {CFL_MAX}], got {self.cfl}")
        if not self.epsilon >= 0:
            raise ParameterError("epsilon must be nonnegative")
        lx = m.alpha_max * m.eta1 / (m.beta * m.r_star)
        lz = m.alpha_max / (m.beta * m.r_star)
        for name, given, want in (("lambda_x", self.lambda_x, lx), ("lambda_z", self.lambda_z, lz)):
            if given == 0.0:
                object.__setattr__(self, name, want)
            elif not math.isclose(given, want, rel_tol=1e-12):
                raise ParameterError(f"{name}={given} disagrees with its definition ({want})")

    @classmethod
    def build(cls, model: ModelParams, alpha: AlphaProfile, grid: SolverGrid, flux_order=0, epsilon=None, cfl=CFL_MAX):
        """Params for ``grid``; Φ(1)'s ε defaults to the x mesh width."""
        if epsilon is None:
            epsilon = grid.dx if flux_order == 1 else 0.0
        return cls(model=model, alpha=alpha, flux_order=flux_order, epsilon=epsilon, cfl=cfl)

    def stable_dt(self, grid: SolverGrid) -> float:
        return self.cfl / (self.lambda_x / grid.dx + self.lambda_z / grid.dz)


@dataclass
class HJProblem:
    grid: SolverGrid
    params: HJParams
    rho0: FieldSpec
    rho_bc: FieldSpec
    alpha_nodes: np.ndarray
    base: np.ndarray  # ∫₀¹ ρ0(x_n, ξ) dξ

    @classmethod
    def build(cls, grid: SolverGrid, params: HJParams, rho0: FieldSpec, rho_bc: FieldSpec) -> "HJProblem":
        alpha_nodes = np.asarray(params.alpha(grid.x), dtype=float)
        if alpha_nodes.max() > params.model.alpha_max * (1 + 1e-12):
            raise ParameterError("alpha_max is below the profile's maximum on the solver grid")
        base = integrate_to_one(rho0, grid.x, np.array([0.0]))[:, 0]
        return cls(grid, params, rho0, rho_bc, alpha_nodes, base)


def _adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    diff = left + right - whole
    if np.max(np.abs(diff)) <= 15.0 * tol:
        return left + right + diff / 15.0
    if depth <= 0:
        raise ConfigError(f"adaptive quadrature failed to converge on [{a}, {b}]")
    return _adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + _adaptive_simpson(
        f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1
    )


def simpson_integral(f, a, b, tol=1e-10, max_depth=60):
    """Adaptive Simpson quadrature of a vector-valued ``f`` over [a, b]."""
    if b <= a:
        return np.zeros_like(np.asarray(f(a), dtype=float))
    fa, fb = np.asarray(f(a), float), np.asarray(f(b), float)
    m = 0.5 * (a + b)
    fm = np.asarray(f(m), float)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, max_depth)


def integrate_to_one(rho0: FieldSpec, x, z, tol=1e-10, force_quadrature=False) -> np.ndarray:
    """Table of ∫_z¹ ρ0(x, ξ) dξ with shape (len(x), len(z))."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if rho0.has_closed_integral() and not force_quadrature:
        return np.asarray(rho0.integral_to_one(x[:, None], z[None, :]), dtype=float)

    def column(s):
        vals = np.broadcast_to(np.asarray(rho0(x, s), dtype=float), x.shape)
        return vals

    # integrate interval by interval from the top so every node gets its tail sum
    knots = np.unique(np.concatenate([np.clip(z, 0.0, 1.0), [1.0]]))
    pieces = []
    per_tol = tol / max(1, len(knots))
    for a, b in zip(knots[:-1], knots[1:]):
        pieces.append(simpson_integral(column, a, b, per_tol))
    tails = np.zeros((len(knots), len(x)))
    for j in range(len(pieces) - 1, -1, -1):
        tails[j] = tails[j + 1] + pieces[j]
    lookup = {float(k): tails[j] for j, k in enumerate(knots)}
    out = np.stack([lookup[float(np.clip(zz, 0.0, 1.0))] for zz in z], axis=1)
    return out


def init_P(grid: SolverGrid, rho0: FieldSpec, force_quadrature=False) -> PotentialField:
    samples = np.asarray(rho0(grid.x[:, None], grid.z[None, :]), dtype=float)
    if np.any(samples < 0):
        raise InputError("initial density must be nonnegative")
    P = np.zeros(grid.padded_shape)
    g = GHOST
    P[g:-g, g:-g] = integrate_to_one(rho0, grid.x, grid.z, force_quadrature=force_quadrature)
    return PotentialField(P=P, t=0.0, boundary_accum=np.zeros(grid.N))


def boundary_fill(field_: PotentialField, problem: HJProblem, t: Optional[float] = None, boundary_accum=None):
    """Fill ghosts in place: Dirichlet row at z=0, ρ_bc-slope ghosts below it,
    cubic extrapolation above z=1, periodic wrap in x."""
    grid = problem.grid
    g = GHOST
    t = field_.t if t is None else t
    B = field_.boundary_accum if boundary_accum is None else boundary_accum
    P = field_.P
    xs = slice(g, g + grid.N)
    P[xs, g] = problem.base + B
    if problem.rho_bc.is_zero:
        for j in range(1, g + 1):
            P[xs, g - j] = P[xs, g]
    else:
        rbc = np.broadcast_to(problem.rho_bc(grid.x, t), (grid.N,))
        for j in range(1, g + 1):
            P[xs, g - j] = P[xs, g] + j * grid.dz * rbc
    top = g + grid.M
    for j in range(1, g + 1):
        c = top + j
        P[xs, c] = 4.0 * P[xs, c - 1] - 6.0 * P[xs, c - 2] + 4.0 * P[xs, c - 3] - P[xs, c - 4]
    P[:g, :] = P[grid.N : grid.N + g, :]
    P[g + grid.N :, :] = P[g : 2 * g, :]
    return field_


def lax_friedrichs_hamiltonian(sig_m, sig_p, tau_m, tau_p, ups, params: HJParams, alpha_at_x):
    """Ĥ = H(mean σ, mean τ, υ) - ½λx(σ⁺-σ⁻) - ½λz(τ⁺-τ⁻), with H(σ,τ,υ) = -Φ(-τ, σ, υ)."""
    sig = 0.5 * (sig_m + sig_p)
    tau = 0.5 * (tau_m + tau_p)
    H = -flux_array(-tau, sig, ups, alpha_at_x, params.model, params.flux_order, params.epsilon)
    return H - 0.5 * params.lambda_x * (sig_p - sig_m) - 0.5 * params.lambda_z * (tau_p - tau_m)


@dataclass
class RateDiagnostics:
    min_rho: float = math.inf


def hj_rates(P: np.ndarray, problem: HJProblem, t: float, diag: Optional[RateDiagnostics] = None):
    """dP/dt on rows m = 1..M and dB/dt (boundary inflow rate); ghosts must be filled."""
    grid, params = problem.grid, problem.params
    g = GHOST
    rows = P[:, g:-g]
    cols = P[g:-g, :]
    sig_m, sig_p = weno5_biased_derivatives(rows, grid.dx, axis=0)
    tau_m, tau_p = weno5_biased_derivatives(cols, grid.dz, axis=1)
    if params.flux_order == 1:
        ups = second_derivative_central(rows, grid.dx, axis=0)
    else:
        ups = np.zeros_like(sig_m)
    alpha = problem.alpha_nodes[:, None]
    Hhat = lax_friedrichs_hamiltonian(
        sig_m[:, 1:], sig_p[:, 1:], tau_m[:, 1:], tau_p[:, 1:], ups[:, 1:], params, alpha
    )
    if diag is not None:
        diag.min_rho = min(diag.min_rho, float(np.min(-0.5 * (tau_m + tau_p))))
    if problem.rho_bc.is_zero:
        dB = np.zeros(grid.N)
    else:
        rbc = np.broadcast_to(problem.rho_bc(grid.x, t), (grid.N,))
        sig0 = 0.5 * (sig_m[:, 0] + sig_p[:, 0])
        dB = flux_array(rbc, sig0, ups[:, 0], problem.alpha_nodes, params.model, params.flux_order, params.epsilon)
    return -Hhat, dB


def _stage(P_src, B_src, problem, t, diag):
    work = PotentialField(P_src, t, B_src)
    boundary_fill(work, problem)
    return hj_rates(work.P, problem, t, diag)


def ssp_rk3_step(field_: PotentialField, problem: HJProblem, dt: float, diag: Optional[RateDiagnostics] = None):
    """Shu-Osher three-stage SSP-RK3 step; z rows 1..M evolve, the z=0 row follows the boundary data."""
    grid, params = problem.grid, problem.params
    limit = dt * (params.lambda_x / grid.dx + params.lambda_z / grid.dz)
    if not dt > 0 or limit > params.cfl * (1 + 1e-12):
        raise ParameterError(f"dt={dt} violates the CFL bound ({limit:.6g} > {params.cfl})")
    g = GHOST
    inner = (slice(g, g + grid.N), slice(g + 1, g + grid.M + 1))
    t = field_.t
    u0 = field_.P.copy()
    B0 = field_.boundary_accum

    L, dB = _stage(u0, B0, problem, t, diag)
    u1 = u0.copy()
    u1[inner] = u0[inner] + dt * L
    B1 = B0 + dt * dB

    L, dB = _stage(u1, B1, problem, t + dt, diag)
    u2 = u0.copy()
    u2[inner] = 0.75 * u0[inner] + 0.25 * (u1[inner] + dt * L)
    B2 = 0.75 * B0 + 0.25 * (B1 + dt * dB)

    L, dB = _stage(u2, B2, problem, t + 0.5 * dt, diag)
    u3 = u0.copy()
    u3[inner] = u0[inner] / 3.0 + 2.0 / 3.0 * (u2[inner] + dt * L)
    B3 = B0 / 3.0 + 2.0 / 3.0 * (B2 + dt * dB)

    out = PotentialField(u3, t + dt, B3)
    boundary_fill(out, problem)
    return out


@dataclass
class HJRunStats:
    dt: float
    steps: int = 0
    min_increment: float = math.inf
    max_increment_excess: float = -math.inf
    monotonicity_violations: int = 0
    bound_violations: int = 0
    min_rho: float = math.inf
    step_increments: list = field(default_factory=list)


def run_hj(
    problem: HJProblem,
    t_final: float,
    snapshot_times: Sequence[float] = (),
    enforce: str = "warn",
    initial: Optional[PotentialField] = None,
    record_steps: bool = False,
):
    """Advance P to ``t_final`` at the CFL timestep, landing exactly on snapshot times.

    Every accepted step is checked for -tol <= ΔP <= dt·alpha_max + tol at all
    nodes. ``enforce`` is ``"warn"``, ``"abort"`` or ``"off"``.
    Returns ``(snapshots, stats)``.
    """
    if enforce not in ("warn", "abort", "off"):
        raise ParameterError(f"enforce must be warn, abort or off, got {enforce!r}")
    grid, params = problem.grid, problem.params
    cur = initial if initial is not None else init_P(grid, problem.rho0)
    boundary_fill(cur, problem)
    times = sorted(float(t) for t in snapshot_times)
    if t_final < cur.t or any(t < cur.t or t > t_final for t in times):
        raise ParameterError(f"snapshot times must lie in [{cur.t}, {t_final}]")
    targets = sorted(set(times) | {float(t_final)})
    dt = params.stable_dt(grid)
    stats = HJRunStats(dt=dt)
    diag = RateDiagnostics()
    amax = params.model.alpha_max
    snaps = []
    for target in targets:
        while cur.t < target:
            remaining = target - cur.t
            h = min(remaining, dt)
            prev = cur.nodes.copy()
            cur = ssp_rk3_step(cur, problem, h, diag)
            if h == remaining or target - cur.t <= 1e-12 * max(1.0, target):
                cur.t = target
            if not np.all(np.isfinite(cur.nodes)):
                bad = np.argwhere(~np.isfinite(cur.nodes))[0]
                raise SimulationError(
                    f"non-finite potential at node {tuple(bad)}, t={cur.t}",
                    {"node": tuple(int(b) for b in bad), "t": cur.t},
                )
            inc = cur.nodes - prev
            lo = float(inc.min())
            excess = float((inc - h * amax).max())
            stats.steps += 1
            stats.min_increment = min(stats.min_increment, lo)
            stats.max_increment_excess = max(stats.max_increment_excess, excess)
            if record_steps:
                stats.step_increments.append((cur.t, h, lo, excess))
            bad_mono = lo < -MONOTONE_TOL
            bad_bound = excess > MONOTONE_TOL
            stats.monotonicity_violations += int(bad_mono)
            stats.bound_violations += int(bad_bound)
            if (bad_mono or bad_bound) and enforce != "off":
                msg = f"step to t={cur.t:.6g}: min dP={lo:.3e}, max dP - dt*alpha_max={excess:.3e}"
                if enforce == "abort":
                    raise SimulationError("monotonicity check failed: " + msg, {"t": cur.t, "min": lo, "excess": excess})
                log.warning("monotonicity check failed: %s", msg)
        snaps.append(cur.copy())
    stats.min_rho = diag.min_rho
    return snaps, stats


def recover_rho(field_: PotentialField, grid: SolverGrid) -> np.ndarray:
    """ρ = -∂z P from the average of the two biased WENO z-derivatives, on nodes m = 0..M."""
    g = GHOST
    tau_m, tau_p = weno5_biased_derivatives(field_.P[g:-g, :], grid.dz, axis=1)
    return -0.5 * (tau_m + tau_p)


def build_problem(grid, model, alpha, rho0, rho_bc, flux_order=0, epsilon=None, cfl=CFL_MAX) -> HJProblem:
    params = HJParams.build(model, alpha, grid, flux_order=flux_order, epsilon=epsilon, cfl=cfl)
    return HJProblem.build(grid, params, rho0, rho_bc)
