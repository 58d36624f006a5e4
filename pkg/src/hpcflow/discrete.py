"""Microscopic model: processors on a periodic lattice, data moving through stages.

Arrays carry the lattice axes first and the stage axis last.  Stage index 0 is
the prescribed inflow stage q_{i,0}; stages 1..k_max are evolved.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import DegenerateConfigurationError, DomainError, InputError, ParameterError, SimulationError
from .model import ModelParams
from .profiles import AlphaProfile, FieldSpec

log = logging.getLogger(__name__)

POSITIVITY_TOL = 1e-12


@dataclass(frozen=True)
class LatticeConfig:
    dims: tuple
    k_max: int
    q_star: float

    def __post_init__(self):
        dims = tuple(int(d) for d in np.atleast_1d(self.dims))
        object.__setattr__(self, "dims", dims)
        problems = []
        if not dims or any(d < 3 for d in dims):
            problems.append(f"every lattice dimension must be >= 3, got {dims}")
        if self.k_max < 1:
            problems.append(f"k_max must be >= 1, got {self.k_max}")
        if not self.q_star > 0:
            problems.append(f"q_star must be positive, got {self.q_star}")
        if problems:
            raise ParameterError("; ".join(problems))

    @classmethod
    def from_rescaled(cls, dims, k_max, r_star) -> "LatticeConfig":
        """Lattice whose threshold corresponds to the rescaled ``r_star``."""
        dims = tuple(int(d) for d in np.atleast_1d(dims))
        return cls(dims, int(k_max), cell_volume(dims) * r_star / k_max)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def n_processors(self) -> int:
        return int(np.prod(self.dims))

    @property
    def volume(self) -> float:
        return cell_volume(self.dims)

    @property
    def delta(self) -> float:
        return 1.0 / self.k_max

    @property
    def eta(self) -> tuple:
        return tuple(self.k_max / d for d in self.dims)

    def mesh_points(self):
        """Processor coordinates x_i = (i - 0.5)/i_max per axis (1-based i)."""
        return tuple((np.arange(1, d + 1) - 0.5) / d for d in self.dims)

    def coordinates(self):
        """Processor coordinates broadcast to lattice shape (single array in 1D)."""
        pts = self.mesh_points()
        if self.ndim == 1:
            return pts[0]
        return tuple(np.meshgrid(*pts, indexing="ij"))

    def stage_points(self):
        return np.arange(1, self.k_max + 1) * self.delta


def cell_volume(dims) -> float:
    return float(np.prod([1.0 / d for d in dims]))


@dataclass
class DiscreteState:
    """Lattice data at one instant.

    ``q`` has shape ``dims + (k_max + 1,)``; ``q[..., 0]`` is the inflow stage.
    ``outflow_accum`` / ``inflow_accum`` are the running integrals of
    F_{i,k_max} and F_{i,0}, advanced with the same multistep weights as ``q``.
    """

    q: np.ndarray
    outflow_accum: np.ndarray
    inflow_accum: np.ndarray
    t: float = 0.0
    prev_rhs: Optional[tuple] = None
    prev_dt: Optional[float] = None
    initial_mass: Optional[np.ndarray] = None

    @property
    def stages(self) -> np.ndarray:
        return self.q[..., 1:]

    @property
    def q_in(self) -> np.ndarray:
        return self.q[..., 0]

    def copy(self) -> "DiscreteState":
        return DiscreteState(
            q=self.q.copy(),
            outflow_accum=self.outflow_accum.copy(),
            inflow_accum=self.inflow_accum.copy(),
            t=self.t,
            prev_rhs=None if self.prev_rhs is None else tuple(a.copy() for a in self.prev_rhs),
            prev_dt=self.prev_dt,
            initial_mass=None if self.initial_mass is None else self.initial_mass.copy(),
        )


@dataclass
class DiscreteProblem:
    """Everything a discrete run needs beyond the state: rates, inflow and parameters."""

    config: LatticeConfig
    a: np.ndarray
    beta: float
    rho_bc: FieldSpec
    params: Optional[ModelParams] = None

    def inflow(self, t: float) -> np.ndarray:
        cfg = self.config
        if self.rho_bc.is_zero:
            return np.zeros(cfg.dims)
        vals = np.broadcast_to(self.rho_bc(cfg.coordinates(), t), cfg.dims)
        return cfg.volume * cfg.delta * vals


def _field_on_lattice(spec, coords, z):
    if isinstance(coords, tuple):
        xs = tuple(c[..., None] for c in coords)
    else:
        xs = coords[:, None]
    return spec(xs, z)


def init_discrete(
    config: LatticeConfig,
    rho0: Union[FieldSpec, Callable],
    rho_bc: Union[FieldSpec, Callable],
    alpha: Union[AlphaProfile, Callable],
    params: ModelParams,
):
    """Initial state and problem data from continuum-level inputs.

    q_{i,k}(0) = V δ ρ0(x_i, z_k), a_i = V α(x_i); the inflow stage is
    V δ ρ_bc(x_i, t). Returns ``(state, problem)``.
    """
    if not isinstance(rho0, FieldSpec):
        rho0 = FieldSpec.from_callable(rho0)
    if not isinstance(rho_bc, FieldSpec):
        rho_bc = FieldSpec.from_callable(rho_bc)
    V, delta = config.volume, config.delta
    coords = config.coordinates()
    z = config.stage_points()
    shape = config.dims + (config.k_max,)
    rho_vals = np.broadcast_to(_field_on_lattice(rho0, coords, z), shape)
    if np.any(~np.isfinite(rho_vals)):
        raise InputError("initial density has non-finite samples")
    if np.any(rho_vals < 0):
        idx = np.unravel_index(np.argmin(rho_vals), rho_vals.shape)
        raise InputError(f"initial density is negative at lattice index {idx}: {rho_vals[idx]}")
    a = V * np.broadcast_to(np.asarray(alpha(coords), dtype=float), config.dims).copy()
    if np.any(a < 0):
        raise InputError("maximum throughput must be nonnegative")
    problem = DiscreteProblem(config=config, a=a, beta=params.beta, rho_bc=rho_bc, params=params)
    q = np.zeros(config.dims + (config.k_max + 1,))
    q[..., 1:] = V * delta * rho_vals
    q[..., 0] = problem.inflow(0.0)
    zeros = np.zeros(config.dims)
    state = DiscreteState(
        q=q,
        outflow_accum=zeros.copy(),
        inflow_accum=zeros.copy(),
        t=0.0,
        initial_mass=q[..., 1:].sum(axis=-1),
    )
    return state, problem


def compute_Q(state: DiscreteState) -> np.ndarray:
    """Q_{i,k} for k = 0..k_max: suffix sums of q plus accumulated outflow."""
    suffix = np.cumsum(state.q[..., ::-1], axis=-1)[..., ::-1]
    return suffix + state.outflow_accum[..., None]


def compute_fluxes(state: DiscreteState, Q: np.ndarray, a: np.ndarray, beta: float, q_star: float) -> np.ndarray:
    """Throughputs F_{i,k}, k = 0..k_max, with periodic neighbors on every axis."""
    q = state.q
    ndim = q.ndim - 1
    avail = q
    for d in range(ndim):
        up = np.roll(Q, -1, axis=d) - Q + q
        down = np.roll(Q, 1, axis=d) - Q + q
        nb = np.minimum(np.maximum(up, 0.0), np.maximum(down, 0.0)) / beta
        avail = np.minimum(avail, nb)
    return a[..., None] * np.clip(avail / q_star, 0.0, 1.0)


def rhs(state: DiscreteState, fluxes: np.ndarray):
    """Time derivatives (dq/dt for stages 1..k_max, outflow rate, inflow rate)."""
    dq = fluxes[..., :-1] - fluxes[..., 1:]
    return dq, fluxes[..., -1].copy(), fluxes[..., 0].copy()


def ab2_timestep(config: LatticeConfig, a: np.ndarray) -> float:
    """q* / (2 max(a) sqrt(#processors * k_max))."""
    amax = float(np.max(a))
    if amax <= 0:
        raise DegenerateConfigurationError("all maximum throughputs are zero; timestep undefined")
    return config.q_star / (2.0 * amax * math.sqrt(config.n_processors * config.k_max))


def evaluate_rhs(state: DiscreteState, problem: DiscreteProblem):
    cfg = problem.config
    Q = compute_Q(state)
    F = compute_fluxes(state, Q, problem.a, problem.beta, cfg.q_star)
    return rhs(state, F)


def step_ab2(state: DiscreteState, problem: DiscreteProblem, dt: float) -> DiscreteState:
    """One explicit two-step Adams-Bashforth step (forward Euler when there is no history).

    Steps of unequal length use the variable-step weights, which reduce to
    (3/2, -1/2) when ``dt`` equals the previous step.
    """
    if not dt > 0:
        raise ParameterError(f"dt must be positive, got {dt}")
    cur = evaluate_rhs(state, problem)
    if state.prev_rhs is None:
        w_now, w_old = 1.0, 0.0
    else:
        ratio = dt / state.prev_dt
        w_now, w_old = 1.0 + 0.5 * ratio, -0.5 * ratio
    if w_old == 0.0:
        incr = tuple(dt * c for c in cur)
    else:
        incr = tuple(dt * (w_now * c + w_old * p) for c, p in zip(cur, state.prev_rhs))
    q = state.q.copy()
    q[..., 1:] += incr[0]
    t_new = state.t + dt
    q[..., 0] = problem.inflow(t_new)
    return DiscreteState(
        q=q,
        outflow_accum=state.outflow_accum + incr[1],
        inflow_accum=state.inflow_accum + incr[2],
        t=t_new,
        prev_rhs=cur,
        prev_dt=dt,
        initial_mass=state.initial_mass,
    )


def unwrap_defect(state: DiscreteState) -> np.ndarray:
    """Per-processor relative defect of outflow = inflow + mass(0) - mass(t)."""
    mass = state.stages.sum(axis=-1)
    lhs = state.outflow_accum
    rhs_ = state.inflow_accum + state.initial_mass - mass
    scale = np.maximum.reduce([state.initial_mass + state.inflow_accum, np.abs(lhs), mass])
    scale = np.where(scale > 0, scale, 1.0)
    return np.abs(lhs - rhs_) / scale


@dataclass
class DiscreteRunStats:
    dt: float
    steps: int = 0
    min_q: float = math.inf
    min_q_time: float = 0.0
    outflow_decreases: int = 0
    max_unwrap_defect: float = 0.0
    positivity_violations: int = 0


def _check_finite(state: DiscreteState):
    if not np.all(np.isfinite(state.q)):
        bad = np.argwhere(~np.isfinite(state.q))[0]
        raise SimulationError(
            f"non-finite data at lattice index {tuple(bad[:-1])}, stage {bad[-1]}, t={state.t}",
            {"index": tuple(int(b) for b in bad[:-1]), "stage": int(bad[-1]), "t": state.t},
        )


def run_discrete(
    state: DiscreteState,
    problem: DiscreteProblem,
    t_final: float,
    snapshot_times: Sequence[float] = (),
    check_every_step: bool = True,
    strict_positivity: bool = False,
):
    """Advance to ``t_final`` at the fixed AB2 timestep, landing exactly on snapshot times.

    Returns ``(snapshots, stats)`` where ``snapshots`` is a list of state copies
    at 0 (if requested), each snapshot time, and ``t_final``.
    """
    times = sorted(float(t) for t in snapshot_times)
    if any(t < state.t or t > t_final for t in times):
        raise ParameterError(f"snapshot times must lie in [{state.t}, {t_final}]")
    if t_final < state.t:
        raise ParameterError("t_final precedes the current time")
    targets = sorted(set(times) | {float(t_final)})
    dt = ab2_timestep(problem.config, problem.a)
    stats = DiscreteRunStats(dt=dt)
    snaps = []
    cur = state
    stats.min_q = float(cur.stages.min()) if cur.stages.size else 0.0

    def observe(s):
        m = float(s.stages.min())
        if m < stats.min_q:
            stats.min_q, stats.min_q_time = m, s.t
        if m < -POSITIVITY_TOL:
            stats.positivity_violations += 1
            if strict_positivity:
                idx = np.unravel_index(np.argmin(s.stages), s.stages.shape)
                raise SimulationError(
                    f"positivity violated: q={m} at {idx} t={s.t}", {"index": idx, "t": s.t, "q": m}
                )

    def advance(s, h):
        nxt = step_ab2(s, problem, h)
        stats.steps += 1
        if check_every_step:
            _check_finite(nxt)
            observe(nxt)
            if np.any(nxt.outflow_accum < s.outflow_accum):
                stats.outflow_decreases += 1
        return nxt

    for target in targets:
        while True:
            remaining = target - cur.t
            if remaining <= 1e-12 * max(1.0, target):
                snap = cur.copy()
                snap.t = target
                break
            if remaining < dt * (1 - 1e-9):
                # branch a shortened step onto the target; the main trajectory keeps the fixed dt
                snap = advance(cur, remaining)
                snap.t = target
                break
            h = remaining if abs(remaining - dt) <= 1e-9 * dt else dt
            cur = advance(cur, h)
            if h == remaining:
                cur.t = target
        _check_finite(snap)
        observe(snap)
        stats.max_unwrap_defect = max(stats.max_unwrap_defect, float(unwrap_defect(snap).max()))
        snaps.append(snap)
    return snaps, stats


@dataclass(frozen=True)
class PiecewiseField:
    """Cellwise-constant r(x, z) = q_{i,k}/(ε δ) over cells (x_i ± ε/2) × (z_k, z_k + δ]."""

    r: np.ndarray
    i_max: int
    k_max: int

    @property
    def eps(self) -> float:
        return 1.0 / self.i_max

    @property
    def delta(self) -> float:
        return 1.0 / self.k_max

    def cell_index(self, x, z):
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        if np.any((x < 0) | (x >= 1)) or np.any((z <= 0) | (z > 1 + self.delta * (1 + 1e-12))):
            raise DomainError("evaluation point outside [0,1) x (0, 1+delta]")
        sx = x * self.i_max
        i = np.floor(sx + 1e-9 * np.maximum(1.0, sx)).astype(int)
        i = np.clip(i, 0, self.i_max - 1)
        sz = z * self.k_max
        # half-open (z_lo, z_hi]: z on a cell floor belongs to the cell below
        k = np.ceil(sz - 1e-9 * np.maximum(1.0, sz)).astype(int) - 1
        k = np.clip(k, 1, self.k_max)
        return i, k

    def __call__(self, x, z):
        i, k = self.cell_index(x, z)
        return self.r[i, k - 1]

    def integral(self) -> float:
        """Integral of r over its cells (each cell has area ε δ)."""
        return float(self.r.sum() * self.eps * self.delta)


def reconstruct_piecewise(state: DiscreteState, config: LatticeConfig) -> PiecewiseField:
    if config.ndim != 1:
        raise ParameterError("piecewise reconstruction is defined for 1D lattices only")
    r = state.stages / (config.volume * config.delta)
    return PiecewiseField(r=r.copy(), i_max=config.dims[0], k_max=config.k_max)
