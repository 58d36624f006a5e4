"""Put discrete and continuum results on one mesh and measure how far apart they are."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .discrete import DiscreteState, LatticeConfig, reconstruct_piecewise
from .errors import ParameterError
from .hj import SolverGrid, recover_rho

log = logging.getLogger(__name__)


@dataclass
class FieldSnapshot:
    """Scalar field on a mesh; ``values[j, i]`` is the value at z index j, x index i.

    ``x`` and ``z`` hold the coordinates of the columns and rows.
    """

    name: str
    t: float
    values: np.ndarray
    x: np.ndarray
    z: np.ndarray
    centering: str = "node"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        if self.centering not in ("node", "cell"):
            raise ParameterError(f"centering must be node or cell, got {self.centering!r}")
        if self.values.shape != (len(self.z), len(self.x)):
            raise ParameterError(
                f"values shape {self.values.shape} does not match (nz, nx) = ({len(self.z)}, {len(self.x)})"
            )
        if not np.all(np.isfinite(self.values)):
            raise ParameterError(f"field {self.name!r} has non-finite values")

    @property
    def nx(self) -> int:
        return len(self.x)

    @property
    def nz(self) -> int:
        return len(self.z)


@dataclass
class ErrorReport:
    l1: float
    l2: float
    linf: float
    t: float
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"l1": self.l1, "l2": self.l2, "linf": self.linf, "t": self.t, **self.meta}


def continuum_snapshot(field_, grid: SolverGrid, name: str = "rho") -> FieldSnapshot:
    """ρ recovered from P on nodes x_n (n = 0..N-1), z_m (m = 1..M)."""
    rho = recover_rho(field_, grid)[:, 1:]
    return FieldSnapshot(name, field_.t, rho.T, grid.x, grid.z[1:], "node", {"N": grid.N, "M": grid.M})


def potential_snapshot(field_, grid: SolverGrid, name: str = "P") -> FieldSnapshot:
    return FieldSnapshot(name, field_.t, field_.nodes.T.copy(), grid.x, grid.z, "node", {"N": grid.N, "M": grid.M})


def lattice_snapshot(state: DiscreteState, config: LatticeConfig, name: str = "r") -> FieldSnapshot:
    """Discrete density r_{i,k} on its own cells (x_i, z_k + δ/2)."""
    pw = reconstruct_piecewise(state, config)
    x = config.mesh_points()[0]
    z = config.stage_points() + 0.5 * config.delta
    return FieldSnapshot(name, state.t, pw.r.T, x, z, "cell", {"i_max": pw.i_max, "k_max": pw.k_max})


def resample_discrete(state: DiscreteState, config: LatticeConfig, grid: SolverGrid, name: str = "r") -> FieldSnapshot:
    """Piecewise-constant reconstruction of the lattice sampled at the solver nodes (m = 1..M).

    Cell lookup uses exact integer arithmetic so nodes on cell faces follow
    the half-open convention [x_lo, x_hi) x (z_lo, z_hi] without round-off.
    """
    pw = reconstruct_piecewise(state, config)
    n = np.arange(grid.N)
    m = np.arange(1, grid.M + 1)
    i = (n * pw.i_max) // grid.N
    k = -((-m * pw.k_max) // grid.M) - 1
    clamped = int(np.sum(k < 1)) * grid.N
    if clamped:
        log.warning("%d solver nodes fall below the first discrete cell; using stage 1", clamped)
    k = np.clip(k, 1, pw.k_max)
    vals = pw.r[i[None, :], (k - 1)[:, None]]
    meta = {"i_max": pw.i_max, "k_max": pw.k_max, "clamped_nodes": clamped}
    return FieldSnapshot(name, state.t, vals, grid.x, grid.z[1:], "node", meta)


def diff_fields(a: FieldSnapshot, b: FieldSnapshot, name: Optional[str] = None):
    """Pointwise a - b with L1/L2 (mesh weights 1/(nx nz)) and L∞ norms."""
    if a.values.shape != b.values.shape or a.centering != b.centering:
        raise ParameterError(
            f"cannot compare {a.name} {a.values.shape}/{a.centering} with {b.name} {b.values.shape}/{b.centering}"
        )
    if not (np.allclose(a.x, b.x, rtol=0, atol=1e-12) and np.allclose(a.z, b.z, rtol=0, atol=1e-12)):
        raise ParameterError("fields live on different meshes")
    d = a.values - b.values
    w = 1.0 / d.size
    report = ErrorReport(
        l1=float(np.sum(np.abs(d)) * w),
        l2=float(np.sqrt(np.sum(d * d) * w)),
        linf=float(np.max(np.abs(d))) if d.size else 0.0,
        t=a.t,
        meta={"nx": a.nx, "nz": a.nz},
    )
    diff = FieldSnapshot(name or f"{a.name}-{b.name}", a.t, d, a.x, a.z, a.centering)
    return diff, report


def relative_l1(a: FieldSnapshot, b: FieldSnapshot) -> float:
    """||a - b||_1 / ||b||_1 on the shared mesh."""
    _, rep = diff_fields(a, b)
    ref = float(np.mean(np.abs(b.values)))
    return rep.l1 / ref if ref > 0 else float("inf")


def lineout(snap: FieldSnapshot, x: float):
    """Column of ``snap`` at ``x``: nearest node, or containing cell. Returns (x_used, z, values)."""
    if not 0 <= x < 1:
        raise ParameterError(f"lineout position must lie in [0, 1), got {x}")
    if snap.centering == "node":
        # periodic nearest node
        dist = np.abs((snap.x - x + 0.5) % 1.0 - 0.5)
        j = int(np.argmin(dist))
    else:
        width = 1.0 / snap.nx
        j = min(int(np.floor(x / width + 1e-9)), snap.nx - 1)
    return float(snap.x[j]), snap.z.copy(), snap.values[:, j].copy()


def refinement_study(run_continuum, run_discrete_at, ladder: Sequence[tuple], t: float):
    """Discrepancy of discrete runs on ``ladder`` against one continuum reference.

    ``run_continuum()`` returns ``(rho_snapshot, grid)`` at time ``t``;
    ``run_discrete_at(i_max, k_max)`` returns ``(state, config)`` at ``t``.
    Reports carry ``relative_l1``; a non-decreasing trend is logged, not raised.
    """
    rho, grid = run_continuum()
    reports = []
    for i_max, k_max in ladder:
        state, config = run_discrete_at(i_max, k_max)
        r = resample_discrete(state, config, grid)
        _, rep = diff_fields(rho, r)
        ref = float(np.mean(np.abs(r.values)))
        rep.meta.update({"i_max": i_max, "k_max": k_max, "N": grid.N, "M": grid.M,
                         "relative_l1": rep.l1 / ref if ref > 0 else float("inf")})
        reports.append(rep)
    if len(reports) > 1 and not reports[-1].l1 < reports[0].l1:
        log.warning("discrepancy did not decrease from coarsest (%.4g) to finest (%.4g) rung",
                    reports[0].l1, reports[-1].l1)
    return reports


def trend_decreasing(reports: Sequence[ErrorReport]) -> bool:
    return len(reports) < 2 or reports[-1].l1 < reports[0].l1
