import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hpcflow.discrete import (
    DiscreteState,
    LatticeConfig,
    ab2_timestep,
    compute_fluxes,
    compute_Q,
    evaluate_rhs,
    init_discrete,
    reconstruct_piecewise,
    rhs,
    run_discrete,
    step_ab2,
    unwrap_defect,
)
from hpcflow.errors import DegenerateConfigurationError, DomainError, InputError, ParameterError
from hpcflow.model import ModelParams
from hpcflow.profiles import AlphaProfile, FieldSpec

UNIT = ModelParams(1.0, 1.0, 1.0, 1.0)
STEP = FieldSpec("indicator-below", (1.5, 0.2))
EX2_ALPHA = AlphaProfile("sine-power-6", (1.0, 0.4))


def make(dims=(8,), k_max=8, rho0=STEP, alpha=EX2_ALPHA, rho_bc=None, beta=1.0):
    cfg = LatticeConfig.from_rescaled(dims, k_max, 1.0)
    params = ModelParams(1.0, beta, 1.0, 1.0)
    state, prob = init_discrete(cfg, rho0, rho_bc or FieldSpec.zero(), alpha, params)
    return cfg, state, prob


def bare_state(q, outflow=0.0):
    q = np.asarray(q, dtype=float)
    zeros = np.zeros(q.shape[:-1])
    return DiscreteState(q=q, outflow_accum=zeros + outflow, inflow_accum=zeros.copy(),
                         initial_mass=q[..., 1:].sum(axis=-1))


class TestLatticeConfig:
    def test_mesh_points(self):
        cfg = LatticeConfig.from_rescaled(4, 2, 1.0)
        np.testing.assert_allclose(cfg.mesh_points()[0], [0.125, 0.375, 0.625, 0.875])

    def test_threshold_scaling(self):
        cfg = LatticeConfig.from_rescaled((10,), 5, 2.0)
        assert cfg.q_star == pytest.approx(0.1 * 0.2 * 2.0)

    @pytest.mark.parametrize("dims,k", [((2,), 4), ((5, 2), 4), ((5,), 0)])
    def test_invalid(self, dims, k):
        with pytest.raises(ParameterError):
            LatticeConfig(dims, k, 1.0)


class TestInit:
    def test_zero_data(self):
        _, state, _ = make(rho0=FieldSpec.zero())
        assert not state.q.any()

    def test_step_data_misses_coarse_stages(self):
        _, state, _ = make(dims=(4,), k_max=2)
        assert not state.stages.any()

    def test_samples_at_stage_points(self):
        cfg, state, prob = make(dims=(4,), k_max=10)
        # z_k = k/10; the indicator covers k = 1, 2
        expect = np.zeros(10)
        expect[:2] = cfg.volume * cfg.delta * 1.5
        np.testing.assert_allclose(state.stages, np.tile(expect, (4, 1)))
        np.testing.assert_allclose(prob.a, cfg.volume * EX2_ALPHA(cfg.mesh_points()[0]))

    def test_negative_data_rejected(self):
        with pytest.raises(InputError):
            make(rho0=FieldSpec.from_callable(lambda x, z: np.where(z > 0.5, -1.0, 1.0)))


class TestQAndFluxes:
    def test_suffix_sums(self):
        state = bare_state([[0.0, 0.2, 0.3]] * 3, outflow=0.1)
        Q = compute_Q(state)
        np.testing.assert_allclose(Q[0, 1:], [0.6, 0.4])

    @given(st.lists(st.floats(0, 5), min_size=6, max_size=6))
    def test_telescoping(self, vals):
        q = np.array(vals).reshape(3, 2)
        q = np.concatenate([np.zeros((3, 1)), q], axis=1)
        Q = compute_Q(bare_state(q, outflow=0.7))
        np.testing.assert_allclose(Q[:, 1:-1] - Q[:, 2:], q[:, 1:-1], atol=1e-12)

    def test_uniform_lattice_at_threshold_saturates(self):
        qs = 0.01
        q = np.full((5, 4), qs)
        state = bare_state(q)
        a = np.linspace(0.5, 1.0, 5)
        F = compute_fluxes(state, compute_Q(state), a, 1.0, qs)
        np.testing.assert_allclose(F, np.tile(a[:, None], (1, 4)))

    def test_empty_stage_has_zero_flux(self):
        rng = np.random.default_rng(1)
        q = rng.uniform(0, 1, (6, 5))
        q[2, 3] = 0.0
        state = bare_state(q)
        F = compute_fluxes(state, compute_Q(state), np.ones(6), 0.5, 0.1)
        assert F[2, 3] == 0.0

    def test_blocked_neighbor_stops_flux(self):
        # processor 1 holds 3 units on stage 2 while processor 0 has nothing at or beyond it
        q = np.array([[0, 1.0, 0.0], [0, 0.0, 3.0], [0, 1.0, 0.0]])
        state = bare_state(q)
        Q = compute_Q(state)
        assert Q[0, 2] - Q[1, 2] + q[1, 2] == 0.0
        F = compute_fluxes(state, Q, np.ones(3), 1.0, 0.5)
        assert F[1, 2] == 0.0
        assert F[0, 1] > 0

    @given(st.integers(0, 2**32 - 1))
    def test_flux_bounds(self, seed):
        rng = np.random.default_rng(seed)
        q = rng.uniform(0, 1, (5, 6)) * (rng.uniform(size=(5, 6)) > 0.3)
        a = rng.uniform(0, 2, 5)
        state = bare_state(q, outflow=rng.uniform(0, 1))
        F = compute_fluxes(state, compute_Q(state), a, rng.uniform(0.1, 1), 0.3)
        assert np.all(F >= 0)
        assert np.all(F <= a[:, None] * np.clip(q / 0.3, 0, 1) + 1e-15)


class TestRhsAndStepping:
    def test_equal_fluxes_leave_interior_unchanged(self):
        F = np.full((4, 6), 0.3)
        dq, out, inflow = rhs(bare_state(np.zeros((4, 6))), F)
        assert not dq.any()
        np.testing.assert_array_equal(out, 0.3)

    def test_only_inflow(self):
        F = np.zeros((3, 5))
        F[:, 0] = 2.0
        dq, _, _ = rhs(bare_state(np.zeros((3, 5))), F)
        assert np.all(dq[:, 0] == 2.0) and not dq[:, 1:].any()

    @given(st.integers(0, 2**32 - 1))
    def test_column_sums_telescope(self, seed):
        F = np.random.default_rng(seed).uniform(0, 1, (4, 7))
        dq, out, inflow = rhs(bare_state(np.zeros((4, 7))), F)
        np.testing.assert_allclose(dq.sum(axis=-1), inflow - out, atol=1e-14)

    def test_timestep_formula(self):
        cfg = LatticeConfig((1000,), 200, 2e-6)
        dt = ab2_timestep(cfg, np.array([1e-3, 5e-4]))
        assert dt == pytest.approx(2e-6 / (2e-3 * math.sqrt(200_000)), rel=1e-14)
        assert dt == pytest.approx(2.2360679775e-6, rel=1e-10)
        assert ab2_timestep(cfg, np.array([2e-3])) == pytest.approx(dt / 2)

    def test_degenerate_rates(self):
        with pytest.raises(DegenerateConfigurationError):
            ab2_timestep(LatticeConfig((4,), 4, 1.0), np.zeros(4))

    def test_zero_rhs_is_stationary(self):
        cfg, state, prob = make(rho0=FieldSpec.zero())
        nxt = step_ab2(step_ab2(state, prob, 0.01), prob, 0.01)
        assert not nxt.q.any()

    def test_first_step_is_euler_then_ab2(self):
        cfg, s0, prob = make()
        dt = 1e-3
        r0 = evaluate_rhs(s0, prob)
        s1 = step_ab2(s0, prob, dt)
        np.testing.assert_allclose(s1.stages, s0.stages + dt * r0[0], atol=1e-16)
        r1 = evaluate_rhs(s1, prob)
        s2 = step_ab2(s1, prob, dt)
        np.testing.assert_allclose(s2.stages, s1.stages + dt * (1.5 * r1[0] - 0.5 * r0[0]), atol=1e-16)

    def test_nonpositive_dt(self):
        cfg, s0, prob = make()
        with pytest.raises(ParameterError):
            step_ab2(s0, prob, 0.0)


class TestRun:
    def test_t_final_zero(self):
        cfg, s0, prob = make()
        snaps, stats = run_discrete(s0, prob, 0.0)
        assert len(snaps) == 1 and stats.steps == 0
        np.testing.assert_array_equal(snaps[0].q, s0.q)

    def test_zero_data_stays_zero(self):
        cfg, s0, prob = make(rho0=FieldSpec.zero())
        snaps, _ = run_discrete(s0, prob, 0.05, [0.01, 0.03])
        assert [s.t for s in snaps] == [0.01, 0.03, 0.05]
        assert all(not s.q.any() for s in snaps)

    def test_snapshot_times_validated(self):
        cfg, s0, prob = make()
        with pytest.raises(ParameterError):
            run_discrete(s0, prob, 0.1, [0.2])

    def test_snapshot_does_not_perturb_trajectory(self):
        cfg, s0, prob = make(dims=(10,), k_max=10)
        plain, _ = run_discrete(s0.copy(), prob, 0.05)
        with_snaps, _ = run_discrete(s0.copy(), prob, 0.05, [0.0123, 0.031])
        np.testing.assert_allclose(with_snaps[-1].q, plain[-1].q, rtol=0, atol=1e-12)

    def test_example_two_positivity_and_conservation(self):
        cfg, s0, prob = make(dims=(50,), k_max=50)
        snaps, stats = run_discrete(s0, prob, 0.5, [0.1, 0.25])
        assert stats.min_q >= -1e-12
        assert stats.positivity_violations == 0
        assert stats.outflow_decreases == 0
        assert stats.max_unwrap_defect <= 1e-10

    def test_mass_balance(self):
        cfg, s0, prob = make(dims=(12,), k_max=12, rho_bc=FieldSpec.constant(0.4))
        snaps, _ = run_discrete(s0, prob, 0.2)
        s = snaps[-1]
        lhs = s.stages.sum() - s0.stages.sum()
        rhs_ = (s.inflow_accum - s.outflow_accum).sum()
        assert abs(lhs - rhs_) <= 1e-10 * s0.stages.sum()
        assert unwrap_defect(s).max() <= 1e-10

    def test_translation_equivariance(self):
        rho0 = FieldSpec.from_callable(lambda x, z: (1.2 + np.sin(2 * np.pi * x)) * (z <= 0.4))
        cfg, s0, prob = make(dims=(9,), k_max=9, rho0=rho0, alpha=AlphaProfile.constant(1.0))
        shifted = s0.copy()
        shifted.q = np.roll(s0.q, 1, axis=0)
        shifted.initial_mass = np.roll(s0.initial_mass, 1)
        a, _ = run_discrete(s0, prob, 0.1)
        b, _ = run_discrete(shifted, prob, 0.1)
        np.testing.assert_allclose(np.roll(a[-1].q, 1, axis=0), b[-1].q, rtol=0, atol=1e-15)

    def test_two_dimensional_reduction(self):
        def bump(x, z):
            x = x[0] if isinstance(x, tuple) else x
            return (1.0 + 0.5 * np.cos(2 * np.pi * x)) * (z <= 0.5)

        rho0 = FieldSpec.from_callable(bump)
        c1, s1, p1 = make(dims=(6,), k_max=6, rho0=rho0)
        c2 = LatticeConfig.from_rescaled((6, 4), 6, 1.0)
        s2, p2 = init_discrete(c2, rho0, FieldSpec.zero(), EX2_ALPHA, ModelParams(1.0, 1.0, (1.0, 1.5), 1.0))
        # same physical time step on both lattices
        dt = 1e-3
        for _ in range(50):
            s1 = step_ab2(s1, p1, dt)
            s2 = step_ab2(s2, p2, dt)
        r1 = s1.stages / (c1.volume * c1.delta)
        r2 = s2.stages / (c2.volume * c2.delta)
        for j in range(4):
            np.testing.assert_allclose(r2[:, j], r1, rtol=1e-13, atol=1e-13)

    def test_nan_aborts(self):
        from hpcflow.errors import SimulationError

        cfg, s0, prob = make()
        s0.q[3, 2] = np.nan
        with pytest.raises(SimulationError) as exc:
            run_discrete(s0, prob, 0.01)
        # neighbor coupling spreads the NaN before the check, so only the report shape is fixed
        assert "non-finite" in str(exc.value)
        assert set(exc.value.diagnostics) == {"index", "stage", "t"}


class TestReconstruction:
    def test_unit_density(self):
        cfg = LatticeConfig.from_rescaled((5,), 4, 1.0)
        q = np.full((5, 5), cfg.volume * cfg.delta)
        pw = reconstruct_piecewise(bare_state(q), cfg)
        np.testing.assert_allclose(pw.r, 1.0)

    def test_half_open_cells(self):
        cfg = LatticeConfig.from_rescaled((4,), 4, 1.0)
        q = np.zeros((4, 5))
        q[:, 1:] = np.arange(16).reshape(4, 4)
        pw = reconstruct_piecewise(bare_state(q), cfg)
        # x = 0.25 starts cell i=1 (0-based); z = 0.5 closes stage 1 (cell (0.25, 0.5])
        assert pw.cell_index(0.25, 0.5) == (1, 1)
        assert pw.cell_index(0.2499, 0.5001) == (0, 2)
        # below the first cell floor maps to stage 1
        assert pw.cell_index(0.0, 0.1)[1] == 1

    def test_domain(self):
        cfg = LatticeConfig.from_rescaled((4,), 4, 1.0)
        pw = reconstruct_piecewise(bare_state(np.ones((4, 5))), cfg)
        for x, z in ((1.0, 0.5), (-0.1, 0.5), (0.5, 0.0), (0.5, 1.3)):
            with pytest.raises(DomainError):
                pw(x, z)

    def test_mass(self):
        cfg, s0, prob = make(dims=(7,), k_max=9, rho0=FieldSpec.constant(0.8))
        snaps, _ = run_discrete(s0, prob, 0.05)
        pw = reconstruct_piecewise(snaps[-1], cfg)
        assert pw.integral() == pytest.approx(snaps[-1].stages.sum(), rel=1e-13)

    def test_two_dimensional_rejected(self):
        cfg = LatticeConfig.from_rescaled((4, 4), 4, 1.0)
        with pytest.raises(ParameterError):
            reconstruct_piecewise(bare_state(np.ones((4, 4, 5))), cfg)
