from __future__ import annotations

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from qsl_lab.dynamics import (
    TimeGrid,
    fidelity_series,
    ideal_trajectory,
    lab_vs_rotating_leakage,
    leakage_series,
    propagate,
    reservoir_energy_series,
    schedule_propagators,
)
from qsl_lab.errors import IntegratorToleranceError, NotAStateError, PreconditionError
from qsl_lab.models import (
    ModelSpec,
    ResonanceParams,
    Schedule,
    Sinusoid,
    assemble_total,
    constant_model,
    resonance_model,
    resonance_rotating_frame,
    resonance_sector,
    sector_analysis,
)
from qsl_lab.operators import (
    SIGMA_X,
    SIGMA_Z,
    ProductSpace,
    opnorm,
    partial_trace_reservoir,
    random_density,
    random_hermitian,
)

J = 0.05


def swap_setup():
    p = ResonanceParams(1.0, 1.0, J)
    rho0 = np.kron(np.diag([1.0, 0.0]), np.diag([0.0, 1.0])).astype(complex)
    return resonance_model(p), resonance_sector(p), rho0


def driven_model(rng, d_S=2, d_R=3):
    space = ProductSpace(d_S, d_R)
    sched = Schedule(random_hermitian(d_R, rng), ((Sinusoid(0.8, 1.7, 0.3), random_hermitian(d_R, rng)),))
    return ModelSpec(space, np.diag(np.arange(d_S, dtype=float)), sched, 0.2 * random_hermitian(d_S * d_R, rng, norm=1.0))


class TestPropagate:
    def test_decoupled_matches_ideal(self, rng):
        space = ProductSpace(3, 2)
        H_S = random_hermitian(3, rng)
        m = constant_model(space, H_S, random_hermitian(2, rng), np.zeros((6, 6)))
        rho_S, rho_R = random_density(3, rng), random_density(2, rng)
        grid = TimeGrid(3.0, 60)
        traj = propagate(m, np.kron(rho_S, rho_R), grid)
        ideal = ideal_trajectory(H_S, rho_S, grid)
        assert np.max(np.abs(traj.reduced_states - ideal)) < 1e-9

    def test_unitarity_and_state_validity(self, rng):
        m = driven_model(rng)
        traj = propagate(m, random_density(6, rng), TimeGrid(2.0, 200), tolerance=1.0)
        U = traj.propagators[-1]
        assert opnorm(U.conj().T @ U - np.eye(6)) <= 1e-9
        for r in traj.joint_states[::20]:
            assert np.trace(r).real == pytest.approx(1.0, abs=1e-10)
            assert np.allclose(r, r.conj().T, atol=1e-12)
            assert np.linalg.eigvalsh(r).min() > -1e-10
        for r, red in zip(traj.joint_states[::25], traj.reduced_states[::25]):
            assert np.allclose(partial_trace_reservoir(r, m.space), red, atol=1e-12)

    def test_constant_model_matches_expm(self, rng):
        space = ProductSpace(2, 2)
        m = constant_model(space, SIGMA_Z, SIGMA_X, 0.3 * random_hermitian(4, rng, norm=1.0))
        grid = TimeGrid(1.5, 10)
        traj = propagate(m, random_density(4, rng), grid)
        assert np.allclose(traj.propagators[-1], expm(-1.5j * assemble_total(m, 0.0)), atol=1e-12)
        assert traj.method == "exact" and traj.integrator_error_estimate == 0.0

    def test_driven_matches_ode_oracle(self, rng):
        m = driven_model(rng)
        grid = TimeGrid(2.0, 2000)
        traj = propagate(m, np.eye(6) / 6, grid)

        def rhs(t, y):
            return (-1j * assemble_total(m, t) @ y.reshape(6, 6)).ravel()

        sol = solve_ivp(rhs, (0, 2.0), np.eye(6, dtype=complex).ravel(), rtol=1e-11, atol=1e-12, method="DOP853")
        U_ref = sol.y[:, -1].reshape(6, 6)
        err = opnorm(traj.propagators[-1] - U_ref)
        assert err < 1e-5
        # the Richardson estimate tracks the true error
        assert err <= 2.0 * traj.integrator_error_estimate + 1e-10

    def test_step_halving_reduction(self, rng):
        m = driven_model(rng)
        H = lambda t: assemble_total(m, t)  # noqa: E731
        _, e1 = schedule_propagators(H, TimeGrid(2.0, 100))
        _, e2 = schedule_propagators(H, TimeGrid(2.0, 200))
        assert e1 / e2 >= 3.0

    def test_tolerance_flag_and_strict(self, rng, caplog):
        m = driven_model(rng)
        grid = TimeGrid(2.0, 10)
        traj = propagate(m, np.eye(6) / 6, grid, tolerance=1e-12)
        assert traj.tolerance_exceeded
        assert "integrator tolerance exceeded" in caplog.text
        with pytest.raises(IntegratorToleranceError, match="integrator tolerance exceeded"):
            propagate(m, np.eye(6) / 6, grid, tolerance=1e-12, strict=True)

    def test_bad_state(self):
        m, _, _ = swap_setup()
        with pytest.raises(NotAStateError, match="not a state"):
            propagate(m, 2 * np.eye(4) / 4, TimeGrid(1.0, 10))

    def test_swap_leakage(self):
        m, s, rho0 = swap_setup()
        grid = TimeGrid(np.pi / (4 * J), 200)
        traj = propagate(m, rho0, grid)
        p = leakage_series(traj, s)
        assert p.values[-1] >= 0.99
        assert p.values[-1] == pytest.approx(1.0, abs=1e-6)
        # closed form 16 J^2 / 16 J^2 * sin^2(2 J t) on resonance
        assert np.allclose(p.values, np.sin(2 * J * grid.points) ** 2, atol=1e-10)

    def test_detuned_rabi_formula(self):
        p = ResonanceParams(1.3, 1.0, J)
        rho0 = np.kron(np.diag([1.0, 0.0]), np.diag([0.0, 1.0])).astype(complex)
        grid = TimeGrid(40.0, 400)
        leak = leakage_series(propagate(resonance_model(p), rho0, grid), resonance_sector(p)).values
        delta = 0.3
        om = np.sqrt(16 * J**2 + delta**2)
        oracle = 16 * J**2 / om**2 * np.sin(om * grid.points / 2) ** 2
        assert np.allclose(leak, oracle, atol=1e-10)


class TestSeries:
    def test_ideal_commuting_state_constant(self):
        grid = TimeGrid(5.0, 20)
        rho = np.diag([0.3, 0.7]).astype(complex)
        ideal = ideal_trajectory(np.diag([0.0, 2.0]), rho, grid)
        assert np.allclose(ideal, rho)

    def test_ideal_bloch_rotation(self):
        plus = np.full((2, 2), 0.5, dtype=complex)
        ideal = ideal_trajectory(SIGMA_Z / 2, plus, TimeGrid(np.pi, 4))
        minus = np.array([[0.5, -0.5], [-0.5, 0.5]])
        assert np.allclose(ideal[-1], minus, atol=1e-12)

    def test_degenerate_code_ideal_is_static(self, rng):
        H_S = np.diag([0.0, 0.0, 3.0])
        rho = np.zeros((3, 3), dtype=complex)
        rho[:2, :2] = random_density(2, rng)
        assert np.allclose(ideal_trajectory(H_S, rho, TimeGrid(4.0, 8)), rho, atol=1e-12)

    def test_leakage_zero_without_interaction(self, rng):
        space = ProductSpace(2, 2)
        m = constant_model(space, np.diag([0.0, 1.0]), SIGMA_X, np.zeros((4, 4)))
        s = sector_analysis(m.H_S, (-0.1, 0.1))
        rho0 = np.kron(np.diag([1.0, 0.0]), random_density(2, rng))
        p = leakage_series(propagate(m, rho0, TimeGrid(3.0, 30)), s)
        assert np.allclose(p.values, 0.0)

    def test_leakage_one_outside(self, rng):
        m, s, _ = swap_setup()
        rho0 = np.kron(np.diag([0.0, 1.0]), random_density(2, rng))
        p = leakage_series(propagate(m, rho0, TimeGrid(3.0, 30)), s)
        assert p.values[0] == pytest.approx(1.0)

    def test_fidelity_series(self, rng):
        space = ProductSpace(2, 2)
        m = constant_model(space, SIGMA_Z, SIGMA_X, np.zeros((4, 4)))
        rho_S = random_density(2, rng)
        grid = TimeGrid(2.0, 20)
        traj = propagate(m, np.kron(rho_S, random_density(2, rng)), grid)
        f, s = fidelity_series(traj, ideal_trajectory(m.H_S, rho_S, grid))
        assert np.allclose(f.values, 1.0, atol=1e-9)
        assert np.allclose(s.values, 0.0, atol=1e-4)

    def test_swap_fidelity(self):
        m, s, rho0 = swap_setup()
        grid = TimeGrid(np.pi / (4 * J), 100)
        traj = propagate(m, rho0, grid)
        f, _ = fidelity_series(traj, ideal_trajectory(m.H_S, np.diag([1.0, 0.0]), grid))
        assert f.values[0] == pytest.approx(1.0)
        assert f.values[-1] <= 0.02


class TestReservoirEnergy:
    def test_decoupled_constant(self, rng):
        space = ProductSpace(2, 3)
        m = constant_model(space, SIGMA_Z, random_hermitian(3, rng), np.zeros((6, 6)))
        traj = propagate(m, random_density(6, rng), TimeGrid(2.0, 40))
        e, rate = reservoir_energy_series(traj, m)
        assert np.allclose(e.values, e.values[0], atol=1e-12)
        assert np.allclose(rate.values, 0.0, atol=1e-9)

    def test_rate_bounded_by_commutator(self, rng):
        space = ProductSpace(2, 3)
        m = constant_model(space, SIGMA_Z, random_hermitian(3, rng), 0.3 * random_hermitian(6, rng, norm=1.0))
        traj = propagate(m, random_density(6, rng), TimeGrid(5.0, 2000))
        _, rate = reservoir_energy_series(traj, m)
        assert np.max(np.abs(rate.values)) <= m.commutator_norm() + 1e-4

    def test_swap_transfers_energy(self):
        m, _, rho0 = swap_setup()
        traj = propagate(m, rho0, TimeGrid(np.pi / (4 * J), 100))
        e, _ = reservoir_energy_series(traj, m)
        assert e.values[-1] - e.values[0] == pytest.approx(1.0, abs=1e-9)

    def test_driven_rejected(self, rng):
        m = driven_model(rng)
        traj = propagate(m, np.eye(6) / 6, TimeGrid(1.0, 10), tolerance=1.0)
        with pytest.raises(PreconditionError, match="energy-rate check requires constant reservoir"):
            reservoir_energy_series(traj, m)


class TestFrames:
    def test_frame_invariance_constant(self, rng):
        space = ProductSpace(2, 3)
        m = constant_model(space, np.diag([0.0, 1.0]), random_hermitian(3, rng), 0.2 * random_hermitian(6, rng, norm=1.0))
        s = sector_analysis(m.H_S, (-0.1, 0.1))
        lab, rot = lab_vs_rotating_leakage(m, s, random_density(6, rng), TimeGrid(4.0, 100))
        assert np.max(np.abs(lab.values - rot.values)) <= 1e-8

    def test_frame_invariance_driven(self, rng):
        m = driven_model(rng)
        s = sector_analysis(m.H_S, (-0.1, 0.1))
        lab, rot = lab_vs_rotating_leakage(m, s, random_density(6, rng), TimeGrid(2.0, 200))
        assert np.max(np.abs(lab.values - rot.values)) <= 1e-8

    def test_zero_reservoir_frames_identical(self, rng):
        space = ProductSpace(2, 2)
        m = constant_model(space, SIGMA_Z, np.zeros((2, 2)), random_hermitian(4, rng))
        s = sector_analysis(m.H_S, (0.9, 1.1))
        lab, rot = lab_vs_rotating_leakage(m, s, random_density(4, rng), TimeGrid(2.0, 20))
        assert np.array_equal(lab.values, rot.values)

    def test_resonance_rotating_frame_gap(self):
        p = ResonanceParams(1.4, 1.0, J)
        q = resonance_rotating_frame(p)
        assert resonance_sector(q).gap == pytest.approx(0.4)
        rho0 = np.kron(np.diag([1.0, 0.0]), np.diag([0.0, 1.0])).astype(complex)
        grid = TimeGrid(30.0, 300)
        a = leakage_series(propagate(resonance_model(p), rho0, grid), resonance_sector(p)).values
        b = leakage_series(propagate(resonance_model(q), rho0, grid), resonance_sector(q)).values
        assert np.allclose(a, b, atol=1e-10)
