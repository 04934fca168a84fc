"""Joint propagation under ``H_tot(t)`` and the measured time series."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import IntegratorToleranceError, PreconditionError, ShapeError
from .models import ModelSpec, SpectralSector, assemble_total
from .operators import (
    embed_reservoir,
    fidelity_batch,
    herm_eigh,
    opnorm,
    partial_trace_reservoir,
    propagators_from_eigh,
    reduced_from_vector,
    require_hermitian,
    sin_half_angle,
    validate_state,
)

log = logging.getLogger(__name__)

DEFAULT_STEPS = 2000
DEFAULT_INTEGRATOR_TOL = 1e-6


@dataclass(frozen=True)
class TimeGrid:
    t_max: float
    steps: int = DEFAULT_STEPS

    def __post_init__(self):
        if not self.t_max > 0:
            raise ValueError(f"t_max must be positive, got {self.t_max}")
        if int(self.steps) < 2:
            raise ValueError(f"steps must be >= 2, got {self.steps}")
        object.__setattr__(self, "steps", int(self.steps))

    @property
    def h(self) -> float:
        return self.t_max / self.steps

    @property
    def points(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.h

    def __len__(self) -> int:
        return self.steps + 1


@dataclass(frozen=True)
class SeriesReal:
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.grid),):
            raise ShapeError(f"shape error: series of length {v.shape} on grid of {len(self.grid)} points")
        object.__setattr__(self, "values", v)

    @property
    def times(self) -> np.ndarray:
        return self.grid.points


@dataclass(frozen=True)
class Trajectory:
    grid: TimeGrid
    joint_states: np.ndarray
    reduced_states: np.ndarray
    propagators: np.ndarray
    integrator_error_estimate: float
    tolerance_exceeded: bool = False
    method: str = "exact"


def propagator_series(model: ModelSpec, grid: TimeGrid) -> tuple[np.ndarray, float, str]:
    """Joint propagators ``U(t_k)`` with an error estimate for ``U(t_max)``.

    Constant reservoirs are diagonalized once (exact); driven ones use the
    midpoint exponential with one step-halving comparison at ``t_max``.
    """
    if model.constant_reservoir:
        w, v = herm_eigh(assemble_total(model, 0.0))
        return propagators_from_eigh(w, v, grid.points), 0.0, "exact"
    Us, est = schedule_propagators(lambda t: assemble_total(model, t), grid)
    return Us, est, "midpoint"


def schedule_propagators(hamiltonian, grid: TimeGrid, richardson: bool = True) -> tuple[np.ndarray, float]:
    """Midpoint-exponential propagators for an arbitrary Hermitian schedule ``t -> H(t)``."""

    def run(steps, keep):
        h = grid.t_max / steps
        U = np.eye(hamiltonian(0.0).shape[0], dtype=complex)
        out = [U]
        for k in range(steps):
            w, v = np.linalg.eigh(hamiltonian((k + 0.5) * h))
            U = ((v * np.exp(-1j * h * w)) @ v.conj().T) @ U
            if keep:
                out.append(U)
        return np.array(out) if keep else U

    Us = run(grid.steps, True)
    # second order: error(U_h) ~ 4/3 * |U_h - U_{h/2}|
    est = 4.0 / 3.0 * opnorm(Us[-1] - run(2 * grid.steps, False)) if richardson else 0.0
    return Us, est


def propagate(
    model: ModelSpec,
    rho0_joint,
    grid: TimeGrid,
    tolerance: float = DEFAULT_INTEGRATOR_TOL,
    strict: bool = False,
) -> Trajectory:
    """Evolve a joint state under the model's total Hamiltonian.

    An integrator error estimate above ``tolerance`` is logged and flagged on
    the trajectory; with ``strict=True`` it raises instead.
    """
    rho0 = validate_state(rho0_joint, "rho0_joint")
    model.space.check(rho0, "rho0_joint")
    Us, est, method = propagator_series(model, grid)
    exceeded = est > tolerance
    if exceeded:
        msg = f"integrator tolerance exceeded: estimate {est:.3e} > {tolerance:.3e}"
        if strict:
            raise IntegratorToleranceError(msg)
        log.warning(msg)

    w, v = np.linalg.eigh(rho0)
    if w[-1] > 1.0 - 1e-12:
        # pure initial state: propagate the vector
        psi = Us @ v[:, -1]
        joint = np.einsum("ki,kj->kij", psi, psi.conj())
        reduced = np.array([reduced_from_vector(p, model.space) for p in psi])
    else:
        joint = Us @ rho0 @ np.conj(np.transpose(Us, (0, 2, 1)))
        reduced = np.array([partial_trace_reservoir(r, model.space) for r in joint])
    return Trajectory(grid, joint, reduced, Us, float(est), bool(exceeded), method)


def ideal_trajectory(H_S, rho0_sys, grid: TimeGrid) -> np.ndarray:
    """``exp(-i t H_S) rho(0) exp(i t H_S)`` on every grid point."""
    rho0 = validate_state(rho0_sys, "rho0_sys")
    w, v = herm_eigh(H_S)
    Us = propagators_from_eigh(w, v, grid.points)
    return Us @ rho0 @ np.conj(np.transpose(Us, (0, 2, 1)))


def leakage_series(traj: Trajectory, sector: SpectralSector) -> SeriesReal:
    """``p_leak(t) = Tr[rho(t) Q_C]`` clamped to ``[0, 1]``."""
    if traj.reduced_states.shape[1] != sector.d_S:
        raise ShapeError("shape error: sector and trajectory act on different system spaces")
    p = np.real(np.einsum("kij,ji->k", traj.reduced_states, sector.Q_C))
    return SeriesReal(traj.grid, np.clip(p, 0.0, 1.0))


def fidelity_series(traj: Trajectory, ideal) -> tuple[SeriesReal, SeriesReal]:
    """Uhlmann fidelity to the ideal states and ``sin(Theta/2) = sqrt((1-F)/2)``."""
    if len(ideal) != len(traj.grid):
        raise ShapeError(f"shape error: {len(ideal)} ideal states for {len(traj.grid)} grid points")
    f = fidelity_batch(traj.reduced_states, np.asarray(ideal))
    return SeriesReal(traj.grid, f), SeriesReal(traj.grid, sin_half_angle(f))


def reservoir_energy_series(traj: Trajectory, model: ModelSpec) -> tuple[SeriesReal, SeriesReal]:
    """Mean reservoir energy ``Tr[rho_SR(t) H_R]`` and its finite-difference rate."""
    if not model.constant_reservoir:
        raise PreconditionError("energy-rate check requires constant reservoir")
    H_R = embed_reservoir(model.H_R.at(0.0), model.space)
    e = np.real(np.einsum("kij,ji->k", traj.joint_states, H_R))
    rate = np.gradient(e, traj.grid.h, edge_order=2)
    return SeriesReal(traj.grid, e), SeriesReal(traj.grid, rate)


def reservoir_frame(model: ModelSpec, grid: TimeGrid) -> np.ndarray:
    """``Z_R(t_k)`` solving ``dZ/dt = i Z H_R(t)``, ``Z(0) = I`` (reservoir space)."""
    if model.constant_reservoir:
        w, v = herm_eigh(model.H_R.at(0.0))
        return propagators_from_eigh(w, v, -grid.points)
    h = grid.h
    Z = np.eye(model.space.d_R, dtype=complex)
    out = [Z]
    for k in range(grid.steps):
        w, v = np.linalg.eigh(require_hermitian(model.H_R.at((k + 0.5) * h)))
        Z = Z @ ((v * np.exp(1j * h * w)) @ v.conj().T)
        out.append(Z)
    return np.array(out)


def lab_vs_rotating_leakage(model: ModelSpec, sector: SpectralSector, rho0, grid: TimeGrid) -> tuple[SeriesReal, SeriesReal]:
    """Leakage measured in the lab frame and in the frame rotating with ``H_R``."""
    traj = propagate(model, rho0, grid)
    lab = leakage_series(traj, sector)
    d_S = model.space.d_S
    Zs = reservoir_frame(model, grid)
    rot = []
    for Z, rho in zip(Zs, traj.joint_states):
        W = np.kron(np.eye(d_S), Z)
        rho_hat = W @ rho @ W.conj().T
        r = partial_trace_reservoir(rho_hat, model.space)
        rot.append(np.real(np.trace(r @ sector.Q_C)))
    return lab, SeriesReal(grid, np.clip(rot, 0.0, 1.0))
