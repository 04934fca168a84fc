"""System-reservoir models, spectral sectors and the two-qubit resonance family."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import NamedTuple, Sequence, Union

import numpy as np

from .errors import AdmissibilityError, SectorError, ShapeError
from .operators import (
    IDENTITY_2,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    ProductSpace,
    as_operator,
    embed_reservoir,
    embed_system,
    commutator,
    hermitian_basis,
    opnorm,
    require_hermitian,
    tensor,
)

# ---------------------------------------------------------------------------
# Time envelopes and reservoir schedules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Constant:
    c: float = 1.0

    def value(self, t: float) -> float:
        return float(self.c)

    def derivative(self, t: float) -> float:
        return 0.0

    def max_abs(self, t_max: float | None = None) -> float:
        return abs(float(self.c))


@dataclass(frozen=True)
class Sinusoid:
    """``amplitude * sin(angular_frequency * t + phase)``."""

    amplitude: float
    angular_frequency: float
    phase: float = 0.0

    def value(self, t: float) -> float:
        return self.amplitude * math.sin(self.angular_frequency * t + self.phase)

    def derivative(self, t: float) -> float:
        return self.amplitude * self.angular_frequency * math.cos(self.angular_frequency * t + self.phase)

    def max_abs(self, t_max: float | None = None) -> float:
        return abs(self.amplitude)


@dataclass(frozen=True)
class Ramp:
    slope: float

    def value(self, t: float) -> float:
        return self.slope * t

    def derivative(self, t: float) -> float:
        return float(self.slope)

    def max_abs(self, t_max: float | None = None) -> float:
        if self.slope == 0:
            return 0.0
        return math.inf if t_max is None else abs(self.slope) * t_max


Envelope = Union[Constant, Sinusoid, Ramp]


@dataclass(frozen=True)
class Schedule:
    """Reservoir Hamiltonian ``H_R(t) = base + sum_k envelope_k(t) * op_k``."""

    base: np.ndarray
    drives: tuple = ()

    def __post_init__(self):
        base = require_hermitian(self.base, "H_R base")
        object.__setattr__(self, "base", base)
        drives = []
        for env, op in self.drives:
            op = require_hermitian(op, "H_R drive operator")
            if op.shape != base.shape:
                raise ShapeError(f"shape error: drive operator {op.shape} vs base {base.shape}")
            drives.append((env, op))
        object.__setattr__(self, "drives", tuple(drives))

    @classmethod
    def constant(cls, H_R) -> "Schedule":
        return cls(np.asarray(H_R, dtype=complex))

    @property
    def dim(self) -> int:
        return self.base.shape[0]

    @property
    def is_constant(self) -> bool:
        return all(isinstance(env, Constant) for env, _ in self.drives)

    def at(self, t: float) -> np.ndarray:
        h = self.base.copy()
        for env, op in self.drives:
            h = h + env.value(t) * op
        return h

    def derivative(self, t: float) -> np.ndarray:
        d = np.zeros_like(self.base)
        for env, op in self.drives:
            d = d + env.derivative(t) * op
        return d


# ---------------------------------------------------------------------------
# Model specification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelSpec:
    """``H_tot(t) = H_S (x) I + I (x) H_R(t) + H_I``.

    ``system_shift`` is a system operator ``W`` moved from the reservoir term
    into ``H_S`` by :func:`rotating_frame_shift`; the physical Hamiltonian is
    unchanged, while bound formulas see the reservoir term ``I (x) H_R(t) - W (x) I``.
    """

    space: ProductSpace
    H_S: np.ndarray
    H_R: Schedule
    H_I: np.ndarray
    label: str = ""
    system_shift: np.ndarray | None = None

    def __post_init__(self):
        H_S = require_hermitian(self.H_S, "H_S")
        if H_S.shape != (self.space.d_S, self.space.d_S):
            raise ShapeError(f"shape error: H_S has shape {H_S.shape}, expected d_S={self.space.d_S}")
        if self.H_R.dim != self.space.d_R:
            raise ShapeError(f"shape error: H_R has dim {self.H_R.dim}, expected d_R={self.space.d_R}")
        H_I = require_hermitian(self.H_I, "H_I")
        self.space.check(H_I, "H_I")
        object.__setattr__(self, "H_S", H_S)
        object.__setattr__(self, "H_I", H_I)
        if self.system_shift is not None:
            W = require_hermitian(self.system_shift, "system_shift")
            object.__setattr__(self, "system_shift", W)

    @cached_property
    def interaction_norm(self) -> float:
        return opnorm(self.H_I)

    @property
    def constant_reservoir(self) -> bool:
        return self.H_R.is_constant

    @cached_property
    def _joint_terms(self) -> tuple:
        """Embedded constant part and drive operators, computed once."""
        static_R = embed_reservoir(self.H_R.base, self.space)
        if self.system_shift is not None:
            static_R = static_R - embed_system(self.system_shift, self.space)
        drives = tuple((env, embed_reservoir(op, self.space)) for env, op in self.H_R.drives)
        static_tot = embed_system(self.H_S, self.space) + static_R + self.H_I
        return static_R, drives, static_tot

    @cached_property
    def _commutator_terms(self) -> tuple:
        static_R, drives, _ = self._joint_terms
        return commutator(self.H_I, static_R), tuple((env, commutator(self.H_I, op)) for env, op in drives)

    def reservoir_joint(self, t: float) -> np.ndarray:
        """Reservoir term as it enters the bound formulas (joint space)."""
        static_R, drives, _ = self._joint_terms
        h = static_R.copy()
        for env, op in drives:
            h += env.value(t) * op
        return h

    def reservoir_joint_derivative(self, t: float) -> np.ndarray:
        return embed_reservoir(self.H_R.derivative(t), self.space)

    def commutator_norm(self, t: float = 0.0) -> float:
        """``|| [H_I, H_R(t)] ||`` with the reservoir term embedded in the joint space."""
        c0, drives = self._commutator_terms
        c = c0.copy()
        for env, op in drives:
            c += env.value(t) * op
        return opnorm(c)


def assemble_total(model: ModelSpec, t: float) -> np.ndarray:
    """Joint Hamiltonian ``H_S (x) I + I (x) H_R(t) + H_I``."""
    _, drives, h = model._joint_terms
    h = h.copy()
    for env, op in drives:
        h += env.value(t) * op
    return 0.5 * (h + h.conj().T)


# ---------------------------------------------------------------------------
# Spectral sectors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpectralSector:
    """Code subspace ``C`` of ``H_S`` selected by an energy interval."""

    interval: tuple
    P_C: np.ndarray
    Q_C: np.ndarray
    Q_plus: np.ndarray
    Q_minus: np.ndarray
    gap: float
    spread: float
    dim_C: int
    code_basis: np.ndarray
    code_energies: np.ndarray

    @property
    def d_S(self) -> int:
        return self.P_C.shape[0]


def _cluster(values: np.ndarray, tol: float) -> list[list[int]]:
    groups: list[list[int]] = []
    for i, v in enumerate(values):
        if groups and v - values[groups[-1][-1]] <= tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def sector_analysis(H_S, interval: Sequence[float], degeneracy_tol: float | None = None) -> SpectralSector:
    """Split the spectrum of ``H_S`` into the code sector (inside ``interval``) and the rest."""
    a, b = float(interval[0]), float(interval[1])
    if not (a <= b):
        raise SectorError(f"malformed interval [{a}, {b}]")
    H_S = require_hermitian(H_S, "H_S")
    w, v = np.linalg.eigh(H_S)
    if degeneracy_tol is None:
        degeneracy_tol = 1e-9 * max(float(np.max(np.abs(w))), 1.0)

    groups = _cluster(w, degeneracy_tol)
    means = [float(np.mean(w[g])) for g in groups]
    inside = [a - degeneracy_tol <= m <= b + degeneracy_tol for m in means]
    if not any(inside):
        raise SectorError(f"no eigenvalue in interval [{a}, {b}]")

    in_e = [m for m, f in zip(means, inside) if f]
    out_e = [m for m, f in zip(means, inside) if not f]
    lo, hi = min(in_e), max(in_e)
    gap = min((abs(x - y) for x in in_e for y in out_e), default=math.inf)

    def proj(idx):
        cols = v[:, idx]
        return cols @ cols.conj().T

    in_idx = [i for g, f in zip(groups, inside) if f for i in g]
    plus_idx = [i for g, f, m in zip(groups, inside, means) if not f and m > hi for i in g]
    minus_idx = [i for g, f, m in zip(groups, inside, means) if not f and m < lo for i in g]
    P_C = proj(in_idx)
    d = H_S.shape[0]
    return SpectralSector(
        interval=(a, b),
        P_C=P_C,
        Q_C=np.eye(d, dtype=complex) - P_C,
        Q_plus=proj(plus_idx),
        Q_minus=proj(minus_idx),
        gap=gap,
        spread=hi - lo,
        dim_C=len(in_idx),
        code_basis=v[:, in_idx],
        code_energies=np.array([means[k] for k, f in enumerate(inside) if f]),
    )


# ---------------------------------------------------------------------------
# Two-qubit resonance family
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ResonanceParams:
    """System qubit (gap ``dE1``) exchange-coupled to reservoir qubit (gap ``dE2``).

    ``n_rest`` extra reservoir qubits may be attached; the first one couples to
    the reservoir qubit through ``h2rest_strength * envelope(t) * sx (x) sx``,
    and ``rest_gaps`` give ``H_rest = sum_k rest_gaps[k] * sz_k / 2``.
    """

    dE1: float
    dE2: float
    J: float
    n_rest: int = 0
    h2rest_strength: float = 0.0
    h2rest_envelope: Envelope = field(default_factory=Constant)
    rest_gaps: tuple = ()

    def __post_init__(self):
        if self.n_rest < 0:
            raise ValueError("n_rest must be non-negative")
        if self.h2rest_strength != 0 and self.n_rest < 1:
            raise ValueError("h2rest coupling needs at least one extra reservoir qubit")
        if len(self.rest_gaps) > self.n_rest:
            raise ValueError("more rest_gaps than extra reservoir qubits")

    def h2rest_norm_max(self, t_max: float | None = None) -> float:
        return abs(self.h2rest_strength) * self.h2rest_envelope.max_abs(t_max)


def exchange_operator() -> np.ndarray:
    """``sigma_1 . sigma_2`` on two qubits; spectrum ``{1, 1, 1, -3}``."""
    return np.kron(SIGMA_X, SIGMA_X) + np.kron(SIGMA_Y, SIGMA_Y) + np.kron(SIGMA_Z, SIGMA_Z)


def _on_qubit(op: np.ndarray, k: int, n: int) -> np.ndarray:
    out = np.eye(1, dtype=complex)
    for j in range(n):
        out = np.kron(out, op if j == k else IDENTITY_2)
    return out


def resonance_model(p: ResonanceParams, label: str = "resonance") -> ModelSpec:
    n_r = 1 + p.n_rest  # reservoir qubit 2 plus rest qubits
    d_R = 2**n_r
    space = ProductSpace(2, d_R)
    H_S = 0.5 * p.dE1 * SIGMA_Z
    base = 0.5 * p.dE2 * _on_qubit(SIGMA_Z, 0, n_r)
    for k, g in enumerate(p.rest_gaps):
        base = base + 0.5 * g * _on_qubit(SIGMA_Z, 1 + k, n_r)
    drives = ()
    if p.h2rest_strength != 0:
        op = p.h2rest_strength * _on_qubit(SIGMA_X, 0, n_r) @ _on_qubit(SIGMA_X, 1, n_r)
        drives = ((p.h2rest_envelope, op),)
    H_I = p.J * tensor(exchange_operator(), np.eye(2**p.n_rest, dtype=complex))
    return ModelSpec(space, H_S, Schedule(base, drives), H_I, label=label)


def resonance_sector(p: ResonanceParams) -> SpectralSector:
    """Code space spanned by the system ``sigma_z = +1`` state."""
    e = 0.5 * p.dE1
    return sector_analysis(0.5 * p.dE1 * SIGMA_Z, (e, e))


def resonance_rotating_frame(p: ResonanceParams) -> ResonanceParams:
    """Parameters seen in the frame co-rotating at the reservoir-qubit frequency.

    Valid when nothing else in the reservoir couples to qubit 2
    (``h2rest_strength == 0``); both gaps are then reduced by ``dE2``.
    """
    if p.h2rest_strength != 0:
        raise ValueError("co-rotating frame is time-independent only without h2rest coupling")
    return replace(p, dE1=p.dE1 - p.dE2, dE2=0.0)


# ---------------------------------------------------------------------------
# Frame shift and operator Schmidt decomposition
# ---------------------------------------------------------------------------


def rotating_frame_shift(model: ModelSpec, sector: SpectralSector, F_shift: float) -> tuple[ModelSpec, SpectralSector]:
    """Move ``F (Q_plus - Q_minus)`` from the reservoir term into ``H_S``.

    The code-space gap grows to ``gap + F``; the physical dynamics are unchanged.
    """
    threshold = 2.0 * model.interaction_norm - sector.gap
    if not F_shift > threshold:
        raise AdmissibilityError(
            f"shift below admissibility threshold: F={F_shift} must exceed {threshold}"
        )
    if F_shift == 0:
        return model, sector
    X = F_shift * (sector.Q_plus - sector.Q_minus)
    shift = X if model.system_shift is None else model.system_shift + X
    new_model = replace(model, H_S=model.H_S + X, system_shift=shift)
    new_sector = replace(
        sector,
        interval=(float(sector.code_energies.min()), float(sector.code_energies.max())),
        gap=sector.gap + F_shift,
    )
    return new_model, new_sector


class SchmidtTerm(NamedTuple):
    system: np.ndarray
    reservoir: np.ndarray
    weight: float


def operator_schmidt(H_I, space: ProductSpace, rtol: float = 1e-12) -> list[SchmidtTerm]:
    """``H_I = sum_a weight_a S_a (x) B_a`` with Hermitian, HS-orthonormal factors.

    Coefficients of ``H_I`` in product Hermitian bases form a real matrix; its
    SVD gives the decomposition.
    """
    H = require_hermitian(H_I, "H_I")
    space.check(H, "H_I")
    Es = hermitian_basis(space.d_S)
    Fs = hermitian_basis(space.d_R)
    r = H.reshape(space.d_S, space.d_R, space.d_S, space.d_R)
    coeff = np.real(np.einsum("xji,yba,iajb->xy", Es, Fs, r))
    u, s, vt = np.linalg.svd(coeff)
    if s.size == 0 or s[0] <= 1e-14:
        return []
    keep = s > rtol * s[0]
    terms = []
    for k in np.flatnonzero(keep):
        S = np.einsum("x,xij->ij", u[:, k], Es)
        B = np.einsum("y,yij->ij", vt[k, :], Fs)
        terms.append(SchmidtTerm(S, B, float(s[k])))
    return terms


def constant_model(space: ProductSpace, H_S, H_R, H_I, label: str = "") -> ModelSpec:
    """Convenience constructor with a constant reservoir Hamiltonian."""
    return ModelSpec(space, as_operator(H_S), Schedule.constant(H_R), as_operator(H_I), label=label)
