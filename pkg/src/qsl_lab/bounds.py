"""Speed-limit bounds on leakage and fidelity loss as functions of model data."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import minimize, minimize_scalar

from .dynamics import TimeGrid
from .errors import (
    GapConditionError,
    OptimizerStalledError,
    PreconditionError,
)
from .models import ModelSpec, ResonanceParams, SpectralSector, operator_schmidt, rotating_frame_shift
from .operators import (
    ProductSpace,
    commutator,
    hermitian_basis,
    opnorm,
    require_hermitian,
)

SQRT2 = math.sqrt(2.0)
# smoothing parameters for the induced-splitting continuation, relative to ||P0 H_I P0||
MU_LEVELS = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8)

# ---------------------------------------------------------------------------
# Result containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Thresholds:
    """Leakage threshold ``p0`` and the derived constant ``c(p0)``."""

    p0: float

    def __post_init__(self):
        if not 0.0 < self.p0 < 1.0:
            raise ValueError(f"p0 must lie in (0, 1), got {self.p0}")

    @property
    def c_of_p0(self) -> float:
        return math.sqrt(2.0 * (1.0 - math.sqrt(1.0 - self.p0)))

    @property
    def fidelity_threshold(self) -> float:
        return math.sqrt(1.0 - self.p0)


@dataclass(frozen=True)
class BoundSeries:
    """Bound values on a time grid with their additive/multiplicative pieces.

    ``kind`` is ``"probability"`` (bounds ``p_leak``), ``"sin_half_angle"``
    (bounds ``sin(Theta/2)``) or ``"root_infidelity"`` (bounds ``sqrt(1-F)``).
    """

    grid: TimeGrid
    total: np.ndarray
    components: dict = field(default_factory=dict)
    kind: str = "probability"
    quadrature_error_estimate: float = 0.0

    @property
    def clipped(self) -> np.ndarray:
        cap = {"probability": 1.0, "sin_half_angle": 1.0 / SQRT2, "root_infidelity": 1.0}[self.kind]
        return np.minimum(self.total, cap)

    @property
    def vacuous(self) -> np.ndarray:
        cap = {"probability": 1.0, "sin_half_angle": 1.0 / SQRT2, "root_infidelity": 1.0}[self.kind]
        return self.total >= cap

    def at(self, t: float) -> float:
        return float(np.interp(t, self.grid.points, self.total))


@dataclass(frozen=True)
class QSLBound:
    value: float
    branch: str
    applicable: bool = True


@dataclass(frozen=True)
class QSLTimes:
    tau_leak_lower: float
    tau_fid_lower: float | None
    tau_min_lower: float
    provenance: dict
    large_gap_applicable: bool

    def ordering_holds(self) -> bool:
        chain = [self.tau_leak_lower]
        if self.tau_fid_lower is not None:
            chain.append(self.tau_fid_lower)
        chain.append(self.tau_min_lower)
        return all(a >= b * (1 - 1e-12) for a, b in zip(chain, chain[1:]))


# ---------------------------------------------------------------------------
# Omega(t) and its integral
# ---------------------------------------------------------------------------


def _check_gap(model: ModelSpec, sector: SpectralSector) -> None:
    if not sector.gap > 2.0 * model.interaction_norm:
        raise GapConditionError(
            f"gap condition violated; use rotating_frame_shift "
            f"(gap {sector.gap:.6g} <= 2 ||H_I|| = {2 * model.interaction_norm:.6g})"
        )


def omega(model: ModelSpec, sector: SpectralSector, t: float) -> float:
    """Leakage rate ``2 ||[H_I, H_R(t)]|| / (gap - 2 ||H_I||)``."""
    _check_gap(model, sector)
    if math.isinf(sector.gap):
        return 0.0
    return 2.0 * model.commutator_norm(t) / (sector.gap - 2.0 * model.interaction_norm)


def commutator_norm_series(model: ModelSpec, grid: TimeGrid) -> np.ndarray:
    if model.constant_reservoir:
        return np.full(len(grid), model.commutator_norm(0.0))
    return np.array([model.commutator_norm(t) for t in grid.points])


def _cumulative(values: np.ndarray, grid: TimeGrid) -> tuple[np.ndarray, float]:
    """Trapezoid running integral plus a step-doubling error estimate at ``t_max``."""
    integral = cumulative_trapezoid(values, dx=grid.h, initial=0.0)
    if np.ptp(values) == 0 or grid.steps % 2:
        return integral, 0.0
    coarse = np.trapezoid(values[::2], dx=2 * grid.h)
    return integral, abs(integral[-1] - coarse) / 3.0


def omega_series(model: ModelSpec, sector: SpectralSector, grid: TimeGrid) -> np.ndarray:
    _check_gap(model, sector)
    if math.isinf(sector.gap):
        return np.zeros(len(grid))
    return 2.0 * commutator_norm_series(model, grid) / (sector.gap - 2.0 * model.interaction_norm)


def _ratio(x: float, gap: float) -> float:
    return 0.0 if math.isinf(gap) else x / gap


# ---------------------------------------------------------------------------
# Leakage, infidelity and universal bounds
# ---------------------------------------------------------------------------


def leakage_bound(model: ModelSpec, sector: SpectralSector, grid: TimeGrid) -> BoundSeries:
    """``p_leak(t) <= (4 ||H_I|| / gap + int_0^t Omega)^2`` for states starting in C."""
    om = omega_series(model, sector, grid)
    om_int, qerr = _cumulative(om, grid)
    static = np.full(len(grid), 4.0 * _ratio(model.interaction_norm, sector.gap))
    amp = static + om_int
    return BoundSeries(
        grid,
        amp**2,
        {"static_rotation": static, "omega_integral": om_int, "amplitude": amp},
        kind="probability",
        quadrature_error_estimate=2.0 * float(amp[-1]) * qerr,
    )


def infidelity_bound(
    model: ModelSpec,
    sector: SpectralSector,
    grid: TimeGrid,
    induced: float | None = None,
) -> BoundSeries:
    """Bound on ``sin(Theta/2)`` between actual and ideal system states."""
    om = omega_series(model, sector, grid)
    om_int, qerr = _cumulative(om, grid)
    if induced is None:
        induced = induced_splitting(model.H_I, sector, model.space).value
    h = model.interaction_norm
    t = grid.points
    static = np.full(len(grid), 2.0 * _ratio(h, sector.gap))
    is_term = 0.5 * induced * t
    spread_term = 2.0 * _ratio(h * (sector.spread + h), sector.gap) * t
    return BoundSeries(
        grid,
        static + om_int + is_term + spread_term,
        {
            "static_rotation": static,
            "omega_integral": om_int,
            "induced_splitting_term": is_term,
            "spread_term": spread_term,
            "induced_splitting": np.full(len(grid), induced),
        },
        kind="sin_half_angle",
        quadrature_error_estimate=qerr,
    )


def universal_bound(H_I, grid: TimeGrid) -> BoundSeries:
    """Gap-free bound ``sin(Theta/2) <= t (l_max - l_min) / 4 <= t ||H_I|| / 2``."""
    H = require_hermitian(H_I, "H_I")
    w = np.linalg.eigvalsh(H)
    t = grid.points
    width_branch = t * float(w[-1] - w[0]) / 4.0
    norm_branch = t * float(np.max(np.abs(w))) / 2.0
    return BoundSeries(
        grid,
        np.minimum(width_branch, norm_branch),
        {"spectral_width": width_branch, "operator_norm": norm_branch},
        kind="sin_half_angle",
    )


def modified_hamiltonian_bound(
    model: ModelSpec,
    sector: SpectralSector,
    K_S,
    grid: TimeGrid,
    tol: float = 1e-9,
) -> BoundSeries:
    """Bound on ``sqrt(1 - F)`` against evolution under ``H_S + K_S``.

    Requires the projected interaction to be a pure system term,
    ``P0 H_I P0 = (P_C K_S P_C) (x) I_R``, and a constant reservoir.
    """
    if not model.constant_reservoir:
        raise PreconditionError("modified-Hamiltonian bound requires a constant reservoir")
    K_S = require_hermitian(K_S, "K_S")
    P0 = np.kron(sector.P_C, np.eye(model.space.d_R))
    lhs = P0 @ model.H_I @ P0
    rhs = np.kron(sector.P_C @ K_S @ sector.P_C, np.eye(model.space.d_R))
    if opnorm(lhs - rhs) > tol * max(1.0, model.interaction_norm):
        raise PreconditionError("not a pure Lamb-shift interaction")
    _check_gap(model, sector)
    h = model.interaction_norm
    t = grid.points
    static = np.full(len(grid), _ratio(h, sector.gap))
    if math.isinf(sector.gap):
        leak_rate = 0.0
    else:
        leak_rate = model.commutator_norm(0.0) / (sector.gap - 2.0 * h)
    rate = leak_rate + _ratio(h * (sector.spread + h), sector.gap)
    total = SQRT2 * (static + rate * t)
    return BoundSeries(
        grid,
        total,
        {"static_rotation": SQRT2 * static, "rate_term": SQRT2 * rate * t},
        kind="root_infidelity",
    )


# ---------------------------------------------------------------------------
# Induced splitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ISCertificate:
    lower: float
    upper: float
    qed_condition: bool
    iterations: int
    converged: bool


@dataclass(frozen=True)
class ISResult:
    value: float
    argmin_K: np.ndarray
    certificate: ISCertificate


def _code_block(H_I: np.ndarray, sector: SpectralSector, space: ProductSpace) -> np.ndarray:
    """``H_I`` compressed to ``C (x) H_R`` in the code eigenbasis."""
    W = np.kron(sector.code_basis, np.eye(space.d_R))
    return W.conj().T @ H_I @ W


def _tr_code(M: np.ndarray, d_C: int, d_R: int) -> np.ndarray:
    return np.einsum("iaib->ab", M.reshape(d_C, d_R, d_C, d_R))


def _certificate(A: np.ndarray, d_C: int, d_R: int, rng: np.random.Generator, n_random: int = 12) -> float:
    """Lower bound ``max 1/2 || <c1|A|c1> - <c2|A|c2> ||`` over code vectors.

    ``<c|A|c>`` is a reservoir operator; the difference for two code vectors
    does not depend on ``K``, so half its norm bounds the minimum from below.
    Each start is improved by alternating maximization.
    """
    T = A.reshape(d_C, d_R, d_C, d_R)

    def cond(c):  # <c| A |c>_S
        return np.einsum("i,iajb,j->ab", c.conj(), T, c)

    def sys_op(r):  # <r| A |r>_R
        return np.einsum("a,iajb,b->ij", r.conj(), T, r)

    starts = [(np.eye(d_C)[i], np.eye(d_C)[j]) for i in range(d_C) for j in range(i + 1, d_C)]
    for _ in range(n_random):
        c1 = rng.standard_normal(d_C) + 1j * rng.standard_normal(d_C)
        c2 = rng.standard_normal(d_C) + 1j * rng.standard_normal(d_C)
        starts.append((c1 / np.linalg.norm(c1), c2 / np.linalg.norm(c2)))

    best = 0.0
    for c1, c2 in starts:
        prev = -1.0
        for _ in range(50):
            D = cond(c1) - cond(c2)
            w, v = np.linalg.eigh(0.5 * (D + D.conj().T))
            k = int(np.argmax(np.abs(w)))
            val = 0.5 * abs(w[k])
            if val <= prev * (1 + 1e-12):
                break
            prev = val
            hs = sys_op(v[:, k])
            ws, vs = np.linalg.eigh(0.5 * (hs + hs.conj().T))
            top, bottom = vs[:, -1], vs[:, 0]
            c1, c2 = (top, bottom) if w[k] > 0 else (bottom, top)
        best = max(best, prev)
    return best


def _smoothed_objective(x, A, basis, d_C, mu):
    K = np.tensordot(x, basis, axes=1)
    M = A - np.kron(np.eye(d_C), K)
    lam, vec = np.linalg.eigh(0.5 * (M + M.conj().T))
    z = np.concatenate([lam, -lam]) / mu
    zmax = z.max()
    e = np.exp(z - zmax)
    s = e.sum()
    f = mu * (zmax + math.log(s))
    wts = (e[: lam.size] - e[lam.size :]) / s
    G = -_tr_code((vec * wts) @ vec.conj().T, d_C, K.shape[0])
    grad = np.real(np.einsum("kab,ba->k", basis, G))
    return f, grad


def _spectral(A, x, basis, d_C):
    K = np.tensordot(x, basis, axes=1)
    M = A - np.kron(np.eye(d_C), K)
    lam, vec = np.linalg.eigh(0.5 * (M + M.conj().T))
    k = int(np.argmax(np.abs(lam)))
    return abs(lam[k]), np.sign(lam[k]), vec[:, k]


def _polish(A, x, basis, d_C, d_R, lower, max_iter, rtol=1e-8, window=50):
    """Polyak subgradient iterations with an adaptive target level.

    Stops once a window of iterations improves the best value by less than
    ``rtol`` relatively; returns ``(best_f, best_x, iterations, converged)``.
    """
    f, s, v = _spectral(A, x, basis, d_C)
    best_f, best_x = f, x.copy()
    delta = max(best_f - lower, 1e-3 * best_f, 1e-14)
    stall = 0
    checkpoint = best_f
    for it in range(1, max_iter + 1):
        g = -s * np.real(np.einsum("kab,ba->k", basis, _tr_code(np.outer(v, v.conj()), d_C, d_R)))
        gn = float(g @ g)
        if gn == 0 or best_f <= lower * (1 + 1e-12):
            return best_f, best_x, it, True
        x = x - (f - (best_f - delta)) / gn * g
        f, s, v = _spectral(A, x, basis, d_C)
        if f < best_f:
            best_f, best_x = f, x.copy()
            stall = 0
        else:
            stall += 1
            if stall >= 10:
                delta *= 0.5
                stall = 0
                x = best_x.copy()
                f, s, v = _spectral(A, x, basis, d_C)
        if it % window == 0:
            if checkpoint - best_f <= rtol * best_f:
                return best_f, best_x, it, True
            checkpoint = best_f
    return best_f, best_x, max_iter, False


def qed_condition(H_I, sector: SpectralSector, space: ProductSpace, tol: float = 1e-9) -> bool:
    """``P_C S_a P_C`` proportional to ``P_C`` for every Schmidt factor of ``H_I``."""
    V = sector.code_basis
    scale = max(1.0, opnorm(H_I))
    for S, _, weight in operator_schmidt(H_I, space):
        block = V.conj().T @ S @ V
        dev = block - np.trace(block) / sector.dim_C * np.eye(sector.dim_C)
        if weight * opnorm(dev) > tol * scale:
            return False
    return True


def induced_splitting(
    H_I,
    sector: SpectralSector,
    space: ProductSpace,
    seed: int = 0,
    restarts: int = 10,
    max_iter: int = 2000,
    strict: bool = False,
) -> ISResult:
    """``min_K || P0 H_I P0 - P_C (x) K ||`` over Hermitian reservoir operators ``K``.

    Returns the best value found (an upper bound by feasibility), the
    minimizing ``K`` and a certificate bracketing the true minimum.
    """
    H = require_hermitian(H_I, "H_I")
    space.check(H, "H_I")
    d_C, d_R = sector.dim_C, space.d_R
    A = _code_block(H, sector, space)
    A = 0.5 * (A + A.conj().T)
    upper0 = opnorm(A)
    qed = qed_condition(H, sector, space)
    if d_C == 1:
        return ISResult(0.0, A.copy(), ISCertificate(0.0, upper0, True, 0, True))

    rng = np.random.default_rng(seed)
    basis = hermitian_basis(d_R)
    lower = _certificate(A, d_C, d_R, rng)

    K0 = _tr_code(A, d_C, d_R) / d_C
    x0 = np.real(np.einsum("kab,ba->k", basis, K0))
    f0, _, _ = _spectral(A, x0, basis, d_C)
    best_f, best_x, iters = f0, x0, 0
    converged = True
    scale = max(upper0, 1e-300)

    if f0 > 1e-12 * scale and f0 > lower * (1 + 1e-9):
        # restarts compete at the coarsest smoothing level; the winner is
        # carried down the continuation and then polished on the exact objective
        def smooth(x, mu, maxiter):
            return minimize(
                _smoothed_objective,
                x,
                args=(A, basis, d_C, mu * scale),
                jac=True,
                method="L-BFGS-B",
                options={"maxiter": maxiter, "gtol": 1e-14, "ftol": 1e-16},
            ).x

        starts = [x0] + [x0 + 0.5 * scale * rng.standard_normal(x0.size) for _ in range(restarts - 1)]
        coarse = [smooth(x, MU_LEVELS[0], 200) for x in starts]
        x = min(coarse, key=lambda y: _spectral(A, y, basis, d_C)[0])
        for mu in MU_LEVELS[1:]:
            x = smooth(x, mu, 1000)
        f, _, _ = _spectral(A, x, basis, d_C)
        if f < best_f:
            best_f, best_x = f, x
        best_f, best_x, iters, converged = _polish(A, best_x, basis, d_C, d_R, lower, max_iter)

    value = min(best_f, upper0)
    K = np.tensordot(best_x, basis, axes=1) if best_f <= upper0 else np.zeros((d_R, d_R), dtype=complex)
    cert = ISCertificate(min(lower, value), upper0, qed, iters, converged)
    if strict and not converged:
        raise OptimizerStalledError("IS optimizer stalled", lower=cert.lower, upper=value)
    return ISResult(float(value), 0.5 * (K + K.conj().T), cert)


# ---------------------------------------------------------------------------
# QSL times
# ---------------------------------------------------------------------------


def _require_constant(model: ModelSpec, what: str) -> None:
    if not model.constant_reservoir:
        raise PreconditionError(f"{what} is only defined for a time-independent reservoir")


def large_gap_applicable(model: ModelSpec, sector: SpectralSector, th: Thresholds, ratio: float = 0.1) -> bool:
    """Whether ``||H_I|| / gap <= ratio * sqrt(p0)``."""
    return _ratio(model.interaction_norm, sector.gap) <= ratio * math.sqrt(th.p0)


def tau_leak_lower(model: ModelSpec, sector: SpectralSector, th: Thresholds, ratio: float = 0.1) -> QSLBound:
    """``max{c(p0)/||H_I||, sqrt(p0) gap / (2 ||[H_I, H_R]||)}``."""
    _require_constant(model, "leakage QSL time")
    h = model.interaction_norm
    comm = model.commutator_norm(0.0)
    first = th.c_of_p0 / h if h > 0 else math.inf
    second = math.inf if comm == 0 or math.isinf(sector.gap) else math.sqrt(th.p0) * sector.gap / (2.0 * comm)
    branch = "interaction_norm" if first >= second else "commutator"
    return QSLBound(max(first, second), branch, large_gap_applicable(model, sector, th, ratio))


def tau_fid_lower(
    model: ModelSpec,
    sector: SpectralSector,
    th: Thresholds,
    induced: float | None = None,
    ratio: float = 0.1,
    tol: float = 1e-9,
) -> QSLBound:
    """``c(p0) max{1/||H_I||, gap / (4 (||[H_I, H_R]|| + ||H_I||^2))}``.

    Only stated for a degenerate code space free of induced splitting.
    """
    _require_constant(model, "fidelity QSL time")
    if induced is None:
        induced = induced_splitting(model.H_I, sector, model.space).value
    scale = max(1.0, model.interaction_norm)
    if induced > tol * scale or sector.spread > tol * scale:
        raise PreconditionError(
            f"fidelity QSL preconditions not met: IS={induced:.3e}, spread={sector.spread:.3e} (both must vanish)"
        )
    h = model.interaction_norm
    comm = model.commutator_norm(0.0)
    first = 1.0 / h if h > 0 else math.inf
    denom = 4.0 * (comm + h * h)
    second = math.inf if denom == 0 or math.isinf(sector.gap) else sector.gap / denom
    branch = "interaction_norm" if first >= second else "commutator"
    return QSLBound(th.c_of_p0 * max(first, second), branch, large_gap_applicable(model, sector, th, ratio))


def tau_min_lower(H_I, th: Thresholds) -> float:
    h = opnorm(H_I)
    return th.c_of_p0 / h if h > 0 else math.inf


def qsl_times(model: ModelSpec, sector: SpectralSector, th: Thresholds, induced: float | None = None, ratio: float = 0.1) -> QSLTimes:
    leak = tau_leak_lower(model, sector, th, ratio)
    prov = {"tau_leak_lower": leak.branch}
    try:
        fid = tau_fid_lower(model, sector, th, induced, ratio)
        fid_value = fid.value
        prov["tau_fid_lower"] = fid.branch
    except PreconditionError:
        fid_value = None
        prov["tau_fid_lower"] = "preconditions not met"
    prov["tau_min_lower"] = "interaction_norm"
    return QSLTimes(leak.value, fid_value, tau_min_lower(model.H_I, th), prov, leak.applicable)


def resonance_tau_bound(p: ResonanceParams, th: Thresholds, t_max: float | None = None) -> float:
    """``c |J|^-1 max{1, |dE1 - dE2| / max_t ||h_2,rest(t)||}``."""
    if p.J == 0:
        return math.inf
    detuning = abs(p.dE1 - p.dE2)
    hmax = p.h2rest_norm_max(t_max)
    if detuning == 0:
        ratio = 0.0
    elif hmax == 0:
        ratio = math.inf
    else:
        ratio = detuning / hmax
    return th.c_of_p0 / abs(p.J) * max(1.0, ratio)


# ---------------------------------------------------------------------------
# Frame-shifted family
# ---------------------------------------------------------------------------


def shifted_bound_family(
    model: ModelSpec,
    sector: SpectralSector,
    grid: TimeGrid,
    F_shift: float,
    kind: str = "infidelity",
    induced: float | None = None,
) -> BoundSeries:
    """Leakage or infidelity bound evaluated in the frame shifted by ``F_shift``."""
    m2, s2 = rotating_frame_shift(model, sector, F_shift)
    if kind == "leakage":
        return leakage_bound(m2, s2, grid)
    if kind == "infidelity":
        if induced is None:
            induced = induced_splitting(model.H_I, sector, model.space).value
        return infidelity_bound(m2, s2, grid, induced=induced)
    raise ValueError(f"unknown bound kind {kind!r}")


def _value_at(model, sector, grid, t_star, F, kind, induced):
    steps = max(2, int(round(grid.steps * t_star / grid.t_max)))
    sub = TimeGrid(t_star, steps)
    return float(shifted_bound_family(model, sector, sub, F, kind, induced).total[-1])


def optimize_shift(
    model: ModelSpec,
    sector: SpectralSector,
    grid: TimeGrid,
    t_star: float,
    kind: str = "infidelity",
    induced: float | None = None,
    n_scan: int = 40,
) -> tuple[float, float]:
    """Shift ``F`` minimizing the family value at ``t_star``: log scan then bounded refinement."""
    if not t_star > 0:
        raise ValueError("t_star must be positive")
    if kind == "infidelity" and induced is None:
        induced = induced_splitting(model.H_I, sector, model.space).value
    h = max(model.interaction_norm, 1e-300)
    F_min = 2.0 * model.interaction_norm - sector.gap
    offsets = h * np.logspace(-3, 4, n_scan)
    candidates = list(F_min + offsets)
    if F_min < 0:
        candidates.append(0.0)
    vals = [_value_at(model, sector, grid, t_star, F, kind, induced) for F in candidates]
    k = int(np.argmin(vals))
    best_F, best_v = candidates[k], vals[k]

    lo_off = math.log(offsets[max(k - 1, 0)] if k < len(offsets) else offsets[0])
    hi_off = math.log(offsets[min(k + 1, len(offsets) - 1)] if k < len(offsets) else offsets[-1])
    if hi_off > lo_off:
        res = minimize_scalar(
            lambda u: _value_at(model, sector, grid, t_star, F_min + math.exp(u), kind, induced),
            bounds=(lo_off, hi_off),
            method="bounded",
            options={"xatol": 1e-6},
        )
        if res.fun < best_v:
            best_F, best_v = F_min + math.exp(res.x), float(res.fun)
    return float(best_F), float(best_v)


def commutator_with_reservoir(model: ModelSpec, t: float = 0.0) -> np.ndarray:
    return commutator(model.H_I, model.reservoir_joint(t))
