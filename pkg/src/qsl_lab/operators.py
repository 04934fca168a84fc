"""Dense complex operator algebra on finite system-reservoir spaces.

Operators are plain ``numpy`` complex arrays of shape ``(d, d)``; the helpers
here validate shape and finiteness where it matters and otherwise stay out of
the way.  Joint operators follow the ``system (x) reservoir`` ordering, so the
joint index is ``i_S * d_R + i_R``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .errors import (
    DimensionCapError,
    HermiticityError,
    InvalidOperatorError,
    NotAStateError,
    ShapeError,
)

DEFAULT_DIM_CAP = 4096
HERMITICITY_RTOL = 1e-10
STATE_TRACE_TOL = 1e-6
EIGEN_CLAMP = 1e-9

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class ProductSpace:
    """Bipartite space ``H_S (x) H_R``."""

    d_S: int
    d_R: int

    def __post_init__(self):
        if int(self.d_S) < 1 or int(self.d_R) < 1:
            raise ShapeError(f"shape error: dimensions must be positive, got {self.d_S}x{self.d_R}")

    @property
    def dim(self) -> int:
        return self.d_S * self.d_R

    def check(self, op: np.ndarray, name: str = "operator") -> None:
        if op.shape != (self.dim, self.dim):
            raise ShapeError(
                f"shape error: {name} has shape {op.shape}, expected ({self.dim}, {self.dim})"
            )


def as_operator(A, name: str = "operator") -> np.ndarray:
    """Return ``A`` as a finite complex square array, or raise."""
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeError(f"shape error: {name} must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidOperatorError(f"invalid operator: {name} has non-finite entries")
    return A


def dagger(A: np.ndarray) -> np.ndarray:
    return A.conj().T


def commutator(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return A @ B - B @ A


def hermiticity_defect(A: np.ndarray) -> float:
    return float(np.max(np.abs(A - A.conj().T))) if A.size else 0.0


def is_hermitian(A: np.ndarray, rtol: float = HERMITICITY_RTOL) -> bool:
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    return hermiticity_defect(A) <= rtol * scale


def require_hermitian(A: np.ndarray, name: str = "operator", rtol: float = HERMITICITY_RTOL) -> np.ndarray:
    A = as_operator(A, name)
    if not is_hermitian(A, rtol):
        raise HermiticityError(
            f"hermiticity violation: {name} deviates from its adjoint by {hermiticity_defect(A):.3e}"
        )
    return 0.5 * (A + A.conj().T)


def tensor(A, B, cap: int = DEFAULT_DIM_CAP) -> np.ndarray:
    """Kronecker product ``A (x) B``."""
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    dim = A.shape[0] * B.shape[0]
    if dim > cap:
        raise DimensionCapError(f"dimension cap exceeded: {dim} > {cap}")
    return np.kron(A, B)


def embed_system(A: np.ndarray, space: ProductSpace) -> np.ndarray:
    return tensor(A, np.eye(space.d_R, dtype=complex))


def embed_reservoir(B: np.ndarray, space: ProductSpace) -> np.ndarray:
    return tensor(np.eye(space.d_S, dtype=complex), B)


def partial_trace_reservoir(rho_joint: np.ndarray, space: ProductSpace) -> np.ndarray:
    """``Tr_R`` of a joint operator."""
    rho_joint = np.asarray(rho_joint, dtype=complex)
    space.check(rho_joint, "rho_joint")
    r = rho_joint.reshape(space.d_S, space.d_R, space.d_S, space.d_R)
    return np.einsum("iaja->ij", r)


def partial_trace_system(op_joint: np.ndarray, space: ProductSpace) -> np.ndarray:
    """``Tr_S`` of a joint operator."""
    op_joint = np.asarray(op_joint, dtype=complex)
    space.check(op_joint, "op_joint")
    r = op_joint.reshape(space.d_S, space.d_R, space.d_S, space.d_R)
    return np.einsum("iaib->ab", r)


def reduced_from_vector(psi: np.ndarray, space: ProductSpace) -> np.ndarray:
    """``Tr_R |psi><psi|`` without forming the joint density matrix."""
    m = np.asarray(psi, dtype=complex).reshape(space.d_S, space.d_R)
    return m @ m.conj().T


def opnorm(A) -> float:
    """Operator norm (largest singular value)."""
    A = np.asarray(A, dtype=complex)
    if not np.all(np.isfinite(A)):
        raise InvalidOperatorError("invalid operator: non-finite entries")
    if A.size == 0:
        return 0.0
    return float(la.svdvals(A)[0])


def tracenorm(A) -> float:
    """Trace norm (sum of singular values)."""
    A = np.asarray(A, dtype=complex)
    if not np.all(np.isfinite(A)):
        raise InvalidOperatorError("invalid operator: non-finite entries")
    if A.size == 0:
        return 0.0
    return float(np.sum(la.svdvals(A)))


def herm_eigh(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian operator (checked and symmetrized)."""
    H = require_hermitian(H, "H")
    w, v = np.linalg.eigh(H)
    return w, v


def spectral_width(H: np.ndarray) -> float:
    """``lambda_max - lambda_min`` of a Hermitian operator."""
    w = np.linalg.eigvalsh(require_hermitian(H))
    return float(w[-1] - w[0])


def herm_propagator(H, t: float) -> np.ndarray:
    """``exp(-i t H)`` for Hermitian ``H`` via its eigendecomposition."""
    w, v = herm_eigh(H)
    return (v * np.exp(-1j * t * w)) @ v.conj().T


def propagators_from_eigh(w: np.ndarray, v: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Stack of ``exp(-i t_k H)`` for all ``t_k`` from one eigendecomposition."""
    phases = np.exp(-1j * np.multiply.outer(np.asarray(times, dtype=float), w))
    return np.einsum("ij,kj,lj->kil", v, phases, v.conj(), optimize=True)


def sqrt_psd(A: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (A + A.conj().T))
    w = np.where(w < 0, 0.0, w)
    return (v * np.sqrt(w)) @ v.conj().T


def validate_state(rho, name: str = "state", clamp: float = EIGEN_CLAMP) -> np.ndarray:
    """Check ``rho`` is a density operator and return a cleaned copy.

    Negative eigenvalues down to ``-clamp`` are set to zero and the result is
    renormalized; anything worse is rejected.
    """
    rho = as_operator(rho, name)
    if not is_hermitian(rho, 1e-8):
        raise NotAStateError(f"not a state: {name} is not Hermitian")
    tr = float(np.real(np.trace(rho)))
    if abs(tr - 1.0) > STATE_TRACE_TOL:
        raise NotAStateError(f"not a state: {name} has trace {tr:.9g}")
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    if w[0] < -clamp:
        raise NotAStateError(f"not a state: {name} has eigenvalue {w[0]:.3e}")
    if w[0] < 0:
        w = np.where(w < 0, 0.0, w)
        w = w / w.sum()
        return (v * w) @ v.conj().T
    return 0.5 * (rho + rho.conj().T) / tr


SUPPORT_RTOL = 1e-14


def _support_factor(state: np.ndarray) -> np.ndarray:
    """``B`` with ``state = B B^dag`` and columns only on the numerical support."""
    w, v = np.linalg.eigh(0.5 * (state + state.conj().T))
    keep = w > SUPPORT_RTOL * max(w[-1], 0.0)
    w = w[keep] / w[keep].sum()
    return v[:, keep] * np.sqrt(w)


def _root_fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """``Tr sqrt(B^dag rho B)`` where ``B B^dag`` is the lower-rank of the two states.

    Working on the smaller support avoids square roots of round-off
    eigenvalues in a null space, which would otherwise perturb ``F`` at the
    ``1e-8`` level near ``F = 1``.
    """
    B_sigma, B_rho = _support_factor(sigma), _support_factor(rho)
    if B_rho.shape[1] < B_sigma.shape[1]:
        B, other = B_rho, B_sigma @ B_sigma.conj().T
    else:
        B, other = B_sigma, B_rho @ B_rho.conj().T
    M = B.conj().T @ other @ B
    e = np.linalg.eigvalsh(0.5 * (M + M.conj().T))
    return float(np.sum(np.sqrt(np.clip(e, 0.0, None))))


def uhlmann_fidelity(rho, sigma) -> float:
    """Root fidelity ``|| sqrt(rho) sqrt(sigma) ||_1`` in ``[0, 1]``."""
    rho = validate_state(rho, "rho")
    sigma = validate_state(sigma, "sigma")
    if rho.shape != sigma.shape:
        raise ShapeError(f"shape error: {rho.shape} vs {sigma.shape}")
    return min(max(_root_fidelity(rho, sigma), 0.0), 1.0)


def fidelity_batch(rhos, sigmas) -> np.ndarray:
    """Root fidelities of two stacks of density operators, without validation.

    Intended for propagated states whose initial state was already checked.
    """
    rhos = np.asarray(rhos, dtype=complex)
    sigmas = np.asarray(sigmas, dtype=complex)
    if rhos.shape != sigmas.shape:
        raise ShapeError(f"shape error: {rhos.shape} vs {sigmas.shape}")
    return np.clip([_root_fidelity(r, s) for r, s in zip(rhos, sigmas)], 0.0, 1.0)


def bures_angle(rho, sigma) -> float:
    return float(np.arccos(np.clip(uhlmann_fidelity(rho, sigma), 0.0, 1.0)))


def sin_half_angle(fidelity: float | np.ndarray) -> float | np.ndarray:
    """``(1/sqrt 2) sqrt(1 - F)``, the quantity the fidelity bounds control."""
    return np.sqrt(np.clip(1.0 - np.asarray(fidelity, dtype=float), 0.0, None) / 2.0)


def ket(index: int, dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def projector_onto(vectors: np.ndarray) -> np.ndarray:
    """Orthogonal projector onto the span of the columns of ``vectors``."""
    if vectors.shape[1] == 0:
        return np.zeros((vectors.shape[0], vectors.shape[0]), dtype=complex)
    q, _ = np.linalg.qr(vectors)
    return q @ q.conj().T


def hermitian_basis(d: int) -> np.ndarray:
    """Hilbert-Schmidt orthonormal basis of ``Herm(C^d)``, shape ``(d*d, d, d)``."""
    basis = []
    for j in range(d):
        e = np.zeros((d, d), dtype=complex)
        e[j, j] = 1.0
        basis.append(e)
    s = 1.0 / np.sqrt(2.0)
    for j in range(d):
        for k in range(j + 1, d):
            e = np.zeros((d, d), dtype=complex)
            e[j, k] = e[k, j] = s
            basis.append(e)
            e = np.zeros((d, d), dtype=complex)
            e[j, k] = -1j * s
            e[k, j] = 1j * s
            basis.append(e)
    return np.array(basis)


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary (QR of a Ginibre matrix with phase fix)."""
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_hermitian(d: int, rng: np.random.Generator, norm: float | None = None) -> np.ndarray:
    z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    h = 0.5 * (z + z.conj().T)
    if norm is not None:
        n = opnorm(h)
        h = h * (norm / n) if n > 0 else h
    return h


def random_pure_vector(d: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def random_density(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = d if rank is None else rank
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = g @ g.conj().T
    return rho / np.real(np.trace(rho))
