import math

import numpy as np
import pytest
import scipy.linalg as la
from numpy.testing import assert_allclose

from qsl_lab.errors import (
    DimensionCapError,
    HermiticityError,
    InvalidOperatorError,
    NotAStateError,
    ShapeError,
)
from qsl_lab.operators import (
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    ProductSpace,
    bures_angle,
    commutator,
    fidelity_batch,
    hermitian_basis,
    herm_propagator,
    ket,
    opnorm,
    partial_trace_reservoir,
    partial_trace_system,
    projector_onto,
    propagators_from_eigh,
    random_density,
    random_hermitian,
    random_pure_vector,
    random_unitary,
    reduced_from_vector,
    require_hermitian,
    sin_half_angle,
    spectral_width,
    tensor,
    tracenorm,
    uhlmann_fidelity,
    validate_state,
)


def loop_partial_trace_reservoir(rho, d_S, d_R):
    out = np.zeros((d_S, d_S), dtype=complex)
    for i in range(d_S):
        for j in range(d_S):
            out[i, j] = sum(rho[i * d_R + a, j * d_R + a] for a in range(d_R))
    return out


def loop_partial_trace_system(rho, d_S, d_R):
    out = np.zeros((d_R, d_R), dtype=complex)
    for a in range(d_R):
        for b in range(d_R):
            out[a, b] = sum(rho[i * d_R + a, i * d_R + b] for i in range(d_S))
    return out


class TestProductSpace:
    def test_dim(self):
        assert ProductSpace(3, 4).dim == 12

    def test_rejects_nonpositive(self):
        with pytest.raises(ShapeError):
            ProductSpace(0, 2)

    def test_check_shape(self):
        with pytest.raises(ShapeError, match="shape error"):
            ProductSpace(2, 2).check(np.eye(3), "H")


class TestTensorAndTraces:
    def test_tensor_pauli(self):
        assert_allclose(tensor(SIGMA_X, SIGMA_Z), np.kron(SIGMA_X, SIGMA_Z))

    def test_tensor_cap(self):
        with pytest.raises(DimensionCapError, match="dimension cap exceeded"):
            tensor(np.eye(64), np.eye(128))

    @pytest.mark.parametrize("d_S,d_R", [(2, 2), (2, 3), (3, 5), (4, 2)])
    def test_partial_traces_match_elementwise(self, rng, d_S, d_R):
        space = ProductSpace(d_S, d_R)
        rho = random_density(space.dim, rng)
        assert_allclose(partial_trace_reservoir(rho, space), loop_partial_trace_reservoir(rho, d_S, d_R), atol=1e-14)
        assert_allclose(partial_trace_system(rho, space), loop_partial_trace_system(rho, d_S, d_R), atol=1e-14)

    def test_partial_trace_of_product(self, rng):
        a, b = random_density(2, rng), random_density(3, rng)
        space = ProductSpace(2, 3)
        assert_allclose(partial_trace_reservoir(np.kron(a, b), space), a, atol=1e-14)
        assert_allclose(partial_trace_system(np.kron(a, b), space), b, atol=1e-14)

    def test_reduced_from_vector(self, rng):
        space = ProductSpace(3, 4)
        psi = random_pure_vector(12, rng)
        assert_allclose(reduced_from_vector(psi, space), partial_trace_reservoir(np.outer(psi, psi.conj()), space), atol=1e-14)

    def test_bell_state_reduced_is_maximally_mixed(self):
        psi = (np.kron(ket(0, 2), ket(0, 2)) + np.kron(ket(1, 2), ket(1, 2))) / math.sqrt(2)
        assert_allclose(reduced_from_vector(psi, ProductSpace(2, 2)), np.eye(2) / 2, atol=1e-15)


class TestNorms:
    def test_opnorm_pauli(self):
        assert opnorm(SIGMA_X) == pytest.approx(1.0)
        assert opnorm(np.kron(SIGMA_Z, SIGMA_X)) == pytest.approx(1.0)

    def test_opnorm_matches_gram_eigenvalue(self, rng):
        A = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
        oracle = math.sqrt(np.linalg.eigvalsh(A.conj().T @ A)[-1])
        assert opnorm(A) == pytest.approx(oracle, rel=1e-12)

    def test_tracenorm_of_density_is_one(self, rng):
        assert tracenorm(random_density(4, rng)) == pytest.approx(1.0)

    def test_nonfinite_rejected(self):
        with pytest.raises(InvalidOperatorError, match="invalid operator"):
            opnorm(np.array([[np.nan, 0], [0, 1]]))

    def test_commutator_pauli(self):
        assert_allclose(commutator(SIGMA_X, SIGMA_Y), 2j * SIGMA_Z)

    def test_spectral_width(self):
        assert spectral_width(np.diag([3.0, -1.0, 0.5])) == pytest.approx(4.0)


class TestHermiticity:
    def test_rejects_non_hermitian(self):
        with pytest.raises(HermiticityError, match="hermiticity violation"):
            require_hermitian(np.array([[0, 1], [0, 0]]))

    def test_symmetrizes_tiny_defect(self):
        A = np.array([[1.0, 1e-13j], [0.0, 2.0]])
        H = require_hermitian(A)
        assert_allclose(H, H.conj().T, atol=0)

    def test_non_square_rejected(self):
        with pytest.raises(ShapeError):
            require_hermitian(np.zeros((2, 3)))


class TestPropagators:
    def test_matches_expm(self, rng):
        H = random_hermitian(6, rng)
        assert_allclose(herm_propagator(H, 0.7), la.expm(-0.7j * H), atol=1e-12)

    def test_stack_matches_expm(self, rng):
        H = random_hermitian(4, rng)
        w, v = np.linalg.eigh(H)
        times = np.array([0.0, 0.3, 2.5])
        Us = propagators_from_eigh(w, v, times)
        for t, U in zip(times, Us):
            assert_allclose(U, la.expm(-1j * t * H), atol=1e-12)

    def test_bloch_rotation(self):
        plus = np.array([1, 1]) / math.sqrt(2)
        minus = np.array([1, -1]) / math.sqrt(2)
        U = herm_propagator(SIGMA_Z / 2, math.pi)
        assert abs(np.vdot(minus, U @ plus)) == pytest.approx(1.0)


class TestStates:
    def test_validate_accepts_density(self, rng):
        rho = random_density(3, rng)
        assert_allclose(validate_state(rho), rho, atol=1e-14)

    def test_validate_rejects_trace(self):
        with pytest.raises(NotAStateError, match="not a state"):
            validate_state(np.eye(2))

    def test_validate_rejects_negative(self):
        with pytest.raises(NotAStateError):
            validate_state(np.diag([1.1, -0.1]))

    def test_validate_clamps_roundoff(self):
        rho = validate_state(np.diag([1.0 + 1e-10, -1e-10]))
        assert np.linalg.eigvalsh(rho).min() >= 0

    def test_fidelity_identical_states(self, rng):
        rho = random_density(4, rng)
        assert uhlmann_fidelity(rho, rho) == pytest.approx(1.0, abs=1e-12)

    def test_fidelity_orthogonal_states(self):
        assert uhlmann_fidelity(np.diag([1.0, 0]), np.diag([0, 1.0])) == pytest.approx(0.0, abs=1e-15)

    def test_fidelity_pure_states_is_overlap(self, rng):
        a, b = random_pure_vector(3, rng), random_pure_vector(3, rng)
        F = uhlmann_fidelity(np.outer(a, a.conj()), np.outer(b, b.conj()))
        assert F == pytest.approx(abs(np.vdot(a, b)), rel=1e-12)

    def test_fidelity_matches_sqrtm_oracle(self, rng):
        rho, sigma = random_density(4, rng), random_density(4, rng)
        s = la.sqrtm(rho)
        oracle = np.real(np.trace(la.sqrtm(s @ sigma @ s)))
        assert uhlmann_fidelity(rho, sigma) == pytest.approx(oracle, rel=1e-9)

    def test_fidelity_is_symmetric(self, rng):
        rho, sigma = random_density(3, rng, rank=2), random_density(3, rng)
        assert uhlmann_fidelity(rho, sigma) == pytest.approx(uhlmann_fidelity(sigma, rho), rel=1e-10)

    def test_fidelity_batch_agrees(self, rng):
        rhos = np.array([random_density(3, rng) for _ in range(4)])
        sigmas = np.array([random_density(3, rng, rank=1) for _ in range(4)])
        assert_allclose(fidelity_batch(rhos, sigmas), [uhlmann_fidelity(r, s) for r, s in zip(rhos, sigmas)], rtol=1e-12)

    def test_bures_and_sin_half(self):
        assert bures_angle(np.diag([1.0, 0]), np.diag([0, 1.0])) == pytest.approx(math.pi / 2)
        assert sin_half_angle(0.0) == pytest.approx(1 / math.sqrt(2))
        assert sin_half_angle(1.0) == 0.0


class TestBasisAndRandom:
    @pytest.mark.parametrize("d", [1, 2, 3, 5])
    def test_hermitian_basis_orthonormal(self, d):
        B = hermitian_basis(d)
        assert B.shape == (d * d, d, d)
        gram = np.einsum("kab,lba->kl", B, B)
        assert_allclose(gram, np.eye(d * d), atol=1e-14)
        for E in B:
            assert_allclose(E, E.conj().T)

    def test_random_unitary(self, rng):
        U = random_unitary(5, rng)
        assert_allclose(U.conj().T @ U, np.eye(5), atol=1e-13)

    def test_random_hermitian_norm(self, rng):
        assert opnorm(random_hermitian(4, rng, norm=2.5)) == pytest.approx(2.5)

    def test_projector_onto(self, rng):
        P = projector_onto(rng.standard_normal((4, 2)))
        assert_allclose(P @ P, P, atol=1e-14)
        assert np.trace(P).real == pytest.approx(2.0)
