"""Property tests for the structural invariants of each module."""

from __future__ import annotations

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from qsl_lab.bounds import (
    induced_splitting,
    infidelity_bound,
    leakage_bound,
    qed_condition,
    shifted_bound_family,
    universal_bound,
)
from qsl_lab.dynamics import SeriesReal, TimeGrid
from qsl_lab.models import (
    ModelSpec,
    Schedule,
    Sinusoid,
    assemble_total,
    operator_schmidt,
    rotating_frame_shift,
    sector_analysis,
)
from qsl_lab.operators import (
    ProductSpace,
    opnorm,
    partial_trace_reservoir,
    random_density,
    random_hermitian,
    random_unitary,
    tracenorm,
    uhlmann_fidelity,
)
from qsl_lab.verify import RandomEnsembleSpec, crossing_time, make_instance

SETTINGS = settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
seeds = st.integers(0, 2**32 - 1)
dims = st.integers(2, 4)


def gapped_model(seed, d_S, d_R, ratio, driven):
    rng = np.random.default_rng(seed)
    space = ProductSpace(d_S, d_R)
    H_I = random_hermitian(space.dim, rng, norm=1.0)
    energies = np.concatenate([[0.0], ratio + rng.uniform(0, 1, d_S - 1)])
    U = random_unitary(d_S, rng)
    H_S = (U * energies) @ U.conj().T
    drives = ((Sinusoid(1.0, 2.0), random_hermitian(d_R, rng)),) if driven else ()
    model = ModelSpec(space, H_S, Schedule(random_hermitian(d_R, rng), drives), H_I)
    return model, sector_analysis(H_S, (-0.5, 0.5))


class TestOperatorProperties:
    @SETTINGS
    @given(seeds, dims, dims)
    def test_partial_trace_preserves_trace(self, seed, d_S, d_R):
        rng = np.random.default_rng(seed)
        rho = random_density(d_S * d_R, rng)
        assert abs(np.trace(partial_trace_reservoir(rho, ProductSpace(d_S, d_R))) - 1) < 1e-12

    @SETTINGS
    @given(seeds, st.integers(2, 6))
    def test_fidelity_range_and_symmetry(self, seed, d):
        rng = np.random.default_rng(seed)
        a = random_density(d, rng, rank=int(rng.integers(1, d + 1)))
        b = random_density(d, rng, rank=int(rng.integers(1, d + 1)))
        f = uhlmann_fidelity(a, b)
        assert 0.0 <= f <= 1.0
        assert abs(f - uhlmann_fidelity(b, a)) < 1e-10

    @SETTINGS
    @given(seeds, st.integers(2, 6))
    def test_norm_duality_and_unitary_invariance(self, seed, d):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        B = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        assert abs(np.trace(A @ B)) <= opnorm(A) * tracenorm(B) * (1 + 1e-10)
        U, V = random_unitary(d, rng), random_unitary(d, rng)
        assert abs(opnorm(U @ A @ V) - opnorm(A)) <= 1e-10 * opnorm(A)


class TestModelProperties:
    @SETTINGS
    @given(seeds, dims, dims, st.floats(0, 20))
    def test_total_hamiltonian_hermitian(self, seed, d_S, d_R, t):
        model, _ = gapped_model(seed, d_S, d_R, 3.0, True)
        H = assemble_total(model, t)
        assert np.max(np.abs(H - H.conj().T)) <= 1e-12

    @SETTINGS
    @given(seeds, dims, dims, st.floats(0.01, 50))
    def test_shift_preserves_sector_shape(self, seed, d_S, d_R, F):
        model, sector = gapped_model(seed, d_S, d_R, 3.0, False)
        _, s2 = rotating_frame_shift(model, sector, F)
        assert s2.dim_C == sector.dim_C and s2.spread == sector.spread
        assert abs(s2.gap - (sector.gap + F)) <= 1e-12 * (sector.gap + F)

    @SETTINGS
    @given(seeds, dims, dims)
    def test_schmidt_reconstruction(self, seed, d_S, d_R):
        rng = np.random.default_rng(seed)
        space = ProductSpace(d_S, d_R)
        H = random_hermitian(space.dim, rng)
        rec = sum(t.weight * np.kron(t.system, t.reservoir) for t in operator_schmidt(H, space))
        assert np.linalg.norm(rec - H) <= 1e-10 * np.linalg.norm(H)


class TestBoundProperties:
    @SETTINGS
    @given(seeds, dims, dims, st.floats(2.2, 50), st.booleans())
    def test_monotone_in_time(self, seed, d_S, d_R, ratio, driven):
        model, sector = gapped_model(seed, d_S, d_R, ratio, driven)
        grid = TimeGrid(3.0, 60)
        for b in (leakage_bound(model, sector, grid), infidelity_bound(model, sector, grid, induced=0.3), universal_bound(model.H_I, grid)):
            assert np.all(np.diff(b.total) >= -1e-15)

    @SETTINGS
    @given(seeds, dims, dims, st.floats(2.2, 50))
    def test_leakage_square_structure(self, seed, d_S, d_R, ratio):
        model, sector = gapped_model(seed, d_S, d_R, ratio, True)
        b = leakage_bound(model, sector, TimeGrid(2.0, 40))
        a = b.components["static_rotation"] + b.components["omega_integral"]
        assert np.allclose(b.total, a**2, rtol=1e-12, atol=0)

    @SETTINGS
    @given(seeds, dims, dims)
    def test_universal_scales_linearly(self, seed, d_S, d_R):
        rng = np.random.default_rng(seed)
        H = random_hermitian(d_S * d_R, rng)
        grid = TimeGrid(2.0, 10)
        assert np.allclose(universal_bound(2 * H, grid).total, 2 * universal_bound(H, grid).total, rtol=1e-12, atol=0)

    @SETTINGS
    @given(seeds, dims, dims, st.floats(2.2, 50))
    def test_zero_shift_reproduces(self, seed, d_S, d_R, ratio):
        model, sector = gapped_model(seed, d_S, d_R, ratio, True)
        grid = TimeGrid(2.0, 40)
        a = shifted_bound_family(model, sector, grid, 0.0, "infidelity", induced=0.1).total
        b = infidelity_bound(model, sector, grid, induced=0.1).total
        assert np.allclose(a, b, rtol=0, atol=1e-12)

    @settings(max_examples=10, deadline=None)
    @given(seeds, st.booleans())
    def test_induced_splitting_sandwich(self, seed, qed):
        rng = np.random.default_rng(seed)
        d_S, d_R = 3, 2
        space = ProductSpace(d_S, d_R)
        sector = sector_analysis(np.diag([0.0, 0.0, 5.0]), (-0.1, 0.1))
        if qed:
            off = np.zeros((3, 3))
            off[0, 2] = off[2, 0] = 1.0
            H = np.kron(np.eye(3), random_hermitian(d_R, rng)) + np.kron(off, random_hermitian(d_R, rng))
        else:
            H = random_hermitian(space.dim, rng)
        r = induced_splitting(H, sector, space, seed=1, restarts=3)
        assert r.certificate.lower <= r.value + 1e-12
        assert r.value <= r.certificate.upper + 1e-12
        assert (r.value <= 1e-9) == qed_condition(H, sector, space)


class TestCrossingProperties:
    @SETTINGS
    @given(seeds, st.floats(0.05, 0.95))
    def test_dominating_series_crosses_first(self, seed, threshold):
        rng = np.random.default_rng(seed)
        grid = TimeGrid(1.0, 50)
        a = np.cumsum(rng.uniform(0, 0.05, 51))
        b = a + rng.uniform(0, 0.2, 51)
        ta = crossing_time(SeriesReal(grid, a), threshold)
        tb = crossing_time(SeriesReal(grid, b), threshold)
        assert ta >= tb


class TestEnsembleProperties:
    @SETTINGS
    @given(st.integers(0, 1000), st.integers(0, 50))
    def test_instances_start_in_code_space(self, seed, index):
        inst = make_instance(RandomEnsembleSpec(seed=seed), index)
        Q = np.kron(inst.sector.Q_C, np.eye(inst.model.space.d_R))
        assert np.real(np.trace(inst.rho0 @ Q)) <= 1e-10
        assert inst.sector.gap > 2 * inst.model.interaction_norm
