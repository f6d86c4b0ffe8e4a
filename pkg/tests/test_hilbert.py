import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qzeno import hilbert as hs
from qzeno.errors import (
    DimensionMismatchError,
    InvalidDimensionError,
    TruncationLeakageError,
)


def random_operator(dim, seed):
    rng = np.random.default_rng(seed)
    return hs.Operator(rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)))


class TestLadderOperators:
    def test_destroy_dim2(self):
        assert np.array_equal(hs.destroy(2).entries, [[0, 1], [0, 0]])

    def test_number_identity(self):
        a = hs.destroy(9)
        err = np.abs((hs.dagger(a) @ a).entries - hs.number(9).entries).max()
        assert err <= 1e-13

    def test_ladder_action(self):
        a = hs.destroy(5)
        out = a.entries @ hs.fock_state(5, 3).amplitudes
        assert np.allclose(out, math.sqrt(3) * hs.fock_state(5, 2).amplitudes)

    def test_invalid_dimension(self):
        with pytest.raises(InvalidDimensionError):
            hs.destroy(1)
        with pytest.raises(InvalidDimensionError):
            hs.number(0)

    def test_commutator_truncation_edge(self):
        d = 10
        comm = hs.commutator(hs.destroy(d), hs.create(d)).entries
        # canonical on the interior, -(d-1) in the top truncated level
        assert np.allclose(comm[: d - 1, : d - 1], np.eye(d - 1))
        assert comm[d - 1, d - 1].real == pytest.approx(1 - d)


class TestSimpleOperators:
    def test_position_dim2_is_sigma_x(self):
        assert np.array_equal(hs.position(2).entries, hs.pauli("x").entries)

    def test_pauli_z(self):
        assert np.array_equal(hs.pauli("z").entries, np.diag([1, -1]))

    def test_number_diag(self):
        assert np.array_equal(hs.number(3).entries, np.diag([0, 1, 2]))

    def test_pauli_bad_axis(self):
        with pytest.raises(InvalidDimensionError):
            hs.pauli("w")


class TestKron:
    def test_identity_product(self):
        out = hs.kron(hs.identity(2), hs.identity(3))
        assert np.array_equal(out.entries, np.eye(6))

    def test_disjoint_supports_commute(self):
        a = hs.kron(hs.pauli("z"), hs.identity(2))
        b = hs.kron(hs.identity(2), hs.pauli("x"))
        assert np.abs(hs.commutator(a, b).entries).max() == 0.0

    def test_trace_multiplicative(self):
        a = random_operator(3, 1)
        b = random_operator(3, 2)
        got = np.trace(hs.kron(a, b).entries)
        want = np.trace(a.entries) * np.trace(b.entries)
        assert got == pytest.approx(want, rel=1e-12)

    def test_associativity(self):
        a, b, c = random_operator(2, 3), random_operator(3, 4), random_operator(2, 5)
        left = hs.kron(hs.kron(a, b), c).entries
        right = hs.kron(a, hs.kron(b, c)).entries
        assert np.abs(left - right).max() <= 1e-13 * np.abs(left).max()


class TestCoherentState:
    def test_alpha_zero_is_vacuum(self):
        psi = hs.coherent_state(8, 0.0)
        assert np.array_equal(psi.amplitudes, hs.fock_state(8, 0).amplitudes)

    def test_mean_phonon_number(self):
        psi = hs.coherent_state(15, math.sqrt(2))
        assert hs.expectation(hs.number(15), psi) == pytest.approx(2.0, abs=1e-6)

    def test_poissonian_variance_against_explicit_sum(self):
        dim, alpha = 15, math.sqrt(2)
        psi = hs.coherent_state(dim, alpha)
        # independent oracle: moments of the truncated coefficients
        c = np.array([alpha ** n / math.sqrt(math.factorial(n)) for n in range(dim)])
        p = c ** 2 / np.sum(c ** 2)
        ns = np.arange(dim)
        want = float(np.sum(ns ** 2 * p) - np.sum(ns * p) ** 2)
        assert hs.variance(hs.number(dim), psi) == pytest.approx(want, abs=1e-12)
        assert want == pytest.approx(2.0, abs=1e-5)

    def test_norm_after_truncation(self):
        assert abs(hs.coherent_state(14, 1.5).norm() - 1.0) <= 1e-12

    def test_leakage_guard(self):
        with pytest.raises(TruncationLeakageError):
            hs.coherent_state(5, 2.0)


class TestExpectation:
    def test_number_on_fock(self):
        assert hs.expectation(hs.number(10), hs.fock_state(10, 3)) == pytest.approx(3.0)

    def test_sigma_z_on_plus(self):
        plus = hs.StateVector(np.array([1.0, 1.0]) / math.sqrt(2))
        assert hs.expectation(hs.pauli("z"), plus) == pytest.approx(0.0, abs=1e-15)

    def test_density_matrix_expectation(self):
        rho = hs.coherent_state(12, 1.0).to_density_matrix()
        psi = hs.coherent_state(12, 1.0)
        assert hs.expectation(hs.number(12), rho) == pytest.approx(
            hs.expectation(hs.number(12), psi))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            hs.expectation(hs.number(5), hs.fock_state(6, 0))

    @given(st.integers(0, 10 ** 6))
    @settings(max_examples=25, deadline=None)
    def test_hermitian_expectation_is_real(self, seed):
        rng = np.random.default_rng(seed)
        m = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
        herm = hs.Operator(m + m.conj().T)
        v = rng.normal(size=6) + 1j * rng.normal(size=6)
        psi = hs.StateVector(v)
        val = hs.expectation(herm, psi)
        assert isinstance(val, float)


class TestEmbedDagger:
    def test_embed_matches_kron(self):
        layout = hs.SpaceLayout((15, 2))
        want = hs.kron(hs.identity(15), hs.pauli("x")).entries
        assert np.array_equal(hs.embed(hs.pauli("x"), layout, 1).entries, want)

    def test_embed_dim_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            hs.embed(hs.pauli("x"), hs.SpaceLayout((15, 3)), 1)

    @given(st.integers(0, 10 ** 6))
    @settings(max_examples=25, deadline=None)
    def test_dagger_involution(self, seed):
        a = random_operator(5, seed)
        assert np.array_equal(hs.dagger(hs.dagger(a)).entries, a.entries)


class TestStates:
    def test_state_normalization_invariant(self):
        v = np.array([3.0, 4.0], dtype=complex)
        assert abs(hs.StateVector(v).norm() - 1.0) <= 1e-10

    def test_density_matrix_trace_guard(self):
        with pytest.raises(ValueError):
            hs.DensityMatrix(np.diag([0.7, 0.7]).astype(complex))

    def test_density_matrix_hermiticity_guard(self):
        bad = np.array([[0.5, 0.2], [0.4, 0.5]], dtype=complex)
        with pytest.raises(ValueError):
            hs.DensityMatrix(bad)

    def test_positivity_check(self):
        rho = hs.fock_state(4, 1).to_density_matrix()
        assert rho.check_positive()
        assert rho.smallest_eigenvalue() == pytest.approx(0.0, abs=1e-12)

    def test_tensor_state_order(self):
        psi = hs.tensor_state(hs.fock_state(3, 2), hs.fock_state(2, 1))
        # resonator-major indexing: I = 2*2 + 1
        assert psi.amplitudes[5] == pytest.approx(1.0)
