"""Tests for the dense linear-algebra and state primitives."""

import numpy as np
import pytest
import scipy.linalg
from numpy.testing import assert_allclose

from qelm.qcore import (
    MAX_DIM_ENV,
    PAULI,
    ContractError,
    DensityMatrix,
    DimensionLimitError,
    HermiticityError,
    HermitianObservable,
    RandomSource,
    apply_kron_right,
    expectation,
    expm_hermitian,
    kron,
    kron_all,
    matrix_power,
    max_dimension,
    n_qubits_for,
    partial_trace,
    pauli_string,
    random_density_matrix,
    set_max_dimension,
)


@pytest.fixture(autouse=True)
def reset_dimension_cap(monkeypatch):
    """Every test starts from the default cap with no environment override."""
    monkeypatch.delenv(MAX_DIM_ENV, raising=False)
    set_max_dimension(None)
    yield
    set_max_dimension(None)


class TestDensityMatrix:
    """Tests for DensityMatrix validation."""

    def test_accepts_valid_state(self) -> None:
        rho = DensityMatrix(np.array([[0.75, 0.25], [0.25, 0.25]]))
        assert rho.dim == 2

    def test_rejects_non_hermitian(self) -> None:
        with pytest.raises(ContractError, match="Hermitian"):
            DensityMatrix(np.array([[0.5, 0.3], [0.1, 0.5]]))

    def test_rejects_wrong_trace(self) -> None:
        with pytest.raises(ContractError, match="trace"):
            DensityMatrix(np.eye(2))

    def test_rejects_negative_eigenvalue(self) -> None:
        with pytest.raises(ContractError, match="positive"):
            DensityMatrix(np.diag([1.5, -0.5]))

    def test_rejects_nan(self) -> None:
        with pytest.raises(ContractError, match="NaN"):
            DensityMatrix(np.array([[np.nan, 0], [0, 1]]))

    def test_matrix_is_read_only_copy(self) -> None:
        """Mutating the source or the stored matrix cannot change the state."""
        source = np.eye(2) / 2
        rho = DensityMatrix(source)
        source[0, 0] = 7.0
        assert rho.matrix[0, 0] == 0.5
        with pytest.raises(ValueError):
            rho.matrix[0, 0] = 1.0

    def test_pure_normalizes(self) -> None:
        rho = DensityMatrix.pure([1, 1])
        assert_allclose(rho.matrix, np.full((2, 2), 0.5))

    def test_pure_rejects_zero_vector(self) -> None:
        with pytest.raises(ContractError):
            DensityMatrix.pure([0, 0])


class TestRandomStates:
    """Tests for random_density_matrix and RandomSource."""

    @pytest.mark.parametrize("ensemble", ["ginibre", "haar"])
    def test_draws_are_valid_states(self, ensemble: str) -> None:
        """A thousand draws all pass full validation."""
        gen = RandomSource(7).generator()
        for _ in range(1000):
            rho = random_density_matrix(4, gen, ensemble)
            DensityMatrix(rho.matrix)

    def test_haar_states_are_pure(self) -> None:
        rho = random_density_matrix(4, RandomSource(3), "haar")
        assert_allclose(np.trace(rho.matrix @ rho.matrix).real, 1.0, atol=1e-12)

    def test_ginibre_states_are_mixed(self) -> None:
        rho = random_density_matrix(4, RandomSource(3))
        assert np.trace(rho.matrix @ rho.matrix).real < 1.0 - 1e-6

    def test_same_source_same_draw(self) -> None:
        a = random_density_matrix(4, RandomSource(11).derive(2))
        b = random_density_matrix(4, RandomSource(11).derive(2))
        assert np.array_equal(a.matrix, b.matrix)

    def test_sibling_streams_differ(self) -> None:
        a = random_density_matrix(4, RandomSource(11).derive(1))
        b = random_density_matrix(4, RandomSource(11).derive(2))
        assert not np.allclose(a.matrix, b.matrix)

    def test_derive_extends_spawn_key(self) -> None:
        assert RandomSource(5).derive(3).derive(1).spawn_key == (0, 3, 1)

    def test_unknown_ensemble(self) -> None:
        with pytest.raises(ContractError, match="ensemble"):
            random_density_matrix(2, RandomSource(0), "bures")

    def test_dimension_one_rejected(self) -> None:
        with pytest.raises(ContractError):
            random_density_matrix(1, RandomSource(0))


class TestKron:
    """Tests for Kronecker products and the dimension cap."""

    def test_kron_all_matches_numpy(self) -> None:
        x, z = PAULI["X"], PAULI["Z"]
        assert_allclose(kron_all([x, z, x]), np.kron(np.kron(x, z), x))

    def test_kron_all_empty(self) -> None:
        with pytest.raises(ContractError):
            kron_all([])

    def test_kron_respects_cap(self) -> None:
        set_max_dimension(8)
        with pytest.raises(DimensionLimitError):
            kron(np.eye(4), np.eye(4))

    def test_env_sets_cap(self, monkeypatch) -> None:
        monkeypatch.setenv(MAX_DIM_ENV, "16")
        assert max_dimension() == 16

    def test_override_beats_env(self, monkeypatch) -> None:
        monkeypatch.setenv(MAX_DIM_ENV, "16")
        set_max_dimension(64)
        assert max_dimension() == 64

    def test_kron_rejects_nan(self) -> None:
        with pytest.raises(ContractError):
            kron(np.array([[np.nan]]), np.eye(2))

    def test_mixed_product_rule(self) -> None:
        """kron(A, B) kron(C, D) == kron(AC, BD)."""
        gen = np.random.default_rng(8)
        a, c = (gen.standard_normal((2, 2)) + 1j * gen.standard_normal((2, 2)) for _ in range(2))
        b, d = (gen.standard_normal((4, 4)) + 1j * gen.standard_normal((4, 4)) for _ in range(2))
        assert_allclose(kron(a, b) @ kron(c, d), kron(a @ c, b @ d), atol=1e-12)

    def test_apply_kron_right_matches_explicit_product(self) -> None:
        gen = np.random.default_rng(0)
        m = gen.standard_normal((5, 8)) + 1j * gen.standard_normal((5, 8))
        factors = [gen.standard_normal((2, 2)) for _ in range(3)]
        assert_allclose(apply_kron_right(m, factors), m @ kron_all(factors), atol=1e-12)


class TestPartialTrace:
    """Tests for partial_trace."""

    def test_product_state_factors(self) -> None:
        a = random_density_matrix(2, RandomSource(1))
        b = random_density_matrix(4, RandomSource(2))
        joint = DensityMatrix(np.kron(a.matrix, b.matrix))
        assert_allclose(partial_trace(joint, [2, 4], [0]).matrix, a.matrix, atol=1e-12)
        assert_allclose(partial_trace(joint, [2, 4], [1]).matrix, b.matrix, atol=1e-12)

    def test_middle_subsystem(self) -> None:
        states = [random_density_matrix(2, RandomSource(i)) for i in range(3)]
        joint = DensityMatrix(kron_all([s.matrix for s in states]))
        reduced = partial_trace(joint, [2, 2, 2], [1])
        assert_allclose(reduced.matrix, states[1].matrix, atol=1e-12)

    def test_bell_state_reduces_to_mixed(self) -> None:
        bell = DensityMatrix.pure([1, 0, 0, 1])
        assert_allclose(partial_trace(bell, [2, 2], [0]).matrix, np.eye(2) / 2)

    def test_outer_qubits_match_index_sum(self) -> None:
        """Keeping qubits 0 and 2 of an entangled 3-qubit state, entry by entry."""
        rho = random_density_matrix(8, RandomSource(21))
        t = rho.matrix.reshape(2, 2, 2, 2, 2, 2)
        expected = np.zeros((4, 4), dtype=complex)
        for a in range(2):
            for c in range(2):
                for a2 in range(2):
                    for c2 in range(2):
                        expected[2 * a + c, 2 * a2 + c2] = sum(
                            t[a, b, c, a2, b, c2] for b in range(2)
                        )
        reduced = partial_trace(rho, [2, 2, 2], [0, 2])
        assert_allclose(reduced.matrix, expected, atol=1e-12)

    def test_rejects_bad_dims(self) -> None:
        with pytest.raises(ContractError):
            partial_trace(DensityMatrix.maximally_mixed(4), [2, 3], [0])

    def test_rejects_empty_keep(self) -> None:
        with pytest.raises(ContractError):
            partial_trace(DensityMatrix.maximally_mixed(4), [2, 2], [])


class TestExpmHermitian:
    """Tests for expm_hermitian."""

    def test_matches_scipy_expm(self) -> None:
        gen = np.random.default_rng(4)
        g = gen.standard_normal((6, 6)) + 1j * gen.standard_normal((6, 6))
        h = HermitianObservable(g + g.conj().T)
        expected = scipy.linalg.expm(-1j * h.matrix * 0.7)
        assert_allclose(expm_hermitian(h, 0.7), expected, atol=1e-10)

    def test_result_is_unitary(self) -> None:
        h = HermitianObservable(np.kron(PAULI["X"], PAULI["X"]) + np.kron(PAULI["Z"], np.eye(2)))
        u = expm_hermitian(h, 10.0)
        assert_allclose(u.conj().T @ u, np.eye(4), atol=1e-12)

    def test_negative_time_inverts(self) -> None:
        gen = np.random.default_rng(12)
        g = gen.standard_normal((4, 4)) + 1j * gen.standard_normal((4, 4))
        h = HermitianObservable(g + g.conj().T)
        assert_allclose(expm_hermitian(h, 2.3) @ expm_hermitian(h, -2.3), np.eye(4), atol=1e-12)

    def test_zero_time_is_identity(self) -> None:
        assert_allclose(expm_hermitian(pauli_string("ZX"), 0.0), np.eye(4), atol=1e-12)


class TestObservables:
    """Tests for expectation values, Pauli strings and powers."""

    def test_expectation_of_z(self) -> None:
        assert expectation(pauli_string("Z"), DensityMatrix.basis_state(2, 0)) == 1.0

    def test_expectation_matches_index_sum(self) -> None:
        """<O> == sum_ij O_ij rho_ji."""
        gen = np.random.default_rng(5)
        g = gen.standard_normal((4, 4)) + 1j * gen.standard_normal((4, 4))
        o = HermitianObservable(g + g.conj().T)
        rho = random_density_matrix(4, RandomSource(6))
        expected = sum(o.matrix[i, j] * rho.matrix[j, i] for i in range(4) for j in range(4))
        assert expectation(o, rho) == pytest.approx(expected.real, abs=1e-12)

    def test_expectation_rejects_imaginary(self) -> None:
        o = HermitianObservable(np.array([[0, 1j], [0, 0]]), validate=False)
        rho = DensityMatrix.pure([1, 1])
        with pytest.raises(HermiticityError):
            expectation(o, rho)

    def test_expectation_dimension_mismatch(self) -> None:
        with pytest.raises(ContractError):
            expectation(pauli_string("XX"), DensityMatrix.maximally_mixed(2))

    def test_observable_rejects_non_hermitian(self) -> None:
        with pytest.raises(ContractError):
            HermitianObservable(np.array([[0, 1], [0, 0]]))

    def test_pauli_string_forms_agree(self) -> None:
        assert_allclose(pauli_string("xz").matrix, pauli_string(["X", "Z"]).matrix)
        assert_allclose(pauli_string("XZ").matrix, np.kron(PAULI["X"], PAULI["Z"]))

    def test_pauli_string_unknown_letter(self) -> None:
        with pytest.raises(ContractError, match="Q"):
            pauli_string("XQ")

    def test_matrix_power_of_projector(self) -> None:
        rho = DensityMatrix.pure([1, 1])
        assert_allclose(matrix_power(rho, 4), rho.matrix, atol=1e-12)

    def test_matrix_power_rejects_zero(self) -> None:
        with pytest.raises(ContractError):
            matrix_power(DensityMatrix.maximally_mixed(2), 0)

    @pytest.mark.parametrize("dim,qubits", [(2, 1), (8, 3), (1024, 10)])
    def test_n_qubits_for(self, dim: int, qubits: int) -> None:
        assert n_qubits_for(dim) == qubits

    def test_n_qubits_for_rejects_non_power(self) -> None:
        with pytest.raises(ContractError):
            n_qubits_for(6)
