"""Dense linear algebra and quantum-state primitives.

Every other module builds on the types and helpers defined here. Matrices
are plain numpy arrays; the wrapper types freeze a validated copy so values
can be shared freely between threads.

Qubit ordering: qubit 0 is the leftmost tensor factor, i.e. the most
significant bit of a computational-basis index.
"""

import logging
import os
from dataclasses import InitVar, dataclass
from functools import reduce
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg

logger = logging.getLogger(__name__)

ComplexMatrix = np.ndarray

MAX_DIM_DEFAULT = 2**16
MAX_DIM_ENV = "QELM_MAX_DIM"

VALIDITY_TOL = 1e-10
DERIVED_TOL = 1e-9
ENSEMBLES = ("ginibre", "haar")

_max_dim_override: Optional[int] = None


class QelmError(Exception):
    """Base class for all qelm errors."""

    pass


class DimensionLimitError(QelmError):
    """Raised when a construction would exceed the configured dimension cap."""

    pass


class ContractError(QelmError, ValueError):
    """Raised when an operation's preconditions are violated."""

    pass


class NumericError(QelmError):
    """Raised when a numerical routine fails or its input is degenerate."""

    pass


class HermiticityError(NumericError):
    """Raised when an expectation value has a non-negligible imaginary part."""

    pass


def set_max_dimension(limit: Optional[int]) -> None:
    """Override the global dimension cap (None restores env/default lookup)."""
    global _max_dim_override
    if limit is not None and limit < 2:
        raise ContractError(f"Dimension limit must be at least 2, got {limit}")
    _max_dim_override = limit


def max_dimension() -> int:
    """Return the active dimension cap.

    Resolution order: explicit override, then ``QELM_MAX_DIM``, then 2^16.
    """
    if _max_dim_override is not None:
        return _max_dim_override
    env_value = os.environ.get(MAX_DIM_ENV)
    if env_value:
        try:
            return int(env_value)
        except ValueError:
            logger.warning("Ignoring non-integer %s=%r", MAX_DIM_ENV, env_value)
    return MAX_DIM_DEFAULT


def check_dimension(dim: int, what: str = "matrix") -> None:
    """Raise DimensionLimitError if ``dim`` exceeds the active cap."""
    limit = max_dimension()
    if dim > limit:
        raise DimensionLimitError(
            f"{what} dimension {dim} exceeds limit {limit} "
            f"(set {MAX_DIM_ENV} or [limits].max_dim to raise it)"
        )


def _require_finite(matrix: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(matrix)):
        raise ContractError(f"{name} contains NaN or Inf entries")


def _require_square(matrix: np.ndarray, name: str) -> None:
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ContractError(f"{name} must be square, got shape {matrix.shape}")


def _frozen(matrix: np.ndarray) -> np.ndarray:
    out = np.array(matrix, dtype=np.complex128, copy=True)
    out.setflags(write=False)
    return out


def hermiticity_gap(matrix: np.ndarray) -> float:
    """Largest entry of |M - M^dagger|."""
    return float(np.max(np.abs(matrix - matrix.conj().T))) if matrix.size else 0.0


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """A positive, unit-trace Hermitian matrix.

    Construction validates all three invariants unless ``validate=False``,
    which is reserved for values derived from already-valid states by
    trace- and spectrum-preserving operations.
    """

    matrix: ComplexMatrix
    validate: InitVar[bool] = True

    def __post_init__(self, validate: bool) -> None:
        matrix = _frozen(self.matrix)
        _require_square(matrix, "Density matrix")
        if validate:
            _require_finite(matrix, "Density matrix")
            if hermiticity_gap(matrix) > VALIDITY_TOL:
                raise ContractError("Density matrix is not Hermitian")
            trace = np.trace(matrix).real
            if abs(trace - 1.0) > VALIDITY_TOL:
                raise ContractError(f"Density matrix trace is {trace}, expected 1")
            min_eig = float(scipy.linalg.eigvalsh(matrix)[0])
            if min_eig < -VALIDITY_TOL:
                raise ContractError(
                    f"Density matrix is not positive semidefinite (min eig {min_eig})"
                )
        object.__setattr__(self, "matrix", matrix)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def pure(cls, vector: Sequence[complex]) -> "DensityMatrix":
        """Projector onto the normalized ``vector``."""
        psi = np.asarray(vector, dtype=np.complex128)
        norm = np.linalg.norm(psi)
        if norm == 0:
            raise ContractError("Cannot build a pure state from the zero vector")
        psi = psi / norm
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim) / dim)

    @classmethod
    def basis_state(cls, dim: int, index: int) -> "DensityMatrix":
        vector = np.zeros(dim)
        vector[index] = 1.0
        return cls.pure(vector)


@dataclass(frozen=True, eq=False)
class HermitianObservable:
    """A Hermitian operator (observable, Hamiltonian or effective POVM element)."""

    matrix: ComplexMatrix
    validate: InitVar[bool] = True

    def __post_init__(self, validate: bool) -> None:
        matrix = _frozen(self.matrix)
        _require_square(matrix, "Observable")
        if validate:
            _require_finite(matrix, "Observable")
            if hermiticity_gap(matrix) > VALIDITY_TOL:
                raise ContractError("Observable is not Hermitian")
        object.__setattr__(self, "matrix", matrix)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class RandomSource:
    """A reproducible random stream identified by (seed, stream path).

    The source itself is immutable; ``generator()`` hands out a fresh numpy
    Generator positioned at the start of the stream. Child streams are
    derived with ``derive`` so that parallel tasks never share state.
    """

    seed: int
    stream_id: int = 0
    parent: tuple[int, ...] = ()

    @property
    def spawn_key(self) -> tuple[int, ...]:
        return (*self.parent, self.stream_id)

    def derive(self, stream_id: int) -> "RandomSource":
        """Return the child stream ``stream_id`` of this source."""
        return RandomSource(self.seed, stream_id, self.spawn_key)

    def generator(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(self.seed, spawn_key=self.spawn_key)
        return np.random.default_rng(sequence)


RandomLike = Union[RandomSource, np.random.Generator]


def as_generator(rng: RandomLike) -> np.random.Generator:
    """Accept either a RandomSource or an already-running Generator."""
    if isinstance(rng, RandomSource):
        return rng.generator()
    return rng


def kron(a: ComplexMatrix, b: ComplexMatrix) -> ComplexMatrix:
    """Kronecker product with finiteness and dimension-cap checks.

    Raises:
        ContractError: If either factor has non-finite entries.
        DimensionLimitError: If the product exceeds the dimension cap.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    _require_finite(a, "Left factor")
    _require_finite(b, "Right factor")
    check_dimension(a.shape[0] * b.shape[0], "Kronecker product")
    return np.kron(a, b)


def kron_all(factors: Sequence[ComplexMatrix]) -> ComplexMatrix:
    """Kronecker product of a non-empty sequence, left to right."""
    if not factors:
        raise ContractError("kron_all needs at least one factor")
    return reduce(kron, factors)


def apply_kron_right(matrix: np.ndarray, factors: Sequence[np.ndarray]) -> np.ndarray:
    """Compute ``matrix @ kron(*factors)`` without forming the Kronecker product.

    Each factor is contracted against its own tensor axis of the column
    index, so the cost stays linear in the number of factors.
    """
    dims = [f.shape[0] for f in factors]
    rows = matrix.shape[0]
    tensor = matrix.reshape(rows, *dims)
    for axis, factor in enumerate(factors, start=1):
        tensor = np.moveaxis(np.tensordot(tensor, factor, axes=([axis], [0])), -1, axis)
    return tensor.reshape(rows, -1)


def _partial_trace_array(
    matrix: np.ndarray, subsystem_dims: Sequence[int], keep: Sequence[int]
) -> np.ndarray:
    dims = list(subsystem_dims)
    n = len(dims)
    tensor = matrix.reshape(dims + dims)
    traced = [i for i in range(n) if i not in keep]
    # Trace highest axes first so lower axis numbers stay valid.
    remaining = n
    for axis in sorted(traced, reverse=True):
        tensor = np.trace(tensor, axis1=axis, axis2=axis + remaining)
        remaining -= 1
    kept_dim = int(np.prod([dims[i] for i in sorted(keep)]))
    return tensor.reshape(kept_dim, kept_dim)


def partial_trace(
    rho: DensityMatrix, subsystem_dims: Sequence[int], keep: Sequence[int]
) -> DensityMatrix:
    """Trace out every subsystem not listed in ``keep``.

    Args:
        rho: State on the composite system.
        subsystem_dims: Dimension of each tensor factor, in qubit order.
        keep: Indices of the subsystems to keep (kept in ascending order).

    Returns:
        Reduced density matrix on the kept subsystems.

    Raises:
        ContractError: If the dimensions do not multiply to ``rho.dim`` or
            ``keep`` is empty or out of range.
    """
    keep_set = set(keep)
    if not keep_set:
        raise ContractError("partial_trace needs at least one subsystem to keep")
    if int(np.prod(subsystem_dims)) != rho.dim:
        raise ContractError(
            f"Subsystem dims {list(subsystem_dims)} do not match state dimension {rho.dim}"
        )
    if not keep_set.issubset(range(len(subsystem_dims))):
        raise ContractError(f"Kept subsystems {sorted(keep_set)} out of range")
    reduced = _partial_trace_array(rho.matrix, subsystem_dims, sorted(keep_set))
    return DensityMatrix(reduced, validate=False)


def expm_hermitian(h: HermitianObservable, t: float) -> ComplexMatrix:
    """Return exp(-i h t) via the Hermitian eigendecomposition of ``h``.

    Real symmetric generators are diagonalized in real arithmetic.

    Raises:
        NumericError: If the eigendecomposition does not converge.
    """
    matrix = h.matrix
    if not np.any(matrix.imag):
        matrix = matrix.real
    try:
        eigenvalues, vectors = scipy.linalg.eigh(matrix)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericError(f"Eigendecomposition failed: {exc}") from exc
    phases = np.exp(-1j * eigenvalues * t)
    return (vectors * phases) @ vectors.conj().T


def random_density_matrix(
    dim: int, rng: RandomLike, ensemble: str = "ginibre"
) -> DensityMatrix:
    """Sample a random state.

    ``ginibre`` draws full-rank Hilbert-Schmidt states GG^dagger / Tr(GG^dagger);
    ``haar`` draws Haar-random pure states.
    """
    if dim < 2:
        raise ContractError(f"State dimension must be at least 2, got {dim}")
    gen = as_generator(rng)
    if ensemble == "ginibre":
        g = gen.standard_normal((dim, dim)) + 1j * gen.standard_normal((dim, dim))
        m = g @ g.conj().T
        m = 0.5 * (m + m.conj().T)
        return DensityMatrix(m / np.trace(m).real, validate=False)
    if ensemble == "haar":
        psi = gen.standard_normal(dim) + 1j * gen.standard_normal(dim)
        psi /= np.linalg.norm(psi)
        return DensityMatrix(np.outer(psi, psi.conj()), validate=False)
    raise ContractError(f"Unknown ensemble '{ensemble}' (expected one of {', '.join(ENSEMBLES)})")


def expectation(o: HermitianObservable, rho: DensityMatrix) -> float:
    """Tr[O rho].

    Raises:
        ContractError: On dimension mismatch.
        HermiticityError: If the imaginary part exceeds 1e-10.
    """
    if o.dim != rho.dim:
        raise ContractError(f"Observable dim {o.dim} != state dim {rho.dim}")
    value = np.einsum("ij,ji->", o.matrix, rho.matrix)
    if abs(value.imag) > VALIDITY_TOL:
        raise HermiticityError(f"Expectation has imaginary part {value.imag:.3e}")
    return float(value.real)


def matrix_power(rho: DensityMatrix, k: int) -> ComplexMatrix:
    if k < 1:
        raise ContractError(f"Power must be at least 1, got {k}")
    return np.linalg.matrix_power(rho.matrix, k)


PAULI = {
    "I": np.eye(2, dtype=np.complex128),
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}

HADAMARD = np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2)


def pauli_string(spec: Union[str, Sequence[str]]) -> HermitianObservable:
    """Kronecker product of single-qubit Paulis, qubit 0 leftmost.

    Accepts either a list like ``["X", "X"]`` or the string ``"XX"``.
    """
    letters = [c.upper() for c in spec]
    if not letters:
        raise ContractError("Pauli string must be non-empty")
    unknown = [c for c in letters if c not in PAULI]
    if unknown:
        raise ContractError(f"Unknown Pauli letters: {''.join(unknown)}")
    return HermitianObservable(kron_all([PAULI[c] for c in letters]), validate=False)


def n_qubits_for(dim: int) -> int:
    """Number of qubits for a power-of-two dimension."""
    if dim < 1 or dim & (dim - 1):
        raise ContractError(f"Dimension {dim} is not a power of two")
    return dim.bit_length() - 1
