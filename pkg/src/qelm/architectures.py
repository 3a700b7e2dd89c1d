"""The four QELM architectures: feature extraction and effective POVMs.

A prepared architecture freezes its unit channels, reservoir states and (for
the distributed design) the entangling map, so that the effective
measurement on the input stays constant across a dataset.

Composite systems are ordered unit by unit, each unit as (input, reservoir).
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from qelm.dynamics import (
    ERGODIC,
    DynamicsProfile,
    IsingParams,
    UnitaryChannel,
    build_entangling_map,
    channel_from_ising,
    ising_params,
)
from qelm.qcore import (
    HADAMARD,
    PAULI,
    ContractError,
    DensityMatrix,
    HermitianObservable,
    RandomSource,
    apply_kron_right,
    check_dimension,
    kron_all,
    partial_trace,
    random_density_matrix,
)

logger = logging.getLogger(__name__)

RANK_TOL = 1e-8

_CHANNEL_STREAM = 0
_RESERVOIR_STREAM = 1
_ENTANGLER_STREAM = 2
_RANK_STREAM = 3

BASES = ("computational", "x")


class ArchitectureKind(str, Enum):
    S3L = "S3L"
    SM = "SM"
    MI = "MI"
    D = "D"

    @classmethod
    def parse(cls, value: "str | ArchitectureKind") -> "ArchitectureKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            available = ", ".join(k.value for k in cls)
            raise ContractError(
                f"Unknown architecture '{value}'. Available: {available}"
            ) from None


LINEAR_KINDS = (ArchitectureKind.S3L, ArchitectureKind.SM)


@dataclass(frozen=True)
class ArchitectureSpec:
    """Which design to build and how large.

    ``n`` counts units for SM and D, injections for MI, and must be 1 for
    S3L. ``shared_channels`` forces every SM/D unit to reuse unit 0's
    channel and reservoir state.
    """

    kind: ArchitectureKind
    n: int
    input_qubits: int
    reservoir_qubits: int
    dynamics: DynamicsProfile = ERGODIC
    seed: RandomSource = field(default_factory=lambda: RandomSource(0))
    basis: str = "computational"
    shared_channels: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ArchitectureKind.parse(self.kind))
        if self.n < 1:
            raise ContractError(f"n must be at least 1, got {self.n}")
        if self.kind is ArchitectureKind.S3L and self.n != 1:
            raise ContractError(f"S3L requires n=1, got n={self.n}")
        if self.input_qubits < 1:
            raise ContractError(f"input_qubits must be at least 1, got {self.input_qubits}")
        if self.reservoir_qubits < 1:
            raise ContractError(
                f"reservoir_qubits must be at least 1, got {self.reservoir_qubits}"
            )
        if self.basis not in BASES:
            raise ContractError(f"Unknown basis '{self.basis}'. Available: {', '.join(BASES)}")

    @property
    def input_dim(self) -> int:
        return 2**self.input_qubits

    @property
    def reservoir_dim(self) -> int:
        return 2**self.reservoir_qubits

    @property
    def unit_qubits(self) -> int:
        return self.input_qubits + self.reservoir_qubits

    @property
    def unit_dim(self) -> int:
        return 2**self.unit_qubits

    @property
    def n_units(self) -> int:
        """Number of physical units (channels and reservoirs)."""
        return self.n if self.kind in (ArchitectureKind.SM, ArchitectureKind.D) else 1

    @property
    def total_qubits(self) -> int:
        """Qubits that must be simulated jointly."""
        if self.kind is ArchitectureKind.D:
            return self.n * self.unit_qubits
        return self.unit_qubits

    @property
    def total_dim(self) -> int:
        return 2**self.total_qubits

    @property
    def feature_length(self) -> int:
        if self.kind is ArchitectureKind.SM:
            return self.n * self.unit_dim
        return self.total_dim

    @property
    def pvm_outcomes(self) -> int:
        return self.feature_length

    def with_seed(self, seed: RandomSource) -> "ArchitectureSpec":
        return replace(self, seed=seed)


@dataclass(frozen=True, eq=False)
class PreparedArchitecture:
    """An architecture with every random ingredient drawn and frozen.

    ``readouts`` holds, per measured system, the unitary whose rows are the
    measurement bras pulled back through the dynamics (and the basis change):
    one per unit for S3L/SM/MI, a single global one for D.
    For D with n > 1, ``feature_operator`` stacks the flattened effective
    POVM so that features are one product with vec(rho^(x)n).
    """

    spec: ArchitectureSpec
    unit_channels: tuple[UnitaryChannel, ...]
    reservoir_states: tuple[DensityMatrix, ...]
    entangler: Optional[UnitaryChannel]
    readouts: tuple[np.ndarray, ...]
    unit_params: tuple[IsingParams, ...] = ()
    feature_operator: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Outcome probabilities; ``blocks`` normalized blocks concatenated."""

    probabilities: np.ndarray
    blocks: int = 1

    def __post_init__(self) -> None:
        probs = np.array(self.probabilities, dtype=np.float64, copy=True)
        probs.setflags(write=False)
        object.__setattr__(self, "probabilities", probs)

    def __len__(self) -> int:
        return self.probabilities.size

    @property
    def labels(self) -> np.ndarray:
        """Computational-basis outcome index of each entry (per block)."""
        block = self.probabilities.size // self.blocks
        return np.tile(np.arange(block), self.blocks)


def check_limits(spec: ArchitectureSpec) -> None:
    """Raise DimensionLimitError if ``spec`` cannot be simulated densely."""
    check_dimension(spec.total_dim, f"{spec.kind.value} (n={spec.n}) composite")


def _basis_rotation(matrix: np.ndarray, n_qubits: int, basis: str) -> np.ndarray:
    if basis == "computational":
        return matrix
    # H^{(x)m} @ M == (M^T @ H^{(x)m})^T since H is symmetric.
    return apply_kron_right(matrix.T, [HADAMARD] * n_qubits).T


def prepare(spec: ArchitectureSpec) -> PreparedArchitecture:
    """Draw one channel and reservoir state per unit (plus Phi for D).

    Raises:
        DimensionLimitError: If the composite system exceeds the cap.
    """
    check_limits(spec)
    channel_root = spec.seed.derive(_CHANNEL_STREAM)
    reservoir_root = spec.seed.derive(_RESERVOIR_STREAM)

    params: list[IsingParams] = []
    channels: list[UnitaryChannel] = []
    reservoirs: list[DensityMatrix] = []
    for unit in range(spec.n_units):
        if spec.shared_channels and unit > 0:
            params.append(params[0])
            channels.append(channels[0])
            reservoirs.append(reservoirs[0])
            continue
        p = ising_params(spec.unit_qubits, spec.dynamics, channel_root.derive(unit))
        params.append(p)
        channels.append(channel_from_ising(p))
        reservoirs.append(
            random_density_matrix(spec.reservoir_dim, reservoir_root.derive(unit))
        )

    entangler = None
    if spec.kind is ArchitectureKind.D and spec.n > 1:
        entangler = build_entangling_map(
            [spec.unit_dim] * spec.n,
            spec.dynamics.j_scale,
            spec.dynamics.field,
            spec.dynamics.time,
            spec.seed.derive(_ENTANGLER_STREAM),
        )

    if spec.kind is ArchitectureKind.D:
        if entangler is None:
            omega = channels[0].u
        else:
            omega = apply_kron_right(entangler.u, [c.u for c in channels])
        readouts = (_basis_rotation(omega, spec.total_qubits, spec.basis),)
    else:
        readouts = tuple(
            _basis_rotation(c.u, spec.unit_qubits, spec.basis) for c in channels
        )
    for readout in readouts:
        readout.setflags(write=False)

    feature_operator = None
    if entangler is not None:
        povm = _d_povm(spec, readouts[0], reservoirs)
        feature_operator = povm.reshape(povm.shape[0], -1)
        feature_operator.setflags(write=False)

    logger.debug(
        "Prepared %s n=%d (%d+%d qubits per unit, %d outcomes)",
        spec.kind.value,
        spec.n,
        spec.input_qubits,
        spec.reservoir_qubits,
        spec.feature_length,
    )
    return PreparedArchitecture(
        spec=spec,
        unit_channels=tuple(channels),
        reservoir_states=tuple(reservoirs),
        entangler=entangler,
        readouts=readouts,
        unit_params=tuple(params),
        feature_operator=feature_operator,
    )


def _distribution(readout: np.ndarray, factors: Sequence[np.ndarray]) -> np.ndarray:
    """diag(V X V^dagger) for X the Kronecker product of ``factors``."""
    left = apply_kron_right(readout, factors)
    return np.real(np.einsum("ij,ij->i", left, readout.conj()))


def _check_input(arch: PreparedArchitecture, rho: DensityMatrix) -> None:
    if rho.dim != arch.spec.input_dim:
        raise ContractError(
            f"Input state dim {rho.dim} != architecture input dim {arch.spec.input_dim}"
        )


def features_s3l(arch: PreparedArchitecture, rho: DensityMatrix) -> FeatureVector:
    """Outcome probabilities of the first unit, U(rho (x) eta)U^dagger."""
    _check_input(arch, rho)
    eta = arch.reservoir_states[0].matrix
    return FeatureVector(_distribution(arch.readouts[0], [np.kron(rho.matrix, eta)]))


def _linear_features(arch: PreparedArchitecture, x: np.ndarray) -> np.ndarray:
    return np.concatenate(
        [
            _distribution(readout, [np.kron(x, eta.matrix)])
            for readout, eta in zip(arch.readouts, arch.reservoir_states)
        ]
    )


def features_sm(arch: PreparedArchitecture, rho: DensityMatrix) -> FeatureVector:
    """Concatenated per-unit distributions, each block summing to one."""
    _check_input(arch, rho)
    return FeatureVector(_linear_features(arch, rho.matrix), blocks=len(arch.readouts))


def features_mi(arch: PreparedArchitecture, rho: DensityMatrix) -> FeatureVector:
    """Inject ``rho`` n times into one reservoir; measure after the last.

    Each intermediate step evolves rho (x) eta and traces the input out; the
    final step keeps the whole system and reads out its distribution.
    """
    _check_input(arch, rho)
    spec = arch.spec
    u = arch.unit_channels[0].u
    eta = arch.reservoir_states[0].matrix
    dims = [spec.input_dim, spec.reservoir_dim]
    for _ in range(spec.n - 1):
        joint = u @ np.kron(rho.matrix, eta) @ u.conj().T
        eta = partial_trace(DensityMatrix(joint, validate=False), dims, [1]).matrix
    return FeatureVector(_distribution(arch.readouts[0], [np.kron(rho.matrix, eta)]))


def features_d(arch: PreparedArchitecture, rho: DensityMatrix) -> FeatureVector:
    """Joint distribution over all units after the unit maps and Phi."""
    _check_input(arch, rho)
    if arch.feature_operator is not None:
        copies = kron_all([rho.matrix] * arch.spec.n)
        return FeatureVector(np.real(arch.feature_operator @ copies.T.reshape(-1)))
    factors = [np.kron(rho.matrix, eta.matrix) for eta in arch.reservoir_states]
    return FeatureVector(_distribution(arch.readouts[0], factors))


_FEATURES = {
    ArchitectureKind.S3L: features_s3l,
    ArchitectureKind.SM: features_sm,
    ArchitectureKind.MI: features_mi,
    ArchitectureKind.D: features_d,
}


def features(arch: PreparedArchitecture, rho: DensityMatrix) -> FeatureVector:
    """Dispatch to the feature map of ``arch.spec.kind``."""
    return _FEATURES[arch.spec.kind](arch, rho)


def joint_state(arch: PreparedArchitecture, rho: DensityMatrix) -> DensityMatrix:
    """State of the first unit after its channel, before measurement."""
    _check_input(arch, rho)
    u = arch.unit_channels[0].u
    eta = arch.reservoir_states[0].matrix
    return DensityMatrix(u @ np.kron(rho.matrix, eta) @ u.conj().T, validate=False)


def _povm_from_readout(readout: np.ndarray, s: int, eta: np.ndarray) -> np.ndarray:
    """Tr_R[V^dagger |k><k| V (I_S (x) eta)] for every row k of V."""
    rows = readout.reshape(readout.shape[0], s, -1)
    return np.einsum("kar,kbq,qr->kab", rows.conj(), rows, eta)


def _mi_povm(arch: PreparedArchitecture) -> np.ndarray:
    spec = arch.spec
    s, r = spec.input_dim, spec.reservoir_dim
    check_dimension(s**spec.n * r, "Multiple-injection n-copy space")
    u = arch.unit_channels[0].u
    eta0 = arch.reservoir_states[0].matrix
    readout = arch.readouts[0]
    elements = []
    for k in range(readout.shape[0]):
        row = readout[k]
        op = np.outer(row.conj(), row)
        copies = 1
        for _ in range(spec.n - 1):
            # Pull the reservoir part back through one erase-and-write step.
            a = s**copies
            t4 = op.reshape(a, r, a, r)
            extended = np.einsum("arbq,st->asrbtq", t4, np.eye(s)).reshape(
                a * s * r, a * s * r
            )
            w = np.kron(np.eye(a), u)
            op = w.conj().T @ extended @ w
            copies += 1
        a = s**copies
        elements.append(np.einsum("arbq,qr->ab", op.reshape(a, r, a, r), eta0))
    return np.array(elements)


def _d_povm(
    spec: ArchitectureSpec, readout: np.ndarray, reservoirs: Sequence[DensityMatrix]
) -> np.ndarray:
    s, r, n = spec.input_dim, spec.reservoir_dim, spec.n
    check_dimension(s**n, "Distributed n-copy space")
    d = readout.shape[0]
    # Reorder each row from (S1 R1 S2 R2 ...) to (S1 S2 ... R1 R2 ...).
    tensor = readout.reshape(d, *([s, r] * n))
    order = [0] + [1 + 2 * i for i in range(n)] + [2 + 2 * i for i in range(n)]
    rows = tensor.transpose(order).reshape(d, s**n, r**n)
    eta = kron_all([e.matrix for e in reservoirs])
    # E[k] = rows[k]^* (rows[k] eta)^T, batched over outcomes.
    return np.matmul(rows.conj(), np.swapaxes(rows @ eta, 1, 2))


def effective_povm(arch: PreparedArchitecture) -> list[HermitianObservable]:
    """Effective measurement induced on the (n-copy) input space.

    For S3L and SM the operators act on one input copy (SM returns every
    unit's elements, summing to n times the identity). For MI and D they act
    on n copies, so that feature k equals Tr[E_k rho^(x)n].
    """
    spec = arch.spec
    if spec.kind in LINEAR_KINDS:
        elements = np.concatenate(
            [
                _povm_from_readout(readout, spec.input_dim, eta.matrix)
                for readout, eta in zip(arch.readouts, arch.reservoir_states)
            ]
        )
    elif spec.kind is ArchitectureKind.MI:
        elements = _mi_povm(arch)
    else:
        elements = _d_povm(spec, arch.readouts[0], arch.reservoir_states)
    return [HermitianObservable(0.5 * (e + e.conj().T), validate=False) for e in elements]


def _pauli_basis(n_qubits: int) -> list[np.ndarray]:
    basis = [np.eye(1, dtype=np.complex128)]
    for _ in range(n_qubits):
        basis = [np.kron(b, PAULI[c]) for b in basis for c in "IXYZ"]
    return basis


def numerical_rank(matrix: np.ndarray, tol: float = RANK_TOL) -> int:
    """Count singular values above ``tol`` times the largest."""
    singular = scipy.linalg.svdvals(matrix)
    if singular.size == 0 or singular[0] == 0:
        return 0
    return int(np.sum(singular > tol * singular[0]))


def design_matrix_rank(arch: PreparedArchitecture) -> int:
    """Rank of the feature map over a spanning set of its operator space.

    Linear designs are evaluated on the Pauli basis of the input; MI and D
    with twice d_sn random product powers rho^(x)n.
    """
    spec = arch.spec
    if spec.kind in LINEAR_KINDS:
        rows = [_linear_features(arch, p) for p in _pauli_basis(spec.input_qubits)]
        return numerical_rank(np.array(rows))

    from qelm.bounds import sym_dim

    d_sn = sym_dim(spec.input_dim, spec.n)
    check_dimension(d_sn, "Symmetric subspace")
    gen = spec.seed.derive(_RANK_STREAM).generator()
    rows = [
        features(arch, random_density_matrix(spec.input_dim, gen)).probabilities
        for _ in range(2 * d_sn)
    ]
    return numerical_rank(np.array(rows))
