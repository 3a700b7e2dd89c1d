"""Transverse-field Ising dynamics and the unitary channels built from it.

H = 1/2 sum_{i>j} J_ij X_i X_j + h sum_i Z_i, evolved for a fixed time t.
"""

import logging
from dataclasses import InitVar, dataclass
from typing import Sequence

import numpy as np

from qelm.qcore import (
    DERIVED_TOL,
    ContractError,
    DensityMatrix,
    HermitianObservable,
    RandomLike,
    as_generator,
    check_dimension,
    expm_hermitian,
    n_qubits_for,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DynamicsProfile:
    """Named (J_s, h, t) triple; couplings are drawn per channel from it."""

    name: str
    j_scale: float
    field: float
    time: float

    def __post_init__(self) -> None:
        if self.j_scale < 0:
            raise ContractError(f"j_scale must be non-negative, got {self.j_scale}")
        if self.time < 0:
            raise ContractError(f"time must be non-negative, got {self.time}")


ERGODIC = DynamicsProfile("ergodic", j_scale=1.0, field=1.0, time=10.0)

_profiles: dict[str, DynamicsProfile] = {
    ERGODIC.name: ERGODIC,
    "decoupled": DynamicsProfile("decoupled", j_scale=0.0, field=1.0, time=10.0),
    "no-field": DynamicsProfile("no-field", j_scale=1.0, field=0.0, time=10.0),
}


def get_profile(name: str) -> DynamicsProfile:
    """Look up a dynamics profile by name.

    Raises:
        ValueError: If the profile is not registered.
    """
    if name not in _profiles:
        available = ", ".join(sorted(_profiles))
        raise ValueError(f"Unknown dynamics profile '{name}'. Available: {available}")
    return _profiles[name]


def get_available_profiles() -> list[str]:
    return sorted(_profiles)


@dataclass(frozen=True, eq=False)
class IsingParams:
    """Couplings, field and evolution time for one all-to-all Ising unitary."""

    n_qubits: int
    couplings: np.ndarray
    field: float
    time: float
    j_scale: float

    def __post_init__(self) -> None:
        couplings = np.array(self.couplings, dtype=np.float64, copy=True)
        if couplings.shape != (self.n_qubits, self.n_qubits):
            raise ContractError(
                f"Couplings shape {couplings.shape} does not match {self.n_qubits} qubits"
            )
        if not np.allclose(couplings, couplings.T, atol=0.0, rtol=0.0):
            raise ContractError("Couplings must be symmetric")
        if np.max(np.abs(couplings), initial=0.0) > self.j_scale + 1e-15:
            raise ContractError(f"Couplings exceed the bound j_scale={self.j_scale}")
        if self.time < 0:
            raise ContractError(f"Evolution time must be non-negative, got {self.time}")
        couplings.setflags(write=False)
        object.__setattr__(self, "couplings", couplings)

    @property
    def mean_abs_coupling(self) -> float:
        if self.n_qubits < 2:
            return 0.0
        rows, cols = np.tril_indices(self.n_qubits, k=-1)
        return float(np.mean(np.abs(self.couplings[rows, cols])))


@dataclass(frozen=True, eq=False)
class UnitaryChannel:
    """The map rho -> U rho U^dagger."""

    u: np.ndarray
    validate: InitVar[bool] = True

    def __post_init__(self, validate: bool) -> None:
        u = np.array(self.u, dtype=np.complex128, copy=True)
        if u.ndim != 2 or u.shape[0] != u.shape[1]:
            raise ContractError(f"Channel matrix must be square, got {u.shape}")
        if validate:
            gap = np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])))
            if gap > DERIVED_TOL:
                raise ContractError(f"Channel matrix is not unitary (gap {gap:.2e})")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    @property
    def dim(self) -> int:
        return self.u.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "UnitaryChannel":
        return cls(np.eye(dim), validate=False)


def sample_couplings(n_qubits: int, j_scale: float, rng: RandomLike) -> np.ndarray:
    """Symmetric coupling matrix with i>j entries uniform on [-j_scale, j_scale]."""
    if j_scale < 0:
        raise ContractError(f"j_scale must be non-negative, got {j_scale}")
    gen = as_generator(rng)
    couplings = np.zeros((n_qubits, n_qubits))
    rows, cols = np.tril_indices(n_qubits, k=-1)
    values = gen.uniform(-j_scale, j_scale, size=rows.size)
    couplings[rows, cols] = values
    couplings[cols, rows] = values
    return couplings


def ising_params(
    n_qubits: int, profile: DynamicsProfile, rng: RandomLike
) -> IsingParams:
    """Draw fresh couplings for ``n_qubits`` under ``profile``."""
    return IsingParams(
        n_qubits=n_qubits,
        couplings=sample_couplings(n_qubits, profile.j_scale, rng),
        field=profile.field,
        time=profile.time,
        j_scale=profile.j_scale,
    )


def build_ising_hamiltonian(p: IsingParams) -> HermitianObservable:
    """Assemble the Ising Hamiltonian on 2^n dimensions.

    X_i X_j flips bits i and j of a basis index and Z_i is diagonal, so the
    matrix is filled directly from index arithmetic; the result equals the
    sum of the corresponding Pauli strings.
    """
    n = p.n_qubits
    dim = 2**n
    check_dimension(dim, "Ising Hamiltonian")
    index = np.arange(dim)
    shifts = [n - 1 - q for q in range(n)]
    diagonal = np.zeros(dim)
    for shift in shifts:
        diagonal += 1.0 - 2.0 * ((index >> shift) & 1)
    h = np.zeros((dim, dim))
    h[index, index] = p.field * diagonal
    for i in range(n):
        for j in range(i):
            coupling = p.couplings[i, j]
            if coupling == 0.0:
                continue
            mask = (1 << shifts[i]) | (1 << shifts[j])
            h[index, index ^ mask] += 0.5 * coupling
    return HermitianObservable(h, validate=False)


def channel_from_ising(p: IsingParams) -> UnitaryChannel:
    return UnitaryChannel(expm_hermitian(build_ising_hamiltonian(p), p.time))


def apply_channel(c: UnitaryChannel, rho: DensityMatrix) -> DensityMatrix:
    """U rho U^dagger."""
    if c.dim != rho.dim:
        raise ContractError(f"Channel dim {c.dim} != state dim {rho.dim}")
    return DensityMatrix(c.u @ rho.matrix @ c.u.conj().T, validate=False)


def build_entangling_map(
    unit_dims: Sequence[int],
    j_scale: float,
    h: float,
    t: float,
    rng: RandomLike,
) -> UnitaryChannel:
    """All-to-all Ising unitary over every qubit of every unit.

    Args:
        unit_dims: Hilbert dimension of each unit (input plus reservoir).
        j_scale: Coupling bound for the freshly drawn couplings.
        h: Transverse field.
        t: Evolution time.
        rng: Stream used for the couplings.

    Returns:
        The entangling channel.

    Raises:
        DimensionLimitError: If the composite dimension exceeds the cap.
    """
    total_dim = int(np.prod(unit_dims))
    check_dimension(total_dim, "Entangling map")
    n_qubits = sum(n_qubits_for(d) for d in unit_dims)
    params = IsingParams(
        n_qubits=n_qubits,
        couplings=sample_couplings(n_qubits, j_scale, rng),
        field=h,
        time=t,
        j_scale=j_scale,
    )
    logger.debug("Building entangling map over %d qubits", n_qubits)
    return channel_from_ising(params)
