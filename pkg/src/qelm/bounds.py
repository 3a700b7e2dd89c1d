"""Closed-form resource bounds for the four architectures.

All arithmetic is exact on Python integers: dimensions are ceiled first,
then converted to qubit counts.
"""

from dataclasses import dataclass
from math import comb
from typing import Iterable

from qelm.architectures import ArchitectureKind
from qelm.qcore import ContractError, DimensionLimitError

MAX_SYM_INPUT_DIM = 2**20
MAX_SYM_COPIES = 1024


@dataclass(frozen=True)
class ResourceReport:
    """Minimum reservoir size and the resulting qubit totals for one (s, n)."""

    kind: str
    input_qubits: int
    n: int
    min_reservoir_dim: int
    min_reservoir_qubits: int
    unit_qubits: int
    reservoir_qubits_total: int
    total_qubits: int
    pvm_outcomes: int


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def qubits_for_dim(dim: int) -> int:
    """ceil(log2(dim)) for a positive integer dimension."""
    if dim < 1:
        raise ContractError(f"Dimension must be positive, got {dim}")
    return (dim - 1).bit_length()


def _input_qubits(s: int) -> int:
    if s < 2 or s & (s - 1):
        raise ContractError(f"Input dimension must be a power of two >= 2, got {s}")
    return s.bit_length() - 1


def _check_copies(n: int) -> None:
    if n < 1:
        raise ContractError(f"n must be at least 1, got {n}")


def sym_dim(s: int, n: int) -> int:
    """Dimension d_sn = C(s^2 - 1 + n, n) of the n-copy symmetric parameter space.

    Raises:
        ContractError: If s < 2 or n < 1.
        DimensionLimitError: If s or n is beyond the supported range.
    """
    if s < 2:
        raise ContractError(f"s must be at least 2, got {s}")
    _check_copies(n)
    if s > MAX_SYM_INPUT_DIM or n > MAX_SYM_COPIES:
        raise DimensionLimitError(
            f"sym_dim({s}, {n}) is outside the supported range "
            f"(s <= {MAX_SYM_INPUT_DIM}, n <= {MAX_SYM_COPIES})"
        )
    return comb(s * s - 1 + n, n)


def _ceil_root(value: int, n: int) -> int:
    """Smallest integer r with r**n >= value (integer Newton iteration)."""
    if value < 2 or n == 1:
        return value
    x = 1 << _ceil_div(value.bit_length(), n)
    while True:
        y = ((n - 1) * x + value // x ** (n - 1)) // n
        if y >= x:
            break
        x = y
    return x if x**n == value else x + 1


def _report(kind: ArchitectureKind, s: int, n: int, min_dim: int) -> ResourceReport:
    input_qubits = _input_qubits(s)
    reservoir_qubits = qubits_for_dim(min_dim)
    unit_qubits = input_qubits + reservoir_qubits
    if kind is ArchitectureKind.S3L:
        reservoir_total, total, outcomes = reservoir_qubits, unit_qubits, 2**unit_qubits
    elif kind is ArchitectureKind.SM:
        reservoir_total = n * reservoir_qubits
        total = n * unit_qubits
        outcomes = n * 2**unit_qubits
    elif kind is ArchitectureKind.MI:
        reservoir_total, total, outcomes = reservoir_qubits, unit_qubits, 2**unit_qubits
    else:
        reservoir_total = n * reservoir_qubits
        total = n * unit_qubits
        outcomes = 2**total
    return ResourceReport(
        kind=kind.value,
        input_qubits=input_qubits,
        n=n,
        min_reservoir_dim=min_dim,
        min_reservoir_qubits=reservoir_qubits,
        unit_qubits=unit_qubits,
        reservoir_qubits_total=reservoir_total,
        total_qubits=total,
        pvm_outcomes=outcomes,
    )


def s3l_bound(s: int) -> ResourceReport:
    """dim(H_R) >= dim(H_S)."""
    return _report(ArchitectureKind.S3L, s, 1, s)


def sm_bound(s: int, n: int) -> ResourceReport:
    """dim(H_R) >= ceil((s + (n-1)/s) / n) per reservoir."""
    _check_copies(n)
    return _report(ArchitectureKind.SM, s, n, _ceil_div(s * s + n - 1, n * s))


def mi_bound(s: int, n: int) -> ResourceReport:
    """dim(H_R) >= ceil(d_sn / s)."""
    return _report(ArchitectureKind.MI, s, n, _ceil_div(sym_dim(s, n), s))


def d_bound(s: int, n: int) -> ResourceReport:
    """dim(H_R) >= ceil(d_sn^(1/n) / s) per reservoir.

    Computed as the smallest D with (D*s)^n >= d_sn, which equals the real
    n-th root followed by the ceiling.
    """
    root = _ceil_root(sym_dim(s, n), n)
    return _report(ArchitectureKind.D, s, n, _ceil_div(root, s))


def bound_for(kind: "str | ArchitectureKind", s: int, n: int) -> ResourceReport:
    kind = ArchitectureKind.parse(kind)
    if kind is ArchitectureKind.S3L:
        if n != 1:
            raise ContractError(f"S3L has no n parameter, got n={n}")
        return s3l_bound(s)
    if kind is ArchitectureKind.SM:
        return sm_bound(s, n)
    if kind is ArchitectureKind.MI:
        return mi_bound(s, n)
    return d_bound(s, n)


def requirement_table(
    kind: "str | ArchitectureKind",
    input_qubit_range: Iterable[int],
    n_range: Iterable[int],
) -> list[ResourceReport]:
    """Grid of bounds, input-major. S3L ignores ``n_range`` (n is always 1).

    Raises:
        ContractError: If either range is empty.
    """
    kind = ArchitectureKind.parse(kind)
    inputs = list(input_qubit_range)
    ns = [1] if kind is ArchitectureKind.S3L else list(n_range)
    if not inputs or not ns:
        raise ContractError("requirement_table needs non-empty ranges")
    return [bound_for(kind, 2**q, n) for q in inputs for n in ns]
