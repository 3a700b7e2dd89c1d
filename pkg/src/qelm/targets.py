"""Target functionals learned from measurement statistics.

All entropies use the natural logarithm. Eigenvalues are clamped at zero
before fractional powers and logarithms.
"""

import re
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.special import xlogy

from qelm.qcore import (
    PAULI,
    ContractError,
    DensityMatrix,
    HermitianObservable,
    expectation,
    matrix_power,
    partial_trace,
    pauli_string,
)

_SPIN_FLIP = np.kron(PAULI["Y"], PAULI["Y"])


class TargetKind(str, Enum):
    LINEAR = "LinearObservable"
    POLYNOMIAL = "Polynomial"
    PURITY = "Purity"
    RENYI = "Renyi"
    VON_NEUMANN = "VonNeumann"
    CONCURRENCE = "Concurrence"
    NEGATIVITY = "Negativity"
    BLOCH = "BlochComponent"
    MUTUAL_INFORMATION = "MutualInformation"
    MATRIX_ELEMENT = "MatrixPowerElement"


@dataclass(frozen=True, eq=False)
class TargetSpec:
    """One scalar function of the input state.

    ``label`` is the human-readable name written to result rows; it is
    derived from the parameters unless given explicitly.
    """

    kind: TargetKind
    observable: Optional[HermitianObservable] = None
    degree: Optional[int] = None
    alpha: Optional[float] = None
    bipartition: Optional[tuple[int, int]] = None
    axis: Optional[str] = None
    element: Optional[tuple[int, int, str]] = None
    label: str = ""

    def __post_init__(self) -> None:
        kind = TargetKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind in (TargetKind.LINEAR, TargetKind.POLYNOMIAL) and self.observable is None:
            raise ContractError(f"{kind.value} target requires an observable")
        if kind in (TargetKind.POLYNOMIAL, TargetKind.MATRIX_ELEMENT):
            if self.degree is None or self.degree < 1:
                raise ContractError(f"{kind.value} target requires degree >= 1")
        if kind is TargetKind.RENYI:
            if self.alpha is None or self.alpha <= 0 or self.alpha == 1:
                raise ContractError("Renyi target requires alpha > 0 and alpha != 1")
        if kind in (TargetKind.CONCURRENCE, TargetKind.NEGATIVITY):
            if self.bipartition not in (None, (2, 2)):
                raise ContractError(f"{kind.value} target requires a 2|2 split")
        if kind is TargetKind.MUTUAL_INFORMATION and self.bipartition is None:
            raise ContractError("MutualInformation target requires a bipartition")
        if kind is TargetKind.BLOCH and self.axis not in ("x", "y", "z"):
            raise ContractError(f"Bloch target requires axis x, y or z, got {self.axis!r}")
        if kind is TargetKind.MATRIX_ELEMENT:
            if self.element is None or self.element[2] not in ("re", "im"):
                raise ContractError("MatrixPowerElement target requires (row, col, re|im)")
        if not self.label:
            object.__setattr__(self, "label", _default_label(self))

    @property
    def input_dim(self) -> Optional[int]:
        """Input dimension this target is restricted to, if any."""
        if self.observable is not None:
            return self.observable.dim
        if self.kind in (TargetKind.CONCURRENCE, TargetKind.NEGATIVITY):
            return 4
        if self.kind is TargetKind.BLOCH:
            return 2
        if self.bipartition is not None:
            return self.bipartition[0] * self.bipartition[1]
        return None


def _default_label(spec: TargetSpec) -> str:
    kind = spec.kind
    if kind is TargetKind.LINEAR:
        return "Tr[O rho]"
    if kind is TargetKind.POLYNOMIAL:
        return f"Tr[O rho^{spec.degree}]"
    if kind is TargetKind.RENYI:
        return f"renyi(alpha={spec.alpha:g})"
    if kind is TargetKind.BLOCH:
        return f"bloch_{spec.axis}"
    if kind is TargetKind.MUTUAL_INFORMATION:
        return f"mutual_information({spec.bipartition[0]}x{spec.bipartition[1]})"
    if kind is TargetKind.MATRIX_ELEMENT:
        row, col, part = spec.element
        return f"{part}(rho^{spec.degree})[{row},{col}]"
    return kind.value.lower()


def polynomial_target(o: HermitianObservable, rho: DensityMatrix, k: int) -> float:
    """Tr[O rho^k]."""
    if o.dim != rho.dim:
        raise ContractError(f"Observable dim {o.dim} != state dim {rho.dim}")
    if k == 1:
        return expectation(o, rho)
    return float(np.einsum("ij,ji->", o.matrix, matrix_power(rho, k)).real)


def _spectrum(rho: DensityMatrix) -> np.ndarray:
    return np.clip(scipy.linalg.eigvalsh(rho.matrix), 0.0, None)


def renyi_entropy(rho: DensityMatrix, alpha: float) -> float:
    """(1/(1-alpha)) ln sum_j lambda_j^alpha.

    Raises:
        ContractError: If alpha <= 0 or alpha == 1 (use von_neumann_entropy).
    """
    if alpha <= 0 or alpha == 1:
        raise ContractError(f"Renyi order must be > 0 and != 1, got {alpha}")
    eigenvalues = _spectrum(rho)
    return float(np.log(np.sum(eigenvalues[eigenvalues > 0] ** alpha)) / (1.0 - alpha))


def von_neumann_entropy(rho: DensityMatrix) -> float:
    eigenvalues = _spectrum(rho)
    return float(-np.sum(xlogy(eigenvalues, eigenvalues)))


def mutual_information(rho_ab: DensityMatrix, dim_a: int, dim_b: int) -> float:
    """S(rho_A) + S(rho_B) - S(rho_AB)."""
    if dim_a * dim_b != rho_ab.dim:
        raise ContractError(
            f"Bipartition {dim_a}x{dim_b} does not match state dim {rho_ab.dim}"
        )
    s_a = von_neumann_entropy(partial_trace(rho_ab, [dim_a, dim_b], [0]))
    s_b = von_neumann_entropy(partial_trace(rho_ab, [dim_a, dim_b], [1]))
    return s_a + s_b - von_neumann_entropy(rho_ab)


def _require_two_qubits(rho: DensityMatrix, what: str) -> None:
    if rho.dim != 4:
        raise ContractError(f"{what} needs a two-qubit state, got dim {rho.dim}")


def concurrence(rho: DensityMatrix) -> float:
    """max(0, l1 - l2 - l3 - l4) from the spectrum of rho (YY) rho* (YY)."""
    _require_two_qubits(rho, "Concurrence")
    flipped = _SPIN_FLIP @ rho.matrix.conj() @ _SPIN_FLIP
    eigenvalues = np.clip(np.linalg.eigvals(rho.matrix @ flipped).real, 0.0, None)
    lam = np.sort(np.sqrt(eigenvalues))[::-1]
    return float(min(1.0, max(0.0, lam[0] - lam[1] - lam[2] - lam[3])))


def negativity(rho: DensityMatrix, dims: tuple[int, int] = (2, 2)) -> float:
    """(||rho^{T_B}||_1 - 1) / 2."""
    dim_a, dim_b = dims
    if dims != (2, 2):
        raise ContractError(f"Negativity is defined here for a 2|2 split, got {dims}")
    _require_two_qubits(rho, "Negativity")
    transposed = (
        rho.matrix.reshape(dim_a, dim_b, dim_a, dim_b)
        .transpose(0, 3, 2, 1)
        .reshape(rho.dim, rho.dim)
    )
    mu = scipy.linalg.eigvalsh(transposed)
    return float((np.sum(np.abs(mu)) - 1.0) / 2.0)


def bloch_component(rho: DensityMatrix, axis: str) -> float:
    """Tr[sigma_axis rho] for a single qubit."""
    if rho.dim != 2:
        raise ContractError(f"Bloch components need a qubit state, got dim {rho.dim}")
    letter = axis.upper()
    if letter not in ("X", "Y", "Z"):
        raise ContractError(f"Unknown Bloch axis '{axis}'")
    return expectation(pauli_string(letter), rho)


def matrix_power_element(
    rho: DensityMatrix, k: int, row: int, col: int, part: str = "re"
) -> float:
    """Real or imaginary part of entry (row, col) of rho^k."""
    if not (0 <= row < rho.dim and 0 <= col < rho.dim):
        raise ContractError(f"Entry ({row}, {col}) out of range for dim {rho.dim}")
    value = matrix_power(rho, k)[row, col]
    return float(value.real if part == "re" else value.imag)


def evaluate_target(spec: TargetSpec, rho: DensityMatrix) -> float:
    """Exact value of ``spec`` on ``rho``."""
    kind = spec.kind
    if kind is TargetKind.LINEAR:
        return expectation(spec.observable, rho)
    if kind is TargetKind.POLYNOMIAL:
        return polynomial_target(spec.observable, rho, spec.degree)
    if kind is TargetKind.PURITY:
        return polynomial_target(HermitianObservable(np.eye(rho.dim)), rho, 2)
    if kind is TargetKind.RENYI:
        return renyi_entropy(rho, spec.alpha)
    if kind is TargetKind.VON_NEUMANN:
        return von_neumann_entropy(rho)
    if kind is TargetKind.CONCURRENCE:
        return concurrence(rho)
    if kind is TargetKind.NEGATIVITY:
        return negativity(rho)
    if kind is TargetKind.BLOCH:
        return bloch_component(rho, spec.axis)
    if kind is TargetKind.MUTUAL_INFORMATION:
        return mutual_information(rho, *spec.bipartition)
    row, col, part = spec.element
    return matrix_power_element(rho, spec.degree, row, col, part)


# --- Text form used by config files and presets ---

_PAULI_WORD = r"[IXYZixyz]+"
_LINEAR_PATTERN = re.compile(rf"^linear:({_PAULI_WORD})$")
_POLY_PATTERN = re.compile(rf"^poly:({_PAULI_WORD}):(\d+)$")
_RENYI_PATTERN = re.compile(r"^renyi:([0-9]*\.?[0-9]+)$")
_BLOCH_PATTERN = re.compile(r"^bloch:([xyz])$")
_MI_PATTERN = re.compile(r"^mi:(\d+)x(\d+)$")
_ELEMENT_PATTERN = re.compile(r"^element:(\d+):(\d+):(\d+):(re|im)$")


def parse_target(text: str) -> TargetSpec:
    """Parse the compact target grammar.

    Supported forms: ``linear:XX``, ``poly:X:3``, ``purity``, ``renyi:2``,
    ``vn``, ``concurrence``, ``negativity``, ``bloch:z``, ``mi:2x2`` and
    ``element:3:0:1:im``.

    Raises:
        ContractError: If ``text`` matches none of the forms.
    """
    text = text.strip()
    simple = {
        "purity": TargetKind.PURITY,
        "vn": TargetKind.VON_NEUMANN,
        "concurrence": TargetKind.CONCURRENCE,
        "negativity": TargetKind.NEGATIVITY,
    }
    if text in simple:
        return TargetSpec(simple[text])
    if match := _LINEAR_PATTERN.match(text):
        word = match.group(1).upper()
        return TargetSpec(TargetKind.LINEAR, observable=pauli_string(word), label=f"Tr[{word} rho]")
    if match := _POLY_PATTERN.match(text):
        word, degree = match.group(1).upper(), int(match.group(2))
        return TargetSpec(
            TargetKind.POLYNOMIAL,
            observable=pauli_string(word),
            degree=degree,
            label=f"Tr[{word} rho^{degree}]",
        )
    if match := _RENYI_PATTERN.match(text):
        return TargetSpec(TargetKind.RENYI, alpha=float(match.group(1)))
    if match := _BLOCH_PATTERN.match(text):
        return TargetSpec(TargetKind.BLOCH, axis=match.group(1))
    if match := _MI_PATTERN.match(text):
        return TargetSpec(
            TargetKind.MUTUAL_INFORMATION,
            bipartition=(int(match.group(1)), int(match.group(2))),
        )
    if match := _ELEMENT_PATTERN.match(text):
        return TargetSpec(
            TargetKind.MATRIX_ELEMENT,
            degree=int(match.group(1)),
            element=(int(match.group(2)), int(match.group(3)), match.group(4)),
        )
    raise ContractError(f"Cannot parse target '{text}'")
