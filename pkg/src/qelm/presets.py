"""Named experiment presets.

Each experiment preset expands into a list of cases (one architecture and
its targets); bounds presets produce resource grids instead. Sample counts
are the calibrated sizes; run counts are scaled by the desk scale.
"""

from dataclasses import dataclass, replace
from math import ceil
from typing import Callable, Optional

from qelm.architectures import ArchitectureKind, ArchitectureSpec
from qelm.bounds import ResourceReport, d_bound, requirement_table, sym_dim
from qelm.dynamics import ERGODIC, DynamicsProfile, get_profile
from qelm.learn import PINV_RCOND
from qelm.targets import TargetSpec, parse_target

FULL_RUNS = 100
HEAVY_RUNS = 50
BASE_SAMPLES = 200


@dataclass(frozen=True)
class PresetCase:
    """One architecture evaluated on a list of targets."""

    spec: ArchitectureSpec
    targets: tuple[TargetSpec, ...]
    n_samples: int
    with_diagnostics: bool = False
    cutoff: Optional[float] = PINV_RCOND


@dataclass(frozen=True)
class Preset:
    """A named, reproducible sweep.

    Exactly one of ``cases`` (experiment presets, called with the
    big-compute flag) and ``grid`` (bounds presets) is set.
    """

    name: str
    description: str
    cases: Optional[Callable[[bool], list[PresetCase]]] = None
    grid: Optional[Callable[[], list[ResourceReport]]] = None
    full_runs: int = FULL_RUNS
    notes: tuple[str, ...] = ()

    @property
    def is_bounds(self) -> bool:
        return self.grid is not None


def _targets(*texts: str) -> tuple[TargetSpec, ...]:
    return tuple(parse_target(t) for t in texts)


def _spec(
    kind: ArchitectureKind,
    n: int,
    input_qubits: int,
    reservoir_qubits: int,
    dynamics: DynamicsProfile = ERGODIC,
    basis: str = "computational",
) -> ArchitectureSpec:
    return ArchitectureSpec(
        kind=kind,
        n=n,
        input_qubits=input_qubits,
        reservoir_qubits=reservoir_qubits,
        dynamics=dynamics,
        basis=basis,
    )


def _samples_for(s: int, n: int, floor: int = BASE_SAMPLES) -> int:
    """At least 1.5 d_sn samples, never fewer than ``floor``."""
    return max(floor, ceil(1.5 * sym_dim(s, n)))


def _sm_linear(big_compute: bool) -> list[PresetCase]:
    xx = _targets("linear:XX")
    configs = [(2, 1), (2, 2), (3, 1)]
    return [
        PresetCase(_spec(ArchitectureKind.SM, n, 2, res), xx, BASE_SAMPLES)
        for n, res in configs
    ]


def _purity(big_compute: bool) -> list[PresetCase]:
    # Every design reads out 16 outcomes for a single-qubit input.
    purity = _targets("purity")
    return [
        PresetCase(_spec(ArchitectureKind.S3L, 1, 1, 3), purity, BASE_SAMPLES),
        PresetCase(_spec(ArchitectureKind.SM, 2, 1, 2), purity, BASE_SAMPLES),
        PresetCase(_spec(ArchitectureKind.MI, 2, 1, 3), purity, BASE_SAMPLES),
        PresetCase(_spec(ArchitectureKind.D, 2, 1, 1), purity, BASE_SAMPLES),
    ]


def _polynomial(big_compute: bool) -> list[PresetCase]:
    texts = [f"poly:{o}:{k}" for k in range(2, 6) for o in "IXYZ"]
    texts += [
        f"element:{k}:{i}:{j}:{part}"
        for k in range(2, 6)
        for i, j, part in ((0, 0, "re"), (0, 1, "re"), (0, 1, "im"))
    ]
    targets = _targets(*texts)
    return [
        PresetCase(
            _spec(ArchitectureKind.D, n, 1, d_bound(2, n).min_reservoir_qubits),
            targets,
            _samples_for(2, n),
        )
        for n in range(2, 6)
    ]


def _renyi(big_compute: bool) -> list[PresetCase]:
    targets = _targets("renyi:0.5", "renyi:2", "renyi:3", "renyi:4", "renyi:5", "vn")
    return [
        PresetCase(
            _spec(ArchitectureKind.D, n, 1, d_bound(2, n).min_reservoir_qubits),
            targets,
            500,
        )
        for n in range(2, 6)
    ]


_VARIABLE_SAMPLES = {2: 255, 3: 1530, 4: 7268}


def _entanglement(big_compute: bool) -> list[PresetCase]:
    targets = _targets("concurrence", "negativity")
    ns = (2, 3, 4) if big_compute else (2, 3)
    fixed = 10000 if big_compute else 2000
    cases = []
    for n in ns:
        spec = _spec(ArchitectureKind.D, n, 2, d_bound(4, n).min_reservoir_qubits)
        cases.append(PresetCase(spec, targets, _VARIABLE_SAMPLES[n]))
        cases.append(PresetCase(spec, targets, fixed))
    return cases


def _dynamics_regimes(big_compute: bool) -> list[PresetCase]:
    targets = _targets("bloch:x", "bloch:y", "bloch:z")
    return [
        PresetCase(
            _spec(ArchitectureKind.S3L, 1, 1, 1, get_profile(profile), basis),
            targets,
            BASE_SAMPLES,
        )
        for profile in ("decoupled", "no-field", "ergodic")
        for basis in ("computational", "x")
    ]


CORRELATION_SCALES = (0.0, 5e-8, 5e-6, 5e-4, 5e-2)


def _correlations(big_compute: bool) -> list[PresetCase]:
    # Weak couplings leave singular values far below 1e-10 of the largest.
    targets = _targets("bloch:x")
    cases = []
    for j_scale in CORRELATION_SCALES:
        profile = replace(ERGODIC, name=f"j_scale={j_scale:g}", j_scale=j_scale)
        spec = _spec(ArchitectureKind.S3L, 1, 1, 1, profile)
        cases.append(
            PresetCase(spec, targets, BASE_SAMPLES, with_diagnostics=True, cutoff=None)
        )
    return cases


def _s3l_bound(big_compute: bool) -> list[PresetCase]:
    xx = _targets("linear:XX")
    return [
        PresetCase(_spec(ArchitectureKind.S3L, 1, 2, res), xx, BASE_SAMPLES)
        for res in (1, 2, 3)
    ]


def _mi_bound(big_compute: bool) -> list[PresetCase]:
    target = _targets("poly:XX:2")
    return [
        PresetCase(_spec(ArchitectureKind.MI, 2, 2, res), target, _samples_for(4, 2, 0))
        for res in (5, 6)
    ]


def _d_bound(big_compute: bool) -> list[PresetCase]:
    target = _targets("poly:XX:2")
    return [
        PresetCase(_spec(ArchitectureKind.D, 2, 2, res), target, _samples_for(4, 2, 0))
        for res in (1, 2)
    ]


def _scaling_grid() -> list[ResourceReport]:
    rows = requirement_table(ArchitectureKind.S3L, range(1, 6), [1])
    for kind in (ArchitectureKind.SM, ArchitectureKind.MI, ArchitectureKind.D):
        rows += requirement_table(kind, range(1, 6), range(1, 11))
    return rows


def _colormap_grid() -> list[ResourceReport]:
    rows: list[ResourceReport] = []
    for kind in (ArchitectureKind.SM, ArchitectureKind.MI, ArchitectureKind.D):
        rows += requirement_table(kind, range(1, 11), range(1, 11))
    return rows


_ENTANGLEMENT_REFERENCE = (
    "Reference NMSE with 4 reservoirs (not run at desk scale):",
    "  variable N=7268: concurrence 0.178 +/- 0.009, negativity 0.122 +/- 0.007",
    "  fixed N=10000:   concurrence 0.097 +/- 0.004, negativity 0.068 +/- 0.003",
)

_presets: dict[str, Preset] = {}


def _register(preset: Preset) -> None:
    _presets[preset.name] = preset


_register(Preset("sm-linear", "SM units on Tr[XX rho] for 2-qubit inputs", _sm_linear))
_register(Preset("purity", "Purity of 1-qubit inputs, all designs at 16 outcomes", _purity))
_register(
    Preset(
        "polynomial",
        "D design on Tr[O rho^k] and entries of rho^k, n=2..5",
        _polynomial,
        full_runs=HEAVY_RUNS,
    )
)
_register(Preset("renyi", "D design on Renyi entropies, n=2..5, N=500", _renyi))
_register(
    Preset(
        "entanglement",
        "D design on concurrence and negativity of 2-qubit inputs",
        _entanglement,
        full_runs=HEAVY_RUNS,
        notes=_ENTANGLEMENT_REFERENCE,
    )
)
_register(
    Preset(
        "dynamics-regimes",
        "S3L Pauli targets across coupling/field regimes and bases",
        _dynamics_regimes,
    )
)
_register(
    Preset(
        "correlations",
        "S3L <X> with input-reservoir correlations across coupling scales",
        _correlations,
    )
)
_register(Preset("s3l-bound", "S3L reservoir-size sweep on Tr[XX rho]", _s3l_bound))
_register(
    Preset(
        "mi-bound",
        "MI reservoir-size sweep on Tr[XX rho^2]",
        _mi_bound,
        full_runs=HEAVY_RUNS,
    )
)
_register(
    Preset(
        "d-bound",
        "D reservoir-size sweep on Tr[XX rho^2]",
        _d_bound,
        full_runs=HEAVY_RUNS,
    )
)
_register(Preset("scaling", "Qubit requirements for 1-5 qubit inputs", grid=_scaling_grid))
_register(
    Preset("colormaps", "Per-reservoir qubits for 1-10 qubit inputs", grid=_colormap_grid)
)


def get_preset(name: str) -> Preset:
    """Look up a preset.

    Raises:
        ValueError: If no preset has this name.
    """
    if name not in _presets:
        available = ", ".join(get_available_presets())
        raise ValueError(f"Unknown preset '{name}'. Available: {available}")
    return _presets[name]


def get_available_presets() -> list[str]:
    return list(_presets)
