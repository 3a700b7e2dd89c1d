"""Experiment execution: presets, explicit configs and row rendering."""

import csv
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable, Optional, Sequence, Union

from qelm.architectures import ArchitectureSpec
from qelm.bounds import ResourceReport
from qelm.config import load_toml
from qelm.dynamics import DynamicsProfile, get_profile
from qelm.learn import run_experiment
from qelm.presets import Preset, PresetCase, get_preset
from qelm.targets import TargetSpec, parse_target

logger = logging.getLogger(__name__)

DEFAULT_SEED = 1234
DEFAULT_DESK_SCALE = 0.1
DEFAULT_RUNS = 100
DEFAULT_SAMPLES = 200
FORMATS = ("csv", "json")

Progress = Optional[Callable[[str], None]]


@dataclass(frozen=True)
class ResultRow:
    """One (case, target) result. Field order is the CSV header order."""

    preset: str
    architecture: str
    n: int
    input_qubits: int
    reservoir_qubits: int
    pvm_outcomes: int
    target: str
    nmse_mean: float
    nmse_std: float
    n_runs: int
    n_samples: int
    master_seed: int
    wall_time_seconds: float
    basis: str
    j_scale: float
    field: float
    mean_abs_coupling: Optional[float] = None
    mutual_information_mean: Optional[float] = None
    concurrence_mean: Optional[float] = None


@dataclass(frozen=True)
class RunOverrides:
    """Knobs shared by preset and explicit runs.

    ``n_runs`` and ``n_samples`` replace the scaled counts when set.
    """

    master_seed: int = DEFAULT_SEED
    n_runs: Optional[int] = None
    n_samples: Optional[int] = None
    desk_scale: float = DEFAULT_DESK_SCALE
    scale_samples: bool = False
    train_fraction: float = 0.8
    regularization: Optional[float] = None
    ensemble: str = "ginibre"
    threads: int = 1
    big_compute: bool = False

    def __post_init__(self) -> None:
        if not 0 < self.desk_scale <= 1:
            raise ValueError(f"desk_scale must be in (0, 1], got {self.desk_scale}")
        if self.n_runs is not None and self.n_runs < 1:
            raise ValueError(f"n_runs must be at least 1, got {self.n_runs}")
        if self.n_samples is not None and self.n_samples < 2:
            raise ValueError(f"n_samples must be at least 2, got {self.n_samples}")
        if self.threads < 1:
            raise ValueError(f"threads must be at least 1, got {self.threads}")


@dataclass(frozen=True)
class ExperimentConfig:
    """A preset name or an explicit architecture/target block, plus sink.

    ``n_runs`` and ``n_samples`` are full-scale counts: the desk scale
    applies to them as it does to preset counts. For a preset they replace
    its full run count and every case's sample count; an explicit block
    defaults to 100 runs of 200 samples.
    """

    preset: Optional[str] = None
    architecture: Optional[ArchitectureSpec] = None
    targets: tuple[TargetSpec, ...] = ()
    n_samples: Optional[int] = None
    n_runs: Optional[int] = None
    overrides: RunOverrides = field(default_factory=RunOverrides)
    output: Optional[Path] = None
    format: str = "csv"

    def __post_init__(self) -> None:
        if (self.preset is None) == (self.architecture is None):
            raise ValueError("Exactly one of 'preset' or 'architecture' must be given")
        if self.architecture is not None and not self.targets:
            raise ValueError("An explicit architecture needs at least one target")
        if self.n_runs is not None and self.n_runs < 1:
            raise ValueError(f"n_runs must be at least 1, got {self.n_runs}")
        if self.n_samples is not None and self.n_samples < 2:
            raise ValueError(f"n_samples must be at least 2, got {self.n_samples}")
        if self.format not in FORMATS:
            raise ValueError(f"Unknown format '{self.format}'. Available: {', '.join(FORMATS)}")


def scaled_runs(full_runs: int, desk_scale: float) -> int:
    return max(1, math.floor(round(full_runs * desk_scale, 9)))


def scaled_samples(n_samples: int, outcomes: int, desk_scale: float) -> int:
    """Scale ``n_samples`` but never below p + 1 (unless N itself is smaller)."""
    return max(math.floor(round(n_samples * desk_scale, 9)), min(n_samples, outcomes + 1))


def _resolve_counts(
    n_samples: int, full_runs: int, outcomes: int, overrides: RunOverrides
) -> tuple[int, int]:
    runs = overrides.n_runs or scaled_runs(full_runs, overrides.desk_scale)
    if overrides.n_samples is not None:
        samples = overrides.n_samples
    elif overrides.scale_samples:
        samples = scaled_samples(n_samples, outcomes, overrides.desk_scale)
    else:
        samples = n_samples
    return samples, runs


def _run_case(
    label: str,
    case: PresetCase,
    full_runs: int,
    overrides: RunOverrides,
    progress: Progress,
) -> list[ResultRow]:
    spec = case.spec
    samples, runs = _resolve_counts(case.n_samples, full_runs, spec.pvm_outcomes, overrides)
    if progress:
        progress(
            f"{label}: {spec.kind.value} n={spec.n} "
            f"({spec.input_qubits}+{spec.reservoir_qubits} qubits, {spec.basis}), "
            f"{runs} runs x {samples} samples"
        )
    started = time.perf_counter()
    result = run_experiment(
        spec,
        case.targets,
        samples,
        runs,
        overrides.master_seed,
        train_fraction=overrides.train_fraction,
        regularization=overrides.regularization,
        cutoff=case.cutoff,
        ensemble=overrides.ensemble,
        threads=overrides.threads,
        with_diagnostics=case.with_diagnostics,
    )
    elapsed = time.perf_counter() - started
    diag = result.diagnostics
    return [
        ResultRow(
            preset=label,
            architecture=spec.kind.value,
            n=spec.n,
            input_qubits=spec.input_qubits,
            reservoir_qubits=spec.reservoir_qubits,
            pvm_outcomes=spec.pvm_outcomes,
            target=target.label,
            nmse_mean=mean,
            nmse_std=std,
            n_runs=runs,
            n_samples=samples,
            master_seed=overrides.master_seed,
            wall_time_seconds=elapsed,
            basis=spec.basis,
            j_scale=spec.dynamics.j_scale,
            field=spec.dynamics.field,
            mean_abs_coupling=diag.mean_abs_coupling if diag else None,
            mutual_information_mean=diag.mutual_information_mean if diag else None,
            concurrence_mean=diag.concurrence_mean if diag else None,
        )
        for target, (mean, std) in zip(case.targets, result.summary())
    ]


def run_preset(
    name: str,
    overrides: Optional[RunOverrides] = None,
    progress: Progress = None,
    *,
    full_runs: Optional[int] = None,
    n_samples: Optional[int] = None,
) -> Union[list[ResultRow], list[ResourceReport]]:
    """Run every case of preset ``name``.

    ``full_runs`` and ``n_samples`` replace the preset's own full-scale
    counts; both are still subject to the desk scale.

    Raises:
        ValueError: If the preset does not exist.
        DimensionLimitError: If a case exceeds the dimension cap.
    """
    preset: Preset = get_preset(name)
    overrides = overrides or RunOverrides()
    if preset.is_bounds:
        return preset.grid()
    rows: list[ResultRow] = []
    for case in preset.cases(overrides.big_compute):
        if n_samples is not None:
            case = replace(case, n_samples=n_samples)
        rows += _run_case(preset.name, case, full_runs or preset.full_runs, overrides, progress)
    return rows


def run_config(cfg: ExperimentConfig, progress: Progress = None) -> Union[list[ResultRow], list[ResourceReport]]:
    """Execute a preset reference or an explicit architecture block."""
    if cfg.preset is not None:
        return run_preset(
            cfg.preset, cfg.overrides, progress, full_runs=cfg.n_runs, n_samples=cfg.n_samples
        )
    case = PresetCase(cfg.architecture, cfg.targets, cfg.n_samples or DEFAULT_SAMPLES)
    return _run_case("custom", case, cfg.n_runs or DEFAULT_RUNS, cfg.overrides, progress)


# --- Experiment config files ---

# File counts are full-scale counts, not literal replacements like --runs.
_OVERRIDE_KEYS = {f.name for f in fields(RunOverrides)} - {"n_runs", "n_samples"}


def _dynamics_from(value: Any, default_profile: str) -> DynamicsProfile:
    if value is None:
        return get_profile(default_profile)
    if isinstance(value, str):
        return get_profile(value)
    if isinstance(value, dict):
        return DynamicsProfile(
            name=str(value.get("name", "custom")),
            j_scale=float(value.get("j_scale", 1.0)),
            field=float(value.get("field", 1.0)),
            time=float(value.get("time", 10.0)),
        )
    raise ValueError(f"Cannot interpret dynamics {value!r}")


def _optional_int(value: Any) -> Optional[int]:
    return None if value is None else int(value)


def experiment_config_from_dict(
    data: dict,
    base: Optional[RunOverrides] = None,
    default_profile: str = "ergodic",
) -> ExperimentConfig:
    """Build an ExperimentConfig from parsed JSON/TOML.

    Keys mirror the dataclass fields; ``architecture`` is a table with
    kind, n, input_qubits, reservoir_qubits and optional basis and
    shared_channels; ``dynamics`` is a profile name or a (j_scale, field,
    time) table; run knobs (master_seed, desk_scale, ...) sit at top level.

    Raises:
        ValueError: On unknown keys or inconsistent content.
    """
    known = {"preset", "architecture", "targets", "dynamics", "n_samples", "n_runs", "output", "format"}
    unknown = set(data) - known - _OVERRIDE_KEYS
    if unknown:
        raise ValueError(f"Unknown experiment config keys: {', '.join(sorted(unknown))}")

    overrides = replace(
        base or RunOverrides(), **{k: data[k] for k in _OVERRIDE_KEYS if k in data}
    )
    architecture = None
    if "architecture" in data:
        block = dict(data["architecture"])
        try:
            architecture = ArchitectureSpec(
                kind=block.pop("kind"),
                n=int(block.pop("n", 1)),
                input_qubits=int(block.pop("input_qubits")),
                reservoir_qubits=int(block.pop("reservoir_qubits")),
                dynamics=_dynamics_from(data.get("dynamics"), default_profile),
                basis=block.pop("basis", "computational"),
                shared_channels=bool(block.pop("shared_channels", False)),
            )
        except KeyError as exc:
            raise ValueError(f"architecture block is missing {exc}") from None
        if block:
            raise ValueError(f"Unknown architecture keys: {', '.join(sorted(block))}")

    output = data.get("output")
    return ExperimentConfig(
        preset=data.get("preset"),
        architecture=architecture,
        targets=tuple(parse_target(t) for t in data.get("targets", [])),
        n_samples=_optional_int(data.get("n_samples")),
        n_runs=_optional_int(data.get("n_runs")),
        overrides=overrides,
        output=Path(output) if output else None,
        format=data.get("format", "csv"),
    )


def load_experiment_config(
    path: Path,
    base: Optional[RunOverrides] = None,
    default_profile: str = "ergodic",
) -> ExperimentConfig:
    """Read a JSON (or ``.toml``) experiment file.

    Raises:
        OSError: If the file cannot be read.
        ValueError: If it cannot be parsed or validated.
    """
    text = Path(path).read_text()
    if Path(path).suffix == ".toml":
        data = load_toml(text)
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValueError(f"Invalid JSON in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ValueError(f"{path} must contain an object at top level")
    return experiment_config_from_dict(data, base, default_profile)


# --- Rendering ---


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def render_rows(rows: Sequence[Any], fmt: str, row_type: type) -> str:
    """Render dataclass rows as CSV (fixed header) or a JSON array."""
    if fmt not in FORMATS:
        raise ValueError(f"Unknown format '{fmt}'. Available: {', '.join(FORMATS)}")
    names = [f.name for f in fields(row_type)]
    if fmt == "json":
        return json.dumps([asdict(row) for row in rows], indent=2) + "\n"
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(names)
    for row in rows:
        writer.writerow([_cell(getattr(row, name)) for name in names])
    return buffer.getvalue()
