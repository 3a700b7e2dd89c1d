"""CLI interface for qelm."""

import logging
import re
import warnings
from dataclasses import replace
from datetime import datetime
from pathlib import Path
from typing import Any, Optional, Sequence

import typer

from qelm.bounds import ResourceReport, requirement_table
from qelm.config import (
    CONFIG_FILE,
    FORMATS,
    check_mutually_exclusive,
    default_config,
    read_config,
    resolve_run_config,
    validate_config,
    write_config,
)
from qelm.learn import ExperimentRunError, UnderdeterminedReadoutWarning
from qelm.presets import get_available_presets, get_preset
from qelm.qcore import DimensionLimitError, set_max_dimension
from qelm.runner import (
    ExperimentConfig,
    ResultRow,
    RunOverrides,
    load_experiment_config,
    render_rows,
    run_config,
)

app = typer.Typer(help="Simulate quantum extreme learning machines and their resource bounds")

EXIT_CONFIG = 1
EXIT_USAGE = 2
EXIT_RESOURCE = 3
EXIT_IO = 4

_RANGE_PATTERN = re.compile(r"^\s*(\d+)\s*(?:\.\.\s*(\d+)\s*)?$")


def _timestamp() -> str:
    """Return current time formatted as [HH:MM:SS]."""
    return datetime.now().strftime("[%H:%M:%S]")


def _parse_range(text: str, option: str) -> range:
    """Parse ``A..B`` (inclusive) or a single integer."""
    match = _RANGE_PATTERN.match(text)
    if not match:
        raise typer.BadParameter(f"expected A..B or an integer, got {text!r}", param_hint=option)
    start = int(match.group(1))
    stop = int(match.group(2) or start)
    if start < 1 or stop < start:
        raise typer.BadParameter(f"empty or non-positive range {text!r}", param_hint=option)
    return range(start, stop + 1)


def _validate_config_file() -> dict:
    config = read_config()
    if config:
        validation = validate_config(config)
        for warning in validation.warnings:
            typer.echo(f"Warning: {warning}", err=True)
        if not validation.is_valid:
            for error in validation.errors:
                typer.echo(f"Error: {error}", err=True)
            raise typer.Exit(EXIT_CONFIG)
    return config


def emit(rows: Sequence[Any], fmt: str, path: Optional[Path], row_type: type) -> None:
    """Write rendered rows to ``path``, or to stdout when no path is given."""
    text = render_rows(rows, fmt, row_type)
    if path is None:
        typer.echo(text, nl=False)
        return
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as e:
        typer.echo(f"Error: cannot write {path}: {e}", err=True)
        raise typer.Exit(EXIT_IO)


@app.command()
def run(
    preset: Optional[str] = typer.Option(None, "--preset", "-p", help="Preset to run"),
    config_file: Optional[Path] = typer.Option(
        None, "--config", "-c", help="JSON or TOML experiment file"
    ),
    seed: Optional[int] = typer.Option(None, "--seed", help="Master seed"),
    runs: Optional[int] = typer.Option(
        None, "--runs", min=1, help="Number of runs (replaces the scaled count)"
    ),
    samples: Optional[int] = typer.Option(
        None, "--samples", min=2, help="Samples per run (replaces the preset value)"
    ),
    desk_scale: Optional[float] = typer.Option(
        None, "--desk-scale", help="Fraction of the full run count (default: 0.1)"
    ),
    scale_samples: bool = typer.Option(
        False, "--scale-samples", help="Scale sample counts by the desk scale too"
    ),
    output_format: Optional[str] = typer.Option(
        None, "--format", help="Output format: csv or json"
    ),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output file (default: stdout)"),
    threads: Optional[int] = typer.Option(
        None, "--threads", help="Parallel runs (default: QELM_THREADS or 1)"
    ),
    big_compute: bool = typer.Option(
        False, "--big-compute", help="Include cases that are too large for a workstation"
    ),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Show progress"),
) -> None:
    """Run a preset or an experiment file and emit one row per target."""
    config = _validate_config_file()

    try:
        check_mutually_exclusive(preset, "--preset", config_file, "--config")
        if preset is None and config_file is None:
            raise ValueError("One of --preset or --config is required")
        resolved = resolve_run_config(
            seed=seed,
            desk_scale=desk_scale,
            scale_samples=scale_samples,
            threads=threads,
            output_format=output_format,
            verbose=verbose,
            config=config,
        )
        base = RunOverrides(
            master_seed=resolved.seed,
            n_runs=runs,
            n_samples=samples,
            desk_scale=resolved.desk_scale,
            scale_samples=resolved.scale_samples,
            train_fraction=resolved.train_fraction,
            ensemble=resolved.ensemble,
            threads=resolved.threads,
            big_compute=big_compute,
        )
        fmt = resolved.format
        if config_file is not None:
            cfg = load_experiment_config(config_file, base, resolved.profile)
            # Explicit flags beat values from the experiment file.
            explicit = {
                "master_seed": seed,
                "n_runs": runs,
                "n_samples": samples,
                "desk_scale": desk_scale,
                "threads": threads,
            }
            cfg = replace(
                cfg,
                overrides=replace(
                    cfg.overrides, **{k: v for k, v in explicit.items() if v is not None}
                ),
            )
            fmt = output_format or cfg.format
        else:
            cfg = ExperimentConfig(preset=preset, overrides=base, format=fmt)
        row_type = ResultRow
        if cfg.preset is not None:
            selected = get_preset(cfg.preset)
            row_type = ResourceReport if selected.is_bounds else ResultRow
            for note in selected.notes:
                typer.echo(note, err=True)
    except OSError as e:
        typer.echo(f"Error: cannot read {config_file}: {e}", err=True)
        raise typer.Exit(EXIT_IO)
    except ValueError as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(EXIT_USAGE)

    if resolved.verbose:
        logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")

    def progress(message: str) -> None:
        if resolved.verbose:
            typer.echo(f"{_timestamp()} {message}", err=True)

    set_max_dimension(resolved.max_dim)
    try:
        with warnings.catch_warnings():
            if not resolved.verbose:
                warnings.simplefilter("ignore", UnderdeterminedReadoutWarning)
            rows = run_config(cfg, progress)
    except DimensionLimitError as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(EXIT_RESOURCE)
    except ExperimentRunError as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(1)
    except ValueError as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(EXIT_USAGE)
    finally:
        set_max_dimension(None)

    progress(f"Writing {len(rows)} rows")
    emit(rows, fmt, out or cfg.output, row_type)


@app.command()
def bounds(
    arch: str = typer.Option(..., "--arch", "-a", help="Architecture: S3L, SM, MI or D"),
    input_qubits: str = typer.Option(
        "1..5", "--input-qubits", help="Input qubit range A..B"
    ),
    n: str = typer.Option("1..10", "--n", help="Copy/unit range C..D (ignored for S3L)"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output file (default: stdout)"),
    output_format: str = typer.Option("csv", "--format", help="Output format: csv or json"),
) -> None:
    """Tabulate minimum reservoir sizes over a grid of inputs and copies."""
    if output_format not in FORMATS:
        raise typer.BadParameter(
            f"expected one of {', '.join(FORMATS)}, got {output_format!r}",
            param_hint="--format",
        )
    input_range = _parse_range(input_qubits, "--input-qubits")
    n_range = _parse_range(n, "--n")
    try:
        rows = requirement_table(arch, input_range, n_range)
    except DimensionLimitError as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(EXIT_RESOURCE)
    except ValueError as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(EXIT_USAGE)
    emit(rows, output_format, out, ResourceReport)


@app.command(name="list-presets")
def list_presets() -> None:
    """List the available presets."""
    width = max(len(name) for name in get_available_presets())
    for name in get_available_presets():
        preset = get_preset(name)
        kind = "bounds" if preset.is_bounds else f"{preset.full_runs} runs"
        typer.echo(f"  {name:<{width}}  {preset.description} ({kind})")


@app.command()
def init(
    force: bool = typer.Option(False, "--force", "-f", help="Overwrite an existing config"),
) -> None:
    """Write a .qelm.toml with the default settings."""
    config_path = Path(CONFIG_FILE)
    if config_path.exists() and not force:
        typer.echo(
            f"Error: {config_path} already exists. Use --force to overwrite.",
            err=True,
        )
        raise typer.Exit(1)
    try:
        write_config(default_config())
    except OSError as e:
        typer.echo(f"Error: cannot write {config_path}: {e}", err=True)
        raise typer.Exit(EXIT_IO)
    typer.echo(f"Wrote {config_path}")
