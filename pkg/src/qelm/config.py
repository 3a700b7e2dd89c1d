"""Configuration handling for qelm."""

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from qelm.dynamics import get_available_profiles
from qelm.qcore import ENSEMBLES, MAX_DIM_ENV

CONFIG_FILE = ".qelm.toml"
THREADS_ENV = "QELM_THREADS"

FORMATS = ("csv", "json")

# Config schema with type information
# Format: {section: {key: (default_value, expected_type)}}
CONFIG_SCHEMA: dict[str, dict[str, tuple]] = {
    "limits": {
        "max_dim": (2**16, int),
        "threads": (1, int),
    },
    "experiment": {
        "seed": (1234, int),
        "desk_scale": (0.1, float),
        "train_fraction": (0.8, float),
        "ensemble": ("ginibre", str),
        "scale_samples": (False, bool),
    },
    "dynamics": {
        "profile": ("ergodic", str),
    },
    "output": {
        "format": ("csv", str),
        "verbose": (False, bool),
    },
}


def default_config() -> dict:
    """Schema defaults as a nested dict, ready for write_config."""
    return {
        section: {key: default for key, (default, _type) in keys.items()}
        for section, keys in CONFIG_SCHEMA.items()
    }


@dataclass
class ConfigValidationResult:
    """Result of config validation."""

    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def is_valid(self) -> bool:
        """Returns True if there are no errors."""
        return len(self.errors) == 0


def _find_similar_key(key: str, valid_keys: list[str]) -> Optional[str]:
    """Find a similar key from valid_keys (simple typo detection).

    Keys sharing a substring or a four-character prefix count as typos.
    """
    for valid_key in sorted(valid_keys):
        if (
            key in valid_key
            or valid_key in key
            or (len(key) > 3 and len(valid_key) > 3 and key[:4] == valid_key[:4])
        ):
            return valid_key
    return None


def _type_matches(value: object, expected_type: type) -> bool:
    # TOML bools are ints in Python; floats accept integer literals.
    if expected_type is bool:
        return isinstance(value, bool)
    if isinstance(value, bool):
        return False
    if expected_type is float:
        return isinstance(value, (int, float))
    return isinstance(value, expected_type)


def _check_value(section: str, key: str, value: object) -> Optional[str]:
    """Range and enum checks for a value that already has the right type."""
    if section == "limits" and value < (2 if key == "max_dim" else 1):
        return f"Config [limits].{key} must be positive, got {value!r}"
    if section == "experiment":
        if key == "desk_scale" and not 0 < value <= 1:
            return f"Config [experiment].desk_scale must be in (0, 1], got {value!r}"
        if key == "train_fraction" and not 0 < value < 1:
            return f"Config [experiment].train_fraction must be in (0, 1), got {value!r}"
        if key == "ensemble" and value not in ENSEMBLES:
            return (
                f"Invalid ensemble '{value}' in config. "
                f"Available ensembles: {', '.join(ENSEMBLES)}"
            )
    if section == "dynamics" and key == "profile":
        available = get_available_profiles()
        if value not in available:
            return (
                f"Invalid profile '{value}' in config. "
                f"Available profiles: {', '.join(available)}"
            )
    if section == "output" and key == "format" and value not in FORMATS:
        return f"Invalid format '{value}' in config. Available formats: {', '.join(FORMATS)}"
    return None


def validate_config(config: dict) -> ConfigValidationResult:
    """Validate configuration against the schema.

    Checks for:
    - Unknown sections (warning)
    - Unknown keys in known sections (warning with suggestions)
    - Wrong types for known keys (error)
    - Out-of-range values and unknown ensemble/profile/format names (error)

    Args:
        config: Configuration dict to validate.

    Returns:
        ConfigValidationResult with errors and warnings.
    """
    result = ConfigValidationResult()
    known_sections = set(CONFIG_SCHEMA.keys())

    for section, options in config.items():
        if section not in known_sections:
            result.warnings.append(f"Unknown config section: [{section}]")
            continue

        if not isinstance(options, dict):
            result.errors.append(
                f"Section [{section}] should be a table, got {type(options).__name__}"
            )
            continue

        known_keys = list(CONFIG_SCHEMA[section].keys())

        for key, value in options.items():
            if key not in known_keys:
                similar = _find_similar_key(key, known_keys)
                if similar:
                    result.warnings.append(
                        f"Unknown key '{key}' in [{section}]. Did you mean '{similar}'?"
                    )
                else:
                    result.warnings.append(f"Unknown key '{key}' in [{section}]")
                continue

            _default, expected_type = CONFIG_SCHEMA[section][key]
            if not _type_matches(value, expected_type):
                result.errors.append(
                    f"Config [{section}].{key} should be {expected_type.__name__}, "
                    f"got {type(value).__name__} ({value!r})"
                )
                continue

            problem = _check_value(section, key, value)
            if problem:
                result.errors.append(problem)

    return result


@dataclass
class ResolvedRunConfig:
    """Resolved configuration for the run command.

    Values come from CLI flags, the environment, the config file and the
    schema defaults, in that order of precedence.
    """

    max_dim: int
    threads: int
    seed: int
    desk_scale: float
    scale_samples: bool
    train_fraction: float
    ensemble: str
    profile: str
    format: str
    verbose: bool


def check_mutually_exclusive(
    flag1_value: object, flag1_name: str, flag2_value: object, flag2_name: str
) -> None:
    """Check that two options are not both set.

    Raises:
        ValueError: If both values are truthy.
    """
    if flag1_value and flag2_value:
        raise ValueError(
            f"{flag1_name} and {flag2_name} are mutually exclusive. Cannot use both."
        )


def _env_int(name: str) -> Optional[int]:
    raw = os.environ.get(name)
    if not raw:
        return None
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{name} must be an integer, got {raw!r}") from None


def resolve_run_config(
    *,
    seed: Optional[int] = None,
    desk_scale: Optional[float] = None,
    scale_samples: bool = False,
    threads: Optional[int] = None,
    max_dim: Optional[int] = None,
    output_format: Optional[str] = None,
    verbose: bool = False,
    config: Optional[dict] = None,
) -> ResolvedRunConfig:
    """Resolve run configuration from CLI flags, environment and config file.

    Args:
        seed: CLI --seed value (None means not specified)
        desk_scale: CLI --desk-scale value
        scale_samples: CLI --scale-samples flag
        threads: CLI --threads value
        max_dim: Explicit dimension cap
        output_format: CLI --format value
        verbose: CLI -v/--verbose flag
        config: Parsed config dict; read from .qelm.toml when omitted.

    Returns:
        ResolvedRunConfig with all values resolved.

    Raises:
        ValueError: If an environment override or a resolved value is invalid.
    """
    if config is None:
        config = read_config()
    defaults = default_config()

    def from_file(section: str, key: str):
        return config.get(section, {}).get(key, defaults[section][key])

    resolved_max_dim = max_dim
    if resolved_max_dim is None:
        resolved_max_dim = _env_int(MAX_DIM_ENV)
    if resolved_max_dim is None:
        resolved_max_dim = from_file("limits", "max_dim")
    if resolved_max_dim < 2:
        raise ValueError(f"max_dim must be at least 2, got {resolved_max_dim}")

    resolved_threads = threads
    if resolved_threads is None:
        resolved_threads = _env_int(THREADS_ENV)
    if resolved_threads is None:
        resolved_threads = from_file("limits", "threads")
    if resolved_threads < 1:
        raise ValueError("--threads must be a positive integer")

    resolved_desk_scale = desk_scale
    if desk_scale is None:
        resolved_desk_scale = float(from_file("experiment", "desk_scale"))
    if not 0 < resolved_desk_scale <= 1:
        raise ValueError(f"--desk-scale must be in (0, 1], got {resolved_desk_scale}")

    resolved_format = output_format or from_file("output", "format")
    if resolved_format not in FORMATS:
        raise ValueError(
            f"Unknown format '{resolved_format}'. Available: {', '.join(FORMATS)}"
        )

    return ResolvedRunConfig(
        max_dim=resolved_max_dim,
        threads=resolved_threads,
        seed=seed if seed is not None else from_file("experiment", "seed"),
        desk_scale=resolved_desk_scale,
        scale_samples=scale_samples or from_file("experiment", "scale_samples"),
        train_fraction=float(from_file("experiment", "train_fraction")),
        ensemble=from_file("experiment", "ensemble"),
        profile=from_file("dynamics", "profile"),
        format=resolved_format,
        verbose=verbose or from_file("output", "verbose"),
    )


def load_toml(text: str) -> dict:
    """Parse TOML text with tomllib (tomli before Python 3.11).

    Raises:
        ValueError: If the text is not valid TOML.
    """
    try:
        import tomllib
    except ImportError:
        import tomli as tomllib

    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ValueError(f"Invalid TOML: {exc}") from exc


def read_config() -> dict:
    """Read configuration from .qelm.toml.

    Returns:
        Configuration dict, or an empty dict if the file is missing or unparsable.
    """
    config_path = Path(CONFIG_FILE)
    if not config_path.exists():
        return {}

    try:
        return load_toml(config_path.read_text())
    except (OSError, ValueError):
        return {}


def write_config(config: dict) -> None:
    """Write configuration to .qelm.toml.

    Args:
        config: Configuration dict to write.
    """
    import tomli_w

    config_path = Path(CONFIG_FILE)
    config_path.write_text(tomli_w.dumps(config))
