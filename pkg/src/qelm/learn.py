"""Datasets, the linear readout and the multi-run experiment loop."""

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.linalg

from qelm.architectures import (
    ArchitectureSpec,
    FeatureVector,
    PreparedArchitecture,
    check_limits,
    features,
    joint_state,
    prepare,
)
from qelm.qcore import (
    ContractError,
    DensityMatrix,
    DimensionLimitError,
    NumericError,
    QelmError,
    RandomLike,
    RandomSource,
    as_generator,
    random_density_matrix,
)
from qelm.targets import TargetSpec, concurrence, evaluate_target, mutual_information

logger = logging.getLogger(__name__)

PINV_RCOND = 1e-10
PERFECT_NMSE = 1e-8
MIN_TARGET_VARIANCE = 1e-14

_ARCH_STREAM = 0
_DATA_STREAM = 1


class UnderdeterminedReadoutWarning(UserWarning):
    """Training set is not larger than the number of measurement outcomes."""

    pass


class DegenerateTargetError(NumericError):
    """Target values have (numerically) zero variance."""

    pass


class ExperimentRunError(QelmError):
    """A single experimental run failed; carries its index."""

    def __init__(self, run_index: int, message: str):
        super().__init__(f"Run {run_index} failed: {message}")
        self.run_index = run_index


def _frozen_float(array: np.ndarray) -> np.ndarray:
    out = np.array(array, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Dataset:
    """Inputs with their feature rows and exact target values."""

    inputs: tuple[DensityMatrix, ...]
    features: np.ndarray
    targets: np.ndarray
    target_specs: tuple[TargetSpec, ...]

    def __post_init__(self) -> None:
        feats = _frozen_float(self.features)
        targs = _frozen_float(self.targets)
        if feats.ndim != 2 or targs.ndim != 2:
            raise ContractError("Features and targets must be 2-D arrays")
        if not (len(self.inputs) == feats.shape[0] == targs.shape[0]):
            raise ContractError("Inputs, features and targets disagree on sample count")
        if targs.shape[1] != len(self.target_specs):
            raise ContractError("Target columns do not match the target specs")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "targets", targs)
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "target_specs", tuple(self.target_specs))

    def __len__(self) -> int:
        return len(self.inputs)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def samples(self) -> list[tuple[DensityMatrix, FeatureVector, np.ndarray]]:
        return [
            (rho, FeatureVector(f), y)
            for rho, f, y in zip(self.inputs, self.features, self.targets)
        ]

    def subset(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=int)
        return Dataset(
            inputs=tuple(self.inputs[i] for i in idx),
            features=self.features[idx],
            targets=self.targets[idx],
            target_specs=self.target_specs,
        )


@dataclass(frozen=True, eq=False)
class ReadoutWeights:
    """Linear map from features to target estimates (N_tg x p)."""

    w: np.ndarray

    def __post_init__(self) -> None:
        w = _frozen_float(np.atleast_2d(self.w))
        if not np.all(np.isfinite(w)):
            raise NumericError("Readout weights contain NaN or Inf")
        object.__setattr__(self, "w", w)


def check_targets(input_dim: int, targets: Sequence[TargetSpec]) -> None:
    """Raise ContractError if a target is tied to another input dimension."""
    for target in targets:
        if target.input_dim is not None and target.input_dim != input_dim:
            raise ContractError(
                f"Target '{target.label}' needs input dim {target.input_dim}, "
                f"architecture has {input_dim}"
            )


def generate_dataset(
    arch: PreparedArchitecture,
    targets: Sequence[TargetSpec],
    n_samples: int,
    rng: RandomLike,
    ensemble: str = "ginibre",
) -> Dataset:
    """Draw ``n_samples`` i.i.d. inputs and record features and targets.

    Raises:
        ContractError: If n_samples < 1 or a target does not fit the input.
    """
    if n_samples < 1:
        raise ContractError(f"n_samples must be at least 1, got {n_samples}")
    dim = arch.spec.input_dim
    check_targets(dim, targets)
    gen = as_generator(rng)
    inputs, rows, values = [], [], []
    for _ in range(n_samples):
        rho = random_density_matrix(dim, gen, ensemble)
        inputs.append(rho)
        rows.append(features(arch, rho).probabilities)
        values.append([evaluate_target(t, rho) for t in targets])
    return Dataset(
        inputs=tuple(inputs),
        features=np.array(rows),
        targets=np.array(values, dtype=np.float64).reshape(n_samples, len(targets)),
        target_specs=tuple(targets),
    )


def split(
    ds: Dataset,
    train_fraction: float,
    shuffle: bool = False,
    rng: Optional[RandomLike] = None,
) -> tuple[Dataset, Dataset]:
    """First floor(fraction * N) samples train, the rest test.

    With ``shuffle`` the order is permuted first using ``rng``.
    """
    if not 0 < train_fraction < 1:
        raise ContractError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n = len(ds)
    n_train = math.floor(round(train_fraction * n, 9))
    if n_train < 1 or n_train >= n:
        raise ContractError(
            f"Split of {n} samples at {train_fraction} leaves an empty side"
        )
    order = np.arange(n)
    if shuffle:
        order = as_generator(rng if rng is not None else RandomSource(0)).permutation(n)
    return ds.subset(order[:n_train]), ds.subset(order[n_train:])


def fit_readout(
    train: Dataset,
    regularization: Optional[float] = None,
    cutoff: Optional[float] = PINV_RCOND,
) -> ReadoutWeights:
    """Least-squares readout W minimizing sum_i ||y_i - W f_i||^2.

    Without regularization the minimum-norm solution is taken, with singular
    values below ``cutoff`` times the largest treated as zero. ``cutoff=None``
    uses machine precision, eps * max(N, p). A ridge term lambda ||W||^2 is
    added when ``regularization`` is set.

    Raises:
        NumericError: If the feature matrix is all zeros.
    """
    f = train.features
    y = train.targets
    if len(train) < 1:
        raise ContractError("Cannot fit a readout on an empty dataset")
    if not np.any(f):
        raise NumericError("Feature matrix is identically zero")
    if len(train) <= train.n_features:
        warnings.warn(
            f"{len(train)} training samples for {train.n_features} outcomes; "
            "the readout is underdetermined",
            UnderdeterminedReadoutWarning,
            stacklevel=2,
        )
    if regularization:
        gram = f.T @ f + regularization * np.eye(train.n_features)
        solution = scipy.linalg.solve(gram, f.T @ y, assume_a="pos")
    else:
        if cutoff is None:
            cutoff = np.finfo(np.float64).eps * max(f.shape)
        solution, *_ = scipy.linalg.lstsq(f, y, cond=cutoff)
    return ReadoutWeights(solution.T)


def predict(w: ReadoutWeights, f: Union[FeatureVector, np.ndarray]) -> np.ndarray:
    """W f for one feature vector, or F W^T for a matrix of rows."""
    values = f.probabilities if isinstance(f, FeatureVector) else np.asarray(f)
    if values.shape[-1] != w.w.shape[1]:
        raise ContractError(
            f"Feature length {values.shape[-1]} != readout width {w.w.shape[1]}"
        )
    return values @ w.w.T


def nmse(y_true: Sequence[float], y_pred: Sequence[float]) -> float:
    """Mean squared error over the population variance of ``y_true``.

    Raises:
        ContractError: On length mismatch or fewer than two values.
        DegenerateTargetError: If Var(y_true) <= 1e-14.
    """
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape:
        raise ContractError(f"Length mismatch: {y_true.shape} vs {y_pred.shape}")
    if y_true.size < 2:
        raise ContractError("NMSE needs at least two values")
    variance = float(np.var(y_true))
    if variance <= MIN_TARGET_VARIANCE:
        raise DegenerateTargetError(f"Target variance {variance:.3e} is too small")
    return float(np.mean((y_true - y_pred) ** 2) / variance)


def is_perfect(value: float) -> bool:
    """Reconstruction counts as perfect at or below 1e-8 NMSE."""
    return value <= PERFECT_NMSE


@dataclass(frozen=True)
class CorrelationDiagnostics:
    """Mean input-reservoir correlations after the first unit's channel."""

    mean_abs_coupling: float
    mutual_information_mean: float
    concurrence_mean: Optional[float]


def correlation_diagnostics(
    arch: PreparedArchitecture, inputs: Sequence[DensityMatrix]
) -> CorrelationDiagnostics:
    """Average mutual information (and two-qubit concurrence) over ``inputs``."""
    spec = arch.spec
    states = [joint_state(arch, rho) for rho in inputs]
    mi = [mutual_information(s, spec.input_dim, spec.reservoir_dim) for s in states]
    conc = [concurrence(s) for s in states] if spec.unit_dim == 4 else None
    return CorrelationDiagnostics(
        mean_abs_coupling=arch.unit_params[0].mean_abs_coupling,
        mutual_information_mean=float(np.mean(mi)),
        concurrence_mean=float(np.mean(conc)) if conc is not None else None,
    )


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    """Per-run test NMSE for every target, plus optional diagnostics."""

    target_specs: tuple[TargetSpec, ...]
    nmse: np.ndarray
    diagnostics: Optional[CorrelationDiagnostics] = None

    @property
    def n_runs(self) -> int:
        return self.nmse.shape[0]

    @property
    def mean(self) -> np.ndarray:
        return np.mean(self.nmse, axis=0)

    @property
    def std(self) -> np.ndarray:
        return np.std(self.nmse, axis=0)

    def summary(self) -> list[tuple[float, float]]:
        """(mean NMSE, std NMSE) per target, in target order."""
        return [(float(m), float(s)) for m, s in zip(self.mean, self.std)]


@dataclass(frozen=True)
class _RunOutcome:
    run_index: int
    scores: tuple[float, ...]
    diagnostics: Optional[CorrelationDiagnostics]


def run_seed(master_seed: int, run_index: int) -> RandomSource:
    """Stream owned by one run; independent of scheduling order."""
    return RandomSource(master_seed).derive(run_index)


def _run_once(
    spec: ArchitectureSpec,
    targets: Sequence[TargetSpec],
    n_samples: int,
    run_index: int,
    master_seed: int,
    train_fraction: float,
    regularization: Optional[float],
    cutoff: Optional[float],
    ensemble: str,
    with_diagnostics: bool,
) -> _RunOutcome:
    source = run_seed(master_seed, run_index)
    arch = prepare(spec.with_seed(source.derive(_ARCH_STREAM)))
    data = generate_dataset(arch, targets, n_samples, source.derive(_DATA_STREAM), ensemble)
    train, test = split(data, train_fraction)
    weights = fit_readout(train, regularization, cutoff)
    predictions = predict(weights, test.features)
    scores = tuple(
        nmse(test.targets[:, j], predictions[:, j]) for j in range(len(targets))
    )
    diagnostics = correlation_diagnostics(arch, data.inputs) if with_diagnostics else None
    logger.debug("Run %d: %s", run_index, ", ".join(f"{s:.3e}" for s in scores))
    return _RunOutcome(run_index, scores, diagnostics)


def _average_diagnostics(
    outcomes: Sequence[_RunOutcome],
) -> Optional[CorrelationDiagnostics]:
    diags = [o.diagnostics for o in outcomes if o.diagnostics is not None]
    if not diags:
        return None
    conc = [d.concurrence_mean for d in diags if d.concurrence_mean is not None]
    return CorrelationDiagnostics(
        mean_abs_coupling=float(np.mean([d.mean_abs_coupling for d in diags])),
        mutual_information_mean=float(np.mean([d.mutual_information_mean for d in diags])),
        concurrence_mean=float(np.mean(conc)) if conc else None,
    )


def run_experiment(
    spec: ArchitectureSpec,
    targets: Sequence[TargetSpec],
    n_samples: int,
    n_runs: int,
    master_seed: int,
    *,
    train_fraction: float = 0.8,
    regularization: Optional[float] = None,
    cutoff: Optional[float] = PINV_RCOND,
    ensemble: str = "ginibre",
    threads: int = 1,
    with_diagnostics: bool = False,
    on_run_complete: Optional[Callable[[int], None]] = None,
) -> ExperimentResult:
    """Repeat prepare / generate / split / fit / score over independent runs.

    Each run derives its own seed from (master_seed, run index), so results
    do not depend on ``threads``.

    Raises:
        DimensionLimitError: If the architecture exceeds the dimension cap.
        ExperimentRunError: If any run fails; carries the run index.
    """
    if n_runs < 1:
        raise ContractError(f"n_runs must be at least 1, got {n_runs}")
    if not targets:
        raise ContractError("At least one target is required")
    check_targets(spec.input_dim, targets)
    check_limits(spec)

    def task(run_index: int) -> _RunOutcome:
        try:
            outcome = _run_once(
                spec,
                targets,
                n_samples,
                run_index,
                master_seed,
                train_fraction,
                regularization,
                cutoff,
                ensemble,
                with_diagnostics,
            )
        except DimensionLimitError:
            raise
        except Exception as exc:
            raise ExperimentRunError(run_index, str(exc)) from exc
        if on_run_complete is not None:
            on_run_complete(run_index)
        return outcome

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(task, range(n_runs)))
    else:
        outcomes = [task(i) for i in range(n_runs)]

    outcomes.sort(key=lambda o: o.run_index)
    return ExperimentResult(
        target_specs=tuple(targets),
        nmse=np.array([o.scores for o in outcomes]),
        diagnostics=_average_diagnostics(outcomes),
    )
