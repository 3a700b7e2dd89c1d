"""Tests for datasets, the linear readout and the experiment loop."""

import warnings
from unittest.mock import patch

import numpy as np
import pytest
from numpy.testing import assert_allclose

from qelm.architectures import ArchitectureSpec, FeatureVector, prepare
from qelm.dynamics import get_profile
from qelm.learn import (
    Dataset,
    DegenerateTargetError,
    ExperimentResult,
    ExperimentRunError,
    ReadoutWeights,
    UnderdeterminedReadoutWarning,
    correlation_diagnostics,
    fit_readout,
    generate_dataset,
    is_perfect,
    nmse,
    predict,
    run_experiment,
    run_seed,
    split,
)
from qelm.qcore import (
    ContractError,
    DensityMatrix,
    DimensionLimitError,
    NumericError,
    RandomSource,
    random_density_matrix,
    set_max_dimension,
)
from qelm.targets import parse_target

BLOCH = [parse_target(f"bloch:{axis}") for axis in "xyz"]


@pytest.fixture(autouse=True)
def reset_dimension_cap():
    set_max_dimension(None)
    yield
    set_max_dimension(None)


@pytest.fixture(autouse=True)
def quiet_underdetermined():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnderdeterminedReadoutWarning)
        yield


def _spec(kind: str, n: int, input_qubits: int, reservoir_qubits: int, **kwargs) -> ArchitectureSpec:
    return ArchitectureSpec(
        kind=kind, n=n, input_qubits=input_qubits, reservoir_qubits=reservoir_qubits, **kwargs
    )


def _synthetic(n_samples: int, n_features: int, n_targets: int = 1, seed: int = 0) -> Dataset:
    gen = np.random.default_rng(seed)
    return Dataset(
        inputs=tuple(DensityMatrix.maximally_mixed(2) for _ in range(n_samples)),
        features=gen.random((n_samples, n_features)),
        targets=gen.standard_normal((n_samples, n_targets)),
        target_specs=tuple(BLOCH[:n_targets]),
    )


def _scores(spec: ArchitectureSpec, texts: list[str], n_samples: int = 100, seed: int = 3) -> np.ndarray:
    targets = [parse_target(t) for t in texts]
    return run_experiment(spec, targets, n_samples, 1, seed).mean


class TestNmse:
    """Tests for the normalized mean squared error."""

    def test_exact_prediction_is_zero(self) -> None:
        y = [0.1, 0.4, -0.3, 0.9]
        assert nmse(y, y) == 0.0

    def test_predicting_the_mean_is_one(self) -> None:
        y = np.array([1.0, 2.0, 3.0, 6.0])
        assert nmse(y, np.full(4, y.mean())) == pytest.approx(1.0)

    def test_two_point_example(self) -> None:
        assert nmse([0.0, 1.0], [0.0, 0.0]) == pytest.approx(2.0)

    def test_scale_covariance(self) -> None:
        gen = np.random.default_rng(2)
        y = gen.standard_normal(40)
        y_hat = y + 0.1 * gen.standard_normal(40)
        c = 7.3
        assert_allclose((c * y - c * y_hat) ** 2, c**2 * (y - y_hat) ** 2, rtol=1e-12)
        assert nmse(c * y, c * y_hat) == pytest.approx(nmse(y, y_hat), rel=1e-12)

    def test_constant_targets_are_degenerate(self) -> None:
        with pytest.raises(DegenerateTargetError):
            nmse([0.5, 0.5, 0.5], [0.4, 0.5, 0.6])

    def test_length_mismatch(self) -> None:
        with pytest.raises(ContractError, match="mismatch"):
            nmse([1.0, 2.0], [1.0, 2.0, 3.0])

    def test_needs_two_values(self) -> None:
        with pytest.raises(ContractError):
            nmse([1.0], [1.0])

    def test_perfect_threshold(self) -> None:
        assert is_perfect(1e-8)
        assert not is_perfect(2e-8)


class TestDataset:
    """Tests for Dataset, generate_dataset and split."""

    def test_dataset_arrays_are_read_only(self) -> None:
        ds = _synthetic(5, 3)
        with pytest.raises(ValueError):
            ds.features[0, 0] = 1.0

    def test_dataset_rejects_count_mismatch(self) -> None:
        with pytest.raises(ContractError):
            Dataset(
                inputs=(DensityMatrix.maximally_mixed(2),),
                features=np.ones((2, 4)),
                targets=np.ones((2, 1)),
                target_specs=(BLOCH[0],),
            )

    def test_generate_dataset_shapes(self) -> None:
        arch = prepare(_spec("SM", 2, 1, 1))
        ds = generate_dataset(arch, BLOCH, 12, RandomSource(4))
        assert len(ds) == 12
        assert ds.features.shape == (12, 8)
        assert ds.targets.shape == (12, 3)

    def test_generate_dataset_targets_are_exact(self) -> None:
        arch = prepare(_spec("S3L", 1, 1, 1))
        ds = generate_dataset(arch, [parse_target("purity")], 6, RandomSource(8))
        for rho, _, y in ds.samples:
            assert y[0] == pytest.approx(np.trace(rho.matrix @ rho.matrix).real)

    def test_generate_dataset_is_deterministic(self) -> None:
        arch = prepare(_spec("S3L", 1, 1, 1))
        a = generate_dataset(arch, BLOCH, 10, RandomSource(2).derive(1))
        b = generate_dataset(arch, BLOCH, 10, RandomSource(2).derive(1))
        assert np.array_equal(a.features, b.features)

    def test_generate_dataset_rejects_target_mismatch(self) -> None:
        arch = prepare(_spec("S3L", 1, 1, 1))
        with pytest.raises(ContractError, match="input dim"):
            generate_dataset(arch, [parse_target("linear:XX")], 10, RandomSource(0))

    def test_generate_dataset_rejects_zero_samples(self) -> None:
        arch = prepare(_spec("S3L", 1, 1, 1))
        with pytest.raises(ContractError):
            generate_dataset(arch, BLOCH, 0, RandomSource(0))

    def test_split_keeps_order(self) -> None:
        ds = _synthetic(200, 4)
        train, test = split(ds, 0.8)
        assert (len(train), len(test)) == (160, 40)
        assert np.array_equal(train.features, ds.features[:160])
        assert np.array_equal(test.features, ds.features[160:])

    def test_split_shuffled_is_a_permutation(self) -> None:
        ds = _synthetic(20, 2)
        train, test = split(ds, 0.5, shuffle=True, rng=RandomSource(1))
        merged = np.vstack([train.features, test.features])
        assert sorted(map(tuple, merged)) == sorted(map(tuple, ds.features))

    @pytest.mark.parametrize("fraction", [0.0, 1.0, 1.5])
    def test_split_rejects_bad_fraction(self, fraction: float) -> None:
        with pytest.raises(ContractError):
            split(_synthetic(10, 2), fraction)

    def test_split_rejects_empty_side(self) -> None:
        with pytest.raises(ContractError, match="empty"):
            split(_synthetic(2, 2), 0.4)


class TestReadout:
    """Tests for fit_readout and predict."""

    def test_recovers_exact_linear_map(self) -> None:
        gen = np.random.default_rng(11)
        f = gen.random((50, 4))
        w = gen.standard_normal((2, 4))
        ds = Dataset(
            inputs=tuple(DensityMatrix.maximally_mixed(2) for _ in range(50)),
            features=f,
            targets=f @ w.T,
            target_specs=tuple(BLOCH[:2]),
        )
        assert_allclose(fit_readout(ds).w, w, atol=1e-10)

    def test_warns_when_underdetermined(self) -> None:
        with warnings.catch_warnings():
            warnings.simplefilter("error", UnderdeterminedReadoutWarning)
            with pytest.raises(UnderdeterminedReadoutWarning):
                fit_readout(_synthetic(3, 4))

    def test_zero_features_rejected(self) -> None:
        ds = Dataset(
            inputs=tuple(DensityMatrix.maximally_mixed(2) for _ in range(5)),
            features=np.zeros((5, 2)),
            targets=np.ones((5, 1)),
            target_specs=(BLOCH[0],),
        )
        with pytest.raises(NumericError):
            fit_readout(ds)

    @pytest.mark.parametrize("kind,n,reservoir", [("S3L", 1, 1), ("SM", 2, 1), ("D", 2, 1)])
    def test_training_error_beats_constant_predictor(self, kind: str, n: int, reservoir: int) -> None:
        """A constant predictor scores exactly 1; least squares can only do better."""
        arch = prepare(_spec(kind, n, 1, reservoir))
        ds = generate_dataset(arch, [parse_target("purity")], 80, RandomSource(14))
        train, _ = split(ds, 0.8)
        fitted = predict(fit_readout(train), train.features)
        assert nmse(train.targets[:, 0], fitted[:, 0]) <= 1.0 + 1e-9

    def test_scaled_targets_leave_test_error_unchanged(self) -> None:
        arch = prepare(_spec("SM", 2, 1, 1))
        ds = generate_dataset(arch, [parse_target("purity")], 100, RandomSource(15))
        scaled = Dataset(ds.inputs, ds.features, 7.3 * ds.targets, ds.target_specs)
        scores = []
        for data in (ds, scaled):
            train, test = split(data, 0.8)
            predictions = predict(fit_readout(train), test.features)
            scores.append(nmse(test.targets[:, 0], predictions[:, 0]))
        assert scores[1] == pytest.approx(scores[0], rel=1e-9)

    def test_cutoff_controls_weak_directions(self) -> None:
        """A signal carried by a singular value near 1e-11 of the largest."""
        gen = np.random.default_rng(21)
        f = gen.random((50, 3))
        signal = gen.random(50)
        f[:, 2] = 1e-11 * signal
        ds = Dataset(
            inputs=tuple(DensityMatrix.maximally_mixed(2) for _ in range(50)),
            features=f,
            targets=signal[:, None],
            target_specs=(BLOCH[0],),
        )
        truncated = predict(fit_readout(ds), f)[:, 0]
        kept = predict(fit_readout(ds, cutoff=None), f)[:, 0]
        assert nmse(signal, truncated) > 0.1
        assert nmse(signal, kept) <= 1e-6

    def test_ridge_shrinks_weights(self) -> None:
        ds = _synthetic(30, 6)
        plain = fit_readout(ds)
        ridge = fit_readout(ds, regularization=10.0)
        assert np.linalg.norm(ridge.w) < np.linalg.norm(plain.w)

    def test_tiny_ridge_matches_least_squares(self) -> None:
        ds = _synthetic(30, 3)
        assert_allclose(fit_readout(ds, 1e-12).w, fit_readout(ds).w, atol=1e-6)

    def test_readout_rejects_nan(self) -> None:
        with pytest.raises(NumericError):
            ReadoutWeights(np.array([[np.nan, 1.0]]))

    def test_predict_vector_and_matrix(self) -> None:
        w = ReadoutWeights(np.array([[1.0, 2.0], [0.0, -1.0]]))
        assert_allclose(predict(w, FeatureVector(np.array([0.25, 0.75]))), [1.75, -0.75])
        assert predict(w, np.ones((3, 2))).shape == (3, 2)

    def test_predict_width_mismatch(self) -> None:
        with pytest.raises(ContractError):
            predict(ReadoutWeights(np.ones((1, 3))), np.ones(2))


class TestExperimentResult:
    """Tests for the result summary."""

    def test_population_statistics(self) -> None:
        result = ExperimentResult(tuple(BLOCH[:2]), np.array([[1.0, 2.0], [3.0, 4.0]]))
        assert result.n_runs == 2
        assert result.summary() == [(2.0, 1.0), (3.0, 1.0)]

    def test_run_seed_extends_master(self) -> None:
        assert run_seed(5, 2).spawn_key == (0, 2)


class TestRunExperiment:
    """Tests for run_experiment."""

    def test_thread_count_does_not_change_results(self) -> None:
        spec = _spec("SM", 2, 1, 1)
        targets = [parse_target("purity"), BLOCH[0]]
        serial = run_experiment(spec, targets, 40, 4, 99)
        threaded = run_experiment(spec, targets, 40, 4, 99, threads=3)
        assert np.array_equal(serial.nmse, threaded.nmse)

    def test_runs_differ_from_each_other(self) -> None:
        result = run_experiment(_spec("S3L", 1, 1, 1), [parse_target("purity")], 40, 2, 7)
        assert result.nmse[0, 0] != result.nmse[1, 0]

    def test_progress_callback(self) -> None:
        seen = []
        run_experiment(_spec("S3L", 1, 1, 1), BLOCH, 20, 3, 1, on_run_complete=seen.append)
        assert sorted(seen) == [0, 1, 2]

    def test_failure_carries_run_index(self) -> None:
        with patch("qelm.learn.fit_readout", side_effect=NumericError("singular")):
            with pytest.raises(ExperimentRunError, match="Run 0 failed") as excinfo:
                run_experiment(_spec("S3L", 1, 1, 1), BLOCH, 20, 2, 1)
        assert excinfo.value.run_index == 0

    def test_target_mismatch_fails_before_running(self) -> None:
        with pytest.raises(ContractError):
            run_experiment(_spec("S3L", 1, 1, 1), [parse_target("concurrence")], 20, 1, 1)

    def test_dimension_limit_propagates(self) -> None:
        set_max_dimension(4)
        with pytest.raises(DimensionLimitError):
            run_experiment(_spec("S3L", 1, 1, 2), BLOCH, 20, 1, 1)

    def test_requires_targets_and_runs(self) -> None:
        with pytest.raises(ContractError):
            run_experiment(_spec("S3L", 1, 1, 1), [], 20, 1, 1)
        with pytest.raises(ContractError):
            run_experiment(_spec("S3L", 1, 1, 1), BLOCH, 20, 0, 1)


class TestReconstruction:
    """End-to-end reconstruction behaviour of small reservoirs."""

    def test_ergodic_s3l_reconstructs_bloch_vector(self) -> None:
        scores = _scores(_spec("S3L", 1, 1, 1), ["bloch:x", "bloch:y", "bloch:z"])
        assert all(is_perfect(s) for s in scores)

    def test_decoupled_dynamics_only_see_populations(self) -> None:
        spec = _spec("S3L", 1, 1, 1, dynamics=get_profile("decoupled"))
        x, z = _scores(spec, ["bloch:x", "bloch:z"])
        assert is_perfect(z)
        assert x > 0.5

    def test_no_field_in_x_basis_sees_x_only(self) -> None:
        spec = _spec("S3L", 1, 1, 1, dynamics=get_profile("no-field"), basis="x")
        x, y = _scores(spec, ["bloch:x", "bloch:y"])
        assert is_perfect(x)
        assert y > 0.5

    @pytest.mark.parametrize("design", [("S3L", 1, 1, 1), ("SM", 3, 1, 1)])
    def test_linear_designs_miss_purity(self, design: tuple) -> None:
        (score,) = _scores(_spec(*design), ["purity"])
        assert score > 1e-2

    @pytest.mark.parametrize("design", [("MI", 2, 1, 3), ("D", 2, 1, 1)])
    def test_two_copy_designs_reconstruct_purity(self, design: tuple) -> None:
        (score,) = _scores(_spec(*design), ["purity"])
        assert is_perfect(score)

    def test_two_copies_reach_degree_two_only(self) -> None:
        """For a qubit Tr[rho^3] is quadratic in the Bloch vector, Tr[X rho^3] is not."""
        cube, x_cube = _scores(_spec("D", 2, 1, 1), ["poly:I:3", "poly:X:3"])
        assert is_perfect(cube)
        assert x_cube > 1e-6

    def test_renyi_entropy_is_never_perfect(self) -> None:
        """-ln Tr[rho^2] is not a polynomial, so no copy count reaches it exactly."""
        (score,) = _scores(_spec("D", 2, 1, 1), ["renyi:2"], n_samples=200)
        assert not is_perfect(score)
        assert score > 1e-6


class TestCorrelationDiagnostics:
    """Tests for correlation_diagnostics."""

    def _inputs(self) -> list[DensityMatrix]:
        gen = RandomSource(21).generator()
        return [random_density_matrix(2, gen) for _ in range(10)]

    def test_decoupled_reservoir_stays_uncorrelated(self) -> None:
        arch = prepare(_spec("S3L", 1, 1, 1, dynamics=get_profile("decoupled")))
        diag = correlation_diagnostics(arch, self._inputs())
        assert diag.mean_abs_coupling == 0.0
        assert diag.mutual_information_mean == pytest.approx(0.0, abs=1e-8)
        assert diag.concurrence_mean == pytest.approx(0.0, abs=1e-6)

    def test_coupled_reservoir_builds_correlations(self) -> None:
        arch = prepare(_spec("S3L", 1, 1, 1))
        diag = correlation_diagnostics(arch, self._inputs())
        assert diag.mean_abs_coupling > 0.0
        assert diag.mutual_information_mean > 1e-6

    def test_concurrence_only_for_two_qubit_units(self) -> None:
        arch = prepare(_spec("S3L", 1, 1, 2))
        assert correlation_diagnostics(arch, self._inputs()).concurrence_mean is None

    def test_experiment_averages_diagnostics(self) -> None:
        result = run_experiment(
            _spec("S3L", 1, 1, 1), BLOCH, 20, 2, 5, with_diagnostics=True
        )
        assert result.diagnostics is not None
        assert result.diagnostics.mutual_information_mean > 0.0
