"""Tests for HyGT angle training."""

import math
from collections.abc import Callable

import numpy as np
import pytest

from hygt.errors import ArgumentError
from hygt.optimizer import (
    OptimizerConfig,
    greedy_init,
    jacobi_angle,
    optimize,
    propagate_covariance,
    train_classes,
    variance_permutation,
)
from hygt.statistics import (
    CorrelationMatrix,
    ar1_covariance_2d,
    coding_gain_db,
    jacobi_eigen,
    transformed_variances,
)
from hygt.transform import HyGTModel, conjugate_pass, hypercube_indices, model_passes, to_matrix

FAST = OptimizerConfig(restarts=2, max_sweeps=10, polish_sweeps=2, seed=1)
ACCEPTANCE = OptimizerConfig(restarts=4, seed=1)


def _gain(model: HyGTModel, phi: np.ndarray) -> float:
    return coding_gain_db(np.diag(propagate_covariance(model_passes(model), phi).values))


def test_propagate_empty_prefix(random_psd: Callable[[int], np.ndarray]) -> None:
    """Test that no passes leave the covariance unchanged."""
    phi = random_psd(8)
    np.testing.assert_allclose(propagate_covariance([], phi).values, phi, atol=1e-15)


def test_propagate_matches_matrix_oracle(random_psd: Callable[[int], np.ndarray]) -> None:
    """Test the propagated diagonal and trace against the dense transform."""
    phi = random_psd(16)
    model = HyGTModel.random(4, 2, 5)
    result = propagate_covariance(model_passes(model), phi).values
    expected = transformed_variances(to_matrix(model), phi).values
    np.testing.assert_allclose(np.diag(result), expected, atol=1e-10)
    assert abs(np.trace(result) - np.trace(phi)) <= 1e-9 * np.trace(phi)


def test_propagate_rejects_dimension_mismatch() -> None:
    """Test the dimension check."""
    with pytest.raises(ArgumentError):
        propagate_covariance(model_passes(HyGTModel.identity(2, 1)), np.eye(8))


def test_jacobi_angle_examples() -> None:
    """Test diagonal inputs and the equal-variance case."""
    assert jacobi_angle(3.0, 1.0, 0.0) == 0.0
    assert jacobi_angle(2.0, 2.0, 0.0) == 0.0
    assert jacobi_angle(1.0, 3.0, 0.0) == pytest.approx(math.pi / 2)
    assert jacobi_angle(2.0, 2.0, 1.0) == pytest.approx(math.pi / 4)


def test_jacobi_angle_diagonalizes(rng: np.random.Generator) -> None:
    """Test that the rotated cross term vanishes for random 2x2 blocks."""
    indexing = hypercube_indices(1, 0)
    for _ in range(50):
        a = rng.standard_normal((2, 2))
        block = a + a.T
        theta = jacobi_angle(block[0, 0], block[1, 1], block[0, 1])
        rotated = conjugate_pass(block, indexing, [theta])
        scale = abs(block[0, 0]) + abs(block[1, 1]) + 1.0
        assert abs(rotated[0, 1]) < 1e-12 * scale
        assert rotated[0, 0] >= rotated[1, 1] - 1e-12 * scale


def test_greedy_init_identity() -> None:
    """Test that a white covariance keeps all angles at zero."""
    model = greedy_init(np.eye(16), 4, 2)
    assert np.all(model.angles == 0.0)


def test_greedy_init_two_point_is_klt(random_psd: Callable[[int], np.ndarray]) -> None:
    """Test that a single rotation reaches the KLT gain for N=2."""
    for _ in range(50):
        phi = random_psd(2)
        model = greedy_init(phi, 1, 1)
        klt_gain = coding_gain_db(jacobi_eigen(phi).eigenvalues)
        assert abs(_gain(model, phi) - klt_gain) < 1e-9


def test_optimize_diagonal_covariance() -> None:
    """Test that the identity is optimal for a diagonal covariance."""
    variances = np.array([4.0, 1.0, 3.0, 2.0])
    phi = np.diag(variances)
    model, report = optimize(phi, 2, 1, FAST)
    assert report.best_gain_db == pytest.approx(coding_gain_db(variances), abs=1e-9)
    assert _gain(HyGTModel.identity(2, 1), phi) == pytest.approx(report.best_gain_db, abs=1e-9)
    assert not model.has_permutation


def test_optimize_two_point(random_psd: Callable[[int], np.ndarray]) -> None:
    """Test that N=2 reaches the KLT gain on random covariances."""
    for _ in range(50):
        _, report = optimize(random_psd(2), 1, 1, FAST)
        assert abs(report.best_gain_db - report.klt_gain_db) < 1e-9


def test_optimize_ar1_approaches_klt(ar1_16: CorrelationMatrix) -> None:
    """Test that two rounds on 4x4 AR(1) blocks reach 95% of the KLT gain."""
    model, report = optimize(ar1_16, 4, 2, ACCEPTANCE)
    assert report.gain_ratio >= 0.95
    assert report.best_gain_db == pytest.approx(15.1649, abs=1e-4)
    assert _gain(model, ar1_16.values) == pytest.approx(report.best_gain_db, abs=1e-9)
    greedy_gain = _gain(greedy_init(ar1_16, 4, 2), ar1_16.values)
    assert greedy_gain <= report.best_gain_db + 1e-12
    assert report.best_gain_db <= report.klt_gain_db + 1e-9


@pytest.mark.slow
def test_optimize_ar1_64_point() -> None:
    """Test that three rounds on 8x8 AR(1) blocks reach 95% of the KLT gain."""
    phi = ar1_covariance_2d(8, 0.95)
    _, report = optimize(phi, 6, 3, ACCEPTANCE)
    assert report.gain_ratio >= 0.95
    assert report.best_gain_db == pytest.approx(17.6754, abs=1e-4)
    assert report.klt_gain_db == pytest.approx(17.6924, abs=1e-4)
    assert report.best_gain_db <= report.klt_gain_db + 1e-9


def test_trajectories_are_monotone(random_psd: Callable[[int], np.ndarray]) -> None:
    """Test that every restart's gain never decreases between sweeps."""
    phi = random_psd(8)
    _, report = optimize(phi, 3, 2, OptimizerConfig(restarts=3, max_sweeps=10, seed=2))
    assert len(report.trajectories) == 3
    assert report.init_modes == ["greedy_jacobi", "random", "random"]
    for trajectory in report.trajectories:
        assert np.all(np.diff(trajectory) >= -1e-12)
    assert report.final_gain_db[report.best_restart] == max(report.final_gain_db)


def test_optimized_gain_below_klt(random_psd: Callable[[int], np.ndarray]) -> None:
    """Test the KLT upper bound on random covariances."""
    for n, log2_n in ((4, 2), (8, 3), (16, 4)):
        phi = random_psd(n)
        _, report = optimize(phi, log2_n, 1, FAST)
        assert report.best_gain_db <= report.klt_gain_db + 1e-9


def test_extra_round_never_hurts(ar1_16: CorrelationMatrix) -> None:
    """Test that R+1 rounds started from the R-round optimum do at least as well."""
    one_round, report_one = optimize(ar1_16, 4, 1, FAST)
    _, report_two = optimize(ar1_16, 4, 2, FAST, warm_start=one_round.extend_rounds(1))
    assert report_two.init_modes[-1] == "warm_start"
    assert report_two.best_gain_db >= report_one.best_gain_db - 1e-9


def _gains_by_rounds(phi: CorrelationMatrix, log2_n: int) -> list[float]:
    return [optimize(phi, log2_n, rounds, ACCEPTANCE)[1].best_gain_db for rounds in (1, 2, 3)]


def test_more_rounds_never_hurt(ar1_16: CorrelationMatrix) -> None:
    """Test that independent runs with more rounds reach at least the same gain."""
    gains = _gains_by_rounds(ar1_16, 4)
    assert gains == pytest.approx([14.3508, 15.1649, 15.1649], abs=1e-4)
    assert all(b >= a - 1e-9 for a, b in zip(gains, gains[1:]))


@pytest.mark.slow
def test_more_rounds_never_hurt_64_point() -> None:
    """Test round monotonicity on 8x8 AR(1) blocks."""
    gains = _gains_by_rounds(ar1_covariance_2d(8, 0.95), 6)
    assert gains == pytest.approx([15.8944, 17.5302, 17.6754], abs=1e-4)
    assert all(b >= a - 1e-9 for a, b in zip(gains, gains[1:]))


def test_optimize_is_deterministic(ar1_16: CorrelationMatrix) -> None:
    """Test bit-identical models for identical inputs."""
    first, report_a = optimize(ar1_16, 4, 1, FAST)
    second, report_b = optimize(ar1_16, 4, 1, FAST)
    np.testing.assert_array_equal(first.angles, second.angles)
    assert report_a == report_b


def test_parallel_restarts_match_serial(ar1_16: CorrelationMatrix) -> None:
    """Test that concurrent restarts select the same model."""
    serial, _ = optimize(ar1_16, 4, 1, FAST)
    parallel, _ = optimize(ar1_16, 4, 1, FAST.model_copy(update={"workers": 2}))
    np.testing.assert_array_equal(serial.angles, parallel.angles)


def test_optimize_rejects_bad_input() -> None:
    """Test the PSD, dimension and warm-start checks."""
    with pytest.raises(ArgumentError):
        optimize([[1.0, 2.0], [2.0, 1.0]], 1, 1, FAST)
    with pytest.raises(ArgumentError):
        optimize(np.eye(4), 3, 1, FAST)
    with pytest.raises(ArgumentError):
        optimize(np.eye(4), 2, 2, FAST, warm_start=HyGTModel.identity(2, 1))


def test_optimizer_config_validation() -> None:
    """Test config bounds."""
    with pytest.raises(ValueError):
        OptimizerConfig(restarts=0)
    with pytest.raises(ValueError):
        OptimizerConfig(gain_tolerance=0.0)
    with pytest.raises(ValueError):
        OptimizerConfig(unknown=1)


def test_variance_permutation_examples() -> None:
    """Test the stable descending sort and the sorted case."""
    model = variance_permutation(HyGTModel.identity(2, 1), np.diag([1.0, 5.0, 3.0, 3.0]))
    assert model.permutation.tolist() == [1, 2, 3, 0]
    sorted_model = variance_permutation(HyGTModel.identity(2, 1), np.diag([4.0, 3.0, 2.0, 1.0]))
    assert sorted_model.permutation.tolist() == [0, 1, 2, 3]
    with pytest.raises(ArgumentError):
        variance_permutation(model, np.eye(4))


def test_sorted_variances_are_non_increasing(ar1_16: CorrelationMatrix) -> None:
    """Test the sorting property and gain neutrality of the permutation."""
    model, report = optimize(ar1_16, 4, 1, FAST)
    sorted_model = variance_permutation(model, ar1_16)
    variances = transformed_variances(to_matrix(sorted_model), ar1_16).values
    assert np.all(np.diff(variances) <= 1e-12)
    assert coding_gain_db(variances) == pytest.approx(report.best_gain_db, abs=1e-9)


def test_train_classes_with_fallback(ar1_16: CorrelationMatrix) -> None:
    """Test per-class training order and the identity fallback for small classes."""
    sparse = CorrelationMatrix(np.eye(16), sample_count=3)
    trained = CorrelationMatrix(ar1_16.values, sample_count=500)
    results = train_classes([trained, sparse], 4, 1, FAST, workers=2)
    assert [result.class_id for result in results] == [0, 1]
    assert not results[0].fallback
    assert results[0].model.has_permutation
    assert results[1].fallback
    assert results[1].report is None
    assert np.all(results[1].model.angles == 0.0)
