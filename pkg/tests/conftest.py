"""Pytest configuration and shared fixtures."""

from collections.abc import Callable
from pathlib import Path

import numpy as np
import pytest

from hygt.dataset import ResidualDataset
from hygt.formats import write_dataset
from hygt.statistics import CorrelationMatrix, ar1_covariance_2d, synthesize_ar1_dataset


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded random generator."""
    return np.random.default_rng(20240607)


@pytest.fixture
def random_psd(rng: np.random.Generator) -> Callable[[int], np.ndarray]:
    """Factory for random symmetric positive semi-definite matrices."""

    def make(n: int) -> np.ndarray:
        a = rng.standard_normal((n, n))
        return a @ a.T / n

    return make


@pytest.fixture
def ar1_16() -> CorrelationMatrix:
    """2-D AR(1) covariance of 4x4 blocks with rho = 0.95."""
    return ar1_covariance_2d(4, 0.95)


@pytest.fixture
def small_dataset() -> ResidualDataset:
    """Two-class synthetic dataset of 4x4 blocks."""
    return synthesize_ar1_dataset(block_size=4, rho=0.9, count=400, classes=2, seed=3)


@pytest.fixture
def dataset_file(tmp_path: Path, small_dataset: ResidualDataset) -> Path:
    """The two-class dataset written as a float32 residual file."""
    return write_dataset(small_dataset, tmp_path / "train.rblk")
