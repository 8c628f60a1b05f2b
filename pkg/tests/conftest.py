"""
Pytest configuration and shared fixtures for deep_sfa tests.

This module provides seeded random data, small synthetic scenes written to
temporary directories, fast training settings and assertion helpers shared
by all test modules.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any

import numpy as np
import pytest

from deep_sfa.config import PipelineConfig, SynthConfig, TrainConfig
from deep_sfa.core import PipelineError
from deep_sfa.evaluation import GroundTruth
from deep_sfa.pipeline import RunReport
from deep_sfa.raster_io import MultibandImage
from deep_sfa.synthetic import generate_scene, write_scene

SMALL_SCENE = SynthConfig(rows=24, cols=24, bands=4, change_fraction=0.15, noise_std=0.05, seed=3)


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator; every test sees the same draws."""
    return np.random.default_rng(20240501)


@pytest.fixture
def spd_pair(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """A random symmetric A and symmetric positive-definite B of size 5."""
    return random_spd_pair(rng, 5)


def random_spd_pair(rng: np.random.Generator, d: int) -> tuple[np.ndarray, np.ndarray]:
    m = rng.normal(size=(d, d))
    a = (m + m.T) / 2.0
    g = rng.normal(size=(d, 2 * d))
    b = g @ g.T / (2 * d) + 0.5 * np.eye(d)
    return a, b


@pytest.fixture
def small_scene() -> tuple[MultibandImage, MultibandImage, GroundTruth]:
    """A 24x24x4 synthetic scene held in memory."""
    return generate_scene(SMALL_SCENE)


@pytest.fixture
def scene_dir(tmp_path: Path) -> dict[str, Path]:
    """The small synthetic scene written as t1/t2/gt rasters."""
    return write_scene(SMALL_SCENE, tmp_path / "scene")


@pytest.fixture
def fast_train() -> TrainConfig:
    """A tiny network trained for a few epochs; enough to exercise the code paths."""
    return TrainConfig(hidden_sizes=(8,), learning_rate=1e-3, max_epochs=15, log_every=5)


@pytest.fixture
def make_config(scene_dir: dict[str, Path], tmp_path: Path, fast_train: TrainConfig) -> Any:
    """Factory building a PipelineConfig on the small scene with fast training."""

    def _make(**overrides: Any) -> PipelineConfig:
        data: dict[str, Any] = {
            "t1": scene_dir["t1"],
            "t2": scene_dir["t2"],
            "ground_truth": scene_dir["gt"],
            "output_dir": tmp_path / "out",
            "train": fast_train,
            "sample_count": 100,
        }
        data.update(overrides)
        return PipelineConfig(**data)

    return _make


# Utility functions for tests
def assert_allclose(actual: Any, expected: Any, atol: float, what: str = "values") -> None:
    """Assert two arrays agree elementwise within ``atol``."""
    actual = np.asarray(actual, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    assert actual.shape == expected.shape, f"{what}: shape {actual.shape} != {expected.shape}"
    worst = float(np.max(np.abs(actual - expected))) if actual.size else 0.0
    assert worst <= atol, f"{what}: max deviation {worst:.3e} exceeds {atol:.1e}"


def assert_b_orthonormal(w: np.ndarray, b: np.ndarray, atol: float = 1e-8) -> None:
    """Assert WᵀBW is the identity."""
    assert_allclose(w.T @ b @ w, np.eye(w.shape[1]), atol, "W^T B W")


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest elementwise relative error, guarded against tiny denominators."""
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / scale))


def assert_pipeline_error(error: PipelineError | None, expected_error_type: str) -> None:
    """Assert that a structured error occurred with the expected type."""
    assert error is not None, "Expected a pipeline error but none occurred"
    assert not error.success
    assert (
        error.error.error_type == expected_error_type
    ), f"Expected error type '{expected_error_type}', got '{error.error.error_type}'"


def assert_manifest_exists(report: RunReport) -> None:
    """Assert every file named in the run manifest is on disk."""
    for name, path in report.manifest.items():
        assert Path(path).is_file(), f"Manifest entry '{name}' missing on disk: {path}"


# Pytest configuration
def pytest_configure(config):
    """Configure pytest with custom markers."""
    config.addinivalue_line(
        "markers", "unit: mark test as a unit test (fast, isolated)"
    )
    config.addinivalue_line(
        "markers", "integration: mark test as an integration test (slower)"
    )
    config.addinivalue_line("markers", "slow: mark test as slow running")
    config.addinivalue_line("markers", "e2e: mark test as end-to-end test")


INTEGRATION_MODULES = ("test_pipeline", "test_cli")


def pytest_collection_modifyitems(config, items):
    """Modify test collection to add markers based on file location and name."""
    for item in items:
        module = Path(str(item.fspath)).stem
        if module in INTEGRATION_MODULES:
            item.add_marker(pytest.mark.integration)
        else:
            item.add_marker(pytest.mark.unit)

        if "e2e" in item.name.lower() or "end_to_end" in item.name.lower():
            item.add_marker(pytest.mark.e2e)
            item.add_marker(pytest.mark.slow)
