"""Shared fixtures: seeded streams, the Pauli measurement and small experiment configs."""

import numpy as np
import pytest

from core.noise import NoiseSpec
from core.quantum import pauli6_povm
from core.sampler import SeededRng
from estimators.detector_tomography import CalibrationSet
from pipeline.experiment_config import ExperimentConfig


@pytest.fixture
def rng_factory():
    """Build a fresh stream for (seed, stream, path)."""

    def make(seed: int = 7, stream: int = 0, path=()):
        return SeededRng(seed, stream, tuple(path))

    return make


@pytest.fixture
def rng(rng_factory):
    return rng_factory()


@pytest.fixture
def pauli6():
    return pauli6_povm()


@pytest.fixture
def calibration_set():
    return CalibrationSet.pauli()


@pytest.fixture
def tiny_config(tmp_path):
    """A few targets and a few thousand shots: enough to exercise every stage quickly."""
    return ExperimentConfig(
        seed=11,
        n_targets=3,
        qdt_shots_per_state_per_basis=2000,
        qst_shots_per_basis=1000,
        output_dir=str(tmp_path / "out"),
    )


@pytest.fixture
def desk_config(tmp_path):
    return ExperimentConfig.preset("desk", seed=5, output_dir=str(tmp_path / "desk"))


@pytest.fixture
def depolarizing():
    def make(p: float) -> NoiseSpec:
        return NoiseSpec("depolarizing", {"p": p})

    return make


@pytest.fixture
def bloch_vectors() -> np.ndarray:
    """Twenty Bloch vectors drawn uniformly from the unit ball."""
    generator = np.random.default_rng(3)
    count = 20
    vectors = generator.normal(size=(count, 3))
    radii = generator.uniform(0.0, 1.0, size=count) ** (1 / 3)
    return vectors / np.linalg.norm(vectors, axis=1, keepdims=True) * radii[:, np.newaxis]
