"""Seeded randomness: Haar and Hilbert-Schmidt states, multinomial shot counts."""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.stats import unitary_group

from config.settings import TOL
from core.errors import ValidationError
from core.quantum import DensityMatrix, Povm, born_probabilities, hermitize

logger = logging.getLogger(__name__)


class SeededRng:
    """A reproducible random stream identified by ``(seed, stream)``.

    Streams are derived through numpy's ``SeedSequence`` spawn keys, so two
    instances with the same seed, stream and child path produce identical
    sequences on every platform. An instance is owned by a single task;
    concurrent tasks each take their own :meth:`child`.
    """

    def __init__(self, seed: int, stream: int = 0, path: Tuple[int, ...] = ()):
        if seed < 0 or stream < 0 or any(index < 0 for index in path):
            raise ValidationError("seed, stream and child indices must be non-negative")
        self.seed = int(seed)
        self.stream = int(stream)
        self.path = tuple(int(index) for index in path)
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream, *self.path))
        self._generator = np.random.Generator(np.random.PCG64(sequence))

    @property
    def generator(self) -> np.random.Generator:
        return self._generator

    def child(self, index: int) -> "SeededRng":
        """Independent stream for task ``index`` below this one."""
        return SeededRng(self.seed, self.stream, self.path + (index,))

    def fresh(self) -> "SeededRng":
        """A new instance positioned at the start of this stream."""
        return SeededRng(self.seed, self.stream, self.path)

    def __repr__(self) -> str:
        return f"SeededRng(seed={self.seed}, stream={self.stream}, path={self.path})"


@dataclass(frozen=True, eq=False)
class CountRecord:
    """Per-outcome shot counts with their total."""

    counts: np.ndarray
    labels: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        counts = np.array(self.counts, dtype=float)
        if counts.ndim != 1:
            raise ValidationError("counts must be a vector")
        if np.any(counts < 0):
            raise ValidationError("counts must be non-negative")
        if self.labels and len(self.labels) != counts.size:
            raise ValidationError(f"{counts.size} counts but {len(self.labels)} labels")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def n_shots(self) -> float:
        return float(self.counts.sum())

    @property
    def frequencies(self) -> np.ndarray:
        total = self.n_shots
        if total == 0:
            return np.zeros_like(self.counts)
        return self.counts / total


def ginibre_matrix(dim: int, rng: SeededRng) -> np.ndarray:
    """dim×dim matrix with i.i.d. standard complex normal entries."""
    generator = rng.generator
    return (generator.standard_normal((dim, dim)) + 1j * generator.standard_normal((dim, dim))) / np.sqrt(2.0)


def haar_random_unitary(dim: int, rng: SeededRng) -> np.ndarray:
    """Haar-distributed unitary (QR of a Ginibre matrix with phase correction)."""
    if dim < 2:
        raise ValidationError(f"dim must be at least 2, got {dim}")
    return unitary_group.rvs(dim, random_state=rng.generator)


def haar_random_pure_state(dim: int, rng: SeededRng) -> DensityMatrix:
    """|ψ⟩⟨ψ| with |ψ⟩ = U|0⟩ for a Haar-random U."""
    unitary = haar_random_unitary(dim, rng)
    return DensityMatrix.from_ket(unitary[:, 0])


def hilbert_schmidt_random_state(dim: int, rng: SeededRng) -> DensityMatrix:
    """ρ = GG†/Tr(GG†) for a Ginibre matrix G."""
    if dim < 2:
        raise ValidationError(f"dim must be at least 2, got {dim}")
    factor = ginibre_matrix(dim, rng)
    product = factor @ factor.conj().T
    return DensityMatrix(hermitize(product / np.real(np.trace(product))))


def _checked_probabilities(probabilities: Sequence[float]) -> np.ndarray:
    values = np.asarray(probabilities, dtype=float)
    if values.ndim != 1 or values.size == 0:
        raise ValidationError("probabilities must be a non-empty vector")
    if np.any(values < -TOL.probability):
        raise ValidationError(f"negative probability {values.min():.3e}")
    if abs(values.sum() - 1.0) > TOL.probability_sum:
        raise ValidationError(f"probabilities sum to {values.sum():.12f}, not 1")
    values = np.clip(values, 0.0, None)
    return values / values.sum()


def sample_counts(
    probabilities: Sequence[float],
    n_shots: int,
    rng: SeededRng,
    labels: Optional[Sequence[str]] = None,
) -> CountRecord:
    """Multinomial draw of ``n_shots`` outcomes."""
    if int(n_shots) != n_shots or n_shots < 1:
        raise ValidationError(f"n_shots must be a positive integer, got {n_shots}")
    values = _checked_probabilities(probabilities)
    counts = rng.generator.multinomial(int(n_shots), values)
    return CountRecord(counts, tuple(labels) if labels is not None else ())


def simulate_measurement(state: DensityMatrix, povm: Povm, n_shots: int, rng: SeededRng) -> CountRecord:
    """Sample ``n_shots`` outcomes of ``povm`` on ``state``."""
    return sample_counts(born_probabilities(state, povm), n_shots, rng, labels=povm.labels)
