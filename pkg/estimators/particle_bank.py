"""Sequential Monte Carlo approximation of the Bayesian mean state.

Particles are stored as Ginibre factors G with ρ = GG†/Tr(GG†), so the prior
is the Hilbert-Schmidt measure and Metropolis-Hastings moves can perturb the
factor directly.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import logsumexp

from config.settings import TOL
from core.errors import DegenerateBankError, ValidationError
from core.quantum import DensityMatrix, Povm, hermitize
from core.sampler import SeededRng
from estimators.state_tomography import QstData, check_povm_labels

logger = logging.getLogger(__name__)

DEFAULT_PARTICLES = 1000
DEFAULT_ESS_THRESHOLD = 0.5
DEFAULT_BATCH_SIZE = 100
DEFAULT_REJUVENATION_STEPS = 10
FRESH_DRAW_PROBABILITY = 0.02

_INITIAL_STEP = 0.3
_MIN_STEP = 1e-4


def _ginibre_factors(count: int, dim: int, generator: np.random.Generator) -> np.ndarray:
    shape = (count, dim, dim)
    return (generator.standard_normal(shape) + 1j * generator.standard_normal(shape)) / np.sqrt(2.0)


def _states_from_factors(factors: np.ndarray) -> np.ndarray:
    products = factors @ np.conj(np.swapaxes(factors, 1, 2))
    traces = np.real(np.trace(products, axis1=1, axis2=2))
    return products / traces[:, np.newaxis, np.newaxis]


class ParticleBank:
    """Weighted particles approximating a posterior over density matrices."""

    def __init__(self, factors: np.ndarray, log_weights: Optional[np.ndarray] = None):
        factors = np.asarray(factors, dtype=complex)
        if factors.ndim != 3 or factors.shape[1] != factors.shape[2]:
            raise ValidationError(f"particle factors must have shape (n, d, d), got {factors.shape}")
        self.factors = factors
        self.log_weights = np.zeros(factors.shape[0]) if log_weights is None else np.asarray(log_weights, float)
        if self.log_weights.shape != (factors.shape[0],):
            raise ValidationError("one log-weight per particle is required")

    @classmethod
    def from_prior(cls, n_particles: int, dim: int, rng: SeededRng) -> "ParticleBank":
        """Equally weighted draws from the Hilbert-Schmidt measure."""
        return cls(_ginibre_factors(n_particles, dim, rng.generator))

    @property
    def size(self) -> int:
        return self.factors.shape[0]

    @property
    def dim(self) -> int:
        return self.factors.shape[1]

    @property
    def states(self) -> np.ndarray:
        return _states_from_factors(self.factors)

    @property
    def particles(self) -> List[DensityMatrix]:
        return [DensityMatrix(hermitize(state)) for state in self.states]

    @property
    def weights(self) -> np.ndarray:
        """Normalized weights."""
        finite = np.isfinite(self.log_weights)
        if not np.any(finite):
            raise DegenerateBankError("every particle has zero posterior weight")
        return np.exp(self.log_weights - logsumexp(self.log_weights))

    @property
    def ess(self) -> float:
        """Effective sample size 1 / Σ w²."""
        weights = self.weights
        return float(1.0 / np.sum(weights ** 2))

    def mean_state(self) -> DensityMatrix:
        """Weighted mean; a convex combination and therefore a valid state."""
        mean = np.einsum("p,pij->ij", self.weights, self.states)
        return DensityMatrix(hermitize(mean / np.real(np.trace(mean))))

    def log_likelihoods(self, matrices: np.ndarray, counts: np.ndarray) -> np.ndarray:
        return _bank_log_likelihood(self.states, matrices, counts)

    def reweight(self, matrices: np.ndarray, counts: np.ndarray) -> None:
        """Multiply the weights by the likelihood of a batch of counts."""
        self.log_weights = self.log_weights + self.log_likelihoods(matrices, counts)

    def resample(self, generator: np.random.Generator) -> None:
        """Multinomial resampling to equal weights."""
        indices = generator.choice(self.size, size=self.size, p=self.weights)
        self.factors = self.factors[indices]
        self.log_weights = np.zeros(self.size)

    def distinct_particles(self) -> int:
        flat = np.round(self.factors.reshape(self.size, -1), 12)
        return int(np.unique(np.concatenate([flat.real, flat.imag], axis=1), axis=0).shape[0])


def _bank_log_likelihood(states: np.ndarray, matrices: np.ndarray, counts: np.ndarray) -> np.ndarray:
    probabilities = np.real(np.einsum("pij,kji->pk", states, matrices))
    probabilities = np.clip(probabilities, TOL.likelihood_floor, None)
    observed = counts > 0
    return np.log(probabilities[:, observed]) @ counts[observed]


class SmcSampler:
    """Processes shot batches into a :class:`ParticleBank`.

    After every batch the bank is resampled and rejuvenated when its effective
    sample size drops below ``ess_threshold`` times its size. Rejuvenation
    runs Metropolis-Hastings moves that target the posterior given all data
    seen so far: a preconditioned Crank-Nicolson perturbation of the Ginibre
    factor, replaced by a fresh prior draw with probability 0.02. Both
    proposals leave the Gaussian prior invariant, so the acceptance
    probability is the likelihood ratio alone.
    """

    def __init__(
        self,
        povm: Povm,
        rng: SeededRng,
        n_particles: int = DEFAULT_PARTICLES,
        ess_threshold: float = DEFAULT_ESS_THRESHOLD,
        rejuvenation_steps: int = DEFAULT_REJUVENATION_STEPS,
        batch_size: int = DEFAULT_BATCH_SIZE,
    ):
        if n_particles < 100:
            raise ValidationError(f"the particle bank needs at least 100 particles, got {n_particles}")
        if not 0 < ess_threshold <= 1:
            raise ValidationError(f"ESS threshold must lie in (0, 1], got {ess_threshold}")
        if batch_size < 1 or rejuvenation_steps < 0:
            raise ValidationError("batch size must be positive and rejuvenation steps non-negative")
        self.povm = povm
        self.matrices = povm.matrices
        self.generator = rng.generator
        self.ess_threshold = ess_threshold
        self.rejuvenation_steps = rejuvenation_steps
        self.batch_size = batch_size
        self.bank = ParticleBank.from_prior(n_particles, povm.dim, rng)
        self.seen = np.zeros(len(povm))
        self.step_size = _INITIAL_STEP
        self.resample_count = 0

    def absorb(self, counts: np.ndarray) -> None:
        """Process newly observed counts in shuffled batches."""
        counts = np.rint(np.asarray(counts, dtype=float)).astype(int)
        if counts.shape != (len(self.povm),) or np.any(counts < 0):
            raise ValidationError("increment counts must be non-negative, one per POVM outcome")
        outcomes = np.repeat(np.arange(counts.size), counts)
        self.generator.shuffle(outcomes)
        for start in range(0, outcomes.size, self.batch_size):
            batch = np.bincount(outcomes[start:start + self.batch_size], minlength=counts.size).astype(float)
            self.bank.reweight(self.matrices, batch)
            self.seen = self.seen + batch
            if self.bank.ess < self.ess_threshold * self.bank.size:
                self._resample_and_rejuvenate()

    def _resample_and_rejuvenate(self) -> None:
        self.bank.resample(self.generator)
        self.resample_count += 1
        current = self.bank.log_likelihoods(self.matrices, self.seen)
        for _ in range(self.rejuvenation_steps):
            current = self._metropolis_step(current)
        distinct = self.bank.distinct_particles()
        if distinct < 2:
            raise DegenerateBankError(
                "particle bank collapsed after rejuvenation", iterations=self.resample_count, residual=float(distinct)
            )
        if distinct < 0.1 * self.bank.size:
            logger.warning("only %d distinct particles after rejuvenation", distinct)
        logger.debug("resampled bank (event %d, %d shots seen, step %.3g)",
                     self.resample_count, int(self.seen.sum()), self.step_size)

    def _metropolis_step(self, current: np.ndarray) -> np.ndarray:
        bank = self.bank
        noise = _ginibre_factors(bank.size, bank.dim, self.generator)
        proposal = np.sqrt(1.0 - self.step_size ** 2) * bank.factors + self.step_size * noise
        fresh = self.generator.random(bank.size) < FRESH_DRAW_PROBABILITY
        if np.any(fresh):
            proposal[fresh] = _ginibre_factors(int(fresh.sum()), bank.dim, self.generator)
        proposed = _bank_log_likelihood(_states_from_factors(proposal), self.matrices, self.seen)
        log_ratio = np.minimum(proposed - current, 0.0)
        accept = np.log(self.generator.random(bank.size)) < log_ratio
        bank.factors = np.where(accept[:, np.newaxis, np.newaxis], proposal, bank.factors)
        rate = float(np.mean(accept))
        if rate < 0.2:
            self.step_size = max(_MIN_STEP, self.step_size * 0.5)
        elif rate > 0.5:
            self.step_size = min(1.0, self.step_size * 1.5)
        return np.where(accept, proposed, current)

    def mean_state(self) -> DensityMatrix:
        if self.bank.ess < 2:
            logger.warning("effective sample size %.2f is below 2", self.bank.ess)
        return self.bank.mean_state()


@dataclass
class BmeResult:
    """Bayesian mean estimate with the final particle bank."""

    state: DensityMatrix
    bank: ParticleBank


def bme_snapshots(
    povm: Povm,
    data: QstData,
    rng: SeededRng,
    checkpoints: Optional[Sequence[int]] = None,
    n_particles: int = DEFAULT_PARTICLES,
    ess_threshold: float = DEFAULT_ESS_THRESHOLD,
    rejuvenation_steps: int = DEFAULT_REJUVENATION_STEPS,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> Tuple[List[DensityMatrix], SmcSampler]:
    """Bayesian mean states at the requested checkpoint indices from one pass over the data.

    Data arrive checkpoint by checkpoint, so the mean recorded at checkpoint
    ``k`` equals what a fresh sampler with the same seed reports after
    processing the prefix up to ``k``.
    """
    check_povm_labels(povm, data.labels)
    indices = list(range(data.n_checkpoints)) if checkpoints is None else [i % data.n_checkpoints for i in checkpoints]
    if indices != sorted(indices):
        raise ValidationError("checkpoint indices must be increasing")
    sampler = SmcSampler(povm, rng, n_particles, ess_threshold, rejuvenation_steps, batch_size)
    snapshots: List[DensityMatrix] = []
    last = max(indices) if indices else -1
    wanted = set(indices)
    for index in range(last + 1):
        sampler.absorb(data.increment(index))
        if index in wanted:
            snapshots.append(sampler.mean_state())
    return snapshots, sampler


def qst_bme(
    povm: Povm,
    data: Union[QstData, np.ndarray],
    rng: SeededRng,
    n_particles: int = DEFAULT_PARTICLES,
    ess_threshold: float = DEFAULT_ESS_THRESHOLD,
    rejuvenation_steps: int = DEFAULT_REJUVENATION_STEPS,
    batch_size: int = DEFAULT_BATCH_SIZE,
    checkpoint: int = -1,
) -> BmeResult:
    """Posterior mean under the Hilbert-Schmidt prior, computed by sequential Monte Carlo."""
    if isinstance(data, QstData):
        snapshots, sampler = bme_snapshots(povm, data, rng, [checkpoint], n_particles, ess_threshold,
                                           rejuvenation_steps, batch_size)
        state = snapshots[0]
    else:
        sampler = SmcSampler(povm, rng, n_particles, ess_threshold, rejuvenation_steps, batch_size)
        sampler.absorb(np.asarray(data, dtype=float))
        state = sampler.mean_state()
    logger.debug("BME finished with ESS %.1f after %d resampling events", sampler.bank.ess, sampler.resample_count)
    return BmeResult(state, sampler.bank)
