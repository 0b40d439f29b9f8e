"""Infidelity-versus-shots curves and their power-law fits."""

import logging
import math
from dataclasses import dataclass, replace
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import linregress

from core.errors import ValidationError
from core.quantum import DensityMatrix, Povm, infidelity_pure
from core.sampler import SeededRng
from estimators.particle_bank import bme_snapshots
from estimators.state_tomography import QstData, qst_mle

logger = logging.getLogger(__name__)

ESTIMATORS = ("mle", "bme")


class PowerLawFit(NamedTuple):
    """I(N) ≈ amplitude · N^(−alpha); residual is the RMS of the log-log fit."""

    alpha: float
    amplitude: float
    residual: float


@dataclass(frozen=True, eq=False)
class InfidelityCurve:
    """Mean infidelity (and spread over targets) at increasing shot counts."""

    shots: Tuple[int, ...]
    mean: np.ndarray
    std: np.ndarray
    alpha: float = math.nan
    amplitude: float = math.nan
    series: str = ""

    def __post_init__(self):
        shots = tuple(int(n) for n in self.shots)
        mean = np.asarray(self.mean, dtype=float)
        std = np.asarray(self.std, dtype=float)
        if not shots:
            raise ValidationError("an infidelity curve needs at least one checkpoint")
        if mean.shape != (len(shots),) or std.shape != (len(shots),):
            raise ValidationError("one mean and one spread value per checkpoint are required")
        if any(b <= a for a, b in zip(shots, shots[1:])):
            raise ValidationError("curve shot counts must be strictly increasing")
        if np.any(mean < 0) or np.any(mean > 1):
            raise ValidationError("infidelities must lie in [0, 1]")
        object.__setattr__(self, "shots", shots)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def saturation(self) -> float:
        """Infidelity at the final checkpoint."""
        return float(self.mean[-1])

    def with_fit(self, window: Optional[Tuple[int, int]] = None) -> "InfidelityCurve":
        """Copy carrying the power-law exponent and amplitude, NaN when no fit is possible."""
        try:
            fit = fit_power_law(self, window)
        except ValidationError as exc:
            logger.debug("no power-law fit for series '%s': %s", self.series, exc)
            return replace(self, alpha=math.nan, amplitude=math.nan)
        return replace(self, alpha=fit.alpha, amplitude=fit.amplitude)

    @classmethod
    def aggregate(cls, curves: Sequence["InfidelityCurve"], series: Optional[str] = None) -> "InfidelityCurve":
        """Mean and standard deviation over per-target curves sharing their checkpoints."""
        if not curves:
            raise ValidationError("cannot aggregate an empty list of curves")
        shots = curves[0].shots
        if any(curve.shots != shots for curve in curves):
            raise ValidationError("curves must share their checkpoints to be aggregated")
        values = np.stack([curve.mean for curve in curves])
        spread = values.std(axis=0, ddof=1) if len(curves) > 1 else np.zeros(len(shots))
        merged = cls(shots, values.mean(axis=0), spread, series=series if series is not None else curves[0].series)
        return merged.with_fit()


def fit_power_law(curve: InfidelityCurve, window: Optional[Tuple[int, int]] = None) -> PowerLawFit:
    """Least-squares line through (ln N, ln I) over checkpoints in ``window`` (inclusive)."""
    shots = np.asarray(curve.shots, dtype=float)
    values = curve.mean
    mask = shots > 0
    if window is not None:
        low, high = window
        mask &= (shots >= low) & (shots <= high)
    if int(mask.sum()) < 3:
        raise ValidationError(f"a power-law fit needs at least 3 checkpoints, got {int(mask.sum())}")
    if np.any(values[mask] <= 0):
        raise ValidationError("zero infidelity inside the fit window")
    log_shots = np.log(shots[mask])
    log_values = np.log(values[mask])
    result = linregress(log_shots, log_values)
    predicted = result.intercept + result.slope * log_shots
    residual = float(np.sqrt(np.mean((log_values - predicted) ** 2)))
    return PowerLawFit(alpha=float(-result.slope), amplitude=float(np.exp(result.intercept)), residual=residual)


def reconstruct_checkpoints(
    povm: Povm,
    data: QstData,
    estimator: str = "mle",
    checkpoints: Optional[Sequence[int]] = None,
    rng: Optional[SeededRng] = None,
    n_particles: Optional[int] = None,
) -> Tuple[Tuple[int, ...], List[DensityMatrix]]:
    """Estimates from the data prefix at each requested checkpoint (given in shots)."""
    if estimator not in ESTIMATORS:
        raise ValidationError(f"unknown estimator '{estimator}', expected one of {ESTIMATORS}")
    shots = tuple(int(n) for n in (data.shots if checkpoints is None else checkpoints))
    indices = [data.checkpoint_index(n) for n in shots]
    if estimator == "mle":
        return shots, [qst_mle(povm, data, checkpoint=index) for index in indices]
    if rng is None:
        raise ValidationError("the Bayesian mean estimator needs a random stream")
    options = {} if n_particles is None else {"n_particles": n_particles}
    states, _ = bme_snapshots(povm, data, rng, indices, **options)
    return shots, states


def infidelity_curve(
    target: DensityMatrix,
    povm_used: Povm,
    data: QstData,
    estimator: str = "mle",
    checkpoints: Optional[Sequence[int]] = None,
    rng: Optional[SeededRng] = None,
    series: str = "",
    n_particles: Optional[int] = None,
) -> InfidelityCurve:
    """Infidelity to pure ``target`` of the estimate at every checkpoint."""
    shots, states = reconstruct_checkpoints(povm_used, data, estimator, checkpoints, rng, n_particles)
    values = np.array([infidelity_pure(target, state) for state in states])
    return InfidelityCurve(shots, values, np.zeros(len(shots)), series=series).with_fit()
