"""Detector tomography: reconstructing a noisy POVM from calibration counts.

The reconstruction follows the iterative maximum-likelihood scheme for
measurement operators: with R_i = Σ_s (f_is / p_is) ρ_s and
λ = (Σ_i R_i M_i R_i)^(1/2), every effect is updated as
M_i ← λ⁻¹ R_i M_i R_i λ⁻¹, which keeps the effects positive and complete.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from config.settings import TOL
from core.errors import CalibrationError, ConvergenceError, DimensionMismatchError, SchemaError, ValidationError
from core.quantum import (
    PAULI6_LABELS,
    DensityMatrix,
    Povm,
    basis_of,
    hermitize,
    infidelity_pure,
    pauli_basis_rotation,
    pauli_eigenstate,
)
from core.sampler import SeededRng
from estimators.state_tomography import QstData, basis_conditional_probabilities, qst_mle

logger = logging.getLogger(__name__)

DEFAULT_QDT_TOL = 1e-9
DEFAULT_QDT_MAX_ITER = 10_000
DEFAULT_COHERENCE_THRESHOLD = 3e-2

_MIN_DILUTION = 1e-8


@dataclass(frozen=True, eq=False)
class CalibrationSet:
    """Known calibration states, one label each."""

    states: Tuple[DensityMatrix, ...]
    labels: Tuple[str, ...]

    def __post_init__(self):
        states = tuple(self.states)
        labels = tuple(self.labels)
        if not states:
            raise CalibrationError("a calibration set needs at least one state")
        if len(states) != len(labels):
            raise CalibrationError(f"{len(states)} calibration states but {len(labels)} labels")
        if len(set(labels)) != len(labels):
            raise CalibrationError(f"duplicate calibration labels: {labels}")
        if any(state.dim != states[0].dim for state in states):
            raise DimensionMismatchError("calibration states have different dimensions")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def pauli(cls, labels: Sequence[str] = PAULI6_LABELS) -> "CalibrationSet":
        """The six Pauli eigenstates (or the subset named by ``labels``)."""
        return cls(tuple(pauli_eigenstate(label) for label in labels), tuple(labels))

    @property
    def dim(self) -> int:
        return self.states[0].dim

    def __len__(self) -> int:
        return len(self.states)

    def stacked(self) -> np.ndarray:
        return np.stack([state.entries for state in self.states])

    def gram_rank(self) -> int:
        """Rank of the Hilbert-Schmidt Gram matrix of the states."""
        vectors = self.stacked().reshape(len(self), -1)
        gram = vectors.conj() @ vectors.T
        return int(np.linalg.matrix_rank(gram, tol=TOL.ic_rank))

    def is_informationally_complete(self) -> bool:
        return self.gram_rank() == self.dim ** 2

    def require_informationally_complete(self) -> None:
        rank = self.gram_rank()
        if rank != self.dim ** 2:
            raise CalibrationError(
                f"calibration states {list(self.labels)} span rank {rank}, need {self.dim ** 2}"
            )

    def subset(self, labels: Sequence[str]) -> "CalibrationSet":
        index = {label: i for i, label in enumerate(self.labels)}
        try:
            return CalibrationSet(tuple(self.states[index[label]] for label in labels), tuple(labels))
        except KeyError as exc:
            raise CalibrationError(f"unknown calibration state {exc}") from None


@dataclass(frozen=True, eq=False)
class QdtData:
    """Counts n_is of outcome i for calibration state s.

    ``counts`` has shape ``(n_outcomes, n_states)``; outcomes are ordered
    basis by basis as ``<basis><outcome>`` labels. Counts may be fractional
    when analytic probabilities stand in for infinite statistics.
    """

    states: Tuple[str, ...]
    bases: Tuple[str, ...]
    counts: np.ndarray
    outcomes_per_basis: int = 2

    def __post_init__(self):
        counts = np.array(self.counts, dtype=float)
        states = tuple(self.states)
        bases = tuple(self.bases)
        expected = (len(bases) * self.outcomes_per_basis, len(states))
        if counts.shape != expected:
            raise ValidationError(f"QDT counts have shape {counts.shape}, expected {expected}")
        if np.any(counts < 0) or not np.all(np.isfinite(counts)):
            raise ValidationError("QDT counts must be finite and non-negative")
        if np.any(counts.sum(axis=0) <= 0):
            missing = [states[s] for s in np.flatnonzero(counts.sum(axis=0) <= 0)]
            raise CalibrationError(f"calibration states {missing} were never measured")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "bases", bases)

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(f"{basis}{j}" for basis in self.bases for j in range(self.outcomes_per_basis))

    @property
    def totals(self) -> np.ndarray:
        """N_s, the shots recorded for each state."""
        return self.counts.sum(axis=0)

    def basis_rows(self, basis: str) -> slice:
        start = self.bases.index(basis) * self.outcomes_per_basis
        return slice(start, start + self.outcomes_per_basis)

    def state_counts(self, state: str) -> Dict[str, np.ndarray]:
        column = self.counts[:, self.states.index(state)]
        return {basis: column[self.basis_rows(basis)].copy() for basis in self.bases}

    def to_json_dict(self) -> dict:
        return {
            "states": list(self.states),
            "bases": list(self.bases),
            "counts": {
                state: {basis: [_json_number(v) for v in values] for basis, values in self.state_counts(state).items()}
                for state in self.states
            },
        }

    @classmethod
    def from_json_dict(cls, payload: Mapping, source: Optional[str] = None) -> "QdtData":
        if not isinstance(payload, Mapping):
            raise SchemaError("QDT data must be a JSON object", source=source)
        for key in ("states", "bases", "counts"):
            if key not in payload:
                raise SchemaError("required field is missing", field=key, source=source)
        states, bases, counts = payload["states"], payload["bases"], payload["counts"]
        for key, values in (("states", states), ("bases", bases)):
            if not isinstance(values, list) or not values or not all(isinstance(v, str) for v in values):
                raise SchemaError("must be a non-empty list of labels", field=key, source=source)
        if not isinstance(counts, Mapping):
            raise SchemaError("must map state labels to per-basis counts", field="counts", source=source)
        columns = []
        width = None
        for state in states:
            per_state = counts.get(state)
            if not isinstance(per_state, Mapping):
                raise SchemaError("missing counts for calibration state", field=f"counts.{state}", source=source)
            column = []
            for basis in bases:
                values = per_state.get(basis)
                where = f"counts.{state}.{basis}"
                if not isinstance(values, list) or not values:
                    raise SchemaError(f"missing counts for basis '{basis}'", field=where, source=source)
                if width is None:
                    width = len(values)
                if len(values) != width:
                    raise SchemaError(f"expected {width} outcome counts, got {len(values)}", field=where, source=source)
                try:
                    column.extend(float(v) for v in values)
                except (TypeError, ValueError) as exc:
                    raise SchemaError(f"non-numeric count ({exc})", field=where, source=source) from exc
            columns.append(column)
        try:
            return cls(tuple(states), tuple(bases), np.array(columns).T, outcomes_per_basis=width)
        except ValidationError as exc:
            raise SchemaError(str(exc), field="counts", source=source) from exc


def _json_number(value: float):
    return int(value) if float(value).is_integer() else float(value)


def simulate_qdt_data(
    prepared_states: Sequence[DensityMatrix],
    labels: Sequence[str],
    true_povm: Povm,
    shots_per_basis: float,
    rng: SeededRng,
) -> QdtData:
    """Counts of ``true_povm`` on each prepared calibration state, basis by basis.

    An infinite budget records the exact conditional probabilities instead of
    sampled counts.
    """
    bases = tuple(true_povm.bases())
    columns = []
    for state in prepared_states:
        conditional = basis_conditional_probabilities(state, true_povm)
        column = []
        for basis in bases:
            if math.isinf(shots_per_basis):
                column.extend(conditional[basis])
            else:
                if int(shots_per_basis) != shots_per_basis or shots_per_basis < 1:
                    raise ValidationError(f"calibration shots must be a positive integer, got {shots_per_basis}")
                column.extend(rng.generator.multinomial(int(shots_per_basis), conditional[basis]))
        columns.append(column)
    return QdtData(tuple(labels), bases, np.array(columns, dtype=float).T)


def _inverse_sqrt(matrix: np.ndarray) -> Tuple[np.ndarray, float]:
    values, vectors = np.linalg.eigh(hermitize(matrix))
    smallest = float(values[0])
    values = np.clip(values, TOL.ratio_floor, None)
    return (vectors / np.sqrt(values)) @ vectors.conj().T, smallest


def _likelihood(effects: np.ndarray, states: np.ndarray, counts: np.ndarray) -> float:
    probabilities = np.real(np.einsum("sij,kji->ks", states, effects))
    probabilities = np.clip(probabilities, TOL.likelihood_floor, None)
    observed = counts > 0
    return float(np.sum(counts[observed] * np.log(probabilities[observed])))


@dataclass
class _BlockFit:
    effects: np.ndarray
    iterations: int
    converged: bool
    change: float
    trace: List[float]


def _reconstruct_block(
    counts: np.ndarray,
    states: np.ndarray,
    tol: float,
    max_iter: int,
    dilution: float,
    name: str,
    strict: bool,
) -> _BlockFit:
    """MLE of the effects of one complete block of outcomes from counts (outcome × state)."""
    n_outcomes, dim = counts.shape[0], states.shape[1]
    measured = counts.sum(axis=0) > 0
    counts = counts[:, measured]
    states = states[measured]
    frequencies = counts / counts.sum(axis=0)
    observed = frequencies > 0
    identity = np.eye(dim, dtype=complex)
    effects = np.stack([identity / n_outcomes] * n_outcomes)
    current = _likelihood(effects, states, counts)
    trace = [current]
    change = math.inf
    converged = False
    iteration = 0
    while iteration < max_iter:
        iteration += 1
        probabilities = np.real(np.einsum("sij,kji->ks", states, effects))
        ratios = np.zeros_like(frequencies)
        ratios[observed] = frequencies[observed] / np.maximum(probabilities[observed], TOL.ratio_floor)
        r_ops = np.einsum("ks,sij->kij", ratios, states)
        r_ops = (1.0 - dilution) * identity + dilution * r_ops
        sandwiched = r_ops @ effects @ r_ops
        normalizer, smallest = _inverse_sqrt(sandwiched.sum(axis=0))
        if smallest <= TOL.ratio_floor:
            raise ConvergenceError(
                f"detector reconstruction for '{name}' is singular: the counts contradict every complete POVM",
                iterations=iteration,
                residual=smallest,
            )
        candidate = normalizer @ sandwiched @ normalizer
        candidate = 0.5 * (candidate + np.conj(np.swapaxes(candidate, 1, 2)))
        proposed = _likelihood(candidate, states, counts)
        if proposed < current:
            dilution *= 0.5
            logger.debug("detector likelihood decreased for '%s'; dilution lowered to %.3e", name, dilution)
            if dilution < _MIN_DILUTION:
                converged = True
                break
            continue
        change = float(np.max(np.abs(candidate - effects)))
        effects, current = candidate, proposed
        trace.append(current)
        if change < tol:
            converged = True
            break
    if not converged:
        message = f"detector reconstruction for '{name}' did not converge"
        if strict:
            raise ConvergenceError(message, iterations=iteration, residual=change)
        logger.warning("%s after %d iterations (last change %.3e)", message, iteration, change)
    else:
        logger.debug("detector block '%s' converged after %d iterations", name, iteration)
    return _BlockFit(effects, iteration, converged, change, trace)


@dataclass
class QdtFit:
    """Reconstructed POVM with per-block iteration diagnostics."""

    povm: Povm
    iterations: Dict[str, int] = field(default_factory=dict)
    converged: bool = True
    log_likelihood_traces: Dict[str, List[float]] = field(default_factory=dict)


def _check_data(data: QdtData, calibration: CalibrationSet) -> None:
    if tuple(data.states) != tuple(calibration.labels):
        raise CalibrationError(f"QDT data states {data.states} do not match calibration labels {calibration.labels}")


def qdt_mle_fit(
    data: QdtData,
    calibration: CalibrationSet,
    max_iter: int = DEFAULT_QDT_MAX_ITER,
    tol: float = DEFAULT_QDT_TOL,
    dilution: float = 1.0,
    joint: bool = False,
    strict: bool = False,
) -> QdtFit:
    """Reconstruct the detector basis by basis (or jointly over all outcomes).

    Per-basis reconstructions are complete two-outcome POVMs; they are
    assembled with weight 1/n_bases each, the probability of choosing that
    basis.
    """
    if not 0 < dilution <= 1:
        raise ValidationError(f"dilution must lie in (0, 1], got {dilution}")
    _check_data(data, calibration)
    calibration.require_informationally_complete()
    states = calibration.stacked()
    fit = QdtFit(povm=None)  # type: ignore[arg-type]
    if joint:
        block = _reconstruct_block(data.counts, states, tol, max_iter, dilution, "joint", strict)
        matrices = block.effects
        fit.iterations["joint"] = block.iterations
        fit.log_likelihood_traces["joint"] = block.trace
        fit.converged = block.converged
    else:
        weight = 1.0 / len(data.bases)
        blocks = []
        for basis in data.bases:
            block = _reconstruct_block(data.counts[data.basis_rows(basis)], states, tol, max_iter, dilution,
                                       basis, strict)
            blocks.append(weight * block.effects)
            fit.iterations[basis] = block.iterations
            fit.log_likelihood_traces[basis] = block.trace
            fit.converged = fit.converged and block.converged
        matrices = np.concatenate(blocks)
    fit.povm = Povm.from_matrices(matrices, data.labels)
    return fit


def qdt_mle(
    data: QdtData,
    calibration: CalibrationSet,
    max_iter: int = DEFAULT_QDT_MAX_ITER,
    tol: float = DEFAULT_QDT_TOL,
    dilution: float = 1.0,
    joint: bool = False,
    strict: bool = False,
) -> Povm:
    """Maximum-likelihood detector POVM for ``data`` on ``calibration``."""
    return qdt_mle_fit(data, calibration, max_iter, tol, dilution, joint, strict).povm


def qdt_log_likelihood(povm: Povm, data: QdtData, calibration: CalibrationSet) -> float:
    """Σ_{i,s} n_is ln Tr(ρ_s M_i), with 0·ln 0 = 0 and probabilities floored at 1e-300."""
    _check_data(data, calibration)
    if tuple(povm.labels) != data.labels:
        raise DimensionMismatchError(f"POVM labels {povm.labels} do not match data labels {data.labels}")
    if povm.dim != calibration.dim:
        raise DimensionMismatchError(f"POVM dimension {povm.dim} does not match calibration {calibration.dim}")
    return _likelihood(povm.matrices, calibration.stacked(), data.counts)


@dataclass(frozen=True, eq=False)
class EffectCoherence:
    label: str
    rotated: np.ndarray
    max_off_diagonal: float
    classical: bool


@dataclass(frozen=True, eq=False)
class CoherenceReport:
    """Effects expressed in their ideal eigenbasis, with a classicality verdict."""

    effects: Tuple[EffectCoherence, ...]
    threshold: float

    @property
    def classical(self) -> bool:
        return all(effect.classical for effect in self.effects)

    @property
    def max_off_diagonal(self) -> float:
        return max(effect.max_off_diagonal for effect in self.effects)

    def to_json_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "classical": self.classical,
            "effects": [
                {
                    "label": effect.label,
                    "max_off_diagonal": effect.max_off_diagonal,
                    "classical": effect.classical,
                    "rotated": [[[float(v.real), float(v.imag)] for v in row] for row in effect.rotated],
                }
                for effect in self.effects
            ],
        }


def default_basis_rotations(povm: Povm) -> Dict[str, np.ndarray]:
    return {basis: pauli_basis_rotation(basis) for basis in povm.bases()}


def coherent_error_report(
    povm: Povm,
    basis_rotations: Optional[Mapping[str, np.ndarray]] = None,
    threshold: float = DEFAULT_COHERENCE_THRESHOLD,
) -> CoherenceReport:
    """Rotate every effect R_b M R_b† into its ideal eigenbasis and inspect the off-diagonals.

    An effect is classical when its largest off-diagonal magnitude does not
    exceed ``threshold``, the caller's shot-noise scale.
    """
    rotations = default_basis_rotations(povm) if basis_rotations is None else basis_rotations
    entries = []
    for label, effect in zip(povm.labels, povm.effects):
        basis = basis_of(label)
        if basis not in rotations:
            raise ValidationError(f"no basis rotation supplied for effect '{label}'")
        unitary = np.asarray(rotations[basis], dtype=complex)
        rotated = unitary @ effect.entries @ unitary.conj().T
        off_diagonal = rotated - np.diag(np.diag(rotated))
        magnitude = float(np.max(np.abs(off_diagonal)))
        entries.append(EffectCoherence(label, rotated, magnitude, magnitude <= threshold))
    report = CoherenceReport(tuple(entries), threshold)
    logger.info("coherent error report: max off-diagonal %.4f (threshold %.4f)", report.max_off_diagonal, threshold)
    return report


@dataclass(frozen=True)
class DriftReport:
    passed: bool
    infidelities: Dict[str, float]
    epsilon: float


def drift_check(
    povm: Povm,
    probe_states: CalibrationSet,
    fresh_counts: QdtData,
    epsilon: float,
) -> DriftReport:
    """Reconstruct each pure probe with ``povm``; fail when any infidelity reaches ``epsilon``."""
    _check_data(fresh_counts, probe_states)
    infidelities = {}
    for label, state in zip(probe_states.labels, probe_states.states):
        data = QstData.from_final_counts(fresh_counts.state_counts(label), target_label=label)
        estimate = qst_mle(povm, data)
        infidelities[label] = infidelity_pure(state, estimate)
    passed = epsilon >= 1 or all(value < epsilon for value in infidelities.values())
    if not passed:
        worst = max(infidelities, key=infidelities.get)
        logger.warning("detector drift: probe '%s' reconstructs with infidelity %.4f ≥ %.4f",
                       worst, infidelities[worst], epsilon)
    return DriftReport(passed, infidelities, epsilon)
