"""Count data for state tomography, the multinomial likelihood and the RρR maximum-likelihood estimator."""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from config.settings import TOL
from core.errors import ConvergenceError, DimensionMismatchError, SchemaError, ValidationError
from core.quantum import DensityMatrix, Povm, hermitize
from core.sampler import SeededRng

logger = logging.getLogger(__name__)

DEFAULT_MLE_TOL = 1e-10
DEFAULT_MLE_MAX_ITER = 10_000
DEFAULT_CHECKPOINT_COUNT = 30
DEFAULT_FIRST_CHECKPOINT = 10

# dilution below this means the likelihood cannot be improved numerically
_MIN_DILUTION = 1e-8


def default_checkpoints(
    n_total: int,
    n_points: int = DEFAULT_CHECKPOINT_COUNT,
    start: int = DEFAULT_FIRST_CHECKPOINT,
) -> Tuple[int, ...]:
    """Log-spaced integer shot totals from ``start`` to ``n_total`` (deduplicated)."""
    if n_total < 1:
        raise ValidationError(f"total shot count must be positive, got {n_total}")
    if n_total <= start:
        return (int(n_total),)
    points = np.unique(np.round(np.geomspace(start, n_total, n_points)).astype(int))
    return tuple(int(p) for p in points)


def round_robin_share(total_shots: int, basis_index: int, n_bases: int) -> int:
    """Shots basis ``basis_index`` has received after ``total_shots`` round-robin shots."""
    return max(0, (int(total_shots) - basis_index + n_bases - 1) // n_bases)


@dataclass(frozen=True, eq=False)
class QstData:
    """Cumulative per-basis counts at increasing shot checkpoints.

    ``counts[basis]`` has shape ``(n_checkpoints, n_outcomes)``; row ``k``
    holds the counts accumulated up to checkpoint ``k``. Flattened prefixes
    are ordered basis by basis, matching Pauli-6 style POVM labels.
    """

    bases: Tuple[str, ...]
    counts: Mapping[str, np.ndarray]
    target_label: Optional[str] = None

    def __post_init__(self):
        bases = tuple(self.bases)
        if not bases:
            raise ValidationError("QST data needs at least one basis")
        arrays: Dict[str, np.ndarray] = {}
        n_rows = None
        for basis in bases:
            if basis not in self.counts:
                raise ValidationError(f"QST data has no counts for basis '{basis}'")
            array = np.array(self.counts[basis], dtype=float)
            if array.ndim == 1:
                array = array[np.newaxis, :]
            if array.ndim != 2 or array.shape[1] < 1:
                raise ValidationError(f"counts for basis '{basis}' must be a (checkpoints × outcomes) table")
            if n_rows is None:
                n_rows = array.shape[0]
            elif array.shape[0] != n_rows:
                raise ValidationError("all bases must share the same checkpoints")
            if np.any(array < 0):
                raise ValidationError(f"negative counts in basis '{basis}'")
            if np.any(np.diff(array, axis=0) < 0):
                raise ValidationError(f"counts in basis '{basis}' decrease between checkpoints")
            array.setflags(write=False)
            arrays[basis] = array
        totals = sum(array.sum(axis=1) for array in arrays.values())
        if np.any(np.diff(totals) <= 0):
            raise ValidationError("checkpoint shot totals must be strictly increasing")
        object.__setattr__(self, "bases", bases)
        object.__setattr__(self, "counts", arrays)

    @property
    def n_checkpoints(self) -> int:
        return self.counts[self.bases[0]].shape[0]

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(f"{basis}{j}" for basis in self.bases for j in range(self.counts[basis].shape[1]))

    @property
    def shots(self) -> np.ndarray:
        """Total shots over all bases at each checkpoint."""
        return np.rint(sum(array.sum(axis=1) for array in self.counts.values())).astype(int)

    def prefix(self, checkpoint: int = -1) -> np.ndarray:
        """Flattened cumulative counts at checkpoint index ``checkpoint``."""
        return np.concatenate([self.counts[basis][checkpoint] for basis in self.bases])

    def increment(self, checkpoint: int) -> np.ndarray:
        """Counts added between checkpoint ``checkpoint - 1`` and ``checkpoint``."""
        index = checkpoint % self.n_checkpoints
        if index == 0:
            return self.prefix(0)
        return self.prefix(index) - self.prefix(index - 1)

    def checkpoint_index(self, shots: int) -> int:
        matches = np.flatnonzero(self.shots == int(shots))
        if matches.size == 0:
            raise ValidationError(f"{shots} shots is not a recorded checkpoint")
        return int(matches[0])

    def final_counts(self) -> Dict[str, np.ndarray]:
        return {basis: self.counts[basis][-1].copy() for basis in self.bases}

    def to_json_dict(self) -> dict:
        payload: dict = {"bases": list(self.bases)}
        if self.target_label is not None:
            payload = {"target_label": self.target_label, **payload}
        payload["counts"] = {
            basis: [[_json_number(value) for value in row] for row in self.counts[basis]] for basis in self.bases
        }
        return payload

    @classmethod
    def from_json_dict(cls, payload: Mapping, source: Optional[str] = None) -> "QstData":
        if not isinstance(payload, Mapping):
            raise SchemaError("QST data must be a JSON object", source=source)
        for key in ("bases", "counts"):
            if key not in payload:
                raise SchemaError("required field is missing", field=key, source=source)
        bases = payload["bases"]
        counts = payload["counts"]
        if not isinstance(bases, list) or not bases or not all(isinstance(b, str) for b in bases):
            raise SchemaError("must be a non-empty list of basis labels", field="bases", source=source)
        if not isinstance(counts, Mapping):
            raise SchemaError("must map basis labels to count tables", field="counts", source=source)
        tables = {}
        for basis in bases:
            if basis not in counts:
                raise SchemaError(f"missing counts for basis '{basis}'", field=f"counts.{basis}", source=source)
            rows = counts[basis]
            if isinstance(rows, list) and rows and not isinstance(rows[0], list):
                rows = [rows]
            try:
                tables[basis] = np.array(rows, dtype=float)
            except (TypeError, ValueError) as exc:
                raise SchemaError(f"not a numeric table ({exc})", field=f"counts.{basis}", source=source) from exc
            if tables[basis].ndim != 2:
                raise SchemaError("must be a list of count rows", field=f"counts.{basis}", source=source)
        try:
            return cls(tuple(bases), tables, payload.get("target_label"))
        except ValidationError as exc:
            raise SchemaError(str(exc), field="counts", source=source) from exc

    @classmethod
    def from_final_counts(cls, counts: Mapping[str, Sequence[float]], target_label: Optional[str] = None) -> "QstData":
        """Single-checkpoint data from per-basis count vectors."""
        return cls(tuple(counts), {basis: np.asarray(values, dtype=float)[np.newaxis, :]
                                   for basis, values in counts.items()}, target_label)


def _json_number(value: float) -> Union[int, float]:
    return int(value) if float(value).is_integer() else float(value)


def basis_conditional_probabilities(state: DensityMatrix, povm: Povm) -> Dict[str, np.ndarray]:
    """Outcome distribution within each basis, P(j | basis)."""
    raw = np.real(np.einsum("ij,kji->k", state.entries, povm.matrices))
    raw = np.clip(raw, 0.0, None)
    conditional = {}
    for basis, indices in povm.indices_by_basis().items():
        block = raw[indices]
        total = block.sum()
        if total <= 0:
            raise ValidationError(f"basis '{basis}' has zero total probability")
        conditional[basis] = block / total
    return conditional


def simulate_qst_data(
    state: DensityMatrix,
    povm: Povm,
    shots_per_basis: int,
    rng: SeededRng,
    checkpoints: Optional[Sequence[int]] = None,
    target_label: Optional[str] = None,
) -> QstData:
    """Sample round-robin interleaved per-basis counts recorded at ``checkpoints``."""
    if int(shots_per_basis) != shots_per_basis or shots_per_basis < 1:
        raise ValidationError(f"shots per basis must be a positive integer, got {shots_per_basis}")
    conditional = basis_conditional_probabilities(state, povm)
    bases = tuple(conditional)
    n_total = int(shots_per_basis) * len(bases)
    points = tuple(checkpoints) if checkpoints is not None else default_checkpoints(n_total)
    if any(p < 0 or p > n_total for p in points) or list(points) != sorted(set(points)):
        raise ValidationError(f"checkpoints must be strictly increasing within [0, {n_total}]")
    generator = rng.generator
    tables = {basis: np.zeros((len(points), conditional[basis].size)) for basis in bases}
    previous = {basis: np.zeros(conditional[basis].size) for basis in bases}
    previous_shares = [0] * len(bases)
    for row, total in enumerate(points):
        for index, basis in enumerate(bases):
            share = round_robin_share(total, index, len(bases))
            added = generator.multinomial(share - previous_shares[index], conditional[basis])
            previous[basis] = previous[basis] + added
            previous_shares[index] = share
            tables[basis][row] = previous[basis]
    return QstData(bases, tables, target_label)


def check_povm_labels(povm: Povm, labels: Sequence[str]) -> None:
    if tuple(povm.labels) != tuple(labels):
        raise DimensionMismatchError(f"POVM labels {povm.labels} do not match data labels {tuple(labels)}")


def _counts_vector(data: Union[QstData, np.ndarray], povm: Povm, checkpoint: int) -> np.ndarray:
    if isinstance(data, QstData):
        check_povm_labels(povm, data.labels)
        return data.prefix(checkpoint)
    counts = np.asarray(data, dtype=float)
    if counts.shape != (len(povm),):
        raise DimensionMismatchError(f"{counts.size} counts for a POVM with {len(povm)} outcomes")
    return counts


def _log_likelihood(rho: np.ndarray, matrices: np.ndarray, counts: np.ndarray) -> float:
    probabilities = np.real(np.einsum("kij,ji->k", matrices, rho))
    probabilities = np.clip(probabilities, TOL.likelihood_floor, None)
    observed = counts > 0
    return float(np.sum(counts[observed] * np.log(probabilities[observed])))


def log_likelihood(
    state: DensityMatrix,
    povm: Povm,
    data: Union[QstData, np.ndarray],
    checkpoint: int = -1,
) -> float:
    """Σ n_i ln Tr(ρ M_i) with 0·ln 0 = 0 and probabilities floored at 1e-300.

    The same function scores mitigated and standard estimation; only the
    supplied POVM differs.
    """
    if state.dim != povm.dim:
        raise DimensionMismatchError(f"log_likelihood: dimension {state.dim} does not match {povm.dim}")
    return _log_likelihood(state.entries, povm.matrices, _counts_vector(data, povm, checkpoint))


def is_informationally_complete(matrices: np.ndarray, tol: float = TOL.ic_rank) -> bool:
    """True when the operators span the full d² dimensional operator space."""
    dim = matrices.shape[-1]
    vectors = matrices.reshape(matrices.shape[0], dim * dim)
    gram = vectors.conj() @ vectors.T
    return int(np.linalg.matrix_rank(gram, tol=tol)) == dim * dim


@dataclass
class MleFit:
    """An MLE reconstruction with its iteration diagnostics."""

    state: DensityMatrix
    iterations: int
    converged: bool
    final_change: float
    log_likelihood_trace: List[float] = field(default_factory=list)


def qst_mle_fit(
    povm: Povm,
    data: Union[QstData, np.ndarray],
    tol: float = DEFAULT_MLE_TOL,
    max_iter: int = DEFAULT_MLE_MAX_ITER,
    dilution: float = 1.0,
    checkpoint: int = -1,
    strict: bool = False,
) -> MleFit:
    """Iterate ρ ← T ρ T / Tr(T ρ T) with T = (1 − d)𝟙 + d·R(ρ).

    R(ρ) = Σ_i (f_i / Tr(ρ M_i)) M_i. A step that lowers the likelihood is
    rejected and the dilution d halved, so the recorded log-likelihood trace
    never decreases. Iteration stops when the largest entry change drops
    below ``tol`` or after ``max_iter`` iterations.
    """
    if not 0 < dilution <= 1:
        raise ValidationError(f"dilution must lie in (0, 1], got {dilution}")
    counts = _counts_vector(data, povm, checkpoint)
    dim = povm.dim
    matrices = povm.matrices
    rho = np.eye(dim, dtype=complex) / dim
    total = float(counts.sum())
    if total <= 0:
        logger.debug("no counts at this checkpoint; returning the maximally mixed state")
        return MleFit(DensityMatrix(rho), 0, True, 0.0, [0.0])
    if not is_informationally_complete(matrices):
        logger.warning("POVM is not informationally complete; the maximizer is not unique")

    frequencies = counts / total
    observed = frequencies > 0
    identity = np.eye(dim, dtype=complex)
    current = _log_likelihood(rho, matrices, counts)
    trace = [current]
    change = np.inf
    r_operator = identity
    converged = False
    iteration = 0
    while iteration < max_iter:
        iteration += 1
        probabilities = np.real(np.einsum("kij,ji->k", matrices, rho))
        ratios = np.zeros_like(frequencies)
        ratios[observed] = frequencies[observed] / np.maximum(probabilities[observed], TOL.ratio_floor)
        r_operator = np.einsum("k,kij->ij", ratios, matrices)
        step = (1.0 - dilution) * identity + dilution * r_operator
        candidate = step @ rho @ step.conj().T
        candidate = hermitize(candidate / np.real(np.trace(candidate)))
        proposed = _log_likelihood(candidate, matrices, counts)
        if proposed < current:
            dilution *= 0.5
            logger.debug("likelihood decreased at iteration %d; dilution lowered to %.3e", iteration, dilution)
            if dilution < _MIN_DILUTION:
                converged = True
                break
            continue
        change = float(np.max(np.abs(candidate - rho)))
        rho, current = candidate, proposed
        trace.append(current)
        if change < tol:
            converged = True
            break

    if not converged:
        gradient = float(np.max(np.abs(r_operator - identity)))
        message = f"state MLE did not converge; final gradient norm {gradient:.3e}"
        if strict:
            raise ConvergenceError(message, iterations=iteration, residual=change)
        logger.warning("%s after %d iterations", message, iteration)
    else:
        logger.debug("state MLE converged after %d iterations (log-likelihood %.6f)", iteration, current)
    return MleFit(DensityMatrix(rho), iteration, converged, change, trace)


def qst_mle(
    povm: Povm,
    data: Union[QstData, np.ndarray],
    tol: float = DEFAULT_MLE_TOL,
    max_iter: int = DEFAULT_MLE_MAX_ITER,
    dilution: float = 1.0,
    checkpoint: int = -1,
    strict: bool = False,
) -> DensityMatrix:
    """Maximum-likelihood state for ``data`` measured with ``povm``."""
    return qst_mle_fit(povm, data, tol, max_iter, dilution, checkpoint, strict).state

