"""Exact finite-dimensional quantum objects: states, effects, POVMs and channels.

All types are immutable after construction. Matrices are stored dense as
read-only complex numpy arrays and validated against the shared tolerances in
``config.settings.TOL``.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple, Union

import numpy as np

from config.settings import TOL
from core.errors import ChannelError, DimensionMismatchError, ValidationError

logger = logging.getLogger(__name__)

MAX_DIM = 64

# eigenvalues of the fidelity kernel below this are numerical zeros
_EIGEN_CUTOFF = 1e-13

IDENTITY_2 = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS: Dict[str, np.ndarray] = {"x": PAULI_X, "y": PAULI_Y, "z": PAULI_Z}

PAULI_BASES: Tuple[str, ...] = ("x", "y", "z")
PAULI6_LABELS: Tuple[str, ...] = ("x0", "x1", "y0", "y1", "z0", "z1")

_SQRT_HALF = 1.0 / np.sqrt(2.0)
_PAULI_KETS: Dict[str, np.ndarray] = {
    "x0": np.array([_SQRT_HALF, _SQRT_HALF], dtype=complex),
    "x1": np.array([_SQRT_HALF, -_SQRT_HALF], dtype=complex),
    "y0": np.array([_SQRT_HALF, 1j * _SQRT_HALF], dtype=complex),
    "y1": np.array([_SQRT_HALF, -1j * _SQRT_HALF], dtype=complex),
    "z0": np.array([1, 0], dtype=complex),
    "z1": np.array([0, 1], dtype=complex),
}

MatrixLike = Union[np.ndarray, Sequence[Sequence[complex]]]


def _as_matrix(entries: MatrixLike, what: str) -> np.ndarray:
    matrix = np.array(entries, dtype=complex)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValidationError(f"{what} must be a square matrix, got shape {matrix.shape}")
    if not 1 <= matrix.shape[0] <= MAX_DIM:
        raise ValidationError(f"{what} dimension {matrix.shape[0]} outside [1, {MAX_DIM}]")
    if not np.all(np.isfinite(matrix)):
        raise ValidationError(f"{what} contains non-finite entries")
    matrix.setflags(write=False)
    return matrix


def _check_hermitian(matrix: np.ndarray, what: str) -> None:
    deviation = float(np.max(np.abs(matrix - matrix.conj().T)))
    if deviation > TOL.hermitian:
        raise ValidationError(f"{what} is not Hermitian (max deviation {deviation:.3e})")


def hermitize(matrix: np.ndarray) -> np.ndarray:
    """Return the Hermitian part of a square matrix."""
    return 0.5 * (matrix + matrix.conj().T)


def _check_dims(left: int, right: int, operation: str) -> None:
    if left != right:
        raise DimensionMismatchError(f"{operation}: dimension {left} does not match {right}")


def matrix_to_json(matrix: np.ndarray) -> List[List[List[float]]]:
    """Encode a complex matrix as row-major nested ``[re, im]`` pairs."""
    return [[[float(value.real), float(value.imag)] for value in row] for row in np.asarray(matrix)]


def matrix_from_json(rows: Sequence[Sequence[Sequence[float]]]) -> np.ndarray:
    """Decode the nested ``[re, im]`` layout written by :func:`matrix_to_json`."""
    try:
        return np.array([[complex(pair[0], pair[1]) for pair in row] for row in rows], dtype=complex)
    except (TypeError, IndexError, ValueError) as exc:
        raise ValidationError(f"malformed complex matrix encoding: {exc}") from exc


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite state."""

    entries: np.ndarray

    def __post_init__(self):
        matrix = _as_matrix(self.entries, "density matrix")
        _check_hermitian(matrix, "density matrix")
        trace = complex(np.trace(matrix))
        if abs(trace - 1.0) > TOL.trace:
            raise ValidationError(f"density matrix trace {trace.real:.12f} is not 1")
        smallest = float(np.linalg.eigvalsh(matrix)[0])
        if smallest < -TOL.psd:
            raise ValidationError(f"density matrix has negative eigenvalue {smallest:.3e}")
        object.__setattr__(self, "entries", matrix)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def from_ket(cls, ket: Sequence[complex]) -> "DensityMatrix":
        vector = np.asarray(ket, dtype=complex).ravel()
        norm = np.linalg.norm(vector)
        if norm == 0:
            raise ValidationError("cannot build a state from the zero vector")
        vector = vector / norm
        return cls(hermitize(np.outer(vector, vector.conj())))

    @classmethod
    def maximally_mixed(cls, dim: int = 2) -> "DensityMatrix":
        return cls(np.eye(dim, dtype=complex) / dim)

    @classmethod
    def from_bloch(cls, vector: Sequence[float]) -> "DensityMatrix":
        """Single-qubit state (I + r·σ)/2; requires |r| ≤ 1."""
        rx, ry, rz = (float(v) for v in vector)
        return cls(0.5 * (IDENTITY_2 + rx * PAULI_X + ry * PAULI_Y + rz * PAULI_Z))

    def purity(self) -> float:
        return float(np.real(np.trace(self.entries @ self.entries)))

    def to_json_dict(self) -> dict:
        return {"dim": self.dim, "entries": matrix_to_json(self.entries)}

    @classmethod
    def from_json_dict(cls, payload: Mapping) -> "DensityMatrix":
        state = cls(matrix_from_json(payload["entries"]))
        if "dim" in payload and int(payload["dim"]) != state.dim:
            raise ValidationError(f"declared dim {payload['dim']} does not match entries ({state.dim})")
        return state


@dataclass(frozen=True, eq=False)
class Effect:
    """A single POVM element: Hermitian with spectrum in [0, 1]."""

    entries: np.ndarray

    def __post_init__(self):
        matrix = _as_matrix(self.entries, "effect")
        _check_hermitian(matrix, "effect")
        eigenvalues = np.linalg.eigvalsh(matrix)
        if eigenvalues[0] < -TOL.psd or eigenvalues[-1] > 1 + TOL.effect_upper:
            raise ValidationError(
                f"effect spectrum [{eigenvalues[0]:.3e}, {eigenvalues[-1]:.3e}] outside [0, 1]"
            )
        object.__setattr__(self, "entries", matrix)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def to_json_dict(self) -> dict:
        return {"dim": self.dim, "entries": matrix_to_json(self.entries)}

    @classmethod
    def from_json_dict(cls, payload: Mapping) -> "Effect":
        return cls(matrix_from_json(payload["entries"]))


def basis_of(label: str) -> str:
    """Basis part of a ``<basis><outcome>`` label, e.g. ``"x"`` for ``"x1"``."""
    return label[:-1]


def outcome_of(label: str) -> int:
    """Outcome part of a ``<basis><outcome>`` label, e.g. ``1`` for ``"x1"``."""
    return int(label[-1])


@dataclass(frozen=True, eq=False)
class Povm:
    """Ordered effects summing to the identity, one label per effect."""

    effects: Tuple[Effect, ...]
    labels: Tuple[str, ...]

    def __post_init__(self):
        effects = tuple(self.effects)
        labels = tuple(str(label) for label in self.labels)
        if not effects:
            raise ValidationError("a POVM needs at least one effect")
        if len(effects) != len(labels):
            raise ValidationError(f"{len(effects)} effects but {len(labels)} labels")
        if len(set(labels)) != len(labels):
            raise ValidationError(f"duplicate POVM labels: {labels}")
        dim = effects[0].dim
        for effect in effects:
            _check_dims(effect.dim, dim, "POVM")
        stacked = np.stack([effect.entries for effect in effects])
        deviation = float(np.max(np.abs(stacked.sum(axis=0) - np.eye(dim))))
        if deviation > TOL.completeness:
            raise ValidationError(f"POVM effects do not sum to identity (max deviation {deviation:.3e})")
        stacked.setflags(write=False)
        object.__setattr__(self, "effects", effects)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "_matrices", stacked)

    @classmethod
    def from_matrices(cls, matrices: Iterable[np.ndarray], labels: Sequence[str]) -> "Povm":
        return cls(tuple(Effect(hermitize(np.asarray(m, dtype=complex))) for m in matrices), tuple(labels))

    @property
    def dim(self) -> int:
        return self.effects[0].dim

    @property
    def matrices(self) -> np.ndarray:
        """Effects stacked into a read-only ``(n_outcomes, dim, dim)`` array."""
        return self._matrices

    def __len__(self) -> int:
        return len(self.effects)

    def effect(self, label: str) -> Effect:
        return self.effects[self.labels.index(label)]

    def bases(self) -> List[str]:
        """Distinct basis labels in first-appearance order."""
        seen: List[str] = []
        for label in self.labels:
            basis = basis_of(label)
            if basis not in seen:
                seen.append(basis)
        return seen

    def indices_by_basis(self) -> Dict[str, List[int]]:
        grouped: Dict[str, List[int]] = {}
        for index, label in enumerate(self.labels):
            grouped.setdefault(basis_of(label), []).append(index)
        return grouped

    def to_json_dict(self) -> dict:
        return {
            "dim": self.dim,
            "labels": list(self.labels),
            "entries": [matrix_to_json(effect.entries) for effect in self.effects],
        }

    @classmethod
    def from_json_dict(cls, payload: Mapping) -> "Povm":
        matrices = [matrix_from_json(entries) for entries in payload["entries"]]
        povm = cls.from_matrices(matrices, payload["labels"])
        if "dim" in payload and int(payload["dim"]) != povm.dim:
            raise ValidationError(f"declared dim {payload['dim']} does not match effects ({povm.dim})")
        return povm


@dataclass(frozen=True, eq=False)
class KrausChannel:
    """Operator-sum channel ρ ↦ Σ K ρ K†."""

    kraus_ops: Tuple[np.ndarray, ...]

    def __post_init__(self):
        ops = tuple(_as_matrix(op, "Kraus operator") for op in self.kraus_ops)
        if not ops:
            raise ChannelError("a channel needs at least one Kraus operator")
        for op in ops:
            _check_dims(op.shape[0], ops[0].shape[0], "Kraus channel")
        object.__setattr__(self, "kraus_ops", ops)

    @property
    def dim(self) -> int:
        return self.kraus_ops[0].shape[0]

    def completeness_deviation(self) -> float:
        total = sum(op.conj().T @ op for op in self.kraus_ops)
        return float(np.max(np.abs(total - np.eye(self.dim))))

    def is_trace_preserving(self) -> bool:
        return self.completeness_deviation() <= TOL.trace_preserving


def identity_channel(dim: int = 2) -> KrausChannel:
    return KrausChannel((np.eye(dim, dtype=complex),))


def unitary_channel(unitary: np.ndarray) -> KrausChannel:
    return KrausChannel((np.asarray(unitary, dtype=complex),))


def is_unitary(matrix: np.ndarray, tol: float = TOL.unitary) -> bool:
    matrix = np.asarray(matrix, dtype=complex)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        return False
    return bool(np.max(np.abs(matrix.conj().T @ matrix - np.eye(matrix.shape[0]))) <= tol)


def born_probabilities(state: DensityMatrix, povm: Povm) -> np.ndarray:
    """Outcome probabilities Tr(ρ M_i), clamped to [0, 1]."""
    _check_dims(state.dim, povm.dim, "born_probabilities")
    raw = np.real(np.einsum("ij,kji->k", state.entries, povm.matrices))
    if np.any(raw < -TOL.probability) or np.any(raw > 1 + TOL.probability):
        raise ValidationError(f"Born probabilities out of range: {raw}")
    return np.clip(raw, 0.0, 1.0)


def _psd_sqrt(matrix: np.ndarray, what: str) -> np.ndarray:
    values, vectors = np.linalg.eigh(hermitize(matrix))
    if values[0] < -TOL.sqrt_clamp:
        raise ValidationError(f"{what} is not positive semidefinite (eigenvalue {values[0]:.3e})")
    values = np.clip(values, 0.0, None)
    return (vectors * np.sqrt(values)) @ vectors.conj().T


def fidelity(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Uhlmann fidelity [Tr √(√ρ σ √ρ)]² computed by eigendecomposition."""
    _check_dims(rho.dim, sigma.dim, "fidelity")
    _psd_sqrt(sigma.entries, "sigma")
    root = _psd_sqrt(rho.entries, "rho")
    kernel = hermitize(root @ sigma.entries @ root)
    eigenvalues = np.linalg.eigvalsh(kernel)
    if eigenvalues[0] < -TOL.sqrt_clamp:
        raise ValidationError(f"fidelity kernel is not PSD (eigenvalue {eigenvalues[0]:.3e})")
    eigenvalues = np.where(eigenvalues > _EIGEN_CUTOFF, eigenvalues, 0.0)
    value = float(np.sum(np.sqrt(eigenvalues)) ** 2)
    return float(np.clip(value, 0.0, 1.0))


def infidelity_pure(pure_target: DensityMatrix, estimate: DensityMatrix) -> float:
    """1 − Tr(ρσ) for a pure target, clamped to [0, 1]."""
    _check_dims(pure_target.dim, estimate.dim, "infidelity_pure")
    if pure_target.purity() < 1 - TOL.purity:
        raise ValidationError(f"target is not pure (purity {pure_target.purity():.10f})")
    overlap = float(np.real(np.trace(pure_target.entries @ estimate.entries)))
    return float(np.clip(1.0 - overlap, 0.0, 1.0))


def trace_distance(left: Union[np.ndarray, DensityMatrix, Effect], right: Union[np.ndarray, DensityMatrix, Effect]) -> float:
    """½‖A − B‖₁ for Hermitian operands."""
    a = left.entries if hasattr(left, "entries") else np.asarray(left, dtype=complex)
    b = right.entries if hasattr(right, "entries") else np.asarray(right, dtype=complex)
    _check_dims(a.shape[0], b.shape[0], "trace_distance")
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(hermitize(a - b)))))


def bloch_vector(state: DensityMatrix) -> np.ndarray:
    _check_dims(state.dim, 2, "bloch_vector")
    return np.array([float(np.real(np.trace(state.entries @ PAULIS[axis]))) for axis in PAULI_BASES])


def apply_channel(channel: KrausChannel, state: DensityMatrix) -> DensityMatrix:
    """Active picture: ρ̃ = Σ K ρ K†."""
    _check_dims(channel.dim, state.dim, "apply_channel")
    if not channel.is_trace_preserving():
        raise ChannelError(
            f"channel is not trace-preserving (deviation {channel.completeness_deviation():.3e})"
        )
    output = sum(op @ state.entries @ op.conj().T for op in channel.kraus_ops)
    return DensityMatrix(hermitize(output))


def pull_back_effect(channel: KrausChannel, effect: Effect) -> Effect:
    """Passive picture: M̃ = Σ K† M K, so that Tr(𝓔(ρ)M) = Tr(ρM̃)."""
    _check_dims(channel.dim, effect.dim, "pull_back_effect")
    output = sum(op.conj().T @ effect.entries @ op for op in channel.kraus_ops)
    return Effect(hermitize(output))


def pull_back_povm(channel: KrausChannel, povm: Povm) -> Povm:
    """Pull every effect of ``povm`` back through ``channel``."""
    return Povm(tuple(pull_back_effect(channel, effect) for effect in povm.effects), povm.labels)


def pauli_eigenstate(label: str) -> DensityMatrix:
    """Pauli eigenstate for a label such as ``"x0"`` (|+⟩) or ``"y1"`` (|−i⟩)."""
    try:
        return DensityMatrix.from_ket(_PAULI_KETS[label])
    except KeyError:
        raise ValidationError(f"unknown Pauli state label '{label}'") from None


def pauli6_povm() -> Povm:
    """The six effects ⅓|b⟩⟨b| over the σx, σy, σz eigenstates, ordered x0,x1,y0,y1,z0,z1."""
    effects = []
    for label in PAULI6_LABELS:
        ket = _PAULI_KETS[label]
        effects.append(Effect(hermitize(np.outer(ket, ket.conj()) / 3.0)))
    return Povm(tuple(effects), PAULI6_LABELS)


def projective_povm(basis: str = "z") -> Povm:
    """Two-outcome projective measurement of one Pauli basis."""
    labels = (f"{basis}0", f"{basis}1")
    return Povm.from_matrices([pauli_eigenstate(label).entries for label in labels], labels)


def rotation(axis: str, theta: float) -> np.ndarray:
    """R_α(θ) = exp(−iθσ_α/2)."""
    try:
        pauli = PAULIS[axis]
    except KeyError:
        raise ValidationError(f"unknown rotation axis '{axis}'") from None
    return np.cos(theta / 2) * IDENTITY_2 - 1j * np.sin(theta / 2) * pauli


def pauli_basis_rotation(basis: str) -> np.ndarray:
    """Unitary R with R|0_basis⟩ = |0_z⟩ up to a global phase."""
    if basis == "z":
        return IDENTITY_2.copy()
    if basis == "x":
        return rotation("y", -np.pi / 2)
    if basis == "y":
        return rotation("x", np.pi / 2)
    raise ValidationError(f"unknown measurement basis '{basis}'")


def zyz_angles(state: DensityMatrix) -> Tuple[float, float]:
    """Angles (θ1, θ2) with R_Z(θ2) R_Y(θ1)|0⟩ equal to the leading eigenvector of ``state``."""
    _check_dims(state.dim, 2, "zyz_angles")
    _, vectors = np.linalg.eigh(state.entries)
    ket = vectors[:, -1]
    theta1 = 2.0 * float(np.arccos(np.clip(abs(ket[0]), 0.0, 1.0)))
    if abs(ket[1]) < 1e-12:
        theta2 = 0.0
    elif abs(ket[0]) < 1e-12:
        theta2 = 0.0
    else:
        theta2 = float(np.angle(ket[1]) - np.angle(ket[0]))
    return theta1, theta2


def preparation_unitary(theta1: float, theta2: float) -> np.ndarray:
    """U_S = R_Z(θ2) R_Y(θ1), the ideal preparation from |0⟩."""
    return rotation("z", theta2) @ rotation("y", theta1)
