"""Noise channels, the IQ-plane readout model and state-preparation errors.

The constructors return :class:`KrausChannel` instances that are completely
positive by construction and trace-preserving to machine precision.
:class:`NoiseModel` turns a :class:`NoiseSpec` into a simulated device: a noisy
preparation map for calibration and target states and a noisy POVM for the
readout.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import constants
from scipy.special import expit
from scipy.stats import norm
from sklearn.discriminant_analysis import LinearDiscriminantAnalysis
from sklearn.neighbors import NearestCentroid

from config.settings import TOL
from core.errors import CalibrationError, ChannelError, ConfigError, DimensionMismatchError, ValidationError
from core.quantum import (
    IDENTITY_2,
    PAULI6_LABELS,
    PAULI_BASES,
    PAULI_X,
    PAULI_Y,
    PAULI_Z,
    DensityMatrix,
    Effect,
    KrausChannel,
    Povm,
    apply_channel,
    hermitize,
    identity_channel,
    pauli_eigenstate,
    is_unitary,
    pauli_basis_rotation,
    preparation_unitary,
    pull_back_effect,
    rotation,
    unitary_channel,
    zyz_angles,
)
from core.sampler import SeededRng

logger = logging.getLogger(__name__)

# h/k in K·s; multiplies a frequency in Hz
PLANCK_OVER_BOLTZMANN = constants.h / constants.k

DEFAULT_QUBIT_FREQ_HZ = 6.3e9
DEFAULT_PI_PULSE_S = 200e-9
DEFAULT_IQ_CALIBRATION_SHOTS = 10_000

NOISE_KINDS = (
    "identity",
    "depolarizing",
    "amplitude_damping",
    "dephasing",
    "detuning",
    "thermal",
    "iq_readout",
    "composite",
)

# parameter swept by default for each kind
STRENGTH_PARAMS: Dict[str, str] = {
    "depolarizing": "p",
    "amplitude_damping": "gamma",
    "dephasing": "lam",
    "detuning": "detuning_hz",
    "thermal": "temperature_k",
    "iq_readout": "separation",
}

CLASSIFIERS = ("nearest_centroid", "lda")


# ---------------------------------------------------------------------------
# Channels
# ---------------------------------------------------------------------------


def _check_probability(value: float, name: str) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ChannelError(f"{name} must lie in [0, 1], got {value}")
    return value


def depolarizing_channel(p: float) -> KrausChannel:
    """ρ ↦ (p/2)𝟙 + (1 − p)ρ."""
    p = _check_probability(p, "p")
    return KrausChannel(
        (
            math.sqrt(1.0 - 3.0 * p / 4.0) * IDENTITY_2,
            math.sqrt(p / 4.0) * PAULI_X,
            math.sqrt(p / 4.0) * PAULI_Y,
            math.sqrt(p / 4.0) * PAULI_Z,
        )
    )


def amplitude_damping_channel(gamma: float) -> KrausChannel:
    gamma = _check_probability(gamma, "gamma")
    k0 = np.array([[1.0, 0.0], [0.0, math.sqrt(1.0 - gamma)]], dtype=complex)
    k1 = np.array([[0.0, math.sqrt(gamma)], [0.0, 0.0]], dtype=complex)
    return KrausChannel((k0, k1))


def dephasing_channel(lam: float) -> KrausChannel:
    """Pure dephasing that multiplies the coherences by ``lam``."""
    lam = _check_probability(lam, "lam")
    return KrausChannel(
        (
            math.sqrt((1.0 + lam) / 2.0) * IDENTITY_2,
            math.sqrt((1.0 - lam) / 2.0) * PAULI_Z,
        )
    )


def compose_channels(first: KrausChannel, second: KrausChannel) -> KrausChannel:
    """Channel applying ``first`` and then ``second``: Kraus set {K2_j K1_i}."""
    if first.dim != second.dim:
        raise DimensionMismatchError(f"compose_channels: dimension {first.dim} does not match {second.dim}")
    return KrausChannel(tuple(k2 @ k1 for k2 in second.kraus_ops for k1 in first.kraus_ops))


def relaxation_channel(pulse_duration: float, t1: float, t2: float) -> KrausChannel:
    """Energy relaxation (T1) followed by the pure dephasing that completes T2 decay."""
    if t1 <= 0 or t2 <= 0:
        raise ChannelError(f"T1 and T2 must be positive, got T1={t1}, T2={t2}")
    if pulse_duration < 0:
        raise ChannelError(f"pulse duration must be non-negative, got {pulse_duration}")
    pure_dephasing_rate = 1.0 / t2 - 1.0 / (2.0 * t1)
    if pure_dephasing_rate < -1e-12 / t1:
        raise ChannelError(f"unphysical coherence times: T2={t2} exceeds 2·T1={2 * t1}")
    gamma = -math.expm1(-pulse_duration / t1)
    lam = math.exp(-pulse_duration * max(pure_dephasing_rate, 0.0))
    return compose_channels(amplitude_damping_channel(gamma), dephasing_channel(lam))


def accumulated_phase_cycles(detuning_hz: float, duration_s: float) -> float:
    """Phase accumulated by a detuned qubit, in cycles."""
    return float(detuning_hz) * float(duration_s)


def detuning_error(detuning_hz: float, duration_s: float) -> np.ndarray:
    """R_Z(2π · detuning · duration)."""
    if duration_s < 0:
        raise ChannelError(f"duration must be non-negative, got {duration_s}")
    return rotation("z", 2.0 * math.pi * accumulated_phase_cycles(detuning_hz, duration_s))


def thermal_population(temperature_k: float, qubit_freq_hz: float = DEFAULT_QUBIT_FREQ_HZ) -> float:
    """Excited-state population e^(−hf/kT) / (1 + e^(−hf/kT))."""
    if temperature_k < 0:
        raise ChannelError(f"temperature must be non-negative, got {temperature_k}")
    if qubit_freq_hz <= 0:
        raise ChannelError(f"qubit frequency must be positive, got {qubit_freq_hz}")
    if temperature_k == 0:
        return 0.0
    if math.isinf(temperature_k):
        return 0.5
    ratio = PLANCK_OVER_BOLTZMANN * qubit_freq_hz / temperature_k
    return float(expit(-ratio))


def thermal_channel(temperature_k: float, qubit_freq_hz: float = DEFAULT_QUBIT_FREQ_HZ) -> KrausChannel:
    """Full thermalization onto diag(1 − p_e, p_e)."""
    excited = thermal_population(temperature_k, qubit_freq_hz)
    ops = []
    for j in range(2):
        ground = np.zeros((2, 2), dtype=complex)
        ground[0, j] = math.sqrt(1.0 - excited)
        raised = np.zeros((2, 2), dtype=complex)
        raised[1, j] = math.sqrt(excited)
        ops.extend((ground, raised))
    return KrausChannel(tuple(ops))


# ---------------------------------------------------------------------------
# State preparation errors
# ---------------------------------------------------------------------------


def split_preparation_error(u_noisy: np.ndarray, u_ideal: np.ndarray) -> np.ndarray:
    """Error unitary U_error = Ũ_S U_S† so that Ũ_S = U_error U_S."""
    u_noisy = np.asarray(u_noisy, dtype=complex)
    u_ideal = np.asarray(u_ideal, dtype=complex)
    if u_noisy.shape != u_ideal.shape:
        raise DimensionMismatchError(f"unitary shapes differ: {u_noisy.shape} vs {u_ideal.shape}")
    if not is_unitary(u_noisy) or not is_unitary(u_ideal):
        raise ValidationError("split_preparation_error requires unitary inputs")
    return u_noisy @ u_ideal.conj().T


def decomposed_error_unitary(theta2: float, delta1: float, delta2: float) -> np.ndarray:
    """R_Z(Δ2) R_Z(θ2) R_Y(Δ1) R_Z†(θ2): the error unitary of a ZYZ preparation with angle errors."""
    return rotation("z", delta2) @ rotation("z", theta2) @ rotation("y", delta1) @ rotation("z", theta2).conj().T


def preparation_channel(
    ideal_unitary: np.ndarray,
    error_ensemble: Sequence[Tuple[float, np.ndarray]],
) -> KrausChannel:
    """𝓔_S(ρ) = Σ p_i (U_error,i U_S) ρ (U_error,i U_S)†."""
    ideal_unitary = np.asarray(ideal_unitary, dtype=complex)
    if not is_unitary(ideal_unitary):
        raise ChannelError("ideal preparation is not unitary")
    if not error_ensemble:
        raise ChannelError("error ensemble is empty")
    weights = np.array([float(p) for p, _ in error_ensemble])
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > TOL.probability_sum:
        raise ChannelError(f"ensemble probabilities must be non-negative and sum to 1, got {weights}")
    ops = []
    for weight, error in error_ensemble:
        error = np.asarray(error, dtype=complex)
        if not is_unitary(error):
            raise ChannelError("ensemble member is not unitary")
        if weight > 0:
            ops.append(math.sqrt(weight) * error @ ideal_unitary)
    return KrausChannel(tuple(ops))


# ---------------------------------------------------------------------------
# IQ-plane readout
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IqDiscriminator:
    """Linear decision rule: report 1 when weights·(I, Q) + offset > 0."""

    weights: Tuple[float, float]
    offset: float

    def predict(self, points: np.ndarray) -> np.ndarray:
        scores = np.atleast_2d(points) @ np.asarray(self.weights) + self.offset
        return (scores > 0).astype(int)


@dataclass(frozen=True)
class IqModel:
    """Two Gaussian blobs of common width ``sigma`` and a decision rule."""

    centroid_0: Tuple[float, float]
    centroid_1: Tuple[float, float]
    sigma: float
    classifier: Optional[IqDiscriminator] = None

    def __post_init__(self):
        if self.sigma < 0 or not math.isfinite(self.sigma):
            raise ValidationError(f"IQ blob width must be finite and non-negative, got {self.sigma}")
        object.__setattr__(self, "centroid_0", tuple(float(v) for v in self.centroid_0))
        object.__setattr__(self, "centroid_1", tuple(float(v) for v in self.centroid_1))

    @classmethod
    def from_separation(cls, separation: float, sigma: float = 1.0) -> "IqModel":
        """Blobs ``separation`` widths apart along I; infinite separation means noiseless readout."""
        if separation < 0:
            raise ValidationError(f"separation must be non-negative, got {separation}")
        if math.isinf(separation):
            return cls((0.0, 0.0), (1.0, 0.0), 0.0)
        return cls((0.0, 0.0), (separation * sigma, 0.0), sigma)

    @property
    def separation(self) -> float:
        distance = float(np.linalg.norm(np.subtract(self.centroid_1, self.centroid_0)))
        return math.inf if self.sigma == 0 else distance / self.sigma

    def decision_rule(self) -> IqDiscriminator:
        """The trained classifier, or the bisector of the true centroids."""
        if self.classifier is not None:
            return self.classifier
        return _bisector(np.asarray(self.centroid_0), np.asarray(self.centroid_1))

    def with_classifier(self, classifier: IqDiscriminator) -> "IqModel":
        return IqModel(self.centroid_0, self.centroid_1, self.sigma, classifier)

    def assignment_matrix(self) -> np.ndarray:
        """Exact A[j, b] = P(report j | bit b) for the decision rule under Gaussian blobs."""
        rule = self.decision_rule()
        weights = np.asarray(rule.weights)
        norm_w = float(np.linalg.norm(weights))
        matrix = np.zeros((2, 2))
        for bit, centroid in enumerate((self.centroid_0, self.centroid_1)):
            score = float(weights @ np.asarray(centroid) + rule.offset)
            if self.sigma == 0 or norm_w == 0:
                report_one = 1.0 if score > 0 else 0.0
            else:
                report_one = float(norm.cdf(score / (self.sigma * norm_w)))
            matrix[1, bit] = report_one
            matrix[0, bit] = 1.0 - report_one
        return matrix


def _bisector(c0: np.ndarray, c1: np.ndarray) -> IqDiscriminator:
    weights = c1 - c0
    offset = -float(weights @ (c0 + c1)) / 2.0
    return IqDiscriminator((float(weights[0]), float(weights[1])), offset)


@dataclass(frozen=True, eq=False)
class IqCalibration:
    """Outcome of training a classifier on labeled IQ shots."""

    povm: Povm
    assignment: np.ndarray
    model: IqModel


def iq_generate(state_bit: int, model: IqModel, rng: SeededRng, size: Optional[int] = None) -> np.ndarray:
    """Gaussian (I, Q) sample(s) around the centroid of ``state_bit``."""
    if state_bit not in (0, 1):
        raise ValidationError(f"state bit must be 0 or 1, got {state_bit}")
    centroid = np.asarray(model.centroid_0 if state_bit == 0 else model.centroid_1)
    shape = (2,) if size is None else (int(size), 2)
    return centroid + model.sigma * rng.generator.standard_normal(shape)


def _fit_classifier(points: np.ndarray, bits: np.ndarray, kind: str) -> IqDiscriminator:
    if kind == "nearest_centroid":
        fitted = NearestCentroid().fit(points, bits)
        c0, c1 = fitted.centroids_[0], fitted.centroids_[1]
        if np.linalg.norm(c1 - c0) < TOL.centroid_separation:
            raise CalibrationError("degenerate IQ model: learned centroids closer than 1e-6")
        return _bisector(c0, c1)
    if kind == "lda":
        means = [points[bits == bit].mean(axis=0) for bit in (0, 1)]
        if np.linalg.norm(means[1] - means[0]) < TOL.centroid_separation:
            raise CalibrationError("degenerate IQ model: class means closer than 1e-6")
        fitted = LinearDiscriminantAnalysis(solver="svd").fit(points, bits)
        return IqDiscriminator((float(fitted.coef_[0][0]), float(fitted.coef_[0][1])), float(fitted.intercept_[0]))
    raise ConfigError(f"unknown IQ classifier '{kind}', expected one of {CLASSIFIERS}")


def iq_effective_povm(
    model: IqModel,
    n_calibration_shots: int,
    rng: SeededRng,
    classifier: str = "nearest_centroid",
) -> IqCalibration:
    """Train a classifier on labeled shots and return the diagonal readout POVM it implies."""
    if n_calibration_shots < 100:
        raise ValidationError(f"need at least 100 calibration shots, got {n_calibration_shots}")
    if model.sigma == 0 and np.linalg.norm(np.subtract(model.centroid_1, model.centroid_0)) < TOL.centroid_separation:
        raise CalibrationError("degenerate IQ model: centroids closer than 1e-6")
    points = np.vstack([iq_generate(bit, model, rng, size=n_calibration_shots) for bit in (0, 1)])
    bits = np.repeat([0, 1], n_calibration_shots)
    rule = _fit_classifier(points, bits, classifier)
    reported = rule.predict(points)
    assignment = np.zeros((2, 2))
    for bit in (0, 1):
        assignment[1, bit] = float(np.mean(reported[bits == bit]))
        assignment[0, bit] = 1.0 - assignment[1, bit]
    povm = Povm.from_matrices([np.diag(assignment[j]).astype(complex) for j in (0, 1)], ("z0", "z1"))
    logger.debug("IQ calibration at separation %.3f: assignment fidelity %.4f",
                 model.separation, 0.5 * (assignment[0, 0] + assignment[1, 1]))
    return IqCalibration(povm, assignment, model.with_classifier(rule))


# ---------------------------------------------------------------------------
# Noise specifications
# ---------------------------------------------------------------------------

ParamValue = Union[float, str]

_REQUIRED: Dict[str, Tuple[str, ...]] = {
    "identity": (),
    "depolarizing": ("p",),
    "amplitude_damping": (),
    "dephasing": ("lam",),
    "detuning": ("detuning_hz",),
    "thermal": ("temperature_k",),
    "iq_readout": ("separation",),
    "composite": (),
}

_DEFAULTS: Dict[str, Dict[str, ParamValue]] = {
    "detuning": {"duration_s": DEFAULT_PI_PULSE_S},
    "thermal": {"qubit_freq_hz": DEFAULT_QUBIT_FREQ_HZ, "jitter_rad": 0.0},
    "iq_readout": {"sigma": 1.0, "n_calibration_shots": DEFAULT_IQ_CALIBRATION_SHOTS, "classifier": "nearest_centroid"},
}


@dataclass(frozen=True)
class NoiseSpec:
    """A noise mechanism and its parameters; ``composite`` nests components in order."""

    kind: str
    params: Mapping[str, ParamValue] = field(default_factory=dict)
    components: Tuple["NoiseSpec", ...] = ()

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ConfigError(f"unknown noise kind '{self.kind}', expected one of {NOISE_KINDS}")
        merged = dict(_DEFAULTS.get(self.kind, {}))
        merged.update(self.params)
        object.__setattr__(self, "params", merged)
        object.__setattr__(self, "components", tuple(self.components))
        self._validate()

    def _validate(self) -> None:
        params = self.params
        missing = [name for name in _REQUIRED[self.kind] if name not in params]
        if missing:
            raise ConfigError(f"noise kind '{self.kind}' is missing parameters {missing}")
        if self.kind != "composite" and self.components:
            raise ConfigError(f"only composite noise may have components, not '{self.kind}'")
        try:
            if self.kind == "depolarizing":
                _check_probability(params["p"], "p")
            elif self.kind == "dephasing":
                _check_probability(params["lam"], "lam")
            elif self.kind == "amplitude_damping":
                if "gamma" in params:
                    _check_probability(params["gamma"], "gamma")
                elif {"duration_s", "t1_s"} <= set(params):
                    relaxation_channel(float(params["duration_s"]), float(params["t1_s"]),
                                       float(params.get("t2_s", 2 * float(params["t1_s"]))))
                else:
                    raise ConfigError("amplitude_damping needs 'gamma' or 'duration_s' and 't1_s'")
            elif self.kind == "detuning":
                if float(params["duration_s"]) < 0:
                    raise ConfigError("duration_s must be non-negative")
            elif self.kind == "thermal":
                thermal_population(float(params["temperature_k"]), float(params["qubit_freq_hz"]))
            elif self.kind == "iq_readout":
                if float(params["separation"]) < 0 or float(params["sigma"]) <= 0:
                    raise ConfigError("iq_readout needs separation ≥ 0 and sigma > 0")
                if int(params["n_calibration_shots"]) < 100:
                    raise ConfigError("iq_readout needs n_calibration_shots ≥ 100")
                if params["classifier"] not in CLASSIFIERS:
                    raise ConfigError(f"unknown IQ classifier '{params['classifier']}'")
        except ChannelError as exc:
            raise ConfigError(f"invalid {self.kind} parameters: {exc}") from exc
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid {self.kind} parameters: {exc}") from exc

    def flatten(self) -> List["NoiseSpec"]:
        """Leaf components in declaration order."""
        if self.kind == "composite":
            leaves: List[NoiseSpec] = []
            for component in self.components:
                leaves.extend(component.flatten())
            return leaves
        if self.kind == "identity":
            return []
        return [self]

    def with_strength(self, value: float, param: Optional[str] = None) -> "NoiseSpec":
        """Copy of this spec with its strength parameter replaced."""
        name = param or STRENGTH_PARAMS.get(self.kind)
        if name is None:
            raise ConfigError(f"noise kind '{self.kind}' has no default strength parameter")
        params = dict(self.params)
        params[name] = value
        return NoiseSpec(self.kind, params, self.components)

    def to_json_dict(self) -> dict:
        if self.kind == "composite":
            return {"kind": "composite", "components": [c.to_json_dict() for c in self.components]}
        params = {key: (value if not (isinstance(value, float) and math.isinf(value)) else "inf")
                  for key, value in self.params.items()}
        return {"kind": self.kind, "params": params}

    @classmethod
    def from_json_dict(cls, payload: Mapping) -> "NoiseSpec":
        if not isinstance(payload, Mapping) or "kind" not in payload:
            raise ConfigError("noise specification must be an object with a 'kind' field")
        kind = payload["kind"]
        if kind == "composite":
            components = payload.get("components", payload.get("params", {}).get("components", []))
            return cls("composite", {}, tuple(cls.from_json_dict(c) for c in components))
        params: Dict[str, ParamValue] = {}
        for key, value in dict(payload.get("params", {})).items():
            params[key] = value if key == "classifier" else float(value)
        return cls(kind, params)

    @classmethod
    def identity(cls) -> "NoiseSpec":
        return cls("identity")


# ---------------------------------------------------------------------------
# Simulated device
# ---------------------------------------------------------------------------


def _ground_state() -> DensityMatrix:
    return DensityMatrix(np.diag([1.0, 0.0]).astype(complex))


class NoiseModel:
    """A simulated noisy device built from a :class:`NoiseSpec`.

    Preparation errors scale with the rotation each state needs: the polar
    angle θ1 of its ZYZ decomposition sets the pulse length as a fraction of a
    π pulse. Basis changes for x/y readout are π/2 pulses; the z readout needs
    none. With ``readout_only`` every preparation-type mechanism is instead
    applied once, at full pulse length, to the readout.
    """

    def __init__(self, spec: NoiseSpec, rng: SeededRng, readout_only: bool = False):
        self.spec = spec
        self.readout_only = readout_only
        self.components = spec.flatten()
        self._assignments: Dict[int, np.ndarray] = {}
        for index, component in enumerate(self.components):
            if component.kind == "iq_readout":
                params = component.params
                model = IqModel.from_separation(float(params["separation"]), float(params["sigma"]))
                calibration = iq_effective_povm(model, int(params["n_calibration_shots"]), rng.child(index),
                                                classifier=str(params["classifier"]))
                self._assignments[index] = calibration.model.assignment_matrix()
        logger.debug("noise model: %s (readout_only=%s)", [c.kind for c in self.components], readout_only)

    @property
    def has_preparation_errors(self) -> bool:
        return not self.readout_only and any(c.kind in ("detuning", "thermal") or _is_relaxation(c)
                                             for c in self.components)

    # -- preparation -------------------------------------------------------

    def preparation_channel_for(self, target: DensityMatrix) -> KrausChannel:
        """Channel mapping |0⟩⟨0| to the noisy preparation of pure ``target``."""
        theta1, theta2 = zyz_angles(target)
        ideal = preparation_unitary(theta1, theta2)
        pulse_fraction = theta1 / math.pi
        ensemble: List[Tuple[float, float, float]] = [(1.0, 0.0, 0.0)]
        for component in self.components:
            if component.kind == "detuning":
                duration = float(component.params["duration_s"]) * pulse_fraction
                delta2 = 2.0 * math.pi * accumulated_phase_cycles(float(component.params["detuning_hz"]), duration)
                ensemble = [(p, d1, d2 + delta2) for p, d1, d2 in ensemble]
            elif component.kind == "thermal" and float(component.params["jitter_rad"]) > 0:
                jitter = float(component.params["jitter_rad"])
                ensemble = [(p / 4.0, d1 + s1 * jitter, d2 + s2 * jitter)
                            for p, d1, d2 in ensemble for s1 in (1, -1) for s2 in (1, -1)]
        errors = [(p, split_preparation_error(preparation_unitary(theta1 + d1, theta2 + d2), ideal))
                  for p, d1, d2 in ensemble]
        channel = preparation_channel(ideal, errors)
        for component in self.components:
            if _is_relaxation(component):
                channel = compose_channels(channel, _relaxation_for(component, pulse_fraction))
        return channel

    def prepare(self, target: DensityMatrix) -> DensityMatrix:
        """The state actually produced when the device is asked for pure ``target``."""
        if not self.has_preparation_errors:
            return target
        initial = _ground_state()
        for component in self.components:
            if component.kind == "thermal":
                initial = apply_channel(thermal_channel(float(component.params["temperature_k"]),
                                                        float(component.params["qubit_freq_hz"])), initial)
        return apply_channel(self.preparation_channel_for(target), initial)

    # -- readout -----------------------------------------------------------

    def _pulse_channel(self, basis: str) -> KrausChannel:
        channel = identity_channel(2)
        if basis == "z":
            return channel
        for component in self.components:
            if component.kind == "detuning":
                duration = float(component.params["duration_s"]) / 2.0
                channel = compose_channels(channel, unitary_channel(
                    detuning_error(float(component.params["detuning_hz"]), duration)))
            elif _is_relaxation(component):
                channel = compose_channels(channel, _relaxation_for(component, 0.5))
        return channel

    def _redirected_preparation_channel(self) -> KrausChannel:
        channel = identity_channel(2)
        for component in self.components:
            if component.kind == "detuning":
                channel = compose_channels(channel, unitary_channel(
                    detuning_error(float(component.params["detuning_hz"]), float(component.params["duration_s"]))))
            elif _is_relaxation(component):
                channel = compose_channels(channel, _relaxation_for(component, 1.0))
            elif component.kind == "thermal":
                excited = thermal_population(float(component.params["temperature_k"]),
                                             float(component.params["qubit_freq_hz"]))
                channel = compose_channels(channel, depolarizing_channel(2.0 * excited))
        return channel

    def _readout_channels(self) -> List[KrausChannel]:
        channels = []
        for component in self.components:
            if component.kind == "depolarizing":
                channels.append(depolarizing_channel(float(component.params["p"])))
            elif component.kind == "dephasing":
                channels.append(dephasing_channel(float(component.params["lam"])))
            elif component.kind == "amplitude_damping" and "gamma" in component.params:
                channels.append(amplitude_damping_channel(float(component.params["gamma"])))
        return channels

    def _assignment(self) -> np.ndarray:
        matrix = np.eye(2)
        for index in sorted(self._assignments):
            matrix = self._assignments[index] @ matrix
        return matrix

    def noisy_povm(self, bases: Sequence[str] = PAULI_BASES) -> Povm:
        """True device POVM for a uniformly random choice among ``bases``."""
        assignment = self._assignment()
        channels = self._readout_channels()
        weight = 1.0 / len(bases)
        matrices, labels = [], []
        for basis in bases:
            rotation_to_z = pauli_basis_rotation(basis)
            pre_channels = [self._pulse_channel(basis)]
            if self.readout_only:
                pre_channels.insert(0, self._redirected_preparation_channel())
            for outcome in (0, 1):
                effect = Effect(np.diag(assignment[outcome]).astype(complex))
                for channel in reversed(channels):
                    effect = pull_back_effect(channel, effect)
                effect = Effect(hermitize(rotation_to_z.conj().T @ effect.entries @ rotation_to_z))
                for channel in reversed(pre_channels):
                    effect = pull_back_effect(channel, effect)
                matrices.append(weight * effect.entries)
                labels.append(f"{basis}{outcome}")
        return Povm.from_matrices(matrices, labels)

    def calibration_states(self, labels: Sequence[str] = PAULI6_LABELS) -> List[DensityMatrix]:
        """Noisy preparations of the Pauli eigenstates named by ``labels``."""
        return [self.prepare(pauli_eigenstate(label)) for label in labels]


def _is_relaxation(component: NoiseSpec) -> bool:
    return component.kind == "amplitude_damping" and "gamma" not in component.params


def _relaxation_for(component: NoiseSpec, pulse_fraction: float) -> KrausChannel:
    params = component.params
    t1 = float(params["t1_s"])
    t2 = float(params.get("t2_s", 2.0 * t1))
    return relaxation_channel(float(params["duration_s"]) * pulse_fraction, t1, t2)
