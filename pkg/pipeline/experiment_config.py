"""Experiment configuration: budgets, noise, estimator and presets."""

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, Mapping, Optional, Tuple

from config.settings import Settings
from core.errors import ConfigError, SchemaError
from core.noise import NoiseSpec
from estimators.curves import ESTIMATORS

PRESETS: Dict[str, Dict[str, Any]] = {
    "desk": {"n_targets": 10, "qdt_shots_per_state_per_basis": 10_000, "qst_shots_per_basis": 10_000},
    "paper": {"n_targets": 25, "qdt_shots_per_state_per_basis": 80_000, "qst_shots_per_basis": 80_000},
}

N_CALIBRATION_STATES = 6
N_CALIBRATION_BASES = 3


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one protocol run.

    ``qdt_shots_per_state_per_basis`` may be ``math.inf``: the calibration
    then uses exact outcome probabilities. ``checkpoints`` are total shot
    counts over all bases; ``None`` selects 30 log-spaced points.
    """

    seed: int = field(default_factory=Settings.get_default_seed)
    n_targets: int = 25
    qdt_shots_per_state_per_basis: float = 80_000
    qst_shots_per_basis: int = 80_000
    noise: NoiseSpec = field(default_factory=NoiseSpec.identity)
    estimator: str = "mle"
    checkpoints: Optional[Tuple[int, ...]] = None
    readout_only: bool = False
    qdt_joint: bool = False
    n_particles: int = 1000
    coherence_threshold: float = 3e-2
    output_dir: str = field(default_factory=Settings.get_output_dir)

    def __post_init__(self):
        _require_int("seed", self.seed, minimum=0)
        _require_int("n_targets", self.n_targets, minimum=1)
        _require_int("qst_shots_per_basis", self.qst_shots_per_basis, minimum=1)
        _require_int("n_particles", self.n_particles, minimum=100)
        qdt = self.qdt_shots_per_state_per_basis
        if isinstance(qdt, bool) or not isinstance(qdt, (int, float)):
            raise ConfigError(f"qdt_shots_per_state_per_basis must be a number, got {qdt!r}")
        if not math.isinf(qdt):
            _require_int("qdt_shots_per_state_per_basis", qdt, minimum=1)
        elif qdt < 0:
            raise ConfigError("qdt_shots_per_state_per_basis must be positive")
        for name in ("seed", "n_targets", "qst_shots_per_basis", "n_particles"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"estimator must be one of {ESTIMATORS}, got {self.estimator!r}")
        if not isinstance(self.noise, NoiseSpec):
            raise ConfigError(f"noise must be a NoiseSpec, got {type(self.noise).__name__}")
        for name in ("readout_only", "qdt_joint"):
            if not isinstance(getattr(self, name), bool):
                raise ConfigError(f"{name} must be true or false")
        if not self.coherence_threshold > 0:
            raise ConfigError("coherence_threshold must be positive")
        if self.checkpoints is not None:
            points = tuple(int(p) for p in self.checkpoints)
            total = 3 * self.qst_shots_per_basis
            if not points or list(points) != sorted(set(points)) or points[0] < 0 or points[-1] > total:
                raise ConfigError(f"checkpoints must be strictly increasing shot totals within [0, {total}]")
            object.__setattr__(self, "checkpoints", points)

    @classmethod
    def preset(cls, name: str, **overrides: Any) -> "ExperimentConfig":
        if name not in PRESETS:
            raise ConfigError(f"unknown preset '{name}', expected one of {sorted(PRESETS)}")
        return cls().with_overrides(**{**PRESETS[name], **overrides})

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        """Copy with type-checked field replacements; ``None`` values are ignored."""
        known = {f.name for f in fields(self)}
        updates = {}
        for name, value in overrides.items():
            if name not in known:
                raise ConfigError(f"unknown configuration field '{name}'")
            if value is None:
                continue
            if name == "noise" and isinstance(value, Mapping):
                value = NoiseSpec.from_json_dict(value)
            updates[name] = value
        return replace(self, **updates)

    def with_rule_of_thumb_calibration(self) -> "ExperimentConfig":
        """Spend half of one tomography run's shots on calibration, spread over six states."""
        per_state = max(1, math.ceil(self.qst_shots_per_basis / (2 * N_CALIBRATION_STATES)))
        return replace(self, qdt_shots_per_state_per_basis=per_state)

    def with_total_calibration_shots(self, total: float) -> "ExperimentConfig":
        """Spread ``total`` calibration shots evenly over every calibration state and basis.

        Args:
            total: Shots for the whole detector calibration, or ``math.inf`` for exact probabilities

        Returns:
            Copy whose per-state, per-basis budget is ``total / 18`` rounded to whole shots (at least one)
        """
        if isinstance(total, bool) or not isinstance(total, (int, float)) or not total >= 1:
            raise ConfigError(f"a calibration budget must be at least one shot, got {total!r}")
        if math.isinf(total):
            return replace(self, qdt_shots_per_state_per_basis=math.inf)
        per_cell = max(1, round(total / (N_CALIBRATION_STATES * N_CALIBRATION_BASES)))
        return replace(self, qdt_shots_per_state_per_basis=per_cell)

    def to_json_dict(self) -> dict:
        payload = asdict(self)
        payload["noise"] = self.noise.to_json_dict()
        payload["checkpoints"] = list(self.checkpoints) if self.checkpoints is not None else None
        if math.isinf(self.qdt_shots_per_state_per_basis):
            payload["qdt_shots_per_state_per_basis"] = "inf"
        return payload

    def canonical_json(self) -> str:
        """Key-sorted compact JSON of the run-relevant fields (the output directory excluded)."""
        payload = self.to_json_dict()
        payload.pop("output_dir", None)
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json_dict(cls, payload: Mapping, source: Optional[str] = None) -> "ExperimentConfig":
        if not isinstance(payload, Mapping):
            raise SchemaError("configuration must be a JSON object", source=source)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(payload) - known - {"preset"})
        if unknown:
            raise SchemaError(f"unknown fields {unknown}", source=source)
        values = dict(payload)
        base = cls.preset(values.pop("preset")) if "preset" in values else cls()
        if values.get("qdt_shots_per_state_per_basis") in ("inf", "Infinity"):
            values["qdt_shots_per_state_per_basis"] = math.inf
        if "checkpoints" in values and values["checkpoints"] is not None:
            values["checkpoints"] = tuple(values["checkpoints"])
        if "noise" in values:
            try:
                values["noise"] = NoiseSpec.from_json_dict(values["noise"])
            except ConfigError as exc:
                raise SchemaError(str(exc), field="noise", source=source) from exc
        try:
            return base.with_overrides(**values)
        except ConfigError as exc:
            if isinstance(exc, SchemaError):
                raise
            raise SchemaError(str(exc), source=source) from exc


def _require_int(name: str, value: Any, minimum: int) -> None:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{name} must be at least {minimum}, got {value}")
