"""End-to-end readout-error-mitigated tomography: noise, calibration, dual reconstruction and sweeps."""

import asyncio
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
import pandas as pd

from config.settings import Settings
from core.errors import RemqstError, SchemaError, StageError, ValidationError
from core.noise import STRENGTH_PARAMS, NoiseModel, NoiseSpec
from core.quantum import DensityMatrix, Povm, fidelity, infidelity_pure, pauli_eigenstate
from core.sampler import SeededRng, haar_random_pure_state
from estimators.curves import InfidelityCurve, reconstruct_checkpoints
from estimators.detector_tomography import (
    CalibrationSet,
    CoherenceReport,
    QdtData,
    QdtFit,
    coherent_error_report,
    qdt_mle_fit,
    simulate_qdt_data,
)
from estimators.state_tomography import QstData, simulate_qst_data
from pipeline.experiment_config import ExperimentConfig
from utils.file_handler import load_json

logger = logging.getLogger(__name__)

STREAM_TARGETS = 0
STREAM_NOISE = 1
STREAM_QDT = 2
STREAM_QST = 3
STREAM_ESTIMATOR = 4
STREAM_BOOTSTRAP = 5

MITIGATED = "mitigated"
UNMITIGATED = "unmitigated"
BOOTSTRAP_RESAMPLES = 1000

T = TypeVar("T")


def haar_targets(seed: int, n_targets: int) -> List[DensityMatrix]:
    """Haar-random pure targets; target ``i`` depends only on ``seed`` and ``i``."""
    root = SeededRng(seed, STREAM_TARGETS)
    return [haar_random_pure_state(2, root.child(index)) for index in range(n_targets)]


def ideal_povm(bases: Sequence[str]) -> Povm:
    """Noiseless random-basis Pauli measurement over ``bases`` with equal basis weights."""
    matrices, labels = [], []
    for basis in bases:
        for outcome in (0, 1):
            label = f"{basis}{outcome}"
            matrices.append(pauli_eigenstate(label).entries / len(bases))
            labels.append(label)
    return Povm.from_matrices(matrices, labels)


@dataclass
class TargetResult:
    """Mitigated and standard reconstructions of one target from one data set."""

    index: int
    label: str
    target: Optional[DensityMatrix]
    data: QstData
    mitigated_state: DensityMatrix
    unmitigated_state: DensityMatrix
    mitigated: Optional[InfidelityCurve] = None
    unmitigated: Optional[InfidelityCurve] = None

    @property
    def estimate_infidelity(self) -> float:
        """1 − F between the mitigated and the standard estimate."""
        return 1.0 - fidelity(self.mitigated_state, self.unmitigated_state)

    def curve(self, series: str) -> Optional[InfidelityCurve]:
        return self.mitigated if series == MITIGATED else self.unmitigated


@dataclass
class ProtocolResult:
    """Outputs of one calibration plus the reconstructions of every target."""

    config: ExperimentConfig
    povm_estimate: Povm
    qdt_data: QdtData
    qdt_fit: QdtFit
    coherence: CoherenceReport
    targets: List[TargetResult]
    true_povm: Optional[Povm] = None

    def _scored(self) -> List[TargetResult]:
        return [t for t in self.targets if t.mitigated is not None]

    def saturations(self, series: str) -> np.ndarray:
        return np.array([t.curve(series).saturation for t in self._scored()])

    def mean_saturation(self, series: str) -> float:
        values = self.saturations(series)
        return float(values.mean()) if values.size else math.nan

    @property
    def saturation_ratio(self) -> float:
        """Mean unmitigated over mean mitigated saturation."""
        mitigated = self.mean_saturation(MITIGATED)
        if math.isnan(mitigated):
            return math.nan
        return self.mean_saturation(UNMITIGATED) / mitigated if mitigated > 0 else math.inf

    def mean_curve(self, series: str) -> InfidelityCurve:
        return InfidelityCurve.aggregate([t.curve(series) for t in self._scored()], series=series)

    def saturation_stderr(self, series: str) -> float:
        return bootstrap_stderr(self.saturations(series), self.config.seed)

    def saturation_table(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "target": [t.label for t in self._scored()],
                MITIGATED: self.saturations(MITIGATED),
                UNMITIGATED: self.saturations(UNMITIGATED),
            }
        )

    def curves_table(self) -> pd.DataFrame:
        rows = []
        scored = self._scored()
        for series in (MITIGATED, UNMITIGATED):
            for target in scored:
                curve = target.curve(series)
                rows.extend((series, target.label, n, m, s) for n, m, s in zip(curve.shots, curve.mean, curve.std))
            if scored:
                mean = self.mean_curve(series)
                rows.extend((series, "mean", n, m, s) for n, m, s in zip(mean.shots, mean.mean, mean.std))
        return pd.DataFrame(rows, columns=["series", "target", "shots", "mean_infidelity", "std_infidelity"])

    def estimate_table(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"target": [t.label for t in self.targets], "infidelity": [t.estimate_infidelity for t in self.targets]}
        )


def bootstrap_stderr(values: np.ndarray, seed: int) -> float:
    """Spread of the mean over resampled target sets."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return 0.0
    generator = SeededRng(seed, STREAM_BOOTSTRAP).generator
    picks = generator.integers(0, values.size, size=(BOOTSTRAP_RESAMPLES, values.size))
    return float(values[picks].mean(axis=1).std(ddof=1))


@dataclass
class SweepResult:
    """One protocol result per swept value, all on the same targets."""

    kind: str
    param: str
    strengths: Tuple[float, ...]
    results: List[ProtocolResult] = field(default_factory=list)

    def saturation_table(self) -> pd.DataFrame:
        frames = []
        for strength, result in zip(self.strengths, self.results):
            frame = result.saturation_table()
            frame.insert(0, "strength", strength)
            frames.append(frame)
        return pd.concat(frames, ignore_index=True)

    def curves_table(self) -> pd.DataFrame:
        frames = []
        for strength, result in zip(self.strengths, self.results):
            frame = result.curves_table()
            frame.insert(0, "strength", strength)
            frames.append(frame)
        return pd.concat(frames, ignore_index=True)

    def summary_table(self) -> pd.DataFrame:
        """Mean saturations, their bootstrap errors and the unmitigated/mitigated ratio per strength."""
        rows = []
        for strength, result in zip(self.strengths, self.results):
            rows.append(
                {
                    "strength": strength,
                    "mean_mitigated": result.mean_saturation(MITIGATED),
                    "stderr_mitigated": result.saturation_stderr(MITIGATED),
                    "mean_unmitigated": result.mean_saturation(UNMITIGATED),
                    "stderr_unmitigated": result.saturation_stderr(UNMITIGATED),
                    "ratio": result.saturation_ratio,
                }
            )
        return pd.DataFrame(rows)

    def mean_saturations(self, series: str) -> np.ndarray:
        return np.array([result.mean_saturation(series) for result in self.results])


class ProtocolRunner:
    """
    Runs the mitigation protocol with bounded concurrency.

    Calibration completes before any target is reconstructed; targets are
    then processed concurrently, each with its own random streams.
    """

    def __init__(self, config: ExperimentConfig, semaphore: Optional[asyncio.Semaphore] = None):
        """
        Initialize the runner.

        Args:
            config: Experiment configuration
            semaphore: Shared worker limit (a new one sized by the settings when omitted)
        """
        self.config = config
        self.max_workers = Settings.get_max_workers()
        self._semaphore = semaphore

    def _get_semaphore(self) -> asyncio.Semaphore:
        if self._semaphore is None:
            self._semaphore = asyncio.Semaphore(self.max_workers)
        return self._semaphore

    async def _stage(self, stage: str, func: Callable[..., T], *args) -> T:
        async with self._get_semaphore():
            try:
                return await asyncio.to_thread(func, *args)
            except StageError:
                raise
            except Exception as exc:
                raise StageError(stage, exc) from exc

    def _build_device(self) -> Tuple[NoiseModel, Povm]:
        device = NoiseModel(self.config.noise, SeededRng(self.config.seed, STREAM_NOISE), self.config.readout_only)
        return device, device.noisy_povm()

    def _simulate_calibration(self, device: NoiseModel, true_povm: Povm) -> QdtData:
        calibration = CalibrationSet.pauli()
        prepared = device.calibration_states(calibration.labels)
        return simulate_qdt_data(prepared, calibration.labels, true_povm,
                                 self.config.qdt_shots_per_state_per_basis, SeededRng(self.config.seed, STREAM_QDT))

    def _calibrate(self, data: QdtData, calibration: CalibrationSet) -> Tuple[QdtFit, CoherenceReport]:
        fit = qdt_mle_fit(data, calibration, joint=self.config.qdt_joint)
        report = coherent_error_report(fit.povm, threshold=self.config.coherence_threshold)
        return fit, report

    def _dual_reconstruction(
        self, index: int, label: str, target: Optional[DensityMatrix], data: QstData, povm_estimate: Povm
    ) -> TargetResult:
        config = self.config
        streams = SeededRng(config.seed, STREAM_ESTIMATOR, (index,))
        shots, mitigated = reconstruct_checkpoints(povm_estimate, data, config.estimator, rng=streams.child(0),
                                                   n_particles=config.n_particles)
        _, standard = reconstruct_checkpoints(ideal_povm(data.bases), data, config.estimator, rng=streams.child(1),
                                              n_particles=config.n_particles)
        result = TargetResult(index, label, target, data, mitigated[-1], standard[-1])
        if target is not None:
            zeros = np.zeros(len(shots))
            result.mitigated = InfidelityCurve(
                shots, np.array([infidelity_pure(target, s) for s in mitigated]), zeros, series=MITIGATED
            ).with_fit()
            result.unmitigated = InfidelityCurve(
                shots, np.array([infidelity_pure(target, s) for s in standard]), zeros, series=UNMITIGATED
            ).with_fit()
        return result

    def _simulate_target(
        self, index: int, target: DensityMatrix, device: NoiseModel, true_povm: Povm, povm_estimate: Povm
    ) -> TargetResult:
        config = self.config
        label = f"haar_{index}"
        data = simulate_qst_data(device.prepare(target), true_povm, config.qst_shots_per_basis,
                                 SeededRng(config.seed, STREAM_QST).child(index), config.checkpoints, label)
        return self._dual_reconstruction(index, label, target, data, povm_estimate)

    async def _reconstruct_all(self, jobs: List[Tuple[Callable[..., TargetResult], tuple]]) -> List[TargetResult]:
        total = len(jobs)
        completed = {"count": 0}
        lock = asyncio.Lock()

        async def process_single(index: int, func: Callable[..., TargetResult], args: tuple) -> Tuple[int, TargetResult]:
            result = await self._stage("qst", func, *args)
            async with lock:
                completed["count"] += 1
                logger.info("Processed %d/%d targets", completed["count"], total)
            return index, result

        results = await asyncio.gather(
            *(process_single(i, func, args) for i, (func, args) in enumerate(jobs)), return_exceptions=True
        )
        failures = [r for r in results if isinstance(r, BaseException)]
        if failures:
            raise failures[0] if isinstance(failures[0], StageError) else StageError("qst", failures[0])
        return [result for _, result in sorted(results, key=lambda item: item[0])]

    async def run(self) -> ProtocolResult:
        """Simulate the device, calibrate it and reconstruct every target twice."""
        config = self.config
        logger.info("protocol: noise=%s, %d targets, estimator=%s", config.noise.kind, config.n_targets, config.estimator)
        device, true_povm = await self._stage("noise", self._build_device)
        qdt_data = await self._stage("qdt", self._simulate_calibration, device, true_povm)
        fit, report = await self._stage("qdt", self._calibrate, qdt_data, CalibrationSet.pauli())
        targets = haar_targets(config.seed, config.n_targets)
        jobs = [(self._simulate_target, (i, target, device, true_povm, fit.povm)) for i, target in enumerate(targets)]
        reconstructed = await self._reconstruct_all(jobs)
        result = ProtocolResult(config, fit.povm, qdt_data, fit, report, reconstructed, true_povm)
        logger.info("mean saturation: mitigated %.3e, unmitigated %.3e (ratio %.2f)",
                    result.mean_saturation(MITIGATED), result.mean_saturation(UNMITIGATED), result.saturation_ratio)
        return result

    async def ingest(self, qdt_data: QdtData, experiments: Sequence[Tuple[str, Optional[DensityMatrix], QstData]]) -> ProtocolResult:
        """Calibrate on recorded counts and reconstruct recorded tomography data."""
        try:
            calibration = CalibrationSet.pauli(qdt_data.states)
        except ValidationError as exc:
            raise StageError("qdt", exc) from exc
        fit, report = await self._stage("qdt", self._calibrate, qdt_data, calibration)
        jobs = [(self._dual_reconstruction, (i, label, target, data, fit.povm))
                for i, (label, target, data) in enumerate(experiments)]
        reconstructed = await self._reconstruct_all(jobs)
        return ProtocolResult(self.config, fit.povm, qdt_data, fit, report, reconstructed)


def _sweep_specs(kind: str, strengths: Sequence[float], config: ExperimentConfig, param: Optional[str]) -> List[NoiseSpec]:
    base = config.noise if config.noise.kind == kind else None
    name = param or STRENGTH_PARAMS.get(kind)
    if name is None:
        raise ValidationError(f"noise kind '{kind}' cannot be swept without naming a parameter")
    if base is not None:
        return [base.with_strength(value, name) for value in strengths]
    return [NoiseSpec(kind, {name: value}) for value in strengths]


async def _run_many(configs: Sequence[ExperimentConfig]) -> List[ProtocolResult]:
    semaphore = asyncio.Semaphore(Settings.get_max_workers())
    results = await asyncio.gather(*(ProtocolRunner(c, semaphore).run() for c in configs), return_exceptions=True)
    for result in results:
        if isinstance(result, BaseException):
            raise result if isinstance(result, RemqstError) else StageError("sweep", result)
    return list(results)


def run_protocol(config: ExperimentConfig) -> ProtocolResult:
    """Run the full protocol for one configuration."""
    return asyncio.run(ProtocolRunner(config).run())


def noise_sweep(
    kind: str, strengths: Sequence[float], config: ExperimentConfig, param: Optional[str] = None
) -> SweepResult:
    """Run the protocol at every strength of one noise mechanism on a shared target set."""
    if not strengths:
        raise ValidationError("a noise sweep needs at least one strength")
    specs = _sweep_specs(kind, strengths, config, param)
    configs = [config.with_overrides(noise=spec) for spec in specs]
    results = asyncio.run(_run_many(configs))
    sweep = SweepResult(kind, param or STRENGTH_PARAMS[kind], tuple(strengths), results)
    for strength, result in zip(strengths, results):
        logger.info("%s=%s: unmitigated/mitigated ratio %.2f", sweep.param, strength, result.saturation_ratio)
    return sweep


def calibration_sweep(qdt_budgets: Sequence[float], config: ExperimentConfig) -> SweepResult:
    """Vary only the calibration budget; noise, targets and tomography data stay fixed.

    Budgets count every calibration shot: a budget of 1000 spends about 56
    shots on each of the six calibration states in each of the three bases.
    """
    if not qdt_budgets:
        raise ValidationError("a calibration sweep needs at least one budget")
    configs = [config.with_total_calibration_shots(budget) for budget in qdt_budgets]
    results = asyncio.run(_run_many(configs))
    return SweepResult("calibration", "qdt_total_shots", tuple(qdt_budgets), results)


def load_experiment(qdt_file: str, qst_files: Sequence[str]) -> Tuple[QdtData, List[Tuple[str, Optional[DensityMatrix], QstData]]]:
    """Read and cross-check recorded calibration and tomography counts."""
    qdt_data = QdtData.from_json_dict(load_json(qdt_file), source=qdt_file)
    try:
        CalibrationSet.pauli(qdt_data.states)
    except ValidationError as exc:
        raise SchemaError(f"unknown calibration state label ({exc})", field="states", source=qdt_file) from exc
    experiments = []
    for index, path in enumerate(qst_files):
        payload = load_json(path)
        data = QstData.from_json_dict(payload, source=path)
        for basis in qdt_data.bases:
            if basis not in data.bases:
                raise SchemaError(f"missing basis '{basis}'", field="bases", source=path)
        if tuple(data.bases) != tuple(qdt_data.bases):
            raise SchemaError(f"bases {list(data.bases)} do not match calibration bases {list(qdt_data.bases)}",
                              field="bases", source=path)
        target = None
        if payload.get("target") is not None:
            try:
                target = DensityMatrix.from_json_dict(payload["target"])
            except (ValidationError, KeyError, TypeError) as exc:
                raise SchemaError(f"invalid target state ({exc})", field="target", source=path) from exc
        experiments.append((data.target_label or f"experiment_{index}", target, data))
    return qdt_data, experiments


def ingest_experiment(qdt_file: str, qst_files: Sequence[str], config: Optional[ExperimentConfig] = None) -> ProtocolResult:
    """Run calibration and dual reconstruction on recorded counts instead of simulated ones."""
    qdt_data, experiments = load_experiment(qdt_file, qst_files)
    if not experiments:
        raise ValidationError("ingestion needs at least one tomography file")
    config = config or ExperimentConfig()
    CalibrationSet.pauli(qdt_data.states).require_informationally_complete()
    return asyncio.run(ProtocolRunner(config).ingest(qdt_data, experiments))
