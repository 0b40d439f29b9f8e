"""Writing protocol and sweep results to an output directory."""

import logging
from pathlib import Path
from typing import List

from core.noise import STRENGTH_PARAMS
from pipeline.protocol import ProtocolResult, SweepResult
from utils.file_handler import save_csv, save_json, write_manifest

logger = logging.getLogger(__name__)


def _strength_of(result: ProtocolResult):
    noise = result.config.noise
    name = STRENGTH_PARAMS.get(noise.kind)
    return noise.params.get(name, "") if name else ""


def _calibration_artifacts(result: ProtocolResult, out: Path) -> List[str]:
    save_json(result.povm_estimate.to_json_dict(), str(out / "povm_estm.json"))
    save_json(result.coherence.to_json_dict(), str(out / "coherence_report.json"))
    save_json(result.qdt_data.to_json_dict(), str(out / "qdt_counts.json"))
    written = ["povm_estm.json", "coherence_report.json", "qdt_counts.json"]
    if result.true_povm is not None:
        save_json(result.true_povm.to_json_dict(), str(out / "povm_true.json"))
        written.append("povm_true.json")
    return written


def _tomography_counts(result: ProtocolResult, out: Path) -> List[str]:
    written = []
    for target in result.targets:
        payload = target.data.to_json_dict()
        if target.target is not None:
            payload["target"] = target.target.to_json_dict()
        name = f"qst_{target.index}.json"
        save_json(payload, str(out / name))
        written.append(name)
    return written


def write_protocol_outputs(result: ProtocolResult, output_dir: str, command: str = "run") -> List[str]:
    """
    Write curves, saturations, calibration artifacts, raw counts and the manifest.

    Args:
        result: Protocol result to persist
        output_dir: Destination directory (created when missing)
        command: Subcommand recorded in the manifest

    Returns:
        Names of the files written, manifest included
    """
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = _calibration_artifacts(result, out)
    save_csv(result.curves_table(), str(out / "curves.csv"))
    saturations = result.saturation_table()
    saturations.insert(0, "strength", _strength_of(result))
    save_csv(saturations, str(out / "saturations.csv"))
    save_csv(result.estimate_table(), str(out / "estimate_infidelities.csv"))
    written += ["curves.csv", "saturations.csv", "estimate_infidelities.csv"]
    written += _tomography_counts(result, out)
    write_manifest(
        str(out), command, result.config.seed, written, result.config.canonical_json(),
        extra={"saturation_ratio": result.saturation_ratio},
    )
    logger.info("wrote %d files to %s", len(written) + 1, out)
    return written + ["manifest.json"]


def write_sweep_outputs(sweep: SweepResult, output_dir: str, command: str = "sweep") -> List[str]:
    """
    Write the sweep tables, the calibration artifacts of every point and the manifest.

    Args:
        sweep: Sweep result to persist
        output_dir: Destination directory (created when missing)
        command: Subcommand recorded in the manifest

    Returns:
        Names of the files written, manifest included
    """
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_csv(sweep.saturation_table(), str(out / "saturations.csv"))
    save_csv(sweep.curves_table(), str(out / "curves.csv"))
    save_csv(sweep.summary_table(), str(out / "summary.csv"))
    written = ["saturations.csv", "curves.csv", "summary.csv"]
    for position, result in enumerate(sweep.results):
        name = f"povm_estm_{position}.json"
        save_json(result.povm_estimate.to_json_dict(), str(out / name))
        written.append(name)
    base = sweep.results[0].config
    write_manifest(
        str(out), command, base.seed, written, base.canonical_json(),
        extra={"sweep": {"kind": sweep.kind, "param": sweep.param, "values": list(sweep.strengths)}},
    )
    return written + ["manifest.json"]
