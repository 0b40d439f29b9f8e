"""Main entry point for the readout-error-mitigated tomography toolkit."""

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import pandas as pd

from config.settings import Settings
from core.errors import ConfigError, ConvergenceError, RemqstError, StageError
from core.quantum import DensityMatrix, Povm, infidelity_pure
from core.sampler import SeededRng
from estimators.curves import InfidelityCurve, reconstruct_checkpoints
from estimators.detector_tomography import CalibrationSet, QdtData, coherent_error_report, qdt_mle_fit
from estimators.state_tomography import QstData
from pipeline.experiment_config import ExperimentConfig
from pipeline.outputs import write_protocol_outputs, write_sweep_outputs
from pipeline.protocol import (
    STREAM_ESTIMATOR,
    calibration_sweep,
    ideal_povm,
    ingest_experiment,
    noise_sweep,
    run_protocol,
)
from utils.file_handler import (
    get_summary_stats,
    load_json,
    print_summary_stats,
    save_csv,
    save_json,
    write_manifest,
)
from utils.plotting import plot_curves, plot_povm_heatmap

logger = logging.getLogger("remqst")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2


def _parse_number(text: str) -> float:
    value = float(text)
    return value if math.isinf(value) or value != int(value) else int(value)


def _parse_list(text: str) -> List[float]:
    try:
        values = [_parse_number(item) for item in text.split(",") if item.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected a comma-separated list of numbers, got '{text}'") from exc
    if not values:
        raise ConfigError("the list of values is empty")
    return values


def _parse_noise_params(pairs: Optional[Sequence[str]]) -> dict:
    params = {}
    for pair in pairs or ():
        name, sep, value = pair.partition("=")
        if not sep:
            raise ConfigError(f"noise parameter '{pair}' must look like name=value")
        try:
            params[name.strip()] = _parse_number(value)
        except ValueError:
            params[name.strip()] = value.strip()
    return params


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    """
    Combine the config file, the preset and the command-line overrides.

    Args:
        args: Parsed command-line arguments

    Returns:
        Validated experiment configuration
    """
    if getattr(args, "config", None):
        config = ExperimentConfig.from_json_dict(load_json(args.config), source=args.config)
        if args.preset:
            logger.warning("--preset is ignored when --config is given")
    elif getattr(args, "preset", None):
        config = ExperimentConfig.preset(args.preset)
    else:
        config = ExperimentConfig()

    noise = None
    if getattr(args, "noise", None) or getattr(args, "noise_param", None):
        kind = args.noise or config.noise.kind
        params = dict(config.noise.params) if kind == config.noise.kind else {}
        params.update(_parse_noise_params(args.noise_param))
        noise = {"kind": kind, "params": params}

    qdt_shots = getattr(args, "qdt_shots", None)
    return config.with_overrides(
        seed=args.seed,
        estimator=getattr(args, "estimator", None),
        readout_only=True if getattr(args, "readout_only", False) else None,
        qdt_shots_per_state_per_basis=_parse_number(qdt_shots) if qdt_shots is not None else None,
        qst_shots_per_basis=getattr(args, "qst_shots", None),
        n_targets=getattr(args, "targets", None),
        noise=noise,
        output_dir=args.out,
    )


def _print_saturations(saturations: pd.DataFrame) -> None:
    if saturations.empty:
        print("No target states were known; only estimates were written.")
        return
    print_summary_stats(get_summary_stats(saturations))


def cmd_run(args: argparse.Namespace) -> int:
    config = build_config(args)
    print(f"Running protocol: noise={config.noise.kind}, {config.n_targets} targets, estimator={config.estimator}")
    print(f"Using parallel processing with max {Settings.get_max_workers()} workers\n")
    result = run_protocol(config)
    written = write_protocol_outputs(result, config.output_dir, command="run")
    print(f"Wrote {len(written)} files to {config.output_dir}")
    _print_saturations(result.saturation_table())
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    config = build_config(args)
    strengths = _parse_list(args.strengths)
    print(f"Sweeping {args.kind} over {strengths}")
    sweep = noise_sweep(args.kind, strengths, config, param=args.param)
    write_sweep_outputs(sweep, config.output_dir, command="sweep")
    print(f"Results saved to: {config.output_dir}")
    _print_saturations(sweep.saturation_table())
    return EXIT_OK


def cmd_calibration_sweep(args: argparse.Namespace) -> int:
    config = build_config(args)
    budgets = _parse_list(args.budgets)
    print(f"Sweeping calibration budgets {budgets} under noise={config.noise.kind}")
    sweep = calibration_sweep(budgets, config)
    write_sweep_outputs(sweep, config.output_dir, command="calibration-sweep")
    print(f"Results saved to: {config.output_dir}")
    _print_saturations(sweep.saturation_table())
    return EXIT_OK


def cmd_qdt(args: argparse.Namespace) -> int:
    out = Path(args.out or Settings.get_output_dir())
    data = QdtData.from_json_dict(load_json(args.counts), source=args.counts)
    calibration = CalibrationSet.pauli(data.states)
    fit = qdt_mle_fit(data, calibration, joint=args.joint)
    report = coherent_error_report(fit.povm, threshold=args.threshold)
    save_json(fit.povm.to_json_dict(), str(out / "povm_estm.json"))
    save_json(report.to_json_dict(), str(out / "coherence_report.json"))
    outputs = ["povm_estm.json", "coherence_report.json"]
    write_manifest(str(out), "qdt", None, outputs,
                   extra={"inputs": [args.counts], "joint": args.joint, "iterations": fit.iterations})
    print(f"Reconstructed {len(fit.povm)} effects (max off-diagonal {report.max_off_diagonal:.4f})")
    return EXIT_OK


def cmd_qst(args: argparse.Namespace) -> int:
    out = Path(args.out or Settings.get_output_dir())
    payload = load_json(args.counts)
    data = QstData.from_json_dict(payload, source=args.counts)
    povm = Povm.from_json_dict(load_json(args.povm)) if args.povm else ideal_povm(data.bases)
    seed = args.seed if args.seed is not None else Settings.get_default_seed()
    shots, states = reconstruct_checkpoints(povm, data, args.estimator, rng=SeededRng(seed, STREAM_ESTIMATOR))
    save_json(states[-1].to_json_dict(), str(out / "state.json"))
    outputs = ["state.json"]
    if payload.get("target") is not None:
        target = DensityMatrix.from_json_dict(payload["target"])
        values = [infidelity_pure(target, state) for state in states]
        curve = InfidelityCurve(shots, values, [0.0] * len(shots), series="mitigated" if args.povm else "unmitigated")
        save_csv(pd.DataFrame({"series": curve.series, "target": data.target_label or "target", "shots": curve.shots,
                               "mean_infidelity": curve.mean, "std_infidelity": curve.std}),
                 str(out / "curves.csv"))
        outputs.append("curves.csv")
        print(f"Final infidelity: {curve.saturation:.4e}")
    write_manifest(str(out), "qst", seed, outputs,
                   extra={"inputs": [args.counts] + ([args.povm] if args.povm else []), "estimator": args.estimator})
    print(f"Reconstructed state written to {out / 'state.json'}")
    return EXIT_OK


def cmd_ingest(args: argparse.Namespace) -> int:
    config = build_config(args)
    result = ingest_experiment(args.qdt, args.qst, config)
    written = write_protocol_outputs(result, config.output_dir, command="ingest")
    print(f"Wrote {len(written)} files to {config.output_dir}")
    _print_saturations(result.saturation_table())
    return EXIT_OK


def cmd_coherence(args: argparse.Namespace) -> int:
    out = Path(args.out or Settings.get_output_dir())
    povm = Povm.from_json_dict(load_json(args.povm))
    report = coherent_error_report(povm, threshold=args.threshold)
    save_json(report.to_json_dict(), str(out / "coherence_report.json"))
    write_manifest(str(out), "coherence", None, ["coherence_report.json"], extra={"inputs": [args.povm]})
    verdict = "classical" if report.classical else "coherent"
    print(f"Readout errors look {verdict} (max off-diagonal {report.max_off_diagonal:.4f})")
    return EXIT_OK


def cmd_plot(args: argparse.Namespace) -> int:
    source = Path(args.input)
    target = args.output or str(source.with_suffix(".svg"))
    if source.suffix.lower() == ".csv":
        plot_curves(str(source), target)
    elif source.suffix.lower() == ".json":
        plot_povm_heatmap(str(source), target)
    else:
        raise ConfigError(f"cannot plot '{source}': expected a curves .csv or a POVM .json")
    output = Path(target)
    write_manifest(str(output.parent), "plot", None, [output.name], extra={"inputs": [str(source)]})
    print(f"Plot saved to: {target}")
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="Root random seed")
    parser.add_argument("--out", type=str, default=None, help="Output directory")


def _add_experiment(parser: argparse.ArgumentParser) -> None:
    _add_common(parser)
    parser.add_argument("--config", type=str, default=None, help="Experiment configuration JSON")
    parser.add_argument("--preset", choices=["desk", "paper"], default=None, help="Named budget preset")
    parser.add_argument("--estimator", choices=["mle", "bme"], default=None, help="State estimator")
    parser.add_argument("--readout-only", action="store_true", help="Confine preparation-type noise to the readout")
    parser.add_argument("--qdt-shots", type=str, default=None, help="Calibration shots per state per basis ('inf' allowed)")
    parser.add_argument("--qst-shots", type=int, default=None, help="Tomography shots per basis")
    parser.add_argument("--targets", type=int, default=None, help="Number of Haar-random targets")
    parser.add_argument("--noise", type=str, default=None, help="Noise kind")
    parser.add_argument("--noise-param", action="append", default=None, metavar="NAME=VALUE",
                        help="Noise parameter override (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=Settings.TOOL_NAME,
        description="Readout-error-mitigated quantum state tomography: simulate, calibrate, reconstruct",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {Settings.TOOL_VERSION}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", help="Run the full protocol once")
    _add_experiment(run)
    run.set_defaults(handler=cmd_run)

    sweep = subparsers.add_parser("sweep", help="Run the protocol over noise strengths")
    _add_experiment(sweep)
    sweep.add_argument("--kind", required=True, help="Noise kind to sweep")
    sweep.add_argument("--strengths", required=True, help="Comma-separated strengths")
    sweep.add_argument("--param", default=None, help="Parameter to sweep (default: the kind's strength parameter)")
    sweep.set_defaults(handler=cmd_sweep)

    calibration = subparsers.add_parser("calibration-sweep", help="Run the protocol over calibration budgets")
    _add_experiment(calibration)
    calibration.add_argument("--budgets", required=True, help="Comma-separated total calibration shots (split over 6 states x 3 bases)")
    calibration.set_defaults(handler=cmd_calibration_sweep)

    qdt = subparsers.add_parser("qdt", help="Reconstruct a POVM from calibration counts")
    _add_common(qdt)
    qdt.add_argument("counts", help="Calibration counts JSON")
    qdt.add_argument("--joint", action="store_true", help="Reconstruct all outcomes jointly")
    qdt.add_argument("--threshold", type=float, default=3e-2, help="Coherence threshold")
    qdt.set_defaults(handler=cmd_qdt)

    qst = subparsers.add_parser("qst", help="Reconstruct a state from tomography counts")
    _add_common(qst)
    qst.add_argument("counts", help="Tomography counts JSON")
    qst.add_argument("--povm", default=None, help="POVM JSON (default: ideal Pauli measurement)")
    qst.add_argument("--estimator", choices=["mle", "bme"], default="mle", help="State estimator")
    qst.set_defaults(handler=cmd_qst)

    ingest = subparsers.add_parser("ingest", help="Run calibration and dual reconstruction on recorded counts")
    _add_experiment(ingest)
    ingest.add_argument("--qdt", required=True, help="Calibration counts JSON")
    ingest.add_argument("qst", nargs="+", help="Tomography counts JSON files")
    ingest.set_defaults(handler=cmd_ingest)

    coherence = subparsers.add_parser("coherence", help="Report coherent readout errors of a POVM")
    _add_common(coherence)
    coherence.add_argument("povm", help="POVM JSON")
    coherence.add_argument("--threshold", type=float, default=3e-2, help="Coherence threshold")
    coherence.set_defaults(handler=cmd_coherence)

    plot = subparsers.add_parser("plot", help="Render curves.csv or a POVM JSON as SVG")
    plot.add_argument("input", help="curves.csv or POVM JSON")
    plot.add_argument("-o", "--output", default=None, help="Output SVG (default: input with .svg suffix)")
    plot.set_defaults(handler=cmd_plot)
    return parser


def exit_code_for(error: BaseException) -> int:
    """Map a failure to the process exit code."""
    cause = error.cause if isinstance(error, StageError) else error
    if isinstance(cause, ConvergenceError):
        return EXIT_NUMERICAL
    return EXIT_CONFIG


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point."""
    logging.basicConfig(
        level=Settings.get_log_level(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        return args.handler(args)
    except (RemqstError, FileNotFoundError) as e:
        print(f"Error: {e}", file=sys.stderr)
        print(f"Error type: {type(e).__name__}", file=sys.stderr)
        return exit_code_for(e)
    except (ValueError, KeyError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
