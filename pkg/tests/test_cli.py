"""Tests for the command-line front end and the SVG diagnostics."""

import re
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

import main
from core.errors import ConvergenceError, StageError
from core.noise import NoiseSpec
from core.quantum import pauli6_povm, pauli_eigenstate
from core.sampler import SeededRng
from estimators.detector_tomography import simulate_qdt_data
from estimators.state_tomography import simulate_qst_data
from utils.file_handler import load_json, save_csv, save_json
from utils.plotting import plot_curves, plot_povm_heatmap

SMALL_RUN = ["--seed", "3", "--targets", "2", "--qdt-shots", "500", "--qst-shots", "200"]


def _group(svg: str, gid: str) -> str:
    match = re.search(rf'<g id="{re.escape(gid)}">(.*?)</g>', svg, re.S)
    assert match, f"no element with id {gid}"
    return match.group(1)


def _path_points(svg: str, gid: str) -> np.ndarray:
    path = re.search(r'd="([^"]+)"', _group(svg, gid)).group(1)
    numbers = [float(n) for n in re.findall(r"-?\d+(?:\.\d+)?(?:e-?\d+)?", path)]
    return np.array(numbers).reshape(-1, 2)


def _cell(svg: str, gid: str) -> str:
    return re.search(r"<text[^>]*>([^<]*)</text>", _group(svg, gid)).group(1).strip()


def _curves_csv(path: Path, series_values: dict) -> str:
    rows = []
    for series, values in series_values.items():
        for shots, value in zip((10, 100, 1000, 10_000), values):
            rows.append((series, "mean", shots, value, 0.0))
    save_csv(pd.DataFrame(rows, columns=["series", "target", "shots", "mean_infidelity", "std_infidelity"]), str(path))
    return str(path)


@pytest.fixture
def qdt_counts(tmp_path, calibration_set) -> str:
    true_povm = pauli6_povm()
    data = simulate_qdt_data(calibration_set.states, calibration_set.labels, true_povm, 2000, SeededRng(1))
    path = tmp_path / "qdt_counts.json"
    save_json(data.to_json_dict(), str(path))
    return str(path)


class TestBuildConfig:
    """Config file, preset and flag precedence."""

    def test_preset_with_overrides(self) -> None:
        args = main.build_parser().parse_args(["run", "--preset", "desk", "--seed", "9", "--targets", "4"])
        config = main.build_config(args)
        assert (config.seed, config.n_targets, config.qst_shots_per_basis) == (9, 4, 10_000)

    def test_infinite_calibration_budget(self) -> None:
        args = main.build_parser().parse_args(["run", "--qdt-shots", "inf"])
        assert np.isinf(main.build_config(args).qdt_shots_per_state_per_basis)

    def test_noise_parameters_merge(self, tmp_path) -> None:
        config_path = tmp_path / "config.json"
        save_json({"noise": {"kind": "detuning", "params": {"detuning_hz": 1e6}}}, str(config_path))
        args = main.build_parser().parse_args(
            ["run", "--config", str(config_path), "--noise-param", "duration_s=1e-7"]
        )
        noise = main.build_config(args).noise
        assert noise.params["detuning_hz"] == 1e6
        assert noise.params["duration_s"] == pytest.approx(1e-7)

    def test_noise_kind_replaces_parameters(self) -> None:
        args = main.build_parser().parse_args(["run", "--noise", "depolarizing", "--noise-param", "p=0.2"])
        assert main.build_config(args).noise == NoiseSpec("depolarizing", {"p": 0.2})


class TestRunAndSweep:
    """Simulated experiments from the command line."""

    def test_seeded_runs_are_byte_identical(self, tmp_path, capsys) -> None:
        for name in ("a", "b"):
            assert main.main(["run", *SMALL_RUN, "--noise", "depolarizing", "--noise-param", "p=0.2",
                              "--out", str(tmp_path / name)]) == 0
        for csv in ("curves.csv", "saturations.csv"):
            assert (tmp_path / "a" / csv).read_bytes() == (tmp_path / "b" / csv).read_bytes()
        assert "PROTOCOL SUMMARY" in capsys.readouterr().out

    def test_run_writes_manifest(self, tmp_path) -> None:
        assert main.main(["run", *SMALL_RUN, "--out", str(tmp_path)]) == 0
        manifest = load_json(str(tmp_path / "manifest.json"))
        assert manifest["command"] == "run"
        assert manifest["seed"] == 3
        assert len(manifest["config_hash"]) == 64

    def test_csv_format(self, tmp_path) -> None:
        assert main.main(["run", *SMALL_RUN, "--out", str(tmp_path)]) == 0
        raw = (tmp_path / "curves.csv").read_bytes()
        assert b"\r\n" not in raw
        assert raw.startswith(b"series,target,shots,mean_infidelity,std_infidelity\n")

    def test_sweep_rows(self, tmp_path) -> None:
        code = main.main(["sweep", *SMALL_RUN, "--kind", "depolarizing", "--strengths", "0,0.1,0.2",
                          "--out", str(tmp_path)])
        assert code == 0
        saturations = pd.read_csv(tmp_path / "saturations.csv")
        assert len(saturations) == 3 * 2
        assert (tmp_path / "summary.csv").exists()

    def test_calibration_sweep(self, tmp_path) -> None:
        code = main.main(["calibration-sweep", *SMALL_RUN, "--noise", "depolarizing", "--noise-param", "p=0.1",
                          "--budgets", "100,inf", "--out", str(tmp_path)])
        assert code == 0
        budgets = pd.read_csv(tmp_path / "summary.csv")["strength"].to_numpy(dtype=float)
        assert budgets[0] == 100
        assert np.isinf(budgets[1])


class TestSingleStageCommands:
    """qdt, qst, coherence and ingest on files."""

    def test_qdt_and_coherence(self, tmp_path, qdt_counts, capsys) -> None:
        assert main.main(["qdt", qdt_counts, "--out", str(tmp_path / "qdt")]) == 0
        povm_path = tmp_path / "qdt" / "povm_estm.json"
        assert load_json(str(povm_path))["labels"] == ["x0", "x1", "y0", "y1", "z0", "z1"]
        assert load_json(str(tmp_path / "qdt" / "manifest.json"))["command"] == "qdt"
        assert main.main(["coherence", str(povm_path), "--out", str(tmp_path / "coh")]) == 0
        assert "classical" in capsys.readouterr().out

    def test_qst_with_target(self, tmp_path) -> None:
        target = pauli_eigenstate("y0")
        data = simulate_qst_data(target, pauli6_povm(), 300, SeededRng(2), target_label="y0")
        payload = {**data.to_json_dict(), "target": target.to_json_dict()}
        counts = tmp_path / "qst.json"
        save_json(payload, str(counts))
        assert main.main(["qst", str(counts), "--out", str(tmp_path / "qst")]) == 0
        assert (tmp_path / "qst" / "state.json").exists()
        curves = pd.read_csv(tmp_path / "qst" / "curves.csv")
        assert set(curves["series"]) == {"unmitigated"}
        assert curves["mean_infidelity"].iloc[-1] < 0.05

    def test_ingest_without_targets(self, tmp_path, qdt_counts, capsys) -> None:
        counts = tmp_path / "qst.json"
        save_json({"bases": ["x", "y", "z"], "counts": {"x": [60, 40], "y": [50, 50], "z": [80, 20]}}, str(counts))
        assert main.main(["ingest", "--qdt", qdt_counts, str(counts), "--out", str(tmp_path / "ing")]) == 0
        assert "No target states were known" in capsys.readouterr().out
        assert (tmp_path / "ing" / "estimate_infidelities.csv").exists()


class TestExitCodes:
    """Configuration errors exit with 1, numerical failures with 2."""

    def test_unknown_noise_kind(self, tmp_path, capsys) -> None:
        assert main.main(["run", "--noise", "telegraph", "--out", str(tmp_path)]) == 1
        assert "unknown noise kind" in capsys.readouterr().err

    def test_bad_list(self, tmp_path) -> None:
        assert main.main(["sweep", "--kind", "depolarizing", "--strengths", "a,b", "--out", str(tmp_path)]) == 1

    def test_missing_file(self, tmp_path) -> None:
        assert main.main(["qdt", str(tmp_path / "absent.json")]) == 1

    def test_usage_error(self) -> None:
        assert main.main(["run", "--targets", "many"]) == 1

    def test_missing_basis(self, tmp_path, qdt_counts, capsys) -> None:
        counts = tmp_path / "qst.json"
        save_json({"bases": ["x", "z"], "counts": {"x": [5, 5], "z": [5, 5]}}, str(counts))
        assert main.main(["ingest", "--qdt", qdt_counts, str(counts), "--out", str(tmp_path)]) == 1
        assert "missing basis 'y'" in capsys.readouterr().err

    def test_convergence_failure(self, tmp_path, monkeypatch) -> None:
        def diverge(config):
            raise StageError("qdt", ConvergenceError("detector reconstruction did not converge", iterations=10))

        monkeypatch.setattr(main, "run_protocol", diverge)
        assert main.main(["run", "--out", str(tmp_path)]) == 2

    def test_exit_code_mapping(self) -> None:
        assert main.exit_code_for(ConvergenceError("x")) == 2
        assert main.exit_code_for(StageError("qst", ValueError("x"))) == 1


class TestPlots:
    """SVG output of curves and POVM heatmaps."""

    def test_curve_paths_are_monotone(self, tmp_path) -> None:
        csv = _curves_csv(tmp_path / "curves.csv", {"mitigated": [0.1, 0.01, 0.001, 0.0001],
                                                    "unmitigated": [0.2, 0.1, 0.08, 0.07]})
        svg = Path(plot_curves(csv, str(tmp_path / "curves.svg"))).read_text()
        for series in ("mitigated", "unmitigated"):
            points = _path_points(svg, f"curve-{series}")
            assert len(points) == 4
            assert np.all(np.diff(points[:, 0]) > 0)
            # lower infidelity is drawn further down the canvas
            assert np.all(np.diff(points[:, 1]) > 0)
            _group(svg, f"saturation-{series}")
        assert re.search(r">\s*unmitigated\s*<", svg)

    def test_non_positive_series_rejected(self, tmp_path) -> None:
        csv = _curves_csv(tmp_path / "curves.csv", {"mitigated": [0.0, 0.0, 0.0, 0.0]})
        with pytest.raises(ValueError, match="no positive infidelity"):
            plot_curves(csv, str(tmp_path / "curves.svg"))

    def test_missing_columns(self, tmp_path) -> None:
        save_csv(pd.DataFrame({"shots": [1, 2]}), str(tmp_path / "bad.csv"))
        with pytest.raises(ValueError, match="Missing required columns"):
            plot_curves(str(tmp_path / "bad.csv"), str(tmp_path / "bad.svg"))

    def test_heatmap_cells(self, tmp_path) -> None:
        povm_path = tmp_path / "povm.json"
        save_json(pauli6_povm().to_json_dict(), str(povm_path))
        svg = Path(plot_povm_heatmap(str(povm_path), str(tmp_path / "povm.svg"))).read_text()
        assert _cell(svg, "cell-z0-re-0-0") == "0.33"
        assert _cell(svg, "cell-z0-re-0-1") == "0.00"
        assert _cell(svg, "cell-x0-re-0-1") == "0.17"

    def test_heatmap_round_trip(self, tmp_path) -> None:
        povm = pauli6_povm()
        povm_path = tmp_path / "povm.json"
        save_json(povm.to_json_dict(), str(povm_path))
        svg = Path(plot_povm_heatmap(str(povm_path), str(tmp_path / "povm.svg"))).read_text()
        for label, effect in zip(povm.labels, povm.effects):
            for part, values in (("re", effect.entries.real), ("im", effect.entries.imag)):
                for (i, j), value in np.ndenumerate(values):
                    assert float(_cell(svg, f"cell-{label}-{part}-{i}-{j}")) == pytest.approx(value, abs=0.005)

    def test_plot_command_writes_manifest(self, tmp_path) -> None:
        csv = _curves_csv(tmp_path / "curves.csv", {"mitigated": [0.1, 0.05, 0.01, 0.005]})
        out = tmp_path / "figs" / "curves.svg"
        assert main.main(["plot", csv, "-o", str(out)]) == 0
        assert out.exists()
        assert load_json(str(tmp_path / "figs" / "manifest.json"))["outputs"] == ["curves.svg"]

    def test_replotting_is_byte_identical(self, tmp_path) -> None:
        csv = _curves_csv(tmp_path / "curves.csv", {"mitigated": [0.1, 0.05, 0.01, 0.005]})
        povm_path = tmp_path / "povm.json"
        save_json(pauli6_povm().to_json_dict(), str(povm_path))
        for plot, source in ((plot_curves, csv), (plot_povm_heatmap, str(povm_path))):
            first = Path(plot(source, str(tmp_path / "first.svg"))).read_bytes()
            second = Path(plot(source, str(tmp_path / "second.svg"))).read_bytes()
            assert first == second
            assert b"dc:date" not in first

    def test_plot_unknown_suffix(self, tmp_path) -> None:
        source = tmp_path / "data.txt"
        source.write_text("x", encoding="utf-8")
        assert main.main(["plot", str(source)]) == 1
