"""Tests for utils/file_handler.py."""

import json
import math

import numpy as np
import pandas as pd
import pytest

from core.errors import SchemaError
from utils.file_handler import (
    config_hash,
    get_summary_stats,
    load_csv,
    load_json,
    print_summary_stats,
    save_csv,
    save_json,
    write_manifest,
)


class TestJson:
    def test_numpy_and_infinite_values(self, tmp_path) -> None:
        path = tmp_path / "doc.json"
        save_json({"a": np.arange(3), "b": np.float64(0.5), "c": math.inf, "d": math.nan}, str(path))
        assert load_json(str(path)) == {"a": [0, 1, 2], "b": 0.5, "c": "inf", "d": None}

    def test_no_temporary_files_left(self, tmp_path) -> None:
        save_json({"x": 1}, str(tmp_path / "nested" / "doc.json"))
        assert [p.name for p in (tmp_path / "nested").iterdir()] == ["doc.json"]

    def test_invalid_json_reports_position(self, tmp_path) -> None:
        path = tmp_path / "broken.json"
        path.write_text('{\n  "a": 1,\n  "b": \n}', encoding="utf-8")
        with pytest.raises(SchemaError, match=r"line 4, column 1") as info:
            load_json(str(path))
        assert info.value.source == str(path)

    def test_missing_file(self, tmp_path) -> None:
        with pytest.raises(FileNotFoundError):
            load_json(str(tmp_path / "absent.json"))


class TestCsv:
    def test_format(self, tmp_path) -> None:
        path = tmp_path / "table.csv"
        save_csv(pd.DataFrame({"shots": [10, 100], "value": [1 / 3, 2.5e-7]}), str(path))
        assert path.read_bytes() == b"shots,value\n10,0.3333333333\n100,2.5e-07\n"

    def test_required_columns(self, tmp_path) -> None:
        path = tmp_path / "table.csv"
        save_csv(pd.DataFrame({"shots": [10]}), str(path))
        with pytest.raises(SchemaError, match="Missing required columns"):
            load_csv(str(path), required_columns=["shots", "series"])

    def test_targets_stay_strings(self, tmp_path) -> None:
        path = tmp_path / "table.csv"
        save_csv(pd.DataFrame({"target": ["0", "mean"], "value": [1.0, 2.0]}), str(path))
        assert load_csv(str(path))["target"].tolist() == ["0", "mean"]


class TestManifest:
    def test_hash_matches_config(self, tmp_path) -> None:
        canonical = json.dumps({"seed": 1}, sort_keys=True, separators=(",", ":"))
        path = write_manifest(str(tmp_path), "run", 1, ["b.csv", "a.csv"], canonical, extra={"note": "x"})
        manifest = load_json(path)
        assert manifest["config_hash"] == config_hash(canonical)
        assert manifest["config"] == {"seed": 1}
        assert manifest["outputs"] == ["a.csv", "b.csv"]
        assert manifest["note"] == "x"

    def test_without_config(self, tmp_path) -> None:
        manifest = load_json(write_manifest(str(tmp_path), "plot", None, ["f.svg"]))
        assert manifest["config_hash"] is None
        assert manifest["seed"] is None


class TestSummaryStats:
    def test_single_strength(self, capsys) -> None:
        table = pd.DataFrame({"strength": [0.1, 0.1], "target": ["haar_0", "haar_1"],
                              "mitigated": [0.01, 0.03], "unmitigated": [0.1, 0.1]})
        stats = get_summary_stats(table)
        assert stats["total_targets"] == 2
        assert stats["ratio"] == pytest.approx(5.0)
        assert "strength_breakdown" not in stats
        print_summary_stats(stats)
        assert "Unmitigated / mitigated: 5.00" in capsys.readouterr().out

    def test_strength_breakdown(self) -> None:
        table = pd.DataFrame({"strength": [0.0, 0.0, 0.2, 0.2], "target": ["haar_0", "haar_1"] * 2,
                              "mitigated": [0.01, 0.01, 0.02, 0.04], "unmitigated": [0.01, 0.01, 0.2, 0.2]})
        stats = get_summary_stats(table)
        assert stats["strength_breakdown"][0.2] == pytest.approx((0.03, 0.2))
