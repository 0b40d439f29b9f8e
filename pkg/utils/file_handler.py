"""File handling utilities for JSON and CSV artifacts and run manifests."""

import hashlib
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from config.settings import Settings
from core.errors import SchemaError

CSV_FLOAT_FORMAT = "%.10g"


def atomic_write_text(path: str, text: str) -> None:
    """
    Write text through a temporary file in the destination directory, then rename it into place.

    Args:
        path: Destination file path
        text: Complete file contents
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    handle = tempfile.NamedTemporaryFile(
        "w", encoding="utf-8", newline="", dir=target.parent, prefix=f".{target.name}.", delete=False
    )
    try:
        with handle:
            handle.write(text)
        os.replace(handle.name, target)
    except BaseException:
        Path(handle.name).unlink(missing_ok=True)
        raise


def _jsonable(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {str(key): _jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value


def save_json(payload: Any, output_path: str) -> None:
    """
    Save a JSON document atomically.

    Args:
        payload: JSON-compatible data; numpy values and infinities are converted
        output_path: Path where the JSON should be saved
    """
    text = json.dumps(_jsonable(payload), indent=2, allow_nan=False) + "\n"
    atomic_write_text(output_path, text)


def load_json(file_path: str) -> Any:
    """
    Load a JSON document.

    Args:
        file_path: Path to the JSON file

    Returns:
        The decoded document

    Raises:
        FileNotFoundError: If file doesn't exist
        SchemaError: If the file is not valid JSON (with line and column)
    """
    path = Path(file_path)
    if not path.exists():
        raise FileNotFoundError(f"File not found: {file_path}")
    text = path.read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}",
                          source=str(file_path)) from exc


def save_csv(df: pd.DataFrame, output_path: str) -> None:
    """
    Save DataFrame to CSV file with a header, LF line endings and '.' decimals.

    Args:
        df: DataFrame to save
        output_path: Path where CSV should be saved
    """
    text = df.to_csv(index=False, lineterminator="\n", float_format=CSV_FLOAT_FORMAT)
    atomic_write_text(output_path, text)


def load_csv(file_path: str, required_columns: Sequence[str] = ()) -> pd.DataFrame:
    """
    Load CSV file into a pandas DataFrame.

    Args:
        file_path: Path to the CSV file
        required_columns: Columns that must be present

    Returns:
        DataFrame with the file contents

    Raises:
        FileNotFoundError: If file doesn't exist
        SchemaError: If the file cannot be parsed or required columns are missing
    """
    if not Path(file_path).exists():
        raise FileNotFoundError(f"File not found: {file_path}")
    try:
        df = pd.read_csv(file_path, dtype={"target": str})
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise SchemaError(f"malformed CSV: {exc}", source=str(file_path)) from exc

    missing_columns = [col for col in required_columns if col not in df.columns]
    if missing_columns:
        raise SchemaError(f"Missing required columns: {missing_columns}", source=str(file_path))
    return df


def config_hash(canonical_json: str) -> str:
    """SHA-256 of a canonical JSON string, hex encoded."""
    return hashlib.sha256(canonical_json.encode("utf-8")).hexdigest()


def write_manifest(
    output_dir: str,
    command: str,
    seed: Optional[int],
    outputs: Iterable[str],
    canonical_config: Optional[str] = None,
    extra: Optional[Mapping[str, Any]] = None,
) -> str:
    """
    Write ``manifest.json`` describing how the outputs in ``output_dir`` were produced.

    Args:
        output_dir: Directory holding the outputs
        command: Subcommand that produced them
        seed: Root random seed (None when no randomness was used)
        outputs: File names written by the command
        canonical_config: Canonical configuration JSON, hashed into the manifest
        extra: Additional manifest entries

    Returns:
        Path of the manifest
    """
    manifest = {
        "tool": Settings.TOOL_NAME,
        "version": Settings.TOOL_VERSION,
        "command": command,
        "seed": seed,
        "config_hash": config_hash(canonical_config) if canonical_config is not None else None,
        "config": json.loads(canonical_config) if canonical_config is not None else None,
        "outputs": sorted(outputs),
    }
    if extra:
        manifest.update(extra)
    path = str(Path(output_dir) / "manifest.json")
    save_json(manifest, path)
    return path


def get_summary_stats(saturations: pd.DataFrame) -> dict:
    """
    Generate summary statistics from a saturation table.

    Args:
        saturations: DataFrame with 'strength', 'target', 'mitigated' and 'unmitigated' columns

    Returns:
        Dictionary with summary statistics
    """
    stats = {
        "total_targets": saturations["target"].nunique(),
        "mean_mitigated": float(saturations["mitigated"].mean()),
        "mean_unmitigated": float(saturations["unmitigated"].mean()),
    }
    if stats["mean_mitigated"] > 0:
        stats["ratio"] = stats["mean_unmitigated"] / stats["mean_mitigated"]

    if "strength" in saturations.columns and saturations["strength"].nunique() > 1:
        grouped = saturations.groupby("strength", sort=False)[["mitigated", "unmitigated"]].mean()
        stats["strength_breakdown"] = {
            strength: (float(row["mitigated"]), float(row["unmitigated"])) for strength, row in grouped.iterrows()
        }
    return stats


def print_summary_stats(stats: dict) -> None:
    """
    Print summary statistics in a formatted way.

    Args:
        stats: Dictionary with summary statistics
    """
    print("\n" + "=" * 50)
    print("PROTOCOL SUMMARY")
    print("=" * 50)
    print(f"Targets: {stats['total_targets']}")
    print(f"Mean mitigated saturation: {stats['mean_mitigated']:.4e}")
    print(f"Mean unmitigated saturation: {stats['mean_unmitigated']:.4e}")
    if "ratio" in stats:
        print(f"Unmitigated / mitigated: {stats['ratio']:.2f}")

    if "strength_breakdown" in stats:
        print("\nStrength Breakdown (mitigated / unmitigated):")
        for strength, (mitigated, unmitigated) in stats["strength_breakdown"].items():
            print(f"  - {strength}: {mitigated:.4e} / {unmitigated:.4e}")

    print("=" * 50 + "\n")
