"""Static SVG diagnostics: infidelity curves and POVM heatmaps."""

import io
import logging
from typing import List, Tuple

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from core.errors import SchemaError, ValidationError  # noqa: E402
from core.quantum import Povm  # noqa: E402
from utils.file_handler import atomic_write_text, load_csv, load_json  # noqa: E402

logger = logging.getLogger(__name__)

CURVE_COLUMNS = ("series", "target", "shots", "mean_infidelity")
SERIES_COLORS = {"mitigated": "tab:blue", "unmitigated": "tab:red"}

_SVG_STYLE = {"svg.fonttype": "none", "svg.hashsalt": "remqst", "path.simplify": False}


def _save_svg(fig, out_svg: str) -> None:
    buffer = io.StringIO()
    fig.savefig(buffer, format="svg", metadata={"Date": None})
    plt.close(fig)
    atomic_write_text(out_svg, buffer.getvalue())


def _series_groups(df: pd.DataFrame) -> List[Tuple[str, pd.DataFrame]]:
    keys = ["strength", "series"] if "strength" in df.columns else ["series"]
    groups = []
    for key, frame in df.groupby(keys, sort=False):
        key = key if isinstance(key, tuple) else (key,)
        name = str(key[-1]) if len(key) == 1 else f"{key[1]} ({key[0]})"
        means = frame[frame["target"] == "mean"]
        if means.empty:
            means = frame.groupby("shots", as_index=False)["mean_infidelity"].mean()
        groups.append((name, means.sort_values("shots")))
    return groups


def _positive_points(frame: pd.DataFrame) -> Tuple[np.ndarray, np.ndarray]:
    shots = frame["shots"].to_numpy(dtype=float)
    values = frame["mean_infidelity"].to_numpy(dtype=float)
    keep = (shots > 0) & (values > 0) & np.isfinite(values)
    return shots[keep], values[keep]


def plot_curves(csv_path: str, out_svg: str) -> str:
    """
    Plot mean infidelity against shots on log-log axes, one line per series.

    Args:
        csv_path: curves.csv written by a run or a sweep
        out_svg: Destination SVG path

    Returns:
        Path of the written SVG

    Raises:
        SchemaError: If the CSV is malformed or lacks curve columns
        ValidationError: If a series has no plottable point
    """
    df = load_csv(csv_path, required_columns=CURVE_COLUMNS)
    try:
        df["shots"] = pd.to_numeric(df["shots"])
        df["mean_infidelity"] = pd.to_numeric(df["mean_infidelity"])
    except (ValueError, TypeError) as exc:
        raise SchemaError(f"non-numeric curve values: {exc}", source=csv_path) from exc
    groups = _series_groups(df)
    if not groups:
        raise ValidationError(f"{csv_path} holds no curve series")

    with plt.rc_context(_SVG_STYLE):
        fig, ax = plt.subplots(figsize=(6.4, 4.8))
        for name, frame in groups:
            shots, values = _positive_points(frame)
            if shots.size == 0:
                plt.close(fig)
                raise ValidationError(f"series '{name}' has no positive infidelity to plot")
            color = SERIES_COLORS.get(name.split(" ")[0])
            (line,) = ax.plot(shots, values, "-", color=color, label=name)
            line.set_gid(f"curve-{name}")
            (marker,) = ax.plot(shots[-1:], values[-1:], "o", color=line.get_color())
            marker.set_gid(f"saturation-{name}")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("Shots")
        ax.set_ylabel("Infidelity")
        ax.grid(True, alpha=0.3)
        ax.legend()
        fig.tight_layout()
        _save_svg(fig, out_svg)
    logger.info("plotted %d series to %s", len(groups), out_svg)
    return out_svg


def _cell_text(value: float) -> str:
    # avoids "-0.00"
    return f"{round(float(value), 2) + 0.0:.2f}"


def plot_povm_heatmap(povm_json: str, out_svg: str) -> str:
    """
    Draw the real and imaginary parts of every effect as annotated heatmaps.

    Each cell is labelled with its value to two decimals; the text element of
    cell (row, col) carries the id ``cell-<label>-<re|im>-<row>-<col>``.
    """
    try:
        povm = Povm.from_json_dict(load_json(povm_json))
    except (KeyError, TypeError, IndexError) as exc:
        raise SchemaError(f"not a POVM document: {exc}", source=povm_json) from exc

    dim = povm.dim
    with plt.rc_context(_SVG_STYLE):
        fig, axes = plt.subplots(2, len(povm), figsize=(2.2 * len(povm), 4.6), squeeze=False)
        for column, (label, effect) in enumerate(zip(povm.labels, povm.effects)):
            for row, (part, values) in enumerate((("re", effect.entries.real), ("im", effect.entries.imag))):
                ax = axes[row][column]
                ax.imshow(values, cmap="RdBu", vmin=-1.0, vmax=1.0)
                for i in range(dim):
                    for j in range(dim):
                        text = ax.text(j, i, _cell_text(values[i, j]), ha="center", va="center", fontsize=9)
                        text.set_gid(f"cell-{label}-{part}-{i}-{j}")
                ax.set_xticks([])
                ax.set_yticks([])
                ax.set_title(f"{'Re' if part == 're' else 'Im'} {label}", fontsize=9)
        fig.tight_layout()
        _save_svg(fig, out_svg)
    return out_svg
