"""Static SVG line charts of trajectory CSV files."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

LABELS = {"x1": "tumor", "x2": "active CAR T", "x3": "non-active CAR T"}


def read_trajectory_csv(path) -> dict:
    """Columns of a trajectory CSV as float arrays; empty cells become NaN."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    header, body = rows[0], rows[1:]
    cols = {name: np.array([float(r[i]) if r[i] != "" else np.nan for r in body]) for i, name in enumerate(header)}
    if "t" not in cols:
        raise ValueError(f"{path}: no 't' column")
    return cols


def plot_trajectory(cols: dict, out_path, log: bool = False, title: str | None = None) -> None:
    has_v = "V" in cols and np.any(np.isfinite(cols["V"]))
    plt.rcParams["svg.hashsalt"] = "cartsim"
    nrows = 2 if has_v else 1
    fig, axes = plt.subplots(nrows, 1, figsize=(8, 3.2 * nrows + 0.6), sharex=True, squeeze=False)
    ax = axes[0, 0]
    t = cols["t"]
    for key, label in LABELS.items():
        y = cols[key]
        if log:
            y = np.where(y > 0, y, np.nan)
        ax.plot(t, y, label=label, linewidth=1.4)
    if log:
        ax.set_yscale("log")
    ax.set_ylabel("cells")
    ax.legend(loc="best", frameon=False)
    ax.grid(alpha=0.3)
    if title:
        ax.set_title(title)
    if has_v:
        vax = axes[1, 0]
        v = np.where(cols["V"] > 0, cols["V"], np.nan)
        vax.plot(t, v, color="k", linewidth=1.2)
        vax.set_yscale("log")
        vax.set_ylabel("V")
        vax.grid(alpha=0.3)
    axes[-1, 0].set_xlabel("time [days]")
    fig.tight_layout()
    fig.savefig(Path(out_path), format="svg", metadata={"Date": None})
    plt.close(fig)
