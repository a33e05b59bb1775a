"""Figure rendering for the benchmark CSV outputs.

Read-only consumers of the harness CSV schemas: a convergence trace plot,
sensing RMSE versus SNR with the resolution-limit line, and BER versus SNR.
Vector output, deterministic for identical inputs.
"""

from __future__ import annotations

import csv
import os
from statistics import median

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

plt.rcParams["svg.hashsalt"] = "simdd"

LOG_CLIP_FLOOR = 1e-7   # zero values are displayed at this level, marked


class FigureError(ValueError):
    """A CSV is missing, empty or lacks expected columns."""


def _read_rows(csv_path: str, required: tuple[str, ...]) -> list[dict]:
    if not os.path.exists(csv_path):
        raise FigureError(f"input CSV not found: {csv_path}")
    with open(csv_path, newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise FigureError(f"empty CSV: {csv_path}")
        missing = [c for c in required if c not in reader.fieldnames]
        if missing:
            raise FigureError(f"{csv_path}: missing columns {missing}")
        rows = list(reader)
    if not rows:
        raise FigureError(f"no data rows in {csv_path}")
    return rows


def _save(fig, out_path: str) -> None:
    metadata = {"Date": None} if out_path.endswith(".svg") else None
    fig.savefig(out_path, metadata=metadata)
    plt.close(fig)


def plot_convergence(csv_path: str, out_path: str) -> str:
    """Per-path objective versus iteration, with target-switch markers."""
    rows = _read_rows(csv_path, ("iteration", "sweep", "targeted_path"))
    objective_cols = [c for c in rows[0] if c.startswith("objective_")]
    if not objective_cols:
        raise FigureError(f"{csv_path}: no objective_* columns")
    objective_cols.sort(key=lambda c: int(c.split("_")[1]))
    iterations = [int(r["iteration"]) for r in rows]
    targets = [int(r["targeted_path"]) for r in rows]

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for col in objective_cols:
        values = [max(float(r[col]), LOG_CLIP_FLOOR * 1e-6) for r in rows]
        ax.semilogy(iterations, values, label=f"path {col.split('_')[1]}")
    switch_marked = False
    for i in range(1, len(rows)):
        if targets[i] != targets[i - 1]:
            ax.axvline(iterations[i], color="gray", linestyle=":", linewidth=1,
                       label="target switch" if not switch_marked else None)
            switch_marked = True
    ax.set_xlabel("iteration")
    ax.set_ylabel("path objective")
    ax.set_title("Min-max phase optimization")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, out_path)
    return out_path


def _median_curves(rows: list[dict], metric: str) -> dict:
    """(waveform, sim_mode) -> sorted [(snr, median over trials)]."""
    grouped: dict = {}
    for row in rows:
        if row["metric_name"] != metric:
            continue
        key = (row["waveform"], row["sim_mode"])
        snr = float(row["snr_db"])
        grouped.setdefault(key, {}).setdefault(snr, []).append(
            float(row["metric_value"]))
    return {key: sorted((snr, median(vals)) for snr, vals in series.items())
            for key, series in grouped.items()}


def _plot_metric(ax, rows: list[dict], metric: str, floor_metric: str | None,
                 ylabel: str) -> None:
    curves = _median_curves(rows, metric)
    if not curves:
        raise FigureError(f"no rows with metric_name={metric}")
    for (waveform, mode), series in sorted(curves.items()):
        snrs = [s for s, _ in series]
        values = [max(v, LOG_CLIP_FLOOR) for _, v in series]
        clipped = [(s, c) for (s, v), c in zip(series, values) if v != c]
        line, = ax.semilogy(snrs, values, marker="o", markersize=4,
                            label=f"{waveform}/{mode}")
        if clipped:
            ax.semilogy([s for s, _ in clipped], [c for _, c in clipped],
                        linestyle="none", marker="v", markersize=7,
                        color=line.get_color())
    if floor_metric is not None:
        floors = [float(r["metric_value"]) for r in rows
                  if r["metric_name"] == floor_metric]
        if floors:
            level = max(median(floors), LOG_CLIP_FLOOR)
            ax.axhline(level, color="black", linestyle="--", linewidth=1,
                       label="resolution limit")
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=7)


def plot_mse(csv_path: str, out_path: str) -> str:
    """Median range/velocity RMSE versus SNR, one curve per waveform and
    stack configuration, with the resolution-limit level."""
    rows = _read_rows(csv_path, ("waveform", "sim_mode", "snr_db", "trial",
                                 "metric_name", "metric_value"))
    fig, axes = plt.subplots(1, 2, figsize=(10.0, 4.0))
    _plot_metric(axes[0], rows, "range_rmse_m", "range_floor_m", "range RMSE (m)")
    _plot_metric(axes[1], rows, "velocity_rmse_mps", "velocity_floor_mps",
                 "velocity RMSE (m/s)")
    fig.suptitle("Sensing accuracy")
    fig.tight_layout()
    _save(fig, out_path)
    return out_path


def plot_ber(csv_path: str, out_path: str) -> str:
    """Median bit error rate versus SNR, one curve per waveform and mode."""
    rows = _read_rows(csv_path, ("waveform", "sim_mode", "snr_db", "trial",
                                 "metric_name", "metric_value"))
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    _plot_metric(ax, rows, "ber", None, "bit error rate")
    ax.set_title("Link-level error rate")
    fig.tight_layout()
    _save(fig, out_path)
    return out_path
