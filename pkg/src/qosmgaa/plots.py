"""Matplotlib figure rendering for experiment reports.

Figures are written to files next to the CSV series (Agg backend, no GUI):
one errorbar chart per metric over the grid axis, and one training-curve
figure per history file found in the output directory.
"""
from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def render_report_figures(report: dict, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    written = []
    aggs = report.get("aggregates", [])
    if aggs:
        noises = sorted({a["noise_ratio"] for a in aggs})
        x_field = "noise_ratio" if len(noises) > 1 else "density"
        for metric in ("mae", "rmse"):
            path = out_dir / f"{metric}_vs_{x_field}.png"
            _metric_figure(aggs, metric, x_field, path)
            written.append(path)
    for hist in sorted(out_dir.glob("history_*.jsonl")):
        path = hist.with_suffix(".png")
        _history_figure(hist, path)
        written.append(path)
    return written


def _metric_figure(aggs: list[dict], metric: str, x_field: str, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    models = sorted({a["model"] for a in aggs})
    for model in models:
        rows = sorted((a for a in aggs if a["model"] == model),
                      key=lambda a: a[x_field])
        xs = [a[x_field] for a in rows]
        ys = [a[f"{metric}_mean"] for a in rows]
        es = [a[f"{metric}_std"] for a in rows]
        ax.errorbar(xs, ys, yerr=es, marker="o", capsize=3, label=model)
    ax.set_xlabel(x_field.replace("_", " "))
    ax.set_ylabel(metric.upper())
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _history_figure(history_path: Path, path: Path) -> None:
    records = [json.loads(line) for line in history_path.read_text().splitlines()
               if line.strip()]
    if not records:
        return
    epochs = [r["epoch"] for r in records]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.plot(epochs, [r["gen_loss"] for r in records], label="generator loss")
    if any(r.get("disc_loss") is not None for r in records):
        ax1.plot(epochs, [r.get("disc_loss") for r in records],
                 label="discriminator loss")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("loss")
    ax1.legend()
    ax1.grid(True, alpha=0.3)
    ax2.plot(epochs, [r["val_mae"] for r in records], label="val MAE")
    ax2.plot(epochs, [r["val_rmse"] for r in records], label="val RMSE")
    ax2.set_xlabel("epoch")
    ax2.legend()
    ax2.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
