"""Figures for a finished run: test predictions and rule evolution."""

from __future__ import annotations

from pathlib import Path
from typing import Dict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_predictions(result, path) -> Path:
    trace = result.test_trace
    fig, ax = plt.subplots(figsize=(8, 3.2))
    ax.plot(trace.k, trace.y_d, lw=1.2, label="target")
    ax.plot(trace.k, trace.y_hat, lw=1.0, ls="--", label="prediction")
    r = result.report
    ax.set_title(f"{r.dataset}: {r.label}, NDEI {r.ndei:.4f}")
    ax.set_xlabel("k")
    ax.legend(loc="best", frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_rule_evolution(result, path) -> Path:
    trace = result.train_trace
    fig, ax = plt.subplots(figsize=(8, 2.8))
    ax.step(trace.k, trace.rule_count, where="post")
    ax.set_xlabel("k")
    ax.set_ylabel("rules")
    ax.set_title(f"{result.report.dataset}: rule evolution during training")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_run(result, out_dir, prefix: str = "") -> Dict[str, Path]:
    out = Path(out_dir)
    return {
        "predictions_plot": plot_predictions(result, out / f"{prefix}predictions.png"),
        "rules_plot": plot_rule_evolution(result, out / f"{prefix}rules.png"),
    }
