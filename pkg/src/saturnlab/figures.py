"""Figure rendering for the CLI report path.

Everything here consumes already-computed report objects and writes PNG
files next to the textual artifacts. The diagnostics core stays
plot-free; this module is the only place matplotlib appears.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .diagnostics import BinTable
from .reporting import ExperimentReport


def _heat_panel(ax, table: BinTable, title: str):
    grid = np.ma.masked_invalid(table.mean_correct)
    im = ax.imshow(
        grid.T,
        origin="lower",
        aspect="auto",
        vmin=0.0,
        vmax=1.0,
        cmap="viridis",
        extent=(
            table.mag_edges[0],
            table.mag_edges[-1],
            table.margin_edges[0],
            table.margin_edges[-1],
        ),
    )
    ax.set_title(title)
    ax.set_xlabel("bottleneck magnitude")
    ax.set_ylabel("prediction margin")
    return im


def render_heatmaps(report: ExperimentReport, out_dir) -> list[str]:
    """One member/non-member heat-map pair per seed."""
    paths = []
    for s in report.seeds:
        if s.diag is None:
            continue
        fig, axes = plt.subplots(1, 2, figsize=(11, 4.5))
        im = _heat_panel(axes[0], s.diag.member_table, f"members (r = {s.diag.member_pearson:.3f})")
        _heat_panel(axes[1], s.diag.nonmember_table, f"non-members (r = {s.diag.nonmember_pearson:.3f})")
        fig.colorbar(im, ax=axes, label="attack accuracy", fraction=0.046)
        fig.suptitle(f"seed {s.seed}, magnitude {report.magnitude_stage}")
        name = f"seed{s.seed}_magnitude_margin.png"
        path = os.path.join(out_dir, name)
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(name)
    return paths


def render_training_curves(report: ExperimentReport, out_dir) -> str | None:
    if not any(s.loss_curve for s in report.seeds):
        return None
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(11, 4))
    for s in report.seeds:
        epochs = np.arange(len(s.loss_curve))
        ax_loss.plot(epochs, s.loss_curve, label=f"seed {s.seed}")
        ax_acc.plot(epochs, s.acc_curve, label=f"seed {s.seed}")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("training loss")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("training accuracy")
    ax_acc.set_ylim(0.0, 1.05)
    ax_loss.legend()
    fig.tight_layout()
    name = "training_curves.png"
    fig.savefig(os.path.join(out_dir, name), dpi=120)
    plt.close(fig)
    return name


def render_run_figures(report: ExperimentReport, out_dir) -> list[str]:
    paths = render_heatmaps(report, out_dir)
    curve = render_training_curves(report, out_dir)
    if curve:
        paths.append(curve)
    return paths


def render_sweep_figure(trend_rows: list[dict], out_dir) -> str:
    """Metric trends against r1, one line per d per metric family."""
    fig, (ax_acc, ax_auc) = plt.subplots(1, 2, figsize=(11, 4.5))
    d_values = sorted({row["d"] for row in trend_rows})
    for d in d_values:
        rows = sorted((r for r in trend_rows if r["d"] == d), key=lambda r: r["r1"])
        r1s = [r["r1"] for r in rows]
        ax_acc.plot(r1s, [r["train_acc"] for r in rows], marker="o", label=f"train, d={d:g}")
        ax_acc.plot(r1s, [r["test_acc"] for r in rows], marker="s", linestyle="--", label=f"test, d={d:g}")
        for metric in ("auc_nn", "auc_entropy", "auc_mentropy", "auc_gradx"):
            ax_auc.plot(r1s, [r[metric] for r in rows], marker=".", label=f"{metric[4:]}, d={d:g}")
    for ax, ylabel in ((ax_acc, "accuracy"), (ax_auc, "attack AUC")):
        ax.set_xscale("log", base=2)
        ax.set_xlabel("inner radius r1")
        ax.set_ylabel(ylabel)
        ax.legend(fontsize=7)
    fig.tight_layout()
    name = "sweep_trend.png"
    fig.savefig(os.path.join(out_dir, name), dpi=120)
    plt.close(fig)
    return name


def render_bin_tables(tables: list[tuple[int, object]], out_dir, stage: str) -> list[str]:
    """Heat maps for diagnose-only reruns; tables are (seed, result) pairs."""
    paths = []
    for seed, diag in tables:
        fig, axes = plt.subplots(1, 2, figsize=(11, 4.5))
        im = _heat_panel(axes[0], diag.member_table, f"members (r = {diag.member_pearson:.3f})")
        _heat_panel(axes[1], diag.nonmember_table, f"non-members (r = {diag.nonmember_pearson:.3f})")
        fig.colorbar(im, ax=axes, label="attack accuracy", fraction=0.046)
        fig.suptitle(f"seed {seed}, magnitude {stage}")
        name = f"seed{seed}_magnitude_margin.png"
        fig.savefig(os.path.join(out_dir, name), dpi=120)
        plt.close(fig)
        paths.append(name)
    return paths


def latency_figure(results: dict[str, dict], out_dir) -> str:
    """Bar chart of per-head forward latency; results: name -> bench dict."""
    fig, ax = plt.subplots(figsize=(6, 4))
    names = list(results)
    means = [results[n]["mean_ms"] for n in names]
    stds = [results[n]["std_ms"] for n in names]
    ax.bar(names, means, yerr=stds, capsize=4, color="#4878a8")
    ax.set_ylabel("forward latency (ms)")
    fig.tight_layout()
    name = "latency.png"
    fig.savefig(os.path.join(out_dir, name), dpi=120)
    plt.close(fig)
    return name
