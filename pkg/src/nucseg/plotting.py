"""Report figures rendered next to the delimited outputs.

All figures go through the Agg backend and are written without volatile PNG
metadata so repeated runs produce byte-identical files.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .instances import REPORT_ORDER
from .metrics import MetricsReport

# metadata that makes savefig output byte-stable across runs
_PNG_METADATA = {"Software": None}


def _save(fig, path):
    fig.savefig(path, metadata=_PNG_METADATA)
    plt.close(fig)


def save_pq_figure(report: MetricsReport, path) -> None:
    """Bar chart of per-class PQ with the aggregate drawn as a line."""
    mpq, *per_class = report.pq_row()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(range(len(per_class)), per_class, color="tab:blue")
    ax.axhline(mpq, color="tab:red", linestyle="--", label=f"mPQ+ = {mpq:.4f}")
    ax.set_xticks(range(len(per_class)), REPORT_ORDER)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("PQ")
    ax.set_title("Per-class panoptic quality")
    ax.legend(loc="lower right")
    fig.tight_layout()
    _save(fig, path)


def save_r2_figure(pred_counts, gt_counts, report: MetricsReport, path) -> None:
    """Per-class scatter of predicted vs true counts, annotated with r2."""
    pred = np.asarray(pred_counts)
    gt = np.asarray(gt_counts)
    fig, axes = plt.subplots(2, 3, figsize=(10, 6), sharex=False, sharey=False)
    r2_cols = report.r2_row()[1:]
    from .instances import REPORT_CLASS_IDS

    for ax, name, cid, r2 in zip(axes.ravel(), REPORT_ORDER, REPORT_CLASS_IDS, r2_cols):
        x = gt[:, cid - 1]
        y = pred[:, cid - 1]
        top = max(1, x.max() if x.size else 1, y.max() if y.size else 1)
        ax.plot([0, top], [0, top], color="0.7", linewidth=1)
        ax.scatter(x, y, s=12, color="tab:blue")
        label = f"{r2:.4f}" if np.isfinite(r2) else "degenerate"
        ax.set_title(f"{name} (r2 = {label})", fontsize=10)
        ax.set_xlabel("true count")
        ax.set_ylabel("predicted count")
    fig.suptitle(f"Cell counts, overall r2 = {report.overall_r2:.4f}")
    fig.tight_layout()
    _save(fig, path)


def save_instance_overlay(gt_labels, pred_labels, path) -> None:
    """Side-by-side view of ground-truth and predicted instance maps."""
    fig, axes = plt.subplots(1, 2, figsize=(9, 4.5))
    for ax, labels, title in (
        (axes[0], np.asarray(gt_labels), "ground truth"),
        (axes[1], np.asarray(pred_labels), "prediction"),
    ):
        shown = np.where(labels > 0, (labels - 1) % 20 + 1, 0)
        ax.imshow(shown, cmap="tab20", interpolation="nearest", vmin=0, vmax=20)
        ax.set_title(f"{title} ({int(labels.max())} instances)")
        ax.axis("off")
    fig.tight_layout()
    _save(fig, path)
