"""PNG figures for the reporting commands (headless Agg backend)."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import StorageError  # noqa: E402

DPI = 110


def _save(fig, path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        # no timestamp/software chunks so reruns give identical bytes
        fig.savefig(path, dpi=DPI, bbox_inches="tight", metadata={"Software": None})
    except OSError as exc:
        raise StorageError(f"cannot write figure {path}: {exc}") from exc
    finally:
        plt.close(fig)
    return path


def _annotate(ax, values, fmt, dark_high=True):
    """Write each cell's value, in white where the colormap is dark."""
    hi = np.nanmax(values) if values.size else 0
    for (i, j), v in np.ndenumerate(values):
        high = bool(hi) and v > 0.6 * hi
        color = "white" if high == dark_high else "black"
        ax.text(j, i, format(v, fmt), ha="center", va="center", color=color, fontsize=8)


def confusion_figure(report, path, title="Confusion matrix"):
    """Heatmap of a metrics report dict (rows actual, columns predicted)."""
    counts = np.asarray(report["counts"])
    labels = report["classes"]
    fig, ax = plt.subplots(figsize=(5.2, 4.4))
    im = ax.imshow(counts, cmap="Blues")
    ax.set_xticks(range(len(labels)), labels, rotation=35, ha="right")
    ax.set_yticks(range(len(labels)), labels)
    ax.set_xlabel("predicted")
    ax.set_ylabel("actual")
    ax.set_title(f"{title} (accuracy {report['accuracy']:.3f})")
    _annotate(ax, counts, "d")
    fig.colorbar(im, ax=ax, fraction=0.046)
    return _save(fig, path)


def cv_table_figure(grid, path):
    """Cross-validated accuracy over the (C, gamma) grid; ``grid`` is ``GridResult.to_dict()``."""
    table = np.asarray(grid["cv_accuracy"], dtype=float)
    fig, ax = plt.subplots(figsize=(5.2, 4.4))
    im = ax.imshow(table, cmap="viridis", vmin=0.0, vmax=1.0)
    ax.set_xticks(range(len(grid["gamma_values"])), [f"{g:g}" for g in grid["gamma_values"]])
    ax.set_yticks(range(len(grid["C_values"])), [f"{c:g}" for c in grid["C_values"]])
    ax.set_xlabel("gamma")
    ax.set_ylabel("C")
    ax.set_title(f"CV accuracy, chosen C={grid['C']:g} gamma={grid['gamma']:g}")
    _annotate(ax, table, ".3f", dark_high=False)
    fig.colorbar(im, ax=ax, fraction=0.046)
    return _save(fig, path)


def training_curves_figure(epochs, path):
    """Loss and accuracy per epoch from a CNN training log."""
    ep = [e["epoch"] for e in epochs]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    ax1.plot(ep, [e["train_loss"] for e in epochs], label="during updates")
    ax1.plot(ep, [e["loss"] for e in epochs], label="inference pass")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("focal loss")
    ax1.set_yscale("log")
    ax1.legend()
    ax2.plot(ep, [e["accuracy"] for e in epochs], color="tab:green")
    ax2.set_ylim(-0.02, 1.02)
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("training accuracy")
    fig.tight_layout()
    return _save(fig, path)


def cluster_profile_figure(centroids, grade_names, feature_names, path):
    """Centroid coordinates (scaled space), one group of bars per grade."""
    centroids = np.asarray(centroids, dtype=float)
    k, d = centroids.shape
    width = 0.8 / d
    fig, ax = plt.subplots(figsize=(7, 3.8))
    x = np.arange(k)
    for j in range(d):
        ax.bar(x + (j - (d - 1) / 2) * width, centroids[:, j], width, label=feature_names[j])
    ax.axhline(0, color="black", lw=0.6)
    ax.set_xticks(x, grade_names)
    ax.set_ylabel("standardized centroid value")
    ax.legend(fontsize=8, ncol=d)
    return _save(fig, path)
