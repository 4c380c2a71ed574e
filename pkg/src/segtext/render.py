"""Matplotlib rendering: scene/detection overlays and ablation figures."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Polygon as MplPolygon  # noqa: E402

from . import grid, proposal  # noqa: E402

TYPE_COLORS = {
    proposal.CHAR: "tab:orange",
    proposal.INTERVAL: "tab:cyan",
    proposal.NONTEXT: "tab:pink",
    proposal.UNLABELED: "tab:gray",
}


def render_overlay(maps, detection=None, segments=None, truth_polygons=None,
                   ggtr=None, out_path=None, title=None):
    """Scene maps with truth polygons, detections and per-type segments.

    Saves to out_path when given (format from the extension, e.g. .svg) and
    returns the figure.
    """
    rows, cols = maps.shape
    fig, ax = plt.subplots(figsize=(7, 7 * rows / cols))
    background = np.maximum(0.55 * (maps.tr > 0), maps.tcl)
    if ggtr is not None:
        background = np.maximum(background, 0.25 * (ggtr >= 0.5))
    ax.imshow(background, cmap="gray_r", origin="upper",
              extent=(0, cols, rows, 0), interpolation="nearest")

    if truth_polygons is not None:
        for poly in truth_polygons:
            ax.add_patch(MplPolygon(np.asarray(poly), closed=True, fill=False,
                                    edgecolor="tab:green", linewidth=1.2, linestyle="--"))
    if segments is not None:
        for seg in segments:
            color = TYPE_COLORS.get(seg.type, "tab:gray")
            ax.add_patch(MplPolygon(grid.corners(seg.rect), closed=True, fill=False,
                                    edgecolor=color, linewidth=0.5, alpha=0.8))
    if detection is not None:
        for poly, kept, _ in detection.polygons:
            color = "tab:red" if kept else "0.6"
            ax.add_patch(MplPolygon(np.asarray(poly), closed=True, fill=False,
                                    edgecolor=color, linewidth=1.6 if kept else 0.9))
    ax.set_xlim(0, cols)
    ax.set_ylim(rows, 0)
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    if out_path is not None:
        fig.savefig(out_path, metadata=_clean_metadata(str(out_path)))
        plt.close(fig)
    return fig


def render_ablation_figure(rows, out_path):
    """Grouped P/R/F bars, one cluster per ablation row."""
    names = [r.name for r in rows]
    x = np.arange(len(rows))
    width = 0.27
    fig, ax = plt.subplots(figsize=(max(6, 1.1 * len(rows)), 4))
    ax.bar(x - width, [r.precision for r in rows], width, label="P")
    ax.bar(x, [r.recall for r in rows], width, label="R")
    ax.bar(x + width, [r.f for r in rows], width, label="F")
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.legend()
    ax.set_ylabel("score")
    fig.tight_layout()
    fig.savefig(out_path, metadata=_clean_metadata(str(out_path)))
    plt.close(fig)


def _clean_metadata(path):
    # keep exported files free of wall-clock timestamps
    if path.endswith(".svg"):
        return {"Date": None}
    if path.endswith(".png"):
        return {"Software": None}
    return None
