"""Matplotlib summary figure for a pipeline run."""
from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .fileio import atomic_write_bytes
from .orientation import phase

STYLE = {
    "font.size": 8,
    "axes.titlesize": 9,
    "figure.dpi": 100,
    "savefig.bbox": "tight",
}


def _quiver(ax, image, field, stride):
    ax.imshow(image, cmap="gray", vmin=0, vmax=255)
    h, w = field.shape
    rows = np.arange(stride // 2, h, stride)
    cols = np.arange(stride // 2, w, stride)
    f = field[np.ix_(rows, cols)]
    theta = phase(f)
    mag = np.clip(np.abs(f), 0, 1)
    cc, rr = np.meshgrid(cols, rows)
    # headless arrows drawn both ways make orientation bars
    for sgn in (1, -1):
        ax.quiver(cc, rr, sgn * np.cos(theta) * mag, sgn * np.sin(theta) * mag, color="tab:red",
                  angles="xy", scale_units="xy", scale=2.0 / (0.8 * stride), headwidth=0,
                  headlength=0, headaxislength=0, pivot="tail", width=0.003)


def pipeline_figure(path, image, mask, orientation, refined, report, stride: int = 16):
    """Four panels (input, foreground, raw and refined orientation) with the run summary."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(2, 2, figsize=(8, 8.4))
        axes[0, 0].imshow(image, cmap="gray", vmin=0, vmax=255)
        axes[0, 0].set_title("input")
        axes[0, 1].imshow(image, cmap="gray", vmin=0, vmax=255)
        axes[0, 1].contour(mask.astype(float), levels=[0.5], colors="tab:blue", linewidths=1)
        axes[0, 1].set_title(f"foreground ({report.foreground_pixels} px)")
        _quiver(axes[1, 0], image, orientation, stride)
        axes[1, 0].set_title("estimated orientation")
        _quiver(axes[1, 1], image, refined, stride)
        axes[1, 1].set_title(f"refined ({report.iterations} passes)")
        for ax in axes.flat:
            ax.set_xticks([])
            ax.set_yticks([])
        summary = f"T_s = {report.T_s:.2f} px   segments = {report.reliable_segments}"
        if "refined" in report.errors:
            summary += f"   refined mean error = {report.errors['refined'].mean_deg:.2f} deg"
        fig.suptitle(summary)
        buf = io.BytesIO()
        fig.savefig(buf, format="png")
        plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())
