"""Metrics emission and figure rendering for synthesis runs.

Writes one CSV row per run with a fixed, versioned column schema, and
renders the scene (obstacles, target, controlled-cell density, rollouts)
plus the relative reachable-set fan to PNG files next to the CSV.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Rectangle

from .grid import GridSpec
from .reach import ReachDict
from .scenario import Scenario
from .synthesis import Controller, SynthesisMetrics
from .validation import Rollout

METRICS_SCHEMA_VERSION = 1


def append_metrics_row(path, metrics: SynthesisMetrics) -> None:
    """Append one run to the metrics CSV, writing the header when new."""
    new_file = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as f:
        writer = csv.writer(f)
        if new_file:
            writer.writerow(SynthesisMetrics.CSV_COLUMNS)
        writer.writerow(metrics.csv_row())


def format_metrics_table(rows: list[SynthesisMetrics]) -> str:
    header = SynthesisMetrics.CSV_COLUMNS
    table = [header] + [m.csv_row() for m in rows]
    widths = [max(len(r[i]) for r in table) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)) for r in table]
    return "\n".join(lines)


def _draw_boxes(ax, boxes, **kwargs):
    for b in boxes:
        ax.add_patch(Rectangle((b.lower[1], b.lower[0]),
                               b.upper[1] - b.lower[1], b.upper[0] - b.lower[0],
                               **kwargs))


def render_scene_figure(path, scenario: Scenario, grid: GridSpec,
                        controller: Controller | None = None,
                        rollouts: list[Rollout] | None = None) -> None:
    """Top-down scene: obstacles red, target green, controlled-cell density
    blue, rollout traces black. Axes are E (west-east) vs N (south-north)."""
    fig, ax = plt.subplots(figsize=(7, 7 * grid.bounds.widths[0] / grid.bounds.widths[1]))
    _draw_boxes(ax, [scenario.state_box], fill=False, edgecolor="k", linewidth=1.0)
    _draw_boxes(ax, scenario.avoid_boxes, facecolor="tab:red", alpha=0.45,
                edgecolor="none")
    _draw_boxes(ax, [scenario.reach_box], facecolor="tab:green", alpha=0.45,
                edgecolor="none")

    if controller is not None:
        n_i, n_j, n_t = grid.counts
        density = (controller.assignment.reshape(grid.counts) >= 0).mean(axis=2)
        extent = (grid.bounds.lower[1], grid.bounds.upper[1],
                  grid.bounds.lower[0], grid.bounds.upper[0])
        ax.imshow(density, origin="lower", extent=extent, aspect="auto",
                  cmap="Blues", alpha=0.6, vmin=0.0, vmax=1.0)

    if rollouts:
        for ro in rollouts:
            ax.plot(ro.states[:, 1], ro.states[:, 0], "k-", linewidth=0.7, alpha=0.8)
            ax.plot(ro.states[0, 1], ro.states[0, 0], "ko", markersize=2.5)

    ax.set_xlim(grid.bounds.lower[1] - 0.5, grid.bounds.upper[1] + 0.5)
    ax.set_ylim(grid.bounds.lower[0] - 0.5, grid.bounds.upper[0] + 0.5)
    ax.set_xlabel("E")
    ax.set_ylabel("N")
    title = scenario.name
    if controller is not None:
        title += f" (controlled fraction shaded, {controller.n_controlled} cells)"
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_reachdict_figure(path, rd: ReachDict) -> None:
    """Planar projection of every relative tube (all controls, all windows)."""
    fig, ax = plt.subplots(figsize=(6, 6))
    seg = rd.seg_bounds[0]  # (A, K+1, 2, 3)
    for a in range(seg.shape[0]):
        for k in range(seg.shape[1]):
            lo, hi = seg[a, k, 0], seg[a, k, 1]
            ax.add_patch(Rectangle((lo[1], lo[0]), hi[1] - lo[1], hi[0] - lo[0],
                                   fill=False, edgecolor="tab:blue",
                                   linewidth=0.3, alpha=0.25))
    ax.plot(0, 0, "k+", markersize=8)
    ax.autoscale_view()
    ax.set_xlabel("relative E")
    ax.set_ylabel("relative N")
    ax.set_title(f"relative reachable tubes ({seg.shape[0]} controls)")
    ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
