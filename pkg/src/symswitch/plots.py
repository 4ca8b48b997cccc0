"""Figure rendering for controller grids and closed-loop traces.

All functions write PNG files next to the CSV reports; nothing is shown
interactively (the Agg backend is forced on import).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.colors import ListedColormap
from matplotlib.patches import Patch, Rectangle

from .abstraction import Region, SymbolicModel
from .closedloop import ClosedLoopTrace

# class codes 0..3: uncontrollable, mode 1 only, mode 2 only, both
_GRID_COLORS = ["white", "0.25", "0.80", "0.55"]
_GRID_NAMES = ["uncontrollable", "mode 1", "mode 2", "both"]


def render_class_grid(
    grid: np.ndarray, model: SymbolicModel, path, title: str = "controller classes"
) -> None:
    sp = model.lattice.spacing
    kmin = model.kmin
    extent = [
        (kmin[0] - 0.5) * sp,
        (kmin[0] + grid.shape[0] - 0.5) * sp,
        (kmin[1] - 0.5) * sp,
        (kmin[1] + grid.shape[1] - 0.5) * sp,
    ]
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.imshow(
        grid.T,
        origin="lower",
        extent=extent,
        cmap=ListedColormap(_GRID_COLORS),
        vmin=-0.5,
        vmax=3.5,
        interpolation="nearest",
        aspect="auto",
    )
    ax.legend(
        handles=[
            Patch(facecolor=c, edgecolor="k", label=n)
            for c, n in zip(_GRID_COLORS, _GRID_NAMES)
        ],
        loc="upper right",
        fontsize=8,
    )
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _draw_box(ax, region: Region, **kw) -> None:
    lo, hi = region.lo, region.hi
    ax.add_patch(Rectangle(lo, hi[0] - lo[0], hi[1] - lo[1], fill=False, **kw))


def render_trajectory(
    trace: ClosedLoopTrace,
    keep: Region,
    avoid: Region | None,
    epsilon: float,
    path,
    title: str = "closed-loop trajectory",
) -> None:
    fig, ax = plt.subplots(figsize=(6, 4.5))
    _draw_box(ax, keep, edgecolor="tab:blue", linestyle="--", label="keep")
    _draw_box(ax, keep.inflate(epsilon), edgecolor="tab:blue")
    if avoid is not None:
        _draw_box(ax, avoid, edgecolor="tab:red", linestyle="--", label="avoid")
        lo, hi = avoid.lo + epsilon, avoid.hi - epsilon
        if np.all(lo <= hi):
            _draw_box(ax, Region(lo, hi), edgecolor="tab:red")
    ax.plot(trace.states[:, 0], trace.states[:, 1], "-", lw=0.8, color="0.3")
    ax.plot(trace.states[0, 0], trace.states[0, 1], "o", color="tab:green", ms=5)
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_title(title)
    ax.autoscale_view()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_signals(trace: ClosedLoopTrace, path) -> None:
    """Applied mode sequence and state evolution against time."""
    fig, (ax0, ax1) = plt.subplots(
        2, 1, figsize=(6, 5), sharex=True, height_ratios=[1, 2]
    )
    t_modes = trace.times[:-1]
    ax0.step(t_modes, trace.modes, where="post", color="k")
    ax0.set_yticks(sorted(set(int(p) for p in trace.modes)))
    ax0.set_ylabel("mode")
    for i in range(trace.states.shape[1]):
        ax1.plot(trace.times, trace.states[:, i], label=f"x{i + 1}")
    ax1.set_xlabel("t")
    ax1.set_ylabel("state")
    ax1.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
