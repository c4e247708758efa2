"""Matplotlib rendering of trajectory and phase-plane artifacts.

Figures are rendered straight to files with the Agg backend; the CSV and
gnuplot outputs remain the authoritative data artifacts, the images are a
convenience view of the same data.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .analysis import PhasePortrait
from .dynamics import RunClass

_CLASS_LEVEL = {
    RunClass.BLOWUP_OBSERVED: 0,
    RunClass.UNDETERMINED: 1,
    RunClass.GLOBAL_OBSERVED: 2,
}

_CURVE_STYLE = {
    "critical_curve": ("tab:purple", "critical points"),
    "ge_curve": ("tab:green", "global-existence criterion"),
    "bu_w_curve": ("tab:red", "blow-up criterion (second moment)"),
    "bu_c_curve": ("tab:orange", "blow-up criterion (entropy)"),
    "separatrix": ("black", "basin boundary"),
}


def trajectory_figure(rows: list, path: str) -> None:
    """Positions and second moment against time.

    ``rows`` are (t, state, diagnostics) sample triples from a trajectory
    record.
    """
    t = np.array([r[0] for r in rows])
    xs = np.vstack([r[1].x for r in rows])
    i2 = np.array([r[2].i2 for r in rows])
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 7), sharex=True)
    for k in range(xs.shape[1]):
        ax1.plot(t, xs[:, k], lw=1.0)
    ax1.set_ylabel("positions")
    ax2.plot(t, i2, color="tab:blue")
    ax2.set_xlabel("t")
    ax2.set_ylabel("|X|^2")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _basin_panel(ax, portrait: PhasePortrait) -> None:
    levels = np.vectorize(_CLASS_LEVEL.get)(portrait.grid)
    ax.pcolormesh(portrait.u_grid, portrait.v_grid, levels.T,
                  cmap="RdYlGn", vmin=0, vmax=2, shading="nearest",
                  alpha=0.45)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlim(portrait.u_grid[0], portrait.u_grid[-1])
    ax.set_ylim(portrait.v_grid[0], portrait.v_grid[-1])


def phase_figure(portrait: PhasePortrait, path: str) -> None:
    """Six panels: each overlay curve on the basin grid, then all together."""
    names = ["critical_curve", "ge_curve", "bu_w_curve", "bu_c_curve",
             "separatrix"]
    fig, axes = plt.subplots(2, 3, figsize=(13, 8))
    panels = list(axes.flat)
    for ax, name in zip(panels[:5], names):
        _basin_panel(ax, portrait)
        curve = portrait.curves.get(name)
        color, label = _CURVE_STYLE[name]
        if curve is not None and len(curve):
            ax.plot(curve[:, 0], curve[:, 1], color=color, lw=1.5)
        ax.set_title(label, fontsize=9)
        ax.set_xlabel("u")
        ax.set_ylabel("v")
    ax = panels[5]
    _basin_panel(ax, portrait)
    for name in names:
        curve = portrait.curves.get(name)
        color, label = _CURVE_STYLE[name]
        if curve is not None and len(curve):
            ax.plot(curve[:, 0], curve[:, 1], color=color, lw=1.2, label=label)
    ax.set_title("all curves", fontsize=9)
    ax.set_xlabel("u")
    ax.set_ylabel("v")
    ax.legend(fontsize=6, loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
