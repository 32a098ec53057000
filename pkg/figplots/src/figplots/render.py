"""Render the simulator's figure CSVs to image files.

One renderer per figure kind: the pair-density heat map, the
conditional-density sheets over time (three panels, time pointing up),
and the post-measurement trajectory fan.  Rendering is read-only and all
axis ranges come from the data extents.
"""

from __future__ import annotations

import sys

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .datasets import SchemaError, load_dataset, pivot_sheet


def render_fig1(dataset, out_path: str):
    """Heat map of the pair density over the box."""
    t = dataset.table
    x1 = np.unique(t["x1"])
    x2 = np.unique(t["x2"])
    dens = np.full((len(x1), len(x2)), np.nan)
    dens[np.searchsorted(x1, t["x1"]), np.searchsorted(x2, t["x2"])] = t["density"]
    if np.isnan(dens).any():
        raise SchemaError("density records do not fill the (x1, x2) grid")
    fig, ax = plt.subplots(figsize=(4.6, 4.0))
    im = ax.pcolormesh(x1, x2, dens.T, shading="auto", cmap="viridis")
    fig.colorbar(im, ax=ax, label="density")
    ax.set_xlabel("$x_1$")
    ax.set_ylabel("$x_2$")
    ax.set_title("pair density")
    ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def render_fig2(dataset, out_path: str):
    """Conditional density of the free coordinate, time pointing up."""
    t = dataset.table
    panels = ("plus", "minus", "mixture")
    sheets = {}
    for name in panels:
        mask = t["panel"] == name
        if not mask.any():
            raise SchemaError(f"panel {name!r} missing from the sheet file")
        sheets[name] = pivot_sheet(t["t"][mask], t["x2"][mask],
                                   t["density"][mask])
    vmax = max(s[2].max() for s in sheets.values())
    fig, axes = plt.subplots(1, 3, figsize=(10.5, 3.6), sharey=True)
    for ax, name in zip(axes, panels):
        ts, xs, sheet = sheets[name]
        im = ax.pcolormesh(xs, ts, sheet, shading="auto", cmap="magma",
                           vmin=0.0, vmax=vmax)
        ax.set_title(f"side {name}" if name != "mixture" else "mixture")
        ax.set_xlabel("$x_2$")
    axes[0].set_ylabel("$t$")
    fig.colorbar(im, ax=axes, label="density", fraction=0.03)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return sheets


def render_fig3(dataset, out_path: str):
    """Trajectory fan of the free coordinate after the measurement."""
    t = dataset.table
    fig, ax = plt.subplots(figsize=(4.8, 5.2))
    for k in np.unique(t["trajectory"]):
        mask = t["trajectory"] == k
        order = np.argsort(t["t"][mask])
        ax.plot(t["x2"][mask][order], t["t"][mask][order], lw=0.9)
    ax.set_xlabel("$x_2$")
    ax.set_ylabel("$t$")
    ax.set_title("trajectories after the measurement")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


_RENDERERS = {"fig1": render_fig1, "fig2": render_fig2, "fig3": render_fig3}


def render(kind: str, in_path: str, out_path: str):
    """Load one figure-data file and write its image."""
    dataset = load_dataset(kind, in_path)
    _RENDERERS[kind](dataset, out_path)
    return out_path


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    if len(argv) != 3 or argv[0] not in _RENDERERS:
        print("usage: figplots {fig1|fig2|fig3} <input.csv> <output image>",
              file=sys.stderr)
        return 2
    try:
        render(*argv)
    except (SchemaError, OSError, ValueError) as exc:
        print(f"figplots: {exc}", file=sys.stderr)
        return 1
    return 0


def _fixed_kind_main(kind: str) -> int:
    argv = sys.argv[1:]
    if len(argv) != 2:
        print(f"usage: figplot-{kind} <input.csv> <output image>",
              file=sys.stderr)
        return 2
    return main([kind, *argv])


def main_fig1() -> int:
    return _fixed_kind_main("fig1")


def main_fig2() -> int:
    return _fixed_kind_main("fig2")


def main_fig3() -> int:
    return _fixed_kind_main("fig3")
