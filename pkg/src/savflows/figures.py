"""Figure rendering for run reports.

Every report path that writes a CSV can also render a PNG next to it; the
CSV stays the machine-readable contract, the figures are for eyeballing.
"""
from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .spectral import Field  # noqa: E402


def save_trace_figure(traces, path, title: str = ""):
    """Energy / auxiliary-energy history plus the blend-factor trace."""
    t = [tr.t for tr in traces]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.2))
    ax1.plot(t, [tr.energy for tr in traces], label="E")
    if not all(math.isnan(tr.r) for tr in traces):
        ax1.plot(t, [tr.r for tr in traces], "--", label="R")
    ax1.set_xlabel("t")
    ax1.set_ylabel("energy")
    ax1.legend(frameon=False)
    zeta = [0.0 if math.isnan(tr.zeta0) else tr.zeta0 for tr in traces]
    ax2.plot(t, zeta, ".", markersize=2)
    ax2.set_xlabel("t")
    ax2.set_ylabel("zeta0")
    ax2.set_ylim(-0.05, 1.05)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def _panel(ax, f: Field, title: str):
    grid = f.grid
    if grid.dim == 1:
        ax.plot(grid.axis_coords(0), f.values)
    elif grid.dim == 2:
        extent = [grid.origin[0], grid.origin[0] + grid.extents[0],
                  grid.origin[1], grid.origin[1] + grid.extents[1]]
        im = ax.imshow(f.values.T, origin="lower", extent=extent, cmap="RdBu_r")
        ax.figure.colorbar(im, ax=ax, fraction=0.046)
    else:
        mid = grid.modes[2] // 2
        extent = [grid.origin[0], grid.origin[0] + grid.extents[0],
                  grid.origin[1], grid.origin[1] + grid.extents[1]]
        im = ax.imshow(f.values[:, :, mid].T, origin="lower", extent=extent,
                       cmap="RdBu_r")
        ax.figure.colorbar(im, ax=ax, fraction=0.046)
        title = f"{title} (mid slice)" if title else "mid slice"
    if title:
        ax.set_title(title, fontsize=9)


def save_field_figure(f: Field, path, title: str = ""):
    fig, ax = plt.subplots(figsize=(4.2, 3.6))
    _panel(ax, f, title)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_fields_figure(named_fields, path, suptitle: str = ""):
    """Side-by-side panels, one per (title, field) pair."""
    n = len(named_fields)
    fig, axes = plt.subplots(1, n, figsize=(3.8 * n, 3.4))
    if n == 1:
        axes = [axes]
    for ax, (title, f) in zip(axes, named_fields):
        _panel(ax, f, title)
    if suptitle:
        fig.suptitle(suptitle)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_convergence_figure(rows, path, title: str = ""):
    """Log-log error vs step size, one line per (variant, order)."""
    fig, ax = plt.subplots(figsize=(4.6, 3.6))
    series: dict[tuple, list] = {}
    for row in rows:
        series.setdefault((row.variant, row.order), []).append((row.dt, row.error))
    for (variant, order), pts in sorted(series.items()):
        pts.sort()
        dts = [p[0] for p in pts]
        errs = [p[1] for p in pts]
        ax.loglog(dts, errs, "o-", label=f"{variant}/k={order}")
    if rows:
        dts = sorted({row.dt for row in rows})
        anchor = max(r.error for r in rows if np.isfinite(r.error))
        for k in sorted({row.order for row in rows}):
            guide = [anchor * (d / dts[-1]) ** k for d in dts]
            ax.loglog(dts, guide, "k:", linewidth=0.6)
    ax.set_xlabel("dt")
    ax.set_ylabel("error")
    ax.legend(frameon=False, fontsize=7)
    if title:
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_comparison_figure(rows, path, title: str = ""):
    fig, ax = plt.subplots(figsize=(4.6, 3.6))
    series: dict[str, list] = {}
    for row in rows:
        series.setdefault(row.variant, []).append((row.dt, row.error))
    for variant, pts in sorted(series.items()):
        pts.sort()
        ax.loglog([p[0] for p in pts], [p[1] for p in pts], "o-", label=variant)
    ax.set_xlabel("dt")
    ax.set_ylabel("error vs reference")
    ax.legend(frameon=False, fontsize=8)
    if title:
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
