"""Report figures rendered to PNG next to the delimited outputs.

Statistical plots only (density curves, histograms, trends); cartographic
rendering of the rasters is left to external tools.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

# fixed metadata keeps PNG bytes reproducible across runs
_SAVE_KW = {"dpi": 120, "metadata": {"Software": "mobiscope"}}

_GROUP_COLORS = ["tab:red", "tab:green", "tab:blue", "tab:cyan", "tab:purple"]


def _plot_density(ax, density, label, color, lw=1.5):
    sel = density.densities > 0
    ax.plot(density.centers[sel], density.densities[sel], marker="o",
            markersize=2.5, lw=lw, label=label, color=color)


def _density_panel(ax, title, curves, fit=None):
    for (label, density), color in zip(curves, _GROUP_COLORS):
        if density is not None:
            _plot_density(ax, density, label, color)
    if fit is not None:
        for k, (lo, hi) in enumerate(fit.segments()):
            if fit.slopes[k] is None:
                continue
            xs = np.logspace(math.log10(max(lo, 1e-3)), math.log10(hi), 20)
            ys = 10 ** (fit.intercepts[k] + fit.slopes[k] * np.log10(xs))
            ax.plot(xs, ys, "--", lw=1, color="black", alpha=0.6)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_title(title, fontsize=10)
    ax.set_xlabel("radius of gyration (km)", fontsize=8)
    ax.set_ylabel("density", fontsize=8)
    if len(curves) > 1:
        ax.legend(fontsize=7)


def render_report_figures(workdir, densities, groups, hist, monthly, cfg) -> list:
    """Write the report figure set; returns the created paths."""
    workdir = Path(workdir)
    paths = []

    # gyradius density, overall and per demographic dimension
    from .analysis import fit_segments
    fig, axes = plt.subplots(2, 2, figsize=(9, 7))
    all_density = densities.get("all")
    fit = None
    if all_density is not None:
        fit = fit_segments(all_density, cfg.fit_breakpoints_km, cfg.fit_lower_km)
    _density_panel(axes[0, 0], "all users",
                   [("all", all_density)] if all_density is not None else [], fit)
    panel_specs = [("race", axes[0, 1]), ("gender", axes[1, 0]), ("age", axes[1, 1])]
    for dim, ax in panel_specs:
        curves = [(value, densities.get((dim, value)))
                  for value in groups.get(dim, {})]
        curves = [(label, d) for label, d in curves if d is not None]
        _density_panel(ax, f"by {dim}", curves)
    fig.tight_layout()
    path = workdir / "fig_gyradius_density.png"
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    paths.append(path)

    # activity-center count histogram
    fig, ax = plt.subplots(figsize=(6, 4))
    if hist["fractions"]:
        ks = sorted(hist["fractions"])
        ax.bar(ks, [hist["fractions"][k] for k in ks], color="tab:blue")
        ax.axvline(hist["mean"], color="tab:red", lw=1,
                   label=f"mean {hist['mean']:.1f}")
        ax.axvline(hist["median"], color="tab:green", lw=1,
                   label=f"median {hist['median']:.0f}")
        ax.legend(fontsize=8)
    ax.set_xlabel("activity centers per user")
    ax.set_ylabel("fraction of users")
    fig.tight_layout()
    path = workdir / "fig_center_histogram.png"
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    paths.append(path)

    # cumulative monthly mean gyradius
    fig, ax = plt.subplots(figsize=(6, 4))
    months = [p.month for p in monthly]
    means = [p.mean_gyradius_m / 1000.0 if not math.isnan(p.mean_gyradius_m) else None
             for p in monthly]
    ax.plot(months, means, marker="o", color="tab:blue")
    ax.set_xlabel("month")
    ax.set_ylabel("mean gyradius (km), cumulative")
    ax.tick_params(axis="x", rotation=45)
    fig.tight_layout()
    path = workdir / "fig_monthly_gyradius.png"
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    paths.append(path)
    return paths
