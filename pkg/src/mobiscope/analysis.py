"""Statistical analysis products: log-log densities with segmented power-law
fits, correlations, activity-center histograms and Gaussian KDE rasters.

Distances are handled in kilometers on log axes (mobility scales span four
decades); rasters live in projected meters with densities in points per m².
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geo import ProjectedPoint


# ---------------------------------------------------------------------------
# Log-log density and segmented fits
# ---------------------------------------------------------------------------

@dataclass
class LogLogDensity:
    """Probability density over logarithmically spaced bins.

    density[i] = count[i] / (n_values * linear bin width in km), so the
    densities integrate to 1 over the covered range.
    """

    centers: np.ndarray   # geometric means of the bin edges, km
    densities: np.ndarray
    edges: np.ndarray
    counts: Optional[np.ndarray] = None
    n_values: int = 0
    n_zero: int = 0


def log_log_density(values, bins_per_decade: int = 8) -> LogLogDensity:
    """Histogram positive values (km) on log-spaced bins covering [min, max].

    Zeros are excluded and counted; negative values are invalid.
    """
    vals = np.asarray(values, dtype=float)
    if vals.size == 0:
        raise ValueError("no values to bin")
    if (vals < 0).any():
        raise ValueError("negative values are not usable on a log axis")
    n_zero = int((vals == 0).sum())
    pos = vals[vals > 0]
    if pos.size == 0:
        raise ValueError("all values are zero")
    vmin, vmax = float(pos.min()), float(pos.max())
    step = 10.0 ** (1.0 / bins_per_decade)
    n_bins = max(1, math.ceil(math.log10(vmax / vmin) * bins_per_decade)) if vmax > vmin else 1
    edges = vmin * step ** np.arange(n_bins + 1)
    while edges[-1] < vmax:  # guard float shortfall at the top edge
        n_bins += 1
        edges = vmin * step ** np.arange(n_bins + 1)
    counts, _ = np.histogram(pos, bins=edges)
    widths = np.diff(edges)
    densities = counts / (pos.size * widths)
    centers = np.sqrt(edges[:-1] * edges[1:])
    return LogLogDensity(centers, densities, edges, counts, int(pos.size), n_zero)


@dataclass
class SegmentFit:
    """Per-segment OLS of log10(density) on log10(r)."""

    lower: float
    breakpoints: tuple
    slopes: list
    intercepts: list
    residuals: list      # RMS of log10 residuals per segment
    n_bins: list

    def __post_init__(self):
        bks = self.breakpoints
        if any(bks[i] >= bks[i + 1] for i in range(len(bks) - 1)):
            raise ValueError(f"breakpoints must be strictly increasing: {bks}")

    def segments(self) -> list:
        bounds = [self.lower, *self.breakpoints]
        return [(bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1)]


def fit_segments(d: LogLogDensity, breakpoints: Sequence[float] = (25.0, 1000.0, 2000.0),
                 lower: float = 0.1) -> SegmentFit:
    """Fit one power-law slope per distance segment over occupied bins.

    Segments are (lower, bk0), [bk0, bk1), ... over bin centers; a segment
    with fewer than two occupied bins gets no slope.
    """
    fit = SegmentFit(lower, tuple(breakpoints), [], [], [], [])
    occupied = d.densities > 0 if d.counts is None else d.counts > 0
    for k, (lo, hi) in enumerate(fit.segments()):
        if k == 0:
            sel = occupied & (d.centers > lo) & (d.centers < hi)
        else:
            sel = occupied & (d.centers >= lo) & (d.centers < hi)
        n = int(sel.sum())
        fit.n_bins.append(n)
        if n < 2:
            fit.slopes.append(None)
            fit.intercepts.append(None)
            fit.residuals.append(None)
            continue
        x = np.log10(d.centers[sel])
        y = np.log10(d.densities[sel])
        xm, ym = x.mean(), y.mean()
        slope = float(np.sum((x - xm) * (y - ym)) / np.sum((x - xm) ** 2))
        intercept = float(ym - slope * xm)
        resid = y - (slope * x + intercept)
        fit.slopes.append(slope)
        fit.intercepts.append(intercept)
        fit.residuals.append(float(np.sqrt(np.mean(resid ** 2))))
    return fit


def pearson_correlation(x, y) -> float:
    """Product-moment correlation; both arguments need nonzero variance."""
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise ValueError("x and y must be 1-d arrays of equal length")
    if xa.size < 2:
        raise ValueError("need at least two observations")
    dx = xa - xa.mean()
    dy = ya - ya.mean()
    sx = np.sum(dx ** 2)
    sy = np.sum(dy ** 2)
    if sx == 0 or sy == 0:
        raise ValueError("zero variance input")
    return float(np.sum(dx * dy) / math.sqrt(sx * sy))


def activity_center_histogram(counts) -> dict:
    """Fraction of users per activity-center count, with mean and median."""
    arr = np.asarray(counts, dtype=float)
    if arr.size == 0:
        return {"fractions": {}, "mean": float("nan"), "median": float("nan"),
                "n_users": 0}
    values, freq = np.unique(arr.astype(int), return_counts=True)
    fractions = {int(v): float(c) / arr.size for v, c in zip(values, freq)}
    return {"fractions": fractions, "mean": float(arr.mean()),
            "median": float(np.median(arr)), "n_users": int(arr.size)}


def tract_user_correlation(home_geoids, tracts: dict) -> float:
    """Pearson r of per-tract detected-resident counts vs censused population.

    Tracts with no detected users count as zero.
    """
    if len(tracts) < 2:
        raise ValueError("need at least two tracts")
    geoids = sorted(tracts)
    counts = {g: 0 for g in geoids}
    for g in home_geoids:
        if g in counts:
            counts[g] += 1
    users = np.array([counts[g] for g in geoids], dtype=float)
    pop = np.array([tracts[g].total_pop for g in geoids], dtype=float)
    return pearson_correlation(users, pop)


# ---------------------------------------------------------------------------
# Gaussian KDE rasters
# ---------------------------------------------------------------------------

TRUNCATION_SIGMAS = 4.0


@dataclass
class DensityRaster:
    """Regular grid of density values (points per m²) on the projected plane.

    values is (n_rows, n_cols) with row 0 the northernmost row, matching
    the ESRI ASCII layout; origin is the lower-left corner.
    """

    origin_x: float
    origin_y: float
    cell: float
    n_cols: int
    n_rows: int
    values: np.ndarray = field(repr=False)

    def cell_centers(self) -> tuple:
        xs = self.origin_x + (np.arange(self.n_cols) + 0.5) * self.cell
        ys = self.origin_y + (self.n_rows - np.arange(self.n_rows) - 0.5) * self.cell
        return xs, ys

    def mass(self) -> float:
        return float(self.values.sum() * self.cell ** 2)


def kde_raster(points, bandwidth: float, cell: float, extent) -> DensityRaster:
    """Gaussian KDE of projected points, kernel truncated at 4 bandwidths.

    extent is (xmin, ymin, xmax, ymax) in projected meters. Each cell center
    receives sum_i exp(-d_i^2 / 2h^2) / (2 pi h^2) over points within 4h, so
    with enough margin the raster mass approximates the point count.
    """
    xmin, ymin, xmax, ymax = extent
    if bandwidth <= 0 or cell <= 0:
        raise ValueError("bandwidth and cell size must be positive")
    if xmin >= xmax or ymin >= ymax:
        raise ValueError(f"degenerate extent {extent}")
    n_cols = max(1, math.ceil((xmax - xmin) / cell))
    n_rows = max(1, math.ceil((ymax - ymin) / cell))
    values = np.zeros((n_rows, n_cols))
    raster = DensityRaster(xmin, ymin, cell, n_cols, n_rows, values)
    pts = np.asarray([(p.x, p.y) if isinstance(p, ProjectedPoint) else tuple(p)
                      for p in points], dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return raster
    h = bandwidth
    radius = TRUNCATION_SIGMAS * h
    coef = 1.0 / (2.0 * math.pi * h * h)
    xs, ys = raster.cell_centers()
    for px, py in pts:
        j0 = max(0, int(math.floor((px - radius - xmin) / cell)) - 1)
        j1 = min(n_cols - 1, int(math.ceil((px + radius - xmin) / cell)) + 1)
        i0 = max(0, int(math.floor((ymax - (py + radius)) / cell)) - 1)
        i1 = min(n_rows - 1, int(math.ceil((ymax - (py - radius)) / cell)) + 1)
        if j0 > j1 or i0 > i1:
            continue
        dx = xs[j0:j1 + 1] - px
        dy = ys[i0:i1 + 1] - py
        d2 = dy[:, None] ** 2 + dx[None, :] ** 2
        block = np.where(d2 <= radius * radius,
                         coef * np.exp(-d2 / (2.0 * h * h)), 0.0)
        values[i0:i1 + 1, j0:j1 + 1] += block
    return raster


# ---------------------------------------------------------------------------
# Artifact formats
# ---------------------------------------------------------------------------

def write_esri_ascii(raster: DensityRaster, path, nodata: float = -9999.0) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"ncols {raster.n_cols}\n")
        fh.write(f"nrows {raster.n_rows}\n")
        fh.write(f"xllcorner {raster.origin_x!r}\n")
        fh.write(f"yllcorner {raster.origin_y!r}\n")
        fh.write(f"cellsize {raster.cell!r}\n")
        fh.write(f"NODATA_value {nodata!r}\n")
        for row in raster.values:
            fh.write(" ".join("%.17g" % v for v in row) + "\n")


def read_esri_ascii(path) -> DensityRaster:
    with open(path, encoding="utf-8") as fh:
        header = {}
        for _ in range(6):
            key, value = fh.readline().split()
            header[key.lower()] = value
        values = np.loadtxt(fh, ndmin=2)
    n_cols = int(header["ncols"])
    n_rows = int(header["nrows"])
    if values.shape != (n_rows, n_cols):
        raise ValueError(f"{path}: grid shape {values.shape} does not match header")
    return DensityRaster(float(header["xllcorner"]), float(header["yllcorner"]),
                         float(header["cellsize"]), n_cols, n_rows, values)


def write_density_csv(d: LogLogDensity, path, meta: Optional[dict] = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"# {key} = {value}\n")
        fh.write(f"# n_values = {d.n_values}\n")
        fh.write(f"# n_zero = {d.n_zero}\n")
        writer = csv.writer(fh)
        writer.writerow(["center_km", "density", "count", "edge_lo_km", "edge_hi_km"])
        counts = d.counts if d.counts is not None else [0] * len(d.centers)
        for i in range(len(d.centers)):
            writer.writerow([repr(float(d.centers[i])), repr(float(d.densities[i])),
                             int(counts[i]), repr(float(d.edges[i])),
                             repr(float(d.edges[i + 1]))])


def read_density_csv(path) -> LogLogDensity:
    centers, densities, counts, edges = [], [], [], []
    n_values = n_zero = 0
    with open(path, encoding="utf-8", newline="") as fh:
        data_lines = []
        for line in fh:
            if line.startswith("# n_values = "):
                n_values = int(line.split("=")[1])
            elif line.startswith("# n_zero = "):
                n_zero = int(line.split("=")[1])
            elif not line.startswith("#"):
                data_lines.append(line)
    rows = csv.reader(data_lines)
    next(rows)
    for row in rows:
        centers.append(float(row[0]))
        densities.append(float(row[1]))
        counts.append(int(row[2]))
        if not edges:
            edges.append(float(row[3]))
        edges.append(float(row[4]))
    return LogLogDensity(np.array(centers), np.array(densities), np.array(edges),
                         np.array(counts), n_values, n_zero)


def segment_fit_to_dict(fit: SegmentFit) -> dict:
    return {
        "lower_km": fit.lower,
        "breakpoints_km": list(fit.breakpoints),
        "segments": [
            {"lo_km": lo, "hi_km": hi, "slope": fit.slopes[k],
             "intercept": fit.intercepts[k], "rms_residual": fit.residuals[k],
             "n_bins": fit.n_bins[k]}
            for k, (lo, hi) in enumerate(fit.segments())
        ],
    }


def write_histogram_csv(hist: dict, path, meta: Optional[dict] = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"# {key} = {value}\n")
        fh.write(f"# mean = {hist['mean']!r}\n")
        fh.write(f"# median = {hist['median']!r}\n")
        fh.write(f"# n_users = {hist['n_users']}\n")
        writer = csv.writer(fh)
        writer.writerow(["n_centers", "fraction"])
        for value in sorted(hist["fractions"]):
            writer.writerow([value, repr(hist["fractions"][value])])


def read_histogram_csv(path) -> dict:
    hist = {"fractions": {}, "mean": float("nan"), "median": float("nan"), "n_users": 0}
    data_lines = []
    with open(path, encoding="utf-8", newline="") as fh:
        for line in fh:
            if line.startswith("# mean = "):
                hist["mean"] = float(line.split("=")[1])
            elif line.startswith("# median = "):
                hist["median"] = float(line.split("=")[1])
            elif line.startswith("# n_users = "):
                hist["n_users"] = int(line.split("=")[1])
            elif not line.startswith("#"):
                data_lines.append(line)
    rows = csv.reader(data_lines)
    next(rows)
    for row in rows:
        hist["fractions"][int(row[0])] = float(row[1])
    return hist
