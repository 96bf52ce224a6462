"""Geometric mobility measures per trajectory.

The radius of gyration is the root-mean-square Euclidean distance (in
projected meters) between a trajectory's samples and their centroid; every
post counts once, so frequently visited places weigh more. The monthly
series recomputes each user's gyradius cumulatively month by month.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import NamedTuple, Optional

import numpy as np

from .geo import AlbersEqualArea, DEFAULT_PROJECTION, ProjectedPoint
from .trajectory import TimeWindow, Trajectory


@dataclass
class MobilityMetrics:
    user_id: str
    centroid: ProjectedPoint
    gyradius_m: float
    n_samples: int


class MonthlyPoint(NamedTuple):
    month: str          # "YYYY-MM"
    mean_gyradius_m: float
    n_users: int


def projected_coords(traj: Trajectory,
                     projection: AlbersEqualArea = DEFAULT_PROJECTION) -> np.ndarray:
    """(n, 2) array of projected sample coordinates in meters."""
    out = np.empty((len(traj.samples), 2))
    for i, s in enumerate(traj.samples):
        out[i] = projection.forward(s.point)
    return out


def _centroid_of(xy: np.ndarray) -> np.ndarray:
    # anchored mean: exact for coincident samples, well conditioned far from 0
    return xy[0] + (xy - xy[0]).mean(axis=0)


def centroid(traj: Trajectory,
             projection: AlbersEqualArea = DEFAULT_PROJECTION) -> ProjectedPoint:
    """Arithmetic mean of projected sample coordinates, duplicates included."""
    if not traj.samples:
        raise ValueError(f"empty trajectory for user {traj.user_id}")
    cx, cy = _centroid_of(projected_coords(traj, projection))
    return ProjectedPoint(float(cx), float(cy))


def _gyradius_of(xy: np.ndarray) -> float:
    center = _centroid_of(xy)
    return float(math.sqrt(np.mean(np.sum((xy - center) ** 2, axis=1))))


def radius_of_gyration(traj: Trajectory,
                       projection: AlbersEqualArea = DEFAULT_PROJECTION) -> float:
    """sqrt of the mean squared distance from each sample to the centroid."""
    if not traj.samples:
        raise ValueError(f"empty trajectory for user {traj.user_id}")
    return _gyradius_of(projected_coords(traj, projection))


def compute_metrics(traj: Trajectory,
                    projection: AlbersEqualArea = DEFAULT_PROJECTION) -> MobilityMetrics:
    if not traj.samples:
        raise ValueError(f"empty trajectory for user {traj.user_id}")
    xy = projected_coords(traj, projection)
    cx, cy = _centroid_of(xy)
    return MobilityMetrics(traj.user_id, ProjectedPoint(float(cx), float(cy)),
                           _gyradius_of(xy), len(traj.samples))


def month_boundaries(window: TimeWindow) -> list:
    """Epoch seconds of every UTC month boundary in [start, end].

    The window must start and end exactly on month boundaries.
    """
    start = datetime.fromtimestamp(window.start, tz=timezone.utc)
    end = datetime.fromtimestamp(window.end, tz=timezone.utc)
    for dt, label in ((start, "start"), (end, "end")):
        if (dt.day, dt.hour, dt.minute, dt.second, dt.microsecond) != (1, 0, 0, 0, 0):
            raise ValueError(f"window {label} {dt.isoformat()} is not a UTC month boundary")
    bounds = []
    y, m = start.year, start.month
    while True:
        dt = datetime(y, m, 1, tzinfo=timezone.utc)
        bounds.append(int(dt.timestamp()))
        if dt >= end:
            break
        m += 1
        if m == 13:
            y, m = y + 1, 1
    if bounds[-1] != window.end:
        raise ValueError("window end does not fall on the month grid of its start")
    return bounds


def monthly_cumulative_gyradius(trajectories, window: TimeWindow,
                                min_samples: int = 1,
                                projection: AlbersEqualArea = DEFAULT_PROJECTION) -> list:
    """Mean user gyradius per month, on the cumulative sample sets.

    For month k a user's gyradius is recomputed over all samples with
    timestamp before the end of month k; users with fewer than
    ``min_samples`` samples so far are excluded from that month's mean.
    Users are accumulated in sorted user-id order for reproducibility.
    """
    bounds = month_boundaries(window)
    months = []
    per_user = []
    for traj in sorted(trajectories, key=lambda t: t.user_id):
        xy = projected_coords(traj, projection)
        ts = np.array([s.ts for s in traj.samples])
        per_user.append((xy, ts))
    for k in range(len(bounds) - 1):
        cutoff = bounds[k + 1]
        label = datetime.fromtimestamp(bounds[k], tz=timezone.utc).strftime("%Y-%m")
        total = 0.0
        n_users = 0
        for xy, ts in per_user:
            sel = xy[ts < cutoff]
            if len(sel) < max(1, min_samples):
                continue
            total += _gyradius_of(sel)
            n_users += 1
        mean = total / n_users if n_users else float("nan")
        months.append(MonthlyPoint(label, mean, n_users))
    return months


# ---------------------------------------------------------------------------
# CSV checkpointing
# ---------------------------------------------------------------------------

METRICS_FIELDS = ["user_id", "gyradius_m", "n_samples", "centroid_x", "centroid_y"]


def write_metrics_csv(metrics, path, meta: Optional[dict] = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"# {key} = {value}\n")
        writer = csv.writer(fh)
        writer.writerow(METRICS_FIELDS)
        for m in metrics:
            writer.writerow([m.user_id, repr(m.gyradius_m), m.n_samples,
                             repr(m.centroid.x), repr(m.centroid.y)])


def read_metrics_csv(path) -> list:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        rows = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(rows)
        if header != METRICS_FIELDS:
            raise ValueError(f"{path}: unexpected metrics header {header}")
        for row in rows:
            out.append(MobilityMetrics(row[0], ProjectedPoint(float(row[3]), float(row[4])),
                                       float(row[1]), int(row[2])))
    return out


def write_monthly_csv(points, path, meta: Optional[dict] = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"# {key} = {value}\n")
        writer = csv.writer(fh)
        writer.writerow(["month", "mean_gyradius_m", "n_users"])
        for p in points:
            writer.writerow([p.month, repr(p.mean_gyradius_m), p.n_users])


def read_monthly_csv(path) -> list:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        rows = csv.reader(line for line in fh if not line.startswith("#"))
        next(rows)
        for row in rows:
            out.append(MonthlyPoint(row[0], float(row[1]), int(row[2])))
    return out
