"""DBSCAN over trajectory sample locations, activity-center extraction and
night-time home detection.

The DBSCAN here is the classic seeded-expansion algorithm with a uniform
grid index (cell size = eps) for neighbor queries. Expansion order is fixed:
seeds are visited in input order and neighbor lists are ascending by point
index, so repeated runs are bitwise identical and border points always join
the first core cluster that reaches them.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from datetime import datetime
from typing import Optional
from zoneinfo import ZoneInfo

import numpy as np

from .geo import AlbersEqualArea, DEFAULT_PROJECTION, ProjectedPoint
from .trajectory import Trajectory

NOISE = -1
_UNCLASSIFIED = -2


@dataclass(frozen=True)
class DbscanParams:
    eps_m: float = 100.0
    min_pts: int = 3

    def __post_init__(self):
        if self.eps_m <= 0:
            raise ValueError(f"eps must be positive, got {self.eps_m}")
        if self.min_pts < 1:
            raise ValueError(f"min_pts must be >= 1, got {self.min_pts}")


@dataclass(frozen=True)
class NightWindow:
    """Local wall-clock window, half-open, possibly wrapping midnight."""

    start_minute: int = 20 * 60
    end_minute: int = 8 * 60
    tz_name: str = "America/Chicago"

    @classmethod
    def from_strings(cls, start: str, end: str, tz_name: str) -> "NightWindow":
        def minutes(hhmm: str) -> int:
            h, m = hhmm.split(":")
            return int(h) * 60 + int(m)
        return cls(minutes(start), minutes(end), tz_name)

    def contains_ts(self, ts: int) -> bool:
        local = datetime.fromtimestamp(ts, ZoneInfo(self.tz_name))
        mod = local.hour * 60 + local.minute
        if self.start_minute <= self.end_minute:
            return self.start_minute <= mod < self.end_minute
        return mod >= self.start_minute or mod < self.end_minute


@dataclass
class ActivityCenter:
    center: ProjectedPoint
    member_count: int
    night_count: int


@dataclass
class HomeDetection:
    user_id: str
    home: Optional[ActivityCenter]


class _GridIndex:
    """Uniform grid with cell size eps; 3x3 neighborhood covers any eps-disc."""

    def __init__(self, points: np.ndarray, eps: float):
        self.points = points
        self.eps = eps
        self.cells = {}
        keys = np.floor(points / eps).astype(np.int64)
        for i, (cx, cy) in enumerate(keys):
            self.cells.setdefault((int(cx), int(cy)), []).append(i)
        self.keys = keys

    def neighbors(self, i: int) -> np.ndarray:
        """Indices with distance <= eps of point i (self included), ascending."""
        cx, cy = self.keys[i]
        candidates = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                candidates.extend(self.cells.get((int(cx) + dx, int(cy) + dy), ()))
        cand = np.array(candidates, dtype=np.int64)
        delta = self.points[cand] - self.points[i]
        mask = (delta[:, 0] ** 2 + delta[:, 1] ** 2) <= self.eps ** 2
        hits = cand[mask]
        hits.sort()
        return hits


def dbscan(points, params: DbscanParams) -> np.ndarray:
    """Cluster labels per point: 0,1,... in discovery order, or NOISE (-1)."""
    pts = np.asarray([(p.x, p.y) if isinstance(p, ProjectedPoint) else tuple(p)
                      for p in points], dtype=float)
    n = len(pts)
    labels = np.full(n, _UNCLASSIFIED, dtype=np.int64)
    if n == 0:
        return labels
    grid = _GridIndex(pts, params.eps_m)
    cluster = 0
    for i in range(n):
        if labels[i] != _UNCLASSIFIED:
            continue
        seeds = grid.neighbors(i)
        if len(seeds) < params.min_pts:
            labels[i] = NOISE
            continue
        labels[i] = cluster
        queue = list(seeds)
        qi = 0
        while qi < len(queue):
            j = queue[qi]
            qi += 1
            if labels[j] == NOISE:
                labels[j] = cluster  # border point, claimed by first reaching cluster
            elif labels[j] == _UNCLASSIFIED:
                labels[j] = cluster
                reach = grid.neighbors(j)
                if len(reach) >= params.min_pts:
                    queue.extend(reach)
        cluster += 1
    return labels


def _cluster_centers(pts: np.ndarray, labels: np.ndarray,
                     night_mask: np.ndarray) -> list:
    centers = []
    for cid in range(labels.max() + 1 if len(labels) else 0):
        member = labels == cid
        count = int(member.sum())
        cx, cy = pts[member].mean(axis=0)
        centers.append(ActivityCenter(ProjectedPoint(float(cx), float(cy)),
                                      count, int((member & night_mask).sum())))
    return centers


def activity_centers(traj: Trajectory, params: DbscanParams,
                     night: NightWindow,
                     projection: AlbersEqualArea = DEFAULT_PROJECTION) -> list:
    """One center per DBSCAN cluster over all of the user's samples.

    Ordered by descending member count, ties by ascending cluster index.
    Noise samples produce no center.
    """
    if not traj.samples:
        raise ValueError(f"empty trajectory for user {traj.user_id}")
    pts = np.array([projection.forward(s.point) for s in traj.samples])
    labels = dbscan(pts, params)
    night_mask = np.array([night.contains_ts(s.ts) for s in traj.samples])
    centers = _cluster_centers(pts, labels, night_mask)
    order = sorted(range(len(centers)), key=lambda k: (-centers[k].member_count, k))
    return [centers[k] for k in order]


def detect_home(traj: Trajectory, params: DbscanParams,
                night: NightWindow = NightWindow(),
                mode: str = "night-dbscan",
                projection: AlbersEqualArea = DEFAULT_PROJECTION) -> HomeDetection:
    """Most frequently visited night-window activity center.

    "night-dbscan" clusters the night-window samples only and picks the
    largest cluster; ties go to the candidate whose surroundings (within
    eps of its centroid) collect more all-hours samples, then to the lower
    cluster index. "centers" instead picks, among all-hours activity
    centers, the one with the most night-window members.
    """
    pts = np.array([projection.forward(s.point) for s in traj.samples]) \
        if traj.samples else np.empty((0, 2))
    night_mask = np.array([night.contains_ts(s.ts) for s in traj.samples], dtype=bool) \
        if traj.samples else np.zeros(0, dtype=bool)

    if mode == "centers":
        centers = activity_centers(traj, params, night, projection) if traj.samples else []
        best = None
        for k, c in enumerate(centers):
            if c.night_count < 1:
                continue
            key = (-c.night_count, -c.member_count, k)
            if best is None or key < best[0]:
                best = (key, c)
        return HomeDetection(traj.user_id, best[1] if best else None)

    if mode != "night-dbscan":
        raise ValueError(f"unknown home detection mode {mode!r}")

    night_pts = pts[night_mask]
    if len(night_pts) == 0:
        return HomeDetection(traj.user_id, None)
    labels = dbscan(night_pts, params)
    centers = _cluster_centers(night_pts, labels,
                               np.ones(len(night_pts), dtype=bool))
    if not centers:
        return HomeDetection(traj.user_id, None)
    top = max(c.member_count for c in centers)
    tied = [(k, c) for k, c in enumerate(centers) if c.member_count == top]
    if len(tied) > 1:
        # break by all-hours visit count around each candidate centroid
        def all_hours(c: ActivityCenter) -> int:
            d2 = (pts[:, 0] - c.center.x) ** 2 + (pts[:, 1] - c.center.y) ** 2
            return int((d2 <= params.eps_m ** 2).sum())
        tied.sort(key=lambda kc: (-all_hours(kc[1]), kc[0]))
    home = tied[0][1]
    return HomeDetection(traj.user_id, home)


# ---------------------------------------------------------------------------
# Artifact formats
# ---------------------------------------------------------------------------

def write_centers_geojson(user_centers: dict, homes: dict, path,
                          meta: Optional[dict] = None,
                          projection: AlbersEqualArea = DEFAULT_PROJECTION) -> None:
    """Centers as WGS84 GeoJSON points.

    user_centers maps user_id -> list of ActivityCenter; homes maps
    user_id -> HomeDetection. A center is flagged is_home when it is the
    detected home's nearest center for that user.
    """
    features = []
    for user_id in sorted(user_centers):
        home = homes.get(user_id)
        home_xy = home.home.center if home and home.home else None
        best_k = None
        if home_xy is not None and user_centers[user_id]:
            dists = [(c.center.x - home_xy.x) ** 2 + (c.center.y - home_xy.y) ** 2
                     for c in user_centers[user_id]]
            best_k = int(np.argmin(dists))
        for k, c in enumerate(user_centers[user_id]):
            lonlat = projection.inverse(c.center)
            features.append({
                "type": "Feature",
                "geometry": {"type": "Point",
                             "coordinates": [lonlat.lon, lonlat.lat]},
                "properties": {"user_id": user_id,
                               "member_count": c.member_count,
                               "night_count": c.night_count,
                               "is_home": k == best_k},
            })
    doc = {"type": "FeatureCollection", "metadata": meta or {}, "features": features}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, ensure_ascii=False, separators=(",", ":"))
        fh.write("\n")


def read_centers_geojson(path) -> tuple:
    """(feature property+coordinate records, metadata) from a centers file."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    records = []
    for feat in doc["features"]:
        rec = dict(feat["properties"])
        rec["lon"], rec["lat"] = feat["geometry"]["coordinates"]
        records.append(rec)
    return records, doc.get("metadata", {})


HOMES_FIELDS = ["user_id", "x", "y", "lon", "lat", "member_count", "night_count"]


def write_homes_csv(homes: dict, path, meta: Optional[dict] = None,
                    projection: AlbersEqualArea = DEFAULT_PROJECTION) -> None:
    """Detected homes, one row per user with a detection."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"# {key} = {value}\n")
        writer = csv.writer(fh)
        writer.writerow(HOMES_FIELDS)
        for user_id in sorted(homes):
            det = homes[user_id]
            if det.home is None:
                continue
            c = det.home
            lonlat = projection.inverse(c.center)
            writer.writerow([user_id, repr(c.center.x), repr(c.center.y),
                             repr(lonlat.lon), repr(lonlat.lat),
                             c.member_count, c.night_count])


def read_homes_csv(path) -> dict:
    homes = {}
    with open(path, encoding="utf-8", newline="") as fh:
        rows = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(rows)
        if header != HOMES_FIELDS:
            raise ValueError(f"{path}: unexpected homes header {header}")
        for row in rows:
            center = ActivityCenter(ProjectedPoint(float(row[1]), float(row[2])),
                                    int(row[5]), int(row[6]))
            homes[row[0]] = HomeDetection(row[0], center)
    return homes
