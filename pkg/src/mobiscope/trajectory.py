"""Per-user space-time trajectories built from grouped posts.

A trajectory is the time-ordered sample sequence of one user, interpreted
as a piecewise-constant position: the user stays at sample i's location
until sample i+1 is posted. Users with too few posts inside the study
window are dropped (default threshold 24).
"""

from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import dataclass
from typing import NamedTuple, Optional

from .geo import GeoPoint


@dataclass(frozen=True)
class TimeWindow:
    """Half-open UTC epoch-second interval [start, end)."""

    start: int
    end: int

    def __post_init__(self):
        if self.start >= self.end:
            raise ValueError(f"empty time window: {self.start}..{self.end}")

    def contains(self, ts: int) -> bool:
        return self.start <= ts < self.end


class Sample(NamedTuple):
    point: GeoPoint
    ts: int
    text: Optional[str]


@dataclass
class Trajectory:
    user_id: str
    samples: list
    profile_name: str

    def __len__(self):
        return len(self.samples)


def build_trajectories(groups: dict, min_posts: int = 24,
                       window: Optional[TimeWindow] = None) -> list:
    """One Trajectory per user with at least min_posts samples.

    ``groups`` must come from ingest.group_by_user (time-sorted per user).
    When a window is given, only samples inside it count and are kept.
    The profile name is the most recent non-empty name among kept posts.
    """
    trajectories = []
    for user_id, records in groups.items():
        kept = [r for r in records if window is None or window.contains(r.ts)]
        if len(kept) < min_posts:
            continue
        name = ""
        for r in kept:
            if r.name:
                name = r.name
        samples = [Sample(GeoPoint(r.lon, r.lat), r.ts, r.text) for r in kept]
        trajectories.append(Trajectory(user_id, samples, name))
    return trajectories


def location_at(traj: Trajectory, t: int) -> Optional[GeoPoint]:
    """Piecewise-constant position: the latest sample at or before t."""
    times = [s.ts for s in traj.samples]
    i = bisect_right(times, t)
    if i == 0:
        return None
    return traj.samples[i - 1].point


# ---------------------------------------------------------------------------
# JSONL checkpointing
# ---------------------------------------------------------------------------

def trajectory_to_json(traj: Trajectory) -> str:
    obj = {
        "user_id": traj.user_id,
        "profile_name": traj.profile_name,
        "samples": [[s.point.lon, s.point.lat, s.ts, s.text] for s in traj.samples],
    }
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def trajectory_from_json(line: str) -> Trajectory:
    obj = json.loads(line)
    samples = [Sample(GeoPoint(lon, lat), ts, text)
               for lon, lat, ts, text in obj["samples"]]
    return Trajectory(obj["user_id"], samples, obj["profile_name"])


def write_trajectories_jsonl(trajectories, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for traj in trajectories:
            fh.write(trajectory_to_json(traj) + "\n")


def read_trajectories_jsonl(path) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(trajectory_from_json(line))
    return out
