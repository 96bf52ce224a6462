"""Parse, validate and group raw geo-tagged post logs.

Input is JSONL: one post per line with keys ``user_id``, ``name``, ``ts``,
``lon``, ``lat`` and optional ``text``. Bad lines never abort the stream;
they are counted per failure class in the IngestReport.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Optional

from .geo import BoundingBox


@dataclass(frozen=True)
class PostRecord:
    """One geo-tagged post."""

    user_id: str
    name: str
    ts: int
    lon: float
    lat: float
    text: Optional[str] = None


@dataclass
class IngestReport:
    accepted: int = 0
    rejected_malformed: int = 0
    rejected_out_of_range: int = 0
    distinct_users: int = 0

    def as_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "rejected_malformed": self.rejected_malformed,
            "rejected_out_of_range": self.rejected_out_of_range,
            "distinct_users": self.distinct_users,
        }


def _decode_line(line: str) -> Optional[PostRecord]:
    """PostRecord for a structurally valid line, else None (malformed).

    Range violations raise ValueError so the caller can count them apart.
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError:
        return None
    if not isinstance(obj, dict):
        return None
    try:
        user_id = obj["user_id"]
        name = obj["name"]
        ts = obj["ts"]
        lon = obj["lon"]
        lat = obj["lat"]
    except KeyError:
        return None
    text = obj.get("text")
    if not isinstance(user_id, str) or not user_id:
        return None
    if not isinstance(name, str):
        return None
    if isinstance(ts, bool) or not isinstance(ts, int):
        return None
    if isinstance(lon, bool) or not isinstance(lon, (int, float)):
        return None
    if isinstance(lat, bool) or not isinstance(lat, (int, float)):
        return None
    if text is not None and not isinstance(text, str):
        return None
    lon = float(lon)
    lat = float(lat)
    if not (-180.0 <= lon <= 180.0 and -90.0 <= lat <= 90.0) or ts < 0:
        raise ValueError("out of range")
    return PostRecord(user_id, name, ts, lon, lat, text)


def parse_posts(lines: Iterable[str]) -> tuple:
    """Parse a JSONL line stream into (records, IngestReport).

    Every input line is accounted for: accepted + rejected_malformed +
    rejected_out_of_range equals the line count.
    """
    records = []
    report = IngestReport()
    users = set()
    for line in lines:
        try:
            rec = _decode_line(line)
        except ValueError:
            report.rejected_out_of_range += 1
            continue
        if rec is None:
            report.rejected_malformed += 1
            continue
        records.append(rec)
        report.accepted += 1
        users.add(rec.user_id)
    report.distinct_users = len(users)
    return records, report


def record_to_json(rec: PostRecord) -> str:
    """Canonical single-line JSON form; parsing it back is bit-for-bit stable."""
    obj = {"user_id": rec.user_id, "name": rec.name, "ts": rec.ts,
           "lon": rec.lon, "lat": rec.lat}
    if rec.text is not None:
        obj["text"] = rec.text
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def write_posts_jsonl(records: Iterable[PostRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(record_to_json(rec) + "\n")


def read_posts_jsonl(path) -> tuple:
    with open(path, encoding="utf-8") as fh:
        return parse_posts(fh)


def filter_bbox(records: Iterable[PostRecord], bbox: BoundingBox) -> list:
    """Keep records inside or on the bbox, preserving order."""
    return [r for r in records if bbox.contains(r.lon, r.lat)]


def dedupe_exact(records: Iterable[PostRecord]) -> list:
    """Drop exact duplicates (same user_id, ts, lon, lat), keeping the first.

    Off by default in the pipeline; duplicate posts carry visit-frequency
    information that home detection relies on.
    """
    seen = set()
    out = []
    for r in records:
        key = (r.user_id, r.ts, r.lon, r.lat)
        if key in seen:
            continue
        seen.add(key)
        out.append(r)
    return out


def group_by_user(records: Iterable[PostRecord]) -> dict:
    """Group records per user, each list sorted by timestamp (stable)."""
    groups = {}
    for rec in records:
        groups.setdefault(rec.user_id, []).append(rec)
    for recs in groups.values():
        recs.sort(key=lambda r: r.ts)
    return groups
