"""Pipeline configuration: plain-text key = value files with documented
defaults and MOBISCOPE_* environment overrides."""

from __future__ import annotations

import os
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Optional

from .clustering import DbscanParams, NightWindow
from .geo import BoundingBox
from .trajectory import TimeWindow

ENV_PREFIX = "MOBISCOPE_"


def _parse_bool(s: str) -> bool:
    if s.lower() in ("true", "1", "yes", "on"):
        return True
    if s.lower() in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_utc(s: str) -> int:
    dt = datetime.fromisoformat(s.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


# key -> (default string, parser, help text)
CONFIG_KEYS = {
    "window_start": ("2013-01-01T00:00:00Z", _parse_utc, "study window start (UTC)"),
    "window_end": ("2013-07-01T00:00:00Z", _parse_utc, "study window end (UTC, exclusive)"),
    "bbox": ("-124.7,24.5,-66.9,49.4", str, "ingest bounding box lon_min,lat_min,lon_max,lat_max"),
    "apply_bbox": ("true", _parse_bool, "clip posts to bbox during ingest"),
    "dedupe": ("false", _parse_bool, "drop exact duplicate posts (user, ts, lon, lat)"),
    "min_posts": ("24", int, "minimum posts per user inside the window"),
    "eps_m": ("100", float, "DBSCAN neighborhood radius, meters"),
    "min_pts": ("3", int, "DBSCAN core threshold"),
    "night_start": ("20:00", str, "night window start, local wall clock"),
    "night_end": ("08:00", str, "night window end, local wall clock (exclusive)"),
    "timezone": ("America/Chicago", str, "IANA timezone for the night window"),
    "home_mode": ("night-dbscan", str, "home detection mode: night-dbscan | centers"),
    "reference_year": ("2013", int, "reference year for age groups"),
    "age_threshold": ("0.6", float, "minimum age-group probability"),
    "bins_per_decade": ("8", int, "log-log histogram resolution"),
    "fit_lower_km": ("0.1", float, "lower cutoff for the first fitted segment"),
    "fit_breakpoints_km": ("25,1000,2000", str, "segment breakpoints, km"),
    "monthly_min_samples": ("1", int, "min cumulative samples for the monthly mean"),
    "kde_city_bandwidth_m": ("500", float, "Gaussian bandwidth for the city raster"),
    "kde_city_cell_m": ("250", float, "cell size for the city raster"),
    "kde_national_bandwidth_m": ("20000", float, "Gaussian bandwidth for the national raster"),
    "kde_national_cell_m": ("10000", float, "cell size for the national raster"),
    "city_bbox": ("-87.95,41.6,-87.5,42.05", str, "city extent for the city raster"),
    "posts_file": ("", str, "input posts JSONL (default <workdir>/posts.jsonl)"),
    "surnames_file": ("", str, "surname priors CSV (default <workdir>/tables/surnames.csv)"),
    "tract_demo_file": ("", str, "tract demographics CSV (default <workdir>/tables/tract_demo.csv)"),
    "gender_file": ("", str, "forename gender CSV (default <workdir>/tables/gender.csv)"),
    "ages_file": ("", str, "forename year-of-birth CSV (default <workdir>/tables/ages.csv)"),
    "tracts_file": ("", str, "tract polygons GeoJSON (default <workdir>/tables/tracts.geojson)"),
}


def _parse_bbox(s: str) -> BoundingBox:
    parts = [float(v) for v in s.split(",")]
    if len(parts) != 4:
        raise ValueError(f"bbox needs 4 numbers, got {s!r}")
    return BoundingBox(*parts)


@dataclass
class PipelineConfig:
    raw: dict

    @property
    def window(self) -> TimeWindow:
        return TimeWindow(_parse_utc(self.raw["window_start"]),
                          _parse_utc(self.raw["window_end"]))

    @property
    def bbox(self) -> BoundingBox:
        return _parse_bbox(self.raw["bbox"])

    @property
    def city_bbox(self) -> BoundingBox:
        return _parse_bbox(self.raw["city_bbox"])

    @property
    def apply_bbox(self) -> bool:
        return _parse_bool(self.raw["apply_bbox"])

    @property
    def dedupe(self) -> bool:
        return _parse_bool(self.raw["dedupe"])

    @property
    def min_posts(self) -> int:
        return int(self.raw["min_posts"])

    @property
    def dbscan_params(self) -> DbscanParams:
        return DbscanParams(float(self.raw["eps_m"]), int(self.raw["min_pts"]))

    @property
    def night_window(self) -> NightWindow:
        return NightWindow.from_strings(self.raw["night_start"], self.raw["night_end"],
                                        self.raw["timezone"])

    @property
    def home_mode(self) -> str:
        return self.raw["home_mode"]

    @property
    def reference_year(self) -> int:
        return int(self.raw["reference_year"])

    @property
    def age_threshold(self) -> float:
        return float(self.raw["age_threshold"])

    @property
    def bins_per_decade(self) -> int:
        return int(self.raw["bins_per_decade"])

    @property
    def fit_lower_km(self) -> float:
        return float(self.raw["fit_lower_km"])

    @property
    def fit_breakpoints_km(self) -> tuple:
        return tuple(float(v) for v in self.raw["fit_breakpoints_km"].split(","))

    @property
    def monthly_min_samples(self) -> int:
        return int(self.raw["monthly_min_samples"])

    def kde_params(self, scope: str) -> tuple:
        return (float(self.raw[f"kde_{scope}_bandwidth_m"]),
                float(self.raw[f"kde_{scope}_cell_m"]))

    def table_path(self, key: str, workdir) -> str:
        configured = self.raw.get(key, "")
        if configured:
            return configured
        defaults = {
            "posts_file": "posts.jsonl",
            "surnames_file": "tables/surnames.csv",
            "tract_demo_file": "tables/tract_demo.csv",
            "gender_file": "tables/gender.csv",
            "ages_file": "tables/ages.csv",
            "tracts_file": "tables/tracts.geojson",
        }
        return os.path.join(workdir, defaults[key])

    def as_dict(self) -> dict:
        return dict(sorted(self.raw.items()))


def load_config(path: Optional[str] = None, env: Optional[dict] = None,
                overrides: Optional[dict] = None) -> PipelineConfig:
    """Config from defaults, then file, then MOBISCOPE_* env, then overrides.

    The file format is one ``key = value`` per line; blank lines and lines
    starting with ``#`` are ignored. Unknown keys are an error.
    """
    raw = {key: default for key, (default, _p, _h) in CONFIG_KEYS.items()}
    if path:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                stripped = line.strip()
                if not stripped or stripped.startswith("#"):
                    continue
                if "=" not in stripped:
                    raise ValueError(f"{path}:{lineno}: expected key = value")
                key, _, value = stripped.partition("=")
                key = key.strip()
                if key not in CONFIG_KEYS:
                    raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
                raw[key] = value.strip()
    env = os.environ if env is None else env
    for key in CONFIG_KEYS:
        env_key = ENV_PREFIX + key.upper()
        if env_key in env:
            raw[key] = env[env_key]
    for key, value in (overrides or {}).items():
        if key not in CONFIG_KEYS:
            raise ValueError(f"unknown config key {key!r}")
        raw[key] = str(value)
    cfg = PipelineConfig(raw)
    _validate(cfg)
    return cfg


def _validate(cfg: PipelineConfig) -> None:
    for key, (_default, parser, _help) in CONFIG_KEYS.items():
        if parser is not str:
            parser(cfg.raw[key])
    cfg.window
    cfg.bbox
    cfg.city_bbox
    cfg.dbscan_params
    cfg.night_window
    if cfg.home_mode not in ("night-dbscan", "centers"):
        raise ValueError(f"home_mode must be night-dbscan or centers, got {cfg.home_mode!r}")
    if not 0 < cfg.age_threshold <= 1:
        raise ValueError(f"age_threshold must be in (0, 1], got {cfg.age_threshold}")
    if cfg.min_posts < 1:
        raise ValueError("min_posts must be >= 1")
    bks = cfg.fit_breakpoints_km
    if any(bks[i] >= bks[i + 1] for i in range(len(bks) - 1)):
        raise ValueError(f"fit breakpoints must be strictly increasing: {bks}")


def config_help() -> str:
    lines = ["configuration keys (key = value file, MOBISCOPE_<KEY> env override):"]
    for key, (default, _p, help_text) in CONFIG_KEYS.items():
        shown = default if default else "<derived from workdir>"
        lines.append(f"  {key:26s} {help_text} [default: {shown}]")
    return "\n".join(lines)
