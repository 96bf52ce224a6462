"""Pipeline orchestration: each stage reads its upstream checkpoint from the
working directory and writes its artifact under a fixed name, embedding the
parameter set used. Stages are rerunnable and byte-stable for a fixed seed
and config."""

from __future__ import annotations

import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis, clustering, demographics, ingest, mobility, synth, trajectory
from .config import PipelineConfig
from .geo import (DEFAULT_PROJECTION, GeoPoint, TractIndex, load_tracts_geojson,
                  tract_lookup)

ACCEPTED = "accepted.jsonl"
INGEST_REPORT = "ingest_report.json"
TRAJECTORIES = "trajectories.jsonl"
TRAJECTORY_REPORT = "trajectory_report.json"
METRICS = "metrics.csv"
MONTHLY = "monthly_gyradius.csv"
CENTERS = "centers.geojson"
HOMES = "homes.csv"
PROFILES = "profiles.csv"
BREAKDOWN = "breakdown.json"
DENSITY = "gyradius_density.csv"
FITS = "segment_fits.json"
HISTOGRAM = "center_histogram.csv"
KDE_CITY = "kde_city.asc"
KDE_NATIONAL = "kde_national.asc"
ANALYSIS = "analysis.json"
REPORT = "report.json"
SCORE = "score.json"
TRUTH = "truth.jsonl"


class MissingCheckpointError(RuntimeError):
    def __init__(self, path, producer: str):
        super().__init__(f"missing checkpoint {path}; run `{producer}` first")


def _require(workdir, name: str, producer: str) -> Path:
    path = Path(workdir) / name
    if not path.exists():
        raise MissingCheckpointError(path, producer)
    return path


def _write_json(obj: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def projected_extent(bbox, margin_m: float, samples_per_edge: int = 25) -> tuple:
    """Projected bounding rectangle of a lon/lat box, padded by margin_m.

    The conic projection bends box edges, so the perimeter is sampled.
    """
    lons = np.linspace(bbox.lon_min, bbox.lon_max, samples_per_edge)
    lats = np.linspace(bbox.lat_min, bbox.lat_max, samples_per_edge)
    perimeter = (
        [GeoPoint(lon, bbox.lat_min) for lon in lons]
        + [GeoPoint(lon, bbox.lat_max) for lon in lons]
        + [GeoPoint(bbox.lon_min, lat) for lat in lats]
        + [GeoPoint(bbox.lon_max, lat) for lat in lats]
    )
    xy = np.array([DEFAULT_PROJECTION.forward(p) for p in perimeter])
    return (float(xy[:, 0].min() - margin_m), float(xy[:, 1].min() - margin_m),
            float(xy[:, 0].max() + margin_m), float(xy[:, 1].max() + margin_m))


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def stage_synth(cfg: PipelineConfig, workdir, seed: int = 42,
                n_users: int = 500, jitter_m: float = None) -> dict:
    spec = synth.SynthSpec(
        seed=seed,
        n_users=n_users,
        city_bbox=cfg.city_bbox,
        window=cfg.window,
        tz_name=cfg.raw["timezone"],
        jitter_m=cfg.dbscan_params.eps_m / 4.0 if jitter_m is None else jitter_m,
    )
    return synth.generate(spec, workdir)


def stage_ingest(cfg: PipelineConfig, workdir, input_path=None) -> dict:
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    src = input_path or cfg.table_path("posts_file", workdir)
    if src == "-":
        records, report = ingest.parse_posts(sys.stdin)
    else:
        if not os.path.exists(src):
            raise MissingCheckpointError(src, "synth (or point posts_file at your log)")
        records, report = ingest.read_posts_jsonl(src)
    if cfg.apply_bbox:
        records = ingest.filter_bbox(records, cfg.bbox)
    if cfg.dedupe:
        records = ingest.dedupe_exact(records)
    ingest.write_posts_jsonl(records, workdir / ACCEPTED)
    out = report.as_dict()
    out["after_bbox_and_dedupe"] = len(records)
    _write_json({"report": out, "parameters": cfg.as_dict()},
                workdir / INGEST_REPORT)
    return out


def stage_trajectories(cfg: PipelineConfig, workdir) -> dict:
    workdir = Path(workdir)
    src = _require(workdir, ACCEPTED, "ingest")
    records, _ = ingest.read_posts_jsonl(src)
    groups = ingest.group_by_user(records)
    trajs = trajectory.build_trajectories(groups, cfg.min_posts, cfg.window)
    trajectory.write_trajectories_jsonl(trajs, workdir / TRAJECTORIES)
    report = {"users_seen": len(groups), "users_kept": len(trajs),
              "users_dropped": len(groups) - len(trajs)}
    _write_json({"report": report, "parameters": cfg.as_dict()},
                workdir / TRAJECTORY_REPORT)
    return report


def stage_metrics(cfg: PipelineConfig, workdir) -> dict:
    workdir = Path(workdir)
    src = _require(workdir, TRAJECTORIES, "trajectories")
    trajs = trajectory.read_trajectories_jsonl(src)
    metrics = [mobility.compute_metrics(t) for t in sorted(trajs, key=lambda t: t.user_id)]
    meta = cfg.as_dict()
    mobility.write_metrics_csv(metrics, workdir / METRICS, meta)
    monthly = mobility.monthly_cumulative_gyradius(trajs, cfg.window,
                                                   cfg.monthly_min_samples)
    mobility.write_monthly_csv(monthly, workdir / MONTHLY, meta)
    return {"users": len(metrics), "months": len(monthly)}


def stage_centers(cfg: PipelineConfig, workdir) -> dict:
    workdir = Path(workdir)
    src = _require(workdir, TRAJECTORIES, "trajectories")
    trajs = trajectory.read_trajectories_jsonl(src)
    params = cfg.dbscan_params
    night = cfg.night_window
    user_centers = {}
    homes = {}
    for traj in sorted(trajs, key=lambda t: t.user_id):
        user_centers[traj.user_id] = clustering.activity_centers(traj, params, night)
        homes[traj.user_id] = clustering.detect_home(traj, params, night,
                                                     mode=cfg.home_mode)
    meta = cfg.as_dict()
    clustering.write_centers_geojson(user_centers, homes, workdir / CENTERS, meta)
    clustering.write_homes_csv(homes, workdir / HOMES, meta)
    detected = sum(1 for h in homes.values() if h.home is not None)
    return {"users": len(homes), "homes_detected": detected,
            "centers": sum(len(v) for v in user_centers.values())}


def stage_demographics(cfg: PipelineConfig, workdir) -> dict:
    workdir = Path(workdir)
    traj_path = _require(workdir, TRAJECTORIES, "trajectories")
    homes_path = _require(workdir, HOMES, "centers")
    for key in ("surnames_file", "tract_demo_file", "gender_file", "ages_file",
                "tracts_file"):
        path = cfg.table_path(key, workdir)
        if not os.path.exists(path):
            raise MissingCheckpointError(path, f"synth (or configure {key})")

    trajs = trajectory.read_trajectories_jsonl(traj_path)
    homes = clustering.read_homes_csv(homes_path)
    tables = demographics.load_tables(
        cfg.table_path("surnames_file", workdir),
        cfg.table_path("tract_demo_file", workdir),
        cfg.table_path("gender_file", workdir),
        cfg.table_path("ages_file", workdir),
    )
    tract_index = TractIndex.build(load_tracts_geojson(cfg.table_path("tracts_file", workdir)))

    users = []
    for traj in sorted(trajs, key=lambda t: t.user_id):
        det = homes.get(traj.user_id)
        geoid = None
        if det is not None and det.home is not None:
            lonlat = DEFAULT_PROJECTION.inverse(det.home.center)
            geoid = tract_lookup(lonlat, tract_index)
        users.append((traj.user_id, traj.profile_name, geoid))
    profiles, breakdown = demographics.profile_users(
        users, tables, cfg.reference_year, cfg.age_threshold)
    meta = cfg.as_dict()
    demographics.write_profiles_csv(profiles, workdir / PROFILES, meta)
    _write_json({"breakdown": breakdown, "parameters": meta}, workdir / BREAKDOWN)
    return breakdown


def stage_analyze(cfg: PipelineConfig, workdir) -> dict:
    workdir = Path(workdir)
    metrics_path = _require(workdir, METRICS, "metrics")
    centers_path = _require(workdir, CENTERS, "centers")
    homes_path = _require(workdir, HOMES, "centers")
    metrics = mobility.read_metrics_csv(metrics_path)
    center_records, _ = clustering.read_centers_geojson(centers_path)
    homes = clustering.read_homes_csv(homes_path)
    meta = cfg.as_dict()
    summary = {"parameters": meta}

    # gyradius density and segmented power-law fit (values in km)
    gyr_km = np.array([m.gyradius_m for m in metrics]) / 1000.0
    if (gyr_km > 0).any():
        density = analysis.log_log_density(gyr_km, cfg.bins_per_decade)
        analysis.write_density_csv(density, workdir / DENSITY, meta)
        fit = analysis.fit_segments(density, cfg.fit_breakpoints_km, cfg.fit_lower_km)
        fit_doc = analysis.segment_fit_to_dict(fit)
        fit_doc["parameters"] = meta
        _write_json(fit_doc, workdir / FITS)
        summary["segment_slopes"] = fit_doc["segments"]
    else:
        analysis.write_density_csv(
            analysis.LogLogDensity(np.array([]), np.array([]), np.array([]),
                                   np.array([], dtype=int), 0, len(gyr_km)),
            workdir / DENSITY, meta)
        _write_json({"segments": [], "parameters": meta}, workdir / FITS)
        summary["segment_slopes"] = []

    # activity-center count histogram
    per_user = {}
    for rec in center_records:
        per_user[rec["user_id"]] = per_user.get(rec["user_id"], 0) + 1
    counts = [per_user.get(m.user_id, 0) for m in metrics]
    hist = analysis.activity_center_histogram(counts)
    analysis.write_histogram_csv(hist, workdir / HISTOGRAM, meta)
    summary["center_count_mean"] = hist["mean"]
    summary["center_count_median"] = hist["median"]

    # tract correlation between detected residents and censused population
    tract_demo_path = cfg.table_path("tract_demo_file", workdir)
    tracts_path = cfg.table_path("tracts_file", workdir)
    correlation = None
    if os.path.exists(tract_demo_path) and os.path.exists(tracts_path):
        tracts = demographics.load_tract_demographics(tract_demo_path)
        index = TractIndex.build(load_tracts_geojson(tracts_path))
        geoids = []
        for det in homes.values():
            if det.home is None:
                continue
            lonlat = DEFAULT_PROJECTION.inverse(det.home.center)
            geoid = tract_lookup(lonlat, index)
            if geoid is not None:
                geoids.append(geoid)
        try:
            correlation = analysis.tract_user_correlation(geoids, tracts)
        except ValueError:
            correlation = None
    summary["tract_user_correlation"] = correlation

    # KDE rasters over all activity centers, city and national scale
    pts = np.array([DEFAULT_PROJECTION.forward(GeoPoint(r["lon"], r["lat"]))
                    for r in center_records]).reshape(-1, 2)
    for scope, out_name, bbox in ((
            "city", KDE_CITY, cfg.city_bbox), ("national", KDE_NATIONAL, cfg.bbox)):
        bandwidth, cell = cfg.kde_params(scope)
        extent = projected_extent(bbox, analysis.TRUNCATION_SIGMAS * bandwidth)
        inside = pts
        if len(pts):
            sel = ((pts[:, 0] >= extent[0]) & (pts[:, 0] <= extent[2])
                   & (pts[:, 1] >= extent[1]) & (pts[:, 1] <= extent[3]))
            inside = pts[sel]
        raster = analysis.kde_raster(inside, bandwidth, cell, extent)
        analysis.write_esri_ascii(raster, workdir / out_name)
        _write_json({"parameters": meta, "bandwidth_m": bandwidth, "cell_m": cell,
                     "extent": list(extent), "n_points": int(len(inside))},
                    Path(str(workdir / out_name) + ".meta.json"))
        summary[f"kde_{scope}_points"] = int(len(inside))

    _write_json(summary, workdir / ANALYSIS)
    return summary


def _group_stats(user_ids, gyr_by_user: dict, centers_by_user: dict,
                 cfg: PipelineConfig) -> dict:
    gyr_km = np.array([gyr_by_user[u] for u in user_ids if u in gyr_by_user]) / 1000.0
    counts = np.array([centers_by_user.get(u, 0) for u in user_ids])
    stats = {"n_users": len(user_ids)}
    if len(gyr_km):
        stats["gyradius_mean_km"] = float(gyr_km.mean())
        stats["gyradius_median_km"] = float(np.median(gyr_km))
    else:
        stats["gyradius_mean_km"] = None
        stats["gyradius_median_km"] = None
    stats["center_count_mean"] = float(counts.mean()) if len(counts) else None
    stats["center_count_median"] = float(np.median(counts)) if len(counts) else None
    slopes = None
    density = None
    if (gyr_km > 0).sum() >= 2:
        density = analysis.log_log_density(gyr_km, cfg.bins_per_decade)
        fit = analysis.fit_segments(density, cfg.fit_breakpoints_km, cfg.fit_lower_km)
        slopes = fit.slopes
    stats["segment_slopes"] = slopes
    return stats, density


def stage_report(cfg: PipelineConfig, workdir, render_figures: bool = True) -> dict:
    workdir = Path(workdir)
    metrics = mobility.read_metrics_csv(_require(workdir, METRICS, "metrics"))
    center_records, _ = clustering.read_centers_geojson(
        _require(workdir, CENTERS, "centers"))
    profiles = demographics.read_profiles_csv(
        _require(workdir, PROFILES, "demographics"))
    monthly = mobility.read_monthly_csv(_require(workdir, MONTHLY, "metrics"))
    with open(_require(workdir, BREAKDOWN, "demographics"), encoding="utf-8") as fh:
        breakdown = json.load(fh)["breakdown"]

    gyr_by_user = {m.user_id: m.gyradius_m for m in metrics}
    centers_by_user = {}
    for rec in center_records:
        centers_by_user[rec["user_id"]] = centers_by_user.get(rec["user_id"], 0) + 1

    groups = {}
    densities = {}
    all_users = [m.user_id for m in metrics]
    groups["all"], densities["all"] = _group_stats(all_users, gyr_by_user,
                                                   centers_by_user, cfg)
    dimension_values = {
        "race": demographics.RACE_CATEGORIES,
        "gender": ("male", "female"),
        "age": demographics.AGE_GROUPS,
    }
    attr = {"race": "race", "gender": "gender", "age": "age_group"}
    for dim, values in dimension_values.items():
        groups[dim] = {}
        for value in values:
            members = [p.user_id for p in profiles
                       if getattr(p, attr[dim]) == value and p.user_id in gyr_by_user]
            groups[dim][value], dens = _group_stats(members, gyr_by_user,
                                                    centers_by_user, cfg)
            densities[(dim, value)] = dens

    correlation = None
    analysis_path = workdir / ANALYSIS
    if analysis_path.exists():
        with open(analysis_path, encoding="utf-8") as fh:
            correlation = json.load(fh).get("tract_user_correlation")

    report = {
        "parameters": cfg.as_dict(),
        "breakdown": breakdown,
        "groups": groups,
        "tract_user_correlation": correlation,
        "monthly_gyradius_km": [
            {"month": p.month,
             "mean_km": None if math.isnan(p.mean_gyradius_m) else p.mean_gyradius_m / 1000.0,
             "n_users": p.n_users}
            for p in monthly],
    }
    _write_json(report, workdir / REPORT)

    if render_figures:
        from . import figures
        hist = analysis.activity_center_histogram(
            [centers_by_user.get(u, 0) for u in all_users])
        figure_paths = figures.render_report_figures(
            workdir, densities, groups, hist, monthly, cfg)
        report["figures"] = [p.name for p in figure_paths]
        _write_json(report, workdir / REPORT)
    return report


def stage_score(cfg: PipelineConfig, workdir, truth_path=None,
                eps_m: float = None) -> dict:
    workdir = Path(workdir)
    truth_file = Path(truth_path) if truth_path else workdir / TRUTH
    if not truth_file.exists():
        raise MissingCheckpointError(truth_file, "synth")
    truth, _meta = synth.read_truth_jsonl(truth_file)
    homes = clustering.read_homes_csv(_require(workdir, HOMES, "centers"))
    metrics = mobility.read_metrics_csv(_require(workdir, METRICS, "metrics"))
    profiles = demographics.read_profiles_csv(_require(workdir, PROFILES, "demographics"))
    eps = cfg.dbscan_params.eps_m if eps_m is None else eps_m
    result = synth.score(truth, homes, metrics, profiles, eps)
    result["parameters"] = cfg.as_dict()
    _write_json(result, workdir / SCORE)
    return result


def run_all(cfg: PipelineConfig, workdir, seed: int = 42, n_users: int = 500,
            render_figures: bool = True) -> dict:
    """synth -> ingest -> ... -> report -> score, returning the score."""
    stage_synth(cfg, workdir, seed=seed, n_users=n_users)
    stage_ingest(cfg, workdir)
    stage_trajectories(cfg, workdir)
    stage_metrics(cfg, workdir)
    stage_centers(cfg, workdir)
    stage_demographics(cfg, workdir)
    stage_analyze(cfg, workdir)
    stage_report(cfg, workdir, render_figures=render_figures)
    return stage_score(cfg, workdir)
