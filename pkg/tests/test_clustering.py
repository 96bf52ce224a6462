"""DBSCAN against the naive O(n^2) reference; activity centers and homes."""

from datetime import datetime
from zoneinfo import ZoneInfo

import numpy as np
import pytest

from conftest import naive_dbscan, partitions_equal, random_point_set
from mobiscope.clustering import (NOISE, ActivityCenter, DbscanParams, NightWindow,
                                  activity_centers, dbscan, detect_home,
                                  read_centers_geojson, read_homes_csv,
                                  write_centers_geojson, write_homes_csv)
from mobiscope.geo import GeoPoint, ProjectedPoint
from mobiscope.trajectory import Sample, Trajectory


def ts_local(y, m, d, hh, mm, tz="America/Chicago"):
    return int(datetime(y, m, d, hh, mm, tzinfo=ZoneInfo(tz)).timestamp())


def plane_traj(coords, times, user="u"):
    samples = [Sample(GeoPoint(float(x), float(y)), int(t), None)
               for (x, y), t in zip(coords, times)]
    return Trajectory(user, samples, "A B")


class TestDbscan:
    def test_fewer_points_than_min_pts_all_noise(self):
        pts = np.array([[0.0, 0.0], [10.0, 0.0]])
        labels = dbscan(pts, DbscanParams(100.0, 3))
        assert (labels == NOISE).all()

    def test_min_pts_coincident_points_form_one_cluster(self):
        pts = np.zeros((3, 2))
        labels = dbscan(pts, DbscanParams(50.0, 3))
        assert (labels == 0).all()

    def test_isolated_points_are_noise(self):
        pts = np.array([[0.0, 0.0], [500.0, 0.0], [1000.0, 0.0]])
        labels = dbscan(pts, DbscanParams(100.0, 2))
        assert (labels == NOISE).all()

    def test_neighborhood_radius_is_inclusive(self):
        pts = np.array([[0.0, 0.0], [100.0, 0.0], [200.0, 0.0]])
        labels = dbscan(pts, DbscanParams(100.0, 3))
        assert (labels == 0).all()  # middle point has exactly 3 neighbors incl self

    def test_matches_naive_reference(self):
        rng = np.random.default_rng(20)
        for trial in range(10):
            pts = random_point_set(rng, int(rng.integers(20, 400)))
            for eps in (50.0, 100.0, 500.0):
                for min_pts in (3, 5):
                    got = dbscan(pts, DbscanParams(eps, min_pts))
                    ref = naive_dbscan(pts, eps, min_pts)
                    assert partitions_equal(got, ref)

    def test_repeated_runs_identical(self):
        rng = np.random.default_rng(21)
        pts = random_point_set(rng, 300)
        params = DbscanParams(100.0, 3)
        first = dbscan(pts, params)
        second = dbscan(pts, params)
        assert np.array_equal(first, second)

    def test_member_plus_noise_counts_conserve(self):
        rng = np.random.default_rng(22)
        pts = random_point_set(rng, 350)
        labels = dbscan(pts, DbscanParams(100.0, 3))
        n_noise = int((labels == NOISE).sum())
        n_clustered = sum(int((labels == c).sum()) for c in range(labels.max() + 1))
        assert n_noise + n_clustered == len(pts)

    def test_cluster_ids_numbered_in_discovery_order(self):
        blob = lambda cx: [[cx + dx, 0.0] for dx in (0, 10, 20)]
        pts = np.array(blob(0) + blob(10_000) + blob(20_000))
        labels = dbscan(pts, DbscanParams(100.0, 3))
        assert labels.tolist() == [0, 0, 0, 1, 1, 1, 2, 2, 2]

    def test_invalid_params_rejected(self):
        with pytest.raises(ValueError):
            DbscanParams(0.0, 3)
        with pytest.raises(ValueError):
            DbscanParams(100.0, 0)


class TestNightWindow:
    def test_half_open_boundaries(self):
        night = NightWindow(tz_name="America/Chicago")
        assert night.contains_ts(ts_local(2013, 2, 5, 20, 0))
        assert night.contains_ts(ts_local(2013, 2, 5, 23, 59))
        assert night.contains_ts(ts_local(2013, 2, 6, 0, 0))
        assert night.contains_ts(ts_local(2013, 2, 6, 7, 59))
        assert not night.contains_ts(ts_local(2013, 2, 6, 8, 0))
        assert not night.contains_ts(ts_local(2013, 2, 6, 12, 0))
        assert not night.contains_ts(ts_local(2013, 2, 6, 19, 59))

    def test_timezone_matters(self):
        ts = ts_local(2013, 2, 5, 21, 0, tz="America/Chicago")
        assert NightWindow(tz_name="America/Chicago").contains_ts(ts)
        # 21:00 Chicago is early evening in UTC+0? no: it is 03:00 UTC next day
        assert NightWindow(tz_name="UTC").contains_ts(ts)
        assert not NightWindow(tz_name="Asia/Shanghai").contains_ts(ts)

    def test_non_wrapping_window(self):
        win = NightWindow.from_strings("09:00", "17:00", "UTC")
        noon = int(datetime(2013, 5, 1, 12, 0, tzinfo=ZoneInfo("UTC")).timestamp())
        night = int(datetime(2013, 5, 1, 3, 0, tzinfo=ZoneInfo("UTC")).timestamp())
        assert win.contains_ts(noon)
        assert not win.contains_ts(night)


NIGHT_T = ts_local(2013, 2, 5, 2, 0)
DAY_T = ts_local(2013, 2, 5, 12, 0)


class TestActivityCenters:
    def test_single_dense_blob_gives_one_center(self, plane):
        coords = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0), (10.0, 10.0)]
        traj = plane_traj(coords, [DAY_T] * 4)
        centers = activity_centers(traj, DbscanParams(100.0, 3),
                                   NightWindow(), projection=plane)
        assert len(centers) == 1
        assert centers[0].center == (5.0, 5.0)
        assert centers[0].member_count == 4
        assert centers[0].night_count == 0

    def test_two_blobs_ordered_by_member_count(self, plane):
        small = [(0.0, float(i * 10)) for i in range(3)]
        big = [(5000.0, float(i * 10)) for i in range(5)]
        traj = plane_traj(small + big, [NIGHT_T] * 3 + [DAY_T] * 5)
        centers = activity_centers(traj, DbscanParams(100.0, 3),
                                   NightWindow(), projection=plane)
        assert [c.member_count for c in centers] == [5, 3]
        assert centers[1].night_count == 3

    def test_all_noise_gives_no_centers(self, plane):
        coords = [(0.0, 0.0), (1000.0, 0.0), (2000.0, 0.0)]
        traj = plane_traj(coords, [DAY_T] * 3)
        centers = activity_centers(traj, DbscanParams(100.0, 2),
                                   NightWindow(), projection=plane)
        assert centers == []


class TestDetectHome:
    def test_all_posts_one_location_at_night(self, plane):
        traj = plane_traj([(50.0, 50.0)] * 6, [NIGHT_T + i for i in range(6)])
        det = detect_home(traj, DbscanParams(100.0, 3), NightWindow(), projection=plane)
        assert det.home is not None
        assert det.home.center == (50.0, 50.0)
        assert det.home.night_count == 6

    def test_night_filter_precedes_counting(self, plane):
        # 30 night posts at A, 5 night posts at B, 100 daytime posts at B
        a = [(0.0, 0.0)] * 30
        b_night = [(5000.0, 0.0)] * 5
        b_day = [(5000.0, 0.0)] * 100
        times = [NIGHT_T] * 30 + [NIGHT_T] * 5 + [DAY_T] * 100
        traj = plane_traj(a + b_night + b_day, times)
        det = detect_home(traj, DbscanParams(100.0, 3), NightWindow(), projection=plane)
        assert det.home.center == (0.0, 0.0)
        assert det.home.member_count == 30

    def test_no_night_posts_means_no_home(self, plane):
        traj = plane_traj([(0.0, 0.0)] * 10, [DAY_T] * 10)
        det = detect_home(traj, DbscanParams(100.0, 3), NightWindow(), projection=plane)
        assert det.home is None

    def test_tie_broken_by_all_hours_count(self, plane):
        # two night clusters of equal size; B has extra daytime visits
        a = [(0.0, 0.0)] * 4
        b = [(5000.0, 0.0)] * 4
        b_day = [(5000.0, 0.0)] * 10
        traj = plane_traj(a + b + b_day, [NIGHT_T] * 8 + [DAY_T] * 10)
        det = detect_home(traj, DbscanParams(100.0, 3), NightWindow(), projection=plane)
        assert det.home.center == (5000.0, 0.0)

    def test_centers_mode_picks_max_night_count(self, plane):
        a = [(0.0, 0.0)] * 30
        b = [(5000.0, 0.0)] * 100
        traj = plane_traj(a + b, [NIGHT_T] * 30 + [DAY_T] * 100)
        det = detect_home(traj, DbscanParams(100.0, 3), NightWindow(),
                          mode="centers", projection=plane)
        assert det.home.center == (0.0, 0.0)
        assert det.home.member_count == 30  # all-hours membership of that center

    def test_unknown_mode_rejected(self, plane):
        traj = plane_traj([(0.0, 0.0)] * 4, [NIGHT_T] * 4)
        with pytest.raises(ValueError):
            detect_home(traj, DbscanParams(100.0, 3), NightWindow(), mode="extra",
                        projection=plane)

    def test_invariant_under_whole_day_translation(self, plane):
        # UTC night window makes day-shifts exact wall-clock translations
        rng = np.random.default_rng(33)
        base = int(datetime(2013, 3, 1, tzinfo=ZoneInfo("UTC")).timestamp())
        coords, times = [], []
        for i in range(40):
            night = i % 2 == 0
            hour = 23 if night else 14
            coords.append((0.0, 0.0) if night else (7000.0, 0.0))
            times.append(base + int(rng.integers(0, 20)) * 86400 + hour * 3600)
        night_utc = NightWindow(tz_name="UTC")
        params = DbscanParams(100.0, 3)
        det0 = detect_home(plane_traj(coords, times), params, night_utc, projection=plane)
        for k in (1, 7, 30):
            shifted = [t + k * 86400 for t in times]
            det = detect_home(plane_traj(coords, shifted), params, night_utc,
                              projection=plane)
            assert det.home.center == det0.home.center
            assert det.home.member_count == det0.home.member_count


class TestArtifactRoundtrips:
    def test_centers_geojson_roundtrip(self, tmp_path):
        user_centers = {
            "u1": [ActivityCenter(ProjectedPoint(687000.0, 2133000.0), 12, 8),
                   ActivityCenter(ProjectedPoint(690000.0, 2135000.0), 5, 0)],
            "u2": [ActivityCenter(ProjectedPoint(700000.0, 2140000.0), 30, 30)],
        }
        from mobiscope.clustering import HomeDetection
        homes = {"u1": HomeDetection("u1", user_centers["u1"][0]),
                 "u2": HomeDetection("u2", None)}
        path = tmp_path / "centers.geojson"
        write_centers_geojson(user_centers, homes, path, {"eps_m": 100})
        records, meta = read_centers_geojson(path)
        assert meta == {"eps_m": 100}
        assert len(records) == 3
        assert records[0]["is_home"] and records[0]["member_count"] == 12
        assert not records[1]["is_home"]
        assert not records[2]["is_home"]
        from mobiscope.geo import project_albers
        back = project_albers(GeoPoint(records[0]["lon"], records[0]["lat"]))
        assert back.x == pytest.approx(687000.0, abs=1e-6)
        assert back.y == pytest.approx(2133000.0, abs=1e-6)

    def test_homes_csv_roundtrip(self, tmp_path):
        from mobiscope.clustering import HomeDetection
        homes = {"u1": HomeDetection("u1", ActivityCenter(
                     ProjectedPoint(687000.125, 2133000.5), 12, 8)),
                 "u2": HomeDetection("u2", None)}
        path = tmp_path / "homes.csv"
        write_homes_csv(homes, path, {"eps_m": 100})
        again = read_homes_csv(path)
        assert set(again) == {"u1"}
        assert again["u1"].home.center == ProjectedPoint(687000.125, 2133000.5)
        assert again["u1"].home.member_count == 12
        assert again["u1"].home.night_count == 8
