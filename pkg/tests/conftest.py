"""Shared test fixtures and reference implementations."""

import numpy as np
import pytest

from mobiscope.geo import GeoPoint, ProjectedPoint


class PlaneProjection:
    """Treats lon/lat as plane meters; isolates geometry tests from geodesy."""

    def forward(self, p: GeoPoint) -> ProjectedPoint:
        return ProjectedPoint(p.lon, p.lat)

    def inverse(self, p: ProjectedPoint) -> GeoPoint:
        return GeoPoint(p.x, p.y)


def naive_dbscan(points, eps: float, min_pts: int) -> np.ndarray:
    """O(n^2) reference DBSCAN with the same deterministic expansion order:
    seeds in input order, neighbor lists ascending by index."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
    neigh = [np.flatnonzero(d2[i] <= eps * eps) for i in range(n)]
    labels = np.full(n, -2, dtype=np.int64)
    cluster = 0
    for i in range(n):
        if labels[i] != -2:
            continue
        if len(neigh[i]) < min_pts:
            labels[i] = -1
            continue
        labels[i] = cluster
        queue = list(neigh[i])
        qi = 0
        while qi < len(queue):
            j = queue[qi]
            qi += 1
            if labels[j] == -1:
                labels[j] = cluster
            elif labels[j] == -2:
                labels[j] = cluster
                if len(neigh[j]) >= min_pts:
                    queue.extend(neigh[j])
        cluster += 1
    return labels


def partitions_equal(labels_a, labels_b) -> bool:
    """Same clustering up to cluster renumbering; noise must match exactly."""
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape or not np.array_equal(a == -1, b == -1):
        return False
    def clusters(labels):
        return {frozenset(np.flatnonzero(labels == c).tolist())
                for c in np.unique(labels) if c != -1}
    return clusters(a) == clusters(b)


def random_point_set(rng: np.random.Generator, n: int, extent_m: float = 2000.0,
                     blob_sigma: float = 80.0) -> np.ndarray:
    """Gaussian blobs plus uniform scatter over a square extent."""
    k = int(rng.integers(2, 6))
    centers = rng.uniform(0, extent_m, size=(k, 2))
    pts = np.empty((n, 2))
    for i in range(n):
        if rng.uniform() < 0.7:
            c = centers[rng.integers(k)]
            pts[i] = c + rng.normal(0, blob_sigma, 2)
        else:
            pts[i] = rng.uniform(0, extent_m, 2)
    return pts


def world_tables(world):
    """In-memory NameTables equivalent of a generated world's table files."""
    from mobiscope.demographics import (NameTables, SurnameRecord, TractDemo,
                                        national_totals)
    surnames = {name: SurnameRecord(name, prior) for name, prior in world.surname_rows}
    tracts = {geoid: TractDemo(geoid, counts, total)
              for geoid, total, counts in world.tract_rows}
    gender = {name: (m, f) for name, m, f in world.gender_rows}
    ages = {}
    for name, year, count in world.age_rows:
        ages.setdefault(name, {})[year] = count
    return NameTables(surnames, tracts, national_totals(tracts), gender, ages)


@pytest.fixture(scope="session")
def plane():
    return PlaneProjection()
