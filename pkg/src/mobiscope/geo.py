"""Geodesy primitives: great-circle distance, equal-area projection,
point-in-polygon tract lookup with a uniform grid index.

All projected work happens on a sphere of radius ``EARTH_RADIUS_M`` in an
Albers equal-area conic plane (standard parallels 29.5/45.5, origin 23N 96W),
so Euclidean distances downstream are in meters and areas are preserved.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

EARTH_RADIUS_M = 6_371_008.8


class GeoPoint(NamedTuple):
    lon: float
    lat: float


class ProjectedPoint(NamedTuple):
    x: float
    y: float


class InvalidPolygonError(ValueError):
    """Raised when a tract polygon fails validation on load."""


@dataclass(frozen=True)
class BoundingBox:
    """Closed lon/lat rectangle; boundary points count as inside."""

    lon_min: float
    lat_min: float
    lon_max: float
    lat_max: float

    def __post_init__(self):
        if self.lon_min >= self.lon_max or self.lat_min >= self.lat_max:
            raise ValueError(f"degenerate bounding box: {self}")

    def contains(self, lon: float, lat: float) -> bool:
        return (self.lon_min <= lon <= self.lon_max
                and self.lat_min <= lat <= self.lat_max)


def haversine_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters on the mean-radius sphere.

    Symmetric, non-negative, zero iff the coordinate pairs are equal.
    """
    lon1, lat1, lon2, lat2 = map(math.radians, (a.lon, a.lat, b.lon, b.lat))
    dlon = lon2 - lon1
    dlat = lat2 - lat1
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


class AlbersEqualArea:
    """Spherical Albers equal-area conic projection (forward and inverse).

    Parameters default to the contiguous-US set: standard parallels 29.5 and
    45.5 degrees, latitude of origin 23, central meridian -96, no false
    easting/northing. The sphere radius matches ``EARTH_RADIUS_M`` so
    projected areas agree with spherical areas.
    """

    def __init__(self, std_parallel_1=29.5, std_parallel_2=45.5,
                 lat_origin=23.0, lon_origin=-96.0, radius=EARTH_RADIUS_M):
        phi1 = math.radians(std_parallel_1)
        phi2 = math.radians(std_parallel_2)
        phi0 = math.radians(lat_origin)
        self.lam0 = math.radians(lon_origin)
        self.radius = radius
        self.n = (math.sin(phi1) + math.sin(phi2)) / 2
        self.c = math.cos(phi1) ** 2 + 2 * self.n * math.sin(phi1)
        self.rho0 = radius * math.sqrt(self.c - 2 * self.n * math.sin(phi0)) / self.n

    def forward(self, p: GeoPoint) -> ProjectedPoint:
        phi = math.radians(p.lat)
        lam = math.radians(p.lon)
        rho = self.radius * math.sqrt(self.c - 2 * self.n * math.sin(phi)) / self.n
        theta = self.n * (lam - self.lam0)
        return ProjectedPoint(rho * math.sin(theta), self.rho0 - rho * math.cos(theta))

    def inverse(self, p: ProjectedPoint) -> GeoPoint:
        rho = math.hypot(p.x, self.rho0 - p.y)
        theta = math.atan2(p.x, self.rho0 - p.y)
        sin_phi = (self.c - (rho * self.n / self.radius) ** 2) / (2 * self.n)
        phi = math.asin(max(-1.0, min(1.0, sin_phi)))
        lam = self.lam0 + theta / self.n
        return GeoPoint(math.degrees(lam), math.degrees(phi))


DEFAULT_PROJECTION = AlbersEqualArea()


def project_albers(p: GeoPoint) -> ProjectedPoint:
    """Forward Albers mapping with the fixed contiguous-US parameter set."""
    return DEFAULT_PROJECTION.forward(p)


def unproject_albers(p: ProjectedPoint) -> GeoPoint:
    return DEFAULT_PROJECTION.inverse(p)


# ---------------------------------------------------------------------------
# Census tract polygons
# ---------------------------------------------------------------------------

Ring = list  # list of (lon, lat) tuples, closed (first == last)


@dataclass
class TractPolygon:
    """One census tract ring set: outer ring plus optional holes.

    Rings are closed lon/lat vertex lists (first vertex repeated at the end).
    Validation rejects short/unclosed rings and self-intersecting outer rings.
    """

    geoid: str
    rings: list

    def __post_init__(self):
        if not self.rings:
            raise InvalidPolygonError(f"tract {self.geoid}: no rings")
        for k, ring in enumerate(self.rings):
            if len(ring) < 4:
                raise InvalidPolygonError(
                    f"tract {self.geoid}: ring {k} has {len(ring)} vertices, need >= 4")
            if tuple(ring[0]) != tuple(ring[-1]):
                raise InvalidPolygonError(f"tract {self.geoid}: ring {k} not closed")
        if _ring_self_intersects(self.rings[0]):
            raise InvalidPolygonError(f"tract {self.geoid}: outer ring self-intersects")

    def bbox(self) -> tuple:
        xs = [v[0] for v in self.rings[0]]
        ys = [v[1] for v in self.rings[0]]
        return (min(xs), min(ys), max(xs), max(ys))


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _segments_cross(p1, p2, p3, p4) -> bool:
    """Proper or improper intersection of p1p2 and p3p4, excluding the case
    where they merely share an endpoint."""
    d1 = _orient(*p3, *p4, *p1)
    d2 = _orient(*p3, *p4, *p2)
    d3 = _orient(*p1, *p2, *p3)
    d4 = _orient(*p1, *p2, *p4)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
        return True
    # collinear overlap
    for d, a in ((d1, p1), (d2, p2)):
        if d == 0 and _between(p3, p4, a) and a not in (p3, p4):
            return True
    for d, a in ((d3, p3), (d4, p4)):
        if d == 0 and _between(p1, p2, a) and a not in (p1, p2):
            return True
    return False


def _between(a, b, c) -> bool:
    return (min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= c[1] <= max(a[1], b[1]))


def _ring_self_intersects(ring) -> bool:
    # O(n^2) over the n-1 real edges; tract rings are small enough.
    n = len(ring) - 1
    edges = [(tuple(ring[i]), tuple(ring[i + 1])) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            adjacent = (j == i + 1) or (i == 0 and j == n - 1)
            if adjacent:
                continue
            if _segments_cross(*edges[i], *edges[j]):
                return True
    return False


def _on_ring_edge(px, py, ring) -> bool:
    for i in range(len(ring) - 1):
        ax, ay = ring[i]
        bx, by = ring[i + 1]
        if _orient(ax, ay, bx, by, px, py) == 0 and _between((ax, ay), (bx, by), (px, py)):
            return True
    return False


def _crossings_odd(px, py, ring) -> bool:
    inside = False
    for i in range(len(ring) - 1):
        ax, ay = ring[i]
        bx, by = ring[i + 1]
        if (ay > py) != (by > py):
            x_cross = ax + (py - ay) * (bx - ax) / (by - ay)
            if px < x_cross:
                inside = not inside
    return inside


def point_in_polygon(p: GeoPoint, poly: TractPolygon) -> bool:
    """Even-odd containment over outer ring minus holes.

    Points exactly on any ring edge (outer or hole boundary) count as inside.
    """
    px, py = p.lon, p.lat
    for ring in poly.rings:
        if _on_ring_edge(px, py, ring):
            return True
    parity = False
    for ring in poly.rings:
        if _crossings_odd(px, py, ring):
            parity = not parity
    return parity


@dataclass
class TractIndex:
    """Uniform grid over the tract extent for point lookups.

    Each polygon is registered in every grid cell its bounding box touches,
    so a containing polygon is always among a query cell's candidates.
    Query results are identical to a linear scan in ascending geoid order.
    """

    polygons: list
    nx: int = 0
    ny: int = 0
    x0: float = 0.0
    y0: float = 0.0
    dx: float = 1.0
    dy: float = 1.0
    cells: dict = field(default_factory=dict)

    @classmethod
    def build(cls, polygons: Sequence[TractPolygon], cells_per_axis: int = 64) -> "TractIndex":
        polys = sorted(polygons, key=lambda t: t.geoid)
        if not polys:
            return cls(polygons=[])
        boxes = [t.bbox() for t in polys]
        x0 = min(b[0] for b in boxes)
        y0 = min(b[1] for b in boxes)
        x1 = max(b[2] for b in boxes)
        y1 = max(b[3] for b in boxes)
        nx = ny = max(1, cells_per_axis)
        dx = (x1 - x0) / nx or 1.0
        dy = (y1 - y0) / ny or 1.0
        idx = cls(polygons=polys, nx=nx, ny=ny, x0=x0, y0=y0, dx=dx, dy=dy)
        for k, b in enumerate(boxes):
            i0 = idx._col(b[0])
            i1 = idx._col(b[2])
            j0 = idx._row(b[1])
            j1 = idx._row(b[3])
            for i in range(i0, i1 + 1):
                for j in range(j0, j1 + 1):
                    idx.cells.setdefault((i, j), []).append(k)
        return idx

    def _col(self, x: float) -> int:
        return min(self.nx - 1, max(0, int((x - self.x0) / self.dx)))

    def _row(self, y: float) -> int:
        return min(self.ny - 1, max(0, int((y - self.y0) / self.dy)))

    def lookup(self, p: GeoPoint) -> Optional[str]:
        if not self.polygons:
            return None
        if not (self.x0 <= p.lon <= self.x0 + self.nx * self.dx
                and self.y0 <= p.lat <= self.y0 + self.ny * self.dy):
            return None
        candidates = self.cells.get((self._col(p.lon), self._row(p.lat)), ())
        for k in candidates:  # registered in ascending-geoid order
            if point_in_polygon(p, self.polygons[k]):
                return self.polygons[k].geoid
        return None


def tract_lookup(p: GeoPoint, idx: TractIndex) -> Optional[str]:
    """Geoid of the containing tract (lowest geoid on overlap), or None."""
    return idx.lookup(p)


def tract_lookup_linear(p: GeoPoint, polygons: Sequence[TractPolygon]) -> Optional[str]:
    """Exhaustive-scan reference for tract_lookup."""
    for poly in sorted(polygons, key=lambda t: t.geoid):
        if point_in_polygon(p, poly):
            return poly.geoid
    return None


def load_tracts_geojson(path) -> list:
    """Load tract polygons from a GeoJSON FeatureCollection.

    Each feature must carry a ``GEOID`` property. MultiPolygon features are
    split into one TractPolygon per part (sharing the geoid).
    """
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("type") != "FeatureCollection":
        raise InvalidPolygonError(f"{path}: expected a GeoJSON FeatureCollection")
    tracts = []
    for feat in doc.get("features", []):
        props = feat.get("properties") or {}
        geoid = props.get("GEOID")
        if geoid is None:
            raise InvalidPolygonError(f"{path}: feature without GEOID property")
        geom = feat.get("geometry") or {}
        gtype = geom.get("type")
        coords = geom.get("coordinates")
        if gtype == "Polygon":
            parts = [coords]
        elif gtype == "MultiPolygon":
            parts = coords
        else:
            raise InvalidPolygonError(f"tract {geoid}: unsupported geometry {gtype!r}")
        for rings in parts:
            tracts.append(TractPolygon(str(geoid), [[tuple(v) for v in r] for r in rings]))
    return tracts
