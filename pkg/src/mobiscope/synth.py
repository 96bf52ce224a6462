"""Deterministic synthetic population with planted ground truth.

Generates a self-consistent world: grid census tracts with demographics,
name tables wired so the inference argmax equals the planted label, and
per-user post logs with night posts at the planted home and a daytime
decoy center at a distance drawn from a planted gyradius mixture. The
same seed always produces byte-identical outputs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from zoneinfo import ZoneInfo

import numpy as np

from .clustering import NightWindow
from .demographics import (AGE_GROUPS, RACE_CATEGORIES, SurnameRecord, TractDemo,
                           bisg_posterior, infer_age_group, infer_gender, parse_name)
from .geo import BoundingBox, GeoPoint, project_albers
from .ingest import PostRecord, record_to_json
from .trajectory import TimeWindow

_MASK64 = (1 << 64) - 1


class Splitmix64:
    """64-bit splitmix generator; reference outputs are frozen in the tests.

    Used instead of a platform RNG so that identical seeds reproduce
    identical streams regardless of runtime version.
    """

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * 2.0 ** -53

    def normal(self) -> float:
        u1 = self.uniform() or 2.0 ** -53
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] inclusive."""
        return lo + min(hi - lo, int(self.uniform() * (hi - lo + 1)))

    def choice(self, seq):
        return seq[self.randint(0, len(seq) - 1)]

    def weighted_index(self, weights) -> int:
        u = self.uniform() * sum(weights)
        acc = 0.0
        for i, w in enumerate(weights):
            acc += w
            if u < acc:
                return i
        return len(weights) - 1

    def shuffle(self, items) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(0, i)
            items[i], items[j] = items[j], items[i]


class GenerationError(RuntimeError):
    pass


US_BBOX = BoundingBox(-124.7, 24.5, -66.9, 49.4)

# anchors far from the default city for regional/national decoy placement
_FAR_ANCHORS = [
    (-96.0, 36.0), (-104.9, 39.7), (-90.1, 35.1), (-84.4, 33.7), (-93.3, 45.0),
    (-112.1, 33.4), (-118.2, 34.1), (-122.4, 37.8), (-122.3, 47.6), (-80.2, 25.8),
    (-97.7, 30.3), (-77.0, 38.9), (-71.1, 42.4), (-115.1, 36.2), (-81.7, 30.3),
]


@dataclass
class SynthSpec:
    seed: int = 42
    n_users: int = 500
    city_bbox: BoundingBox = field(
        default_factory=lambda: BoundingBox(-87.95, 41.60, -87.50, 42.05))
    tract_grid: int = 6
    window: TimeWindow = field(
        default_factory=lambda: TimeWindow(1356998400, 1372636800))
    tz_name: str = "America/Chicago"
    night_posts: tuple = (20, 26)
    day_posts: tuple = (28, 36)
    jitter_m: float = 25.0
    pseudonym_fraction: float = 0.10
    max_secondary_centers: int = 2
    regime_weights: tuple = (0.70, 0.25, 0.05)
    powerlaw_slopes: tuple = (-0.02, -0.99, -8.87)
    powerlaw_edges_km: tuple = (0.5, 25.0, 1000.0, 2371.37)

    def __post_init__(self):
        if self.n_users < 0 or self.jitter_m < 0:
            raise ValueError("n_users and jitter must be non-negative")
        if self.night_posts[0] < 0 or self.day_posts[0] < 0:
            raise ValueError("post rates must be non-negative")
        if abs(sum(self.regime_weights) - 1.0) > 1e-9:
            raise ValueError("regime weights must sum to 1")
        if not 0 <= self.pseudonym_fraction <= 1:
            raise ValueError("pseudonym fraction must be in [0, 1]")

    def as_dict(self) -> dict:
        return {
            "seed": self.seed, "n_users": self.n_users,
            "city_bbox": [self.city_bbox.lon_min, self.city_bbox.lat_min,
                          self.city_bbox.lon_max, self.city_bbox.lat_max],
            "tract_grid": self.tract_grid,
            "window": [self.window.start, self.window.end],
            "tz_name": self.tz_name,
            "night_posts": list(self.night_posts),
            "day_posts": list(self.day_posts),
            "jitter_m": self.jitter_m,
            "pseudonym_fraction": self.pseudonym_fraction,
            "max_secondary_centers": self.max_secondary_centers,
            "regime_weights": list(self.regime_weights),
            "powerlaw_slopes": list(self.powerlaw_slopes),
            "powerlaw_edges_km": list(self.powerlaw_edges_km),
        }


# ---------------------------------------------------------------------------
# Planted gyradius mixture
# ---------------------------------------------------------------------------

def _powerlaw_inv_cdf(u: float, lo: float, hi: float, slope: float) -> float:
    if abs(slope + 1.0) < 1e-12:
        return lo * (hi / lo) ** u
    a = slope + 1.0
    return (lo ** a + u * (hi ** a - lo ** a)) ** (1.0 / a)


def sample_powerlaw_mixture(n: int, edges, slopes, weights,
                            rng: Splitmix64 = None) -> np.ndarray:
    """n draws from a piecewise power-law mixture over [edges[0], edges[-1]].

    Within segment k the density is proportional to r**slopes[k]; segment k
    receives mass weights[k]. Without an rng the draws are stratified
    quantile midpoints, so the empirical distribution tracks the planted
    one as closely as n allows.
    """
    cum = np.concatenate([[0.0], np.cumsum(np.asarray(weights, dtype=float))])
    cum /= cum[-1]
    if rng is None:
        us = (np.arange(n) + 0.5) / n
    else:
        us = np.array([rng.uniform() for _ in range(n)])
    out = np.empty(n)
    for i, u in enumerate(us):
        k = int(np.searchsorted(cum, u, side="right")) - 1
        k = min(k, len(weights) - 1)
        v = (u - cum[k]) / (cum[k + 1] - cum[k])
        out[i] = _powerlaw_inv_cdf(v, edges[k], edges[k + 1], slopes[k])
    return out


def sample_gyradius_km(spec: SynthSpec, n: int, rng: Splitmix64 = None) -> np.ndarray:
    return sample_powerlaw_mixture(n, spec.powerlaw_edges_km, spec.powerlaw_slopes,
                                   spec.regime_weights, rng)


def piecewise_mass_weights(edges, slopes) -> tuple:
    """Segment masses that make the piecewise power law continuous.

    With these weights the mixture is a single curve with no density jump
    at the segment boundaries.
    """
    amp = [1.0]
    for k in range(1, len(slopes)):
        amp.append(amp[-1] * edges[k] ** (slopes[k - 1] - slopes[k]))
    masses = []
    for k, s in enumerate(slopes):
        a = s + 1.0
        if abs(a) < 1e-12:
            masses.append(amp[k] * math.log(edges[k + 1] / edges[k]))
        else:
            masses.append(amp[k] * (edges[k + 1] ** a - edges[k] ** a) / a)
    total = sum(masses)
    return tuple(m / total for m in masses)


def planted_loglog_density(slopes=(-0.02, -0.99, -8.87),
                           breakpoints=(25.0, 1000.0, 2000.0), lower=0.1,
                           bins_per_decade: int = 32, n: int = 5000,
                           weights=None, noise: float = 0.01, seed: int = 11):
    """A binned log-log density lying exactly on a planted piecewise power
    law, with multiplicative noise: the recovery target for segment fitting.

    Each bin center takes the value of its segment's normalized power law;
    bin occupancy reflects the expected counts of n samples. ``noise`` is
    the relative sigma of per-bin multiplicative jitter.
    """
    from .analysis import LogLogDensity  # local import to avoid a cycle

    if weights is None:
        weights = tuple(1.0 / len(slopes) for _ in slopes)
    top = breakpoints[-1] * 10 ** (6.0 / bins_per_decade)
    n_bins = math.ceil(math.log10(top / lower) * bins_per_decade)
    edges = lower * 10 ** (np.arange(n_bins + 1) / bins_per_decade)
    centers = np.sqrt(edges[:-1] * edges[1:])
    widths = np.diff(edges)
    bounds = [lower, *breakpoints]
    dens = np.zeros_like(centers)
    for k, s in enumerate(slopes):
        lo, hi = bounds[k], bounds[k + 1]
        a = s + 1.0
        norm = weights[k] * a / (hi ** a - lo ** a)
        sel = (centers > lo if k == 0 else centers >= lo) & (centers < hi)
        dens[sel] = norm * centers[sel] ** s
    counts = np.round(dens * widths * n).astype(int)
    rng = Splitmix64(seed)
    jitter = np.array([1.0 + noise * rng.normal() for _ in range(len(centers))])
    noisy = np.where(counts > 0, dens * jitter, 0.0)
    return LogLogDensity(centers, noisy, edges, counts, n, 0)


# ---------------------------------------------------------------------------
# Name material
# ---------------------------------------------------------------------------

_SYLLABLES = ["ka", "ri", "son", "da", "mor", "lin", "ta", "vel", "no", "ber",
              "sha", "el", "ron", "mi", "sto", "lan", "per", "qui", "ver", "dan"]


def _make_word(rng: Splitmix64, taken: set) -> str:
    for _ in range(200):
        word = "".join(rng.choice(_SYLLABLES) for _ in range(3))
        if word not in taken:
            taken.add(word)
            return word.capitalize()
    raise GenerationError("syllable space exhausted while drawing names")


def _build_name_material(rng: Splitmix64, reference_year: int = 2013):
    taken = set()
    surname_pool = {race: [_make_word(rng, taken) for _ in range(12)]
                    for race in RACE_CATEGORIES}
    surname_priors = {}
    for k, race in enumerate(RACE_CATEGORIES):
        for name in surname_pool[race]:
            p = 0.85 + 0.12 * rng.uniform()
            prior = np.full(5, (1.0 - p) / 4.0)
            prior[k] = p
            surname_priors[name.upper()] = prior

    # birth-year bands per age group for the given reference year
    bands = [(reference_year - 20, reference_year),
             (reference_year - 60, reference_year - 21),
             (1880, reference_year - 61)]
    forename_pool = {}
    gender_counts = {}
    age_counts = {}
    for gender in ("male", "female"):
        for g, group in enumerate(AGE_GROUPS):
            pool = [_make_word(rng, taken) for _ in range(10)]
            forename_pool[(gender, group)] = pool
            for name in pool:
                total = 1000 + rng.randint(0, 3000)
                minority = rng.randint(0, total // 25)
                key = name.upper()
                gender_counts[key] = ((total, minority) if gender == "male"
                                      else (minority, total))
                years = {}
                in_band = 0
                for _ in range(rng.randint(4, 7)):
                    year = rng.randint(*bands[g])
                    count = 100 + rng.randint(0, 400)
                    years[year] = years.get(year, 0) + count
                    in_band += count
                stray_band = bands[(g + 1) % 3]
                stray = max(1, int(in_band * 0.08))
                year = rng.randint(*stray_band)
                years[year] = years.get(year, 0) + stray
                age_counts[key] = years
    return surname_pool, surname_priors, forename_pool, gender_counts, age_counts


_PSEUDONYM_FORMS = ["xX_{w}{n}_Xx", "{w}{n}", "@{w}!!", "_{w}_{n}_", "{n}{w}{n}"]


def _make_pseudonym(rng: Splitmix64) -> str:
    for _ in range(100):
        form = rng.choice(_PSEUDONYM_FORMS)
        name = form.format(w=rng.choice(_SYLLABLES), n=rng.randint(0, 9999))
        if parse_name(name) is None:
            return name
    raise GenerationError("could not draw a pseudonym that fails name parsing")


# ---------------------------------------------------------------------------
# World construction
# ---------------------------------------------------------------------------

@dataclass
class SynthWorld:
    spec: SynthSpec
    posts: list              # PostRecord, emission order
    truth: list              # per-user dicts
    tract_features: list     # GeoJSON feature dicts
    tract_rows: list         # (geoid, total, counts) rows
    surname_rows: list       # (name, pct array) rows
    gender_rows: list        # (name, male, female)
    age_rows: list           # (name, year, count)


def _tract_geometry(spec: SynthSpec):
    bb = spec.city_bbox
    g = spec.tract_grid
    dlon = (bb.lon_max - bb.lon_min) / g
    dlat = (bb.lat_max - bb.lat_min) / g
    tracts = []
    for row in range(g):
        for col in range(g):
            lon0 = bb.lon_min + col * dlon
            lat0 = bb.lat_min + row * dlat
            geoid = f"17031{row * g + col:06d}"
            ring = [(lon0, lat0), (lon0 + dlon, lat0), (lon0 + dlon, lat0 + dlat),
                    (lon0, lat0 + dlat), (lon0, lat0)]
            tracts.append((geoid, lon0, lat0, dlon, dlat, ring))
    return tracts


def _tract_demographics(rng: Splitmix64, tracts) -> dict:
    rows = {}
    for k, (geoid, *_rest) in enumerate(tracts):
        total = 1000 + rng.randint(0, 7000)
        dominant = k % len(RACE_CATEGORIES)
        shares = np.array([0.08 + 0.04 * rng.uniform() for _ in RACE_CATEGORIES])
        shares[dominant] = 0.40 + 0.20 * rng.uniform()
        shares /= shares.sum()
        counts = np.floor(shares * total).astype(int)
        counts[dominant] += total - counts.sum()
        rows[geoid] = TractDemo(geoid, counts.astype(float), float(total))
    return rows


def _post_timestamp(rng: Splitmix64, spec: SynthSpec, night: bool,
                    night_window: NightWindow) -> int:
    tz = ZoneInfo(spec.tz_name)
    n_days = (spec.window.end - spec.window.start) // 86400
    base = datetime.fromtimestamp(spec.window.start, tz=timezone.utc).date()
    for _ in range(20):
        day = base + timedelta(days=rng.randint(1, int(n_days) - 2))
        if night:
            minute = (night_window.start_minute
                      + rng.randint(0, (1440 - night_window.start_minute
                                        + night_window.end_minute) - 1)) % 1440
        else:
            minute = rng.randint(9 * 60, 19 * 60 - 1)
        local = datetime(day.year, day.month, day.day, minute // 60, minute % 60,
                         rng.randint(0, 59), tzinfo=tz)
        ts = int(local.timestamp())
        if night_window.contains_ts(ts) == night and spec.window.contains(ts):
            return ts
    raise GenerationError("could not place a timestamp in the requested window")


def _offset_point(origin: GeoPoint, distance_km: float, bearing_rad: float) -> GeoPoint:
    dlat = distance_km * math.cos(bearing_rad) / 111.32
    dlon = distance_km * math.sin(bearing_rad) / (111.32 * math.cos(math.radians(origin.lat)))
    return GeoPoint(origin.lon + dlon, origin.lat + dlat)


def _place_decoy(rng: Splitmix64, home: GeoPoint, distance_km: float) -> GeoPoint:
    d = distance_km
    for _ in range(60):
        bearing = rng.uniform() * 2.0 * math.pi
        cand = _offset_point(home, d, bearing)
        if US_BBOX.contains(cand.lon, cand.lat):
            return cand
        d *= 0.92  # shrink toward feasibility if the draw points off-continent
    # fall back to the nearest far anchor direction
    anchor = min(_FAR_ANCHORS, key=lambda a: abs(
        math.hypot(a[0] - home.lon, a[1] - home.lat) * 111.32 - distance_km))
    return GeoPoint(*anchor)


def _jittered(rng: Splitmix64, p: GeoPoint, sigma_m: float) -> GeoPoint:
    if sigma_m == 0:
        return p
    dx = rng.normal() * sigma_m
    dy = rng.normal() * sigma_m
    lat = p.lat + dy / 111_320.0
    lon = p.lon + dx / (111_320.0 * math.cos(math.radians(p.lat)))
    return GeoPoint(lon, lat)


def build_world(spec: SynthSpec, reference_year: int = 2013) -> SynthWorld:
    rng = Splitmix64(spec.seed)
    night_window = NightWindow(tz_name=spec.tz_name)
    tracts = _tract_geometry(spec)
    demo = _tract_demographics(rng, tracts)
    totals = np.zeros(len(RACE_CATEGORIES))
    for t in demo.values():
        totals += t.pop_by_race
    (surname_pool, surname_priors, forename_pool,
     gender_counts, age_counts) = _build_name_material(rng, reference_year)

    posts = []
    truth = []
    for i in range(spec.n_users):
        user_id = f"u{i:05d}"
        tract = rng.choice(tracts)
        geoid, lon0, lat0, dlon, dlat, _ring = tract
        home = GeoPoint(lon0 + (0.2 + 0.6 * rng.uniform()) * dlon,
                        lat0 + (0.2 + 0.6 * rng.uniform()) * dlat)

        pseudonym = rng.uniform() < spec.pseudonym_fraction
        race = gender = age_group = None
        if pseudonym:
            name = _make_pseudonym(rng)
        else:
            race = rng.choice(RACE_CATEGORIES)
            gender = rng.choice(("male", "female"))
            age_group = rng.choice(AGE_GROUPS)
            forename = rng.choice(forename_pool[(gender, age_group)])
            surname = None
            start = rng.randint(0, 11)
            for k in range(12):
                cand = surname_pool[race][(start + k) % 12]
                rec = SurnameRecord(cand.upper(), surname_priors[cand.upper()])
                post = bisg_posterior(rec, demo[geoid], totals)
                if post is not None and post.category == race:
                    surname = cand
                    break
            if surname is None:
                raise GenerationError(
                    f"user {user_id}: no surname in the {race} pool classifies "
                    f"as {race} in tract {geoid}")
            g = infer_gender(forename.upper(), gender_counts)
            a = infer_age_group(forename.upper(), age_counts, reference_year)
            if g is None or g[0] != gender or a is None or a[0] != age_group:
                raise GenerationError(
                    f"user {user_id}: forename {forename} fails planted checks")
            name = f"{forename} {surname}"

        regime = rng.weighted_index(spec.regime_weights)
        r_km = _powerlaw_inv_cdf(rng.uniform(),
                                 spec.powerlaw_edges_km[regime],
                                 spec.powerlaw_edges_km[regime + 1],
                                 spec.powerlaw_slopes[regime])

        n_night = rng.randint(*spec.night_posts)
        n_day = rng.randint(*spec.day_posts)
        user_posts = []
        for _ in range(n_night):
            p = _jittered(rng, home, spec.jitter_m)
            user_posts.append(PostRecord(user_id, name,
                                         _post_timestamp(rng, spec, True, night_window),
                                         p.lon, p.lat))
        centers = [home]
        if n_day > 0:
            decoy = _place_decoy(rng, home, 2.0 * r_km)
            centers.append(decoy)
            for _ in range(n_day):
                p = _jittered(rng, decoy, spec.jitter_m)
                user_posts.append(PostRecord(user_id, name,
                                             _post_timestamp(rng, spec, False, night_window),
                                             p.lon, p.lat))
        for _ in range(rng.randint(0, spec.max_secondary_centers)):
            sec = _offset_point(home, 2.0 + 13.0 * rng.uniform(),
                                rng.uniform() * 2.0 * math.pi)
            centers.append(sec)
            for _ in range(rng.randint(3, 6)):
                p = _jittered(rng, sec, spec.jitter_m)
                user_posts.append(PostRecord(user_id, name,
                                             _post_timestamp(rng, spec, False, night_window),
                                             p.lon, p.lat))
        rng.shuffle(user_posts)
        posts.extend(user_posts)

        xy = np.array([project_albers(GeoPoint(p.lon, p.lat)) for p in user_posts])
        center = xy[0] + (xy - xy[0]).mean(axis=0)
        gyradius = float(math.sqrt(np.mean(np.sum((xy - center) ** 2, axis=1))))
        home_xy = project_albers(home)
        truth.append({
            "user_id": user_id, "name": name,
            "home": [home.lon, home.lat],
            "home_xy": [home_xy.x, home_xy.y],
            "geoid": geoid,
            "race": race, "gender": gender, "age_group": age_group,
            "gyradius_m": gyradius,
            "n_posts": len(user_posts),
            "n_centers": len(centers),
            "target_gyradius_km": r_km,
        })

    surname_rows = sorted((name.upper(), prior) for name, prior in surname_priors.items())
    gender_rows = sorted((n, c[0], c[1]) for n, c in gender_counts.items())
    age_rows = sorted((n, y, c) for n, years in age_counts.items()
                      for y, c in years.items())
    tract_rows = [(geoid, demo[geoid].total_pop, demo[geoid].pop_by_race)
                  for geoid, *_ in tracts]
    features = [{"type": "Feature",
                 "properties": {"GEOID": geoid},
                 "geometry": {"type": "Polygon",
                              "coordinates": [[list(v) for v in ring]]}}
                for geoid, _lon0, _lat0, _dlon, _dlat, ring in tracts]
    return SynthWorld(spec, posts, truth, features, tract_rows,
                      surname_rows, gender_rows, age_rows)


# ---------------------------------------------------------------------------
# File emission and scoring
# ---------------------------------------------------------------------------

def generate(spec: SynthSpec, outdir) -> dict:
    """Write posts, ground truth and all reference tables under outdir."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    tables = out / "tables"
    tables.mkdir(exist_ok=True)
    world = build_world(spec)
    meta = spec.as_dict()

    with open(out / "posts.jsonl", "w", encoding="utf-8") as fh:
        for rec in world.posts:
            fh.write(record_to_json(rec) + "\n")

    with open(out / "truth.jsonl", "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"_meta": meta}, separators=(",", ":")) + "\n")
        for rec in world.truth:
            fh.write(json.dumps(rec, ensure_ascii=False, separators=(",", ":")) + "\n")

    header = "".join(f"# {k} = {v}\n" for k, v in sorted(meta.items()))
    with open(tables / "surnames.csv", "w", encoding="utf-8") as fh:
        fh.write(header)
        fh.write("NAME,PCTWHITE,PCTBLACK,PCTHISPANIC,PCTAPI,PCTOTHER\n")
        for name, prior in world.surname_rows:
            fh.write(name + "," + ",".join(repr(float(100.0 * p)) for p in prior) + "\n")
    with open(tables / "tract_demo.csv", "w", encoding="utf-8") as fh:
        fh.write(header)
        fh.write("GEOID,TOTAL,WHITE,BLACK,HISPANIC,ASIAN,OTHER\n")
        for geoid, total, counts in world.tract_rows:
            fh.write(f"{geoid},{int(total)},"
                     + ",".join(str(int(c)) for c in counts) + "\n")
    with open(tables / "gender.csv", "w", encoding="utf-8") as fh:
        fh.write(header)
        fh.write("NAME,MALE,FEMALE\n")
        for name, male, female in world.gender_rows:
            fh.write(f"{name},{male},{female}\n")
    with open(tables / "ages.csv", "w", encoding="utf-8") as fh:
        fh.write(header)
        fh.write("NAME,YEAR,COUNT\n")
        for name, year, count in world.age_rows:
            fh.write(f"{name},{year},{int(count)}\n")
    with open(tables / "tracts.geojson", "w", encoding="utf-8") as fh:
        json.dump({"type": "FeatureCollection", "metadata": meta,
                   "features": world.tract_features}, fh,
                  ensure_ascii=False, separators=(",", ":"))
        fh.write("\n")

    manifest = {"spec": meta, "n_posts": len(world.posts),
                "n_users": len(world.truth)}
    with open(out / "synth_manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def read_truth_jsonl(path) -> tuple:
    records = []
    meta = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            if "_meta" in obj:
                meta = obj["_meta"]
            else:
                records.append(obj)
    return records, meta


def score(truth, homes, metrics, profiles, eps_m: float = 100.0) -> dict:
    """Accuracy report of pipeline outputs against planted ground truth.

    homes: user_id -> HomeDetection; metrics: MobilityMetrics list;
    profiles: DemographicProfile list. User universes must match.
    """
    truth_by_user = {t["user_id"]: t for t in truth}
    metric_users = {m.user_id for m in metrics}
    if metric_users != set(truth_by_user):
        missing = sorted(set(truth_by_user) ^ metric_users)[:5]
        raise ValueError(f"user universes differ (e.g. {missing})")

    home_hits = 0
    for uid, t in truth_by_user.items():
        det = homes.get(uid)
        if det is None or det.home is None:
            continue
        hx, hy = t["home_xy"]
        d = math.hypot(det.home.center.x - hx, det.home.center.y - hy)
        if d <= eps_m:
            home_hits += 1

    dims = {"race": "race", "gender": "gender", "age_group": "age_group"}
    prof_by_user = {p.user_id: p for p in profiles}
    label_stats = {}
    for dim, attr in dims.items():
        labeled = [t for t in truth_by_user.values() if t[dim] is not None]
        hits = sum(1 for t in labeled
                   if (p := prof_by_user.get(t["user_id"])) is not None
                   and getattr(p, attr) == t[dim])
        label_stats[dim] = (hits, len(labeled))

    rel_errors = []
    truth_gyr = {t["user_id"]: t["gyradius_m"] for t in truth_by_user.values()}
    for m in metrics:
        tg = truth_gyr[m.user_id]
        if tg > 0:
            rel_errors.append(abs(m.gyradius_m - tg) / tg)
    err = np.array(rel_errors) if rel_errors else np.array([0.0])

    def rate(hits, total):
        return hits / total if total else 1.0

    return {
        "n_users": len(truth_by_user),
        "rates": {
            "home_recovery": rate(home_hits, len(truth_by_user)),
            "race_accuracy": rate(*label_stats["race"]),
            "gender_accuracy": rate(*label_stats["gender"]),
            "age_accuracy": rate(*label_stats["age_group"]),
        },
        "counts": {
            "homes_recovered": home_hits,
            "race_labeled": label_stats["race"][1],
            "gender_labeled": label_stats["gender"][1],
            "age_labeled": label_stats["age_group"][1],
        },
        "gyradius_relative_error": {
            "mean": float(err.mean()),
            "median": float(np.median(err)),
            "p95": float(np.percentile(err, 95)),
            "max": float(err.max()),
        },
    }
