"""Name-based demographic inference.

Race/ethnicity comes from Bayesian surname geocoding: a surname-derived
prior over five categories is combined with the geography likelihood
P(tract | race) of the user's home tract, and the posterior argmax wins.
Gender uses a forename male/female occurrence table; age group uses a
forename year-of-birth table with a confidence threshold.
"""

from __future__ import annotations

import csv
import unicodedata
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

RACE_CATEGORIES = ("White", "Black", "Hispanic", "Asian", "Other")
AGE_GROUPS = ("<=20", "21-60", ">=61")


# ---------------------------------------------------------------------------
# Profile-name parsing
# ---------------------------------------------------------------------------

def _clean_token(token: str) -> Optional[str]:
    # strip at most one leading and one trailing punctuation mark
    if token and not token[0].isalnum():
        token = token[1:]
    if token and not token[-1].isalnum():
        token = token[:-1]
    if not token:
        return None
    letters = sum(1 for ch in token if ch.isalpha())
    if letters < 2 or letters / len(token) < 0.8:
        return None
    folded = unicodedata.normalize("NFKD", token).encode("ascii", "ignore").decode()
    folded = "".join(ch for ch in folded if ch.isalpha()).upper()
    if len(folded) < 2:
        return None
    return folded


def parse_name(profile_name: str) -> Optional[tuple]:
    """(FORENAME, SURNAME) from a profile name, or None for pseudonyms.

    First whitespace token is the forename, last is the surname; tokens
    must be mostly alphabetic. Output is uppercased ASCII with diacritics
    folded.
    """
    tokens = profile_name.split()
    if len(tokens) < 2:
        return None
    forename = _clean_token(tokens[0])
    surname = _clean_token(tokens[-1])
    if forename is None or surname is None:
        return None
    return forename, surname


# ---------------------------------------------------------------------------
# Reference tables
# ---------------------------------------------------------------------------

@dataclass
class SurnameRecord:
    surname: str
    prior: np.ndarray  # probability over RACE_CATEGORIES, sums to 1


@dataclass
class TractDemo:
    geoid: str
    pop_by_race: np.ndarray
    total_pop: float


@dataclass
class NameTables:
    surnames: dict                 # SURNAME -> SurnameRecord
    tracts: dict                   # geoid -> TractDemo
    totals: np.ndarray             # national count per race category
    gender: dict                   # FORENAME -> (male_count, female_count)
    ages: dict                     # FORENAME -> {birth_year: count}


def _clean_lines(fh):
    return (line for line in fh if not line.startswith("#"))


def load_surname_priors(path) -> dict:
    """Census-style surname list: NAME,PCTWHITE,PCTBLACK,PCTHISPANIC,PCTAPI,PCTOTHER.

    Percentage cells suppressed as "(S)" count as 0 and the row is
    renormalized; rows with no usable mass are skipped.
    """
    out = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(_clean_lines(fh)):
            name = row["NAME"].strip().upper()
            vals = []
            for col in ("PCTWHITE", "PCTBLACK", "PCTHISPANIC", "PCTAPI", "PCTOTHER"):
                cell = row[col].strip()
                vals.append(0.0 if cell in ("(S)", "") else float(cell))
            prior = np.array(vals, dtype=float)
            total = prior.sum()
            if total <= 0:
                continue
            out[name] = SurnameRecord(name, prior / total)
    return out


def load_tract_demographics(path) -> dict:
    """GEOID,TOTAL,WHITE,BLACK,HISPANIC,ASIAN,OTHER counts per tract."""
    out = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(_clean_lines(fh)):
            counts = np.array([float(row[c]) for c in
                               ("WHITE", "BLACK", "HISPANIC", "ASIAN", "OTHER")])
            total = float(row["TOTAL"])
            if (counts < 0).any() or abs(counts.sum() - total) > 1e-6:
                raise ValueError(f"{path}: tract {row['GEOID']} counts do not sum to TOTAL")
            out[row["GEOID"]] = TractDemo(row["GEOID"], counts, total)
    return out


def national_totals(tracts: dict) -> np.ndarray:
    """Column sums of the loaded tract set, the BISG P(tract|race) denominator."""
    totals = np.zeros(len(RACE_CATEGORIES))
    for t in tracts.values():
        totals += t.pop_by_race
    return totals


def load_gender_table(path) -> dict:
    out = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(_clean_lines(fh)):
            male, female = int(row["MALE"]), int(row["FEMALE"])
            if male < 0 or female < 0 or male + female == 0:
                raise ValueError(f"{path}: bad counts for {row['NAME']}")
            out[row["NAME"].strip().upper()] = (male, female)
    return out


def load_age_table(path) -> dict:
    """Long-format NAME,YEAR,COUNT rows; per-sex counts already merged."""
    out = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(_clean_lines(fh)):
            name = row["NAME"].strip().upper()
            out.setdefault(name, {})[int(row["YEAR"])] = \
                out.get(name, {}).get(int(row["YEAR"]), 0.0) + float(row["COUNT"])
    return out


def load_tables(surnames_path, tracts_path, gender_path, ages_path) -> NameTables:
    tracts = load_tract_demographics(tracts_path)
    return NameTables(
        surnames=load_surname_priors(surnames_path),
        tracts=tracts,
        totals=national_totals(tracts),
        gender=load_gender_table(gender_path),
        ages=load_age_table(ages_path),
    )


# ---------------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------------

@dataclass
class RacePosterior:
    probs: np.ndarray

    @property
    def category(self) -> str:
        return RACE_CATEGORIES[int(np.argmax(self.probs))]


def bisg_posterior(prior: SurnameRecord, tract: TractDemo,
                   totals: np.ndarray) -> Optional[RacePosterior]:
    """Posterior q(r) proportional to prior(r) * tract_count(r) / national(r).

    None (unidentified) when every numerator term vanishes: the surname and
    tract combination carries no information.
    """
    geo = np.divide(tract.pop_by_race, totals,
                    out=np.zeros_like(totals), where=totals > 0)
    q = prior.prior * geo
    total = q.sum()
    if total == 0:
        return None
    return RacePosterior(q / total)


def classify_race(posterior: RacePosterior) -> str:
    """Argmax category; exact ties go to the earlier category."""
    return posterior.category


def infer_gender(forename: str, table: dict) -> Optional[tuple]:
    """(gender, probability) by occurrence fraction; None on miss or exact tie."""
    counts = table.get(forename)
    if counts is None:
        return None
    male, female = counts
    if male > female:
        return "male", male / (male + female)
    if female > male:
        return "female", female / (male + female)
    return None


def _year_to_group(year: int, reference_year: int) -> int:
    age = reference_year - year
    if age <= 20:
        return 0
    if age <= 60:
        return 1
    return 2


def infer_age_group(forename: str, table: dict, reference_year: int = 2013,
                    threshold: float = 0.6) -> Optional[tuple]:
    """(age group, probability) when the dominant group clears the threshold.

    Birth-year counts are pooled into the three groups; the argmax group is
    returned only if its normalized mass strictly exceeds the threshold.
    """
    if not 0 < threshold <= 1:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    years = table.get(forename)
    if not years:
        return None
    mass = np.zeros(len(AGE_GROUPS))
    for year, count in years.items():
        mass[_year_to_group(year, reference_year)] += count
    total = mass.sum()
    if total <= 0:
        return None
    probs = mass / total
    best = int(np.argmax(probs))
    if probs[best] > threshold:
        return AGE_GROUPS[best], float(probs[best])
    return None


# ---------------------------------------------------------------------------
# Per-user profiling and the breakdown report
# ---------------------------------------------------------------------------

@dataclass
class DemographicProfile:
    user_id: str
    race: Optional[str] = None
    race_prob: Optional[float] = None
    gender: Optional[str] = None
    gender_prob: Optional[float] = None
    age_group: Optional[str] = None
    age_prob: Optional[float] = None
    race_posterior: Optional[np.ndarray] = field(default=None, compare=False)


def profile_user(user_id: str, profile_name: str, home_geoid: Optional[str],
                 tables: NameTables, reference_year: int = 2013,
                 age_threshold: float = 0.6) -> DemographicProfile:
    prof = DemographicProfile(user_id)
    parsed = parse_name(profile_name)
    if parsed is None:
        return prof
    forename, surname = parsed

    # race needs the home-tract join; gender/age are attempted regardless
    record = tables.surnames.get(surname)
    tract = tables.tracts.get(home_geoid) if home_geoid else None
    if record is not None and tract is not None:
        posterior = bisg_posterior(record, tract, tables.totals)
        if posterior is not None:
            prof.race = classify_race(posterior)
            prof.race_prob = float(posterior.probs.max())
            prof.race_posterior = posterior.probs

    gender = infer_gender(forename, tables.gender)
    if gender is not None:
        prof.gender, prof.gender_prob = gender

    age = infer_age_group(forename, tables.ages, reference_year, age_threshold)
    if age is not None:
        prof.age_group, prof.age_prob = age
    return prof


def profile_users(users, tables: NameTables, reference_year: int = 2013,
                  age_threshold: float = 0.6) -> tuple:
    """Profiles plus a Table-1-style breakdown.

    ``users`` is an iterable of (user_id, profile_name, home_geoid) with
    home_geoid None when no home tract was resolved.
    """
    profiles = [profile_user(uid, name, geoid, tables, reference_year, age_threshold)
                for uid, name, geoid in users]
    return profiles, breakdown_report(profiles)


def breakdown_report(profiles) -> dict:
    n = len(profiles)
    race_counts = {c: 0 for c in RACE_CATEGORIES}
    gender_counts = {"male": 0, "female": 0}
    age_counts = {g: 0 for g in AGE_GROUPS}
    for p in profiles:
        if p.race is not None:
            race_counts[p.race] += 1
        if p.gender is not None:
            gender_counts[p.gender] += 1
        if p.age_group is not None:
            age_counts[p.age_group] += 1
    def section(counts):
        identified = sum(counts.values())
        return {"identified": identified, "unidentified": n - identified,
                "counts": counts}
    return {
        "total_users": n,
        "race": section(race_counts),
        "gender": section(gender_counts),
        "age": section(age_counts),
    }


PROFILE_FIELDS = ["user_id", "race", "race_prob", "gender", "gender_prob",
                  "age_group", "age_prob"]


def write_profiles_csv(profiles, path, meta: Optional[dict] = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"# {key} = {value}\n")
        writer = csv.writer(fh)
        writer.writerow(PROFILE_FIELDS)
        for p in profiles:
            writer.writerow([
                p.user_id,
                p.race or "", "" if p.race_prob is None else repr(p.race_prob),
                p.gender or "", "" if p.gender_prob is None else repr(p.gender_prob),
                p.age_group or "", "" if p.age_prob is None else repr(p.age_prob),
            ])


def read_profiles_csv(path) -> list:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        rows = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(rows)
        if header != PROFILE_FIELDS:
            raise ValueError(f"{path}: unexpected profiles header {header}")
        for row in rows:
            out.append(DemographicProfile(
                row[0],
                row[1] or None, float(row[2]) if row[2] else None,
                row[3] or None, float(row[4]) if row[4] else None,
                row[5] or None, float(row[6]) if row[6] else None,
            ))
    return out
