"""Name parsing, BISG posteriors, gender and age-group inference."""

import numpy as np
import pytest

from mobiscope.demographics import (DemographicProfile,
                                    NameTables, RacePosterior, SurnameRecord, TractDemo,
                                    bisg_posterior, breakdown_report, classify_race,
                                    infer_age_group, infer_gender, load_age_table,
                                    load_gender_table, load_surname_priors,
                                    load_tract_demographics,
                                    national_totals, parse_name, profile_user,
                                    profile_users, read_profiles_csv,
                                    write_profiles_csv)


class TestParseName:
    def test_two_token_rule(self):
        assert parse_name("John Smith") == ("JOHN", "SMITH")

    def test_first_and_last_token(self):
        assert parse_name("Mary Jane Watson") == ("MARY", "WATSON")

    def test_pseudonym_rejected(self):
        assert parse_name("xX_gamer_Xx") is None

    def test_single_token_rejected(self):
        assert parse_name("Cher") is None
        assert parse_name("") is None
        assert parse_name("   ") is None

    def test_diacritics_folded(self):
        assert parse_name("José Muñoz") == ("JOSE", "MUNOZ")

    def test_single_punctuation_mark_stripped(self):
        assert parse_name("(John Smith)") == ("JOHN", "SMITH")
        assert parse_name("John. Smith,") == ("JOHN", "SMITH")

    def test_low_alphabetic_fraction_rejected(self):
        assert parse_name("J0hn123 Smith") is None
        assert parse_name("John Sm1th99x") is None

    def test_short_tokens_rejected(self):
        assert parse_name("J Smith") is None
        assert parse_name("John S") is None


def uniform_totals(value=10.0):
    return np.full(5, value)


class TestBisg:
    def test_degenerate_prior(self):
        prior = SurnameRecord("X", np.array([1.0, 0, 0, 0, 0]))
        tract = TractDemo("t", np.array([3.0, 2, 1, 1, 1]), 8.0)
        post = bisg_posterior(prior, tract, uniform_totals())
        assert post.probs.tolist() == [1.0, 0, 0, 0, 0]

    def test_hand_worked_example_exact(self):
        prior = SurnameRecord("X", np.array([0.5, 0.5, 0, 0, 0]))
        tract = TractDemo("t", np.array([1.0, 4.0, 0, 0, 0]), 5.0)
        post = bisg_posterior(prior, tract, uniform_totals(10.0))  # P_c = (0.1, 0.4)
        assert post.probs[0] == 0.2
        assert post.probs[1] == 0.8

    def test_all_zero_numerator_unidentified(self):
        prior = SurnameRecord("X", np.array([1.0, 0, 0, 0, 0]))
        tract = TractDemo("t", np.array([0.0, 5, 0, 0, 0]), 5.0)
        assert bisg_posterior(prior, tract, uniform_totals()) is None

    def test_random_cases_match_product_oracle_and_sum_to_one(self):
        rng = np.random.default_rng(6)
        for _ in range(1000):
            prior = rng.dirichlet(np.ones(5))
            counts = np.floor(rng.uniform(0, 50, 5))
            totals = counts + np.floor(rng.uniform(1, 100, 5))
            q = prior * np.where(totals > 0, counts / totals, 0)
            post = bisg_posterior(SurnameRecord("X", prior),
                                  TractDemo("t", counts, counts.sum()), totals)
            if q.sum() == 0:
                assert post is None
                continue
            np.testing.assert_allclose(post.probs, q / q.sum(), rtol=0, atol=1e-12)
            assert abs(post.probs.sum() - 1.0) <= 1e-12

    def test_scaling_all_tract_counts_leaves_classification_unchanged(self):
        rng = np.random.default_rng(26)
        for _ in range(200):
            prior = rng.dirichlet(np.ones(5))
            counts = np.floor(rng.uniform(0, 50, 5))
            totals = counts + np.floor(rng.uniform(1, 100, 5))
            base = bisg_posterior(SurnameRecord("X", prior),
                                  TractDemo("t", counts, counts.sum()), totals)
            for c in (3.0, 0.5):
                scaled = bisg_posterior(SurnameRecord("X", prior),
                                        TractDemo("t", counts * c, counts.sum() * c),
                                        totals * c)
                if base is None:
                    assert scaled is None
                else:
                    np.testing.assert_allclose(scaled.probs, base.probs, atol=1e-12)
                    assert classify_race(scaled) == classify_race(base)


class TestClassifyRace:
    def test_argmax(self):
        assert classify_race(RacePosterior(np.array([0.2, 0.8, 0, 0, 0]))) == "Black"

    def test_tie_goes_to_earlier_category(self):
        assert classify_race(RacePosterior(np.array([0.5, 0.5, 0, 0, 0]))) == "White"
        assert classify_race(RacePosterior(np.full(5, 0.2))) == "White"


class TestInferGender:
    def test_unanimous_male(self):
        assert infer_gender("JOHN", {"JOHN": (100, 0)}) == ("male", 1.0)

    def test_majority_female(self):
        gender, p = infer_gender("ROBIN", {"ROBIN": (30, 70)})
        assert gender == "female"
        assert p == pytest.approx(0.7)

    def test_absent_name(self):
        assert infer_gender("ZZZ", {"JOHN": (100, 0)}) is None

    def test_exact_tie(self):
        assert infer_gender("PAT", {"PAT": (50, 50)}) is None

    def test_symmetry(self):
        rng = np.random.default_rng(27)
        for _ in range(200):
            m, f = int(rng.integers(0, 1000)), int(rng.integers(0, 1000))
            if m + f == 0 or m == f:
                continue
            a = infer_gender("X", {"X": (m, f)})
            b = infer_gender("X", {"X": (f, m)})
            assert a[0] != b[0]
            assert a[1] == b[1]


class TestInferAgeGroup:
    def test_all_mass_in_one_year(self):
        got = infer_age_group("LUCY", {"LUCY": {2005: 10}}, reference_year=2013)
        assert got == ("<=20", 1.0)

    def test_mia_style_distribution(self):
        # 83% of the name's mass after 2000 puts it in the youngest group
        table = {"MIA": {2003: 83, 1970: 17}}
        group, p = infer_age_group("MIA", table, reference_year=2013, threshold=0.6)
        assert group == "<=20"
        assert p == pytest.approx(0.83)
        assert infer_age_group("MIA", table, threshold=0.83) is None

    def test_below_threshold_returns_none(self):
        table = {"X": {2000: 50, 1980: 45, 1940: 5}}
        assert infer_age_group("X", table, reference_year=2013, threshold=0.6) is None

    def test_group_boundaries(self):
        # reference 2013: born 1993 -> age 20; 1992 -> 21; 1952 -> 61
        assert infer_age_group("A", {"A": {1993: 1}})[0] == "<=20"
        assert infer_age_group("A", {"A": {1992: 1}})[0] == "21-60"
        assert infer_age_group("A", {"A": {1953: 1}})[0] == "21-60"
        assert infer_age_group("A", {"A": {1952: 1}})[0] == ">=61"

    def test_threshold_monotonicity(self):
        rng = np.random.default_rng(28)
        for _ in range(100):
            years = {int(y): float(c) for y, c in
                     zip(rng.integers(1900, 2013, 6), rng.uniform(1, 100, 6))}
            table = {"X": years}
            prev = infer_age_group("X", table, threshold=0.2)
            for t in (0.4, 0.6, 0.8, 0.95):
                cur = infer_age_group("X", table, threshold=t)
                if prev is None:
                    assert cur is None
                prev = cur

    def test_threshold_validation(self):
        with pytest.raises(ValueError):
            infer_age_group("A", {"A": {2000: 1}}, threshold=0.0)
        with pytest.raises(ValueError):
            infer_age_group("A", {"A": {2000: 1}}, threshold=1.5)

    def test_absent_name(self):
        assert infer_age_group("ZZZ", {"A": {2000: 1}}) is None


class TestTableLoaders:
    def test_surname_priors_with_suppressed_cells(self, tmp_path):
        path = tmp_path / "surnames.csv"
        path.write_text("NAME,PCTWHITE,PCTBLACK,PCTHISPANIC,PCTAPI,PCTOTHER\n"
                        "SMITH,70.9,23.11,2.4,0.5,3.09\n"
                        "SUPPRESSED,90,(S),5,(S),5\n"
                        "ALLGONE,(S),(S),(S),(S),(S)\n")
        table = load_surname_priors(path)
        assert set(table) == {"SMITH", "SUPPRESSED"}
        np.testing.assert_allclose(table["SMITH"].prior.sum(), 1.0, atol=1e-6)
        np.testing.assert_allclose(table["SUPPRESSED"].prior,
                                   [0.9, 0.0, 0.05, 0.0, 0.05], atol=1e-12)

    def test_tract_demo_sum_mismatch_rejected(self, tmp_path):
        path = tmp_path / "tracts.csv"
        path.write_text("GEOID,TOTAL,WHITE,BLACK,HISPANIC,ASIAN,OTHER\n"
                        "17031,100,50,20,20,5,4\n")
        with pytest.raises(ValueError):
            load_tract_demographics(path)

    def test_national_totals_are_column_sums(self, tmp_path):
        path = tmp_path / "tracts.csv"
        path.write_text("GEOID,TOTAL,WHITE,BLACK,HISPANIC,ASIAN,OTHER\n"
                        "a,100,50,20,20,5,5\n"
                        "b,60,10,30,10,5,5\n")
        tracts = load_tract_demographics(path)
        np.testing.assert_array_equal(national_totals(tracts), [60, 50, 30, 10, 10])

    def test_gender_and_age_loaders(self, tmp_path):
        gpath = tmp_path / "gender.csv"
        gpath.write_text("NAME,MALE,FEMALE\nJOHN,900,10\n")
        assert load_gender_table(gpath) == {"JOHN": (900, 10)}
        apath = tmp_path / "ages.csv"
        apath.write_text("NAME,YEAR,COUNT\nJOHN,1960,50\nJOHN,1961,60\nJOHN,1960,5\n")
        assert load_age_table(apath) == {"JOHN": {1960: 55.0, 1961: 60.0}}

    def test_bad_gender_counts_rejected(self, tmp_path):
        gpath = tmp_path / "gender.csv"
        gpath.write_text("NAME,MALE,FEMALE\nX,0,0\n")
        with pytest.raises(ValueError):
            load_gender_table(gpath)


def tiny_tables():
    surnames = {"SMITH": SurnameRecord("SMITH", np.array([0.9, 0.025, 0.025, 0.025, 0.025]))}
    tracts = {"t1": TractDemo("t1", np.array([80.0, 5, 5, 5, 5]), 100.0)}
    return NameTables(surnames=surnames, tracts=tracts,
                      totals=national_totals(tracts),
                      gender={"JOHN": (990, 10)},
                      ages={"JOHN": {1960: 90, 2001: 10}})


class TestProfileUsers:
    def test_no_home_leaves_race_unidentified_but_attempts_the_rest(self):
        prof = profile_user("u1", "John Smith", None, tiny_tables())
        assert prof.race is None
        assert prof.gender == "male"
        assert prof.age_group == "21-60"

    def test_full_profile_with_home(self):
        prof = profile_user("u1", "John Smith", "t1", tiny_tables())
        assert prof.race == "White"
        assert prof.race_prob is not None and prof.race_prob >= 0.9
        assert prof.race_posterior is not None

    def test_pseudonym_gets_nothing(self):
        prof = profile_user("u1", "xX_gamer_Xx", "t1", tiny_tables())
        assert (prof.race, prof.gender, prof.age_group) == (None, None, None)

    def test_breakdown_conservation(self):
        users = [("u1", "John Smith", "t1"), ("u2", "xX_gamer_Xx", "t1"),
                 ("u3", "John Doe", None)]
        profiles, breakdown = profile_users(users, tiny_tables())
        assert breakdown["total_users"] == 3
        for dim in ("race", "gender", "age"):
            section = breakdown[dim]
            assert section["identified"] + section["unidentified"] == 3
            assert sum(section["counts"].values()) == section["identified"]
        assert breakdown["race"]["counts"]["White"] == 1
        assert breakdown["gender"]["counts"]["male"] == 2

    def test_empty_population(self):
        report = breakdown_report([])
        assert report["total_users"] == 0
        assert report["race"]["identified"] == 0


class TestProfilesCsv:
    def test_roundtrip_with_empty_fields(self, tmp_path):
        profiles = [
            DemographicProfile("u1", "White", 0.95, "male", 1.0, "21-60", 0.9),
            DemographicProfile("u2"),
            DemographicProfile("u3", None, None, "female", 0.7, None, None),
        ]
        path = tmp_path / "profiles.csv"
        write_profiles_csv(profiles, path, {"age_threshold": 0.6})
        assert read_profiles_csv(path) == profiles
