import itertools
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from rppg_bp.errors import NormDegenerate, OutOfRangeAge, OutOfRangeBmi
from rppg_bp.features import (FLAGS, HISTORY, MEDICATIONS, N_FEATURES, RACES, ProfileEncoder, SubjectProfile,
                              encode_profile, fit_norm, read_profiles_jsonl, write_profiles_jsonl)

NORM = {"age_mean": 69.0, "age_sd": 12.0, "bmi_mean": 28.4, "bmi_sd": 5.5}


def profile(**kw):
    base = dict(age=69.0, sex="female", bmi=28.4, race="white", flags={}, repeat_visit=False)
    base.update(kw)
    return SubjectProfile(**base)


def test_layout_counts():
    assert N_FEATURES == 37
    assert 3 + len(RACES) + len(HISTORY) + len(MEDICATIONS) + 4 == 37


def test_cohort_means_encode_to_zero():
    v = encode_profile(profile(), NORM)
    assert v[0] == 0.0 and v[2] == 0.0


def test_all_false_female():
    v = encode_profile(profile(), NORM)
    assert v[1] == 0 and np.all(v[8:] == 0)


def test_statin_slot():
    a = encode_profile(profile(), NORM)
    b = encode_profile(profile(flags={"statin": True}), NORM)
    assert np.flatnonzero(a != b).tolist() == [27]


def test_male_and_z_scores():
    v = encode_profile(profile(sex="male", age=81.0, bmi=33.9), NORM)
    assert v[1] == 1.0 and v[0] == pytest.approx(1.0) and v[2] == pytest.approx(1.0)


@pytest.mark.parametrize("race", RACES)
def test_race_one_hot(race):
    v = encode_profile(profile(race=race), NORM)
    assert v[3:8].sum() == 1 and v[3 + RACES.index(race)] == 1


def test_derived_flags():
    v = encode_profile(profile(flags={"warfarin": True, "sglt2i": True, "ccb": True, "thiazide": True},
                               repeat_visit=True), NORM)
    np.testing.assert_array_equal(v[33:], [1, 1, 1, 1])
    v = encode_profile(profile(flags={"ccb": True}), NORM)
    assert v[35] == 0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.booleans(), min_size=len(FLAGS), max_size=len(FLAGS)),
       st.lists(st.booleans(), min_size=len(FLAGS), max_size=len(FLAGS)))
def test_injective_over_flags(a, b):
    pa = profile(flags=dict(zip(FLAGS, a)))
    pb = profile(flags=dict(zip(FLAGS, b)))
    same = np.array_equal(encode_profile(pa, NORM), encode_profile(pb, NORM))
    assert same == (a == b)


def test_errors():
    with pytest.raises(OutOfRangeAge):
        encode_profile(profile(age=17.0), NORM)
    with pytest.raises(OutOfRangeAge):
        encode_profile(profile(age=121.0), NORM)
    with pytest.raises(OutOfRangeBmi):
        encode_profile(profile(bmi=10.0), NORM)
    with pytest.raises(NormDegenerate):
        encode_profile(profile(), {**NORM, "age_sd": 0.0})
    with pytest.raises(ValueError):
        profile(sex="x")
    with pytest.raises(ValueError):
        profile(flags={"nonsense": True})


def test_fit_norm_sample_sd():
    ps = [profile(age=a, bmi=b) for a, b in [(60, 25), (70, 30), (80, 35)]]
    n = fit_norm(ps)
    assert n == {"age_mean": 70.0, "age_sd": 10.0, "bmi_mean": 30.0, "bmi_sd": 5.0}
    with pytest.raises(NormDegenerate):
        fit_norm([profile(), profile()])


def test_encoder_sklearn_api():
    ps = [profile(age=a, bmi=b) for a, b in itertools.product((50, 70, 90), (22, 30))]
    enc = ProfileEncoder()
    X = enc.fit_transform(ps)
    assert X.shape == (6, 37)
    assert abs(X[:, 0].mean()) < 1e-12
    c = clone(enc)
    assert c.get_params() == {"norm": None} and not hasattr(c, "norm_")
    fixed = ProfileEncoder(norm=NORM).fit(ps)
    assert fixed.norm_ == NORM and fixed.layout_version_ == 1


def test_jsonl_roundtrip(tmp_path, caplog):
    p = profile(flags={"statin": True}, race="asian")
    write_profiles_jsonl(tmp_path / "p.jsonl", [("s1", "subj", p)])
    got = read_profiles_jsonl(tmp_path / "p.jsonl")
    assert got["s1"][0] == "subj" and got["s1"][1] == p
    (tmp_path / "q.jsonl").write_text('{"session_id": "s2", "age": 50, "sex": "male", "bmi": 24, "shoe": 9}\n')
    with caplog.at_level(logging.WARNING):
        got = read_profiles_jsonl(tmp_path / "q.jsonl")
    assert not any(got["s2"][1].flags.values())
    assert "missing" in caplog.text and "shoe" in caplog.text
