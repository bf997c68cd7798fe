import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from rppg_bp.errors import DegenerateVariance, EmptySample, LengthMismatch, UnknownRhythmLabel
from rppg_bp.evaluation import (bland_altman, classification_metrics, mann_whitney_u, mcnemar,
                                mcnemar_from_predictions, pearson_r, regression_metrics, stratified_report)


def brute_u_pvalue(a, b):
    """Enumerate every assignment of pooled midranks to the first sample."""
    pooled = np.concatenate([a, b])
    ranks = stats.rankdata(pooled)
    n_a = len(a)
    mu = n_a * len(b) / 2
    u_obs = ranks[:n_a].sum() - n_a * (n_a + 1) / 2
    us = [ranks[list(c)].sum() - n_a * (n_a + 1) / 2 for c in itertools.combinations(range(len(pooled)), n_a)]
    us = np.array(us)
    return np.mean(np.abs(us - mu) >= abs(u_obs - mu) - 1e-9)


class TestRegression:
    def test_examples(self):
        assert regression_metrics([130, 120], [132, 118])["mae"] == 2.0
        m = regression_metrics([1, 2, 3], [1, 2, 3])
        assert m == {"mae": 0.0, "sd_residual": 0.0, "pearson_r": 1.0}
        assert pearson_r([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)

    def test_brute_force(self, rng):
        p, t = rng.normal(120, 10, 50), rng.normal(120, 10, 50)
        m = regression_metrics(p, t)
        assert m["mae"] == pytest.approx(sum(abs(a - b) for a, b in zip(p, t)) / 50, abs=1e-9)
        r = p - t
        assert m["sd_residual"] == pytest.approx(math.sqrt(sum((x - r.mean()) ** 2 for x in r) / 49), abs=1e-9)
        assert m["pearson_r"] == pytest.approx(stats.pearsonr(p, t)[0], abs=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.1, 50), st.floats(-100, 100), st.integers(0, 10_000))
    def test_pearson_affine(self, a, b, seed):
        r = np.random.default_rng(seed)
        x, y = r.normal(size=20), r.normal(size=20)
        assert pearson_r(a * x + b, y) == pytest.approx(pearson_r(x, y), abs=1e-9)
        assert pearson_r(x, a * y + b) == pytest.approx(pearson_r(x, y), abs=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(-1000, 1000).map(float), min_size=2, max_size=20, unique=True), st.integers(0, 19),
           st.sampled_from([0.0, 1e-6, -0.5, 3.0]))
    def test_mae_zero_iff_equal(self, truth, i, delta):
        truth = np.array(truth)
        pred = truth.copy()
        pred[i % len(pred)] += delta
        assert (regression_metrics(pred, truth)["mae"] == 0) == np.array_equal(pred, truth)

    def test_errors(self):
        with pytest.raises(LengthMismatch):
            regression_metrics([1, 2], [1, 2, 3])
        with pytest.raises(LengthMismatch):
            regression_metrics([1], [1])
        with pytest.raises(DegenerateVariance):
            pearson_r([1, 2, 3], [5, 5, 5])
        assert math.isnan(pearson_r([4, 4, 4], [1, 2, 3]))


class TestBlandAltman:
    def test_examples(self):
        ba = bland_altman([1, 2, 3], [1, 2, 3])
        assert (ba["bias"], ba["loa_low"], ba["loa_high"]) == (0, 0, 0)
        ba = bland_altman([6, 7, 8], [1, 2, 3])
        assert (ba["bias"], ba["loa_low"], ba["loa_high"]) == (5, 5, 5)
        ba = bland_altman([8, 10, 12], [10, 10, 10])
        assert ba["bias"] == 0 and ba["loa_high"] == pytest.approx(1.96 * 2.0)
        assert ba["loa_low"] == pytest.approx(-1.96 * 2.0)
        assert ba["pairs"][0] == (9.0, -2.0)

    def test_bias_is_mean_difference(self, rng):
        p, t = rng.normal(size=30), rng.normal(size=30)
        assert bland_altman(p, t)["bias"] == pytest.approx(p.mean() - t.mean(), abs=1e-12)


class TestClassification:
    def test_all_correct(self):
        m = classification_metrics([1, 0, 1, 0], [1, 0, 1, 0])
        assert all(m[k] == 1 for k in ("accuracy", "ppv", "npv", "sensitivity", "specificity"))

    def test_all_positive(self):
        true = np.r_[np.ones(483), np.zeros(517)]
        m = classification_metrics(np.ones(1000), true)
        assert m["ppv"] == pytest.approx(0.483)
        assert m["sensitivity"] == 1 and m["specificity"] == 0 and m["npv"] is None

    def test_confusion(self):
        pred = [1] * 5 + [1] * 2 + [0] * 3 + [0] * 10
        true = [1] * 5 + [0] * 2 + [1] * 3 + [0] * 10
        m = classification_metrics(pred, true)
        assert (m["tp"], m["fp"], m["fn"], m["tn"]) == (5, 2, 3, 10)
        assert m["accuracy"] == 0.75
        assert m["ppv"] == pytest.approx(5 / 7) and m["npv"] == pytest.approx(10 / 13)
        assert m["sensitivity"] == pytest.approx(5 / 8) and m["specificity"] == pytest.approx(10 / 12)

    def test_length(self):
        with pytest.raises(LengthMismatch):
            classification_metrics([1], [1, 0])


class TestMannWhitney:
    def test_small_exact(self):
        r = mann_whitney_u([1, 2], [3, 4])
        assert r["u"] == 0 and r["method"] == "exact"
        assert r["p_two_sided"] == pytest.approx(1 / 3, abs=1e-12)

    def test_identical_samples(self):
        a = [1.0, 2.0, 2.0, 5.0]
        assert mann_whitney_u(a, a)["u"] == len(a) ** 2 / 2

    def test_shifted(self, rng):
        b = rng.normal(size=40)
        assert mann_whitney_u(b + 10, b)["p_two_sided"] < 0.01

    @pytest.mark.parametrize("seed", range(5))
    def test_exact_matches_scipy_without_ties(self, seed):
        r = np.random.default_rng(seed)
        a, b = r.normal(size=7), r.normal(0.5, 1, size=9)
        ours = mann_whitney_u(a, b, "exact")
        ref = stats.mannwhitneyu(a, b, method="exact")
        assert ours["u"] == ref.statistic
        assert ours["p_two_sided"] == pytest.approx(ref.pvalue, abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_exact_with_ties_matches_enumeration(self, seed):
        r = np.random.default_rng(seed)
        a, b = r.integers(0, 4, 6).astype(float), r.integers(1, 5, 5).astype(float)
        assert mann_whitney_u(a, b, "exact")["p_two_sided"] == pytest.approx(brute_u_pvalue(a, b), abs=1e-12)

    def test_asymptotic_matches_scipy(self, rng):
        a, b = rng.integers(0, 10, 30).astype(float), rng.integers(2, 12, 25).astype(float)
        ours = mann_whitney_u(a, b, "asymptotic")
        ref = stats.mannwhitneyu(a, b, method="asymptotic", use_continuity=True)
        assert ours["p_two_sided"] == pytest.approx(ref.pvalue, abs=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_paths_agree(self, seed):
        r = np.random.default_rng(seed)
        a, b = r.normal(size=15), r.normal(0.3, 1, size=15)
        e = mann_whitney_u(a, b, "exact")["p_two_sided"]
        n = mann_whitney_u(a, b, "asymptotic")["p_two_sided"]
        assert abs(e - n) < 0.02

    def test_auto_switch(self, rng):
        assert mann_whitney_u(rng.normal(size=20), rng.normal(size=20))["method"] == "exact"
        assert mann_whitney_u(rng.normal(size=21), rng.normal(size=20))["method"] == "asymptotic"

    def test_empty(self):
        with pytest.raises(EmptySample):
            mann_whitney_u([], [1.0])


class TestMcNemar:
    def test_exact(self):
        r = mcnemar(10, 2)
        expected = 2 * sum(math.comb(12, k) for k in range(3)) / 2**12
        assert r["method"] == "exact" and r["p"] == pytest.approx(expected, abs=1e-12)
        assert r["p"] == pytest.approx(0.0386, abs=1e-4)

    def test_symmetric(self):
        assert mcnemar(7, 7)["p"] == 1.0
        assert mcnemar(0, 0)["p"] == 1.0

    def test_chi2(self):
        r = mcnemar(40, 10)
        assert r["method"] == "chi2" and r["statistic"] == pytest.approx(16.82)

    def test_from_predictions(self):
        truth = np.array([1, 1, 0, 0, 1, 0])
        a = np.array([1, 1, 0, 0, 0, 1])  # right on 0-3
        b = np.array([0, 1, 0, 1, 1, 0])  # right on 1, 2, 4, 5
        r = mcnemar_from_predictions(a, b, truth)
        assert r == mcnemar(2, 2)


class TestStratified:
    def test_all_nsr(self, rng):
        t = rng.normal(120, 10, 20)
        p = t + rng.normal(0, 3, 20)
        rep = stratified_report(p, t, ["NSR"] * 20)
        assert list(rep.strata) == ["NSR"]
        assert rep.strata["NSR"]["mae"] == rep.mae and rep.strata["NSR"]["pearson_r"] == rep.pearson_r

    def test_four_strata(self, rng):
        labels = ["NSR", "AF", "FrequentEctopy", "Paced"] * 5
        t = rng.normal(120, 10, 20)
        rep = stratified_report(t + rng.normal(size=20), t, labels)
        assert set(rep.strata) == {"NSR", "AF", "FrequentEctopy", "Paced"}
        for k in ("AF", "FrequentEctopy", "Paced"):
            assert "mann_whitney_vs_nsr" in rep.strata[k]

    def test_identical_error_distributions(self):
        r = np.random.default_rng(2024)
        t = r.normal(120, 10, 200)
        p = t + r.normal(0, 5, 200)
        labels = ["NSR"] * 100 + ["AF"] * 100
        rep = stratified_report(p, t, labels)
        assert rep.strata["AF"]["mann_whitney_vs_nsr"]["p_two_sided"] > 0.01

    def test_insufficient_flag(self, rng):
        t = rng.normal(120, 10, 6)
        rep = stratified_report(t + 1, t, ["NSR"] * 5 + ["Paced"])
        assert rep.strata["Paced"]["insufficient"] and not rep.strata["NSR"]["insufficient"]

    def test_unknown_label(self):
        with pytest.raises(UnknownRhythmLabel):
            stratified_report([1, 2], [1, 3], ["NSR", "Bigeminy"])

    def test_outputs(self, rng):
        t = rng.normal(125, 10, 12)
        p = t + rng.normal(0, 4, 12)
        rep = stratified_report(p, t, ["NSR", "AF"] * 6, p >= 130, t >= 130)
        doc = json.loads(json.dumps(rep.to_dict()))
        assert doc["classification"]["n"] == 12
        table = rep.to_table()
        assert "Rhythm Groups" in table and "specificity" in table
