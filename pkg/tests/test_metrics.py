import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edlstar.metrics import (
    MetricsReport,
    accuracy,
    argmax_lowest,
    auprc,
    auroc,
    calibration_bins,
    confusion_matrix,
    ece,
    ecdf,
    mce,
    multinomial_nll,
    per_example_nll,
    reject_curve,
    uar,
)

# -- brute-force oracles -------------------------------------------------------


def _bin_of(c, q):
    # bin j covers (j/q, (j+1)/q]; confidence 0 goes to the first bin
    return max(math.ceil(c * q) - 1, 0)


def _ece_mce_oracle(conf, correct, q):
    bins = {}
    for c, ok in zip(conf, correct):
        bins.setdefault(_bin_of(c, q), []).append((c, ok))
    n = len(conf)
    e, m = 0.0, 0.0
    for members in bins.values():
        gap = abs(sum(ok for _, ok in members) / len(members) - sum(c for c, _ in members) / len(members))
        e += len(members) / n * gap
        m = max(m, gap)
    return e, m


def _auroc_oracle(s, y):
    pos = [a for a, b in zip(s, y) if b]
    neg = [a for a, b in zip(s, y) if not b]
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


def _auprc_oracle(s, y):
    n_pos = sum(y)
    prev_recall, area = 0.0, 0.0
    for t in sorted(set(s), reverse=True):
        tp = sum(1 for a, b in zip(s, y) if a >= t and b)
        fp = sum(1 for a, b in zip(s, y) if a >= t and not b)
        recall = tp / n_pos
        area += tp / (tp + fp) * (recall - prev_recall)
        prev_recall = recall
    return area


# -- classification --------------------------------------------------------------


class TestAccuracy:
    def test_all_correct(self):
        assert accuracy(np.eye(3), [0, 1, 2]) == 1.0

    def test_three_of_four(self):
        p = np.array([[0.9, 0.1], [0.2, 0.8], [0.6, 0.4], [0.7, 0.3]])
        assert accuracy(p, [0, 1, 0, 1]) == 0.75

    def test_tie_goes_to_lowest_index(self):
        p = np.array([[0.25, 0.375, 0.375]])
        assert argmax_lowest(p)[0] == 1
        assert accuracy(p, [1]) == 1.0
        assert accuracy(p, [2]) == 0.0

    def test_empty_and_missing_label(self):
        with pytest.raises(ValueError):
            accuracy(np.zeros((0, 2)), [])
        with pytest.raises(ValueError):
            accuracy(np.eye(2), [0, -1])


class TestUar:
    def test_hand_mean(self):
        # class 0 recall 1.0, class 1 recall 0.5
        p = np.array([[1, 0], [1, 0], [0, 1], [1, 0]], float)
        r = uar(p, [0, 0, 1, 1])
        assert r.value == 0.75
        assert r.absent_classes == ()

    def test_balanced_perfect(self):
        assert uar(np.eye(4), [0, 1, 2, 3]).value == 1.0

    def test_absent_class_excluded_and_flagged(self):
        p = np.array([[1, 0, 0], [0, 0, 1], [0, 1, 0]], float)
        with pytest.warns(RuntimeWarning, match="absent"):
            r = uar(p, [0, 0, 2])
        assert r.absent_classes == (1,)
        assert r.value == pytest.approx((0.5 + 0.0) / 2)


class TestConfusion:
    def test_perfect_is_diagonal(self):
        cm = confusion_matrix([0, 1, 2, 2], [0, 1, 2, 2], 3)
        np.testing.assert_array_equal(cm, np.diag([1, 1, 2]))

    def test_single_column(self):
        cm = confusion_matrix([0, 1, 2, 1], [0, 0, 0, 0], 3)
        np.testing.assert_array_equal(cm[:, 1:], 0)
        np.testing.assert_array_equal(cm[:, 0], [1, 2, 1])

    def test_totals(self):
        rng = np.random.default_rng(3)
        y, p = rng.integers(0, 4, 500), rng.integers(0, 4, 500)
        cm = confusion_matrix(y, p, 4)
        assert cm.sum() == 500
        np.testing.assert_array_equal(cm.sum(axis=1), np.bincount(y, minlength=4))


# -- calibration -------------------------------------------------------------------


class TestCalibration:
    def test_four_record_hand_case(self):
        conf = [0.4, 0.4, 0.9, 0.9]
        correct = [1, 1, 1, 0]
        assert ece(conf, correct, 2) == pytest.approx(0.5, abs=1e-12)
        assert mce(conf, correct, 2) == pytest.approx(0.6, abs=1e-12)

    def test_perfectly_calibrated_is_zero(self):
        # each bin holds 20 records at confidence c with round(20 c) correct
        conf, correct = [], []
        for c in (0.15, 0.35, 0.55, 0.75, 0.95):
            k = int(round(c * 20))
            conf += [c] * 20
            correct += [1] * k + [0] * (20 - k)
        assert ece(conf, correct) == pytest.approx(0.0, abs=1e-12)
        assert mce(conf, correct) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("q", [1, 3, 10, 15])
    def test_matches_brute_force_oracle(self, q):
        rng = np.random.default_rng(q)
        conf = rng.uniform(0, 1, 200)
        correct = rng.uniform(0, 1, 200) < conf**2
        e, m = _ece_mce_oracle(conf.tolist(), correct.tolist(), q)
        assert abs(ece(conf, correct, q) - e) < 1e-12
        assert abs(mce(conf, correct, q) - m) < 1e-12

    def test_bin_edges_and_zero_confidence(self):
        lo, hi, count, acc, _ = calibration_bins([0.0, 0.5, 0.5000001, 1.0], [1, 1, 0, 1], 2)
        np.testing.assert_allclose(lo, [0.0, 0.5])
        np.testing.assert_allclose(hi, [0.5, 1.0])
        np.testing.assert_array_equal(count, [2, 2])
        np.testing.assert_allclose(acc, [1.0, 0.5])

    def test_empty_bin_reports_nan(self):
        _, _, count, acc, conf = calibration_bins([0.95], [1], 4)
        assert count.tolist() == [0, 0, 0, 1]
        assert np.isnan(acc[:3]).all() and np.isnan(conf[:3]).all()

    def test_errors(self):
        with pytest.raises(ValueError):
            ece([0.5], [1], 0)
        with pytest.raises(ValueError):
            mce([1.2], [1])
        with pytest.raises(ValueError):
            ece([], [])

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 200), st.integers(1, 20), st.integers(0, 2**32 - 1))
    def test_range_and_mce_dominates(self, n, q, seed):
        rng = np.random.default_rng(seed)
        conf = rng.uniform(0, 1, n)
        correct = rng.integers(0, 2, n)
        e, m = ece(conf, correct, q), mce(conf, correct, q)
        assert 0.0 <= e <= m + 1e-15 <= 1.0 + 1e-15


# -- detection ---------------------------------------------------------------------


class TestAuroc:
    def test_perfect_separation(self):
        assert auroc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0

    def test_all_tied(self):
        assert auroc([0.3] * 6, [1, 0, 1, 0, 0, 0]) == 0.5

    def test_matches_pairwise_oracle(self):
        rng = np.random.default_rng(11)
        # coarse rounding forces many ties
        s = np.round(rng.uniform(0, 1, 300), 2)
        y = rng.uniform(0, 1, 300) < 0.2 + 0.5 * s
        assert abs(auroc(s, y) - _auroc_oracle(s.tolist(), y.tolist())) < 1e-12

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_invariant_under_monotone_transform(self, seed):
        rng = np.random.default_rng(seed)
        s = rng.uniform(0, 1, 80)
        y = np.r_[np.ones(20, bool), np.zeros(60, bool)]
        base = auroc(s, y)
        assert auroc(np.exp(3 * s) - 7, y) == pytest.approx(base, abs=1e-12)
        assert auroc(s**3, y) == pytest.approx(base, abs=1e-12)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            auroc([0.1, 0.2], [1, 1])
        with pytest.raises(ValueError):
            auroc([0.1, 0.2], [0, 0])


class TestAuprc:
    def test_perfect_ranking(self):
        assert auprc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0

    def test_matches_step_curve_oracle(self):
        rng = np.random.default_rng(12)
        s = np.round(rng.uniform(0, 1, 300), 2)
        y = rng.uniform(0, 1, 300) < 0.1 + 0.6 * s
        assert abs(auprc(s, y) - _auprc_oracle(s.tolist(), y.tolist())) < 1e-12

    def test_random_scores_near_positive_rate(self):
        rng = np.random.default_rng(13)
        s = rng.uniform(0, 1, 10_000)
        y = rng.uniform(0, 1, 10_000) < 0.3
        assert abs(auprc(s, y) - 0.30) < 0.05

    def test_all_tied_equals_positive_rate(self):
        assert auprc([0.5] * 5, [1, 0, 0, 1, 0]) == pytest.approx(0.4)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            auprc([0.1, 0.2], [0, 0])


# -- distribution NLL ------------------------------------------------------------------


class TestNll:
    def test_fair_coin(self):
        assert multinomial_nll([[0.5, 0.5]], [[1, 1]]) == pytest.approx(math.log(2), abs=1e-12)

    def test_unanimous_perfect_prediction(self):
        assert multinomial_nll([[1.0, 0.0, 0.0]], [[4, 0, 0]]) == pytest.approx(0.0, abs=1e-15)

    def test_hand_value(self):
        # counts (2,1): -(2 ln 0.6 + ln 0.4) / 3
        want = -(2 * math.log(0.6) + math.log(0.4)) / 3
        assert multinomial_nll([[0.6, 0.4]], [[2, 1]]) == pytest.approx(want, abs=1e-12)

    def test_floor_keeps_zero_probability_finite(self):
        v = per_example_nll([[1.0, 0.0]], [[1, 1]])[0]
        assert v == pytest.approx(-math.log(1e-12) / 2)

    def test_monotone_in_majority_probability(self):
        counts = [[4, 0, 0]]
        vals = [multinomial_nll([[p, (1 - p) / 2, (1 - p) / 2]], counts) for p in np.linspace(0.9, 0.4, 11)]
        assert np.all(np.diff(vals) > 0)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 5))
    def test_duplicating_counts_is_invariant(self, seed, factor):
        rng = np.random.default_rng(seed)
        p = rng.dirichlet(np.ones(4), 10)
        c = rng.integers(0, 5, (10, 4))
        c[:, 0] += 1
        np.testing.assert_allclose(multinomial_nll(p, c * factor), multinomial_nll(p, c), rtol=1e-13)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            per_example_nll([[0.5, 0.5]], [[1, 1, 1]])


# -- reject curves and ECDF --------------------------------------------------------------


class TestRejectCurve:
    def test_hand_case(self):
        u = [0.1, 0.5, 0.9]
        ok = [1.0, 0.0, 1.0]
        c = reject_curve(u, ok, [0.0, 0.1, 0.6, 1.0])
        assert c.values == (None, 1.0, 0.5, pytest.approx(2 / 3))
        assert c.retained == (0, 1, 2, 3)
        rows = c.as_rows()
        assert rows[0]["empty"] and rows[0]["value"] is None
        assert not rows[-1]["empty"]

    def test_max_threshold_reproduces_global_metric(self):
        rng = np.random.default_rng(5)
        p = rng.dirichlet(np.ones(3), 50)
        counts = rng.integers(1, 4, (50, 3))
        u = rng.uniform(0, 1, 50)
        per = per_example_nll(p, counts)
        c = reject_curve(u, per, [0.5, u.max()])
        assert c.values[-1] == pytest.approx(multinomial_nll(p, counts), rel=1e-14)
        assert c.retained[-1] == 50

    def test_unsorted_thresholds_rejected(self):
        with pytest.raises(ValueError):
            reject_curve([0.1], [1.0], [0.5, 0.2])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            reject_curve([], [], [0.5])


class TestEcdf:
    def test_single(self):
        x, y = ecdf([0.5])
        assert x.tolist() == [0.5] and y.tolist() == [1.0]

    def test_quartiles(self):
        x, y = ecdf([3, 1, 4, 2])
        assert x.tolist() == [1, 2, 3, 4]
        assert y.tolist() == [0.25, 0.5, 0.75, 1.0]

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=100))
    def test_monotone_and_ends_at_one(self, values):
        x, y = ecdf(values)
        assert np.all(np.diff(x) >= 0) and np.all(np.diff(y) > 0)
        assert y[-1] == 1.0

    def test_empty(self):
        with pytest.raises(ValueError):
            ecdf([])


# -- report ----------------------------------------------------------------------------


class TestReport:
    def test_json_round_trip_and_nonfinite_to_null(self):
        rep = MetricsReport(
            {"acc": 0.5, "ece": float("nan")},
            curves={"ecdf_uncertainty": [{"x": 0.1, "y": 1.0}]},
            confusion=np.eye(2, dtype=int),
            meta={"method": "EDL"},
        )
        doc = json.loads(rep.to_json())
        assert doc["scalars"]["ece"] is None
        # every standard key is present even when not computed
        assert set(MetricsReport.SCALAR_KEYS) <= set(doc["scalars"])
        back = MetricsReport.from_dict(doc)
        assert back.scalars["acc"] == 0.5
        assert back.confusion == [[1, 0], [0, 1]]
        assert back.to_json() == MetricsReport.from_dict(json.loads(back.to_json())).to_json()

    def test_unknown_schema_rejected(self):
        with pytest.raises(ValueError):
            MetricsReport.from_dict({"schema_version": 99, "scalars": {}})

    def test_write_creates_curve_csvs(self, tmp_path):
        rep = MetricsReport({"acc": 1.0}, curves={"reject_accuracy": [{"threshold": 0.0, "value": None}]})
        rep.write(tmp_path)
        assert (tmp_path / "report.json").exists()
        text = (tmp_path / "curves" / "reject_accuracy.csv").read_text()
        assert text == "threshold,value\n0.0,\n"
