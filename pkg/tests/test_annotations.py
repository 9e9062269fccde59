import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edlstar.annotations import (
    AnnotationSet,
    Dataset,
    DimensionMismatchError,
    Example,
    LabelRangeError,
    ParseError,
    counts,
    load_dataset,
    majority,
    relabel_with_extra_class,
    save_dataset,
    select_nma_test,
    soft_label,
    split_ma_nma,
)


def _ann(labels, k):
    return AnnotationSet(tuple(labels), k)


def _dataset(count_rows, dim=2):
    k = len(count_rows[0])
    exs = [
        Example(f"e{i}", np.full(dim, float(i)), AnnotationSet.from_counts(c))
        for i, c in enumerate(count_rows)
    ]
    return Dataset(tuple(exs), k, dim)


annotation_sets = st.integers(2, 6).flatmap(
    lambda k: st.lists(st.integers(0, k - 1), min_size=1, max_size=12).map(lambda ls: _ann(ls, k))
)


class TestCounts:
    def test_eight_of_nine(self):
        np.testing.assert_array_equal(counts(_ann([0] * 8 + [1], 3)), [8, 1, 0])

    def test_pair(self):
        np.testing.assert_array_equal(counts(_ann([0, 1], 2)), [1, 1])

    def test_unanimous(self):
        np.testing.assert_array_equal(counts(_ann([2, 2, 2], 4)), [0, 0, 3, 0])

    def test_rejects_out_of_range(self):
        with pytest.raises(LabelRangeError):
            _ann([0, 3], 3)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            _ann([], 3)


class TestSoftLabel:
    @pytest.mark.parametrize(
        "c, expected",
        [((8, 1, 0), (8 / 9, 1 / 9, 0)), ((2, 2, 0), (0.5, 0.5, 0)), ((4, 2, 4), (0.4, 0.2, 0.4))],
    )
    def test_examples(self, c, expected):
        y = soft_label(AnnotationSet.from_counts(c))
        np.testing.assert_allclose(y, expected, atol=1e-15)
        assert abs(y.sum() - 1.0) < 1e-12


class TestMajority:
    def test_plurality_counts_as_ma(self):
        out = majority(AnnotationSet.from_counts((4, 2, 3)))
        assert out.is_ma and out.label == 0
        assert out.majority_fraction == pytest.approx(4 / 9)
        assert round(out.majority_fraction, 3) == 0.444

    def test_tie_is_nma(self):
        out = majority(AnnotationSet.from_counts((4, 2, 4)))
        assert out.is_nma and out.label is None

    def test_unanimous(self):
        out = majority(AnnotationSet.from_counts((3, 0, 0)))
        assert out.label == 0 and out.majority_fraction == 1.0


@settings(max_examples=300, deadline=None)
@given(annotation_sets, st.randoms(use_true_random=False))
def test_permutation_invariance(a, rnd):
    labels = list(a.labels)
    rnd.shuffle(labels)
    b = _ann(labels, a.num_classes)
    np.testing.assert_array_equal(counts(a), counts(b))
    np.testing.assert_array_equal(soft_label(a), soft_label(b))
    assert majority(a) == majority(b)


@settings(max_examples=300, deadline=None)
@given(annotation_sets)
def test_soft_label_times_m_is_counts(a):
    np.testing.assert_array_equal(soft_label(a) * a.num_annotators, counts(a))


@settings(max_examples=300, deadline=None)
@given(annotation_sets)
def test_majority_consistent_with_argmax(a):
    c = counts(a)
    out = majority(a)
    if out.is_ma:
        others = np.delete(c, out.label)
        assert np.all(c[out.label] > others)
    else:
        assert np.sum(c == c.max()) >= 2


class TestSplit:
    def test_three_examples(self):
        d = _dataset([(4, 2, 3), (4, 2, 4), (3, 0, 0)])
        ma, nma = split_ma_nma(d)
        assert ma.ids == ["e0", "e2"]
        assert nma.ids == ["e1"]

    def test_all_unanimous(self):
        ma, nma = split_ma_nma(_dataset([(3, 0), (0, 2)]))
        assert len(ma) == 2 and len(nma) == 0

    def test_all_tied(self):
        ma, nma = split_ma_nma(_dataset([(1, 1), (2, 2)]))
        assert len(ma) == 0 and len(nma) == 2

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)).filter(lambda t: sum(t) > 0),
                    min_size=1, max_size=20))
    def test_remerge_preserves_ids(self, rows):
        d = _dataset(rows)
        ma, nma = split_ma_nma(d)
        assert sorted(ma.ids + nma.ids) == sorted(d.ids)


class TestRelabel:
    def test_nma_gets_extra_class(self):
        d = _dataset([(2, 2, 0), (8, 1, 0)] + [(1, 1, 0)] * 3)
        train, test = relabel_with_extra_class(d, seed=0)
        # four NMA examples -> one held out
        assert len(test) == 1
        assert train.num_classes == 4
        by_id = {ex.id: ex.annotations.labels for ex in train}
        assert by_id["e1"] == (0,)
        assert all(v == (3,) for key, v in by_id.items() if key != "e1")

    def test_eight_nma_holds_out_two(self):
        d = _dataset([(1, 1)] * 8 + [(2, 0)] * 3)
        for seed in range(5):
            train, test = relabel_with_extra_class(d, seed=seed)
            assert len(test) == 2
            assert len(train) == 9
            assert not set(test.ids) & set(train.ids)

    def test_seeded(self):
        d = _dataset([(1, 1)] * 8)
        a = relabel_with_extra_class(d, seed=3)[1].ids
        b = relabel_with_extra_class(d, seed=3)[1].ids
        assert a == b

    def test_select_nma_test_count(self):
        assert select_nma_test(8, 0).sum() == 2
        assert select_nma_test(0, 0).sum() == 0
        assert select_nma_test(6, 0).sum() == 2  # 1.5 rounds half up


class TestFiles:
    def _write(self, path, lines):
        path.write_text("\n".join(json.dumps(x) for x in lines) + "\n")

    def test_jsonl_two_lines(self, tmp_path):
        p = tmp_path / "d.jsonl"
        self._write(p, [
            {"num_classes": 3, "feature_dim": 4, "class_names": ["a", "b", "c"]},
            {"id": "x", "features": [0, 1, 2, 3], "labels": [0, 1, 1]},
            {"id": "y", "features": [1, 1, 1, 1], "labels": [2]},
        ])
        d = load_dataset(p)
        assert len(d) == 2 and d.num_classes == 3 and d.feature_dim == 4
        assert d.ids == ["x", "y"]
        assert d.class_names == ("a", "b", "c")

    def test_label_out_of_range_names_line(self, tmp_path):
        p = tmp_path / "d.jsonl"
        self._write(p, [
            {"num_classes": 3, "feature_dim": 2},
            {"id": "x", "features": [0, 1], "labels": [0]},
            {"id": "y", "features": [0, 1], "labels": [3]},
        ])
        with pytest.raises(LabelRangeError, match="line 3"):
            load_dataset(p)

    def test_ragged_features(self, tmp_path):
        p = tmp_path / "d.jsonl"
        self._write(p, [
            {"num_classes": 3, "feature_dim": 2},
            {"id": "x", "features": [0, 1, 2], "labels": [0]},
        ])
        with pytest.raises(DimensionMismatchError):
            load_dataset(p)

    def test_bad_json_reports_line(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text('{"num_classes": 2, "feature_dim": 1}\n{"id": "x", "features": [0]\n')
        with pytest.raises(ParseError) as info:
            load_dataset(p)
        assert info.value.line == 2

    @pytest.mark.parametrize("fmt", ["jsonl", "csv"])
    def test_round_trip(self, tmp_path, fmt):
        d = _dataset([(4, 2, 3), (4, 2, 4), (3, 0, 0)], dim=3)
        p = tmp_path / f"d.{fmt}"
        save_dataset(d, p, fmt)
        back = load_dataset(p, num_classes=3)
        assert back.ids == d.ids
        np.testing.assert_array_equal(back.features, d.features)
        np.testing.assert_array_equal(back.counts, d.counts)

    def test_csv_ragged_row(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("id,f0,f1,labels\na,0.1,0.2,0|1\nb,0.3,1\n")
        with pytest.raises(DimensionMismatchError):
            load_dataset(p)
