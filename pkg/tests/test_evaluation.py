import pytest
from hypothesis import given, strategies as st

from erpipe.evaluation import GroundTruth, score_labels, score_predictions, split_candidates
from erpipe.labels import NegativeLabels, PositiveLabels


def test_perfect_prediction():
    r = score_predictions({(1, 1), (2, 2)}, GroundTruth.from_pairs([(1, 1), (2, 2)]))
    assert (r.precision, r.recall, r.f1) == (1.0, 1.0, 1.0)


def test_empty_prediction_convention():
    r = score_predictions(set(), GroundTruth.from_pairs([(1, 1)]))
    assert (r.precision, r.recall, r.f1) == (0.0, 0.0, 0.0)
    assert "precision" in r.undefined


def test_half_overlap():
    r = score_predictions({"a", "b"}, GroundTruth(frozenset({"b", "c"})))
    assert (r.precision, r.recall, r.f1) == (0.5, 0.5, 0.5)


pairs = st.sets(st.tuples(st.integers(0, 5), st.integers(0, 5)), max_size=20)


@given(pairs, pairs)
def test_scores_match_membership_count(pred, gold):
    r = score_predictions(pred, GroundTruth.from_pairs(gold))
    assert r.tp == sum(p in gold for p in pred)
    assert r.fp == sum(p not in gold for p in pred)
    assert r.fn == sum(g not in pred for g in gold)
    assert 0.0 <= r.f1 <= 1.0


@given(pairs, pairs, pairs)
def test_label_quality_oracle(pos, neg, gold):
    P = PositiveLabels(tuple((a, b, 1.0) for a, b in sorted(pos)))
    N = NegativeLabels(tuple((a, b, 0) for a, b in sorted(neg)))
    r = score_labels(P, N, GroundTruth.from_pairs(gold))
    assert r.tp == len([p for p in pos if p in gold])
    assert r.fn == len(pos) - r.tp
    assert r.fp == len([p for p in neg if p in gold])
    assert r.tn == len(neg) - r.fp


def test_clean_labels():
    P = PositiveLabels(((1, 1, 1.0),))
    N = NegativeLabels(((1, 2, 0),))
    r = score_labels(P, N, GroundTruth.from_pairs([(1, 1)]))
    assert r.tpr == r.tnr == 1.0


@pytest.mark.parametrize("n, sizes", [(10, (6, 2, 2)), (101, (61, 20, 20)), (5, (3, 1, 1))])
def test_split_sizes(n, sizes):
    assert split_candidates(range(n), seed=0).sizes() == sizes


@given(st.integers(5, 300), st.integers(0, 100))
def test_split_is_deterministic_partition(n, seed):
    s = split_candidates(range(n), seed)
    assert s == split_candidates(range(n), seed)
    assert sorted(s.train + s.validation + s.test) == list(range(n))


def test_split_too_small():
    with pytest.raises(ValueError):
        split_candidates(range(4))
