import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from erpipe.collab import (
    CsflConfig,
    CsflParams,
    cosine_embedding_loss,
    cross_entropy_loss,
    gradient_check,
    load_model,
    loss_and_grad,
    match_probability,
    pair_features,
    predict,
    save_model,
    toy_data,
    train_collab,
)
from erpipe.labels import NegativeLabels, PositiveLabels


def test_identical_inputs():
    params = CsflParams.init(3, 2)
    e, h = np.array([1.0, -2.0, 0.5]), np.array([3.0, -1.0])
    f = pair_features(params, e, e, h, h)
    assert not f[:3].any()
    assert not f[6:8].any()
    np.testing.assert_allclose(f[8:], h ** 2)


def test_hand_features():
    params = CsflParams(np.eye(2), np.zeros((8, 2)))
    f = pair_features(params, [1, 0], [0, 1], [1, 1], [1, -1])
    np.testing.assert_allclose(f, [1, 1, 0, 0, 0, 2, 1, -1])


@settings(max_examples=30)
@given(st.integers(0, 10 ** 6))
def test_features_symmetric(seed):
    r = np.random.default_rng(seed)
    params = CsflParams(r.normal(size=(3, 3)), np.zeros((10, 2)))
    a, b, ha, hb = r.normal(size=3), r.normal(size=3), r.normal(size=2), r.normal(size=2)
    np.testing.assert_allclose(pair_features(params, a, b, ha, hb), pair_features(params, b, a, hb, ha))


def test_cross_entropy_values():
    assert cross_entropy_loss([0, 0], 1) == pytest.approx(math.log(2), abs=1e-12)
    assert cross_entropy_loss([0, 10], 1) == pytest.approx(math.log1p(math.exp(-10)), rel=1e-9)
    assert cross_entropy_loss([0, 10], 1) == pytest.approx(4.54e-5, rel=1e-3)


@given(st.floats(-30, 30), st.floats(-30, 30), st.floats(-1e3, 1e3), st.integers(0, 1))
def test_cross_entropy_shift_invariant(a, b, c, y):
    assert cross_entropy_loss([a + c, b + c], y) == pytest.approx(cross_entropy_loss([a, b], y), abs=1e-9)


def test_cosine_embedding_cases():
    v = np.array([0.3, 0.4])
    assert cosine_embedding_loss(v, v, 1) == pytest.approx(0.0, abs=1e-15)
    w = np.array([math.cos(math.acos(0.3)), math.sin(math.acos(0.3))])
    assert cosine_embedding_loss([1, 0], w, 0, 0.5) == 0.0
    u = np.array([0.9, math.sqrt(1 - 0.81)])
    assert cosine_embedding_loss([1, 0], u, 0, 0.5) == pytest.approx(0.4, abs=1e-12)


def test_tie_probability_is_not_a_match():
    p = match_probability(np.array([[0.0, 0.0]]))
    assert p[0] == 0.5
    assert not p[0] > 0.5


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
@pytest.mark.parametrize("lam, mu", [(0.0, 0.2), (0.5, 0.2), (-0.5, 1.0)])
def test_gradient_check(seed, lam, mu):
    assert gradient_check(seed, cfg=CsflConfig(lambda_=lam, mu=mu)) < 1e-4


def small_problem(seed=0, n=6, c=3):
    r = np.random.default_rng(seed)
    EL, ER = r.normal(size=(8, n)), r.normal(size=(8, n))
    ER[:4] = EL[:4] + 0.1 * r.normal(size=(4, n))
    hl, hr = r.normal(size=(8, c)), r.normal(size=(8, c))
    P = PositiveLabels(tuple((i, i, 1.0) for i in range(4)))
    N = NegativeLabels(tuple((i, (i + s) % 8, i) for i in range(4) for s in (1, 2, 5)))
    return P, N, list(range(8)), list(range(8)), EL, ER, hl, hr


def test_mu_zero_total_equals_l1():
    res = train_collab(*small_problem(), cfg=CsflConfig(mu=0.0, epochs=10))
    assert res.loss_trace == res.l1_trace


def test_training_learns_positives():
    P, N, li, ri, EL, ER, hl, hr = small_problem()
    res = train_collab(P, N, li, ri, EL, ER, hl, hr, CsflConfig(epochs=100))
    assert len(res.loss_trace) == 101
    assert res.loss_trace[-1] < res.loss_trace[0]
    preds = predict(res.params, P.id_pairs(), li, ri, EL, ER, hl, hr)
    assert all(p > 0.5 for _, _, p, _ in preds)
    assert preds == predict(res.params, P.id_pairs(), li, ri, EL, ER, hl, hr)


def test_zero_labels_rejected():
    _, _, li, ri, EL, ER, hl, hr = small_problem()
    with pytest.raises(ValueError):
        train_collab(PositiveLabels(()), NegativeLabels(()), li, ri, EL, ER, hl, hr)


def test_loss_is_sum_of_per_pair_formulas():
    params, data = toy_data(5)
    cfg = CsflConfig(lambda_=0.1, mu=0.3)
    parts, _ = loss_and_grad(params, data, cfg, need_grad=False)
    l1 = l2 = 0.0
    for i, j, y in zip(data.li, data.rj, data.y):
        f = pair_features(params, data.E_left[i], data.E_right[j], data.h_left[i], data.h_right[j])
        l1 += cross_entropy_loss(f @ params.Wc, y)
        l2 += cosine_embedding_loss(data.E_left[i] @ params.P, data.E_right[j] @ params.P, y, cfg.lambda_)
    assert parts.l1 == pytest.approx(l1, rel=1e-12)
    assert parts.l2 == pytest.approx(l2, rel=1e-12)


def test_model_round_trip(tmp_path):
    params, _ = toy_data(2)
    save_model(tmp_path / "m.txt", params, "abc")
    back = load_model(tmp_path / "m.txt")
    np.testing.assert_array_equal(back.P, params.P)
    np.testing.assert_array_equal(back.Wc, params.Wc)
