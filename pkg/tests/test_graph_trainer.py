import math

import numpy as np
import pytest

from erpipe.dataset import Dataset
from erpipe.embeddings import EmbeddingProvider, EmbeddingProviderSpec
from erpipe.graph_trainer import (
    GnnParams,
    GraphBatch,
    LossTerms,
    MarginLossConfig,
    backward,
    forward,
    gradient_check,
    hinge_loss,
    init_embeddings,
    load_checkpoint,
    margin_loss,
    save_checkpoint,
    train,
)
from erpipe.labels import NegativeLabels, PositiveLabels
from erpipe.relgraph import mrgc
from erpipe.synthetic import SyntheticSpec, make_synthetic

SPEC4 = EmbeddingProviderSpec(dimension=16)


def unit(angle):
    return np.array([math.cos(angle), math.sin(angle)])


def test_single_value_tuple_equals_value():
    d = Dataset.from_rows("T", ["a"], [["sims"]])
    H = init_embeddings(mrgc(d), SPEC4)
    np.testing.assert_allclose(H[0], H[1])


def test_isolated_tuple_is_zero():
    d = Dataset.from_rows("T", ["a"], [[None], ["x"]])
    H = init_embeddings(mrgc(d), SPEC4)
    assert not H[0].any()


def test_two_value_mean():
    d = Dataset.from_rows("T", ["a", "b"], [["u", "w"]])
    H = init_embeddings(mrgc(d), SPEC4)
    p = EmbeddingProvider(SPEC4)
    m = (p.embed_text("u") + p.embed_text("w")) / 2
    np.testing.assert_allclose(H[0], m / np.linalg.norm(m))


def test_identity_layer_single_edge():
    d = Dataset.from_rows("T", ["a"], [["v"]])
    g = mrgc(d)
    H0 = np.array([[0.0, 0.0], [3.0, 4.0]])
    params = GnnParams(np.eye(2)[None], np.zeros((1, 2)), g.relations)
    H = forward(GraphBatch([g]), params, H0)
    np.testing.assert_allclose(H[0], [0.6, 0.8])


def test_no_edges_only_renormalizes():
    d = Dataset.from_rows("T", ["a"], [[None], [None]])
    g = mrgc(d)
    H0 = np.array([[2.0, 0.0], [0.0, -3.0]])
    params = GnnParams.init(g.relations, 2, 2)
    np.testing.assert_allclose(forward(GraphBatch([g]), params, H0), [[1, 0], [0, -1]])


def naive_forward(g, W, R, H0):
    """Per-edge loop: every edge carries a message each way, averaged per receiver."""
    H = H0.copy()
    for layer in range(W.shape[0]):
        inbox = [[] for _ in range(len(H))]
        for t, r, v in g.edges:
            inbox[t].append((H[v] + R[r]) @ W[layer])
            inbox[v].append((H[t] + R[r]) @ W[layer])
        new = np.zeros_like(H)
        for i in range(len(H)):
            u = H[i] + (np.mean(inbox[i], axis=0) if inbox[i] else 0.0)
            new[i] = u / np.linalg.norm(u)
        H = new
    return H


def test_forward_matches_naive(rng):
    d = Dataset.from_rows("T", ["a", "b"], [["x", "y"], ["x", None]])
    g = mrgc(d)
    assert g.n_nodes == 4
    H0 = rng.normal(size=(4, 3))
    params = GnnParams(rng.normal(size=(2, 3, 3)), rng.normal(size=(2, 3)), g.relations)
    got = forward(GraphBatch([g]), params, H0)
    np.testing.assert_allclose(got, naive_forward(g, params.W, params.R, H0), atol=1e-9)


@pytest.mark.parametrize("d_pos, d_neg, want", [(0.1, 1.2, 0.0), (0.5, 0.8, 0.7)])
def test_hinge_arithmetic(d_pos, d_neg, want):
    # vectors at the angles whose cosine distance is d
    hl = {"a": unit(0.0)}
    hr = {"p": unit(math.acos(1 - d_pos)), "n": unit(math.acos(1 - d_neg))}
    P = PositiveLabels((("a", "p", 1.0),))
    N = NegativeLabels((("a", "n", 0),))
    assert margin_loss(hl, hr, P, N) == pytest.approx(want, abs=1e-12)


def test_toy_loss_is_hand_sum(rng):
    hl = {i: rng.normal(size=3) for i in range(4)}
    hr = {j: rng.normal(size=3) for j in range(4)}
    pos = [(0, 0), (1, 1)]
    neg = [(0, 1, 0), (0, 2, 0), (2, 0, 0), (1, 0, 1), (1, 3, 1), (3, 1, 1)]
    cos = lambda a, b: float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))  # noqa: E731
    want = 0.0
    for a, b, k in neg:
        pa, pb = pos[k]
        want += max(0.0, (1 - cos(hl[pa], hr[pb])) + 1.0 - (1 - cos(hl[a], hr[b])))
    got = margin_loss(hl, hr, PositiveLabels(tuple((a, b, 1.0) for a, b in pos)), NegativeLabels(tuple(neg)))
    assert got == pytest.approx(want, abs=1e-12)


def test_negative_cap_keeps_label_order():
    hl = {0: unit(0.0)}
    hr = {j: unit(0.3 * j) for j in range(4)}
    P = PositiveLabels(((0, 0, 1.0),))
    N = NegativeLabels(tuple((0, j, 0) for j in (1, 2, 3)))
    capped = margin_loss(hl, hr, P, N, MarginLossConfig(negatives_per_positive=1))
    first = margin_loss(hl, hr, P, NegativeLabels(((0, 1, 0),)))
    assert capped == pytest.approx(first)


@pytest.mark.parametrize("layers", [1, 2, 3])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gradient_check(layers, seed):
    assert gradient_check(seed, layers=layers) < 1e-4


def test_inactive_hinges_give_zero_gradient(rng):
    H = np.vstack([unit(0.0), unit(0.0), unit(math.pi / 2)])
    terms = LossTerms(np.array([0]), np.array([1]), np.array([0]), np.array([0]), np.array([2]))
    loss, dH = hinge_loss(H, terms, gamma=0.5)
    assert loss == 0.0
    assert not dH.any()
    d = Dataset.from_rows("T", ["a"], [["x"], ["y"], ["z"]])
    batch = GraphBatch([mrgc(d)])
    params = GnnParams.init(batch.relations, 2, 2)
    cache = []
    forward(batch, params, rng.normal(size=(6, 2)), cache)
    grad = backward(batch, params, cache, np.zeros((6, 2)))
    assert not grad.W.any() and not grad.R.any()


def test_boundary_subgradient_is_one_sided():
    # gamma = 0 and d+ = d- at t = 0; t > 0 moves the negative away (inactive side)
    alpha = 0.7
    terms = LossTerms(np.array([0]), np.array([1]), np.array([0]), np.array([0]), np.array([2]))

    def H(t):
        return np.vstack([unit(0.0), unit(alpha), unit(alpha + t)])

    def loss(t):
        return hinge_loss(H(t), terms, gamma=0.0, need_grad=False)[0]

    def analytic(t):
        _, dH = hinge_loss(H(t), terms, gamma=0.0)
        tangent = np.array([-math.sin(alpha + t), math.cos(alpha + t)])
        return float(dH[2] @ tangent)

    h = 1e-6
    assert analytic(0.0) == 0.0
    assert (loss(h) - loss(0.0)) / h == 0.0
    # away from the kink the analytic derivative matches central differences on both sides
    for t in (-0.1, 0.1):
        assert analytic(t) == pytest.approx((loss(t + h) - loss(t - h)) / (2 * h), abs=1e-7)


@pytest.fixture(scope="module")
def duplicate_fixture():
    left, _, _ = make_synthetic(SyntheticSpec(40, 40, 40, 0.0, 0.0, 0.0, seed=3))
    right = Dataset.from_rows("R", left.attributes, [t.values for t in left.tuples], left.ids)
    P = PositiveLabels(tuple((t, t, 1.0) for t in left.ids[:30]))
    N = NegativeLabels(tuple((left.ids[k], left.ids[(k + s) % 40], k) for k in range(30) for s in (1, 2, 3)))
    return left, right, P, N


def test_training_pulls_copies_together(duplicate_fixture):
    left, right, P, N = duplicate_fixture
    cfg = MarginLossConfig(epochs=20, dim=32)
    res = train(mrgc(left), mrgc(right), P, N, cfg)
    assert len(res.loss_trace) == cfg.epochs + 1
    hl = res.h_left / np.linalg.norm(res.h_left, axis=1, keepdims=True)
    hr = res.h_right / np.linalg.norm(res.h_right, axis=1, keepdims=True)
    S = hl @ hr.T
    off = S[~np.eye(len(S), dtype=bool)].mean()
    assert np.diag(S).mean() > off


def test_zero_epochs_applies_no_update(duplicate_fixture):
    left, right, P, N = duplicate_fixture
    cfg = MarginLossConfig(epochs=0, dim=16)
    res = train(mrgc(left), mrgc(right), P, N, cfg)
    init = GnnParams.init(res.params.relations, 16, 1, cfg.seed)
    np.testing.assert_array_equal(res.params.W, init.W)
    np.testing.assert_array_equal(res.params.R, init.R)
    assert len(res.loss_trace) == 1


def test_checkpoint_round_trip(tmp_path, duplicate_fixture):
    left, right, P, N = duplicate_fixture
    res = train(mrgc(left), mrgc(right), P, N, MarginLossConfig(epochs=2, dim=8))
    save_checkpoint(tmp_path / "m.npz", res, "abc")
    back = load_checkpoint(tmp_path / "m.npz")
    assert back.left_ids == res.left_ids
    np.testing.assert_array_equal(back.h_right, res.h_right)
    assert back.params.relations == res.params.relations


def test_training_requires_positives(duplicate_fixture):
    left, right, _, N = duplicate_fixture
    with pytest.raises(ValueError):
        train(mrgc(left), mrgc(right), PositiveLabels(()), N)
