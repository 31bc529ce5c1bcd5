"""Tuple graph embeddings learned by message passing under a margin loss.

Both datasets' graphs are trained jointly with shared parameters: one
``c x c`` transform per layer and one relation vector per attribute name.
A layer computes, for every node ``i``,

    o_i = mean_{(j, a) in N(i)} (h_j + r_a) @ W
    h_i <- normalize(h_i + o_i)

and the loss is the hinge ``[d(pos) + gamma - d(neg)]_+`` summed over each
positive and the negatives generated from it, with ``d = 1 - cos``.
Gradients are derived by hand; :func:`gradient_check` compares them with
central finite differences.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .embeddings import EmbeddingProvider, EmbeddingProviderSpec
from .labels import NegativeLabels, PositiveLabels
from .optim import make_optimizer
from .relgraph import MultiRelGraph

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class MarginLossConfig:
    gamma: float = 1.0
    epochs: int = 50
    learning_rate: float = 0.05
    negatives_per_positive: int = 20
    layers: int = 1
    dim: int = 128
    seed: int = 0
    optimizer: str = "gd"

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.layers < 1:
            raise ValueError("need at least one layer")


@dataclass
class GnnParams:
    W: np.ndarray  # (layers, c, c)
    R: np.ndarray  # (relations, c)
    relations: tuple

    @property
    def layers(self) -> int:
        return self.W.shape[0]

    @property
    def dim(self) -> int:
        return self.W.shape[1]

    @classmethod
    def init(cls, relations: Sequence[str], dim: int, layers: int, seed: int = 0) -> "GnnParams":
        rng = np.random.default_rng(seed)
        W = np.stack([np.eye(dim) + rng.uniform(-0.01, 0.01, (dim, dim)) for _ in range(layers)])
        return cls(W, np.zeros((len(relations), dim)), tuple(relations))

    def copy(self) -> "GnnParams":
        return GnnParams(self.W.copy(), self.R.copy(), self.relations)


def _normalize_rows(X: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(X, axis=1, keepdims=True)
    return np.divide(X, n, out=np.zeros_like(X), where=n > 0)


def init_embeddings(g: MultiRelGraph, provider: Union[EmbeddingProvider, EmbeddingProviderSpec]) -> np.ndarray:
    """Value nodes get their text embedding; tuple nodes the normalized mean of their values."""
    if isinstance(provider, EmbeddingProviderSpec):
        provider = EmbeddingProvider(provider)
    c = provider.dimension
    H = np.zeros((g.n_nodes, c))
    for k, text in enumerate(g.values):
        H[g.n_tuples + k] = provider.embed_text(text)
    if len(g.edges):
        sums = np.zeros((g.n_tuples, c))
        np.add.at(sums, g.edges[:, 0], H[g.edges[:, 2]])
        counts = np.bincount(g.edges[:, 0], minlength=g.n_tuples)[:, None]
        means = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
        H[: g.n_tuples] = _normalize_rows(means)
    return H


class GraphBatch:
    """Disjoint union of the two datasets' graphs with precomputed message operators."""

    def __init__(self, graphs: Sequence[MultiRelGraph], relations: Optional[Sequence[str]] = None):
        if relations is None:
            relations = []
            for g in graphs:
                relations += [r for r in g.relations if r not in relations]
        self.relations = tuple(relations)
        rel_index = {r: k for k, r in enumerate(self.relations)}
        self.offsets = []
        dst, src, rel = [], [], []
        off = 0
        for g in graphs:
            self.offsets.append(off)
            for t, r, v in g.edges:
                a = rel_index[g.relations[r]]
                # messages flow both ways along each edge
                dst += [off + t, off + v]
                src += [off + v, off + t]
                rel += [a, a]
            off += g.n_nodes
        self.n_nodes = off
        self.graphs = list(graphs)
        self.dst = np.array(dst, dtype=np.int64)
        self.src = np.array(src, dtype=np.int64)
        self.rel = np.array(rel, dtype=np.int64)
        n_msg = len(self.dst)
        deg = np.bincount(self.dst, minlength=off).astype(float)
        cols = np.arange(n_msg)
        w = 1.0 / deg[self.dst] if n_msg else np.zeros(0)
        # O = Agg @ M averages incoming messages per destination
        self.Agg = sp.csr_matrix((w, (self.dst, cols)), shape=(off, n_msg))
        self.Src = sp.csr_matrix((np.ones(n_msg), (self.src, cols)), shape=(off, n_msg))
        self.Rel = sp.csr_matrix((np.ones(n_msg), (self.rel, cols)), shape=(len(self.relations), n_msg))

    def tuple_rows(self, which: int) -> np.ndarray:
        g = self.graphs[which]
        return self.offsets[which] + np.arange(g.n_tuples)


def forward(batch: GraphBatch, params: GnnParams, H0: np.ndarray, cache: Optional[list] = None) -> np.ndarray:
    H = H0
    for layer in range(params.layers):
        Z = H[batch.src] + params.R[batch.rel]
        M = Z @ params.W[layer]
        O = batch.Agg @ M
        U = H + O
        norms = np.linalg.norm(U, axis=1, keepdims=True)
        H_next = np.divide(U, norms, out=np.zeros_like(U), where=norms > 0)
        if cache is not None:
            cache.append((H, Z, norms, H_next))
        H = H_next
    return H


def backward(batch: GraphBatch, params: GnnParams, cache: list, dH: np.ndarray) -> GnnParams:
    """Gradients of a scalar loss w.r.t. W and R given its gradient w.r.t. the final H."""
    dW = np.zeros_like(params.W)
    dR = np.zeros_like(params.R)
    for layer in reversed(range(params.layers)):
        H, Z, norms, H_next = cache[layer]
        proj = np.sum(H_next * dH, axis=1, keepdims=True)
        dU = np.divide(dH - H_next * proj, norms, out=np.zeros_like(dH), where=norms > 0)
        dM = batch.Agg.T @ dU
        dW[layer] = Z.T @ dM
        dZ = dM @ params.W[layer].T
        dR += batch.Rel @ dZ
        dH = dU + batch.Src @ dZ
    return GnnParams(dW, dR, params.relations)


def _cosines(X: np.ndarray, Y: np.ndarray):
    nx = np.linalg.norm(X, axis=1)
    ny = np.linalg.norm(Y, axis=1)
    ok = (nx > 0) & (ny > 0)
    denom = np.where(ok, nx * ny, 1.0)
    c = np.where(ok, np.sum(X * Y, axis=1) / denom, 0.0)
    return c, nx, ny, ok


def _cosine_grads(X, Y, c, nx, ny, ok):
    """d cos / dX and d cos / dY row-wise; zero where either row is zero."""
    nx_ = np.where(ok, nx, 1.0)[:, None]
    ny_ = np.where(ok, ny, 1.0)[:, None]
    gx = Y / (nx_ * ny_) - c[:, None] * X / nx_ ** 2
    gy = X / (nx_ * ny_) - c[:, None] * Y / ny_ ** 2
    gx[~ok] = 0.0
    gy[~ok] = 0.0
    return gx, gy


@dataclass
class LossTerms:
    """Index arrays into the stacked embedding matrix for each hinge term."""

    pos_a: np.ndarray
    pos_b: np.ndarray
    term_pos: np.ndarray  # positive index of each hinge term
    neg_a: np.ndarray
    neg_b: np.ndarray

    @property
    def n_terms(self) -> int:
        return len(self.term_pos)


def build_terms(
    left_rows: dict,
    right_rows: dict,
    positives: PositiveLabels,
    negatives: NegativeLabels,
    cap: Optional[int] = None,
) -> LossTerms:
    """Map labels to row indices, keeping at most ``cap`` negatives per positive in label order."""

    def row(table, tid, side):
        try:
            return table[tid]
        except KeyError:
            raise KeyError(f"no {side} embedding for tuple id {tid!r}") from None

    pos = positives.id_pairs()
    pos_a = np.array([row(left_rows, a, "left") for a, _ in pos], dtype=np.int64)
    pos_b = np.array([row(right_rows, b, "right") for _, b in pos], dtype=np.int64)
    used = [0] * len(pos)
    tp, na, nb = [], [], []
    for a, b, src in negatives.pairs:
        if not 0 <= src < len(pos):
            raise KeyError(f"negative ({a!r}, {b!r}) refers to unknown positive {src}")
        if cap is not None and used[src] >= cap:
            continue
        used[src] += 1
        tp.append(src)
        na.append(row(left_rows, a, "left"))
        nb.append(row(right_rows, b, "right"))
    return LossTerms(pos_a, pos_b, np.array(tp, dtype=np.int64),
                     np.array(na, dtype=np.int64), np.array(nb, dtype=np.int64))


def hinge_loss(H: np.ndarray, terms: LossTerms, gamma: float, need_grad: bool = True):
    """Margin loss over stacked embeddings ``H`` and its gradient w.r.t. ``H``."""
    cp, *pstate = _cosines(H[terms.pos_a], H[terms.pos_b])
    cn, *nstate = _cosines(H[terms.neg_a], H[terms.neg_b])
    # d+ + gamma - d- with d = 1 - cos
    x = gamma + cn - cp[terms.term_pos]
    active = x > 0
    loss = float(np.sum(x[active]))
    if not need_grad:
        return loss, None
    dcp = -np.bincount(terms.term_pos[active], minlength=len(cp)).astype(float)
    dcn = active.astype(float)
    dH = np.zeros_like(H)
    gxa, gxb = _cosine_grads(H[terms.pos_a], H[terms.pos_b], cp, *pstate)
    np.add.at(dH, terms.pos_a, dcp[:, None] * gxa)
    np.add.at(dH, terms.pos_b, dcp[:, None] * gxb)
    gna, gnb = _cosine_grads(H[terms.neg_a], H[terms.neg_b], cn, *nstate)
    np.add.at(dH, terms.neg_a, dcn[:, None] * gna)
    np.add.at(dH, terms.neg_b, dcn[:, None] * gnb)
    return loss, dH


def margin_loss(
    h_left: dict,
    h_right: dict,
    positives: PositiveLabels,
    negatives: NegativeLabels,
    cfg: MarginLossConfig = MarginLossConfig(),
) -> float:
    """Margin loss from per-tuple embeddings keyed by tuple id."""
    left_ids, right_ids = list(h_left), list(h_right)
    H = np.vstack([np.asarray([h_left[t] for t in left_ids], dtype=float).reshape(len(left_ids), -1),
                   np.asarray([h_right[t] for t in right_ids], dtype=float).reshape(len(right_ids), -1)])
    lrows = {t: k for k, t in enumerate(left_ids)}
    rrows = {t: len(left_ids) + k for k, t in enumerate(right_ids)}
    terms = build_terms(lrows, rrows, positives, negatives, cfg.negatives_per_positive)
    return hinge_loss(H, terms, cfg.gamma, need_grad=False)[0]


@dataclass
class GraphModel:
    """Everything needed to evaluate the graph loss for a parameter setting."""

    batch: GraphBatch
    H0: np.ndarray
    terms: LossTerms
    gamma: float

    def loss_and_grad(self, params: GnnParams, need_grad: bool = True):
        cache: list = []
        H = forward(self.batch, params, self.H0, cache)
        loss, dH = hinge_loss(H, self.terms, self.gamma, need_grad)
        if not need_grad:
            return loss, None
        return loss, backward(self.batch, params, cache, dH)


def build_model(
    g_left: MultiRelGraph,
    g_right: MultiRelGraph,
    H0_left: np.ndarray,
    H0_right: np.ndarray,
    positives: PositiveLabels,
    negatives: NegativeLabels,
    cfg: MarginLossConfig,
) -> GraphModel:
    batch = GraphBatch([g_left, g_right])
    H0 = np.vstack([H0_left, H0_right])
    lrows = {t: int(r) for t, r in zip(g_left.tuple_ids, batch.tuple_rows(0))}
    rrows = {t: int(r) for t, r in zip(g_right.tuple_ids, batch.tuple_rows(1))}
    terms = build_terms(lrows, rrows, positives, negatives, cfg.negatives_per_positive)
    return GraphModel(batch, H0, terms, cfg.gamma)


@dataclass
class GraphTrainResult:
    params: GnnParams
    left_ids: list
    right_ids: list
    h_left: np.ndarray
    h_right: np.ndarray
    loss_trace: list = field(default_factory=list)


def train(
    g_left: MultiRelGraph,
    g_right: MultiRelGraph,
    positives: PositiveLabels,
    negatives: NegativeLabels,
    cfg: MarginLossConfig = MarginLossConfig(),
    provider: Union[EmbeddingProvider, EmbeddingProviderSpec, None] = None,
) -> GraphTrainResult:
    """Full-batch gradient descent on W and R; node inputs stay fixed.

    ``loss_trace[e]`` is the loss before update ``e``; the last entry is the
    loss of the returned parameters. Steps use the gradient averaged over
    hinge terms so the learning rate does not depend on label count.
    """
    if len(positives) == 0:
        raise ValueError("graph training needs at least one positive label")
    if provider is None:
        provider = EmbeddingProviderSpec(dimension=cfg.dim, seed=cfg.seed)
    if isinstance(provider, EmbeddingProviderSpec):
        provider = EmbeddingProvider(provider)
    if provider.dimension != cfg.dim:
        raise ValueError(f"provider dimension {provider.dimension} != graph dimension {cfg.dim}")
    H0l = init_embeddings(g_left, provider)
    H0r = init_embeddings(g_right, provider)
    model = build_model(g_left, g_right, H0l, H0r, positives, negatives, cfg)
    params = GnnParams.init(model.batch.relations, cfg.dim, cfg.layers, cfg.seed)
    scale = 1.0 / max(1, model.terms.n_terms)
    opt = make_optimizer(cfg.optimizer, cfg.learning_rate)
    trace = []
    for epoch in range(cfg.epochs):
        loss, grad = model.loss_and_grad(params)
        if not math.isfinite(loss):
            raise TrainingError(f"graph loss became {loss} at epoch {epoch}")
        trace.append(loss)
        opt.step([params.W, params.R], [scale * grad.W, scale * grad.R])
        log.debug("graph epoch %d loss %.6f", epoch, loss)
    H = forward(model.batch, params, model.H0)
    final, _ = hinge_loss(H, model.terms, cfg.gamma, need_grad=False)
    if not math.isfinite(final):
        raise TrainingError(f"graph loss became {final} after training")
    trace.append(final)
    return GraphTrainResult(
        params,
        list(g_left.tuple_ids),
        list(g_right.tuple_ids),
        H[model.batch.tuple_rows(0)],
        H[model.batch.tuple_rows(1)],
        trace,
    )


def numeric_grad(f, params: GnnParams, h: float = 1e-5) -> GnnParams:
    out = GnnParams(np.zeros_like(params.W), np.zeros_like(params.R), params.relations)
    for name in ("W", "R"):
        arr = getattr(params, name)
        g = getattr(out, name)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            ix = it.multi_index
            old = arr[ix]
            arr[ix] = old + h
            fp = f(params)
            arr[ix] = old - h
            fm = f(params)
            arr[ix] = old
            g[ix] = (fp - fm) / (2 * h)
    return out


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    """Max elementwise ``|a - b| / max(|a| + |b|, floor)``."""
    a, b = np.ravel(a), np.ravel(b)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(a) + np.abs(b), floor)))


def toy_model(seed: int = 0, dim: int = 4, layers: int = 2, gamma: float = 1.0):
    """Two three-tuple graphs (<= 10 nodes each) with random inputs and parameters."""
    from .dataset import Dataset
    from .relgraph import mrgc

    left = Dataset.from_rows("L", ["name", "maker"], [["a", "x"], ["b", "x"], ["c", None]])
    right = Dataset.from_rows("R", ["name", "maker"], [["a", "x"], ["b", "y"], ["d", "y"]])
    gl, gr = mrgc(left), mrgc(right)
    rng = np.random.default_rng(seed)
    H0l = _normalize_rows(rng.normal(size=(gl.n_nodes, dim)))
    H0r = _normalize_rows(rng.normal(size=(gr.n_nodes, dim)))
    P = PositiveLabels(((0, 0, 1.0), (1, 1, 1.0)))
    N = NegativeLabels(((1, 0, 0), (2, 0, 0), (0, 2, 0), (0, 1, 1), (2, 1, 1), (1, 2, 1)))
    cfg = MarginLossConfig(gamma=gamma, dim=dim, layers=layers)
    model = build_model(gl, gr, H0l, H0r, P, N, cfg)
    params = GnnParams.init(model.batch.relations, dim, layers, seed)
    params.W += rng.normal(scale=0.3, size=params.W.shape)
    params.R += rng.normal(scale=0.3, size=params.R.shape)
    return model, params


def gradient_check(seed: int = 0, h: float = 1e-5, **toy) -> float:
    """Max relative error between analytic and central-difference gradients on a toy graph."""
    model, params = toy_model(seed, **toy)
    _, grad = model.loss_and_grad(params)
    num = numeric_grad(lambda p: model.loss_and_grad(p, need_grad=False)[0], params, h)
    return max(relative_error(grad.W, num.W), relative_error(grad.R, num.R))


def save_checkpoint(path: Union[str, Path], result: GraphTrainResult, config_hash: str = "") -> None:
    np.savez(
        path,
        W=result.params.W,
        R=result.params.R,
        relations=np.array(result.params.relations, dtype=object),
        left_ids=np.array([str(t) for t in result.left_ids]),
        right_ids=np.array([str(t) for t in result.right_ids]),
        h_left=result.h_left,
        h_right=result.h_right,
        loss_trace=np.array(result.loss_trace),
        config_hash=np.array(config_hash),
    )


def load_checkpoint(path: Union[str, Path]) -> GraphTrainResult:
    from .dataset import _parse_id

    z = np.load(path, allow_pickle=True)
    params = GnnParams(z["W"], z["R"], tuple(z["relations"].tolist()))
    return GraphTrainResult(
        params,
        [_parse_id(t) for t in z["left_ids"].tolist()],
        [_parse_id(t) for t in z["right_ids"].tolist()],
        z["h_left"],
        z["h_right"],
        z["loss_trace"].tolist(),
    )


def write_loss_trace(path: Union[str, Path], trace: Sequence[float], header: str = "") -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        if header:
            fh.write(f"# {header}\n")
        fh.write("epoch,loss\n")
        for e, v in enumerate(trace):
            fh.write(f"{e},{v!r}\n")
