"""Pair classifier over joint sentence and graph features.

Sentence embeddings from the provider pass through a trainable square
projection; a pair is described by

    [ |Ei - Ej| ; Ei * Ej ; |hi - hj| ; hi * hj ]

and a linear map to two logits. Training minimizes softmax cross-entropy
plus ``mu`` times a cosine-embedding loss on the projected sentence pair.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .labels import NegativeLabels, PositiveLabels
from .optim import make_optimizer

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class CsflConfig:
    lambda_: float = 0.5
    mu: float = 0.2
    epochs: int = 100
    learning_rate: float = 0.01
    decision_threshold: float = 0.5
    seed: int = 0
    optimizer: str = "adam"

    def __post_init__(self):
        if not -1.0 <= self.lambda_ <= 1.0:
            raise ValueError("lambda must lie in [-1, 1]")
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError("mu must lie in [0, 1]")


@dataclass
class CsflParams:
    P: np.ndarray  # (n, n) sentence projection
    Wc: np.ndarray  # (2n + 2c, 2) classifier

    @classmethod
    def init(cls, n: int, c: int, seed: int = 0) -> "CsflParams":
        rng = np.random.default_rng(seed)
        return cls(np.eye(n) + rng.uniform(-0.01, 0.01, (n, n)), np.zeros((2 * n + 2 * c, 2)))

    def copy(self) -> "CsflParams":
        return CsflParams(self.P.copy(), self.Wc.copy())


def pair_features(
    params: CsflParams,
    E_i: np.ndarray,
    E_j: np.ndarray,
    h_i: np.ndarray,
    h_j: np.ndarray,
) -> np.ndarray:
    """Feature vector(s) for one pair or a batch of pairs (rows)."""
    E_i, E_j = np.asarray(E_i, dtype=float), np.asarray(E_j, dtype=float)
    h_i, h_j = np.asarray(h_i, dtype=float), np.asarray(h_j, dtype=float)
    n = params.P.shape[0]
    if E_i.shape != E_j.shape or E_i.shape[-1] != n:
        raise ValueError(f"sentence embeddings must have dimension {n}")
    if h_i.shape != h_j.shape:
        raise ValueError("graph embeddings differ in shape")
    if h_i.shape[-1] + n != params.Wc.shape[0] // 2:
        raise ValueError("graph dimension does not match classifier shape")
    a, b = E_i @ params.P, E_j @ params.P
    return np.concatenate([np.abs(a - b), a * b, np.abs(h_i - h_j), h_i * h_j], axis=-1)


def _log_softmax(d: np.ndarray) -> np.ndarray:
    d = np.atleast_2d(d)
    shifted = d - d.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy_loss(logits, y: int) -> float:
    return float(-_log_softmax(np.asarray(logits, dtype=float))[0, int(y)])


def match_probability(logits: np.ndarray) -> np.ndarray:
    return np.exp(_log_softmax(logits)[:, 1])


def _cos_rows(A, B):
    na = np.linalg.norm(A, axis=1)
    nb = np.linalg.norm(B, axis=1)
    ok = (na > 0) & (nb > 0)
    denom = np.where(ok, na * nb, 1.0)
    return np.where(ok, np.sum(A * B, axis=1) / denom, 0.0), na, nb, ok


def cosine_embedding_loss(E_i, E_j, y: int, lambda_: float = 0.5) -> float:
    c = _cos_rows(np.atleast_2d(np.asarray(E_i, float)), np.atleast_2d(np.asarray(E_j, float)))[0][0]
    return float(1.0 - c) if y == 1 else float(max(0.0, c - lambda_))


@dataclass
class PairData:
    """Labelled pairs as row indices into per-dataset embedding tables."""

    E_left: np.ndarray
    E_right: np.ndarray
    h_left: np.ndarray
    h_right: np.ndarray
    li: np.ndarray
    rj: np.ndarray
    y: np.ndarray

    def __len__(self):
        return len(self.y)

    def scatter(self):
        """Sparse maps summing per-pair rows back onto left/right tuples."""
        if not hasattr(self, "_scatter"):
            cols = np.arange(len(self.y))
            ones = np.ones(len(self.y))
            self._scatter = (
                sp.csr_matrix((ones, (self.li, cols)), shape=(len(self.E_left), len(self.y))),
                sp.csr_matrix((ones, (self.rj, cols)), shape=(len(self.E_right), len(self.y))),
            )
        return self._scatter


def make_pair_data(
    pairs: Sequence[tuple],
    labels: Optional[Sequence[int]],
    left_ids: Sequence,
    right_ids: Sequence,
    E_left: np.ndarray,
    E_right: np.ndarray,
    h_left: np.ndarray,
    h_right: np.ndarray,
) -> PairData:
    lpos = {t: k for k, t in enumerate(left_ids)}
    rpos = {t: k for k, t in enumerate(right_ids)}
    try:
        li = np.array([lpos[a] for a, _ in pairs], dtype=np.int64)
        rj = np.array([rpos[b] for _, b in pairs], dtype=np.int64)
    except KeyError as exc:
        raise KeyError(f"no embeddings for tuple id {exc.args[0]!r}") from None
    y = np.zeros(len(pairs), dtype=np.int64) if labels is None else np.asarray(labels, dtype=np.int64)
    return PairData(E_left, E_right, h_left, h_right, li, rj, y)


@dataclass
class LossParts:
    l1: float
    l2: float

    def total(self, mu: float) -> float:
        return self.l1 + mu * self.l2


def loss_and_grad(params: CsflParams, data: PairData, cfg: CsflConfig, need_grad: bool = True):
    """Summed ``L1 + mu * L2`` over ``data`` and its gradient w.r.t. P and Wc."""
    n = params.P.shape[0]
    PL = data.E_left @ params.P
    PR = data.E_right @ params.P
    a, b = PL[data.li], PR[data.rj]
    hl, hr = data.h_left[data.li], data.h_right[data.rj]
    diff = a - b
    F = np.concatenate([np.abs(diff), a * b, np.abs(hl - hr), hl * hr], axis=1)
    d = F @ params.Wc
    logp = _log_softmax(d)
    rows = np.arange(len(data))
    l1 = float(-np.sum(logp[rows, data.y]))

    cos, na, nb, ok = _cos_rows(a, b)
    pos = data.y == 1
    hinge = cos - cfg.lambda_
    active_neg = (~pos) & (hinge > 0)
    l2 = float(np.sum(1.0 - cos[pos]) + np.sum(hinge[active_neg]))
    parts = LossParts(l1, l2)
    if not need_grad:
        return parts, None

    dd = np.exp(logp)
    dd[rows, data.y] -= 1.0
    dWc = F.T @ dd
    dF = dd @ params.Wc.T
    sgn = np.sign(diff)
    da = dF[:, :n] * sgn + dF[:, n:2 * n] * b
    db = -dF[:, :n] * sgn + dF[:, n:2 * n] * a

    # d cos/da, d cos/db; zero rows contribute nothing
    na_ = np.where(ok, na, 1.0)[:, None]
    nb_ = np.where(ok, nb, 1.0)[:, None]
    ga = b / (na_ * nb_) - cos[:, None] * a / na_ ** 2
    gb = a / (na_ * nb_) - cos[:, None] * b / nb_ ** 2
    w = np.where(pos, -1.0, np.where(active_neg, 1.0, 0.0)) * ok
    da += cfg.mu * w[:, None] * ga
    db += cfg.mu * w[:, None] * gb

    SL, SR = data.scatter()
    dP = data.E_left.T @ (SL @ da) + data.E_right.T @ (SR @ db)
    return parts, CsflParams(dP, dWc)


@dataclass
class CollabTrainResult:
    params: CsflParams
    loss_trace: list = field(default_factory=list)  # L1 + mu * L2 per epoch
    l1_trace: list = field(default_factory=list)
    l2_trace: list = field(default_factory=list)


def train_collab(
    positives: PositiveLabels,
    negatives: NegativeLabels,
    left_ids: Sequence,
    right_ids: Sequence,
    E_left: np.ndarray,
    E_right: np.ndarray,
    h_left: np.ndarray,
    h_right: np.ndarray,
    cfg: CsflConfig = CsflConfig(),
) -> CollabTrainResult:
    """Full-batch training of the projection and classifier (Adam by default).

    Traces hold summed losses; each step uses the per-pair mean gradient.
    The last trace entry is the loss of the returned parameters.
    """
    pairs = positives.id_pairs() + negatives.id_pairs()
    if not pairs:
        raise ValueError("collaborative training needs at least one label")
    labels = [1] * len(positives) + [0] * len(negatives)
    data = make_pair_data(pairs, labels, left_ids, right_ids, E_left, E_right, h_left, h_right)
    params = CsflParams.init(E_left.shape[1], h_left.shape[1], cfg.seed)
    scale = 1.0 / len(data)
    opt = make_optimizer(cfg.optimizer, cfg.learning_rate)
    result = CollabTrainResult(params)
    for epoch in range(cfg.epochs + 1):
        parts, grad = loss_and_grad(params, data, cfg, need_grad=epoch < cfg.epochs)
        total = parts.total(cfg.mu)
        if not math.isfinite(total):
            raise TrainingError(f"collaborative loss became {total} at epoch {epoch}")
        result.loss_trace.append(total)
        result.l1_trace.append(parts.l1)
        result.l2_trace.append(parts.l2)
        if grad is None:
            break
        opt.step([params.P, params.Wc], [scale * grad.P, scale * grad.Wc])
        log.debug("collab epoch %d loss %.6f", epoch, total)
    return result


def predict(
    params: CsflParams,
    candidates,
    left_ids: Sequence,
    right_ids: Sequence,
    E_left: np.ndarray,
    E_right: np.ndarray,
    h_left: np.ndarray,
    h_right: np.ndarray,
    threshold: float = 0.5,
) -> list[tuple]:
    """``(left_id, right_id, probability, label)`` per candidate; label 1 iff probability > threshold."""
    pairs = list(candidates)
    if not pairs:
        return []
    data = make_pair_data(pairs, None, left_ids, right_ids, E_left, E_right, h_left, h_right)
    PL, PR = E_left @ params.P, E_right @ params.P
    a, b = PL[data.li], PR[data.rj]
    hl, hr = h_left[data.li], h_right[data.rj]
    F = np.concatenate([np.abs(a - b), a * b, np.abs(hl - hr), hl * hr], axis=1)
    prob = match_probability(F @ params.Wc)
    return [(l, r, float(p), int(p > threshold)) for (l, r), p in zip(pairs, prob)]


def toy_data(seed: int = 0, n: int = 4, c: int = 3) -> tuple[CsflParams, PairData]:
    rng = np.random.default_rng(seed)
    E_left, E_right = rng.normal(size=(4, n)), rng.normal(size=(5, n))
    h_left, h_right = rng.normal(size=(4, c)), rng.normal(size=(5, c))
    li = np.array([0, 1, 2, 3, 0, 1, 2])
    rj = np.array([0, 1, 2, 4, 3, 2, 0])
    y = np.array([1, 1, 1, 0, 0, 0, 0])
    params = CsflParams(rng.normal(size=(n, n)), rng.normal(scale=0.5, size=(2 * n + 2 * c, 2)))
    return params, PairData(E_left, E_right, h_left, h_right, li, rj, y)


def gradient_check(seed: int = 0, h: float = 1e-5, cfg: Optional[CsflConfig] = None) -> float:
    """Max relative error of the analytic L_c gradient against central differences."""
    from .graph_trainer import relative_error

    cfg = cfg or CsflConfig(lambda_=0.0)
    params, data = toy_data(seed)
    _, grad = loss_and_grad(params, data, cfg)
    errs = []
    for name in ("P", "Wc"):
        arr = getattr(params, name)
        num = np.zeros_like(arr)
        for ix in np.ndindex(arr.shape):
            old = arr[ix]
            arr[ix] = old + h
            fp = loss_and_grad(params, data, cfg, need_grad=False)[0].total(cfg.mu)
            arr[ix] = old - h
            fm = loss_and_grad(params, data, cfg, need_grad=False)[0].total(cfg.mu)
            arr[ix] = old
            num[ix] = (fp - fm) / (2 * h)
        errs.append(relative_error(getattr(grad, name), num))
    return max(errs)


def save_model(path: Union[str, Path], params: CsflParams, config_hash: str = "") -> None:
    """Text dump: header ``n c``, then P rows, then Wc rows."""
    n = params.P.shape[0]
    c = params.Wc.shape[0] // 2 - n
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(f"# config {config_hash}\n")
        fh.write(f"{n} {c}\n")
        for row in params.P:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")
        for row in params.Wc:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def load_model(path: Union[str, Path]) -> CsflParams:
    with Path(path).open(encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    n, c = (int(x) for x in lines[0].split())
    rows = [[float(x) for x in ln.split()] for ln in lines[1:] if ln.strip()]
    P = np.array(rows[:n])
    Wc = np.array(rows[n:n + 2 * n + 2 * c])
    if P.shape != (n, n) or Wc.shape != (2 * n + 2 * c, 2):
        raise ValueError(f"{path}: model dimensions do not match header")
    return CsflParams(P, Wc)


def write_predictions_tsv(path: Union[str, Path], predictions: Sequence[tuple]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for l, r, p, lab in predictions:
            fh.write(f"{l}\t{r}\t{p!r}\t{lab}\n")
