"""Automatic pseudo-label generation.

Positives are mutual nearest neighbours whose best-vs-second-best margin
clears ``theta`` on both sides. Negatives replace one side of each positive
with near (but not nearest) neighbours from that side's own dataset.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .dataset import TupleId, _parse_id
from .embeddings import cosine_matrix


@dataclass(frozen=True)
class RplgConfig:
    theta: float = 0.03

    def __post_init__(self):
        if self.theta < 0:
            raise ValueError("theta must be >= 0")


@dataclass(frozen=True)
class SnlgConfig:
    epsilon: int = 10
    skip_top: int = 2

    def __post_init__(self):
        if self.epsilon < 1:
            raise ValueError("epsilon must be >= 1")
        if self.skip_top < 0:
            raise ValueError("skip_top must be >= 0")


@dataclass(frozen=True)
class PositiveLabels:
    pairs: tuple  # (left_id, right_id, score)

    def __len__(self):
        return len(self.pairs)

    def id_pairs(self) -> list[tuple]:
        return [(a, b) for a, b, _ in self.pairs]


@dataclass(frozen=True)
class NegativeLabels:
    pairs: tuple  # (left_id, right_id, source positive index)

    def __len__(self):
        return len(self.pairs)

    def id_pairs(self) -> list[tuple]:
        return [(a, b) for a, b, _ in self.pairs]


def rplg(M, cfg: RplgConfig = RplgConfig()) -> PositiveLabels:
    n, m = M.shape
    if n == 0 or m == 0:
        return PositiveLabels(())
    ri, rv = M.row_top(2)
    ci, cv = M.col_top(2)
    out = []
    for i in range(n):
        j = int(ri[i, 0])
        if int(ci[j, 0]) != i:
            continue
        best = rv[i, 0]
        # a missing runner-up counts as similarity 0
        second_row = rv[i, 1] if rv.shape[1] > 1 else 0.0
        second_col = cv[j, 1] if cv.shape[1] > 1 else 0.0
        if best - second_row >= cfg.theta and cv[j, 0] - second_col >= cfg.theta:
            out.append((M.left_ids[i], M.right_ids[j], float(best)))
    return PositiveLabels(tuple(out))


def neighbor_ranks(E: np.ndarray, rows: Sequence[int]) -> np.ndarray:
    """For each query row, all tuple positions of ``E`` ordered by descending cosine."""
    S = cosine_matrix(E[list(rows)], E)
    return np.argsort(-S, axis=1, kind="stable")


def snlg(
    left_emb: np.ndarray,
    right_emb: np.ndarray,
    left_ids: Sequence[TupleId],
    right_ids: Sequence[TupleId],
    positives: PositiveLabels,
    cfg: SnlgConfig = SnlgConfig(),
) -> NegativeLabels:
    """Swap each side of every positive for its epsilon nearest same-dataset neighbours.

    The ``skip_top`` closest tuples (the tuple itself plus its nearest
    near-duplicate under the default) are passed over before taking ``epsilon``.
    """
    if len(positives) == 0:
        raise ValueError("snlg needs at least one positive label")
    lpos = {t: i for i, t in enumerate(left_ids)}
    rpos = {t: i for i, t in enumerate(right_ids)}
    plist = positives.id_pairs()
    li = [lpos[a] for a, _ in plist]
    rj = [rpos[b] for _, b in plist]
    lo, hi = cfg.skip_top, cfg.skip_top + cfg.epsilon
    left_nn = neighbor_ranks(left_emb, li)[:, lo:hi]
    right_nn = neighbor_ranks(right_emb, rj)[:, lo:hi]

    pset = set(plist)
    seen: set = set()
    out = []
    for k, (a, b) in enumerate(plist):
        cands = [(left_ids[x], b) for x in left_nn[k]] + [(a, right_ids[y]) for y in right_nn[k]]
        for pair in cands:
            if pair in pset or pair in seen:
                continue
            seen.add(pair)
            out.append((pair[0], pair[1], k))
    return NegativeLabels(tuple(out))


def write_labels_tsv(
    positives: PositiveLabels,
    negatives: NegativeLabels,
    path: Union[str, Path],
    header: str = "",
) -> None:
    """``left<TAB>right<TAB>1`` per positive, ``left<TAB>right<TAB>0<TAB>source`` per negative.

    ``source`` is the index of the positive a negative was derived from.
    """
    with Path(path).open("w", encoding="utf-8") as fh:
        if header:
            fh.write(f"# {header}\n")
        for a, b in positives.id_pairs():
            fh.write(f"{a}\t{b}\t1\n")
        for a, b, src in negatives.pairs:
            fh.write(f"{a}\t{b}\t0\t{src}\n")


def read_labels_tsv(path: Union[str, Path]) -> tuple[PositiveLabels, NegativeLabels]:
    """Read ``left<TAB>right<TAB>label[<TAB>source]`` rows; ``#`` lines are comments.

    Negatives without a source column are attributed to the positive sharing
    their right id, else their left id, else the first positive.
    """
    pos, neg = [], []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) not in (3, 4) or parts[2] not in ("0", "1"):
                raise ValueError(f"{path}:{lineno}: expected left<TAB>right<TAB>0|1")
            pair = (_parse_id(parts[0]), _parse_id(parts[1]))
            if parts[2] == "1":
                pos.append(pair)
            else:
                neg.append((pair, int(parts[3]) if len(parts) == 4 else None))
    by_left = {a: k for k, (a, _) in reversed(list(enumerate(pos)))}
    by_right = {b: k for k, (_, b) in reversed(list(enumerate(pos)))}
    negs = []
    for (a, b), src in neg:
        if src is None:
            src = by_right.get(b, by_left.get(a, 0))
        negs.append((a, b, src))
    return PositiveLabels(tuple((a, b, 1.0) for a, b in pos)), NegativeLabels(tuple(negs))
