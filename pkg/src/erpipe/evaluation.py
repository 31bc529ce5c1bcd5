"""Match metrics, pseudo-label quality and 3:1:1 candidate splits."""
from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Union

from .blocking import read_pairs_tsv


@dataclass(frozen=True)
class GroundTruth:
    matches: frozenset

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple]) -> "GroundTruth":
        return cls(frozenset((a, b) for a, b in pairs))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "GroundTruth":
        return cls.from_pairs(read_pairs_tsv(path))

    def restrict(self, universe: Iterable[tuple]) -> "GroundTruth":
        return GroundTruth(self.matches & frozenset(universe))

    def __len__(self):
        return len(self.matches)

    def __contains__(self, pair):
        return pair in self.matches


def _ratio(num: int, den: int) -> tuple[float, bool]:
    return (num / den, False) if den > 0 else (0.0, True)


@dataclass(frozen=True)
class MetricsReport:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: Optional[int] = None
    undefined: tuple = ()  # names of metrics whose denominator was zero

    def to_dict(self) -> dict:
        d = asdict(self)
        d["undefined"] = list(self.undefined)
        return d


def f1_score(precision: float, recall: float) -> float:
    return 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0


def score_predictions(pred: Iterable[tuple], truth: GroundTruth, universe: Optional[Iterable[tuple]] = None) -> MetricsReport:
    pred = set(pred)
    gold = set(truth.matches)
    tp = len(pred & gold)
    fp = len(pred - gold)
    fn = len(gold - pred)
    tn = None
    if universe is not None:
        tn = len(set(universe) - pred - gold)
    undefined = []
    p, bad = _ratio(tp, tp + fp)
    if bad:
        undefined.append("precision")
    r, bad = _ratio(tp, tp + fn)
    if bad:
        undefined.append("recall")
    return MetricsReport(p, r, f1_score(p, r), tp, fp, fn, tn, tuple(undefined))


@dataclass(frozen=True)
class LabelQualityReport:
    """Positives: tp correct, fn wrong. Negatives: tn correct, fp actually matches."""

    tp: int
    fn: int
    tpr: float
    tn: int
    fp: int
    tnr: float
    undefined: tuple = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["undefined"] = list(self.undefined)
        return d


def score_labels(positives, negatives, truth: GroundTruth) -> LabelQualityReport:
    pos = positives.id_pairs()
    neg = negatives.id_pairs()
    tp = sum(p in truth for p in pos)
    fn = len(pos) - tp
    fp = sum(p in truth for p in neg)
    tn = len(neg) - fp
    undefined = []
    tpr, bad = _ratio(tp, tp + fn)
    if bad:
        undefined.append("tpr")
    tnr, bad = _ratio(tn, tn + fp)
    if bad:
        undefined.append("tnr")
    return LabelQualityReport(tp, fn, tpr, tn, fp, tnr, tuple(undefined))


@dataclass(frozen=True)
class Split:
    train: tuple
    validation: tuple
    test: tuple

    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.validation), len(self.test)


def split_candidates(candidates: Iterable[tuple], seed: int = 0) -> Split:
    """Seeded 3:1:1 partition; validation and test each get floor(n/5), the rest is train."""
    pairs = list(candidates)
    n = len(pairs)
    if n < 5:
        raise ValueError(f"need at least 5 candidates to split, got {n}")
    order = list(range(n))
    random.Random(seed).shuffle(order)
    k = n // 5
    val = tuple(pairs[i] for i in order[:k])
    test = tuple(pairs[i] for i in order[k:2 * k])
    train = tuple(pairs[i] for i in order[2 * k:])
    return Split(train, val, test)


def write_report(path: Union[str, Path], report: dict) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
