"""Cross-source anomaly report over matched tuple pairs."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, TextIO, Union

from .dataset import Dataset, normalize_value

CONTRADICTION = "contradiction"
ONE_SIDE_MISSING = "one-side-missing"


@dataclass(frozen=True)
class AttributeMapping:
    pairs: tuple  # (left attribute, right attribute)

    def validate(self, left: Dataset, right: Dataset) -> None:
        ls = [a for a, _ in self.pairs]
        rs = [b for _, b in self.pairs]
        if len(set(ls)) != len(ls) or len(set(rs)) != len(rs):
            raise ValueError("an attribute is mapped more than once")
        for a in ls:
            if a not in left.attributes:
                raise ValueError(f"unknown attribute {a!r} in {left.id}")
        for b in rs:
            if b not in right.attributes:
                raise ValueError(f"unknown attribute {b!r} in {right.id}")

    @classmethod
    def by_name(cls, left: Dataset, right: Dataset) -> "AttributeMapping":
        """Map attributes whose lowercase names coincide."""
        rmap = {b.lower(): b for b in right.attributes}
        return cls(tuple((a, rmap[a.lower()]) for a in left.attributes if a.lower() in rmap))


@dataclass(frozen=True)
class AnomalyRecord:
    left_id: object
    right_id: object
    left_attribute: str
    right_attribute: str
    left_value: Optional[str]
    right_value: Optional[str]
    kind: str
    jaccard: Optional[float] = None


def _id_key(x):
    return (0, x, "") if isinstance(x, int) else (1, 0, str(x))


def token_jaccard(a: str, b: str) -> float:
    ta, tb = set(a.lower().split()), set(b.lower().split())
    if not ta and not tb:
        return 1.0
    return len(ta & tb) / len(ta | tb)


def detect_anomalies(
    matches: Iterable[tuple],
    left: Dataset,
    right: Dataset,
    mapping: Optional[AttributeMapping] = None,
    jaccard_threshold: float = 0.9,
) -> list[AnomalyRecord]:
    if not 0.0 <= jaccard_threshold <= 1.0:
        raise ValueError("jaccard_threshold must lie in [0, 1]")
    if mapping is None:
        mapping = AttributeMapping.by_name(left, right)
    mapping.validate(left, right)
    cols = [(a, b, left.attributes.index(a), right.attributes.index(b)) for a, b in mapping.pairs]
    out = []
    for lid, rid in matches:
        lt, rt = left.get(lid), right.get(rid)
        for a, b, ia, ib in cols:
            lv, rv = lt.values[ia], rt.values[ib]
            if lv is None and rv is None:
                continue
            if lv is None or rv is None:
                out.append(AnomalyRecord(lid, rid, a, b, lv, rv, ONE_SIDE_MISSING))
                continue
            if normalize_value(lv) == normalize_value(rv):
                continue
            j = token_jaccard(lv, rv)
            if j < jaccard_threshold:
                out.append(AnomalyRecord(lid, rid, a, b, lv, rv, CONTRADICTION, j))
    out.sort(key=lambda r: (_id_key(r.left_id), r.left_attribute, _id_key(r.right_id)))
    return out


def write_jsonl(records: Sequence[AnomalyRecord], path: Union[str, Path], config_hash: str = "") -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in records:
            d = asdict(r)
            if config_hash:
                d["config_hash"] = config_hash
            fh.write(json.dumps(d, sort_keys=True) + "\n")


def render_table(records: Sequence[AnomalyRecord], out: TextIO, width: int = 40) -> None:
    """Plain-text table; contradiction cells are wrapped in ``!! ... !!``."""

    def cell(v, flag):
        s = "<missing>" if v is None else v
        if flag:
            s = f"!! {s} !!"
        return s if len(s) <= width else s[: width - 3] + "..."

    out.write(f"{'left':<10} {'right':<10} {'attribute':<16} {'left value':<{width}} {'right value':<{width}} kind\n")
    for r in records:
        flag = r.kind == CONTRADICTION
        out.write(
            f"{str(r.left_id):<10} {str(r.right_id):<10} {r.left_attribute:<16} "
            f"{cell(r.left_value, flag):<{width}} {cell(r.right_value, flag):<{width}} {r.kind}\n"
        )
