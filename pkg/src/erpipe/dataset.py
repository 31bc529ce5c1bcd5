"""Relational datasets: loading, validation and sentence serialization."""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

TupleId = Union[str, int]

COL = "[COL]"
VAL = "[VAL]"
SEP = "[SEP]"
CLS = "[CLS]"

MISSING_SENTINELS = frozenset({"", "NULL", "null", "NaN"})

_WS = re.compile(r"\s+")


class DatasetError(ValueError):
    """Raised when a dataset file or structure is invalid."""


def normalize_whitespace(text: str) -> str:
    return _WS.sub(" ", text).strip()


def normalize_value(text: str) -> str:
    """Lowercase + whitespace collapse; the key used for value equality."""
    return normalize_whitespace(text).lower()


def _as_missing(cell: Optional[str]) -> Optional[str]:
    if cell is None:
        return None
    if cell.strip() in MISSING_SENTINELS:
        return None
    return cell


@dataclass(frozen=True)
class Tuple:
    tuple_id: TupleId
    values: tuple[Optional[str], ...]

    def present(self) -> int:
        return sum(v is not None for v in self.values)


@dataclass(frozen=True)
class Dataset:
    id: str
    attributes: tuple[str, ...]
    tuples: tuple[Tuple, ...]
    _index: dict = field(default=None, compare=False, repr=False)  # type: ignore[assignment]

    def __post_init__(self):
        if len(set(self.attributes)) != len(self.attributes):
            raise DatasetError(f"{self.id}: duplicate attribute names {list(self.attributes)}")
        index = {}
        for pos, t in enumerate(self.tuples):
            if len(t.values) != len(self.attributes):
                raise DatasetError(
                    f"{self.id}: tuple {t.tuple_id!r} has {len(t.values)} values, "
                    f"expected {len(self.attributes)}"
                )
            if t.tuple_id in index:
                raise DatasetError(f"{self.id}: duplicate tuple id {t.tuple_id!r}")
            index[t.tuple_id] = pos
        object.__setattr__(self, "_index", index)

    @classmethod
    def from_rows(
        cls,
        id: str,
        attributes: Sequence[str],
        rows: Sequence[Sequence[Optional[str]]],
        ids: Optional[Sequence[TupleId]] = None,
    ) -> "Dataset":
        if ids is None:
            ids = list(range(len(rows)))
        tuples = tuple(
            Tuple(tid, tuple(_as_missing(v) for v in row)) for tid, row in zip(ids, rows)
        )
        return cls(id, tuple(attributes), tuples)

    def __len__(self) -> int:
        return len(self.tuples)

    @property
    def ids(self) -> list[TupleId]:
        return [t.tuple_id for t in self.tuples]

    def position(self, tuple_id: TupleId) -> int:
        try:
            return self._index[tuple_id]
        except KeyError:
            raise KeyError(f"{self.id}: unknown tuple id {tuple_id!r}") from None

    def get(self, tuple_id: TupleId) -> Tuple:
        return self.tuples[self.position(tuple_id)]

    def value(self, tuple_id: TupleId, attribute: str) -> Optional[str]:
        return self.get(tuple_id).values[self.attributes.index(attribute)]


def _parse_id(raw: str) -> TupleId:
    return int(raw) if re.fullmatch(r"-?\d+", raw) else raw


def load_csv(path: Union[str, Path], id_column: Optional[str] = None, name: Optional[str] = None) -> Dataset:
    """Load a header-first UTF-8 CSV file.

    Empty cells and the literals NULL/null/NaN become missing values. When
    ``id_column`` is given it supplies the tuple ids and is dropped from the
    attributes; otherwise ids are 0-based row indices.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        text = fh.read()
    # csv silently swallows an unterminated quote to EOF; catch it up front.
    if _unbalanced_quotes(text):
        raise DatasetError(f"{path}: malformed CSV (unbalanced quotes)")
    try:
        rows = list(csv.reader(text.splitlines(keepends=True), strict=True))
    except csv.Error as exc:
        raise DatasetError(f"{path}: malformed CSV ({exc})") from exc
    rows = [r for r in rows if r]
    if not rows:
        raise DatasetError(f"{path}: missing header row")
    header = [h.strip() for h in rows[0]]
    seen = set()
    for h in header:
        if h in seen:
            raise DatasetError(f"{path}: duplicate header name {h!r}")
        seen.add(h)
    body = rows[1:]
    for lineno, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise DatasetError(f"{path}: row {lineno} has {len(r)} cells, header has {len(header)}")

    if id_column is not None:
        if id_column not in header:
            raise DatasetError(f"{path}: id column {id_column!r} not in header")
        k = header.index(id_column)
        ids = [_parse_id(r[k].strip()) for r in body]
        attributes = header[:k] + header[k + 1:]
        body = [r[:k] + r[k + 1:] for r in body]
    else:
        ids = list(range(len(body)))
        attributes = header
    try:
        return Dataset.from_rows(name or path.stem, attributes, body, ids)
    except DatasetError as exc:
        raise DatasetError(f"{path}: {exc}") from exc


def _unbalanced_quotes(text: str) -> bool:
    in_quotes = False
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == '"':
            if in_quotes and i + 1 < n and text[i + 1] == '"':
                i += 2
                continue
            in_quotes = not in_quotes
        i += 1
    return in_quotes


def write_csv(dataset: Dataset, path: Union[str, Path], id_column: Optional[str] = "id") -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        header = list(dataset.attributes)
        if id_column is not None:
            header = [id_column] + header
        w.writerow(header)
        for t in dataset.tuples:
            row = ["" if v is None else v for v in t.values]
            if id_column is not None:
                row = [str(t.tuple_id)] + row
            w.writerow(row)


def serialize_tuple(dataset: Dataset, e: Tuple) -> str:
    """``[COL] a1 [VAL] v1 ... [COL] am [VAL] vm``, skipping missing cells."""
    parts = []
    for attr, value in zip(dataset.attributes, e.values):
        if value is None:
            continue
        value = normalize_whitespace(value)
        if not value:
            continue
        parts.append(f"{COL} {attr} {VAL} {value}")
    return " ".join(parts)


def serialize_pair(left: str, right: str) -> str:
    return " ".join(p for p in (CLS, left, SEP, right) if p)


def serialize_all(dataset: Dataset) -> list[str]:
    return [serialize_tuple(dataset, t) for t in dataset.tuples]
