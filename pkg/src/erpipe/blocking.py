"""Bidirectional top-k blocking over the similarity matrix."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Union

DEFAULT_K = 20


@dataclass(frozen=True)
class CandidateSet:
    pairs: tuple  # sorted (left_id, right_id) tuples
    k: int

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __contains__(self, pair) -> bool:
        return pair in self._set

    @property
    def _set(self) -> frozenset:
        s = self.__dict__.get("_cached_set")
        if s is None:
            s = frozenset(self.pairs)
            object.__setattr__(self, "_cached_set", s)
        return s


def block_topk(M, k: int = DEFAULT_K) -> CandidateSet:
    """Pairs where either side is among the other's ``k`` most similar tuples."""
    if k < 1:
        raise ValueError("k must be >= 1")
    n, m = M.shape
    found: set[tuple[int, int]] = set()
    if n and m:
        ri, _ = M.row_top(k)
        for i in range(n):
            found.update((i, int(j)) for j in ri[i])
        ci, _ = M.col_top(k)
        for j in range(m):
            found.update((int(i), j) for i in ci[j])
    pairs = sorted(found)
    return CandidateSet(tuple((M.left_ids[i], M.right_ids[j]) for i, j in pairs), k)


def write_pairs_tsv(pairs, path: Union[str, Path]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for left, right in pairs:
            fh.write(f"{left}\t{right}\n")


def read_pairs_tsv(path: Union[str, Path]) -> list[tuple]:
    from .dataset import _parse_id

    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            out.append((_parse_id(parts[0]), _parse_id(parts[1])))
    return out
