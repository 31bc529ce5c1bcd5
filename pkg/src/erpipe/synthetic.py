"""Seeded product-catalogue pairs with planted matches and controlled noise."""
from __future__ import annotations

import random
import string
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from .blocking import write_pairs_tsv
from .dataset import Dataset, write_csv

ATTRIBUTES = ("title", "manufacturer", "category", "price")
_ALPHABET = string.ascii_lowercase + string.digits


@dataclass(frozen=True)
class SyntheticSpec:
    left_size: int = 500
    right_size: int = 500
    matches: int = 300
    typo_rate: float = 0.1
    swap_rate: float = 0.0
    delete_rate: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.matches > min(self.left_size, self.right_size):
            raise ValueError("match count exceeds the smaller dataset")
        if min(self.left_size, self.right_size, self.matches) < 0:
            raise ValueError("sizes must be non-negative")
        for name in ("typo_rate", "swap_rate", "delete_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


def _vocabulary(size: int, rng: random.Random, lo: int = 2, hi: int = 4) -> list[str]:
    cons, vow = "bcdfghjklmnprstvwz", "aeiou"
    words: set[str] = set()
    while len(words) < size:
        words.add("".join(rng.choice(cons) + rng.choice(vow) for _ in range(rng.randint(lo, hi))))
    return sorted(words)


class _Catalogue:
    def __init__(self, seed: int):
        rng = random.Random(f"vocab-{seed}")
        self.rng = random.Random(seed)
        self.words = _vocabulary(600, rng)
        self.brands = [w + rng.choice(["", " inc", " ltd", " media", " labs"]) for w in _vocabulary(60, rng, 2, 3)]
        self.categories = _vocabulary(15, rng, 2, 3)
        self.seen: set = set()

    def entity(self) -> list[str]:
        rng = self.rng
        while True:
            n_words = rng.randint(2, 4)
            code = "".join(rng.choice(string.ascii_lowercase) for _ in range(2)) + str(rng.randint(100, 9999))
            title = " ".join(rng.sample(self.words, n_words) + [code])
            row = [title, rng.choice(self.brands), rng.choice(self.categories), f"{rng.uniform(5, 500):.2f}"]
            if row[0] not in self.seen:
                self.seen.add(row[0])
                return row


def _typo(text: str, rate: float, rng: random.Random) -> str:
    out = []
    for ch in text:
        if rng.random() >= rate:
            out.append(ch)
            continue
        op = rng.random()
        if op < 0.5:
            out.append(rng.choice([c for c in _ALPHABET if c != ch]))
        elif op < 0.75:
            pass  # deletion
        else:
            out.append(ch)
            out.append(rng.choice(_ALPHABET))
    return "".join(out)


def _perturb(row: list, spec: SyntheticSpec, rng: random.Random) -> list[Optional[str]]:
    row = list(row)
    if spec.swap_rate and rng.random() < spec.swap_rate:
        # misplace another cell's value into the title, as extraction errors do
        k = rng.randrange(1, len(row))
        row[0] = f"{row[k]} {row[0]}"
        row[k] = None
    out: list[Optional[str]] = []
    for v in row:
        if v is None or rng.random() < spec.delete_rate:
            out.append(None)
            continue
        noisy = _typo(v, spec.typo_rate, rng).strip()
        out.append(noisy or v)
    return out


def make_synthetic(spec: SyntheticSpec) -> tuple[Dataset, Dataset, list[tuple[str, str]]]:
    """Left table, right table and the list of true (left_id, right_id) matches."""
    cat = _Catalogue(spec.seed)
    rng = random.Random(spec.seed + 1)
    left_rows = [cat.entity() for _ in range(spec.left_size)]
    left_ids = [f"L{i}" for i in range(spec.left_size)]
    matched = sorted(rng.sample(range(spec.left_size), spec.matches))
    right_src: list = [(i, _perturb(left_rows[i], spec, rng)) for i in matched]
    right_src += [(None, cat.entity()) for _ in range(spec.right_size - spec.matches)]
    rng.shuffle(right_src)
    right_ids = [f"R{j}" for j in range(spec.right_size)]
    truth = sorted(
        ((left_ids[i], right_ids[j]) for j, (i, _) in enumerate(right_src) if i is not None),
        key=lambda p: int(p[0][1:]),
    )
    left = Dataset.from_rows("left", ATTRIBUTES, left_rows, left_ids)
    right = Dataset.from_rows("right", ATTRIBUTES, [r for _, r in right_src], right_ids)
    return left, right, truth


def write_synthetic(spec: SyntheticSpec, out_dir: Union[str, Path]) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    left, right, truth = make_synthetic(spec)
    paths = {"left": out / "left.csv", "right": out / "right.csv", "truth": out / "truth.tsv"}
    write_csv(left, paths["left"])
    write_csv(right, paths["right"])
    write_pairs_tsv(truth, paths["truth"])
    return paths


def levenshtein(a: str, b: str) -> int:
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def edit_fraction(left: Dataset, right: Dataset, truth) -> float:
    """Character edits per original character over cells present on both sides."""
    edits = chars = 0
    for a, b in truth:
        for u, v in zip(left.get(a).values, right.get(b).values):
            if u is None or v is None:
                continue
            edits += levenshtein(u, v)
            chars += len(u)
    return edits / chars if chars else 0.0
