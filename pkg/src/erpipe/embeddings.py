"""Tuple/value embeddings and the cross-dataset similarity matrix."""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .dataset import Dataset, TupleId, serialize_all

# above this many entries the similarity matrix is streamed in row blocks
DENSE_LIMIT = 10 ** 8


@dataclass(frozen=True)
class EmbeddingProviderSpec:
    kind: str = "hashed-ngram"
    dimension: int = 256
    ngrams: tuple[int, ...] = (2, 3, 4)
    seed: int = 0
    path: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("hashed-ngram", "file"):
            raise ValueError(f"unknown provider kind {self.kind!r}")
        if self.dimension <= 0:
            raise ValueError("dimension must be positive")
        if self.kind == "file" and not self.path:
            raise ValueError("file provider needs a path")


def _l2_normalize(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v


class HashedNgramEncoder:
    """Character n-gram term frequencies hashed into a fixed number of buckets."""

    def __init__(self, dimension: int, ngrams: Sequence[int] = (2, 3, 4), seed: int = 0):
        self.dimension = dimension
        self.ngrams = tuple(ngrams)
        self._key = seed.to_bytes(8, "little", signed=True)
        self._cache: dict[str, int] = {}

    def _bucket(self, gram: str) -> int:
        b = self._cache.get(gram)
        if b is None:
            digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8, key=self._key).digest()
            b = int.from_bytes(digest, "little") % self.dimension
            self._cache[gram] = b
        return b

    def __call__(self, text: str) -> np.ndarray:
        v = np.zeros(self.dimension)
        for segment in value_segments(text):
            segment = f" {segment.lower()} "
            for n in self.ngrams:
                for i in range(len(segment) - n + 1):
                    v[self._bucket(segment[i:i + n])] += 1.0
        return _l2_normalize(v)


_MARKERS = re.compile(r"\[(?:COL|VAL|SEP|CLS)\]")


def value_segments(text: str) -> list[str]:
    """The value parts of serialized text; plain text is one segment.

    Markers and attribute names are shared by every tuple of a dataset, so
    they carry no signal and would dominate the n-gram counts.
    """
    if "[VAL]" not in text:
        text = _MARKERS.sub(" ", text).strip()
        return [text] if text else []
    out = []
    for block in text.split("[COL]"):
        if "[VAL]" not in block:
            continue
        value = block.split("[VAL]", 1)[1]
        value = _MARKERS.sub(" ", value).strip()
        if value:
            out.append(value)
    return out


def read_embedding_file(path: Union[str, Path]) -> dict[str, np.ndarray]:
    """Parse ``<count> <dim>`` header followed by ``<id> <f1> ... <fdim>`` lines."""
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: bad header, expected '<count> <dimension>'")
        count, dim = int(header[0]), int(header[1])
        vectors: dict[str, np.ndarray] = {}
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != dim + 1:
                raise ValueError(f"{path}:{lineno}: expected {dim} floats")
            vectors[parts[0]] = np.array([float(x) for x in parts[1:]])
    if len(vectors) != count:
        raise ValueError(f"{path}: header says {count} vectors, found {len(vectors)}")
    return vectors


def write_embedding_file(path: Union[str, Path], ids: Sequence[TupleId], vectors: np.ndarray) -> None:
    vectors = np.asarray(vectors, dtype=float)
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(f"{len(ids)} {vectors.shape[1]}\n")
        for tid, row in zip(ids, vectors):
            # repr round-trips doubles exactly
            fh.write(str(tid) + " " + " ".join(repr(float(x)) for x in row) + "\n")


class EmbeddingProvider:
    def __init__(self, spec: EmbeddingProviderSpec):
        self.spec = spec
        self._encoder = None
        self._table = None
        if spec.kind == "hashed-ngram":
            self._encoder = HashedNgramEncoder(spec.dimension, spec.ngrams, spec.seed)
        else:
            self._table = read_embedding_file(spec.path)
            dims = {v.shape[0] for v in self._table.values()}
            if dims and dims != {spec.dimension}:
                raise ValueError(f"{spec.path}: vectors have dimension {dims}, spec says {spec.dimension}")

    @property
    def dimension(self) -> int:
        return self.spec.dimension

    def embed_text(self, text: str) -> np.ndarray:
        if self._encoder is None:
            raise TypeError("file provider embeds by tuple id, not text")
        return self._encoder(text)

    def lookup(self, tuple_id: TupleId) -> np.ndarray:
        try:
            v = self._table[str(tuple_id)]
        except KeyError:
            raise KeyError(f"embedding file has no vector for id {tuple_id!r}") from None
        return _l2_normalize(np.array(v, dtype=float))

    def embed_dataset(self, dataset: Dataset) -> np.ndarray:
        """One row per tuple, in dataset order."""
        if self._table is not None:
            rows = [self.lookup(t) for t in dataset.ids]
        else:
            rows = [self._encoder(s) for s in serialize_all(dataset)]
        if not rows:
            return np.zeros((0, self.dimension))
        return np.vstack(rows)


def embed_text(provider: Union[EmbeddingProvider, EmbeddingProviderSpec], text: str) -> np.ndarray:
    if isinstance(provider, EmbeddingProviderSpec):
        provider = EmbeddingProvider(provider)
    return provider.embed_text(text)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def cosine_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Pairwise cosine of rows; zero rows give 0."""
    na = np.linalg.norm(A, axis=1, keepdims=True)
    nb = np.linalg.norm(B, axis=1, keepdims=True)
    A = np.divide(A, na, out=np.zeros_like(A, dtype=float), where=na > 0)
    B = np.divide(B, nb, out=np.zeros_like(B, dtype=float), where=nb > 0)
    return A @ B.T


def _top_desc(values: np.ndarray, k: int, axis: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Top-k by descending value, ties to the smaller index."""
    order = np.argsort(-values, axis=axis, kind="stable")
    order = np.take(order, np.arange(min(k, values.shape[axis])), axis=axis)
    return order, np.take_along_axis(values, order, axis=axis)


class SimilarityMatrix:
    """Dense |T| x |T'| matrix of clamped cosine similarities."""

    def __init__(self, values: np.ndarray, left_ids: Sequence[TupleId], right_ids: Sequence[TupleId]):
        self.values = np.asarray(values, dtype=float)
        self.left_ids = list(left_ids)
        self.right_ids = list(right_ids)
        assert self.values.shape == (len(self.left_ids), len(self.right_ids))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def row_top(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        return _top_desc(self.values, k, axis=1)

    def col_top(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        idx, vals = _top_desc(self.values, k, axis=0)
        return idx.T, vals.T


@dataclass
class TopKSimilarity:
    """Streaming stand-in for a too-large matrix: only per-row/column top-k kept."""

    left_ids: list
    right_ids: list
    k: int
    row_idx: np.ndarray
    row_val: np.ndarray
    col_idx: np.ndarray
    col_val: np.ndarray
    shape: tuple[int, int] = field(default=(0, 0))

    def row_top(self, k: int):
        if k > self.k and k < self.shape[1]:
            raise ValueError(f"only top-{self.k} retained per row")
        return self.row_idx[:, :k], self.row_val[:, :k]

    def col_top(self, k: int):
        if k > self.k and k < self.shape[0]:
            raise ValueError(f"only top-{self.k} retained per column")
        return self.col_idx[:, :k], self.col_val[:, :k]


def similarity_from_embeddings(A: np.ndarray, B: np.ndarray, left_ids, right_ids) -> SimilarityMatrix:
    return SimilarityMatrix(np.clip(cosine_matrix(A, B), 0.0, 1.0), left_ids, right_ids)


def streamed_topk(A: np.ndarray, B: np.ndarray, left_ids, right_ids, k: int, block: int = 1024) -> TopKSimilarity:
    """Row-block pass keeping row and column top-k; results match the dense path."""
    n, m = A.shape[0], B.shape[0]
    kr, kc = min(k, m), min(k, n)
    row_idx = np.zeros((n, kr), dtype=np.int64)
    row_val = np.zeros((n, kr))
    col_idx = np.zeros((m, 0), dtype=np.int64)
    col_val = np.zeros((m, 0))
    for start in range(0, n, block):
        S = np.clip(cosine_matrix(A[start:start + block], B), 0.0, 1.0)
        ri, rv = _top_desc(S, kr, axis=1)
        row_idx[start:start + S.shape[0]] = ri
        row_val[start:start + S.shape[0]] = rv
        ci, cv = _top_desc(S, kc, axis=0)
        # merge with running column best; earlier blocks hold smaller row indices
        cand_idx = np.concatenate([col_idx, ci.T + start], axis=1)
        cand_val = np.concatenate([col_val, cv.T], axis=1)
        # stable sort keeps older (smaller-index) entries first among ties
        order = np.argsort(-cand_val, axis=1, kind="stable")[:, :kc]
        col_idx = np.take_along_axis(cand_idx, order, axis=1)
        col_val = np.take_along_axis(cand_val, order, axis=1)
    return TopKSimilarity(list(left_ids), list(right_ids), k, row_idx, row_val, col_idx, col_val, (n, m))


def build_similarity_matrix(
    provider: Union[EmbeddingProvider, EmbeddingProviderSpec],
    left: Dataset,
    right: Dataset,
    keep_k: Optional[int] = None,
):
    """Clamped cosine similarity between every tuple of ``left`` and ``right``.

    Returns a dense :class:`SimilarityMatrix`, or a :class:`TopKSimilarity`
    when the product exceeds ``DENSE_LIMIT`` entries (``keep_k`` required).
    """
    if isinstance(provider, EmbeddingProviderSpec):
        provider = EmbeddingProvider(provider)
    A = provider.embed_dataset(left)
    B = provider.embed_dataset(right)
    if len(left) * len(right) > DENSE_LIMIT:
        if keep_k is None:
            raise ValueError("matrix too large for dense mode; pass keep_k")
        return streamed_topk(A, B, left.ids, right.ids, keep_k)
    return similarity_from_embeddings(A, B, left.ids, right.ids)
