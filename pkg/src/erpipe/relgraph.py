"""Multi-relational tuple/value graphs and the tripartite reference count model."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .dataset import Dataset, TupleId, normalize_value


@dataclass(frozen=True)
class GraphStats:
    nodes: int
    edges: int
    relations: int

    def to_json(self) -> str:
        return json.dumps({"nodes": self.nodes, "edges": self.edges, "relations": self.relations})


@dataclass(frozen=True)
class MultiRelGraph:
    """Tuple nodes occupy ids ``0..n_tuples-1``; value nodes follow.

    ``edges`` is an (E, 3) int array of (tuple node, relation index, value node).
    """

    tuple_ids: tuple
    values: tuple  # normalized value text, one per value node
    relations: tuple  # attribute names
    edges: np.ndarray

    @property
    def n_tuples(self) -> int:
        return len(self.tuple_ids)

    @property
    def n_nodes(self) -> int:
        return len(self.tuple_ids) + len(self.values)

    def value_node(self, text: str) -> int:
        return len(self.tuple_ids) + self.values.index(normalize_value(text))

    def tuple_node(self, tuple_id: TupleId) -> int:
        return self.tuple_ids.index(tuple_id)

    def neighbors(self, node: int) -> list[tuple[int, str]]:
        if node < self.n_tuples:
            mask = self.edges[:, 0] == node
            return [(int(v), self.relations[r]) for _, r, v in self.edges[mask]]
        mask = self.edges[:, 2] == node
        return [(int(t), self.relations[r]) for t, r, _ in self.edges[mask]]


def mrgc(dataset: Dataset) -> MultiRelGraph:
    """One node per tuple, one per distinct normalized value, one edge per present cell."""
    value_index: dict[str, int] = {}
    edges = []
    n = len(dataset)
    for ti, t in enumerate(dataset.tuples):
        for ai, raw in enumerate(t.values):
            if raw is None:
                continue
            v = normalize_value(raw)
            if not v:
                continue
            if v not in value_index:
                value_index[v] = len(value_index)
            edges.append((ti, ai, n + value_index[v]))
    return MultiRelGraph(
        tuple(dataset.ids),
        tuple(value_index),
        tuple(dataset.attributes) if n else (),
        np.array(edges, dtype=np.int64).reshape(-1, 3),
    )


def graph_stats(g: MultiRelGraph) -> GraphStats:
    return GraphStats(g.n_nodes, int(g.edges.shape[0]), len(g.relations))


def reference_graph(dataset: Dataset, style: str = "embdi") -> GraphStats:
    """Node/edge counts of a tripartite tuple/attribute/value construction.

    Both styles share one count model: tuple-value edges per present cell plus
    one attribute-value edge per distinct (attribute, value) occurrence.
    """
    if style not in ("embdi", "grapher"):
        raise ValueError(f"unknown reference style {style!r}")
    values = set()
    attr_values = set()
    cells = 0
    for t in dataset.tuples:
        for a, raw in zip(dataset.attributes, t.values):
            if raw is None:
                continue
            v = normalize_value(raw)
            if not v:
                continue
            cells += 1
            values.add(v)
            attr_values.add((a, v))
    m = len(dataset.attributes)
    return GraphStats(len(dataset) + m + len(values), cells + len(attr_values), m)


def export_graph(g: MultiRelGraph, triples_path: Union[str, Path], nodes_path: Union[str, Path], header: str = "") -> None:
    """Write ``tuple<TAB>relation<TAB>value`` triples and a node table; ``header`` becomes a ``#`` line."""
    with Path(nodes_path).open("w", encoding="utf-8") as fh:
        if header:
            fh.write(f"# {header}\n")
        fh.write("node\tkind\tlabel\n")
        for i, tid in enumerate(g.tuple_ids):
            fh.write(f"{i}\ttuple\t{tid}\n")
        for k, v in enumerate(g.values):
            fh.write(f"{g.n_tuples + k}\tvalue\t{v}\n")
    with Path(triples_path).open("w", encoding="utf-8") as fh:
        if header:
            fh.write(f"# {header}\n")
        for t, r, v in g.edges:
            fh.write(f"{t}\t{g.relations[r]}\t{v}\n")
