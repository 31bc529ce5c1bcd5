"""Pipeline configuration loaded from JSON."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

from .collab import CsflConfig
from .embeddings import EmbeddingProviderSpec
from .graph_trainer import MarginLossConfig
from .labels import RplgConfig, SnlgConfig


@dataclass(frozen=True)
class AnomalyConfig:
    jaccard_threshold: float = 0.9
    mapping: Optional[tuple] = None  # ((left attr, right attr), ...); None maps equal names


@dataclass(frozen=True)
class PipelineConfig:
    left: str = "left.csv"
    right: str = "right.csv"
    left_id_column: Optional[str] = "id"
    right_id_column: Optional[str] = "id"
    ground_truth: Optional[str] = None
    labels: Optional[str] = None  # supervised mode: precomputed label TSV replaces generation
    embedding: EmbeddingProviderSpec = EmbeddingProviderSpec()
    blocking_k: int = 20
    rplg: RplgConfig = RplgConfig()
    snlg: SnlgConfig = SnlgConfig()
    margin_loss: MarginLossConfig = MarginLossConfig()
    csfl: CsflConfig = CsflConfig()
    graph_features: bool = True  # False zeroes graph embeddings in the classifier
    anomaly: AnomalyConfig = AnomalyConfig()
    seed: int = 0
    output_dir: str = "out"
    threads: int = 1

    def __post_init__(self):
        if self.blocking_k < 1:
            raise ValueError("blocking_k must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    def resolve(self, base: Union[str, Path]) -> "PipelineConfig":
        """Make relative file paths relative to ``base`` (the config file's directory)."""
        base = Path(base)

        def fix(p):
            if p is None or Path(p).is_absolute():
                return p
            return str(base / p)

        emb = self.embedding
        if emb.path is not None:
            emb = dataclasses.replace(emb, path=fix(emb.path))
        return dataclasses.replace(
            self,
            left=fix(self.left),
            right=fix(self.right),
            ground_truth=fix(self.ground_truth),
            labels=fix(self.labels),
            embedding=emb,
            output_dir=fix(self.output_dir),
        )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["csfl"]["lambda"] = d["csfl"].pop("lambda_")
        return d

    def config_hash(self) -> str:
        """Hash of everything that affects results (not paths of outputs or thread count)."""
        d = self.to_dict()
        for k in ("output_dir", "threads"):
            d.pop(k)
        for k in ("left", "right", "ground_truth", "labels"):
            if d[k] is not None:
                d[k] = Path(d[k]).name
        blob = json.dumps(d, sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_NESTED = {
    "embedding": EmbeddingProviderSpec,
    "rplg": RplgConfig,
    "snlg": SnlgConfig,
    "margin_loss": MarginLossConfig,
    "csfl": CsflConfig,
    "anomaly": AnomalyConfig,
}


def _build(cls, data: dict, where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    data = dict(data)
    if cls is CsflConfig and "lambda" in data:
        data["lambda_"] = data.pop("lambda")
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"unknown key(s) in {where}: {sorted(unknown)}")
    if cls is EmbeddingProviderSpec and "ngrams" in data:
        data["ngrams"] = tuple(data["ngrams"])
    if cls is AnomalyConfig and data.get("mapping") is not None:
        data["mapping"] = tuple(tuple(p) for p in data["mapping"])
    return cls(**data)


def config_from_dict(data: dict[str, Any]) -> PipelineConfig:
    data = dict(data)
    for key, cls in _NESTED.items():
        if key in data:
            data[key] = _build(cls, data[key], key)
    return _build(PipelineConfig, data, "config")


def load_config(path: Union[str, Path]) -> PipelineConfig:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        data = json.load(fh)
    return config_from_dict(data).resolve(path.parent)


def save_config(cfg: PipelineConfig, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, default=list) + "\n", encoding="utf-8")
