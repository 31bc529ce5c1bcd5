"""Pipeline stages. Each reads earlier artifacts from the output directory and writes its own."""
from __future__ import annotations

import contextlib
import json
import logging
import os
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import anomaly as anomaly_mod
from . import collab, graph_trainer
from .blocking import block_topk, read_pairs_tsv
from .config import PipelineConfig
from .dataset import Dataset, _parse_id, load_csv
from .embeddings import EmbeddingProvider, EmbeddingProviderSpec, SimilarityMatrix, similarity_from_embeddings
from .evaluation import GroundTruth, score_labels, score_predictions, split_candidates, write_report
from .labels import read_labels_tsv, rplg, snlg, write_labels_tsv
from .relgraph import export_graph, graph_stats, mrgc, reference_graph

log = logging.getLogger(__name__)

ARTIFACTS = {
    "ingest": ["ingest.json"],
    "embed": ["embeddings.npz"],
    "block": ["candidates.tsv"],
    "label": ["labels.tsv"],
    "graph": ["graph_stats.json", "graph_left.tsv", "graph_left_nodes.tsv", "graph_right.tsv", "graph_right_nodes.tsv"],
    "train-graph": ["graph_model.npz", "graph_loss.csv"],
    "train-collab": ["collab_model.txt", "collab_loss.csv"],
    "predict": ["predictions.tsv"],
    "eval": ["report.json"],
    "anomaly": ["anomalies.jsonl"],
}


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


class HashMismatch(ValueError):
    pass


@contextlib.contextmanager
def _artifact(path: Path):
    """Yield a ``.partial`` path that is renamed to ``path`` only on success."""
    partial = path.with_name(path.name + ".partial")
    yield partial
    os.replace(partial, path)


def _out(cfg: PipelineConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _header_hash(path: Path) -> Optional[str]:
    with path.open(encoding="utf-8") as fh:
        first = fh.readline()
    if first.startswith("# config "):
        return first.split()[2]
    return None


def _check_hash(path: Path, expected: str, force: bool) -> None:
    if path.suffix == ".npz":
        found = str(np.load(path, allow_pickle=True)["config_hash"])
    elif path.suffix == ".json":
        found = json.loads(path.read_text(encoding="utf-8")).get("config_hash")
    else:
        found = _header_hash(path)
    if found != expected and not force:
        raise HashMismatch(f"{path.name} was produced by config {found}, current config is {expected} (use --force)")


def load_datasets(cfg: PipelineConfig) -> tuple[Dataset, Dataset]:
    left = load_csv(cfg.left, cfg.left_id_column, name="left")
    right = load_csv(cfg.right, cfg.right_id_column, name="right")
    return left, right


def _load_embeddings(cfg: PipelineConfig):
    z = np.load(_out(cfg) / "embeddings.npz", allow_pickle=True)
    left_ids = [_parse_id(t) for t in z["left_ids"].tolist()]
    right_ids = [_parse_id(t) for t in z["right_ids"].tolist()]
    return left_ids, right_ids, z["E_left"], z["E_right"]


def _load_graph_features(cfg: PipelineConfig, left_ids, right_ids):
    ckpt = graph_trainer.load_checkpoint(_out(cfg) / "graph_model.npz")
    if ckpt.left_ids != list(left_ids) or ckpt.right_ids != list(right_ids):
        raise ValueError("graph checkpoint tuple ids do not match the embeddings")
    hl, hr = ckpt.h_left, ckpt.h_right
    if not cfg.graph_features:
        hl, hr = np.zeros_like(hl), np.zeros_like(hr)
    return hl, hr


# ---- stages -------------------------------------------------------------

def stage_ingest(cfg: PipelineConfig) -> None:
    left, right = load_datasets(cfg)
    info = {"config_hash": cfg.config_hash()}
    for name, d in (("left", left), ("right", right)):
        info[name] = {
            "tuples": len(d),
            "attributes": list(d.attributes),
            "missing_cells": sum(len(d.attributes) - t.present() for t in d.tuples),
        }
    with _artifact(_out(cfg) / "ingest.json") as p:
        write_report(p, info)


def stage_embed(cfg: PipelineConfig) -> None:
    left, right = load_datasets(cfg)
    provider = EmbeddingProvider(cfg.embedding)
    E_left, E_right = provider.embed_dataset(left), provider.embed_dataset(right)
    with _artifact(_out(cfg) / "embeddings.npz") as p:
        with open(p, "wb") as fh:
            np.savez(
                fh,
                E_left=E_left,
                E_right=E_right,
                left_ids=np.array([str(t) for t in left.ids]),
                right_ids=np.array([str(t) for t in right.ids]),
                config_hash=np.array(cfg.config_hash()),
            )


def _similarity(cfg: PipelineConfig) -> SimilarityMatrix:
    left_ids, right_ids, E_left, E_right = _load_embeddings(cfg)
    return similarity_from_embeddings(E_left, E_right, left_ids, right_ids)


def stage_block(cfg: PipelineConfig) -> None:
    cands = block_topk(_similarity(cfg), cfg.blocking_k)
    with _artifact(_out(cfg) / "candidates.tsv") as p:
        _write_with_header(p, cfg, lambda fh: [fh.write(f"{a}\t{b}\n") for a, b in cands])


def _write_with_header(path: Path, cfg: PipelineConfig, body: Callable) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# config {cfg.config_hash()}\n")
        body(fh)


def stage_label(cfg: PipelineConfig) -> None:
    if cfg.labels:
        positives, negatives = read_labels_tsv(cfg.labels)
    else:
        left_ids, right_ids, E_left, E_right = _load_embeddings(cfg)
        M = similarity_from_embeddings(E_left, E_right, left_ids, right_ids)
        positives = rplg(M, cfg.rplg)
        if len(positives) == 0:
            raise ValueError("no reliable positive labels found; lower rplg.theta")
        negatives = snlg(E_left, E_right, left_ids, right_ids, positives, cfg.snlg)
    with _artifact(_out(cfg) / "labels.tsv") as p:
        write_labels_tsv(positives, negatives, p, header=f"config {cfg.config_hash()}")


def stage_graph(cfg: PipelineConfig) -> None:
    out = _out(cfg)
    left, right = load_datasets(cfg)
    stats = {"config_hash": cfg.config_hash()}
    for name, d in (("left", left), ("right", right)):
        g = mrgc(d)
        with _artifact(out / f"graph_{name}.tsv") as tp, _artifact(out / f"graph_{name}_nodes.tsv") as npth:
            export_graph(g, tp, npth, header=f"config {cfg.config_hash()}")
        s = graph_stats(g)
        stats[name] = {
            "mrgc": {"nodes": s.nodes, "edges": s.edges, "relations": s.relations},
            "reference": {
                style: dict(zip(("nodes", "edges", "relations"), (r.nodes, r.edges, r.relations)))
                for style in ("embdi", "grapher")
                for r in [reference_graph(d, style)]
            },
        }
    with _artifact(out / "graph_stats.json") as p:
        write_report(p, stats)


def stage_train_graph(cfg: PipelineConfig) -> None:
    left, right = load_datasets(cfg)
    positives, negatives = read_labels_tsv(_out(cfg) / "labels.tsv")
    value_provider = EmbeddingProviderSpec(
        kind="hashed-ngram", dimension=cfg.margin_loss.dim, ngrams=cfg.embedding.ngrams, seed=cfg.embedding.seed
    )
    result = graph_trainer.train(mrgc(left), mrgc(right), positives, negatives, cfg.margin_loss, value_provider)
    out = _out(cfg)
    with _artifact(out / "graph_model.npz") as p:
        with open(p, "wb") as fh:
            graph_trainer.save_checkpoint(fh, result, cfg.config_hash())
    with _artifact(out / "graph_loss.csv") as p:
        graph_trainer.write_loss_trace(p, result.loss_trace, header=f"config {cfg.config_hash()}")


def stage_train_collab(cfg: PipelineConfig) -> None:
    positives, negatives = read_labels_tsv(_out(cfg) / "labels.tsv")
    left_ids, right_ids, E_left, E_right = _load_embeddings(cfg)
    hl, hr = _load_graph_features(cfg, left_ids, right_ids)
    result = collab.train_collab(positives, negatives, left_ids, right_ids, E_left, E_right, hl, hr, cfg.csfl)
    out = _out(cfg)
    with _artifact(out / "collab_model.txt") as p:
        collab.save_model(p, result.params, cfg.config_hash())
    with _artifact(out / "collab_loss.csv") as p:
        def body(fh):
            fh.write("epoch,loss,l1,l2\n")
            for e, (t, a, b) in enumerate(zip(result.loss_trace, result.l1_trace, result.l2_trace)):
                fh.write(f"{e},{t!r},{a!r},{b!r}\n")

        _write_with_header(p, cfg, body)


def stage_predict(cfg: PipelineConfig) -> None:
    out = _out(cfg)
    params = collab.load_model(out / "collab_model.txt")
    left_ids, right_ids, E_left, E_right = _load_embeddings(cfg)
    hl, hr = _load_graph_features(cfg, left_ids, right_ids)
    cands = read_pairs_tsv(out / "candidates.tsv")
    preds = collab.predict(params, cands, left_ids, right_ids, E_left, E_right, hl, hr, cfg.csfl.decision_threshold)
    with _artifact(out / "predictions.tsv") as p:
        _write_with_header(p, cfg, lambda fh: [fh.write(f"{l}\t{r}\t{pr!r}\t{y}\n") for l, r, pr, y in preds])


def read_predictions(path: Path) -> list[tuple]:
    rows = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#") or not line.strip():
                continue
            l, r, p, y = line.rstrip("\n").split("\t")
            rows.append((_parse_id(l), _parse_id(r), float(p), int(y)))
    return rows


def stage_eval(cfg: PipelineConfig, force: bool = False) -> dict:
    out = _out(cfg)
    h = cfg.config_hash()
    for name in ("candidates.tsv", "labels.tsv", "predictions.tsv"):
        _check_hash(out / name, h, force)
    cands = read_pairs_tsv(out / "candidates.tsv")
    preds = read_predictions(out / "predictions.tsv")
    positives, negatives = read_labels_tsv(out / "labels.tsv")
    split = split_candidates(cands, cfg.seed)
    predicted = {(l, r) for l, r, _, y in preds if y == 1}
    report: dict = {
        "config_hash": h,
        "candidates": len(cands),
        "split": dict(zip(("train", "validation", "test"), split.sizes())),
        "labels": {"positives": len(positives), "negatives": len(negatives)},
        "predicted_matches": len(predicted),
    }
    if cfg.ground_truth:
        truth = GroundTruth.load(cfg.ground_truth)
        report["blocking_recall"] = len(truth.restrict(cands)) / len(truth) if len(truth) else 0.0
        for name, part in (("validation", split.validation), ("test", split.test)):
            part_set = set(part)
            report[name] = score_predictions(predicted & part_set, truth.restrict(part_set), part_set).to_dict()
        report["label_quality"] = score_labels(positives, negatives, truth).to_dict()
    with _artifact(out / "report.json") as p:
        write_report(p, report)
    return report


def stage_anomaly(cfg: PipelineConfig, source: str = "predicted", echo: Optional[Callable] = None) -> list:
    out = _out(cfg)
    left, right = load_datasets(cfg)
    if source == "truth":
        if not cfg.ground_truth:
            raise ValueError("anomaly source 'truth' needs ground_truth in the config")
        matches = read_pairs_tsv(cfg.ground_truth)
    else:
        matches = [(l, r) for l, r, _, y in read_predictions(out / "predictions.tsv") if y == 1]
    mapping = None
    if cfg.anomaly.mapping is not None:
        mapping = anomaly_mod.AttributeMapping(tuple(tuple(p) for p in cfg.anomaly.mapping))
    records = anomaly_mod.detect_anomalies(matches, left, right, mapping, cfg.anomaly.jaccard_threshold)
    with _artifact(out / "anomalies.jsonl") as p:
        anomaly_mod.write_jsonl(records, p, cfg.config_hash())
    if echo is not None:
        import io

        buf = io.StringIO()
        anomaly_mod.render_table(records, buf)
        echo(buf.getvalue())
    return records


STAGES: dict[str, Callable] = {
    "ingest": stage_ingest,
    "embed": stage_embed,
    "block": stage_block,
    "label": stage_label,
    "graph": stage_graph,
    "train-graph": stage_train_graph,
    "train-collab": stage_train_collab,
    "predict": stage_predict,
    "eval": stage_eval,
    "anomaly": stage_anomaly,
}


def run_stage(name: str, cfg: PipelineConfig, **kwargs):
    log.info("stage %s", name)
    try:
        with _limit_threads(cfg.threads):
            return STAGES[name](cfg, **kwargs)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def run_pipeline(cfg: PipelineConfig, force: bool = False) -> dict:
    report = None
    for name in STAGES:
        kwargs = {"force": force} if name == "eval" else {}
        result = run_stage(name, cfg, **kwargs)
        if name == "eval":
            report = result
    return report


@contextlib.contextmanager
def _limit_threads(n: int):
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        yield
        return
    with threadpool_limits(limits=n):
        yield
