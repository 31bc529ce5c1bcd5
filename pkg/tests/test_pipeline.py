import dataclasses
import json

import pytest
from click.testing import CliRunner

from erpipe import pipeline
from erpipe.cli import cli, main
from erpipe.config import PipelineConfig, config_from_dict, load_config, save_config
from erpipe.graph_trainer import MarginLossConfig
from erpipe.collab import CsflConfig
from erpipe.synthetic import SyntheticSpec, write_synthetic

STAGES = ["ingest", "embed", "block", "label", "graph", "train-graph", "train-collab", "predict", "eval", "anomaly"]


@pytest.fixture(scope="module")
def small_cfg(tmp_path_factory):
    root = tmp_path_factory.mktemp("syn")
    write_synthetic(SyntheticSpec(80, 80, 50, 0.05, 0.0, 0.05, seed=2), root)
    cfg = {
        "left": "left.csv",
        "right": "right.csv",
        "ground_truth": "truth.tsv",
        "output_dir": "out",
        "margin_loss": {"epochs": 5, "dim": 32},
        "csfl": {"epochs": 20},
    }
    path = root / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def with_out(path, out):
    data = json.loads(path.read_text())
    data["output_dir"] = str(out)
    new = path.parent / f"config_{out.name}.json"
    new.write_text(json.dumps(data))
    return new


def test_run_all_writes_every_artifact(small_cfg, tmp_path):
    cfg_path = with_out(small_cfg, tmp_path / "full")
    assert main(["--config", str(cfg_path), "run-all"]) == 0
    out = tmp_path / "full"
    for names in pipeline.ARTIFACTS.values():
        for name in names:
            assert (out / name).exists(), name
    assert not list(out.glob("*.partial"))
    h = load_config(cfg_path).config_hash()
    for name in ("candidates.tsv", "labels.tsv", "predictions.tsv", "graph_loss.csv", "collab_loss.csv",
                 "graph_left.tsv", "collab_model.txt"):
        assert (out / name).read_text().startswith(f"# config {h}"), name
    assert json.loads((out / "report.json").read_text())["config_hash"] == h


def test_stages_compose(small_cfg, tmp_path):
    a = with_out(small_cfg, tmp_path / "a")
    b = with_out(small_cfg, tmp_path / "b")
    runner = CliRunner()
    assert runner.invoke(cli, ["--config", str(a), "run-all"]).exit_code == 0
    for stage in STAGES:
        res = runner.invoke(cli, ["--config", str(b), stage])
        assert res.exit_code == 0, (stage, res.output)
    for name in ("predictions.tsv", "report.json", "labels.tsv", "candidates.tsv", "anomalies.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_missing_dataset_fails_in_ingest(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"left": "nope.csv", "right": "nope2.csv", "output_dir": "o"}))
    res = CliRunner().invoke(cli, ["--config", str(cfg), "run-all"])
    assert res.exit_code == 2
    assert "'ingest'" in res.output
    assert main(["--config", str(cfg), "ingest"]) == 2


def test_usage_errors_exit_1(tmp_path):
    assert main(["--no-such-flag"]) == 1
    assert main(["ingest"]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"blocking": 3}))
    assert main(["--config", str(bad), "ingest"]) == 1


def test_eval_refuses_foreign_artifacts(small_cfg, tmp_path):
    cfg_path = with_out(small_cfg, tmp_path / "h")
    assert main(["--config", str(cfg_path), "run-all"]) == 0
    assert main(["--config", str(cfg_path), "--seed", "7", "eval"]) == 2
    assert main(["--config", str(cfg_path), "--seed", "7", "eval", "--force"]) == 0


def test_failed_write_leaves_partial(small_cfg, tmp_path, monkeypatch):
    cfg = dataclasses.replace(load_config(small_cfg), output_dir=str(tmp_path / "p"))
    pipeline.run_stage("ingest", cfg)

    def boom(path, report):
        open(path, "w").write("{")
        raise RuntimeError("disk full")

    monkeypatch.setattr(pipeline, "write_report", boom)
    with pytest.raises(pipeline.StageError, match="graph"):
        pipeline.run_stage("graph", cfg)
    assert (tmp_path / "p" / "graph_stats.json.partial").exists()
    assert not (tmp_path / "p" / "graph_stats.json").exists()


def test_supervised_labels(small_cfg, tmp_path):
    cfg = dataclasses.replace(load_config(small_cfg), output_dir=str(tmp_path / "s"))
    labels = tmp_path / "given.tsv"
    labels.write_text("L0\tR0\t1\nL1\tR0\t0\n")
    cfg = dataclasses.replace(cfg, labels=str(labels))
    for stage in ("ingest", "embed", "label"):
        pipeline.run_stage(stage, cfg)
    lines = (tmp_path / "s" / "labels.tsv").read_text().splitlines()
    assert lines[1:] == ["L0\tR0\t1", "L1\tR0\t0\t0"]


def test_config_round_trip(tmp_path):
    cfg = PipelineConfig(margin_loss=MarginLossConfig(gamma=0.5), csfl=CsflConfig(lambda_=0.3))
    save_config(cfg, tmp_path / "c.json")
    assert json.loads((tmp_path / "c.json").read_text())["csfl"]["lambda"] == 0.3
    back = load_config(tmp_path / "c.json")
    assert back.config_hash() == cfg.config_hash()
    assert back.margin_loss.gamma == 0.5


def test_hash_ignores_output_and_threads():
    cfg = PipelineConfig()
    assert cfg.config_hash() == dataclasses.replace(cfg, output_dir="elsewhere", threads=4).config_hash()
    assert cfg.config_hash() != dataclasses.replace(cfg, seed=1).config_hash()
    with pytest.raises(ValueError):
        config_from_dict({"csfl": {"nu": 1}})


def test_grad_check_command():
    res = CliRunner().invoke(cli, ["grad-check"])
    assert res.exit_code == 0
    assert "relative error" in res.output


def test_make_synthetic_command(tmp_path):
    res = CliRunner().invoke(cli, ["make-synthetic", str(tmp_path / "d"), "--left-size", "30", "--right-size", "30",
                                   "--matches", "10"])
    assert res.exit_code == 0
    assert (tmp_path / "d" / "config.json").exists()
    assert main(["make-synthetic", str(tmp_path / "e"), "--matches", "999"]) == 1
