"""Command line entry point: one subcommand per pipeline stage plus helpers."""
from __future__ import annotations

import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Optional

import click

from . import collab, graph_trainer, pipeline
from .config import PipelineConfig, load_config
from .synthetic import SyntheticSpec, edit_fraction, make_synthetic, write_synthetic

EXIT_OK, EXIT_USAGE, EXIT_STAGE = 0, 1, 2


def _config(ctx: click.Context) -> PipelineConfig:
    obj = ctx.obj
    if obj["config"] is None:
        raise click.UsageError("this command needs --config")
    cfg = load_config(obj["config"])
    overrides = {}
    if obj["threads"] is not None:
        overrides["threads"] = obj["threads"]
    if obj["seed"] is not None:
        overrides["seed"] = obj["seed"]
    if obj["out"] is not None:
        overrides["output_dir"] = obj["out"]
    return dataclasses.replace(cfg, **overrides)


def _run(ctx: click.Context, stage: str, **kwargs):
    cfg = _config(ctx)
    try:
        return pipeline.run_stage(stage, cfg, **kwargs)
    except pipeline.StageError as exc:
        click.echo(f"error: {exc}", err=True)
        ctx.exit(EXIT_STAGE)


@click.group()
@click.option("--config", "config", type=click.Path(dir_okay=False), default=None, help="JSON pipeline config.")
@click.option("--threads", type=click.IntRange(min=1), default=None, help="Cap on BLAS worker threads.")
@click.option("--seed", type=int, default=None, help="Overrides the config seed (split seed).")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Overrides the output directory.")
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def cli(ctx, config, threads, seed, out, verbose):
    """Self-supervised entity resolution pipeline."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    ctx.obj = {"config": config, "threads": threads, "seed": seed, "out": out}


def _simple_stage(name: str, help_text: str):
    @click.pass_context
    def command(ctx):
        _run(ctx, name)

    command.__doc__ = help_text
    cli.command(name)(command)


for _name, _help in [
    ("ingest", "Load both CSVs and write ingest.json."),
    ("embed", "Embed every tuple and write embeddings.npz."),
    ("block", "Top-k blocking; writes candidates.tsv."),
    ("label", "Generate pseudo-labels (or copy supervised labels); writes labels.tsv."),
    ("graph", "Build the per-dataset graphs and their statistics."),
    ("train-graph", "Train graph tuple embeddings with the margin loss."),
    ("train-collab", "Train the collaborative matcher."),
    ("predict", "Score all candidate pairs; writes predictions.tsv."),
]:
    _simple_stage(_name, _help)


@cli.command("eval")
@click.option("--force", is_flag=True, help="Accept artifacts whose config hash differs.")
@click.pass_context
def eval_cmd(ctx, force):
    """Metrics on the validation and test splits; writes report.json."""
    report = _run(ctx, "eval", force=force)
    click.echo(json.dumps(report, indent=2, sort_keys=True))


@cli.command("anomaly")
@click.option("--source", type=click.Choice(["predicted", "truth"]), default="predicted")
@click.pass_context
def anomaly_cmd(ctx, source):
    """Flag contradicting attribute values across matched pairs."""
    _run(ctx, "anomaly", source=source, echo=click.echo)


@cli.command("run-all")
@click.option("--force", is_flag=True)
@click.pass_context
def run_all(ctx, force):
    """Run every stage in order."""
    cfg = _config(ctx)
    try:
        report = pipeline.run_pipeline(cfg, force=force)
    except pipeline.StageError as exc:
        click.echo(f"error: {exc}", err=True)
        ctx.exit(EXIT_STAGE)
    click.echo(json.dumps(report, indent=2, sort_keys=True))


@cli.command("make-synthetic")
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--left-size", type=int, default=500, show_default=True)
@click.option("--right-size", type=int, default=500, show_default=True)
@click.option("--matches", type=int, default=300, show_default=True)
@click.option("--typo-rate", type=float, default=0.1, show_default=True)
@click.option("--swap-rate", type=float, default=0.0, show_default=True)
@click.option("--delete-rate", type=float, default=0.05, show_default=True)
@click.option("--synthetic-seed", type=int, default=0, show_default=True)
@click.option("--write-config/--no-write-config", default=True, help="Also write a config.json next to the data.")
def make_synthetic_cmd(out_dir, left_size, right_size, matches, typo_rate, swap_rate, delete_rate, synthetic_seed, write_config):
    """Generate two CSVs plus a ground-truth TSV."""
    try:
        spec = SyntheticSpec(left_size, right_size, matches, typo_rate, swap_rate, delete_rate, synthetic_seed)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    paths = write_synthetic(spec, out_dir)
    if write_config:
        cfg = {"left": "left.csv", "right": "right.csv", "ground_truth": "truth.tsv", "output_dir": "out"}
        (Path(out_dir) / "config.json").write_text(json.dumps(cfg, indent=2) + "\n", encoding="utf-8")
    left, right, truth = make_synthetic(spec)
    click.echo(f"wrote {', '.join(str(p) for p in paths.values())}")
    click.echo(f"measured character-edit fraction {edit_fraction(left, right, truth):.4f}")


@cli.command("grad-check")
@click.option("--seed", "check_seed", type=int, default=0)
@click.option("--tol", type=float, default=1e-4, show_default=True)
@click.pass_context
def grad_check(ctx, check_seed, tol):
    """Finite-difference check of both hand-written backward passes."""
    g = graph_trainer.gradient_check(check_seed)
    c = collab.gradient_check(check_seed)
    click.echo(f"graph margin loss   max relative error {g:.3e}")
    click.echo(f"collaborative loss  max relative error {c:.3e}")
    if max(g, c) >= tol:
        click.echo("gradient check FAILED", err=True)
        ctx.exit(EXIT_STAGE)


def main(argv: Optional[list] = None) -> int:
    """Console entry point; maps click's usage errors to exit 1."""
    try:
        rv = cli.main(args=argv, prog_name="erpipe", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_USAGE
    return rv if isinstance(rv, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
