"""Command-line interface.

Subcommands: synth-data, build-instruct, train, eval, ablate, score.
Every config field is overridable with repeated ``-o section.key=value``
flags; ``ORGANRRG_DETERMINISTIC=1`` forces deterministic mode.
"""

from __future__ import annotations

import json
from pathlib import Path

import click

from .config import RunConfig, apply_overrides, desk_preset
from .corpus import DatasetManifest
from .instruct import BuilderConfig, build_qa_pairs, save_qa_pairs
from .synth import synth_dataset


def _load_config(config_path: str | None, overrides: tuple[str, ...]) -> RunConfig:
    config = RunConfig.load(config_path) if config_path else desk_preset()
    if overrides:
        config = apply_overrides(config, list(overrides))
    config.validate()
    return config


@click.group()
def main():
    """Organ-regional radiology report generation toolkit."""


@main.command("synth-data")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--n", type=int, default=40, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--image-size", type=int, default=64, show_default=True)
def synth_data_cmd(seed: int, n: int, out_dir: str, image_size: int):
    """Generate a deterministic synthetic dataset."""
    manifest, _ = synth_dataset(seed, n, out_dir=out_dir, image_size=image_size)
    click.echo(f"wrote {len(manifest.records)} samples to {out_dir}")


@main.command("build-instruct")
@click.option("--manifest", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--positive-boost", type=float, default=2.0, show_default=True)
@click.option("--max-duplicates", type=int, default=3, show_default=True)
@click.option("--balance-tolerance", type=float, default=0.1, show_default=True)
def build_instruct_cmd(manifest: str, out_path: str, seed: int, positive_boost: float,
                       max_duplicates: int, balance_tolerance: float):
    """Build the organ-level instruction QA dataset from a manifest."""
    from .ds_graph import default_ds_graph

    records = DatasetManifest.load(manifest).records
    corpus = [(r.id, r.report) for r in records]
    cfg = BuilderConfig(positive_boost=positive_boost, max_duplicate_answers=max_duplicates,
                        balance_tolerance=balance_tolerance)
    pairs, stats = build_qa_pairs(corpus, default_ds_graph(), cfg, seed)
    save_qa_pairs(pairs, out_path)
    stats_path = Path(out_path).with_suffix(".stats.json")
    stats_path.write_text(stats.to_json(), encoding="utf-8")
    click.echo(f"wrote {len(pairs)} QA pairs to {out_path} (stats: {stats_path})")


@main.command("train")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("-o", "--set", "overrides", multiple=True, help="config override key=value")
def train_cmd(config_path: str | None, overrides: tuple[str, ...]):
    """Train a model; the best-validation checkpoint lands in out_dir."""
    from .train import train

    config = _load_config(config_path, overrides)
    result = train(config)
    click.echo(f"best epoch {result.log.best_epoch} "
               f"(val loss {result.log.best_val_loss:.4f}); "
               f"checkpoint: {result.checkpoint_path}")


@main.command("eval")
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--split", type=click.Choice(["train", "val", "test"]), default="test",
              show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
def eval_cmd(checkpoint: str, split: str, out_path: str | None):
    """Evaluate a checkpoint: metric table plus a per-sample transcript."""
    from .evaluate import evaluate

    transcript = evaluate(checkpoint, split)
    for name, value in transcript.metrics.items():
        click.echo(f"{name}\t{value:.4f}")
    if out_path:
        transcript.save(out_path)
        click.echo(f"transcript: {out_path}")


@main.command("ablate")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("-o", "--set", "overrides", multiple=True)
@click.option("--split", type=click.Choice(["train", "val", "test"]), default="val",
              show_default=True)
def ablate_cmd(config_path: str | None, overrides: tuple[str, ...], split: str):
    """Run the five-row module ablation."""
    from .ablate import ablate

    config = _load_config(config_path, overrides)
    transcripts = ablate(config, split)
    for row, transcript in transcripts.items():
        cells = "  ".join(f"{k}={transcript.metrics[k]:.3f}"
                          for k in ("BLEU@1", "BLEU@4", "METEOR", "ROUGE-L"))
        click.echo(f"row {row}: {cells}")


@main.command("score")
@click.option("--predictions", type=click.Path(exists=True), required=True,
              help="one generated report per line")
@click.option("--references", type=click.Path(exists=True), required=True,
              help="one reference report per line, ids aligned")
@click.option("--json", "as_json", is_flag=True, help="machine-readable output")
def score_cmd(predictions: str, references: str, as_json: bool):
    """Score prediction files with the NLG and clinical-efficacy metrics."""
    from .corpus import words
    from .ds_graph import default_ds_graph
    from .metrics import ce_labels, ce_prf, corpus_nlg_scores

    preds = [line for line in Path(predictions).read_text(encoding="utf-8").splitlines()]
    refs = [line for line in Path(references).read_text(encoding="utf-8").splitlines()]
    if len(preds) != len(refs):
        raise click.ClickException(
            f"line counts differ: {len(preds)} predictions vs {len(refs)} references")
    metrics = corpus_nlg_scores([words(p) for p in preds], [words(r) for r in refs])
    graph = default_ds_graph()
    precision, recall, f1 = ce_prf([ce_labels(p, graph) for p in preds],
                                   [ce_labels(r, graph) for r in refs])
    metrics.update({"CE-Precision": precision, "CE-Recall": recall, "CE-F1": f1})
    if as_json:
        click.echo(json.dumps(metrics, indent=2, sort_keys=True))
    else:
        for name, value in metrics.items():
            click.echo(f"{name}\t{value:.4f}")


if __name__ == "__main__":
    main()
