"""Command-line entry points.

``synth``, ``train``, and ``eval`` drive the library directly; ``serve``
starts the HTTP service; ``ask`` is a thin client that talks to a running
service instead of loading any model locally.
"""

from __future__ import annotations

import base64
import json
import os
from pathlib import Path

import click

from .corpus import DatasetSplit, load_corpus, split_corpus, write_corpus
from .errors import MedVqaError
from .models.config import ModelConfig
from .models.fusion import load_bundle
from .synth.lexicon import default_lexicon, load_lexicon
from .synth.pipeline import load_reports, synthesize_corpus
from .synth.templates import default_templates, load_templates
from .training.trainer import FileImageStore, TrainConfig, evaluate, train

DATA_DIR_ENV = "MEDVQA_DATA_DIR"


def _data_dir(explicit: str | None) -> Path:
    root = explicit or os.environ.get(DATA_DIR_ENV)
    if not root:
        raise click.ClickException(
            f"no corpus root: pass --data-dir or set {DATA_DIR_ENV}"
        )
    return Path(root)


@click.group()
@click.version_option()
def main() -> None:
    """Medical VQA toolkit."""


@main.command()
@click.option(
    "--reports",
    "report_files",
    multiple=True,
    required=True,
    type=click.Path(exists=True, dir_okay=False),
    help="Report JSONL file; repeat for multiple sources.",
)
@click.option("--lexicon", "lexicon_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--templates", "template_files", type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--out",
    "out_path",
    required=True,
    type=click.Path(),
    help="Output qa.jsonl path (images.jsonl is written alongside).",
)
def synth(report_files, lexicon_file, template_files, out_path) -> None:
    """Label reports and synthesize a QA corpus."""
    try:
        lexicon = load_lexicon(lexicon_file) if lexicon_file else default_lexicon()
        templates = (
            load_templates(template_files, lexicon) if template_files else default_templates(lexicon)
        )
        reports = []
        for path in report_files:
            reports.extend(load_reports(path))
        images, pairs, stats = synthesize_corpus(reports, lexicon, templates)
        out = Path(out_path)
        root = out.parent if out.suffix == ".jsonl" else out
        write_corpus(root, images, pairs)
    except MedVqaError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(json.dumps(stats.to_dict(), indent=2, ensure_ascii=False))


@main.command(name="train")
@click.option("--config", "config_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data-dir", type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", type=click.Path())
def train_cmd(config_file, data_dir, out_dir) -> None:
    """Train a model from a JSON config; writes checkpoint, curves, vocab, split."""
    try:
        doc = json.loads(Path(config_file).read_text(encoding="utf-8"))
        model_config = ModelConfig.from_dict(doc.get("model", {}))
        train_config = TrainConfig.from_dict(doc.get("train", {}))
        root = _data_dir(data_dir or doc.get("data_dir"))
        out = Path(out_dir or doc.get("out_dir") or "run")
        images, pairs = load_corpus(root, language_filter=doc.get("language"))
        if doc.get("split_file"):
            split = DatasetSplit.load(doc["split_file"])
        else:
            split_doc = doc.get("split", {})
            split = split_corpus(
                images,
                ratios=tuple(split_doc.get("ratios", (0.70, 0.15, 0.15))),
                seed=int(split_doc.get("seed", train_config.seed)),
            )
        store = FileImageStore(root, model_config.side, model_config.in_channels)
        result = train(images, pairs, split, model_config, train_config, store, out)
    except MedVqaError as exc:
        raise click.ClickException(str(exc)) from exc
    summary = {
        "checkpoint": str(result.checkpoint_path),
        "best_epoch": result.best_epoch,
        "val_accuracy": result.best_val_accuracy,
        "test_accuracy": result.report.rows[0].test_accuracy,
        "dropped_train_pairs": result.dropped_train_pairs,
        "epochs": len(result.curves),
    }
    click.echo(json.dumps(summary, indent=2))


@main.command(name="eval")
@click.option("--checkpoint", "checkpoint_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--split", "part", default="test", type=click.Choice(["train", "val", "test"]))
@click.option("--data-dir", type=click.Path(exists=True, file_okay=False))
@click.option("--vocab", "vocab_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--batch-size", default=64, show_default=True)
def eval_cmd(checkpoint_file, part, data_dir, vocab_file, batch_size) -> None:
    """Evaluate a checkpoint on one split part; prints a JSON report."""
    try:
        bundle = load_bundle(checkpoint_file, vocab_file)
        split_doc = bundle_split_doc(checkpoint_file)
        split = DatasetSplit.from_dict(split_doc)
        root = _data_dir(data_dir)
        images, pairs = load_corpus(root)
        selected = [p for p in pairs if p.image_id in split.part(part)]
        if not selected:
            raise click.ClickException(f"split part {part!r} has no pairs in this corpus")
        store = FileImageStore(root, bundle.config.side, bundle.config.in_channels)
        result = evaluate(bundle, selected, images, store, batch_size=batch_size)
    except MedVqaError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(json.dumps({"split": part, **result.to_dict()}, indent=2, ensure_ascii=False))


def bundle_split_doc(checkpoint_file) -> dict:
    from .models.checkpoint import load_checkpoint

    meta = load_checkpoint(checkpoint_file).meta
    split_doc = meta.get("split")
    if not split_doc:
        raise click.ClickException("checkpoint carries no split; re-train or evaluate manually")
    return split_doc


@main.command()
@click.option("--checkpoint", "checkpoint_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--vocab", "vocab_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
def serve(checkpoint_file, vocab_file, port, host) -> None:
    """Serve a checkpoint over HTTP."""
    from .service.app import serve as run_service

    try:
        run_service(checkpoint_file, vocab_file, port=port, host=host)
    except MedVqaError as exc:
        raise click.ClickException(str(exc)) from exc


def run_ask(url: str, image_path, question: str, top_k: int, client=None) -> dict:
    """POST one question to a running service; returns the response payload."""
    import httpx

    payload = {
        "image": base64.b64encode(Path(image_path).read_bytes()).decode("ascii"),
        "question": question,
        "top_k": top_k,
    }
    own = client is None
    client = client or httpx.Client(timeout=30.0)
    try:
        resp = client.post(url.rstrip("/") + "/predict", json=payload)
        body = resp.json()
        if resp.status_code != 200:
            raise click.ClickException(f"service error {resp.status_code}: {body.get('error', body)}")
        return body
    finally:
        if own:
            client.close()


@main.command()
@click.option("--image", "image_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--question", required=True)
@click.option("--url", default="http://127.0.0.1:8000", show_default=True)
@click.option("--top-k", default=5, show_default=True)
def ask(image_path, question, url, top_k) -> None:
    """Ask a running service one question about an image."""
    body = run_ask(url, image_path, question, top_k)
    click.echo(json.dumps(body, indent=2, ensure_ascii=False))


if __name__ == "__main__":
    main()
