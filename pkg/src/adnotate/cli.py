"""Command-line pipeline: ingest -> weak-label -> split -> train -> predict,
batch building, explanation generation, the annotation server, and report
replay. State lives under --data-dir; seeded steps honor --seed.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import corpus as corpus_mod
from .corpus import SplitSpec, load_batch, load_corpus, load_weak_labeled
from .detector import SponsoredContentDetector, TruthItem, evaluate, write_predictions
from .errors import AdnotateError
from .explainer import (
    ChatCompletionClient,
    EndpointConfig,
    default_recipe,
    explain_post,
    load_explanations,
    load_recipe,
    save_recipe,
    write_explanations,
)
from .service import (
    AnnotationService,
    EventStore,
    Expertise,
    predictions_as_map,
    replay_report,
    write_report_files,
)


@click.group()
@click.option("--data-dir", type=click.Path(path_type=Path), default=Path("data"),
              show_default=True, help="Directory holding pipeline files and server state.")
@click.option("--seed", type=int, default=0, show_default=True,
              help="Seed for every randomized step.")
@click.option("--config", type=click.Path(path_type=Path, exists=True), default=None,
              help="JSON config file (endpoint settings etc.).")
@click.pass_context
def main(ctx, data_dir: Path, seed: int, config: Path | None):
    """Sponsored-content annotation platform."""
    settings = {}
    if config is not None:
        settings = json.loads(config.read_text(encoding="utf-8"))
    ctx.obj = {"data_dir": data_dir, "seed": seed, "config": settings}


def _fail(exc: Exception) -> None:
    raise click.ClickException(str(exc))


@main.command()
@click.argument("input_file", type=click.Path(path_type=Path, exists=True))
@click.pass_obj
def ingest(obj, input_file: Path):
    """Validate and store a line-delimited post file."""
    try:
        with open(input_file, encoding="utf-8") as handle:
            corpus = corpus_mod.ingest_posts(handle)
    except AdnotateError as exc:
        _fail(exc)
    obj["data_dir"].mkdir(parents=True, exist_ok=True)
    out = obj["data_dir"] / "corpus.jsonl"
    corpus_mod.write_corpus(corpus, out)
    click.echo(f"ingested {len(corpus)} posts -> {out}")


@main.command("weak-label")
@click.option("--corpus", "corpus_path", type=click.Path(path_type=Path), default=None)
@click.pass_obj
def weak_label_cmd(obj, corpus_path: Path | None):
    """Derive weak labels and disclosure-stripped captions."""
    corpus_path = corpus_path or obj["data_dir"] / "corpus.jsonl"
    try:
        corpus = load_corpus(corpus_path)
    except (AdnotateError, OSError) as exc:
        _fail(exc)
    labeled = corpus_mod.weak_label(corpus)
    out = obj["data_dir"] / "weak_labeled.jsonl"
    corpus_mod.write_weak_labeled(labeled, out)
    positives = sum(1 for wl in labeled if wl.weak_label is corpus_mod.Label.SPONSORED)
    click.echo(f"labeled {len(labeled)} posts ({positives} sponsored) -> {out}")


@main.command()
@click.option("--weak", "weak_path", type=click.Path(path_type=Path), default=None)
@click.option("--cutoff-year", type=int, default=2022, show_default=True)
@click.pass_obj
def split(obj, weak_path: Path | None, cutoff_year: int):
    """Balance by undersampling, then split by year into train/validation/test."""
    weak_path = weak_path or obj["data_dir"] / "weak_labeled.jsonl"
    try:
        labeled = load_weak_labeled(weak_path)
        balanced = corpus_mod.undersample(labeled, seed=obj["seed"])
        result = corpus_mod.temporal_split(
            balanced, SplitSpec(cutoff_year=cutoff_year, seed=obj["seed"])
        )
    except (AdnotateError, OSError) as exc:
        _fail(exc)
    split_dir = obj["data_dir"] / "splits"
    corpus_mod.write_weak_labeled(balanced, obj["data_dir"] / "balanced.jsonl")
    corpus_mod.write_split_manifests(result, split_dir)
    click.echo(
        f"train {len(result.train)} / validation {len(result.validation)} / "
        f"test {len(result.test)} -> {split_dir}"
    )


def _read_split_ids(path: Path) -> list[str]:
    lines = path.read_text(encoding="utf-8").splitlines()
    return [line for line in lines[1:] if line.strip()]


@main.command()
@click.option("--weak", "weak_path", type=click.Path(path_type=Path), default=None)
@click.option("--splits", "splits_dir", type=click.Path(path_type=Path), default=None)
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=None)
@click.option("--min-df", type=int, default=2, show_default=True)
@click.option("--max-epochs", type=int, default=300, show_default=True)
@click.option("--learning-rate", type=float, default=0.1, show_default=True)
@click.option("--l2-lambda", type=float, default=1e-4, show_default=True)
@click.pass_obj
def train(obj, weak_path, splits_dir, out_path, min_df, max_epochs, learning_rate, l2_lambda):
    """Fit the TF-IDF logistic detector on the training split."""
    weak_path = weak_path or obj["data_dir"] / "weak_labeled.jsonl"
    splits_dir = splits_dir or obj["data_dir"] / "splits"
    out_path = out_path or obj["data_dir"] / "model.json"
    try:
        labeled = {wl.post.post_id: wl for wl in load_weak_labeled(weak_path)}
        train_ids = _read_split_ids(Path(splits_dir) / "train.ids")
        val_ids = _read_split_ids(Path(splits_dir) / "validation.ids")
        train_set = [labeled[i] for i in train_ids]
        val_set = [labeled[i] for i in val_ids]
        detector = SponsoredContentDetector(
            min_df=min_df, max_epochs=max_epochs,
            learning_rate=learning_rate, l2_lambda=l2_lambda,
        ).fit(
            [wl.stripped_caption for wl in train_set],
            [wl.weak_label for wl in train_set],
        )
    except (AdnotateError, OSError, KeyError) as exc:
        _fail(exc)
    detector.save(out_path)
    meta = detector.training_meta_
    click.echo(f"trained in {meta.epochs} epochs, final loss {meta.final_loss:.6f}")
    if val_set:
        preds = detector.predict_records(
            [(wl.post.post_id, wl.stripped_caption) for wl in val_set]
        )
        truth = [
            TruthItem(wl.post.post_id, wl.weak_label is corpus_mod.Label.SPONSORED,
                      wl.weak_label is corpus_mod.Label.SPONSORED)
            for wl in val_set
        ]
        report = evaluate(preds, truth)
        click.echo(
            f"validation: pos F1 {report.pos_f1:.2f}, neg F1 {report.neg_f1:.2f}, "
            f"macro {report.macro_f1:.2f}"
        )
    click.echo(f"model -> {out_path}")


@main.command()
@click.option("--model", "model_path", type=click.Path(path_type=Path), required=True)
@click.option("--in", "input_path", type=click.Path(path_type=Path), required=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=None)
@click.pass_obj
def predict(obj, model_path: Path, input_path: Path, out_path: Path | None):
    """Write a prediction CSV for a post or weak-label file."""
    out_path = out_path or obj["data_dir"] / "predictions.csv"
    try:
        detector = SponsoredContentDetector.load(model_path)
        items: list[tuple[str, str]] = []
        with open(input_path, encoding="utf-8") as handle:
            for line in handle:
                if not line.strip():
                    continue
                record = json.loads(line)
                caption = record.get("stripped_caption", record.get("caption", ""))
                items.append((record["post_id"], caption))
    except (AdnotateError, OSError, KeyError, json.JSONDecodeError) as exc:
        _fail(exc)
    preds = detector.predict_records(items)
    write_predictions(preds, out_path)
    click.echo(f"{len(preds)} predictions -> {out_path}")


@main.command("batch")
@click.option("--corpus", "corpus_path", type=click.Path(path_type=Path), default=None)
@click.option("--size", type=int, default=200, show_default=True)
@click.option("--share", type=float, default=0.15, show_default=True,
              help="Fraction of clearly-disclosed attention-check posts.")
@click.pass_obj
def batch_cmd(obj, corpus_path: Path | None, size: int, share: float):
    """Assemble an annotation batch with attention checks."""
    corpus_path = corpus_path or obj["data_dir"] / "corpus.jsonl"
    try:
        corpus = load_corpus(corpus_path)
        batch = corpus_mod.build_annotation_batch(
            corpus, size=size, disclosed_share=share, seed=obj["seed"]
        )
    except (AdnotateError, OSError) as exc:
        _fail(exc)
    batch_dir = obj["data_dir"] / "batches"
    batch_dir.mkdir(parents=True, exist_ok=True)
    out = batch_dir / f"{batch.batch_id}.json"
    corpus_mod.write_batch(batch, out)
    click.echo(f"batch {batch.batch_id} ({len(batch.items)} items, "
               f"{len(batch.disclosed_ids)} disclosed) -> {out}")


@main.command()
@click.option("--batch", "batch_path", type=click.Path(path_type=Path, exists=True),
              required=True)
@click.option("--recipe", "recipe_path", type=click.Path(path_type=Path), default=None,
              help="Prompt recipe JSON; written with defaults if absent.")
@click.option("--model", "model_path", type=click.Path(path_type=Path), default=None,
              help="Detector artifact for local fallback explanations.")
@click.option("--endpoint", default=None, help="Chat-completion base URL.")
@click.option("--endpoint-model", default=None, help="Model name at the endpoint.")
@click.pass_obj
def explain(obj, batch_path, recipe_path, model_path, endpoint, endpoint_model):
    """Generate explanations for every batch item (remote, else local fallback)."""
    settings = obj["config"].get("endpoint", {})
    base_url = endpoint or settings.get("base_url")
    model_name = endpoint_model or settings.get("model", "gpt-3.5-turbo")
    try:
        corpus = load_corpus(obj["data_dir"] / "corpus.jsonl")
        batch = load_batch(batch_path)
        recipe_path = recipe_path or obj["data_dir"] / "recipe.json"
        if Path(recipe_path).exists():
            recipe = load_recipe(recipe_path)
        else:
            recipe = default_recipe()
            save_recipe(recipe, recipe_path)
            click.echo(f"wrote default recipe -> {recipe_path}")
        client = None
        if base_url:
            client = ChatCompletionClient(EndpointConfig(
                base_url=base_url,
                model=model_name,
                api_key_env=settings.get("api_key_env", "ADNOTATE_API_KEY"),
                temperature=settings.get("temperature", 0.0),
                cache_dir=obj["data_dir"] / "completion_cache",
            ))
        detector = SponsoredContentDetector.load(model_path) if model_path else None
        stripped = {
            wl.post.post_id: wl.stripped_caption
            for wl in corpus_mod.weak_label(corpus)
        }
        explanations = []
        for post_id in batch.items:
            explanations.append(explain_post(
                post_id, stripped[post_id], recipe, client=client, detector=detector,
            ))
    except (AdnotateError, OSError, KeyError) as exc:
        _fail(exc)
    out = obj["data_dir"] / "explanations.jsonl"
    write_explanations(explanations, out)
    remote = sum(1 for e in explanations if e.source.value == "Remote")
    click.echo(f"{len(explanations)} explanations ({remote} remote) -> {out}")


def build_service(data_dir: Path) -> AnnotationService:
    """Assemble the annotation service from the files under a data directory."""
    corpus = load_corpus(data_dir / "corpus.jsonl")
    posts = {post.post_id: post.caption for post in corpus}
    explanations = {}
    explanations_path = data_dir / "explanations.jsonl"
    if explanations_path.exists():
        explanations = {e.post_id: e for e in load_explanations(explanations_path)}
    predictions = {}
    predictions_path = data_dir / "predictions.csv"
    if predictions_path.exists():
        predictions = predictions_as_map(predictions_path)
    service = AnnotationService(
        EventStore(data_dir / "store"), posts, explanations, predictions
    )
    batches_dir = data_dir / "batches"
    if batches_dir.is_dir():
        for path in sorted(batches_dir.glob("*.json")):
            batch = load_batch(path)
            if batch.batch_id not in service.batches:
                service.register_batch(batch)
    return service


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.pass_obj
def serve(obj, host: str, port: int):
    """Run the annotation HTTP API."""
    import uvicorn

    from .api import create_app

    try:
        service = build_service(obj["data_dir"])
    except (AdnotateError, OSError) as exc:
        _fail(exc)
    click.echo(f"serving {len(service.batches)} batches on {host}:{port}")
    uvicorn.run(create_app(service), host=host, port=port)


@main.command()
@click.option("--batch", "batch_id", required=True, help="Batch id to export.")
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=None)
@click.option("--expertise", type=click.Choice([e.value for e in Expertise]), default=None)
@click.pass_obj
def export(obj, batch_id: str, out_path: Path | None, expertise: str | None):
    """Export collected labels plus the subgroup manifest and disclosed ids."""
    out_path = out_path or obj["data_dir"] / "labels.csv"
    try:
        service = build_service(obj["data_dir"])
        labels_csv, manifest = service.export_labels(
            batch_id, expertise=Expertise(expertise) if expertise else None
        )
    except (AdnotateError, OSError) as exc:
        _fail(exc)
    out_path = Path(out_path)
    out_path.write_text(labels_csv, encoding="utf-8")
    manifest_path = out_path.with_suffix(".manifest.json")
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    disclosed_path = out_path.with_suffix(".disclosed.txt")
    disclosed_path.write_text(
        "\n".join(manifest["disclosed_ids"]) + "\n", encoding="utf-8"
    )
    click.echo(f"labels -> {out_path}")
    click.echo(f"manifest -> {manifest_path}")
    click.echo(f"disclosed ids -> {disclosed_path}")


@main.command()
@click.option("--labels", "labels_path", type=click.Path(path_type=Path, exists=True),
              required=True)
@click.option("--disclosed", "disclosed_path", type=click.Path(path_type=Path, exists=True),
              required=True)
@click.option("--manifest", "manifest_path", type=click.Path(path_type=Path, exists=True),
              required=True)
@click.option("--predictions", "predictions_path", type=click.Path(path_type=Path),
              default=None)
@click.option("--model-id", default=None, help="Select one model from the predictions file.")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=None)
@click.pass_obj
def report(obj, labels_path, disclosed_path, manifest_path, predictions_path,
           model_id, out_dir):
    """Recompute the agreement report bundle from exported files."""
    out_dir = out_dir or obj["data_dir"] / "reports"
    try:
        bundle = replay_report(
            labels_path, disclosed_path, manifest_path,
            predictions_path=predictions_path, model_id=model_id,
        )
    except (AdnotateError, OSError) as exc:
        _fail(exc)
    paths = write_report_files(bundle, out_dir)
    click.echo(f"report -> {paths['json']}")
    click.echo(f"tables -> {paths['text']}")


if __name__ == "__main__":
    main(sys.argv[1:])
