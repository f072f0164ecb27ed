import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from adnotate.cli import main

from .synth import synthetic_corpus_lines


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def corpus_file(tmp_path):
    path = tmp_path / "posts.jsonl"
    path.write_text("\n".join(synthetic_corpus_lines(seed=5, n_posts=400)) + "\n")
    return path


def run(runner, data_dir, *args, seed=3):
    result = runner.invoke(
        main, ["--data-dir", str(data_dir), "--seed", str(seed), *args],
        catch_exceptions=False,
    )
    assert result.exit_code == 0, result.output
    return result


class TestPipeline:
    def test_ingest_weak_label_split_train_predict(self, runner, tmp_path, corpus_file):
        data_dir = tmp_path / "data"
        result = run(runner, data_dir, "ingest", str(corpus_file))
        assert "ingested 400 posts" in result.output

        run(runner, data_dir, "weak-label")
        assert (data_dir / "weak_labeled.jsonl").exists()

        result = run(runner, data_dir, "split")
        assert (data_dir / "splits" / "train.ids").exists()
        header = json.loads(
            (data_dir / "splits" / "train.ids").read_text().splitlines()[0]
        )
        assert header["seed"] == 3

        result = run(runner, data_dir, "train", "--min-df", "1", "--max-epochs", "50")
        assert (data_dir / "model.json").exists()
        assert "validation" in result.output

        result = run(
            runner, data_dir, "predict",
            "--model", str(data_dir / "model.json"),
            "--in", str(data_dir / "weak_labeled.jsonl"),
        )
        predictions = (data_dir / "predictions.csv").read_text().splitlines()
        assert predictions[0] == "post_id,label,probability,model_id"
        assert len(predictions) == 401

    def test_ingest_rejects_bad_file(self, runner, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("{not json\n")
        result = runner.invoke(main, ["--data-dir", str(tmp_path / "d"), "ingest", str(bad)])
        assert result.exit_code != 0
        assert "line 1" in result.output

    def test_batch_command(self, runner, tmp_path, corpus_file):
        data_dir = tmp_path / "data"
        run(runner, data_dir, "ingest", str(corpus_file))
        result = run(runner, data_dir, "batch", "--size", "40")
        assert "40 items" in result.output
        batch_files = list((data_dir / "batches").glob("*.json"))
        assert len(batch_files) == 1
        batch = json.loads(batch_files[0].read_text())
        assert len(batch["items"]) == 40
        assert len(batch["disclosed_ids"]) == 6

    def test_batch_deterministic_across_runs(self, runner, tmp_path, corpus_file):
        first_dir, second_dir = tmp_path / "d1", tmp_path / "d2"
        for data_dir in (first_dir, second_dir):
            run(runner, data_dir, "ingest", str(corpus_file))
            run(runner, data_dir, "batch", "--size", "40")
        first = next((first_dir / "batches").glob("*.json")).read_bytes()
        second = next((second_dir / "batches").glob("*.json")).read_bytes()
        assert first == second


class TestExplainCommand:
    def test_local_fallback_explanations(self, runner, tmp_path, corpus_file):
        data_dir = tmp_path / "data"
        run(runner, data_dir, "ingest", str(corpus_file))
        run(runner, data_dir, "weak-label")
        run(runner, data_dir, "split")
        run(runner, data_dir, "train", "--min-df", "1", "--max-epochs", "50")
        run(runner, data_dir, "batch", "--size", "20")
        batch_path = next((data_dir / "batches").glob("*.json"))
        result = run(
            runner, data_dir, "explain",
            "--batch", str(batch_path), "--model", str(data_dir / "model.json"),
        )
        assert "(0 remote)" in result.output
        lines = (data_dir / "explanations.jsonl").read_text().strip().splitlines()
        assert len(lines) == 20
        assert (data_dir / "recipe.json").exists()


class TestReportCommand:
    def test_replay_from_files(self, runner, tmp_path):
        labels = tmp_path / "labels.csv"
        labels.write_text(
            "annotator_id,post_id,label\n"
            "a@without,p1,Sponsored\na@without,p2,NonSponsored\n"
            "b@without,p1,Sponsored\nb@without,p2,NonSponsored\n"
        )
        disclosed = tmp_path / "disclosed.txt"
        disclosed.write_text("p1\n")
        manifest = tmp_path / "manifest.json"
        manifest.write_text(json.dumps({
            "groups": {"all": ["a@without", "b@without"]}, "pairs": [],
        }))
        data_dir = tmp_path / "data"
        result = run(
            runner, data_dir, "report",
            "--labels", str(labels), "--disclosed", str(disclosed),
            "--manifest", str(manifest),
        )
        report = json.loads((data_dir / "reports" / "report.json").read_text())
        assert report["groups"]["all"]["agreement"]["alpha_pct"] == 100.0
        text = (data_dir / "reports" / "report.txt").read_text()
        assert "Group agreement" in text
