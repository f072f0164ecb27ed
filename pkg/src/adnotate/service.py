"""Annotation backend: per-annotator projects over a shared batch, label and
survey persistence, attention-check tracking, exports, and report replay.

Every project is private: item order is a per-project seeded permutation and
labels are never visible across projects. State persists through an
append-only event log with periodic snapshots; an acknowledged write is on
disk before the caller sees the acknowledgement.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import threading
from dataclasses import dataclass, field
from functools import wraps
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import agreement
from .agreement import LabelMatrix, ReportBundle, build_report
from .corpus import AnnotationBatch, Label
from .detector import import_predictions
from .errors import (
    ConflictError,
    NotFoundError,
    ParseError,
    ValidationError,
)
from .explainer import Explanation, serialize_explanation, strip_label_line

EXPLANATION_DELIMITER = "— AI explanation —"


class Expertise(str, Enum):
    NO_EXPERIENCE = "NoExperience"
    SOME_EXPERIENCE = "SomeExperience"
    LEGAL_EXPERT = "LegalExpert"


class Setup(str, Enum):
    WITH_EXPLANATIONS = "WithExplanations"
    WITHOUT_EXPLANATIONS = "WithoutExplanations"


_SETUP_CODES = {
    Setup.WITH_EXPLANATIONS: "with",
    Setup.WITHOUT_EXPLANATIONS: "without",
}


@dataclass(frozen=True)
class Annotator:
    annotator_id: str  # opaque, never carries identifying information
    expertise: Expertise


@dataclass
class Project:
    project_id: str
    annotator_id: str
    expertise: Expertise
    setup: Setup
    batch_id: str
    item_order: list[str]
    created_at: str


@dataclass(frozen=True)
class LabelRecord:
    project_id: str
    post_id: str
    label: Label
    labeled_at: str


@dataclass(frozen=True)
class ItemView:
    post_id: str
    caption: str
    explanation_block: str | None
    position: int
    total: int


@dataclass(frozen=True)
class AttentionReport:
    disclosed_seen: int
    disclosed_correct: int
    accuracy: float | None


SURVEY_ASPECTS = ("Reasoning", "SpecificWords", "ClearExamples", "Other", "None")


@dataclass(frozen=True)
class SurveyResponse:
    q1_helpful: int
    q2_accurate: int
    q3_agree_freq: int
    q4_confidence: bool
    q5_aspects: tuple[str, ...]
    q6_understanding: str
    q7_improvements: str
    q5_other_text: str = ""

    def validate(self) -> None:
        for name in ("q1_helpful", "q2_accurate", "q3_agree_freq"):
            value = getattr(self, name)
            if not isinstance(value, int) or not 1 <= value <= 5:
                raise ValidationError(f"{name} must be an integer in 1..5, got {value!r}")
        unknown = set(self.q5_aspects) - set(SURVEY_ASPECTS)
        if unknown:
            raise ValidationError(f"unknown survey aspects: {sorted(unknown)}")
        if "Other" in self.q5_aspects and not self.q5_other_text.strip():
            raise ValidationError("aspect 'Other' requires q5_other_text")


class EventStore:
    """Append-only JSONL event log plus an atomically-replaced snapshot."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.log_path = self.directory / "events.log"
        self.snapshot_path = self.directory / "snapshot.json"
        self._count = sum(1 for _line in open(self.log_path)) if self.log_path.exists() else 0

    @property
    def event_count(self) -> int:
        return self._count

    def append(self, event_type: str, payload: dict) -> None:
        record = {"type": event_type, **payload}
        with open(self.log_path, "a", encoding="utf-8") as handle:
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")
            handle.flush()
            os.fsync(handle.fileno())
        self._count += 1

    def save_snapshot(self, state: dict) -> None:
        temp = self.snapshot_path.with_suffix(".tmp")
        with open(temp, "w", encoding="utf-8") as handle:
            json.dump({"event_count": self._count, "state": state}, handle, ensure_ascii=False)
        os.replace(temp, self.snapshot_path)

    def load(self) -> tuple[dict | None, list[dict]]:
        """Latest snapshot state (or None) and the events appended after it."""
        state = None
        skip = 0
        if self.snapshot_path.exists():
            with open(self.snapshot_path, encoding="utf-8") as handle:
                snapshot = json.load(handle)
            state = snapshot["state"]
            skip = snapshot["event_count"]
        events: list[dict] = []
        if self.log_path.exists():
            with open(self.log_path, encoding="utf-8") as handle:
                for index, line in enumerate(handle):
                    if index < skip or not line.strip():
                        continue
                    events.append(json.loads(line))
        return state, events


def _permutation_seed(seed: int, annotator_id: str, setup: Setup, batch_id: str) -> int:
    # distinct per (annotator, setup): the same person labelling both setups
    # gets independent shuffles even under one global seed
    digest = hashlib.sha256(
        f"{seed}|{annotator_id}|{setup.value}|{batch_id}".encode("utf-8")
    ).digest()
    return int.from_bytes(digest[:8], "big")


def _project_id(annotator_id: str, setup: Setup, batch_id: str) -> str:
    digest = hashlib.sha1(
        f"{annotator_id}|{setup.value}|{batch_id}".encode("utf-8")
    ).hexdigest()
    return f"proj-{digest[:10]}"


def render_explanation_block(explanation: Explanation) -> str:
    """Delimited display block: indicators and rationale, never the label line."""
    body = strip_label_line(serialize_explanation(explanation))
    return f"{EXPLANATION_DELIMITER}\n{body}"


def _locked(method):
    """Serialize service operations; handlers may run on server threadpools."""
    @wraps(method)
    def wrapper(self, *args, **kwargs):
        with self._lock:
            return method(self, *args, **kwargs)
    return wrapper


class AnnotationService:
    """Single-process annotation backend over an event store.

    ``posts`` maps post_id to the caption annotators see; ``explanations``
    supplies the structured explanations shown in the WithExplanations setup.
    """

    def __init__(
        self,
        store: EventStore,
        posts: Mapping[str, str],
        explanations: Mapping[str, Explanation] | None = None,
        predictions: Mapping[str, str] | None = None,
        clock: Callable[[], datetime] | None = None,
        snapshot_every: int = 200,
    ):
        self.store = store
        self.posts = dict(posts)
        self.explanations = dict(explanations or {})
        self.predictions = dict(predictions or {})
        self.clock = clock or (lambda: datetime.now(timezone.utc))
        self.snapshot_every = snapshot_every

        self.batches: dict[str, AnnotationBatch] = {}
        self.projects: dict[str, Project] = {}
        self._by_triple: dict[tuple[str, str, str], str] = {}
        self.labels: dict[str, dict[str, LabelRecord]] = {}
        self.surveys: dict[str, dict] = {}
        self._appends_since_snapshot = 0
        # one writer at a time: HTTP servers run handlers on a threadpool,
        # and both the event log and the in-memory maps assume serialized
        # mutation; reads that iterate shared state take the same lock
        self._lock = threading.RLock()

        state, events = self.store.load()
        if state is not None:
            self._restore(state)
        for event in events:
            self._apply(event)

    # ------------------------------------------------------------------
    # state persistence

    def _restore(self, state: dict) -> None:
        for data in state["batches"].values():
            batch = AnnotationBatch(**data)
            self.batches[batch.batch_id] = batch
        for data in state["projects"].values():
            project = Project(
                project_id=data["project_id"],
                annotator_id=data["annotator_id"],
                expertise=Expertise(data["expertise"]),
                setup=Setup(data["setup"]),
                batch_id=data["batch_id"],
                item_order=list(data["item_order"]),
                created_at=data["created_at"],
            )
            self.projects[project.project_id] = project
            self._by_triple[
                (project.annotator_id, project.setup.value, project.batch_id)
            ] = project.project_id
        for project_id, records in state["labels"].items():
            self.labels[project_id] = {
                post_id: LabelRecord(
                    project_id=project_id, post_id=post_id,
                    label=Label(entry["label"]), labeled_at=entry["at"],
                )
                for post_id, entry in records.items()
            }
        self.surveys = {pid: dict(answers) for pid, answers in state["surveys"].items()}

    def _state(self) -> dict:
        return {
            "batches": {bid: vars(batch) for bid, batch in self.batches.items()},
            "projects": {
                pid: {
                    "project_id": p.project_id,
                    "annotator_id": p.annotator_id,
                    "expertise": p.expertise.value,
                    "setup": p.setup.value,
                    "batch_id": p.batch_id,
                    "item_order": p.item_order,
                    "created_at": p.created_at,
                }
                for pid, p in self.projects.items()
            },
            "labels": {
                pid: {
                    post_id: {"label": record.label.value, "at": record.labeled_at}
                    for post_id, record in records.items()
                }
                for pid, records in self.labels.items()
            },
            "surveys": self.surveys,
        }

    def _append(self, event_type: str, payload: dict) -> None:
        self.store.append(event_type, payload)
        self._appends_since_snapshot += 1

    def _maybe_snapshot(self) -> None:
        # callers invoke this after updating memory, never between the log
        # append and the state change, so a snapshot always covers the events
        # its event_count claims
        if self._appends_since_snapshot >= self.snapshot_every:
            self.save_snapshot()

    @_locked
    def save_snapshot(self) -> None:
        self.store.save_snapshot(self._state())
        self._appends_since_snapshot = 0

    def _apply(self, event: dict) -> None:
        kind = event["type"]
        if kind == "batch_registered":
            batch = AnnotationBatch(**event["batch"])
            self.batches[batch.batch_id] = batch
        elif kind == "project_created":
            data = event["project"]
            project = Project(
                project_id=data["project_id"],
                annotator_id=data["annotator_id"],
                expertise=Expertise(data["expertise"]),
                setup=Setup(data["setup"]),
                batch_id=data["batch_id"],
                item_order=list(data["item_order"]),
                created_at=data["created_at"],
            )
            self.projects[project.project_id] = project
            self._by_triple[
                (project.annotator_id, project.setup.value, project.batch_id)
            ] = project.project_id
        elif kind == "label_submitted":
            record = LabelRecord(
                project_id=event["project_id"], post_id=event["post_id"],
                label=Label(event["label"]), labeled_at=event["at"],
            )
            self.labels.setdefault(record.project_id, {})[record.post_id] = record
        elif kind == "survey_submitted":
            self.surveys[event["project_id"]] = event["answers"]
        else:
            raise ParseError(f"unknown event type {kind!r} in log")

    # ------------------------------------------------------------------
    # operations

    @_locked
    def register_batch(self, batch: AnnotationBatch) -> None:
        if batch.batch_id in self.batches:
            raise ConflictError(f"batch {batch.batch_id!r} already registered")
        missing = [post_id for post_id in batch.items if post_id not in self.posts]
        if missing:
            raise ValidationError(f"batch names unknown posts: {missing[:5]}")
        self._append("batch_registered", {"batch": vars(batch)})
        self.batches[batch.batch_id] = batch
        self._maybe_snapshot()

    @_locked
    def create_project(
        self, annotator: Annotator, batch_id: str, setup: Setup, seed: int
    ) -> Project:
        batch = self.batches.get(batch_id)
        if batch is None:
            raise NotFoundError(f"unknown batch {batch_id!r}")
        triple = (annotator.annotator_id, setup.value, batch_id)
        if triple in self._by_triple:
            raise ConflictError(
                f"project already exists for {annotator.annotator_id!r} in {setup.value}"
            )
        if setup is Setup.WITH_EXPLANATIONS:
            unexplained = [p for p in batch.items if p not in self.explanations]
            if unexplained:
                raise ValidationError(
                    f"{len(unexplained)} batch posts lack stored explanations "
                    f"(first: {unexplained[0]!r})"
                )
        rng = np.random.default_rng(
            _permutation_seed(seed, annotator.annotator_id, setup, batch_id)
        )
        order = [batch.items[i] for i in rng.permutation(len(batch.items))]
        project = Project(
            project_id=_project_id(annotator.annotator_id, setup, batch_id),
            annotator_id=annotator.annotator_id,
            expertise=annotator.expertise,
            setup=setup,
            batch_id=batch_id,
            item_order=order,
            created_at=self.clock().isoformat(),
        )
        self._append("project_created", {"project": {
            "project_id": project.project_id,
            "annotator_id": project.annotator_id,
            "expertise": project.expertise.value,
            "setup": project.setup.value,
            "batch_id": project.batch_id,
            "item_order": project.item_order,
            "created_at": project.created_at,
        }})
        self.projects[project.project_id] = project
        self._by_triple[triple] = project.project_id
        self._maybe_snapshot()
        return project

    def _project(self, project_id: str) -> Project:
        project = self.projects.get(project_id)
        if project is None:
            raise NotFoundError(f"unknown project {project_id!r}")
        return project

    @_locked
    def next_item(self, project_id: str) -> ItemView | None:
        """First unlabeled item in this project's order; None when done."""
        project = self._project(project_id)
        labeled = self.labels.get(project_id, {})
        for index, post_id in enumerate(project.item_order):
            if post_id in labeled:
                continue
            block = None
            if project.setup is Setup.WITH_EXPLANATIONS:
                block = render_explanation_block(self.explanations[post_id])
            return ItemView(
                post_id=post_id,
                caption=self.posts[post_id],
                explanation_block=block,
                position=index + 1,
                total=len(project.item_order),
            )
        return None

    @_locked
    def submit_label(self, project_id: str, post_id: str, label: Label) -> LabelRecord:
        project = self._project(project_id)
        if post_id not in set(project.item_order):
            raise ValidationError(f"post {post_id!r} is not part of this project's batch")
        record = LabelRecord(
            project_id=project_id, post_id=post_id, label=label,
            labeled_at=self.clock().isoformat(),
        )
        self._append("label_submitted", {
            "project_id": project_id, "post_id": post_id,
            "label": label.value, "at": record.labeled_at,
        })
        self.labels.setdefault(project_id, {})[post_id] = record
        self._maybe_snapshot()
        return record

    @_locked
    def progress(self, project_id: str) -> int:
        self._project(project_id)
        return len(self.labels.get(project_id, {}))

    @_locked
    def attention_report(self, project_id: str) -> AttentionReport:
        project = self._project(project_id)
        batch = self.batches[project.batch_id]
        labeled = self.labels.get(project_id, {})
        seen = [post_id for post_id in batch.disclosed_ids if post_id in labeled]
        correct = sum(1 for post_id in seen if labeled[post_id].label is Label.SPONSORED)
        return AttentionReport(
            disclosed_seen=len(seen),
            disclosed_correct=correct,
            accuracy=correct / len(seen) if seen else None,
        )

    @_locked
    def submit_survey(self, project_id: str, response: SurveyResponse) -> None:
        project = self._project(project_id)
        if project.setup is not Setup.WITH_EXPLANATIONS:
            raise ValidationError("the survey targets explanation-setup projects only")
        if project_id in self.surveys:
            raise ConflictError("survey already submitted for this project")
        response.validate()
        answers = {
            "q1_helpful": response.q1_helpful,
            "q2_accurate": response.q2_accurate,
            "q3_agree_freq": response.q3_agree_freq,
            "q4_confidence": response.q4_confidence,
            "q5_aspects": list(response.q5_aspects),
            "q5_other_text": response.q5_other_text,
            "q6_understanding": response.q6_understanding,
            "q7_improvements": response.q7_improvements,
        }
        self._append("survey_submitted", {
            "project_id": project_id, "answers": answers, "at": self.clock().isoformat(),
        })
        self.surveys[project_id] = answers
        self._maybe_snapshot()

    # ------------------------------------------------------------------
    # exports and reports

    def _row_id(self, project: Project) -> str:
        return f"{project.annotator_id}@{_SETUP_CODES[project.setup]}"

    @_locked
    def export_labels(
        self,
        batch_id: str,
        expertise: Expertise | None = None,
        setup: Setup | None = None,
    ) -> tuple[str, dict]:
        """Label CSV plus a manifest of row groups for the agreement replay.

        Row identity is annotator_id qualified by setup, so annotators who
        labelled both setups contribute two independent matrix rows.
        """
        if batch_id not in self.batches:
            raise NotFoundError(f"unknown batch {batch_id!r}")
        batch = self.batches[batch_id]
        projects = [
            p for p in self.projects.values()
            if p.batch_id == batch_id
            and (expertise is None or p.expertise is expertise)
            and (setup is None or p.setup is setup)
        ]
        projects.sort(key=lambda p: (self._row_id(p)))

        buffer = io.StringIO()
        writer = csv.writer(buffer)
        writer.writerow(["annotator_id", "post_id", "label"])
        for project in projects:
            records = self.labels.get(project.project_id, {})
            for post_id in sorted(records):
                writer.writerow([self._row_id(project), post_id, records[post_id].label.value])

        groups: dict[str, list[str]] = {}
        pairs: list[list[str]] = []

        def add_group(name: str, members: list[str]):
            if members:
                groups[name] = sorted(members)

        without = [self._row_id(p) for p in projects if p.setup is Setup.WITHOUT_EXPLANATIONS]
        with_expl = [self._row_id(p) for p in projects if p.setup is Setup.WITH_EXPLANATIONS]
        add_group("no_explanations", without)
        add_group("with_explanations", with_expl)
        if without and with_expl:
            pairs.append(["no_explanations", "with_explanations"])

        by_annotator: dict[str, set[Setup]] = {}
        for project in projects:
            by_annotator.setdefault(project.annotator_id, set()).add(project.setup)
        both_ids = {a for a, setups in by_annotator.items() if len(setups) == 2}

        for level in Expertise:
            tag = level.value.lower()
            level_without = [self._row_id(p) for p in projects
                             if p.expertise is level and p.setup is Setup.WITHOUT_EXPLANATIONS]
            level_with = [self._row_id(p) for p in projects
                          if p.expertise is level and p.setup is Setup.WITH_EXPLANATIONS]
            add_group(f"{tag}_no_explanations", level_without)
            add_group(f"{tag}_with_explanations", level_with)
            if level_without and level_with:
                pairs.append([f"{tag}_no_explanations", f"{tag}_with_explanations"])

        both_without = [self._row_id(p) for p in projects
                        if p.annotator_id in both_ids and p.setup is Setup.WITHOUT_EXPLANATIONS]
        both_with = [self._row_id(p) for p in projects
                     if p.annotator_id in both_ids and p.setup is Setup.WITH_EXPLANATIONS]
        add_group("labelled_both_no_explanations", both_without)
        add_group("labelled_both_with_explanations", both_with)
        if both_without and both_with:
            pairs.append(["labelled_both_no_explanations", "labelled_both_with_explanations"])

        manifest = {
            "batch_id": batch_id,
            "disclosed_ids": list(batch.disclosed_ids),
            "groups": groups,
            "pairs": pairs,
            "rows": {
                self._row_id(p): {
                    "annotator_id": p.annotator_id,
                    "setup": p.setup.value,
                    "expertise": p.expertise.value,
                }
                for p in projects
            },
        }
        return buffer.getvalue(), manifest

    @_locked
    def agreement_report(self, batch_id: str) -> ReportBundle:
        """Agreement report over the labels collected so far for a batch."""
        labels_csv, manifest = self.export_labels(batch_id)
        records = parse_label_csv(io.StringIO(labels_csv))
        matrix = LabelMatrix.from_records(records)
        preds = self.predictions or None
        if preds is not None:
            preds = {post_id: preds[post_id] for post_id in matrix.items if post_id in preds}
            if len(preds) < len(matrix.items):
                preds = None  # partial prediction coverage: skip the bias probe
        return build_report(
            matrix,
            [i for i in manifest["disclosed_ids"] if i in set(matrix.items)],
            {gid: members for gid, members in manifest["groups"].items()},
            preds=preds,
            pairs=[tuple(pair) for pair in manifest["pairs"]],
        )


# ---------------------------------------------------------------------------
# replay from exported files

def parse_label_csv(source: io.TextIOBase | str | Path) -> list[tuple[str, str, str]]:
    """(annotator_id, post_id, label) rows; schema errors carry row numbers."""
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8", newline="") as handle:
            return parse_label_csv(handle)
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["annotator_id", "post_id", "label"]:
        raise ParseError(f"expected header annotator_id,post_id,label, got {header}", line=1)
    records: list[tuple[str, str, str]] = []
    for number, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise ParseError(f"expected 3 columns, got {len(row)}", line=number)
        annotator_id, post_id, label = row
        if label not in (Label.SPONSORED.value, Label.NON_SPONSORED.value):
            raise ParseError(f"unknown label {label!r}", line=number)
        records.append((annotator_id, post_id, label))
    return records


def load_disclosed_ids(path: str | Path) -> list[str]:
    with open(path, encoding="utf-8") as handle:
        return [line.strip() for line in handle if line.strip()]


def load_subgroup_manifest(path: str | Path) -> tuple[dict[str, list[str]], list[tuple[str, str]]]:
    with open(path, encoding="utf-8") as handle:
        data = json.load(handle)
    groups = {gid: list(members) for gid, members in data["groups"].items()}
    pairs = [tuple(pair) for pair in data.get("pairs", [])]
    return groups, pairs


def predictions_as_map(path: str | Path, model_id: str | None = None) -> dict[str, str]:
    preds = import_predictions(path)
    if model_id is not None:
        preds = [p for p in preds if p.model_id == model_id]
    mapping: dict[str, str] = {}
    for pred in preds:
        if pred.post_id in mapping and mapping[pred.post_id] != pred.label.value:
            raise ValidationError(
                f"conflicting predictions for {pred.post_id!r}; pass model_id to choose one"
            )
        mapping[pred.post_id] = pred.label.value
    return mapping


def replay_report(
    labels_path: str | Path,
    disclosed_path: str | Path,
    manifest_path: str | Path,
    predictions_path: str | Path | None = None,
    model_id: str | None = None,
) -> ReportBundle:
    """Recompute the full agreement report bundle from exported files."""
    records = parse_label_csv(labels_path)
    matrix = LabelMatrix.from_records(records)
    disclosed = [i for i in load_disclosed_ids(disclosed_path) if i in set(matrix.items)]
    groups, pairs = load_subgroup_manifest(manifest_path)
    preds = None
    if predictions_path is not None:
        preds = predictions_as_map(predictions_path, model_id=model_id)
    return build_report(matrix, disclosed, groups, preds=preds, pairs=pairs)


def write_report_files(bundle: ReportBundle, directory: str | Path) -> dict[str, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    json_path = directory / "report.json"
    text_path = directory / "report.txt"
    json_path.write_text(bundle.to_json() + "\n", encoding="utf-8")
    text_path.write_text(agreement.render_text(bundle), encoding="utf-8")
    return {"json": json_path, "text": text_path}
