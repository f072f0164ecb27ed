"""Post corpus ingestion, disclosure scanning, weak labels, sampling, and splits.

All operations are pure given (input, seed). Seeded randomness uses numpy's
PCG64 generator; the algorithm name is recorded in split manifests so exports
stay reproducible.
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Iterator

import numpy as np

from .errors import CapacityError, ConflictError, ParseError, ValidationError

PRNG_NAME = "pcg64"

DISCLOSURE_TAGS = ("#ad", "#advertisement", "#spons", "#sponsored")

# Whole-hashtag token match: the '#' must not ride on a preceding word and the
# tag must not continue into a longer hashtag (#adventure is not #ad).
_DISCLOSURE_RE = re.compile(
    r"(?<!\w)#(?:ad|advertisement|spons|sponsored)(?!\w)", re.IGNORECASE
)

MICRO_MIN_FOLLOWERS = 100_000
MEGA_MIN_FOLLOWERS = 600_000


class FollowerTier(str, Enum):
    MICRO = "Micro"
    MEGA = "Mega"


class Label(str, Enum):
    SPONSORED = "Sponsored"
    NON_SPONSORED = "NonSponsored"


@dataclass(frozen=True)
class Post:
    post_id: str
    influencer_id: str
    caption: str
    published_at: datetime
    followers: int

    @property
    def follower_tier(self) -> FollowerTier:
        return FollowerTier.MEGA if self.followers >= MEGA_MIN_FOLLOWERS else FollowerTier.MICRO


@dataclass(frozen=True)
class DisclosureScan:
    post_id: str
    disclosed: bool
    matched_tags: tuple[str, ...]


@dataclass(frozen=True)
class WeakLabeledPost:
    post: Post
    weak_label: Label
    stripped_caption: str


@dataclass
class Corpus:
    posts: list[Post] = field(default_factory=list)

    def __post_init__(self):
        self._by_id: dict[str, Post] = {}
        for post in self.posts:
            if post.post_id in self._by_id:
                raise ConflictError(f"duplicate post_id {post.post_id!r}")
            self._by_id[post.post_id] = post

    def __len__(self) -> int:
        return len(self.posts)

    def __iter__(self) -> Iterator[Post]:
        return iter(self.posts)

    def get(self, post_id: str) -> Post | None:
        return self._by_id.get(post_id)


def _parse_timestamp(raw: str) -> datetime:
    text = raw.replace("Z", "+00:00") if raw.endswith("Z") else raw
    stamp = datetime.fromisoformat(text)
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    return stamp.astimezone(timezone.utc)


_REQUIRED_FIELDS = ("post_id", "influencer_id", "caption", "published_at", "followers")


def parse_post_record(record: dict) -> Post:
    for name in _REQUIRED_FIELDS:
        if name not in record:
            raise ParseError(f"missing field {name!r}")
    followers = record["followers"]
    if not isinstance(followers, int) or isinstance(followers, bool):
        raise ParseError(f"followers must be an integer, got {followers!r}")
    if followers < MICRO_MIN_FOLLOWERS:
        raise ParseError(
            f"follower count {followers} is below the micro tier minimum "
            f"({MICRO_MIN_FOLLOWERS})"
        )
    if not isinstance(record["caption"], str):
        raise ParseError("caption must be a string")
    try:
        published_at = _parse_timestamp(record["published_at"])
    except (TypeError, ValueError) as exc:
        raise ParseError(f"bad published_at {record['published_at']!r}: {exc}") from exc
    return Post(
        post_id=str(record["post_id"]),
        influencer_id=str(record["influencer_id"]),
        caption=record["caption"],
        published_at=published_at,
        followers=followers,
    )


def ingest_posts(stream: Iterable[str] | IO[str]) -> Corpus:
    """Parse line-delimited JSON post records into a corpus.

    Raises ParseError with the 1-based line number for malformed lines and
    ConflictError for duplicate post ids; blank lines are skipped.
    """
    posts: list[Post] = []
    seen: set[str] = set()
    for number, line in enumerate(stream, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", line=number) from exc
        if not isinstance(record, dict):
            raise ParseError("record must be a JSON object", line=number)
        try:
            post = parse_post_record(record)
        except ParseError as exc:
            raise ParseError(str(exc), line=number) from exc
        if post.post_id in seen:
            raise ConflictError(f"duplicate post_id {post.post_id!r} at line {number}")
        seen.add(post.post_id)
        posts.append(post)
    return Corpus(posts)


def scan_caption(caption: str) -> tuple[str, ...]:
    """Canonical lowercase disclosure tags present in a caption, first-seen order."""
    found: list[str] = []
    for match in _DISCLOSURE_RE.finditer(caption):
        tag = match.group(0).lower()
        if tag not in found:
            found.append(tag)
    return tuple(found)


def scan_disclosures(post: Post) -> DisclosureScan:
    tags = scan_caption(post.caption)
    return DisclosureScan(post_id=post.post_id, disclosed=bool(tags), matched_tags=tags)


def _remove_span(text: str, start: int, end: int) -> str:
    before_ws = start == 0 or text[start - 1].isspace()
    if before_ws and end < len(text) and text[end].isspace():
        while end < len(text) and text[end].isspace():
            end += 1
    elif start > 0 and text[start - 1].isspace():
        while start > 0 and text[start - 1].isspace():
            start -= 1
    return text[:start] + text[end:]


def strip_disclosures(caption: str) -> str:
    """Remove every disclosure hashtag token plus the whitespace it owned.

    Re-scans after each removal so captions like ``#ad#ad`` cannot leave a
    reassembled tag behind.
    """
    while True:
        match = _DISCLOSURE_RE.search(caption)
        if match is None:
            return caption
        caption = _remove_span(caption, match.start(), match.end())


def weak_label(corpus: Corpus) -> list[WeakLabeledPost]:
    """Disclosure-derived labels: disclosed posts become Sponsored with the
    disclosure hashtags stripped from the caption; the rest stay untouched."""
    labeled: list[WeakLabeledPost] = []
    for post in corpus:
        if scan_caption(post.caption):
            labeled.append(WeakLabeledPost(
                post=post,
                weak_label=Label.SPONSORED,
                stripped_caption=strip_disclosures(post.caption),
            ))
        else:
            labeled.append(WeakLabeledPost(
                post=post,
                weak_label=Label.NON_SPONSORED,
                stripped_caption=post.caption,
            ))
    return labeled


def undersample(labeled: list[WeakLabeledPost], seed: int) -> list[WeakLabeledPost]:
    """Keep all n positives and draw min(2n, available) negatives without
    replacement; deterministic for a fixed seed."""
    positives = [wl for wl in labeled if wl.weak_label is Label.SPONSORED]
    negatives = [wl for wl in labeled if wl.weak_label is Label.NON_SPONSORED]
    wanted = min(2 * len(positives), len(negatives))
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(negatives), size=wanted, replace=False) if wanted else []
    return positives + [negatives[i] for i in chosen]


@dataclass(frozen=True)
class SplitSpec:
    cutoff_year: int = 2022
    seed: int = 0


@dataclass
class DatasetSplit:
    train: list[WeakLabeledPost]
    validation: list[WeakLabeledPost]
    test: list[WeakLabeledPost]
    seed: int
    cutoff_year: int


def temporal_split(balanced: list[WeakLabeledPost], spec: SplitSpec) -> DatasetSplit:
    """Seeded 90/10 shuffle-split of pre-cutoff posts; the cutoff year is the test set.

    Posts published after the cutoff year cannot be placed without breaking the
    split contract and are rejected.
    """
    if not balanced:
        raise ValidationError("cannot split an empty post list")
    late = [wl for wl in balanced if wl.post.published_at.year > spec.cutoff_year]
    if late:
        raise ValidationError(
            f"{len(late)} posts published after cutoff year {spec.cutoff_year}"
        )
    pre = [wl for wl in balanced if wl.post.published_at.year < spec.cutoff_year]
    test = [wl for wl in balanced if wl.post.published_at.year == spec.cutoff_year]
    if not pre:
        raise ValidationError(f"no posts before cutoff year {spec.cutoff_year}; cannot train")
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(len(pre))
    n_train = int(len(pre) * 0.9)
    train = [pre[i] for i in order[:n_train]]
    validation = [pre[i] for i in order[n_train:]]
    return DatasetSplit(
        train=train,
        validation=validation,
        test=test,
        seed=spec.seed,
        cutoff_year=spec.cutoff_year,
    )


@dataclass
class AnnotationBatch:
    batch_id: str
    items: list[str]
    disclosed_ids: list[str]
    disclosed_share: float
    size: int


def build_annotation_batch(
    corpus: Corpus,
    size: int = 200,
    disclosed_share: float = 0.15,
    seed: int = 0,
) -> AnnotationBatch:
    """Seeded batch with round(size * share) clearly-disclosed attention checks."""
    disclosed_pool = [p.post_id for p in corpus if scan_caption(p.caption)]
    undisclosed_pool = [p.post_id for p in corpus if not scan_caption(p.caption)]
    n_disclosed = round(size * disclosed_share)
    n_undisclosed = size - n_disclosed
    if len(disclosed_pool) < n_disclosed:
        raise CapacityError(
            f"need {n_disclosed} disclosed posts, corpus has {len(disclosed_pool)}"
        )
    if len(undisclosed_pool) < n_undisclosed:
        raise CapacityError(
            f"need {n_undisclosed} undisclosed posts, corpus has {len(undisclosed_pool)}"
        )
    rng = np.random.default_rng(seed)
    disclosed = [disclosed_pool[i]
                 for i in rng.choice(len(disclosed_pool), size=n_disclosed, replace=False)] \
        if n_disclosed else []
    undisclosed = [undisclosed_pool[i]
                   for i in rng.choice(len(undisclosed_pool), size=n_undisclosed, replace=False)] \
        if n_undisclosed else []
    items = disclosed + undisclosed
    items = [items[i] for i in rng.permutation(len(items))] if items else []
    digest = hashlib.sha1(",".join(items).encode("utf-8")).hexdigest()[:12]
    return AnnotationBatch(
        batch_id=f"batch-{digest}",
        items=items,
        disclosed_ids=sorted(disclosed),
        disclosed_share=disclosed_share,
        size=size,
    )


# ---------------------------------------------------------------------------
# file formats

def post_to_record(post: Post) -> dict:
    return {
        "post_id": post.post_id,
        "influencer_id": post.influencer_id,
        "caption": post.caption,
        "published_at": post.published_at.isoformat(),
        "followers": post.followers,
    }


def write_corpus(corpus: Corpus, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for post in corpus:
            handle.write(json.dumps(post_to_record(post)) + "\n")


def load_corpus(path: str | Path) -> Corpus:
    with open(path, encoding="utf-8") as handle:
        return ingest_posts(handle)


def write_weak_labeled(labeled: list[WeakLabeledPost], path: str | Path) -> None:
    """Post records extended with weak_label and stripped_caption fields."""
    with open(path, "w", encoding="utf-8") as handle:
        for wl in labeled:
            record = post_to_record(wl.post)
            record["weak_label"] = wl.weak_label.value
            record["stripped_caption"] = wl.stripped_caption
            handle.write(json.dumps(record) + "\n")


def load_weak_labeled(path: str | Path) -> list[WeakLabeledPost]:
    labeled: list[WeakLabeledPost] = []
    with open(path, encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                post = parse_post_record(record)
                labeled.append(WeakLabeledPost(
                    post=post,
                    weak_label=Label(record["weak_label"]),
                    stripped_caption=record["stripped_caption"],
                ))
            except (ParseError, KeyError, ValueError) as exc:
                raise ParseError(f"bad weak-labeled record: {exc}", line=number) from exc
    return labeled


def write_split_manifests(split: DatasetSplit, directory: str | Path) -> dict[str, Path]:
    """One id-list file per part, each led by a JSON metadata header line."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}
    for part in ("train", "validation", "test"):
        posts: list[WeakLabeledPost] = getattr(split, part)
        header = {
            "split": part,
            "seed": split.seed,
            "cutoff_year": split.cutoff_year,
            "prng": PRNG_NAME,
            "count": len(posts),
        }
        path = directory / f"{part}.ids"
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(json.dumps(header) + "\n")
            for wl in posts:
                handle.write(wl.post.post_id + "\n")
        paths[part] = path
    return paths


def write_batch(batch: AnnotationBatch, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump({
            "batch_id": batch.batch_id,
            "items": batch.items,
            "disclosed_ids": batch.disclosed_ids,
            "disclosed_share": batch.disclosed_share,
            "size": batch.size,
        }, handle, indent=2)
        handle.write("\n")


def load_batch(path: str | Path) -> AnnotationBatch:
    with open(path, encoding="utf-8") as handle:
        data = json.load(handle)
    return AnnotationBatch(
        batch_id=data["batch_id"],
        items=list(data["items"]),
        disclosed_ids=list(data["disclosed_ids"]),
        disclosed_share=data["disclosed_share"],
        size=data["size"],
    )
