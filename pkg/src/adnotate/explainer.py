"""Explanation generation for annotation support.

A prompt recipe (instructions, few-shot examples, label phrasings, and a
positive-leaning tie-break clause) is rendered into a chat-completion request;
responses in the "Key indicators + rationale + label line" format are parsed
back into structured explanations. When the remote endpoint is unavailable,
a fitted detector provides local feature-importance explanations instead.
"""
from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Sequence

import requests

from .detector import SponsoredContentDetector, tokenize
from .errors import (
    CredentialError,
    ExplanationUnavailableError,
    FormatError,
    TransportError,
)


class ImpliedLabel(str, Enum):
    SPONSORED = "Sponsored"
    NON_SPONSORED = "NonSponsored"
    LIKELY_SPONSORED = "LikelySponsored"
    LIKELY_NOT_SPONSORED = "LikelyNotSponsored"

    @property
    def is_sponsored(self) -> bool:
        return self in (ImpliedLabel.SPONSORED, ImpliedLabel.LIKELY_SPONSORED)


class ExplanationSource(str, Enum):
    REMOTE = "Remote"
    LOCAL_FALLBACK = "LocalFallback"


@dataclass(frozen=True)
class Explanation:
    post_id: str
    key_indicators: tuple[str, ...]
    rationale: str
    implied_label: ImpliedLabel
    source: ExplanationSource


DEFAULT_LABEL_PHRASINGS = (
    "Sponsored",
    "Not sponsored",
    "Likely sponsored",
    "Likely not sponsored",
)

_PHRASE_TO_LABEL = {
    "sponsored": ImpliedLabel.SPONSORED,
    "not sponsored": ImpliedLabel.NON_SPONSORED,
    "non-sponsored": ImpliedLabel.NON_SPONSORED,
    "likely sponsored": ImpliedLabel.LIKELY_SPONSORED,
    "likely not sponsored": ImpliedLabel.LIKELY_NOT_SPONSORED,
}

_LABEL_TO_PHRASE = {
    ImpliedLabel.SPONSORED: "Sponsored",
    ImpliedLabel.NON_SPONSORED: "Not sponsored",
    ImpliedLabel.LIKELY_SPONSORED: "Likely sponsored",
    ImpliedLabel.LIKELY_NOT_SPONSORED: "Likely not sponsored",
}


@dataclass(frozen=True)
class PromptRecipe:
    """Everything that shapes the explanation prompt, treated as data.

    Instructions must ask for indicators and an explanation before the label;
    few-shot examples are (caption, ideal response) pairs whose responses end
    with a label line.
    """

    system_instructions: str
    few_shot_examples: tuple[tuple[str, str], ...]
    label_phrasings: tuple[str, ...] = DEFAULT_LABEL_PHRASINGS
    positive_bias_clause: str = ""

    def digest(self) -> str:
        payload = json.dumps({
            "system_instructions": self.system_instructions,
            "few_shot_examples": [list(pair) for pair in self.few_shot_examples],
            "label_phrasings": list(self.label_phrasings),
            "positive_bias_clause": self.positive_bias_clause,
        }, sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


_DEFAULT_INSTRUCTIONS = (
    "You review Instagram captions for signs of sponsored content. For each "
    "caption, first list the key indicator words or phrases, then explain in "
    "one or two sentences why the post may or may not be sponsored, and only "
    "then give your final label on its own line. Start your answer with a "
    "line formatted exactly as: Key indicators: 'phrase', 'phrase'. "
    "(or: Key indicators: none.) End with exactly one of these labels: "
    "Sponsored, Not sponsored, Likely sponsored, Likely not sponsored."
)

_DEFAULT_BIAS_CLAUSE = (
    "When you are uncertain, lean towards the sponsored labels: undisclosed "
    "partnerships are easy to miss and costly to overlook."
)

_DEFAULT_FEW_SHOT = (
    (
        "Loving my new skincare routine! Use my code GLOW20 for 15% off @glowlab",
        "Key indicators: 'code GLOW20', '15% off', '@glowlab'.\n"
        "The caption offers a personal discount code tied to a brand account, "
        "which usually signals a paid partnership.\n"
        "Likely sponsored",
    ),
    (
        "Sunday reset: long walk, farmers market, and a good book.",
        "Key indicators: none.\n"
        "The caption describes personal activities with no brand, product, or "
        "promotional language.\n"
        "Likely not sponsored",
    ),
)


def default_recipe() -> PromptRecipe:
    return PromptRecipe(
        system_instructions=_DEFAULT_INSTRUCTIONS,
        few_shot_examples=_DEFAULT_FEW_SHOT,
        positive_bias_clause=_DEFAULT_BIAS_CLAUSE,
    )


def save_recipe(recipe: PromptRecipe, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump({
            "system_instructions": recipe.system_instructions,
            "few_shot_examples": [
                {"caption": caption, "ideal": ideal}
                for caption, ideal in recipe.few_shot_examples
            ],
            "label_phrasings": list(recipe.label_phrasings),
            "positive_bias_clause": recipe.positive_bias_clause,
        }, handle, indent=2, ensure_ascii=False)
        handle.write("\n")


def load_recipe(path: str | Path) -> PromptRecipe:
    with open(path, encoding="utf-8") as handle:
        data = json.load(handle)
    return PromptRecipe(
        system_instructions=data["system_instructions"],
        few_shot_examples=tuple(
            (example["caption"], example["ideal"])
            for example in data["few_shot_examples"]
        ),
        label_phrasings=tuple(data.get("label_phrasings", DEFAULT_LABEL_PHRASINGS)),
        positive_bias_clause=data.get("positive_bias_clause", ""),
    )


def build_prompt(caption: str, recipe: PromptRecipe) -> str:
    """Deterministic concatenation: instructions, few-shot block, bias clause,
    target caption."""
    parts = [recipe.system_instructions]
    for example_caption, ideal in recipe.few_shot_examples:
        parts.append(f"Caption: {example_caption}\n{ideal}")
    if recipe.positive_bias_clause:
        parts.append(recipe.positive_bias_clause)
    parts.append(f"Caption: {caption}")
    return "\n\n".join(parts)


def completion_cache_key(post_id: str, recipe: PromptRecipe, model: str) -> str:
    raw = json.dumps([post_id, recipe.digest(), model])
    return hashlib.sha256(raw.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# remote endpoint

@dataclass
class EndpointConfig:
    base_url: str
    model: str
    api_key_env: str = "ADNOTATE_API_KEY"
    temperature: float = 0.0
    timeout: float = 30.0
    max_retries: int = 3
    backoff_base: float = 0.5
    cache_dir: str | Path | None = None
    max_in_flight: int | None = None
    requests_per_second: float | None = None


class CompletionCache:
    """Content-addressed response cache; one JSON file per cache key.

    Writes go through a temp file and atomic rename, so concurrent readers
    always see a complete entry.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, key: str) -> str | None:
        path = self._path(key)
        if not path.exists():
            return None
        with open(path, encoding="utf-8") as handle:
            return json.load(handle)["raw_response"]

    def put(self, key: str, raw_response: str) -> None:
        entry = {
            "cache_key": key,
            "raw_response": raw_response,
            "created_at": datetime.now(timezone.utc).isoformat(),
        }
        temp = self._path(key).with_suffix(".tmp")
        with open(temp, "w", encoding="utf-8") as handle:
            json.dump(entry, handle, ensure_ascii=False)
        os.replace(temp, self._path(key))


class _TokenBucket:
    """Simple token bucket; acquire() blocks until a token is available."""

    def __init__(self, rate: float, capacity: float | None = None):
        self.rate = rate
        self.capacity = capacity if capacity is not None else max(rate, 1.0)
        self._tokens = self.capacity
        self._stamp = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(self.capacity, self._tokens + (now - self._stamp) * self.rate)
                self._stamp = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            time.sleep(wait)


class ChatCompletionClient:
    """Chat-completion client with caching, bounded retries, and rate limiting.

    Transient failures (connection errors, HTTP 5xx/429) retry with
    exponential backoff up to ``max_retries``; credential rejections fail
    immediately. Successful responses are written to the cache.
    """

    def __init__(self, config: EndpointConfig, session: requests.Session | None = None):
        self.config = config
        self.session = session or requests.Session()
        self.cache = CompletionCache(config.cache_dir) if config.cache_dir else None
        self._bucket = (
            _TokenBucket(config.requests_per_second)
            if config.requests_per_second else None
        )
        self._in_flight = (
            threading.BoundedSemaphore(config.max_in_flight)
            if config.max_in_flight else None
        )

    @property
    def _url(self) -> str:
        return self.config.base_url.rstrip("/") + "/chat/completions"

    def _api_key(self) -> str:
        key = os.environ.get(self.config.api_key_env, "")
        if not key:
            raise CredentialError(
                f"no credential in environment variable {self.config.api_key_env}"
            )
        return key

    def _request_once(self, prompt: str) -> str:
        payload = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
        }
        headers = {"Authorization": f"Bearer {self._api_key()}"}
        if self._bucket:
            self._bucket.acquire()
        response = self.session.post(
            self._url, json=payload, headers=headers, timeout=self.config.timeout
        )
        if response.status_code in (401, 403):
            raise CredentialError(f"endpoint rejected credential ({response.status_code})")
        if response.status_code >= 500 or response.status_code == 429:
            raise _Transient(f"status {response.status_code}")
        if response.status_code != 200:
            raise TransportError(f"unexpected status {response.status_code}")
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion response: {exc}") from exc

    def complete(self, prompt: str, cache_key: str | None = None) -> str:
        """Raw response text for a prompt; cache hits make no network calls."""
        if self.cache and cache_key:
            hit = self.cache.get(cache_key)
            if hit is not None:
                return hit
        if self._in_flight:
            self._in_flight.acquire()
        try:
            last: Exception | None = None
            for attempt in range(self.config.max_retries + 1):
                try:
                    raw = self._request_once(prompt)
                    break
                except (_Transient, requests.ConnectionError, requests.Timeout) as exc:
                    last = exc
                if attempt < self.config.max_retries:
                    time.sleep(self.config.backoff_base * (2 ** attempt))
            else:
                raise TransportError(f"retries exhausted: {last}")
        finally:
            if self._in_flight:
                self._in_flight.release()
        if self.cache and cache_key:
            self.cache.put(cache_key, raw)
        return raw


class _Transient(Exception):
    pass


# ---------------------------------------------------------------------------
# parsing and serialization

_INDICATOR_LINE_RE = re.compile(r"key indicators\s*:\s*(.*)", re.IGNORECASE)
_QUOTED_RE = re.compile(r"'([^']+)'|\"([^\"]+)\"")


def _normalize_phrase(text: str) -> str:
    return re.sub(r"\s+", " ", text.strip().rstrip(".!").strip()).lower()


def _phrase_to_label(phrase: str) -> ImpliedLabel | None:
    return _PHRASE_TO_LABEL.get(_normalize_phrase(phrase))


def parse_explanation(
    raw: str,
    post_id: str,
    label_phrasings: Sequence[str] = DEFAULT_LABEL_PHRASINGS,
) -> Explanation:
    """Parse a "Key indicators / rationale / label line" response.

    The final non-empty line must match one of the accepted label phrasings
    (case-insensitive, trailing punctuation ignored); quoted phrases after
    "Key indicators:" become the indicator list.
    """
    if not raw or not raw.strip():
        raise FormatError("empty response")
    lines = [line for line in raw.strip().splitlines() if line.strip()]

    accepted = {_normalize_phrase(p) for p in label_phrasings}
    label_line = lines[-1]
    if _normalize_phrase(label_line) not in accepted:
        raise FormatError(f"no recognizable label line (got {label_line!r})")
    implied = _phrase_to_label(label_line)
    if implied is None:
        raise FormatError(f"label phrasing {label_line!r} has no label mapping")

    indicators: tuple[str, ...] = ()
    indicator_index: int | None = None
    for index, line in enumerate(lines[:-1]):
        match = _INDICATOR_LINE_RE.search(line)
        if match:
            indicator_index = index
            rest = match.group(1)
            indicators = tuple(a or b for a, b in _QUOTED_RE.findall(rest))
            break

    rationale_lines = [
        line for index, line in enumerate(lines[:-1]) if index != indicator_index
    ]
    rationale = "\n".join(rationale_lines).strip()
    if not rationale:
        raise FormatError("response carries no rationale text")
    return Explanation(
        post_id=post_id,
        key_indicators=indicators,
        rationale=rationale,
        implied_label=implied,
        source=ExplanationSource.REMOTE,
    )


def serialize_explanation(explanation: Explanation) -> str:
    """Render an explanation in the same format parse_explanation reads."""
    if explanation.key_indicators:
        quoted = ", ".join(f"'{phrase}'" for phrase in explanation.key_indicators)
        head = f"Key indicators: {quoted}."
    else:
        head = "Key indicators: none."
    label_phrase = _LABEL_TO_PHRASE[explanation.implied_label]
    return f"{head}\n{explanation.rationale}\n{label_phrase}"


def strip_label_line(text: str, label_phrasings: Sequence[str] = DEFAULT_LABEL_PHRASINGS) -> str:
    """Drop a trailing label line, if present, from rendered explanation text."""
    lines = text.rstrip().splitlines()
    accepted = {_normalize_phrase(p) for p in label_phrasings}
    while lines and _normalize_phrase(lines[-1]) in accepted:
        lines.pop()
    return "\n".join(lines).rstrip()


# ---------------------------------------------------------------------------
# local fallback

def local_explain(
    detector: SponsoredContentDetector,
    caption: str,
    post_id: str = "",
    k: int = 5,
) -> Explanation:
    """Feature-importance explanation from the fitted detector.

    Indicators are the caption's in-vocabulary n-grams with the largest
    |weight * feature| contribution; the implied label follows the model's
    own 0.5 decision threshold (the intercept decides for empty vectors).
    """
    vectorizer = detector.vectorizer_
    logreg = detector.logreg_
    row = vectorizer.transform([caption])
    grams_by_index = {index: gram for gram, index in vectorizer.vocabulary_.items()}
    contributions = [
        (grams_by_index[index], float(logreg.coef_[index] * value))
        for index, value in zip(row.indices, row.data)
    ]
    contributions.sort(key=lambda pair: (-abs(pair[1]), pair[0]))
    top = contributions[:k]
    probability = float(logreg.predict_proba(row)[0, 1])
    sponsored = probability >= 0.5
    implied = ImpliedLabel.SPONSORED if sponsored else ImpliedLabel.NON_SPONSORED
    if top:
        strongest = ", ".join(f"{gram!r} ({value:+.3f})" for gram, value in top)
        rationale = (
            f"The detector scores this caption {probability:.3f} for sponsored; "
            f"strongest contributions: {strongest}."
        )
    else:
        rationale = (
            f"No known caption features; the detector's intercept alone gives a "
            f"sponsored score of {probability:.3f}."
        )
    return Explanation(
        post_id=post_id,
        key_indicators=tuple(gram for gram, _value in top),
        rationale=rationale,
        implied_label=implied,
        source=ExplanationSource.LOCAL_FALLBACK,
    )


def explain_post(
    post_id: str,
    caption: str,
    recipe: PromptRecipe,
    client: ChatCompletionClient | None = None,
    detector: SponsoredContentDetector | None = None,
    k: int = 5,
) -> Explanation:
    """Remote explanation when the endpoint cooperates, local fallback otherwise."""
    remote_error: Exception | None = None
    if client is not None:
        key = completion_cache_key(post_id, recipe, client.config.model)
        try:
            raw = client.complete(build_prompt(caption, recipe), cache_key=key)
            return parse_explanation(raw, post_id, recipe.label_phrasings)
        except (TransportError, CredentialError, FormatError) as exc:
            remote_error = exc
    if detector is not None:
        return local_explain(detector, caption, post_id=post_id, k=k)
    if remote_error is not None:
        raise ExplanationUnavailableError(
            f"remote endpoint failed ({remote_error}) and no local model is available"
        )
    raise ExplanationUnavailableError("neither an endpoint nor a local model is configured")


# ---------------------------------------------------------------------------
# explanation files

def write_explanations(explanations: Sequence[Explanation], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for explanation in explanations:
            handle.write(json.dumps({
                "post_id": explanation.post_id,
                "key_indicators": list(explanation.key_indicators),
                "rationale": explanation.rationale,
                "implied_label": explanation.implied_label.value,
                "source": explanation.source.value,
            }, ensure_ascii=False) + "\n")


def load_explanations(path: str | Path) -> list[Explanation]:
    explanations: list[Explanation] = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            data = json.loads(line)
            explanations.append(Explanation(
                post_id=data["post_id"],
                key_indicators=tuple(data["key_indicators"]),
                rationale=data["rationale"],
                implied_label=ImpliedLabel(data["implied_label"]),
                source=ExplanationSource(data["source"]),
            ))
    return explanations
