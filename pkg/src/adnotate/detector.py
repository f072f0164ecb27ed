"""Sponsored-content classifier: word n-gram TF-IDF features into a logistic
regression trained by full-batch gradient descent, plus the evaluation metrics
used to compare models and an import path for external model predictions.

The estimators follow the scikit-learn fit/transform/predict contract
(get_params, fitted attributes with trailing underscores, NotFittedError) so
they compose with the wider ecosystem; the feature extraction and the
optimizer themselves are implemented here.
"""
from __future__ import annotations

import csv
import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .corpus import Label
from .errors import ConflictError, NotFoundError, ParseError, ValidationError

ARTIFACT_FORMAT = "adnotate-detector"
ARTIFACT_VERSION = 1

_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)


@dataclass(frozen=True)
class TokenizerConfig:
    lowercase: bool = True
    url_placeholder: str = "<url>"
    keep_hashtags: bool = True
    keep_mentions: bool = True


@lru_cache(maxsize=8)
def _token_pattern(url_placeholder: str) -> re.Pattern:
    return re.compile(re.escape(url_placeholder) + r"|[#@]?\w+")


def tokenize(caption: str, config: TokenizerConfig = TokenizerConfig()) -> list[str]:
    """Word tokens with hashtags/mentions kept whole and URLs collapsed to a
    placeholder; remaining punctuation splits tokens."""
    text = _URL_RE.sub(f" {config.url_placeholder} ", caption)
    if config.lowercase:
        text = text.lower()
    tokens: list[str] = []
    for token in _token_pattern(config.url_placeholder).findall(text):
        if token == config.url_placeholder:
            tokens.append(token)
        elif token.startswith("#") and not config.keep_hashtags:
            tokens.append(token[1:])
        elif token.startswith("@") and not config.keep_mentions:
            tokens.append(token[1:])
        else:
            tokens.append(token)
    return tokens


class NgramTfidfVectorizer(BaseEstimator, TransformerMixin):
    """TF-IDF over word n-grams with a document-frequency floor.

    idf uses the smoothed form ln((1 + N) / (1 + df)) + 1 and rows are
    L2-normalized; n-grams outside the fitted vocabulary are ignored.
    """

    def __init__(self, ngram_range: tuple[int, int] = (1, 3), min_df: int = 2,
                 tokenizer_config: TokenizerConfig | None = None):
        self.ngram_range = ngram_range
        self.min_df = min_df
        self.tokenizer_config = tokenizer_config

    def _config(self) -> TokenizerConfig:
        return self.tokenizer_config or TokenizerConfig()

    def _grams(self, caption: str) -> list[str]:
        tokens = tokenize(caption, self._config())
        low, high = self.ngram_range
        grams: list[str] = []
        for n in range(low, high + 1):
            grams.extend(" ".join(tokens[i:i + n]) for i in range(len(tokens) - n + 1))
        return grams

    def fit(self, raw_documents: Sequence[str], y=None) -> "NgramTfidfVectorizer":
        documents = list(raw_documents)
        if not documents:
            raise ValidationError("cannot fit a vectorizer on an empty training set")
        df: Counter[str] = Counter()
        for doc in documents:
            df.update(set(self._grams(doc)))
        vocabulary = sorted(g for g, count in df.items() if count >= self.min_df)
        n = len(documents)
        self.vocabulary_ = {gram: index for index, gram in enumerate(vocabulary)}
        self.idf_ = np.array(
            [math.log((1 + n) / (1 + df[gram])) + 1.0 for gram in vocabulary]
        )
        self.n_docs_ = n
        return self

    def transform(self, raw_documents: Sequence[str]) -> sp.csr_matrix:
        check_is_fitted(self, "vocabulary_")
        indptr = [0]
        indices: list[int] = []
        data: list[float] = []
        for doc in raw_documents:
            counts = Counter(
                self.vocabulary_[g] for g in self._grams(doc) if g in self.vocabulary_
            )
            row = sorted(counts.items())
            indices.extend(i for i, _c in row)
            data.extend(float(c) * self.idf_[i] for i, c in row)
            indptr.append(len(indices))
        matrix = sp.csr_matrix(
            (data, indices, indptr),
            shape=(len(indptr) - 1, len(self.vocabulary_)),
        )
        norms = sp.linalg.norm(matrix, axis=1)
        norms[norms == 0] = 1.0
        matrix = sp.diags(1.0 / norms) @ matrix
        return matrix.tocsr()


def loss_and_gradient(
    X: sp.spmatrix, y: np.ndarray, weights: np.ndarray, bias: float, l2_lambda: float
) -> tuple[float, np.ndarray, float]:
    """Mean binary cross-entropy with an L2 penalty on the weights (not bias).

    Uses log(1 + e^z) - y*z for the per-sample loss, which is numerically
    stable for large |z|.
    """
    z = np.asarray(X @ weights).ravel() + bias
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z)) \
        + 0.5 * l2_lambda * float(weights @ weights)
    residual = expit(z) - y
    grad_w = np.asarray(X.T @ residual).ravel() / len(y) + l2_lambda * weights
    grad_b = float(residual.mean())
    return loss, grad_w, grad_b


class LogisticRegressionGD(BaseEstimator, ClassifierMixin):
    """Binary logistic regression fit by full-batch gradient descent.

    Deterministic: zero initialization on a convex objective. Stops when the
    loss improves by less than ``tol`` or after ``max_epochs`` steps. The
    decision rule labels probability >= 0.5 as the positive class.
    """

    def __init__(self, learning_rate: float = 0.1, max_epochs: int = 300,
                 l2_lambda: float = 1e-4, tol: float = 1e-6):
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.l2_lambda = l2_lambda
        self.tol = tol

    def fit(self, X, y) -> "LogisticRegressionGD":
        X = sp.csr_matrix(X)
        y = np.asarray(y, dtype=float).ravel()
        if X.shape[0] != y.shape[0] or y.shape[0] == 0:
            raise ValidationError("X and y must be non-empty and the same length")
        classes = np.unique(y)
        if not np.isin(classes, (0.0, 1.0)).all():
            raise ValidationError("y must contain only 0/1 labels")
        if classes.size < 2:
            raise ValidationError("training data contains a single class")

        weights = np.zeros(X.shape[1])
        bias = 0.0
        losses: list[float] = []
        for _epoch in range(self.max_epochs):
            loss, grad_w, grad_b = loss_and_gradient(X, y, weights, bias, self.l2_lambda)
            losses.append(loss)
            if len(losses) > 1 and abs(losses[-2] - losses[-1]) < self.tol:
                break
            weights = weights - self.learning_rate * grad_w
            bias = bias - self.learning_rate * grad_b

        self.coef_ = weights
        self.intercept_ = bias
        self.loss_history_ = losses
        self.n_epochs_ = len(losses)
        self.classes_ = np.array([0, 1])
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "coef_")
        return np.asarray(sp.csr_matrix(X) @ self.coef_).ravel() + self.intercept_

    def predict_proba(self, X) -> np.ndarray:
        positive = expit(self.decision_function(X))
        return np.column_stack([1.0 - positive, positive])

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(int)


@dataclass(frozen=True)
class Prediction:
    post_id: str
    label: Label
    probability: float | None
    model_id: str


@dataclass
class TrainingMeta:
    epochs: int
    learning_rate: float
    final_loss: float


class SponsoredContentDetector(BaseEstimator, ClassifierMixin):
    """Vectorizer + logistic regression over caption text, as one unit.

    The fitted detector serializes to a single self-describing JSON artifact
    carrying vocabulary, idf vector, weights, bias, tokenizer configuration,
    and hyperparameters.
    """

    def __init__(self, ngram_range: tuple[int, int] = (1, 3), min_df: int = 2,
                 learning_rate: float = 0.1, max_epochs: int = 300,
                 l2_lambda: float = 1e-4, tol: float = 1e-6,
                 tokenizer_config: TokenizerConfig | None = None,
                 model_id: str = "tfidf-logreg"):
        self.ngram_range = ngram_range
        self.min_df = min_df
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.l2_lambda = l2_lambda
        self.tol = tol
        self.tokenizer_config = tokenizer_config
        self.model_id = model_id

    @staticmethod
    def _as_binary(labels: Sequence) -> np.ndarray:
        out = []
        for value in labels:
            if isinstance(value, Label):
                out.append(1 if value is Label.SPONSORED else 0)
            elif value in (0, 1):
                out.append(int(value))
            elif value in (Label.SPONSORED.value, Label.NON_SPONSORED.value):
                out.append(1 if value == Label.SPONSORED.value else 0)
            else:
                raise ValidationError(f"unrecognized label {value!r}")
        return np.array(out, dtype=float)

    def fit(self, captions: Sequence[str], y: Sequence) -> "SponsoredContentDetector":
        labels = self._as_binary(y)
        self.vectorizer_ = NgramTfidfVectorizer(
            ngram_range=self.ngram_range, min_df=self.min_df,
            tokenizer_config=self.tokenizer_config,
        ).fit(captions)
        X = self.vectorizer_.transform(captions)
        self.logreg_ = LogisticRegressionGD(
            learning_rate=self.learning_rate, max_epochs=self.max_epochs,
            l2_lambda=self.l2_lambda, tol=self.tol,
        ).fit(X, labels)
        self.training_meta_ = TrainingMeta(
            epochs=self.logreg_.n_epochs_,
            learning_rate=self.learning_rate,
            final_loss=self.logreg_.loss_history_[-1],
        )
        return self

    def predict_proba(self, captions: Sequence[str]) -> np.ndarray:
        check_is_fitted(self, "logreg_")
        return self.logreg_.predict_proba(self.vectorizer_.transform(captions))

    def predict(self, captions: Sequence[str]) -> np.ndarray:
        return (self.predict_proba(captions)[:, 1] >= 0.5).astype(int)

    def predict_records(self, items: Iterable[tuple[str, str]]) -> list[Prediction]:
        """Predictions for (post_id, caption) pairs, tagged with this model's id."""
        items = list(items)
        probabilities = self.predict_proba([caption for _pid, caption in items])[:, 1]
        return [
            Prediction(
                post_id=post_id,
                label=Label.SPONSORED if prob >= 0.5 else Label.NON_SPONSORED,
                probability=float(prob),
                model_id=self.model_id,
            )
            for (post_id, _caption), prob in zip(items, probabilities)
        ]

    def save(self, path: str | Path) -> None:
        check_is_fitted(self, "logreg_")
        vocabulary = [None] * len(self.vectorizer_.vocabulary_)
        for gram, index in self.vectorizer_.vocabulary_.items():
            vocabulary[index] = gram
        config = self.tokenizer_config or TokenizerConfig()
        artifact = {
            "format": ARTIFACT_FORMAT,
            "version": ARTIFACT_VERSION,
            "model_id": self.model_id,
            "tokenizer": {
                "lowercase": config.lowercase,
                "url_placeholder": config.url_placeholder,
                "keep_hashtags": config.keep_hashtags,
                "keep_mentions": config.keep_mentions,
            },
            "vectorizer": {
                "ngram_range": list(self.ngram_range),
                "min_df": self.min_df,
                "vocabulary": vocabulary,
                "idf": self.vectorizer_.idf_.tolist(),
                "n_docs": self.vectorizer_.n_docs_,
            },
            "logreg": {
                "weights": self.logreg_.coef_.tolist(),
                "bias": self.logreg_.intercept_,
                "l2_lambda": self.l2_lambda,
                "learning_rate": self.learning_rate,
                "max_epochs": self.max_epochs,
                "tol": self.tol,
            },
            "training_meta": vars(self.training_meta_),
        }
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(artifact, handle)
            handle.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "SponsoredContentDetector":
        with open(path, encoding="utf-8") as handle:
            artifact = json.load(handle)
        if artifact.get("format") != ARTIFACT_FORMAT:
            raise ParseError(f"not a detector artifact: {artifact.get('format')!r}")
        if artifact.get("version") != ARTIFACT_VERSION:
            raise ParseError(f"unsupported artifact version {artifact.get('version')!r}")
        tok = artifact["tokenizer"]
        logreg_cfg = artifact["logreg"]
        detector = cls(
            ngram_range=tuple(artifact["vectorizer"]["ngram_range"]),
            min_df=artifact["vectorizer"]["min_df"],
            learning_rate=logreg_cfg["learning_rate"],
            max_epochs=logreg_cfg["max_epochs"],
            l2_lambda=logreg_cfg["l2_lambda"],
            tol=logreg_cfg["tol"],
            tokenizer_config=TokenizerConfig(
                lowercase=tok["lowercase"],
                url_placeholder=tok["url_placeholder"],
                keep_hashtags=tok["keep_hashtags"],
                keep_mentions=tok["keep_mentions"],
            ),
            model_id=artifact["model_id"],
        )
        vectorizer = NgramTfidfVectorizer(
            ngram_range=detector.ngram_range, min_df=detector.min_df,
            tokenizer_config=detector.tokenizer_config,
        )
        vectorizer.vocabulary_ = {
            gram: index for index, gram in enumerate(artifact["vectorizer"]["vocabulary"])
        }
        vectorizer.idf_ = np.array(artifact["vectorizer"]["idf"])
        vectorizer.n_docs_ = artifact["vectorizer"]["n_docs"]
        detector.vectorizer_ = vectorizer

        logreg = LogisticRegressionGD(
            learning_rate=logreg_cfg["learning_rate"], max_epochs=logreg_cfg["max_epochs"],
            l2_lambda=logreg_cfg["l2_lambda"], tol=logreg_cfg["tol"],
        )
        logreg.coef_ = np.array(logreg_cfg["weights"])
        logreg.intercept_ = logreg_cfg["bias"]
        logreg.loss_history_ = [artifact["training_meta"]["final_loss"]]
        logreg.n_epochs_ = artifact["training_meta"]["epochs"]
        logreg.classes_ = np.array([0, 1])
        detector.logreg_ = logreg
        detector.training_meta_ = TrainingMeta(**artifact["training_meta"])
        return detector


# ---------------------------------------------------------------------------
# evaluation

@dataclass(frozen=True)
class TruthItem:
    post_id: str
    sponsored: bool
    disclosed: bool


@dataclass
class EvalReport:
    """Percent-scale per-class F1s, their simple mean, and undisclosed-ad accuracy.

    ``undisclosed_acc`` is None when the truth set has no undisclosed sponsored
    posts to measure against.
    """

    pos_f1: float
    neg_f1: float
    macro_f1: float
    undisclosed_acc: float | None


def macro_f1(pos_f1: float, neg_f1: float) -> float:
    """Simple average of the two per-class F1 scores."""
    return (pos_f1 + neg_f1) / 2.0


def _f1(tp: int, fp: int, fn: int) -> float:
    denominator = 2 * tp + fp + fn
    if denominator == 0:
        return 0.0
    return 2 * tp / denominator * 100.0


def evaluate(preds: Sequence[Prediction], truth: Sequence[TruthItem | Mapping]) -> EvalReport:
    """Score predictions against labelled truth.

    Every truth item must have exactly one prediction; undisclosed-ad accuracy
    is the share of sponsored-but-undisclosed posts predicted Sponsored.
    """
    by_id: dict[str, Prediction] = {}
    for pred in preds:
        if pred.post_id in by_id:
            raise ConflictError(f"multiple predictions for post {pred.post_id!r}")
        by_id[pred.post_id] = pred

    items = [
        item if isinstance(item, TruthItem) else TruthItem(
            post_id=item["post_id"], sponsored=bool(item["sponsored"]),
            disclosed=bool(item["disclosed"]),
        )
        for item in truth
    ]
    tp = fp = fn = tn = 0
    undisclosed_total = 0
    undisclosed_hit = 0
    for item in items:
        pred = by_id.get(item.post_id)
        if pred is None:
            raise NotFoundError(f"no prediction for post {item.post_id!r}")
        predicted_sponsored = pred.label is Label.SPONSORED
        if item.sponsored and predicted_sponsored:
            tp += 1
        elif item.sponsored:
            fn += 1
        elif predicted_sponsored:
            fp += 1
        else:
            tn += 1
        if item.sponsored and not item.disclosed:
            undisclosed_total += 1
            if predicted_sponsored:
                undisclosed_hit += 1

    pos = _f1(tp, fp, fn)
    neg = _f1(tn, fn, fp)
    return EvalReport(
        pos_f1=pos,
        neg_f1=neg,
        macro_f1=macro_f1(pos, neg),
        undisclosed_acc=(
            undisclosed_hit / undisclosed_total * 100.0 if undisclosed_total else None
        ),
    )


# ---------------------------------------------------------------------------
# prediction files

PREDICTION_HEADER = ["post_id", "label", "probability", "model_id"]


def write_predictions(preds: Sequence[Prediction], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(PREDICTION_HEADER)
        for pred in preds:
            writer.writerow([
                pred.post_id,
                pred.label.value,
                "" if pred.probability is None else repr(pred.probability),
                pred.model_id,
            ])


def import_predictions(source: str | Path | IO[str]) -> list[Prediction]:
    """Parse a prediction CSV; label strings must be Sponsored/NonSponsored and
    (post_id, model_id) pairs must be unique. Probability may be blank."""
    if hasattr(source, "read"):
        return _parse_predictions(source)
    with open(source, encoding="utf-8", newline="") as handle:
        return _parse_predictions(handle)


def _parse_predictions(handle: IO[str]) -> list[Prediction]:
    reader = csv.DictReader(handle)
    missing = set(["post_id", "label", "model_id"]) - set(reader.fieldnames or [])
    if missing:
        raise ParseError(f"prediction file lacks columns: {sorted(missing)}")
    preds: list[Prediction] = []
    seen: set[tuple[str, str]] = set()
    for number, row in enumerate(reader, start=2):
        label_text = (row["label"] or "").strip()
        try:
            label = Label(label_text)
        except ValueError:
            raise ParseError(f"unknown label {label_text!r}", line=number) from None
        key = (row["post_id"], row["model_id"])
        if key in seen:
            raise ConflictError(
                f"duplicate prediction for post {key[0]!r} from model {key[1]!r}"
            )
        seen.add(key)
        raw_probability = (row.get("probability") or "").strip()
        preds.append(Prediction(
            post_id=row["post_id"],
            label=label,
            probability=float(raw_probability) if raw_probability else None,
            model_id=row["model_id"],
        ))
    return preds
