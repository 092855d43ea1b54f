"""Quality-assurance gate: predict diffs the generator will handle badly.

Human judges scored generated messages 0-7 against the reference; a diff
whose floor-median score is 0 or 1 is labeled "bad".  Diffs are featurized
as L2-normalized tf/idf over their tokens, and a linear SVM trained by
per-example SGD on the hinge loss separates bad from not-bad.  Evaluation
is 10-fold cross-validation plus a per-score reduction report.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import TokenSequence, preprocess_source

QA_MODEL_FORMAT_VERSION = 1

BAD_SCORE_MAX = 1   # median score <= 1 is "bad"
GOOD_SCORE_MIN = 6  # median score >= 6 counts as "good" in the cost metric


def floor_median(scores: list[int] | tuple[int, ...]) -> int:
    """Median rounded down; for an even count, the floor of the mid mean."""
    ordered = sorted(scores)
    mid = len(ordered) // 2
    if len(ordered) % 2 == 1:
        return ordered[mid]
    return (ordered[mid - 1] + ordered[mid]) // 2


@dataclass(frozen=True)
class GoldRecord:
    """A scored diff from the human study."""

    diff: TokenSequence
    scores: tuple[int, ...]

    def __post_init__(self) -> None:
        if not 1 <= len(self.scores) <= 3:
            raise ValueError(f"expected 1-3 scores, got {len(self.scores)}")
        for score in self.scores:
            if not 0 <= score <= 7:
                raise ValueError(f"scores must be in [0, 7], got {score}")

    @property
    def median_score(self) -> int:
        return floor_median(self.scores)

    @property
    def is_bad(self) -> bool:
        return self.median_score <= BAD_SCORE_MAX


def load_gold_jsonl(path: str | Path) -> list[GoldRecord]:
    """Read gold records ({"id", "diff", "scores"}) from a JSON-lines file.

    Diffs are tokenized with the same source pipeline the generator uses.
    """
    records: list[GoldRecord] = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                records.append(
                    GoldRecord(
                        diff=preprocess_source(str(raw["diff"])),
                        scores=tuple(int(s) for s in raw["scores"]),
                    )
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from exc
    return records


def compute_idf(diffs: list[TokenSequence]) -> tuple[dict[str, int], np.ndarray]:
    """Feature vocabulary and smoothed idf over a diff corpus.

    idf(t) = ln((1 + D) / (1 + df(t))) + 1, which stays positive even for
    tokens present in every document.
    """
    if not diffs:
        raise ValueError("idf requires a non-empty corpus")
    doc_freq: dict[str, int] = {}
    for diff in diffs:
        for token in set(diff):
            doc_freq[token] = doc_freq.get(token, 0) + 1
    vocab = {token: i for i, token in enumerate(sorted(doc_freq))}
    n_docs = len(diffs)
    idf = np.empty(len(vocab))
    for token, index in vocab.items():
        idf[index] = math.log((1 + n_docs) / (1 + doc_freq[token])) + 1.0
    return vocab, idf


def tfidf(
    diff: TokenSequence, feature_vocab: dict[str, int], idf: np.ndarray
) -> dict[int, float]:
    """L2-normalized tf/idf mapping; unknown tokens contribute nothing."""
    counts: dict[int, int] = {}
    for token in diff:
        index = feature_vocab.get(token)
        if index is not None:
            counts[index] = counts.get(index, 0) + 1
    if not counts:
        return {}
    weighted = {index: count * idf[index] for index, count in counts.items()}
    norm = math.sqrt(sum(value * value for value in weighted.values()))
    return {index: value / norm for index, value in weighted.items()}


@dataclass(frozen=True)
class QaHyper:
    l2_lambda: float = 1e-4
    epochs: int = 20
    seed: int = 0


@dataclass
class QaModel:
    feature_vocab: dict[str, int]
    idf: np.ndarray
    weights: np.ndarray
    bias: float
    hyper: QaHyper = field(default_factory=QaHyper)

    def featurize(self, diff: TokenSequence) -> dict[int, float]:
        return tfidf(diff, self.feature_vocab, self.idf)

    def margin(self, diff: TokenSequence) -> float:
        features = self.featurize(diff)
        return sum(self.weights[i] * v for i, v in features.items()) + self.bias


def train_svm(gold: list[GoldRecord], hyper: QaHyper = QaHyper()) -> QaModel:
    """Hinge-loss SGD on (lambda/2)||w||^2 + mean hinge, y = +1 for bad.

    Per-example step size 1/(lambda * t); the example order is reshuffled
    each epoch with the seeded RNG, so training is deterministic.  The bias
    is trained but not regularized.
    """
    labels = [1.0 if record.is_bad else -1.0 for record in gold]
    if len(set(labels)) < 2:
        raise ValueError("training requires both bad and not-bad records")
    feature_vocab, idf = compute_idf([record.diff for record in gold])
    examples = []
    for record in gold:
        features = tfidf(record.diff, feature_vocab, idf)
        indices = np.fromiter(features.keys(), dtype=np.int64, count=len(features))
        values = np.fromiter(features.values(), dtype=np.float64, count=len(features))
        examples.append((indices, values))

    weights = np.zeros(len(feature_vocab))
    bias = 0.0
    rng = random.Random(hyper.seed)
    order = list(range(len(gold)))
    step = 0
    for _ in range(hyper.epochs):
        rng.shuffle(order)
        for i in order:
            step += 1
            eta = 1.0 / (hyper.l2_lambda * step)
            indices, values = examples[i]
            y = labels[i]
            margin = y * (weights[indices] @ values + bias)
            weights *= 1.0 - eta * hyper.l2_lambda
            if margin < 1.0:
                weights[indices] += eta * y * values
                bias += eta * y
    return QaModel(feature_vocab, idf, weights, bias, hyper)


def predict(diff: TokenSequence, model: QaModel) -> tuple[bool, float]:
    """(is_bad, margin); a margin of exactly zero resolves to not-bad."""
    margin = model.margin(diff)
    return margin > 0.0, margin


@dataclass
class CrossValResult:
    predictions: list[bool]      # aligned with the input gold order
    margins: list[float]
    precision: float             # for the positive class "bad"
    recall: float
    fold_sizes: list[int]
    fold_indices: list[list[int]]  # original indices held out per fold


def _precision_recall(records: list[GoldRecord], predictions: list[bool]) -> tuple[float, float]:
    tp = sum(1 for r, p in zip(records, predictions) if p and r.is_bad)
    fp = sum(1 for r, p in zip(records, predictions) if p and not r.is_bad)
    fn = sum(1 for r, p in zip(records, predictions) if not p and r.is_bad)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return precision, recall


def cross_validate(
    gold: list[GoldRecord], k: int = 10, seed: int = 0, hyper: QaHyper = QaHyper()
) -> CrossValResult:
    """Shuffled k-fold cross-validation; every record predicted exactly once.

    Folds are contiguous slices of the shuffled order with sizes differing
    by at most one.  Precision and recall treat "bad" as the positive
    class.
    """
    if len(gold) < k:
        raise ValueError(f"need at least k={k} records, got {len(gold)}")
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    order = list(range(len(gold)))
    random.Random(seed).shuffle(order)

    base, extra = divmod(len(gold), k)
    fold_sizes = [base + 1 if i < extra else base for i in range(k)]
    folds: list[list[int]] = []
    offset = 0
    for size in fold_sizes:
        folds.append(order[offset : offset + size])
        offset += size

    predictions: list[bool | None] = [None] * len(gold)
    margins: list[float] = [0.0] * len(gold)
    for held_out in folds:
        held_set = set(held_out)
        train_records = [gold[i] for i in order if i not in held_set]
        model = train_svm(train_records, hyper)
        for i in held_out:
            is_bad, margin = predict(gold[i].diff, model)
            predictions[i] = is_bad
            margins[i] = margin

    assert all(p is not None for p in predictions)
    precision, recall = _precision_recall(gold, predictions)  # type: ignore[arg-type]
    return CrossValResult(
        predictions=list(predictions),  # type: ignore[arg-type]
        margins=margins,
        precision=precision,
        recall=recall,
        fold_sizes=fold_sizes,
        fold_indices=folds,
    )


@dataclass
class ReductionReport:
    """Fraction of messages the gate would remove, broken down by score."""

    removed_fraction_by_score: dict[int, float]
    count_by_score: dict[int, int]
    removed_by_score: dict[int, int]
    bad_reduction: float   # fraction of score <= 1 records predicted bad
    good_cost: float       # fraction of score >= 6 records predicted bad


def reduction_report(
    gold: list[GoldRecord], predictions: list[bool]
) -> ReductionReport:
    if len(gold) != len(predictions):
        raise ValueError("every gold record needs exactly one prediction")
    count_by_score = {score: 0 for score in range(8)}
    removed_by_score = {score: 0 for score in range(8)}
    for record, predicted_bad in zip(gold, predictions):
        count_by_score[record.median_score] += 1
        if predicted_bad:
            removed_by_score[record.median_score] += 1
    fraction = {
        score: (removed_by_score[score] / count_by_score[score] if count_by_score[score] else 0.0)
        for score in range(8)
    }
    bad_total = sum(count_by_score[s] for s in range(BAD_SCORE_MAX + 1))
    bad_removed = sum(removed_by_score[s] for s in range(BAD_SCORE_MAX + 1))
    good_total = sum(count_by_score[s] for s in range(GOOD_SCORE_MIN, 8))
    good_removed = sum(removed_by_score[s] for s in range(GOOD_SCORE_MIN, 8))
    return ReductionReport(
        removed_fraction_by_score=fraction,
        count_by_score=count_by_score,
        removed_by_score=removed_by_score,
        bad_reduction=bad_removed / bad_total if bad_total else 0.0,
        good_cost=good_removed / good_total if good_total else 0.0,
    )


def save_qa_model(model: QaModel, path: str | Path) -> None:
    payload = {
        "format_version": QA_MODEL_FORMAT_VERSION,
        "feature_vocab": model.feature_vocab,
        "idf": model.idf.tolist(),
        "weights": model.weights.tolist(),
        "bias": model.bias,
        "hyper": {
            "l2_lambda": model.hyper.l2_lambda,
            "epochs": model.hyper.epochs,
            "seed": model.hyper.seed,
        },
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, sort_keys=True)
        handle.write("\n")


def load_qa_model(path: str | Path) -> QaModel:
    with open(path, encoding="utf-8") as handle:
        payload = json.load(handle)
    if payload.get("format_version") != QA_MODEL_FORMAT_VERSION:
        raise ValueError(
            f"{path}: format version {payload.get('format_version')} "
            f"!= {QA_MODEL_FORMAT_VERSION}"
        )
    return QaModel(
        feature_vocab={str(k): int(v) for k, v in payload["feature_vocab"].items()},
        idf=np.asarray(payload["idf"], dtype=np.float64),
        weights=np.asarray(payload["weights"], dtype=np.float64),
        bias=float(payload["bias"]),
        hyper=QaHyper(**payload["hyper"]),
    )
