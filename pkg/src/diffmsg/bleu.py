"""Corpus-level BLEU: clipped modified n-gram precisions and brevity penalty.

Scores a whole test set at once (single reference per generated message),
reports the constituent precisions and lengths, supports the diff-length
bucket breakdown, and provides a nearest-neighbor retrieval baseline.
Scores are percentages in [0, 100].
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from .corpus import TokenSequence

Pair = tuple[TokenSequence, TokenSequence]  # (generated, reference)

SMOOTHING_MODES = ("none", "add_one_counts")

DEFAULT_BUCKET_BOUNDARIES = (25, 50, 75)


@dataclass(frozen=True)
class BleuReport:
    bleu: float                      # 0..100
    precisions: tuple[float, ...]    # p_1..p_N, percent
    len_gen: int                     # c: total generated length
    len_ref: int                     # r: total reference length
    brevity_penalty: float
    smoothing: str = "none"


def ngram_counts(tokens: TokenSequence, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _clipped_totals(n: int, pairs: list[Pair]) -> tuple[int, int]:
    """Sum clipped and raw n-gram counts over the whole corpus."""
    clipped = 0
    total = 0
    for generated, reference in pairs:
        gen_counts = ngram_counts(generated, n)
        ref_counts = ngram_counts(reference, n)
        for ngram, count in gen_counts.items():
            clipped += min(count, ref_counts[ngram])
            total += count
    return clipped, total


def modified_precision(n: int, pairs: list[Pair]) -> float:
    """Clipped n-gram precision over the corpus, as a fraction in [0, 1]."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    clipped, total = _clipped_totals(n, pairs)
    return clipped / total if total else 0.0


def brevity_penalty(c: int, r: int) -> float:
    """1 if c > r, exp(1 - r/c) otherwise; 0 in the empty-output limit."""
    if c < 0 or r < 0:
        raise ValueError("lengths must be non-negative")
    if c == 0:
        return 1.0 if r == 0 else 0.0
    if c > r:
        return 1.0
    return math.exp(1.0 - r / c)


def corpus_bleu(pairs: list[Pair], max_order: int = 4, smoothing: str = "none") -> BleuReport:
    """Corpus BLEU combining p_1..p_max_order with uniform log-space weights.

    Unsmoothed, any zero precision makes the score 0.  The
    "add_one_counts" mode adds one to each precision's numerator and
    denominator so tiny corpora stay comparable; the report carries the
    mode used.
    """
    if not pairs:
        raise ValueError("corpus_bleu requires a non-empty list of pairs")
    if smoothing not in SMOOTHING_MODES:
        raise ValueError(f"smoothing must be one of {SMOOTHING_MODES}, got {smoothing!r}")
    precisions: list[float] = []
    for n in range(1, max_order + 1):
        clipped, total = _clipped_totals(n, pairs)
        if smoothing == "add_one_counts":
            precisions.append((clipped + 1) / (total + 1))
        else:
            precisions.append(clipped / total if total else 0.0)
    c = sum(len(generated) for generated, _ in pairs)
    r = sum(len(reference) for _, reference in pairs)
    bp = brevity_penalty(c, r)
    if any(p == 0.0 for p in precisions):
        score = 0.0
    else:
        score = 100.0 * bp * math.exp(sum(math.log(p) for p in precisions) / max_order)
    return BleuReport(
        bleu=score,
        precisions=tuple(100.0 * p for p in precisions),
        len_gen=c,
        len_ref=r,
        brevity_penalty=bp,
        smoothing=smoothing,
    )


@dataclass(frozen=True)
class BleuBucket:
    label: str
    count: int
    report: BleuReport | None  # None for an empty bucket


def bucket_labels(boundaries: tuple[int, ...]) -> list[str]:
    labels = [f"<= {boundaries[0]}"]
    labels += [f"> {lo}, <= {hi}" for lo, hi in zip(boundaries, boundaries[1:])]
    labels.append(f"> {boundaries[-1]}")
    return labels


def bucketed_bleu(
    pairs_with_lengths: list[tuple[int, TokenSequence, TokenSequence]],
    boundaries: tuple[int, ...] = DEFAULT_BUCKET_BOUNDARIES,
    max_order: int = 4,
    smoothing: str = "none",
) -> list[BleuBucket]:
    """Split pairs by source length and score each bucket independently.

    Buckets are half-open above: (<= b1], (b1, b2], ..., (> bN).
    """
    if any(hi <= lo for lo, hi in zip(boundaries, boundaries[1:])):
        raise ValueError(f"boundaries must be strictly increasing, got {boundaries}")
    groups: list[list[Pair]] = [[] for _ in range(len(boundaries) + 1)]
    for length, generated, reference in pairs_with_lengths:
        index = sum(1 for b in boundaries if length > b)
        groups[index].append((generated, reference))
    buckets = []
    for label, group in zip(bucket_labels(tuple(boundaries)), groups):
        report = corpus_bleu(group, max_order, smoothing) if group else None
        buckets.append(BleuBucket(label=label, count=len(group), report=report))
    return buckets


def _cosine(a: Counter, a_norm: float, b: Counter, b_norm: float) -> float:
    if a_norm == 0.0 or b_norm == 0.0:
        return 0.0
    if len(b) < len(a):
        a, b = b, a
    dot = sum(count * b[token] for token, count in a.items())
    return dot / (a_norm * b_norm)


def nearest_neighbors(
    train_sources: list[TokenSequence], source: TokenSequence, k: int = 1
) -> list[tuple[int, float]]:
    """Top-k training indices by cosine similarity of unigram counts.

    Ties break toward the lower training index.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    query = Counter(source)
    query_norm = math.sqrt(sum(c * c for c in query.values()))
    scored = []
    for index, tokens in enumerate(train_sources):
        counts = Counter(tokens)
        norm = math.sqrt(sum(c * c for c in counts.values()))
        scored.append((index, _cosine(query, query_norm, counts, norm)))
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored[:k]


def retrieval_baseline(
    train_pairs: list[Pair], test_sources: list[TokenSequence], k: int = 1
) -> list[TokenSequence]:
    """For each test source, copy the message of the most similar training diff.

    k bounds the neighborhood retrieved per source; the returned message is
    always the best match (lowest index on ties).
    """
    if not train_pairs:
        raise ValueError("retrieval baseline requires a non-empty training set")
    train_sources = [source for source, _ in train_pairs]
    generated = []
    for source in test_sources:
        best_index, _ = nearest_neighbors(train_sources, source, k)[0]
        generated.append(list(train_pairs[best_index][1]))
    return generated


def format_report_table(rows: list[tuple[str, BleuReport]]) -> str:
    """Fixed-width evaluation table: model, BLEU, lengths, p_1..p_4."""
    header = (
        f"{'Model':<16} {'BLEU':>7} {'Len_Gen':>8} {'Len_Ref':>8} "
        f"{'p_1':>6} {'p_2':>6} {'p_3':>6} {'p_4':>6}"
    )
    lines = [header]
    for name, report in rows:
        precisions = list(report.precisions) + [0.0] * (4 - len(report.precisions))
        lines.append(
            f"{name:<16} {report.bleu:>7.2f} {report.len_gen:>8d} {report.len_ref:>8d} "
            f"{precisions[0]:>6.1f} {precisions[1]:>6.1f} {precisions[2]:>6.1f} {precisions[3]:>6.1f}"
        )
    return "\n".join(lines)
