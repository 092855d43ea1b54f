"""Tests for the quality-assurance classifier."""

import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diffmsg.qa import (
    GoldRecord,
    QaHyper,
    QaModel,
    compute_idf,
    cross_validate,
    floor_median,
    load_gold_jsonl,
    load_qa_model,
    predict,
    reduction_report,
    save_qa_model,
    tfidf,
    train_svm,
)

MARKERS = ["deadlock", "refit", "qqq", "zork", "blorp"]


def separable_gold(n=60, seed=0):
    """Bad records carry one of the marker tokens; good ones never do."""
    rng = random.Random(seed)
    vocab = [f"tok{i}" for i in range(30)]
    records = []
    for i in range(n):
        diff = [rng.choice(vocab) for _ in range(rng.randint(3, 10))]
        if i % 2 == 0:
            diff.insert(rng.randrange(len(diff) + 1), rng.choice(MARKERS))
            scores = (rng.randint(0, 1),)
        else:
            scores = (rng.randint(2, 7),)
        records.append(GoldRecord(diff=diff, scores=scores))
    return records


class TestMedianAndLabels:
    @pytest.mark.parametrize(
        "scores,expected",
        [((1, 2), 1), ((2,), 2), ((0, 7, 7), 7), ((3, 4), 3), ((5, 5, 5), 5), ((0, 1), 0)],
    )
    def test_floor_median(self, scores, expected):
        assert floor_median(scores) == expected

    def test_bad_label_boundary(self):
        assert GoldRecord(diff=["x"], scores=(1,)).is_bad
        assert not GoldRecord(diff=["x"], scores=(2,)).is_bad

    def test_score_range_validated(self):
        with pytest.raises(ValueError):
            GoldRecord(diff=["x"], scores=(8,))
        with pytest.raises(ValueError):
            GoldRecord(diff=["x"], scores=())


class TestIdf:
    def test_token_in_every_document(self):
        diffs = [["common", f"x{i}"] for i in range(10)]
        vocab, idf = compute_idf(diffs)
        assert idf[vocab["common"]] == pytest.approx(1.0)

    def test_token_in_one_of_ten(self):
        diffs = [["common", "rare"]] + [["common"] for _ in range(9)]
        vocab, idf = compute_idf(diffs)
        assert idf[vocab["rare"]] == pytest.approx(math.log(11 / 2) + 1, abs=1e-12)
        assert idf[vocab["rare"]] == pytest.approx(2.7047480922384253)

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            compute_idf([])


class TestTfidf:
    def test_single_known_token_is_unit(self):
        vocab, idf = compute_idf([["a", "b"], ["b"]])
        features = tfidf(["a"], vocab, idf)
        assert features == {vocab["a"]: pytest.approx(1.0)}

    def test_empty_diff(self):
        vocab, idf = compute_idf([["a"]])
        assert tfidf([], vocab, idf) == {}

    def test_unknown_tokens_ignored(self):
        vocab, idf = compute_idf([["a"]])
        assert tfidf(["mystery"], vocab, idf) == {}

    def test_equal_counts_equal_idf_split(self):
        vocab, idf = compute_idf([["a", "b"], ["a", "b"]])
        features = tfidf(["a", "b"], vocab, idf)
        assert features[vocab["a"]] == pytest.approx(1 / math.sqrt(2))
        assert features[vocab["b"]] == pytest.approx(1 / math.sqrt(2))

    def test_l2_norm_one_when_any_token_known(self):
        vocab, idf = compute_idf([["a", "b", "c"], ["b"]])
        features = tfidf(["a", "b", "b", "zzz"], vocab, idf)
        norm = math.sqrt(sum(v * v for v in features.values()))
        assert norm == pytest.approx(1.0, abs=1e-12)

    @given(st.integers(1, 5))
    @settings(max_examples=30)
    def test_count_scaling_invariance(self, factor):
        vocab, idf = compute_idf([["a", "b"], ["b", "c"]])
        base = tfidf(["a", "b", "b"], vocab, idf)
        scaled = tfidf(["a", "b", "b"] * factor, vocab, idf)
        assert set(base) == set(scaled)
        for index in base:
            assert scaled[index] == pytest.approx(base[index], abs=1e-12)


class TestTrainSvm:
    def test_separable_training_accuracy(self):
        gold = separable_gold()
        model = train_svm(gold)
        for record in gold:
            is_bad, _ = predict(record.diff, model)
            assert is_bad == record.is_bad

    def test_deterministic(self):
        gold = separable_gold()
        a = train_svm(gold, QaHyper(seed=5))
        b = train_svm(gold, QaHyper(seed=5))
        np.testing.assert_array_equal(a.weights, b.weights)
        assert a.bias == b.bias

    def test_single_class_rejected(self):
        gold = [GoldRecord(diff=["x"], scores=(0,)) for _ in range(5)]
        with pytest.raises(ValueError, match="both"):
            train_svm(gold)


class TestPredict:
    def test_zero_model_predicts_not_bad(self):
        vocab, idf = compute_idf([["a"]])
        model = QaModel(vocab, idf, np.zeros(len(vocab)), 0.0)
        is_bad, margin = predict(["a"], model)
        assert not is_bad
        assert margin == 0.0

    def test_marker_feature_triggers_bad(self):
        vocab, idf = compute_idf([["marker"], ["clean"]])
        weights = np.zeros(len(vocab))
        weights[vocab["marker"]] = 2.0
        model = QaModel(vocab, idf, weights, -0.5)
        assert predict(["marker"], model)[0]
        assert not predict(["clean"], model)[0]

    def test_empty_diff_with_positive_bias(self):
        vocab, idf = compute_idf([["a"]])
        model = QaModel(vocab, idf, np.zeros(len(vocab)), 0.25)
        is_bad, margin = predict([], model)
        assert is_bad
        assert margin == 0.25


class TestCrossValidate:
    def test_every_record_predicted_once_leave_one_out_style(self):
        gold = separable_gold(n=12)
        result = cross_validate(gold, k=12, seed=1)
        assert len(result.predictions) == 12
        assert sum(result.fold_sizes) == 12
        assert max(result.fold_sizes) - min(result.fold_sizes) <= 1

    def test_separable_gold_perfect_scores(self):
        # enough records for the 1/(lambda*t) schedule to settle; with tiny
        # gold sets the late SGD steps are still large and folds get noisy
        gold = separable_gold(n=200)
        result = cross_validate(gold, k=10, seed=3)
        assert result.precision == 1.0
        assert result.recall == 1.0

    def test_too_few_records_rejected(self):
        with pytest.raises(ValueError):
            cross_validate(separable_gold(n=6), k=10)

    def test_matches_confusion_recount(self):
        gold = separable_gold(n=40, seed=9)
        result = cross_validate(gold, k=5, seed=2)
        tp = fp = fn = 0
        for record, predicted in zip(gold, result.predictions):
            if predicted and record.is_bad:
                tp += 1
            elif predicted and not record.is_bad:
                fp += 1
            elif not predicted and record.is_bad:
                fn += 1
        assert result.precision == pytest.approx(tp / (tp + fp) if tp + fp else 0.0)
        assert result.recall == pytest.approx(tp / (tp + fn) if tp + fn else 0.0)

    @given(st.integers(0, 1000), st.integers(10, 60))
    @settings(max_examples=20, deadline=None)
    def test_fold_partition_properties(self, seed, n):
        rng = random.Random(seed)
        gold = []
        for i in range(n):
            bad = i < 2 or (i >= 4 and rng.random() < 0.5)
            gold.append(
                GoldRecord(
                    diff=[rng.choice("abcdefg") for _ in range(3)] + (["mk"] if bad else []),
                    scores=(rng.randint(0, 1) if bad else rng.randint(2, 7),),
                )
            )
        k = min(10, n)
        result = cross_validate(gold, k=k, seed=seed)
        assert len(result.fold_sizes) == k
        assert sum(result.fold_sizes) == n
        assert max(result.fold_sizes) - min(result.fold_sizes) <= 1
        assert len(result.predictions) == n


class TestReductionReport:
    def _gold_with_scores(self, scores):
        return [GoldRecord(diff=[f"d{i}"], scores=(s,)) for i, s in enumerate(scores)]

    def test_all_not_bad_predictions(self):
        gold = self._gold_with_scores([0, 1, 3, 6, 7])
        report = reduction_report(gold, [False] * 5)
        assert all(v == 0.0 for v in report.removed_fraction_by_score.values())
        assert report.bad_reduction == 0.0
        assert report.good_cost == 0.0

    def test_all_bad_predictions(self):
        gold = self._gold_with_scores([0, 1, 3, 6, 7])
        report = reduction_report(gold, [True] * 5)
        for score in (0, 1, 3, 6, 7):
            assert report.removed_fraction_by_score[score] == 1.0
        assert report.bad_reduction == 1.0
        assert report.good_cost == 1.0

    def test_matches_brute_force_recount(self):
        rng = random.Random(17)
        scores = [rng.randint(0, 7) for _ in range(200)]
        gold = self._gold_with_scores(scores)
        predictions = [rng.random() < 0.4 for _ in range(200)]
        report = reduction_report(gold, predictions)
        for score in range(8):
            hits = [p for g, p in zip(gold, predictions) if g.median_score == score]
            expected = (sum(hits) / len(hits)) if hits else 0.0
            assert report.removed_fraction_by_score[score] == pytest.approx(expected)
        bad = [p for g, p in zip(gold, predictions) if g.median_score <= 1]
        good = [p for g, p in zip(gold, predictions) if g.median_score >= 6]
        assert report.bad_reduction == pytest.approx(sum(bad) / len(bad))
        assert report.good_cost == pytest.approx(sum(good) / len(good))

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            reduction_report(self._gold_with_scores([0]), [True, False])


class TestModelIO:
    def test_roundtrip(self, tmp_path):
        gold = separable_gold(n=30)
        model = train_svm(gold)
        path = tmp_path / "qa.json"
        save_qa_model(model, path)
        loaded = load_qa_model(path)
        np.testing.assert_array_equal(loaded.weights, model.weights)
        np.testing.assert_array_equal(loaded.idf, model.idf)
        assert loaded.bias == model.bias
        assert loaded.feature_vocab == model.feature_vocab
        for record in gold[:5]:
            assert predict(record.diff, loaded) == predict(record.diff, model)

    def test_version_check(self, tmp_path):
        path = tmp_path / "qa.json"
        path.write_text('{"format_version": 99}')
        with pytest.raises(ValueError, match="version"):
            load_qa_model(path)


class TestGoldFile:
    def test_load(self, tmp_path):
        path = tmp_path / "gold.jsonl"
        path.write_text(
            '{"id": "a", "diff": "fix the bug", "scores": [0, 1]}\n'
            '{"id": "b", "diff": "tweak docs", "scores": [7]}\n'
        )
        records = load_gold_jsonl(path)
        assert len(records) == 2
        assert records[0].is_bad and not records[1].is_bad

    def test_error_names_line(self, tmp_path):
        path = tmp_path / "gold.jsonl"
        path.write_text('{"id": "a", "diff": "x", "scores": [0]}\n{"id": "b"}\n')
        with pytest.raises(ValueError, match="line 2"):
            load_gold_jsonl(path)
