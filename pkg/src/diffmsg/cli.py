"""Pipeline orchestration and command-line interface.

Subcommands: prepare, train, generate, evaluate, qa train|crossval|report.
Exit codes are a stable contract: 0 for success with a message, 2 when the
quality gate emits the warning instead, 1 for any error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from . import bleu, qa
from .corpus import (
    DatasetSplit,
    FilterConfig,
    PreparedCommit,
    Vocabulary,
    apply_filters,
    build_vocab,
    ingest_git,
    ingest_jsonl,
    preprocess_source,
    read_sequences,
    split_dataset,
    write_split_files,
)
from .nmt import Hyperparams, ensemble_decode, load_checkpoint, train
from .vdo import default_lexicon, is_vdo, load_lexicon

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_WARNING = 2

WARNING_TEXT = "WARNING: unable to generate a reliable commit message for this diff."


class PipelineError(RuntimeError):
    """A pipeline stage could not run or produced an empty corpus."""


@dataclass
class PipelineConfig:
    """Every knob of the pipeline; round-trips through JSON."""

    # input corpus: exactly one of these
    corpus_jsonl: str | None = None
    git_repo: str | None = None
    # artifact directory
    work_dir: str = "work"
    # preprocessing limits
    max_source_len: int = 100
    max_target_len: int = 30
    max_diff_bytes: int = 1_048_576
    # split sizes: int counts or float fractions
    valid_size: float = 0.1
    test_size: float = 0.1
    # vocabulary caps (None = keep everything)
    src_vocab_cap: int | None = 50_000
    tgt_vocab_cap: int | None = None
    # target-side verb/direct-object filter
    vdo_filter: bool = True
    vdo_lexicon_path: str | None = None
    # model and training
    embed_dim: int = 64
    hidden_dim: int = 128
    minibatch_size: int = 16
    adadelta_rho: float = 0.95
    adadelta_eps: float = 1e-6
    validate_every: int = 200
    checkpoint_every: int = 500
    max_epochs: int = 100
    max_minibatches: int = 50_000
    patience: int = 10
    ensemble_size: int = 4
    beam_width: int = 5
    # QA gate
    qa_lambda: float = 1e-4
    qa_epochs: int = 20
    seed: int = 1234

    def hyperparams(self) -> Hyperparams:
        return Hyperparams(
            embed_dim=self.embed_dim,
            hidden_dim=self.hidden_dim,
            minibatch_size=self.minibatch_size,
            max_source_len=self.max_source_len,
            max_target_len=self.max_target_len,
            adadelta_rho=self.adadelta_rho,
            adadelta_eps=self.adadelta_eps,
            validate_every=self.validate_every,
            checkpoint_every=self.checkpoint_every,
            max_epochs=self.max_epochs,
            max_minibatches=self.max_minibatches,
            patience=self.patience,
            ensemble_size=self.ensemble_size,
            beam_width=self.beam_width,
            seed=self.seed,
        )

    def filter_config(self) -> FilterConfig:
        return FilterConfig(
            max_source_len=self.max_source_len,
            max_target_len=self.max_target_len,
            max_diff_bytes=self.max_diff_bytes,
        )

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "PipelineConfig":
        data = json.loads(text)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise PipelineError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    # derived paths
    @property
    def split_dir(self) -> Path:
        return Path(self.work_dir) / "splits"

    @property
    def src_vocab_path(self) -> Path:
        return Path(self.work_dir) / "vocab.src.txt"

    @property
    def tgt_vocab_path(self) -> Path:
        return Path(self.work_dir) / "vocab.tgt.txt"

    @property
    def prepare_report_path(self) -> Path:
        return Path(self.work_dir) / "prepare_report.json"

    @property
    def checkpoint_dir(self) -> Path:
        return Path(self.work_dir) / "checkpoints"

    @property
    def train_log_path(self) -> Path:
        return Path(self.work_dir) / "train.log"

    @property
    def eval_report_path(self) -> Path:
        return Path(self.work_dir) / "eval_report.txt"

    @property
    def qa_model_path(self) -> Path:
        return Path(self.work_dir) / "qa_model.json"


def _lexicon(config: PipelineConfig):
    if config.vdo_lexicon_path:
        return load_lexicon(config.vdo_lexicon_path)
    return default_lexicon()


def cmd_prepare(config: PipelineConfig) -> dict:
    """Ingest -> preprocess -> filter -> V-DO -> split -> vocabularies.

    Writes split files, vocabulary files, and a JSON funnel report; returns
    the report.  Raises PipelineError naming the stage that emptied the
    corpus.
    """
    if bool(config.corpus_jsonl) == bool(config.git_repo):
        raise PipelineError("config must set exactly one of corpus_jsonl or git_repo")
    if config.corpus_jsonl:
        commits = ingest_jsonl(config.corpus_jsonl)
        skipped = 0
    else:
        ingest = ingest_git(config.git_repo)
        commits = ingest.commits
        skipped = ingest.skipped
    if not commits:
        raise PipelineError("ingest produced no commits")

    kept, filter_report = apply_filters(commits, config.filter_config())
    if not kept:
        reasons = ", ".join(f"{k}={v}" for k, v in filter_report.removed.items() if v)
        raise PipelineError(f"preprocessing filters removed every commit ({reasons})")

    vdo_removed = 0
    if config.vdo_filter:
        lexicon = _lexicon(config)
        before = len(kept)
        kept = [item for item in kept if is_vdo(item.target, lexicon)]
        vdo_removed = before - len(kept)
        if not kept:
            raise PipelineError("verb/direct-object filter removed every commit")

    split = split_dataset(kept, valid=config.valid_size, test=config.test_size, seed=config.seed)
    if not split.train:
        raise PipelineError("split left an empty training set")

    Path(config.work_dir).mkdir(parents=True, exist_ok=True)
    write_split_files(split, config.split_dir)
    src_vocab = build_vocab([item.source for item in split.train], cap=config.src_vocab_cap)
    tgt_vocab = build_vocab([item.target for item in split.train], cap=config.tgt_vocab_cap)
    src_vocab.save(config.src_vocab_path)
    tgt_vocab.save(config.tgt_vocab_path)

    report = {
        "ingested": len(commits),
        "ingest_skipped": skipped,
        "removed": dict(filter_report.removed),
        "after_filters": filter_report.kept_count,
        "vdo_filter_enabled": config.vdo_filter,
        "vdo_removed": vdo_removed,
        "after_vdo": len(kept),
        "train": len(split.train),
        "valid": len(split.valid),
        "test": len(split.test),
        "src_vocab_size": len(src_vocab),
        "tgt_vocab_size": len(tgt_vocab),
        "seed": config.seed,
    }
    config.prepare_report_path.write_text(
        json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return report


def _load_split(config: PipelineConfig) -> DatasetSplit:
    split_dir = config.split_dir
    if not split_dir.is_dir():
        raise PipelineError(f"{split_dir}: splits not found; run prepare first")
    parts = {}
    for part in ("train", "valid", "test"):
        sources = read_sequences(split_dir / f"{part}.src.txt")
        targets = read_sequences(split_dir / f"{part}.tgt.txt")
        if len(sources) != len(targets):
            raise PipelineError(f"{part} source/target files are not line-aligned")
        parts[part] = [
            PreparedCommit(f"{part}-{i}", src, tgt)
            for i, (src, tgt) in enumerate(zip(sources, targets))
        ]
    return DatasetSplit(parts["train"], parts["valid"], parts["test"], seed=config.seed)


def _load_vocabs(config: PipelineConfig) -> tuple[Vocabulary, Vocabulary]:
    for path in (config.src_vocab_path, config.tgt_vocab_path):
        if not path.is_file():
            raise PipelineError(f"{path}: vocabulary not found; run prepare first")
    return Vocabulary.load(config.src_vocab_path), Vocabulary.load(config.tgt_vocab_path)


def cmd_train(config: PipelineConfig, resume: bool = False) -> list[Path]:
    """Train on the prepared splits; write checkpoints and the training log."""
    split = _load_split(config)
    src_vocab, tgt_vocab = _load_vocabs(config)
    resume_from = None
    if resume:
        existing = _checkpoint_paths(config)
        if existing:
            resume_from = load_checkpoint(
                existing[-1],
                expected_src_vocab_size=len(src_vocab),
                expected_tgt_vocab_size=len(tgt_vocab),
            )
    train(
        split,
        src_vocab,
        tgt_vocab,
        config.hyperparams(),
        checkpoint_dir=config.checkpoint_dir,
        log_path=config.train_log_path,
        resume_from=resume_from,
    )
    return _checkpoint_paths(config)


def _checkpoint_paths(config: PipelineConfig) -> list[Path]:
    if not config.checkpoint_dir.is_dir():
        return []
    return sorted(config.checkpoint_dir.glob("checkpoint_*.ckpt"))


def _load_ensemble(config: PipelineConfig, src_vocab: Vocabulary, tgt_vocab: Vocabulary):
    paths = _checkpoint_paths(config)
    if not paths:
        raise PipelineError(f"{config.checkpoint_dir}: no checkpoints; run train first")
    selected = paths[-config.ensemble_size:]
    return [
        load_checkpoint(
            path,
            expected_src_vocab_size=len(src_vocab),
            expected_tgt_vocab_size=len(tgt_vocab),
        )
        for path in selected
    ]


def cmd_generate(config: PipelineConfig, diff_text: str, with_qa: bool) -> tuple[int, str]:
    """Generate a message for one diff, or the warning when gated.

    Returns (exit_code, output line); never both a message and a warning.
    """
    src_vocab, tgt_vocab = _load_vocabs(config)
    source_tokens = preprocess_source(diff_text)
    if with_qa:
        if not config.qa_model_path.is_file():
            raise PipelineError(f"{config.qa_model_path}: QA model not found; run qa train first")
        model = qa.load_qa_model(config.qa_model_path)
        is_bad, _ = qa.predict(source_tokens, model)
        if is_bad:
            return EXIT_WARNING, WARNING_TEXT
    checkpoints = _load_ensemble(config, src_vocab, tgt_vocab)
    source_ids = src_vocab.encode(source_tokens[: config.max_source_len], add_eos=True)
    generated = ensemble_decode(
        checkpoints,
        source_ids,
        beam_width=config.beam_width,
        max_len=config.max_target_len,
    )
    return EXIT_OK, " ".join(tgt_vocab.decode(generated))


def cmd_evaluate(config: PipelineConfig, smoke_identity: bool = False) -> str:
    """Score the test split: ensemble BLEU, retrieval baseline, length buckets.

    smoke_identity scores the references against themselves (pipeline
    sanity: BLEU must be exactly 100).  Writes and returns the report.
    """
    split = _load_split(config)
    if not split.test:
        raise PipelineError("test split is empty")
    references = [item.target for item in split.test]
    source_lengths = [len(item.source) for item in split.test]

    if smoke_identity:
        generated = [list(reference) for reference in references]
        model_name = "identity"
    else:
        src_vocab, tgt_vocab = _load_vocabs(config)
        checkpoints = _load_ensemble(config, src_vocab, tgt_vocab)
        generated = []
        for item in split.test:
            source_ids = src_vocab.encode(item.source[: config.max_source_len], add_eos=True)
            ids = ensemble_decode(
                checkpoints, source_ids, beam_width=config.beam_width,
                max_len=config.max_target_len,
            )
            generated.append(tgt_vocab.decode(ids))
        model_name = f"ensemble_{len(checkpoints)}"

    pairs = list(zip(generated, references))
    model_report = bleu.corpus_bleu(pairs)

    if not split.train:
        raise PipelineError("training split is empty; the retrieval baseline needs it")
    train_pairs = [(item.source, item.target) for item in split.train]
    baseline_generated = bleu.retrieval_baseline(train_pairs, [item.source for item in split.test])
    baseline_report = bleu.corpus_bleu(list(zip(baseline_generated, references)))

    buckets = bleu.bucketed_bleu(
        [(length, gen, ref) for length, (gen, ref) in zip(source_lengths, pairs)]
    )

    lines = [bleu.format_report_table([(model_name, model_report), ("retrieval", baseline_report)])]
    lines.append("")
    lines.append("BLEU by source length:")
    for bucket in buckets:
        if bucket.report is None:
            lines.append(f"  {bucket.label:<14} n={bucket.count:<6d} (empty)")
        else:
            lines.append(
                f"  {bucket.label:<14} n={bucket.count:<6d} BLEU={bucket.report.bleu:.2f}"
            )
    report_text = "\n".join(lines) + "\n"
    config.eval_report_path.write_text(report_text, encoding="utf-8")
    return report_text


def cmd_qa(config: PipelineConfig, subaction: str, gold_path: str) -> str:
    """QA gate actions: fit and save a model, cross-validate, or report."""
    gold = qa.load_gold_jsonl(gold_path)
    if not gold:
        raise PipelineError(f"{gold_path}: gold set is empty")
    hyper = qa.QaHyper(l2_lambda=config.qa_lambda, epochs=config.qa_epochs, seed=config.seed)
    if subaction == "train":
        model = qa.train_svm(gold, hyper)
        Path(config.work_dir).mkdir(parents=True, exist_ok=True)
        qa.save_qa_model(model, config.qa_model_path)
        return f"saved QA model for {len(gold)} records to {config.qa_model_path}\n"
    result = qa.cross_validate(gold, k=10, seed=config.seed, hyper=hyper)
    if subaction == "crossval":
        return (
            f"records={len(gold)} folds={len(result.fold_sizes)} "
            f"precision={result.precision:.4f} recall={result.recall:.4f}\n"
        )
    if subaction == "report":
        report = qa.reduction_report(gold, result.predictions)
        lines = ["removed fraction by median score:"]
        for score in range(8):
            lines.append(
                f"  score {score}: {report.removed_fraction_by_score[score]:.4f} "
                f"({report.removed_by_score[score]}/{report.count_by_score[score]})"
            )
        lines.append(f"bad_reduction={report.bad_reduction:.4f}")
        lines.append(f"good_cost={report.good_cost:.4f}")
        return "\n".join(lines) + "\n"
    raise PipelineError(f"unknown qa subaction {subaction!r}")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffmsg",
        description="Generate one-sentence commit messages from diffs.",
    )
    parser.add_argument("--config", help="path to a JSON pipeline config")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--vdo", choices=["on", "off"], help="override the V-DO filter switch")
    parser.add_argument("--vdo-lexicon", help="override the verb lexicon file path")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("prepare", help="ingest, filter, split, and build vocabularies")

    train_parser = sub.add_parser("train", help="train the encoder-decoder")
    train_parser.add_argument("--resume", action="store_true", help="continue from the last checkpoint")

    generate_parser = sub.add_parser("generate", help="generate a message for one diff")
    generate_parser.add_argument("--diff", help="diff file path (default: standard input)")
    generate_parser.add_argument("--with-qa", action="store_true", help="gate through the QA model")

    evaluate_parser = sub.add_parser("evaluate", help="score the test split")
    evaluate_parser.add_argument(
        "--smoke-identity", action="store_true",
        help="score references against themselves (sanity check)",
    )

    qa_parser = sub.add_parser("qa", help="quality-assurance model actions")
    qa_parser.add_argument("subaction", choices=["train", "crossval", "report"])
    qa_parser.add_argument("--gold", required=True, help="gold set JSON-lines file")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.config:
            config = PipelineConfig.load(args.config)
        else:
            config = PipelineConfig()
        if args.seed is not None:
            config.seed = args.seed
        if args.vdo is not None:
            config.vdo_filter = args.vdo == "on"
        if args.vdo_lexicon is not None:
            config.vdo_lexicon_path = args.vdo_lexicon

        if args.command == "prepare":
            report = cmd_prepare(config)
            print(json.dumps(report, sort_keys=True, indent=2))
            return EXIT_OK
        if args.command == "train":
            paths = cmd_train(config, resume=args.resume)
            print(f"wrote {len(paths)} checkpoint(s) to {config.checkpoint_dir}")
            return EXIT_OK
        if args.command == "generate":
            if args.diff:
                diff_text = Path(args.diff).read_text(encoding="utf-8")
            else:
                diff_text = sys.stdin.read()
            code, line = cmd_generate(config, diff_text, with_qa=args.with_qa)
            print(line)
            return code
        if args.command == "evaluate":
            print(cmd_evaluate(config, smoke_identity=args.smoke_identity), end="")
            return EXIT_OK
        if args.command == "qa":
            print(cmd_qa(config, args.subaction, args.gold), end="")
            return EXIT_OK
        raise PipelineError(f"unknown command {args.command!r}")
    except Exception as exc:  # uniform error contract: message on stderr, exit 1
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main_entry() -> None:
    sys.exit(main())
