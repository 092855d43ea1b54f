"""Training loop, Adadelta optimizer, and checkpoint serialization.

Training reshuffles the pairs every epoch with a deterministically derived
per-epoch RNG, validates by greedy-decode corpus BLEU, saves checkpoints
on a fixed minibatch schedule, and early-stops when validation BLEU stops
improving.  Checkpoints are a versioned binary container: one JSON header
line (dims, vocab sizes, seed, tensor manifest, payload length) followed by
raw float64 tensor bytes, so identical runs produce identical bytes.
"""

from __future__ import annotations

import copy
import json
import random
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import bleu
from ..corpus import DatasetSplit, Vocabulary
from .decoding import greedy_decode
from .model import (
    Array,
    GruParams,
    Hyperparams,
    ModelParams,
    init_params,
    loss_backward,
    loss_forward,
    pad_batch,
)

CHECKPOINT_FORMAT_VERSION = 1

# (accumulated squared gradient, accumulated squared update) per tensor
OptimizerState = dict[str, tuple[Array, Array]]


class CheckpointError(RuntimeError):
    """Unreadable, truncated, or incompatible checkpoint file."""


def init_optimizer_state(params: ModelParams) -> OptimizerState:
    return {
        name: (np.zeros_like(tensor), np.zeros_like(tensor))
        for name, tensor in params.tensors().items()
    }


def adadelta_update(
    params: ModelParams,
    grads: dict[str, Array],
    optimizer_state: OptimizerState,
    rho: float,
    eps: float,
) -> tuple[ModelParams, OptimizerState]:
    """One Adadelta step, in place.

    Per coordinate: E[g^2] <- rho E[g^2] + (1-rho) g^2, the update is
    -(sqrt(E[dx^2]+eps) / sqrt(E[g^2]+eps)) g, and E[dx^2] accumulates the
    squared update with the same decay.
    """
    for name, tensor in params.tensors().items():
        g = grads[name]
        acc_grad_sq, acc_update_sq = optimizer_state[name]
        acc_grad_sq *= rho
        acc_grad_sq += (1.0 - rho) * g * g
        delta = -np.sqrt(acc_update_sq + eps) / np.sqrt(acc_grad_sq + eps) * g
        acc_update_sq *= rho
        acc_update_sq += (1.0 - rho) * delta * delta
        tensor += delta
    return params, optimizer_state


@dataclass
class Checkpoint:
    params: ModelParams
    optimizer_state: OptimizerState | None
    minibatch_index: int
    validation_bleu: float | None
    seed: int = 0


def save_checkpoint(checkpoint: Checkpoint, path: str | Path) -> None:
    params = checkpoint.params
    tensors = dict(params.tensors())
    if checkpoint.optimizer_state is not None:
        for name, (acc_g, acc_u) in checkpoint.optimizer_state.items():
            tensors[f"opt.{name}.grad_sq"] = acc_g
            tensors[f"opt.{name}.update_sq"] = acc_u
    manifest = [
        {"name": name, "shape": list(tensor.shape)} for name, tensor in tensors.items()
    ]
    payload_bytes = sum(int(np.prod(t.shape)) * 8 for t in tensors.values())
    header = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "embed_dim": params.embed_dim,
        "hidden_dim": params.hidden_dim,
        "src_vocab_size": params.src_vocab_size,
        "tgt_vocab_size": params.tgt_vocab_size,
        "seed": checkpoint.seed,
        "minibatch_index": checkpoint.minibatch_index,
        "validation_bleu": checkpoint.validation_bleu,
        "has_optimizer_state": checkpoint.optimizer_state is not None,
        "payload_bytes": payload_bytes,
        "tensors": manifest,
    }
    with open(path, "wb") as handle:
        handle.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for tensor in tensors.values():
            handle.write(np.ascontiguousarray(tensor, dtype=np.float64).tobytes())


def _rebuild_params(header: dict, tensors: dict[str, Array]) -> ModelParams:
    def gru(prefix: str) -> GruParams:
        names = ("w_z", "w_r", "w_h", "u_z", "u_r", "u_h", "b_z", "b_r", "b_h")
        return GruParams(**{name: tensors[f"{prefix}.{name}"] for name in names})

    return ModelParams(
        src_emb=tensors["src_emb"],
        tgt_emb=tensors["tgt_emb"],
        enc_fwd=gru("enc_fwd"),
        enc_bwd=gru("enc_bwd"),
        dec=gru("dec"),
        att_w=tensors["att_w"],
        att_u=tensors["att_u"],
        att_v=tensors["att_v"],
        out_w=tensors["out_w"],
        out_b=tensors["out_b"],
        init_w=tensors["init_w"],
        init_b=tensors["init_b"],
    )


def load_checkpoint(
    path: str | Path,
    expected_src_vocab_size: int | None = None,
    expected_tgt_vocab_size: int | None = None,
) -> Checkpoint:
    """Load a checkpoint, verifying version, payload length, and vocab sizes."""
    with open(path, "rb") as handle:
        header_line = handle.readline()
        try:
            header = json.loads(header_line)
        except ValueError as exc:  # bad JSON or undecodable bytes
            raise CheckpointError(f"{path}: unreadable header") from exc
        if not isinstance(header, dict):
            raise CheckpointError(f"{path}: unreadable header")
        if header.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise CheckpointError(
                f"{path}: format version {header.get('format_version')} "
                f"!= {CHECKPOINT_FORMAT_VERSION}"
            )
        payload = handle.read()
    if len(payload) != header["payload_bytes"]:
        raise CheckpointError(
            f"{path}: truncated payload ({len(payload)} of {header['payload_bytes']} bytes)"
        )
    if (
        expected_src_vocab_size is not None
        and header["src_vocab_size"] != expected_src_vocab_size
    ):
        raise CheckpointError(
            f"{path}: source vocab size {header['src_vocab_size']} "
            f"!= expected {expected_src_vocab_size}"
        )
    if (
        expected_tgt_vocab_size is not None
        and header["tgt_vocab_size"] != expected_tgt_vocab_size
    ):
        raise CheckpointError(
            f"{path}: target vocab size {header['tgt_vocab_size']} "
            f"!= expected {expected_tgt_vocab_size}"
        )
    tensors: dict[str, Array] = {}
    offset = 0
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        tensors[entry["name"]] = (
            np.frombuffer(payload, dtype=np.float64, count=count, offset=offset)
            .reshape(shape)
            .copy()
        )
        offset += count * 8
    params = _rebuild_params(header, tensors)
    optimizer_state: OptimizerState | None = None
    if header["has_optimizer_state"]:
        optimizer_state = {
            name: (tensors[f"opt.{name}.grad_sq"], tensors[f"opt.{name}.update_sq"])
            for name in params.tensors()
        }
    return Checkpoint(
        params=params,
        optimizer_state=optimizer_state,
        minibatch_index=header["minibatch_index"],
        validation_bleu=header["validation_bleu"],
        seed=header["seed"],
    )


def _epoch_order(seed: int, epoch: int, n: int) -> list[int]:
    # Derived, not chained: lets a resumed run regenerate any epoch's order.
    order = list(range(n))
    random.Random(seed * 1_000_003 + epoch).shuffle(order)
    return order


def _validation_bleu(
    params: ModelParams,
    valid_pairs: list[tuple[list[int], list[str]]],
    tgt_vocab: Vocabulary,
    max_target_len: int,
) -> float:
    pairs = []
    for source_ids, ref_tokens in valid_pairs:
        generated = greedy_decode(params, source_ids, max_len=max_target_len)
        pairs.append((tgt_vocab.decode(generated), ref_tokens))
    return bleu.corpus_bleu(pairs).bleu


def train(
    split: DatasetSplit,
    src_vocab: Vocabulary,
    tgt_vocab: Vocabulary,
    hyper: Hyperparams,
    checkpoint_dir: str | Path | None = None,
    log_path: str | Path | None = None,
    resume_from: Checkpoint | None = None,
) -> list[Checkpoint]:
    """Minibatch Adadelta training; returns every checkpoint saved, in order.

    Validation runs every hyper.validate_every minibatches on greedy
    decodes of the validation split (skipped if it is empty); training
    stops after hyper.patience consecutive non-improving validations, or at
    the epoch/minibatch limits.  A final checkpoint is always saved.
    """
    hyper.validate()
    if not split.train:
        raise ValueError("training split is empty")

    train_pairs = [
        (src_vocab.encode(item.source, add_eos=True), tgt_vocab.encode(item.target, add_eos=True))
        for item in split.train
    ]
    valid_pairs = [
        (src_vocab.encode(item.source, add_eos=True), list(item.target))
        for item in split.valid
    ]

    if resume_from is not None:
        params = resume_from.params.copy()
        optimizer_state = copy.deepcopy(resume_from.optimizer_state)
        if optimizer_state is None:
            raise ValueError("cannot resume from a checkpoint without optimizer state")
        start_index = resume_from.minibatch_index
        best_bleu = resume_from.validation_bleu or 0.0
    else:
        params = init_params(hyper, len(src_vocab), len(tgt_vocab))
        optimizer_state = init_optimizer_state(params)
        start_index = 0
        best_bleu = 0.0

    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckpt_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)
    # append only when resuming, so a rerun reproduces identical artifacts
    log_mode = "a" if resume_from is not None else "w"
    log_handle = open(log_path, log_mode, encoding="utf-8") if log_path is not None else None

    checkpoints: list[Checkpoint] = []

    def save(index: int, validation: float | None) -> None:
        checkpoint = Checkpoint(
            params=params.copy(),
            optimizer_state={
                name: (acc_g.copy(), acc_u.copy())
                for name, (acc_g, acc_u) in optimizer_state.items()
            },
            minibatch_index=index,
            validation_bleu=validation,
            seed=hyper.seed,
        )
        checkpoints.append(checkpoint)
        if ckpt_dir is not None:
            save_checkpoint(checkpoint, ckpt_dir / f"checkpoint_{index:08d}.ckpt")

    n = len(train_pairs)
    batches_per_epoch = (n + hyper.minibatch_size - 1) // hyper.minibatch_size
    minibatch_index = start_index
    stall = 0
    last_validation: float | None = resume_from.validation_bleu if resume_from else None
    window_loss_sum = 0.0
    window_loss_count = 0
    last_saved_index = -1
    stop = False

    try:
        for epoch in range(hyper.max_epochs):
            if stop:
                break
            if (epoch + 1) * batches_per_epoch <= start_index:
                continue  # fully consumed before the resume point
            order = _epoch_order(hyper.seed, epoch, n)
            for b in range(batches_per_epoch):
                global_index = epoch * batches_per_epoch + b
                if global_index < start_index:
                    continue
                chunk = order[b * hyper.minibatch_size : (b + 1) * hyper.minibatch_size]
                batch = [train_pairs[i] for i in chunk]
                sources = [s for s, _ in batch]
                targets = [t for _, t in batch]
                src, src_mask, tgt, tgt_mask = pad_batch(sources, targets)
                loss, cache = loss_forward(params, src, src_mask, tgt, tgt_mask)
                grads = loss_backward(params, cache)
                adadelta_update(params, grads, optimizer_state, hyper.adadelta_rho, hyper.adadelta_eps)
                params.assert_finite()
                minibatch_index = global_index + 1
                window_loss_sum += loss
                window_loss_count += 1

                if valid_pairs and minibatch_index % hyper.validate_every == 0:
                    score = _validation_bleu(params, valid_pairs, tgt_vocab, hyper.max_target_len)
                    last_validation = score
                    mean_loss = window_loss_sum / max(window_loss_count, 1)
                    if log_handle is not None:
                        log_handle.write(
                            f"minibatch={minibatch_index} loss={mean_loss:.6f} "
                            f"val_bleu={score:.4f}\n"
                        )
                    window_loss_sum = 0.0
                    window_loss_count = 0
                    if score > best_bleu:
                        best_bleu = score
                        stall = 0
                    else:
                        stall += 1
                        if stall > hyper.patience:
                            stop = True

                if minibatch_index % hyper.checkpoint_every == 0:
                    save(minibatch_index, last_validation)
                    last_saved_index = minibatch_index

                if minibatch_index >= hyper.max_minibatches or stop:
                    stop = True
                    break

        if minibatch_index != last_saved_index:
            save(minibatch_index, last_validation)
    finally:
        if log_handle is not None:
            log_handle.close()

    return checkpoints
