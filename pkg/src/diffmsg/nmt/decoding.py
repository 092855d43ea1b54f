"""Greedy and ensemble beam-search decoding.

Ensemble decoding averages the next-token probabilities of each model
(arithmetic mean, not log mean) and scores hypotheses by the sum of log
mean-probabilities, without length normalization.  A hypothesis completes
when it emits EOS or reaches the maximum length; the best-scoring complete
hypothesis wins.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..corpus import EOS_ID, START_ID
from .model import Array, ModelParams, decoder_step, encode, init_decoder_state


def greedy_decode(
    params: ModelParams,
    source_ids: list[int],
    max_len: int,
    start_id: int = START_ID,
    eos_id: int = EOS_ID,
) -> list[int]:
    """Argmax decoding with a single model; EOS is not included."""
    annotations = encode(source_ids, params)
    state = init_decoder_state(annotations, params)
    prev = start_id
    tokens: list[int] = []
    for _ in range(max_len):
        state, dist = decoder_step(state, prev, annotations, params)
        token = int(np.argmax(dist))
        if token == eos_id:
            break
        tokens.append(token)
        prev = token
    return tokens


@dataclass
class _Hypothesis:
    tokens: tuple[int, ...]
    score: float
    states: list[Array]
    prev_id: int


def _check_compatible(models: list[ModelParams]) -> None:
    first = models[0]
    for m in models[1:]:
        if (
            m.src_vocab_size != first.src_vocab_size
            or m.tgt_vocab_size != first.tgt_vocab_size
            or m.embed_dim != first.embed_dim
            or m.hidden_dim != first.hidden_dim
        ):
            raise ValueError("ensemble members must share vocabulary sizes and dimensions")


def ensemble_decode(
    checkpoints: list,
    source_ids: list[int],
    beam_width: int,
    max_len: int,
    start_id: int = START_ID,
    eos_id: int = EOS_ID,
) -> list[int]:
    """Beam search over the mean of per-model next-token distributions.

    checkpoints may be Checkpoint objects or bare ModelParams.  Returns the
    token ids of the best complete hypothesis (EOS excluded).
    """
    if beam_width < 1:
        raise ValueError(f"beam_width must be >= 1, got {beam_width}")
    if not checkpoints:
        raise ValueError("ensemble requires at least one checkpoint")
    models = [getattr(c, "params", c) for c in checkpoints]
    _check_compatible(models)

    annotations = [encode(source_ids, m) for m in models]
    beam = [
        _Hypothesis(
            tokens=(),
            score=0.0,
            states=[init_decoder_state(a, m) for a, m in zip(annotations, models)],
            prev_id=start_id,
        )
    ]
    completed: list[tuple[float, tuple[int, ...]]] = []

    for _ in range(max_len):
        candidates: list[tuple[float, int, int, list[Array]]] = []
        for hyp_index, hyp in enumerate(beam):
            new_states = []
            dists = []
            for m, model in enumerate(models):
                state, dist = decoder_step(hyp.states[m], hyp.prev_id, annotations[m], model)
                new_states.append(state)
                dists.append(dist)
            mean_dist = np.mean(np.stack(dists, axis=0), axis=0)
            with np.errstate(divide="ignore"):
                log_probs = np.log(mean_dist)
            for token in range(mean_dist.shape[0]):
                candidates.append(
                    (hyp.score + float(log_probs[token]), hyp_index, token, new_states)
                )
        # stable sort on score alone keeps (hypothesis, token) order on ties
        candidates.sort(key=lambda item: -item[0])
        next_beam: list[_Hypothesis] = []
        for score, hyp_index, token, new_states in candidates[:beam_width]:
            parent = beam[hyp_index]
            if token == eos_id:
                completed.append((score, parent.tokens))
            else:
                next_beam.append(
                    _Hypothesis(
                        tokens=parent.tokens + (token,),
                        score=score,
                        states=new_states,
                        prev_id=token,
                    )
                )
        beam = next_beam
        if not beam:
            break

    completed.extend((hyp.score, hyp.tokens) for hyp in beam)  # length-capped
    best_score, best_tokens = completed[0]
    for score, tokens in completed[1:]:
        if score > best_score:
            best_score, best_tokens = score, tokens
    return list(best_tokens)
