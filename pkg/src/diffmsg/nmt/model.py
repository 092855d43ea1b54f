"""Attentional recurrent encoder-decoder, implemented directly on numpy.

The encoder is a bidirectional GRU over source embeddings; each position's
annotation is the concatenation of the forward and backward states.  The
decoder is a GRU whose input at each step is the previous target embedding
concatenated with an attention context vector (an additive-attention
weighted sum of the annotations).  The output distribution is a softmax
over an affine map of (decoder state, previous embedding, context).

Everything is float64, with hand-derived backward passes; correctness is
pinned by finite-difference checks in the test suite.  Shapes use B for
batch, S for padded source length, T for padded target length, E for the
embedding size, and H for the hidden size (annotations are 2H wide).

Weight matrices are stored (input_dim, output_dim), applied as x @ W.
Row vectors everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Iterator

import numpy as np

from ..corpus import PAD_ID, START_ID

Array = np.ndarray

INIT_SCALE = 0.08  # parameters start uniform in [-INIT_SCALE, INIT_SCALE]


@dataclass
class Hyperparams:
    """Model and training configuration.

    Desk-scale defaults; the configuration the setup was derived from used
    embed 512 / hidden 1024 / minibatch 80 and remains reachable here.
    """

    embed_dim: int = 64
    hidden_dim: int = 128
    minibatch_size: int = 16
    max_source_len: int = 100
    max_target_len: int = 30
    adadelta_rho: float = 0.95
    adadelta_eps: float = 1e-6
    validate_every: int = 200
    checkpoint_every: int = 500
    max_epochs: int = 100
    max_minibatches: int = 50_000
    patience: int = 10
    ensemble_size: int = 4
    beam_width: int = 5
    seed: int = 1234

    def validate(self) -> None:
        for name in ("embed_dim", "hidden_dim", "minibatch_size", "max_source_len",
                     "max_target_len", "validate_every", "checkpoint_every",
                     "max_epochs", "max_minibatches", "ensemble_size", "beam_width"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 < self.adadelta_rho < 1.0:
            raise ValueError(f"adadelta_rho must be in (0, 1), got {self.adadelta_rho}")
        if self.adadelta_eps <= 0.0:
            raise ValueError(f"adadelta_eps must be positive, got {self.adadelta_eps}")
        if self.patience < 0:
            raise ValueError(f"patience must be >= 0, got {self.patience}")


@dataclass
class GruParams:
    """One gated recurrent cell: update gate z, reset gate r, candidate h~."""

    w_z: Array
    w_r: Array
    w_h: Array
    u_z: Array
    u_r: Array
    u_h: Array
    b_z: Array
    b_r: Array
    b_h: Array

    def tensors(self) -> Iterator[tuple[str, Array]]:
        for f in fields(self):
            yield f.name, getattr(self, f.name)


def _init_gru(rng: np.random.Generator, input_dim: int, hidden_dim: int) -> GruParams:
    def mat(rows, cols):
        return rng.uniform(-INIT_SCALE, INIT_SCALE, size=(rows, cols))

    return GruParams(
        w_z=mat(input_dim, hidden_dim),
        w_r=mat(input_dim, hidden_dim),
        w_h=mat(input_dim, hidden_dim),
        u_z=mat(hidden_dim, hidden_dim),
        u_r=mat(hidden_dim, hidden_dim),
        u_h=mat(hidden_dim, hidden_dim),
        b_z=rng.uniform(-INIT_SCALE, INIT_SCALE, size=hidden_dim),
        b_r=rng.uniform(-INIT_SCALE, INIT_SCALE, size=hidden_dim),
        b_h=rng.uniform(-INIT_SCALE, INIT_SCALE, size=hidden_dim),
    )


@dataclass
class ModelParams:
    """Every trainable tensor of the encoder-decoder."""

    src_emb: Array          # (V_src, E)
    tgt_emb: Array          # (V_tgt, E)
    enc_fwd: GruParams      # input E -> H
    enc_bwd: GruParams      # input E -> H
    dec: GruParams          # input E + 2H -> H
    att_w: Array            # (H, H), over the previous decoder state
    att_u: Array            # (2H, H), over annotations
    att_v: Array            # (H,)
    out_w: Array            # (H + E + 2H, V_tgt)
    out_b: Array            # (V_tgt,)
    init_w: Array           # (H, H), backward state -> initial decoder state
    init_b: Array           # (H,)

    @property
    def embed_dim(self) -> int:
        return self.src_emb.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.att_w.shape[0]

    @property
    def src_vocab_size(self) -> int:
        return self.src_emb.shape[0]

    @property
    def tgt_vocab_size(self) -> int:
        return self.tgt_emb.shape[0]

    def tensors(self) -> dict[str, Array]:
        """Named views of every tensor, in a stable order."""
        out: dict[str, Array] = {"src_emb": self.src_emb, "tgt_emb": self.tgt_emb}
        for prefix in ("enc_fwd", "enc_bwd", "dec"):
            for name, tensor in getattr(self, prefix).tensors():
                out[f"{prefix}.{name}"] = tensor
        out.update(
            att_w=self.att_w, att_u=self.att_u, att_v=self.att_v,
            out_w=self.out_w, out_b=self.out_b,
            init_w=self.init_w, init_b=self.init_b,
        )
        return out

    def copy(self) -> "ModelParams":
        def gru_copy(g: GruParams) -> GruParams:
            return GruParams(**{name: tensor.copy() for name, tensor in g.tensors()})

        return ModelParams(
            src_emb=self.src_emb.copy(),
            tgt_emb=self.tgt_emb.copy(),
            enc_fwd=gru_copy(self.enc_fwd),
            enc_bwd=gru_copy(self.enc_bwd),
            dec=gru_copy(self.dec),
            att_w=self.att_w.copy(),
            att_u=self.att_u.copy(),
            att_v=self.att_v.copy(),
            out_w=self.out_w.copy(),
            out_b=self.out_b.copy(),
            init_w=self.init_w.copy(),
            init_b=self.init_b.copy(),
        )

    def assert_finite(self) -> None:
        for name, tensor in self.tensors().items():
            if not np.isfinite(tensor).all():
                raise FloatingPointError(f"non-finite values in parameter {name}")


def init_params(hyper: Hyperparams, src_vocab_size: int, tgt_vocab_size: int) -> ModelParams:
    """Seeded uniform initialization of all parameters."""
    hyper.validate()
    if src_vocab_size < 1 or tgt_vocab_size < 1:
        raise ValueError("vocabulary sizes must be >= 1")
    rng = np.random.default_rng(hyper.seed)
    e, h = hyper.embed_dim, hyper.hidden_dim

    def mat(*shape):
        return rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)

    return ModelParams(
        src_emb=mat(src_vocab_size, e),
        tgt_emb=mat(tgt_vocab_size, e),
        enc_fwd=_init_gru(rng, e, h),
        enc_bwd=_init_gru(rng, e, h),
        dec=_init_gru(rng, e + 2 * h, h),
        att_w=mat(h, h),
        att_u=mat(2 * h, h),
        att_v=rng.uniform(-INIT_SCALE, INIT_SCALE, size=h),
        out_w=mat(h + e + 2 * h, tgt_vocab_size),
        out_b=rng.uniform(-INIT_SCALE, INIT_SCALE, size=tgt_vocab_size),
        init_w=mat(h, h),
        init_b=rng.uniform(-INIT_SCALE, INIT_SCALE, size=h),
    )


def zero_gradients(params: ModelParams) -> dict[str, Array]:
    return {name: np.zeros_like(tensor) for name, tensor in params.tensors().items()}


def _sigmoid(x: Array) -> Array:
    # Split form avoids exp overflow warnings for large |x|.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def gru_step(p: GruParams, h_prev: Array, x: Array) -> tuple[Array, tuple]:
    """One GRU step: h = (1 - z) * h_prev + z * h~."""
    z = _sigmoid(x @ p.w_z + h_prev @ p.u_z + p.b_z)
    r = _sigmoid(x @ p.w_r + h_prev @ p.u_r + p.b_r)
    rh = r * h_prev
    h_cand = np.tanh(x @ p.w_h + rh @ p.u_h + p.b_h)
    h = (1.0 - z) * h_prev + z * h_cand
    return h, (x, h_prev, z, r, rh, h_cand)


def gru_backward(
    p: GruParams, cache: tuple, dh: Array, grads: dict[str, Array], prefix: str
) -> tuple[Array, Array]:
    """Backprop one GRU step; returns (dx, dh_prev) and accumulates grads."""
    x, h_prev, z, r, rh, h_cand = cache
    dz = dh * (h_cand - h_prev)
    dh_cand = dh * z
    dh_prev = dh * (1.0 - z)

    da_h = dh_cand * (1.0 - h_cand * h_cand)      # through tanh
    drh = da_h @ p.u_h.T
    dr = drh * h_prev
    dh_prev = dh_prev + drh * r
    da_z = dz * z * (1.0 - z)                     # through sigmoid
    da_r = dr * r * (1.0 - r)

    dh_prev = dh_prev + da_z @ p.u_z.T + da_r @ p.u_r.T
    dx = da_z @ p.w_z.T + da_r @ p.w_r.T + da_h @ p.w_h.T

    grads[f"{prefix}.w_z"] += x.T @ da_z
    grads[f"{prefix}.w_r"] += x.T @ da_r
    grads[f"{prefix}.w_h"] += x.T @ da_h
    grads[f"{prefix}.u_z"] += h_prev.T @ da_z
    grads[f"{prefix}.u_r"] += h_prev.T @ da_r
    grads[f"{prefix}.u_h"] += rh.T @ da_h
    grads[f"{prefix}.b_z"] += da_z.sum(axis=0)
    grads[f"{prefix}.b_r"] += da_r.sum(axis=0)
    grads[f"{prefix}.b_h"] += da_h.sum(axis=0)
    return dx, dh_prev


def encode_batch(
    params: ModelParams, src_ids: Array, src_mask: Array
) -> tuple[Array, dict]:
    """Bidirectional encoding of a padded batch.

    Padded positions pass the recurrent state through unchanged, so extra
    padding never alters the states at real positions.  Returns the
    annotations (B, S, 2H) and the cache needed for the backward pass.
    """
    batch, src_len = src_ids.shape
    h = params.hidden_dim
    ex = params.src_emb[src_ids]                       # (B, S, E)

    fwd_caches = []
    hf = np.zeros((batch, h))
    fwd_states = np.empty((batch, src_len, h))
    for i in range(src_len):
        g, cache = gru_step(params.enc_fwd, hf, ex[:, i])
        m = src_mask[:, i : i + 1]
        hf = m * g + (1.0 - m) * hf
        fwd_states[:, i] = hf
        fwd_caches.append(cache)

    bwd_caches: list = [None] * src_len
    hb = np.zeros((batch, h))
    bwd_states = np.empty((batch, src_len, h))
    for i in reversed(range(src_len)):
        g, cache = gru_step(params.enc_bwd, hb, ex[:, i])
        m = src_mask[:, i : i + 1]
        hb = m * g + (1.0 - m) * hb
        bwd_states[:, i] = hb
        bwd_caches[i] = cache

    annotations = np.concatenate([fwd_states, bwd_states], axis=2)
    cache = {
        "src_ids": src_ids,
        "src_mask": src_mask,
        "fwd_caches": fwd_caches,
        "bwd_caches": bwd_caches,
    }
    return annotations, cache


def encoder_backward(
    params: ModelParams, cache: dict, d_annotations: Array, grads: dict[str, Array]
) -> None:
    """Backprop through both encoder chains into cell and embedding grads."""
    src_ids = cache["src_ids"]
    src_mask = cache["src_mask"]
    batch, src_len = src_ids.shape
    h = params.hidden_dim
    d_ex = np.zeros((batch, src_len, params.embed_dim))

    carry = np.zeros((batch, h))
    for i in reversed(range(src_len)):
        dh = d_annotations[:, i, :h] + carry
        m = src_mask[:, i : i + 1]
        dx, dh_prev = gru_backward(params.enc_fwd, cache["fwd_caches"][i], dh * m, grads, "enc_fwd")
        d_ex[:, i] += dx
        carry = dh * (1.0 - m) + dh_prev

    carry = np.zeros((batch, h))
    for i in range(src_len):
        dh = d_annotations[:, i, h:] + carry
        m = src_mask[:, i : i + 1]
        dx, dh_next = gru_backward(params.enc_bwd, cache["bwd_caches"][i], dh * m, grads, "enc_bwd")
        d_ex[:, i] += dx
        carry = dh * (1.0 - m) + dh_next

    np.add.at(grads["src_emb"], src_ids, d_ex)


def attend_batch(
    params: ModelParams, s_prev: Array, annotations: Array, src_mask: Array
) -> tuple[Array, Array, tuple]:
    """Additive attention: scores v . tanh(W s_prev + U annotation).

    Padded source positions get zero weight.  Returns the context vectors
    (B, 2H), the weights (B, S), and the backward cache.
    """
    query = s_prev @ params.att_w                              # (B, H)
    pre = query[:, None, :] + annotations @ params.att_u       # (B, S, H)
    m = np.tanh(pre)
    scores = m @ params.att_v                                  # (B, S)
    neg_inf = np.float64(-np.inf)
    masked = np.where(src_mask > 0.0, scores, neg_inf)
    masked = masked - masked.max(axis=1, keepdims=True)
    weights = np.exp(masked)
    weights = weights / weights.sum(axis=1, keepdims=True)     # zeros stay zero
    context = np.einsum("bs,bso->bo", weights, annotations)
    return context, weights, (s_prev, annotations, m, weights)


def attend_backward(
    params: ModelParams,
    cache: tuple,
    d_context: Array,
    d_annotations: Array,
    grads: dict[str, Array],
) -> Array:
    """Backprop attention; accumulates into d_annotations, returns ds_prev."""
    s_prev, annotations, m, weights = cache
    d_weights = np.einsum("bso,bo->bs", annotations, d_context)
    d_annotations += weights[:, :, None] * d_context[:, None, :]
    # softmax backward; masked positions have weight 0 and so gradient 0
    dot = (weights * d_weights).sum(axis=1, keepdims=True)
    d_scores = weights * (d_weights - dot)
    grads["att_v"] += np.einsum("bsh,bs->h", m, d_scores)
    d_m = d_scores[:, :, None] * params.att_v
    d_pre = d_m * (1.0 - m * m)
    d_query = d_pre.sum(axis=1)
    grads["att_w"] += s_prev.T @ d_query
    grads["att_u"] += np.einsum("bso,bsh->oh", annotations, d_pre)
    d_annotations += d_pre @ params.att_u.T
    return d_query @ params.att_w.T


def init_decoder_state_batch(params: ModelParams, annotations: Array) -> tuple[Array, tuple]:
    """s_0 = tanh(W_init . first backward state + b_init)."""
    h = params.hidden_dim
    hb_first = annotations[:, 0, h:]
    s0 = np.tanh(hb_first @ params.init_w + params.init_b)
    return s0, (hb_first, s0)


def _softmax_rows(logits: Array) -> tuple[Array, Array]:
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    return np.exp(log_probs), log_probs


def loss_forward(
    params: ModelParams,
    src_ids: Array,
    src_mask: Array,
    tgt_ids: Array,
    tgt_mask: Array,
    start_id: int = START_ID,
) -> tuple[float, dict]:
    """Teacher-forced forward pass; mean per-sequence NLL over the batch."""
    batch, tgt_len = tgt_ids.shape
    e, h = params.embed_dim, params.hidden_dim

    annotations, enc_cache = encode_batch(params, src_ids, src_mask)
    s, init_cache = init_decoder_state_batch(params, annotations)

    prev_ids = np.concatenate(
        [np.full((batch, 1), start_id, dtype=tgt_ids.dtype), tgt_ids[:, :-1]], axis=1
    )
    steps = []
    total = 0.0
    for t in range(tgt_len):
        ey = params.tgt_emb[prev_ids[:, t]]                            # (B, E)
        context, _, att_cache = attend_batch(params, s, annotations, src_mask)
        gru_in = np.concatenate([ey, context], axis=1)
        s_new, gru_cache = gru_step(params.dec, s, gru_in)
        readout = np.concatenate([s_new, ey, context], axis=1)         # (B, H+E+2H)
        probs, log_probs = _softmax_rows(readout @ params.out_w + params.out_b)
        gold = tgt_ids[:, t]
        total += -(log_probs[np.arange(batch), gold] * tgt_mask[:, t]).sum()
        steps.append((att_cache, gru_cache, readout, probs))
        s = s_new

    loss = total / batch
    cache = {
        "annotations": annotations,
        "enc_cache": enc_cache,
        "init_cache": init_cache,
        "src_mask": src_mask,
        "prev_ids": prev_ids,
        "tgt_ids": tgt_ids,
        "tgt_mask": tgt_mask,
        "steps": steps,
        "batch": batch,
    }
    return loss, cache


def loss_backward(params: ModelParams, cache: dict) -> dict[str, Array]:
    """Gradients of the mean per-sequence loss for every parameter."""
    grads = zero_gradients(params)
    annotations = cache["annotations"]
    src_mask = cache["src_mask"]
    tgt_ids = cache["tgt_ids"]
    tgt_mask = cache["tgt_mask"]
    prev_ids = cache["prev_ids"]
    batch = cache["batch"]
    e, h = params.embed_dim, params.hidden_dim
    tgt_len = tgt_ids.shape[1]

    d_annotations = np.zeros_like(annotations)
    ds_carry = np.zeros((batch, h))
    rows = np.arange(batch)
    for t in reversed(range(tgt_len)):
        att_cache, gru_cache, readout, probs = cache["steps"][t]
        d_logits = probs.copy()
        d_logits[rows, tgt_ids[:, t]] -= 1.0
        d_logits *= tgt_mask[:, t : t + 1] / batch

        grads["out_w"] += readout.T @ d_logits
        grads["out_b"] += d_logits.sum(axis=0)
        d_readout = d_logits @ params.out_w.T

        ds = ds_carry + d_readout[:, :h]
        d_ey = d_readout[:, h : h + e].copy()
        d_context = d_readout[:, h + e :].copy()

        d_gru_in, ds_prev = gru_backward(params.dec, gru_cache, ds, grads, "dec")
        d_ey += d_gru_in[:, :e]
        d_context += d_gru_in[:, e:]

        ds_prev = ds_prev + attend_backward(params, att_cache, d_context, d_annotations, grads)
        np.add.at(grads["tgt_emb"], prev_ids[:, t], d_ey)
        ds_carry = ds_prev

    # decoder initialization
    hb_first, s0 = cache["init_cache"]
    da = ds_carry * (1.0 - s0 * s0)
    grads["init_w"] += hb_first.T @ da
    grads["init_b"] += da.sum(axis=0)
    d_annotations[:, 0, h:] += da @ params.init_w.T

    encoder_backward(params, cache["enc_cache"], d_annotations, grads)
    return grads


def pad_batch(
    sources: list[list[int]], targets: list[list[int]], pad_id: int = PAD_ID
) -> tuple[Array, Array, Array, Array]:
    """Pad id sequences to rectangular arrays with 0/1 masks."""
    if not sources or len(sources) != len(targets):
        raise ValueError("batch must contain the same positive number of sources and targets")
    src_len = max(len(s) for s in sources)
    tgt_len = max(len(t) for t in targets)
    batch = len(sources)
    src_ids = np.full((batch, src_len), pad_id, dtype=np.int64)
    tgt_ids = np.full((batch, tgt_len), pad_id, dtype=np.int64)
    src_mask = np.zeros((batch, src_len))
    tgt_mask = np.zeros((batch, tgt_len))
    for b, (s, t) in enumerate(zip(sources, targets)):
        src_ids[b, : len(s)] = s
        src_mask[b, : len(s)] = 1.0
        tgt_ids[b, : len(t)] = t
        tgt_mask[b, : len(t)] = 1.0
    return src_ids, src_mask, tgt_ids, tgt_mask


def _check_ids(ids: list[int], vocab_size: int, what: str) -> None:
    for i in ids:
        if not 0 <= i < vocab_size:
            raise ValueError(f"{what} id {i} out of range [0, {vocab_size})")


# ---------------------------------------------------------------------------
# Single-sequence views over the batched kernels.

def encode(source_ids: list[int], params: ModelParams) -> Array:
    """Annotations (S, 2H) for one source sequence (EOS already appended)."""
    _check_ids(source_ids, params.src_vocab_size, "source")
    if not source_ids:
        raise ValueError("source sequence must be non-empty")
    ids = np.asarray([source_ids], dtype=np.int64)
    mask = np.ones_like(ids, dtype=np.float64)
    annotations, _ = encode_batch(params, ids, mask)
    return annotations[0]


def attend(
    decoder_prev_state: Array, annotations: Array, params: ModelParams
) -> tuple[Array, Array]:
    """Context vector and attention weights for one decoder step."""
    if annotations.shape[0] == 0:
        raise ValueError("annotations must be non-empty")
    mask = np.ones((1, annotations.shape[0]))
    context, weights, _ = attend_batch(
        params, decoder_prev_state[None, :], annotations[None, :, :], mask
    )
    return context[0], weights[0]


def init_decoder_state(annotations: Array, params: ModelParams) -> Array:
    s0, _ = init_decoder_state_batch(params, annotations[None, :, :])
    return s0[0]


def decoder_step(
    prev_state: Array, prev_target_id: int, annotations: Array, params: ModelParams
) -> tuple[Array, Array]:
    """One decoder step: next state and the distribution over target ids."""
    _check_ids([prev_target_id], params.tgt_vocab_size, "target")
    ey = params.tgt_emb[prev_target_id][None, :]
    mask = np.ones((1, annotations.shape[0]))
    context, _, _ = attend_batch(params, prev_state[None, :], annotations[None, :, :], mask)
    gru_in = np.concatenate([ey, context], axis=1)
    s_new, _ = gru_step(params.dec, prev_state[None, :], gru_in)
    readout = np.concatenate([s_new, ey, context], axis=1)
    probs, _ = _softmax_rows(readout @ params.out_w + params.out_b)
    return s_new[0], probs[0]


def sequence_loss(
    pair: tuple[list[int], list[int]], params: ModelParams, start_id: int = START_ID
) -> tuple[float, int]:
    """Teacher-forced negative log-likelihood of one pair, plus token count."""
    source_ids, target_ids = pair
    _check_ids(source_ids, params.src_vocab_size, "source")
    _check_ids(target_ids, params.tgt_vocab_size, "target")
    if not target_ids:
        raise ValueError("target sequence must be non-empty")
    src, src_mask, tgt, tgt_mask = pad_batch([source_ids], [target_ids])
    loss, _ = loss_forward(params, src, src_mask, tgt, tgt_mask, start_id=start_id)
    return loss, len(target_ids)


def batch_loss(
    batch: list[tuple[list[int], list[int]]], params: ModelParams, start_id: int = START_ID
) -> float:
    """Mean per-sequence loss of a batch (the quantity gradients derive)."""
    if not batch:
        raise ValueError("batch must be non-empty")
    sources = [s for s, _ in batch]
    targets = [t for _, t in batch]
    src, src_mask, tgt, tgt_mask = pad_batch(sources, targets)
    loss, _ = loss_forward(params, src, src_mask, tgt, tgt_mask, start_id=start_id)
    return loss


def gradients(
    batch: list[tuple[list[int], list[int]]], params: ModelParams, start_id: int = START_ID
) -> dict[str, Array]:
    """Exact gradients of the mean per-sequence loss over a padded batch."""
    if not batch:
        raise ValueError("batch must be non-empty")
    sources = [s for s, _ in batch]
    targets = [t for _, t in batch]
    src, src_mask, tgt, tgt_mask = pad_batch(sources, targets)
    _, cache = loss_forward(params, src, src_mask, tgt, tgt_mask, start_id=start_id)
    return loss_backward(params, cache)
