"""Small transformer encoder with MLM and classification heads.

Pure numpy/numba forward and hand-written backward passes; no autodiff.
Post-layer-norm residual blocks, learned token/position/segment embeddings,
a weight-tied MLM projection, and a linear classifier on the [CLS] position.
Gradients are verified against central finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from soundexlm import kernels
from soundexlm.encoding import IGNORE_LABEL, EncodedInput, MaskedBatch, collate

NEG_BIAS = -1e9


class ShapeMismatch(ValueError):
    pass


class NoMaskedPositions(ValueError):
    pass


class DivergenceDetected(RuntimeError):
    pass


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    hidden_dim: int = 64
    num_layers: int = 2
    num_heads: int = 4
    ff_dim: int = 128
    max_len: int = 128
    num_segments: int = 2
    dropout_rate: float = 0.1
    num_classes: int | None = None
    tie_mlm_weights: bool = True
    layer_norm_eps: float = 1e-12

    def __post_init__(self):
        dims = (self.vocab_size, self.hidden_dim, self.num_layers,
                self.num_heads, self.ff_dim, self.max_len, self.num_segments)
        if any(d <= 0 for d in dims):
            raise ValueError(f"all dimensions must be positive: {self}")
        if self.hidden_dim % self.num_heads != 0:
            raise ValueError(
                f"hidden_dim={self.hidden_dim} not divisible by "
                f"num_heads={self.num_heads}"
            )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1): {self.dropout_rate}")


@dataclass
class OptimizerConfig:
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


Params = dict[str, np.ndarray]


def init_parameters(
    config: EncoderConfig, seed: int = 0, dtype=np.float32
) -> Params:
    """Seeded parameter initialization: N(0, 0.02) weights, unit layer norms."""
    rng = np.random.default_rng(seed)
    h, f = config.hidden_dim, config.ff_dim

    def normal(*shape):
        return rng.normal(0.0, 0.02, size=shape).astype(dtype)

    def zeros(*shape):
        return np.zeros(shape, dtype=dtype)

    def ones(*shape):
        return np.ones(shape, dtype=dtype)

    p: Params = {
        "emb.tok": normal(config.vocab_size, h),
        "emb.pos": normal(config.max_len, h),
        "emb.seg": normal(config.num_segments, h),
        "emb.ln.g": ones(h),
        "emb.ln.b": zeros(h),
    }
    for i in range(config.num_layers):
        pre = f"layer{i}"
        p[f"{pre}.attn.wq"] = normal(h, h)
        p[f"{pre}.attn.bq"] = zeros(h)
        p[f"{pre}.attn.wk"] = normal(h, h)
        p[f"{pre}.attn.bk"] = zeros(h)
        p[f"{pre}.attn.wv"] = normal(h, h)
        p[f"{pre}.attn.bv"] = zeros(h)
        p[f"{pre}.attn.wo"] = normal(h, h)
        p[f"{pre}.attn.bo"] = zeros(h)
        p[f"{pre}.ln1.g"] = ones(h)
        p[f"{pre}.ln1.b"] = zeros(h)
        p[f"{pre}.ffn.w1"] = normal(h, f)
        p[f"{pre}.ffn.b1"] = zeros(f)
        p[f"{pre}.ffn.w2"] = normal(f, h)
        p[f"{pre}.ffn.b2"] = zeros(h)
        p[f"{pre}.ln2.g"] = ones(h)
        p[f"{pre}.ln2.b"] = zeros(h)
    p["mlm.bias"] = zeros(config.vocab_size)
    if not config.tie_mlm_weights:
        p["mlm.w"] = normal(h, config.vocab_size)
    if config.num_classes is not None:
        p["cls.w"] = normal(h, config.num_classes)
        p["cls.b"] = zeros(config.num_classes)
    return p


def _as_batch(inputs) -> MaskedBatch:
    if isinstance(inputs, MaskedBatch):
        return inputs
    if isinstance(inputs, EncodedInput):
        return collate([inputs])
    return collate(list(inputs))


def _check_batch(config: EncoderConfig, batch: MaskedBatch) -> None:
    b, length = batch.input_ids.shape
    if length > config.max_len:
        raise ShapeMismatch(
            f"sequence length {length} exceeds max_len {config.max_len}"
        )
    if batch.input_ids.min() < 0 or batch.input_ids.max() >= config.vocab_size:
        raise ShapeMismatch("token id outside vocabulary")
    if batch.segments.max() >= config.num_segments:
        raise ShapeMismatch("segment id outside num_segments")
    for arr in (batch.labels, batch.attention_mask, batch.segments):
        if arr.shape != (b, length):
            raise ShapeMismatch("batch arrays disagree in shape")


class _Dropout:
    """Inverted dropout; draws deterministic masks from the training rng."""

    def __init__(self, rate: float, rng: np.random.Generator | None):
        self.active = rate > 0.0 and rng is not None
        self.rate = rate
        self.rng = rng

    def apply(self, x: np.ndarray):
        if not self.active:
            return x, None
        keep = (self.rng.random(x.shape) >= self.rate).astype(x.dtype)
        keep /= 1.0 - self.rate
        return x * keep, keep


def forward(
    config: EncoderConfig,
    params: Params,
    batch,
    *,
    train: bool = False,
    rng: np.random.Generator | None = None,
):
    """Run the encoder; returns (hidden (B, L, H), cache) where the cache is
    None in eval mode and carries every intermediate needed by backward()."""
    batch = _as_batch(batch)
    _check_batch(config, batch)
    ids, segs, attn = batch.input_ids, batch.segments, batch.attention_mask
    bsz, length = ids.shape
    h = config.hidden_dim
    nh = config.num_heads
    dh = h // nh
    eps = config.layer_norm_eps
    drop = _Dropout(config.dropout_rate if train else 0.0, rng)

    emb = params["emb.tok"][ids] + params["emb.pos"][:length] + params["emb.seg"][segs]
    emb2 = np.ascontiguousarray(emb.reshape(-1, h))
    x2, mu_e, rstd_e = kernels.layernorm_forward(
        emb2, params["emb.ln.g"], params["emb.ln.b"], eps
    )
    x, mask_e = drop.apply(x2.reshape(bsz, length, h))

    # additive key mask: 0 on real tokens, NEG_BIAS on padding
    key_bias = ((1 - attn) * NEG_BIAS).astype(x.dtype)[:, None, None, :]
    scale = 1.0 / np.sqrt(np.array(dh, dtype=x.dtype))

    cache = None
    if train:
        cache = {
            "batch": batch, "emb2": emb2, "mu_e": mu_e, "rstd_e": rstd_e,
            "mask_e": mask_e, "layers": [],
        }

    for i in range(config.num_layers):
        pre = f"layer{i}"
        x2d = x.reshape(-1, h)
        q = (x2d @ params[f"{pre}.attn.wq"] + params[f"{pre}.attn.bq"])
        k = (x2d @ params[f"{pre}.attn.wk"] + params[f"{pre}.attn.bk"])
        v = (x2d @ params[f"{pre}.attn.wv"] + params[f"{pre}.attn.bv"])
        q4 = q.reshape(bsz, length, nh, dh).transpose(0, 2, 1, 3)
        k4 = k.reshape(bsz, length, nh, dh).transpose(0, 2, 1, 3)
        v4 = v.reshape(bsz, length, nh, dh).transpose(0, 2, 1, 3)

        scores = np.matmul(q4, k4.swapaxes(-1, -2)) * scale + key_bias
        probs = kernels.softmax_rows(
            np.ascontiguousarray(scores.reshape(-1, length))
        ).reshape(bsz, nh, length, length)
        probs_used, mask_a = drop.apply(probs)

        ctx = np.matmul(probs_used, v4)
        ctx2d = np.ascontiguousarray(ctx.transpose(0, 2, 1, 3)).reshape(-1, h)
        attn_out = ctx2d @ params[f"{pre}.attn.wo"] + params[f"{pre}.attn.bo"]
        attn_out, mask_o = drop.apply(attn_out)

        resid1 = x2d + attn_out
        x1, mu1, rstd1 = kernels.layernorm_forward(
            np.ascontiguousarray(resid1), params[f"{pre}.ln1.g"],
            params[f"{pre}.ln1.b"], eps,
        )

        ff_in = x1 @ params[f"{pre}.ffn.w1"] + params[f"{pre}.ffn.b1"]
        ff_act = kernels.gelu(ff_in)
        ff_out = ff_act @ params[f"{pre}.ffn.w2"] + params[f"{pre}.ffn.b2"]
        ff_out, mask_f = drop.apply(ff_out)

        resid2 = x1 + ff_out
        x2_, mu2, rstd2 = kernels.layernorm_forward(
            np.ascontiguousarray(resid2), params[f"{pre}.ln2.g"],
            params[f"{pre}.ln2.b"], eps,
        )

        if train:
            cache["layers"].append({
                "x2d": x2d, "q4": q4, "k4": k4, "v4": v4, "probs": probs,
                "probs_used": probs_used, "mask_a": mask_a, "ctx2d": ctx2d,
                "mask_o": mask_o, "resid1": resid1, "mu1": mu1, "rstd1": rstd1,
                "x1": x1, "ff_in": ff_in, "ff_act": ff_act, "mask_f": mask_f,
                "resid2": resid2, "mu2": mu2, "rstd2": rstd2,
            })
        x = x2_.reshape(bsz, length, h)

    if train:
        cache["scale"] = scale
        cache["shape"] = (bsz, length)
    return x, cache


def backward(config: EncoderConfig, params: Params, cache, d_hidden: np.ndarray) -> Params:
    """Backpropagate d(loss)/d(hidden) through the cached forward pass."""
    bsz, length = cache["shape"]
    h = config.hidden_dim
    nh = config.num_heads
    dh = h // nh
    scale = cache["scale"]
    grads: Params = {name: np.zeros_like(p) for name, p in params.items()}

    dx = np.ascontiguousarray(d_hidden.reshape(-1, h))
    for i in reversed(range(config.num_layers)):
        pre = f"layer{i}"
        lc = cache["layers"][i]

        dresid2, dg2, db2 = kernels.layernorm_backward(
            lc["resid2"], params[f"{pre}.ln2.g"], lc["mu2"], lc["rstd2"], dx
        )
        grads[f"{pre}.ln2.g"] += dg2
        grads[f"{pre}.ln2.b"] += db2

        dff_out = dresid2 if lc["mask_f"] is None else dresid2 * lc["mask_f"]
        grads[f"{pre}.ffn.w2"] += lc["ff_act"].T @ dff_out
        grads[f"{pre}.ffn.b2"] += dff_out.sum(axis=0)
        dff_act = dff_out @ params[f"{pre}.ffn.w2"].T
        dff_in = kernels.gelu_backward(lc["ff_in"], dff_act)
        grads[f"{pre}.ffn.w1"] += lc["x1"].T @ dff_in
        grads[f"{pre}.ffn.b1"] += dff_in.sum(axis=0)
        dx1 = dresid2 + dff_in @ params[f"{pre}.ffn.w1"].T

        dresid1, dg1, db1 = kernels.layernorm_backward(
            lc["resid1"], params[f"{pre}.ln1.g"], lc["mu1"], lc["rstd1"], dx1
        )
        grads[f"{pre}.ln1.g"] += dg1
        grads[f"{pre}.ln1.b"] += db1

        dattn_out = dresid1 if lc["mask_o"] is None else dresid1 * lc["mask_o"]
        grads[f"{pre}.attn.wo"] += lc["ctx2d"].T @ dattn_out
        grads[f"{pre}.attn.bo"] += dattn_out.sum(axis=0)
        dctx2d = dattn_out @ params[f"{pre}.attn.wo"].T
        dctx = np.ascontiguousarray(
            dctx2d.reshape(bsz, length, nh, dh).transpose(0, 2, 1, 3)
        )

        dprobs_used = np.matmul(dctx, lc["v4"].swapaxes(-1, -2))
        dv4 = np.matmul(lc["probs_used"].swapaxes(-1, -2), dctx)
        dprobs = dprobs_used if lc["mask_a"] is None else dprobs_used * lc["mask_a"]
        dscores = kernels.softmax_backward_rows(
            np.ascontiguousarray(lc["probs"].reshape(-1, length)),
            np.ascontiguousarray(dprobs.reshape(-1, length)),
        ).reshape(bsz, nh, length, length)

        dq4 = np.matmul(dscores, lc["k4"]) * scale
        dk4 = np.matmul(dscores.swapaxes(-1, -2), lc["q4"]) * scale

        dq = np.ascontiguousarray(dq4.transpose(0, 2, 1, 3)).reshape(-1, h)
        dk = np.ascontiguousarray(dk4.transpose(0, 2, 1, 3)).reshape(-1, h)
        dv = np.ascontiguousarray(dv4.transpose(0, 2, 1, 3)).reshape(-1, h)

        x2d = lc["x2d"]
        grads[f"{pre}.attn.wq"] += x2d.T @ dq
        grads[f"{pre}.attn.bq"] += dq.sum(axis=0)
        grads[f"{pre}.attn.wk"] += x2d.T @ dk
        grads[f"{pre}.attn.bk"] += dk.sum(axis=0)
        grads[f"{pre}.attn.wv"] += x2d.T @ dv
        grads[f"{pre}.attn.bv"] += dv.sum(axis=0)

        dx = (
            dresid1
            + dq @ params[f"{pre}.attn.wq"].T
            + dk @ params[f"{pre}.attn.wk"].T
            + dv @ params[f"{pre}.attn.wv"].T
        )

    if cache["mask_e"] is not None:
        dx = dx * cache["mask_e"].reshape(-1, h)
    demb2, dge, dbe = kernels.layernorm_backward(
        cache["emb2"], params["emb.ln.g"], cache["mu_e"], cache["rstd_e"], dx
    )
    grads["emb.ln.g"] += dge
    grads["emb.ln.b"] += dbe

    batch = cache["batch"]
    demb = demb2.reshape(bsz, length, h)
    np.add.at(grads["emb.tok"], batch.input_ids, demb)
    grads["emb.pos"][:length] += demb.sum(axis=0)
    np.add.at(grads["emb.seg"], batch.segments, demb)
    return grads


def _mlm_projection(config: EncoderConfig, params: Params) -> np.ndarray:
    if config.tie_mlm_weights:
        return params["emb.tok"].T
    return params["mlm.w"]


def masked_nll(logits: np.ndarray, targets: np.ndarray) -> float:
    """Mean negative log-likelihood of ``targets`` under row-wise softmax."""
    nll, _ = kernels.cross_entropy_rows(
        np.ascontiguousarray(logits), np.ascontiguousarray(targets)
    )
    return float(nll.mean())


def mlm_loss(
    config: EncoderConfig,
    params: Params,
    batch: MaskedBatch,
    *,
    train: bool = False,
    rng: np.random.Generator | None = None,
):
    """Mean NLL over masked positions; with train=True also returns grads."""
    positions = batch.labels != IGNORE_LABEL
    if not positions.any():
        raise NoMaskedPositions("batch has no masked positions")
    hidden, cache = forward(config, params, batch, train=train, rng=rng)
    rows, cols = np.nonzero(positions)
    gathered = np.ascontiguousarray(hidden[rows, cols])
    proj = _mlm_projection(config, params)
    logits = gathered @ proj + params["mlm.bias"]
    targets = batch.labels[rows, cols]
    nll, dlogits = kernels.cross_entropy_rows(
        np.ascontiguousarray(logits), np.ascontiguousarray(targets)
    )
    loss = float(nll.mean())
    if not train:
        return loss

    n = len(nll)
    dlogits = dlogits / n
    grads_head_tok = None
    dgathered = dlogits @ proj.T
    if config.tie_mlm_weights:
        grads_head_tok = dlogits.T @ gathered  # (V, H)
    d_hidden = np.zeros_like(hidden)
    d_hidden[rows, cols] = dgathered
    grads = backward(config, params, cache, d_hidden)
    grads["mlm.bias"] += dlogits.sum(axis=0)
    if config.tie_mlm_weights:
        grads["emb.tok"] += grads_head_tok
    else:
        grads["mlm.w"] += gathered.T @ dlogits
    return loss, grads


def classify(config: EncoderConfig, params: Params, inputs) -> np.ndarray:
    """Class probability vector(s) from the [CLS] (position 0) hidden state."""
    if config.num_classes is None:
        raise ShapeMismatch("config carries no num_classes")
    single = isinstance(inputs, EncodedInput)
    batch = _as_batch(inputs)
    hidden, _ = forward(config, params, batch)
    logits = hidden[:, 0, :] @ params["cls.w"] + params["cls.b"]
    probs = kernels.softmax_rows(np.ascontiguousarray(logits))
    return probs[0] if single else probs


def classification_loss(
    config: EncoderConfig,
    params: Params,
    batch: MaskedBatch,
    labels: np.ndarray,
    *,
    train: bool = False,
    rng: np.random.Generator | None = None,
):
    """Mean categorical cross-entropy on [CLS]; with train=True also grads."""
    if config.num_classes is None:
        raise ShapeMismatch("config carries no num_classes")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape[0] != batch.input_ids.shape[0]:
        raise ShapeMismatch("labels do not match batch size")
    hidden, cache = forward(config, params, batch, train=train, rng=rng)
    h0 = np.ascontiguousarray(hidden[:, 0, :])
    logits = h0 @ params["cls.w"] + params["cls.b"]
    nll, dlogits = kernels.cross_entropy_rows(
        np.ascontiguousarray(logits), labels
    )
    loss = float(nll.mean())
    if not train:
        return loss

    n = len(nll)
    dlogits = dlogits / n
    d_hidden = np.zeros_like(hidden)
    d_hidden[:, 0, :] = dlogits @ params["cls.w"].T
    grads = backward(config, params, cache, d_hidden)
    grads["cls.w"] += h0.T @ dlogits
    grads["cls.b"] += dlogits.sum(axis=0)
    return loss, grads


@dataclass
class AdamState:
    m: Params
    v: Params
    step: int = 0

    @classmethod
    def for_params(cls, params: Params) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    params: Params, grads: Params, state: AdamState, opt: OptimizerConfig
) -> None:
    state.step += 1
    for name in sorted(params):
        kernels.adam_update(
            params[name], grads[name], state.m[name], state.v[name],
            opt.learning_rate, opt.beta1, opt.beta2, opt.eps, state.step,
        )


def train(
    config: EncoderConfig,
    params: Params,
    batches: Iterable,
    objective: str,
    opt: OptimizerConfig | None = None,
    seed: int = 0,
    state: AdamState | None = None,
) -> tuple[Params, list[float]]:
    """Adam-train on an iterable of batches; returns (params, loss curve).

    ``objective`` is "mlm" (batches of MaskedBatch) or "classify" (batches of
    (MaskedBatch, labels)). Parameters are updated in place and returned.
    Raises DivergenceDetected when the loss stops being finite.
    """
    if objective not in ("mlm", "classify"):
        raise ValueError(f"unknown objective {objective!r}")
    opt = opt or OptimizerConfig()
    state = state or AdamState.for_params(params)
    rng = np.random.default_rng(seed)
    losses: list[float] = []
    for item in batches:
        if objective == "mlm":
            loss, grads = mlm_loss(config, params, item, train=True, rng=rng)
        else:
            batch, labels = item
            loss, grads = classification_loss(
                config, params, batch, labels, train=True, rng=rng
            )
        if not np.isfinite(loss):
            raise DivergenceDetected(f"loss became {loss} at step {state.step + 1}")
        adam_step(params, grads, state, opt)
        losses.append(loss)
    return params, losses
