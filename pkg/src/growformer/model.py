"""A minimal causal language model whose Q/K/V maps are staged projections.

Block layout: learned token + position embeddings, then per layer
pre-norm attention (three ladder projections, multi-head softmax, output
projection) and a pre-norm GeLU FFN, both with residual connections,
then a final norm and an unembedding matrix. All linear maps are
bias-free. Forward and backward are hand-written on 2-D float64 arrays,
one sequence at a time.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import NumericError, ValidationError
from .ladder import (
    AttentionCache,
    DimLadder,
    LadderProjection,
    attention_backward,
    attention_forward,
    validate_hierarchy,
)
from .linalg import gelu, gelu_derivative, matmul
from .rng import RngState, derive_seed, seeded_gaussian

_LN_EPS = 1e-5


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    context_len: int
    hidden_size: int
    n_heads: int
    n_layers: int
    ladder_m: int
    ladder_a: int
    ffn_size: int
    dtype: str = "f8"

    def __post_init__(self):
        if self.context_len < 1:
            raise ValidationError("context_len must be >= 1")
        if self.hidden_size % self.n_heads != 0:
            raise ValidationError(
                f"n_heads {self.n_heads} does not divide hidden {self.hidden_size}"
            )
        if self.dtype not in ("f8", "f4"):
            raise ValidationError(f"unknown dtype tag {self.dtype!r}")

    @property
    def head_dim(self) -> int:
        return self.hidden_size // self.n_heads

    @property
    def qkv_ladder(self) -> DimLadder:
        return DimLadder(self.hidden_size, (self.ladder_m, self.ladder_a), self.hidden_size)

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "context_len": self.context_len,
            "hidden_size": self.hidden_size,
            "n_heads": self.n_heads,
            "n_layers": self.n_layers,
            "ladder_m": self.ladder_m,
            "ladder_a": self.ladder_a,
            "ffn_size": self.ffn_size,
            "dtype": self.dtype,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)

    def grown(self, delta_m: int, delta_a: int) -> "ModelConfig":
        return replace(self, ladder_m=self.ladder_m + delta_m, ladder_a=self.ladder_a + delta_a)


# Default toy configuration: smallest setup where every invariant of the
# growth and analysis pipeline is still meaningful.
TOY_CONFIG = ModelConfig(
    vocab_size=64,
    context_len=128,
    hidden_size=64,
    n_heads=4,
    n_layers=2,
    ladder_m=96,
    ladder_a=128,
    ffn_size=256,
)

PROJ_NAMES = ("q", "k", "v")
PROJ_STAGES = ("w_up", "w_mid", "w_down")


def param_names(config: ModelConfig) -> list[str]:
    names = ["tok_emb", "pos_emb"]
    for i in range(config.n_layers):
        p = f"blocks.{i}."
        names += [p + "ln1.g", p + "ln1.b"]
        for proj in PROJ_NAMES:
            for stage in PROJ_STAGES:
                names.append(p + f"attn.{proj}.{stage}")
        names += [p + "attn.w_o", p + "ln2.g", p + "ln2.b", p + "ffn.w1", p + "ffn.w2"]
    names += ["ln_f.g", "ln_f.b", "unembed"]
    return names


def init_params(config: ModelConfig, seed: int, strict: bool = True) -> dict[str, np.ndarray]:
    """Seeded Gaussian init, std 1/sqrt(fan_in) per matrix."""
    validate_hierarchy(config.qkv_ladder, strict=strict)
    rng = RngState(derive_seed(seed, 1))
    d, m, a, f = config.hidden_size, config.ladder_m, config.ladder_a, config.ffn_size
    params: dict[str, np.ndarray] = {}
    params["tok_emb"] = seeded_gaussian(rng, config.vocab_size, d, 0.0, 1.0 / np.sqrt(d))
    params["pos_emb"] = seeded_gaussian(rng, config.context_len, d, 0.0, 1.0 / np.sqrt(d))
    for i in range(config.n_layers):
        p = f"blocks.{i}."
        params[p + "ln1.g"] = np.ones((1, d))
        params[p + "ln1.b"] = np.zeros((1, d))
        for proj in PROJ_NAMES:
            params[p + f"attn.{proj}.w_up"] = seeded_gaussian(rng, d, m, 0.0, 1.0 / np.sqrt(d))
            params[p + f"attn.{proj}.w_mid"] = seeded_gaussian(rng, m, a, 0.0, 1.0 / np.sqrt(m))
            params[p + f"attn.{proj}.w_down"] = seeded_gaussian(rng, a, d, 0.0, 1.0 / np.sqrt(a))
        params[p + "attn.w_o"] = seeded_gaussian(rng, d, d, 0.0, 1.0 / np.sqrt(d))
        params[p + "ln2.g"] = np.ones((1, d))
        params[p + "ln2.b"] = np.zeros((1, d))
        params[p + "ffn.w1"] = seeded_gaussian(rng, d, f, 0.0, 1.0 / np.sqrt(d))
        params[p + "ffn.w2"] = seeded_gaussian(rng, f, d, 0.0, 1.0 / np.sqrt(f))
    params["ln_f.g"] = np.ones((1, d))
    params["ln_f.b"] = np.zeros((1, d))
    # half-scale head keeps the initial loss near ln(vocab)
    params["unembed"] = seeded_gaussian(rng, d, config.vocab_size, 0.0, 0.5 / np.sqrt(d))
    return params


def get_projection(params: dict, config: ModelConfig, layer: int, which: str) -> LadderProjection:
    p = f"blocks.{layer}.attn.{which}."
    return LadderProjection(
        config.qkv_ladder,
        [params[p + "w_up"], params[p + "w_mid"], params[p + "w_down"]],
    )


def _layernorm_forward(x, g, b):
    mu = x.mean(axis=1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = (x - mu) * inv_std
    return g * xhat + b, (xhat, inv_std)


def _layernorm_backward(d_out, g, cache):
    xhat, inv_std = cache
    d_xhat = d_out * g
    dx = inv_std * (
        d_xhat
        - d_xhat.mean(axis=1, keepdims=True)
        - xhat * (d_xhat * xhat).mean(axis=1, keepdims=True)
    )
    dg = (d_out * xhat).sum(axis=0, keepdims=True)
    db = d_out.sum(axis=0, keepdims=True)
    return dx, dg, db


def _check_tokens(config: ModelConfig, token_ids) -> np.ndarray:
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.ndim != 1:
        raise ValidationError("token_ids must be a 1-D sequence")
    n = ids.shape[0]
    if n < 2:
        raise ValidationError("need at least 2 tokens for next-token loss")
    if n > config.context_len:
        raise ValidationError(f"sequence length {n} exceeds context {config.context_len}")
    if ids.min() < 0 or ids.max() >= config.vocab_size:
        raise ValidationError(
            f"token id out of range [0, {config.vocab_size}): "
            f"min={ids.min()}, max={ids.max()}"
        )
    return ids


def _forward(config, params, ids, counter=None, keep_caches=False):
    n = ids.shape[0]
    h = params["tok_emb"][ids] + params["pos_emb"][:n]
    caches = []
    for i in range(config.n_layers):
        p = f"blocks.{i}."
        a_in, ln1_cache = _layernorm_forward(h, params[p + "ln1.g"], params[p + "ln1.b"])
        q_proj = get_projection(params, config, i, "q")
        k_proj = get_projection(params, config, i, "k")
        v_proj = get_projection(params, config, i, "v")
        att, att_cache = attention_forward(
            q_proj, k_proj, v_proj, a_in, config.n_heads, causal=True, counter=counter
        )
        att_out = matmul(att, params[p + "attn.w_o"])
        if counter is not None:
            counter.add("output_projection", 2 * n * config.hidden_size**2)
        h1 = h + att_out
        f_in, ln2_cache = _layernorm_forward(h1, params[p + "ln2.g"], params[p + "ln2.b"])
        ffn_pre = matmul(f_in, params[p + "ffn.w1"])
        ffn_act = gelu(ffn_pre)
        ffn_out = matmul(ffn_act, params[p + "ffn.w2"])
        if counter is not None:
            counter.add("ffn", 2 * n * config.hidden_size * config.ffn_size * 2)
        h2 = h1 + ffn_out
        if keep_caches:
            caches.append(
                dict(
                    ln1=ln1_cache,
                    att=att_cache,
                    att_concat=att,
                    ln2=ln2_cache,
                    f_in=f_in,
                    a_in=a_in,
                    ffn_pre=ffn_pre,
                    ffn_act=ffn_act,
                )
            )
        h = h2
    hn, lnf_cache = _layernorm_forward(h, params["ln_f.g"], params["ln_f.b"])
    logits = matmul(hn, params["unembed"])
    if counter is not None:
        counter.add("lm_head", 2 * n * config.hidden_size * config.vocab_size)
    return logits, hn, lnf_cache, caches


def _loss_from_logits(logits, ids):
    pred = logits[:-1]
    targets = ids[1:]
    shifted = pred - pred.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    loss = -logp[np.arange(len(targets)), targets].mean()
    probs = np.exp(logp)
    return loss, probs, targets


def model_forward(config: ModelConfig, params: dict, token_ids, counter=None):
    """Return (logits, mean next-token cross-entropy loss)."""
    ids = _check_tokens(config, token_ids)
    logits, _, _, _ = _forward(config, params, ids, counter=counter)
    loss, _, _ = _loss_from_logits(logits, ids)
    if not np.isfinite(loss):
        raise NumericError(f"non-finite loss {loss}")
    return logits, float(loss)


def model_loss_and_grads(config: ModelConfig, params: dict, token_ids):
    """Return (loss, grads) with one gradient array per parameter."""
    ids = _check_tokens(config, token_ids)
    n = ids.shape[0]
    logits, hn, lnf_cache, caches = _forward(config, params, ids, keep_caches=True)
    loss, probs, targets = _loss_from_logits(logits, ids)
    if not np.isfinite(loss):
        raise NumericError(f"non-finite loss {loss}")

    grads = {k: np.zeros_like(v) for k, v in params.items()}
    d_logits = np.zeros_like(logits)
    d_logits[:-1] = probs
    d_logits[np.arange(len(targets)), targets] -= 1.0
    d_logits[:-1] /= len(targets)

    grads["unembed"] = matmul(hn.T, d_logits)
    d_hn = matmul(d_logits, params["unembed"].T)
    d_h, dg, db = _layernorm_backward(d_hn, params["ln_f.g"], lnf_cache)
    grads["ln_f.g"] = dg
    grads["ln_f.b"] = db

    for i in range(config.n_layers - 1, -1, -1):
        p = f"blocks.{i}."
        c = caches[i]
        # FFN branch
        d_ffn_out = d_h
        grads[p + "ffn.w2"] = matmul(c["ffn_act"].T, d_ffn_out)
        d_act = matmul(d_ffn_out, params[p + "ffn.w2"].T)
        d_pre = d_act * gelu_derivative(c["ffn_pre"])
        grads[p + "ffn.w1"] = matmul(c["f_in"].T, d_pre)
        d_f_in = matmul(d_pre, params[p + "ffn.w1"].T)
        d_h1, dg, db = _layernorm_backward(d_f_in, params[p + "ln2.g"], c["ln2"])
        grads[p + "ln2.g"] = dg
        grads[p + "ln2.b"] = db
        d_h1 = d_h1 + d_h  # residual
        # attention branch
        d_att_out = d_h1
        grads[p + "attn.w_o"] = matmul(c["att_concat"].T, d_att_out)
        d_att = matmul(d_att_out, params[p + "attn.w_o"].T)
        q_proj = get_projection(params, config, i, "q")
        k_proj = get_projection(params, config, i, "k")
        v_proj = get_projection(params, config, i, "v")
        d_a_in, q_g, k_g, v_g = attention_backward(q_proj, k_proj, v_proj, c["att"], d_att)
        for which, gs in (("q", q_g), ("k", k_g), ("v", v_g)):
            for stage, g in zip(PROJ_STAGES, gs):
                grads[p + f"attn.{which}.{stage}"] = g
        d_hprev, dg, db = _layernorm_backward(d_a_in, params[p + "ln1.g"], c["ln1"])
        grads[p + "ln1.g"] = dg
        grads[p + "ln1.b"] = db
        d_h = d_hprev + d_h1  # residual

    np.add.at(grads["tok_emb"], ids, d_h)
    grads["pos_emb"][:n] = d_h
    return float(loss), grads


def flatten_params(params: dict) -> np.ndarray:
    return np.concatenate([params[k].ravel() for k in sorted(params)])


def heldout_loss(config: ModelConfig, params: dict, sequences) -> float:
    """Mean loss over a list of evaluation sequences."""
    losses = [model_forward(config, params, seq)[1] for seq in sequences]
    return float(np.mean(losses))
