"""Transformer building blocks operating on B×T×D tensors.

Weights are plain nested dicts of :class:`Tensor`; ``init_*`` helpers build
them from a numpy ``Generator``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .autodiff import ShapeError, Tensor
from .autodiff import ops

ATTN_KINDS = ("canonical", "grid", "psa")


@dataclass(frozen=True)
class BlockParams:
    d_model: int = 64
    n_heads: int = 4
    ffn_mult: int = 4
    attn_kind: str = "canonical"
    partition_len: int | None = None
    psa_factor: float = 5.0
    norm_eps: float = 0.1  # floors the time-axis spread; short sequences stay well conditioned

    def __post_init__(self):
        if self.norm_eps <= 0:
            raise ValueError("norm_eps must be positive")
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if (self.d_model // self.n_heads) % 2:
            raise ValueError("head width must be even for rotary embedding")
        if self.attn_kind not in ATTN_KINDS:
            raise ValueError(f"attn_kind must be one of {ATTN_KINDS}")
        if self.attn_kind == "grid" and not self.partition_len:
            raise ValueError("grid attention needs partition_len")

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads


# ---------------------------------------------------------------- init helpers

def _param(arr) -> Tensor:
    return Tensor(arr, requires_grad=True)


def init_linear(rng: np.random.Generator, fan_in: int, fan_out: int, bias: bool = True) -> dict:
    w = {"w": _param(rng.normal(0.0, fan_in ** -0.5, size=(fan_in, fan_out)))}
    if bias:
        w["b"] = _param(np.zeros(fan_out))
    return w


def init_norm(d: int) -> dict:
    return {"gain": _param(np.ones(d)), "bias": _param(np.zeros(d))}


def init_lape(rng: np.random.Generator, t: int, d: int, std: float = 0.02) -> Tensor:
    return _param(rng.normal(0.0, std, size=(t, d)))


def init_attention(rng: np.random.Generator, d_model: int) -> dict:
    out = {}
    for name in ("q", "k", "v", "o"):
        lin = init_linear(rng, d_model, d_model)
        out["w" + name], out["b" + name] = lin["w"], lin["b"]
    return out


def init_encoder(rng: np.random.Generator, p: BlockParams) -> dict:
    hidden = p.ffn_mult * p.d_model
    return {
        "norm1": init_norm(p.d_model),
        "attn": init_attention(rng, p.d_model),
        "norm2": init_norm(p.d_model),
        "ffn1": init_linear(rng, p.d_model, hidden),
        "ffn2": init_linear(rng, hidden, p.d_model),
    }


def init_distill(rng: np.random.Generator, d: int) -> dict:
    return {"w": _param(rng.normal(0.0, (3 * d) ** -0.5, size=(3, d, d))),
            "b": _param(np.zeros(d))}


def flatten_params(tree: dict, prefix: str = "") -> dict[str, Tensor]:
    """Flatten nested weight dicts to ``{"a.b.c": Tensor}`` in insertion order."""
    flat = {}
    for key, val in tree.items():
        name = f"{prefix}.{key}" if prefix else str(key)
        if isinstance(val, dict):
            flat.update(flatten_params(val, name))
        else:
            flat[name] = val
    return flat


# ------------------------------------------------------------------ positional

@lru_cache(maxsize=64)
def _rope_tables(positions: tuple[int, ...], d_head: int, base: float):
    pos = np.asarray(positions, dtype=np.float64)[:, None]
    freq = base ** (-2.0 * np.arange(d_head // 2) / d_head)
    ang = np.repeat(pos * freq[None, :], 2, axis=1)
    swap = np.zeros((d_head, d_head))
    for i in range(d_head // 2):
        swap[2 * i + 1, 2 * i] = -1.0
        swap[2 * i, 2 * i + 1] = 1.0
    return np.cos(ang), np.sin(ang), swap


def rope_rotate(qk: Tensor, positions=None, base: float = 10000.0) -> Tensor:
    """Rotate feature pairs (2i, 2i+1) by ``pos * base**(-2i/d_head)``."""
    t, d_head = qk.shape[-2], qk.shape[-1]
    if d_head % 2:
        raise ShapeError(f"rotary embedding needs an even head width, got {d_head}")
    positions = tuple(range(t)) if positions is None else tuple(int(p) for p in positions)
    if len(positions) != t:
        raise ShapeError(f"{len(positions)} positions for {t} tokens")
    cos, sin, swap = _rope_tables(positions, d_head, float(base))
    # (x @ swap)[2i] = -x[2i+1], (x @ swap)[2i+1] = x[2i]
    return ops.add(ops.mul(qk, Tensor(cos)), ops.mul(ops.matmul(qk, Tensor(swap)), Tensor(sin)))


def lape_add(x: Tensor, table: Tensor) -> Tensor:
    if table.shape != x.shape[-2:]:
        raise ShapeError(f"positional table {table.shape} does not match tokens {x.shape[-2:]}")
    return ops.add(x, table)


# --------------------------------------------------------------------- norms

def instance_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each channel of each sample over the time axis."""
    if x.ndim != 3:
        raise ShapeError("instance_norm expects B×T×D")
    if x.shape[1] < 2:
        raise ShapeError("instance_norm needs at least two time steps")
    centered = ops.sub(x, ops.mean(x, axis=1, keepdims=True))
    var = ops.mean(ops.square(centered), axis=1, keepdims=True)
    normed = ops.div(centered, ops.sqrt(ops.add(var, eps)))
    return ops.add(ops.mul(normed, gain), bias)


# ----------------------------------------------------------------- attention

def _split_heads(t: Tensor, b: int, n: int, h: int) -> Tensor:
    d = t.shape[-1] // h
    return ops.reshape(ops.transpose(ops.reshape(t, (b, n, h, d)), 1, 2), (b * h, n, d))


def _merge_heads(t: Tensor, b: int, n: int, h: int) -> Tensor:
    d = t.shape[-1]
    return ops.reshape(ops.transpose(ops.reshape(t, (b, h, n, d)), 1, 2), (b, n, h * d))


def _qkv(x: Tensor, p: BlockParams, w: dict):
    b, n, d = x.shape
    if d != p.d_model:
        raise ShapeError(f"attention width {d} != d_model {p.d_model}")
    h = p.n_heads
    q = _split_heads(ops.linear(x, w["wq"], w["bq"]), b, n, h)
    k = _split_heads(ops.linear(x, w["wk"], w["bk"]), b, n, h)
    v = _split_heads(ops.linear(x, w["wv"], w["bv"]), b, n, h)
    return rope_rotate(q), rope_rotate(k), v


def attention_canonical(x: Tensor, p: BlockParams, w: dict) -> Tensor:
    b, n, _ = x.shape
    q, k, v = _qkv(x, p, w)
    scores = ops.scale(ops.matmul(q, ops.transpose(k)), 1.0 / math.sqrt(p.d_head))
    ctx = ops.matmul(ops.softmax(scores), v)
    return ops.linear(_merge_heads(ctx, b, n, p.n_heads), w["wo"], w["bo"])


def attention_grid(x: Tensor, p: BlockParams, w: dict) -> Tensor:
    """Canonical attention inside fixed-length partitions with shared weights."""
    b, n, d = x.shape
    part = p.partition_len or n
    if n % part:
        raise ShapeError(f"partition length {part} does not divide T={n}")
    folded = ops.reshape(x, (b * (n // part), part, d))
    return ops.reshape(attention_canonical(folded, p, w), (b, n, d))


def psa_budget(t: int, factor: float) -> int:
    """Number of sampled keys and of active queries: ``min(T, ceil(c ln T))``."""
    return max(1, min(t, math.ceil(factor * math.log(t)))) if t > 1 else 1


def attention_psa(x: Tensor, p: BlockParams, w: dict, rng_seed=0) -> Tensor:
    """Probabilistic sparse attention.

    Queries are ranked by the max-minus-mean of their scores against a random
    key sample; the top ones get full attention and the rest output the mean
    of the values.
    """
    b, n, _ = x.shape
    q, k, v = _qkv(x, p, w)
    bh, dh = q.shape[0], p.d_head
    budget = psa_budget(n, p.psa_factor)
    rng = np.random.default_rng(rng_seed)
    sample = rng.integers(0, n, size=(n, budget))
    k_sample = k.data[:, sample, :]                                  # bh × n × U × dh
    s = np.einsum("bnd,bnud->bnu", q.data, k_sample) / math.sqrt(dh)
    sparsity = s.max(axis=-1) - s.mean(axis=-1)
    top = np.argsort(-sparsity, axis=1, kind="stable")[:, :budget]   # bh × u

    q_top = ops.gather_rows(q, top)
    scores = ops.scale(ops.matmul(q_top, ops.transpose(k)), 1.0 / math.sqrt(dh))
    active = ops.matmul(ops.softmax(scores), v)                      # bh × u × dh

    idle = np.ones((bh, n, 1))
    idle[np.arange(bh)[:, None], top, 0] = 0.0
    base = ops.broadcast_to(ops.mean(v, axis=1, keepdims=True), (bh, n, dh))
    ctx = ops.add(ops.mul(base, Tensor(idle)), ops.scatter_rows(active, top, n))
    return ops.linear(_merge_heads(ctx, b, n, p.n_heads), w["wo"], w["bo"])


def attention(x: Tensor, p: BlockParams, w: dict, rng_seed=0) -> Tensor:
    if p.attn_kind == "canonical":
        return attention_canonical(x, p, w)
    if p.attn_kind == "grid":
        return attention_grid(x, p, w)
    return attention_psa(x, p, w, rng_seed)


def encoder_block(x: Tensor, p: BlockParams, w: dict, rng_seed=0) -> Tensor:
    """Pre-norm encoder layer: self-attention then feed-forward, each residual."""
    if x.ndim != 3 or x.shape[2] != p.d_model:
        raise ShapeError(f"encoder input {x.shape} vs d_model {p.d_model}")
    h = instance_norm(x, w["norm1"]["gain"], w["norm1"]["bias"], p.norm_eps)
    y = ops.add(x, attention(h, p, w["attn"], rng_seed))
    h = instance_norm(y, w["norm2"]["gain"], w["norm2"]["bias"], p.norm_eps)
    h = ops.linear(ops.gelu(ops.linear(h, w["ffn1"]["w"], w["ffn1"]["b"])),
                   w["ffn2"]["w"], w["ffn2"]["b"])
    return ops.add(y, h)


# ------------------------------------------------------- patching / rescaling

def patch_embed(window: Tensor, patch_len: int, w: dict) -> Tensor:
    """Non-overlapping time patches, flattened time-major and projected."""
    b, t, d = window.shape
    if patch_len < 1 or t % patch_len:
        raise ShapeError(f"patch length {patch_len} does not divide T={t}")
    if w["w"].shape[0] != patch_len * d:
        raise ShapeError(f"patch projection expects {w['w'].shape[0]} inputs, got {patch_len * d}")
    patches = ops.reshape(window, (b, t // patch_len, patch_len * d))
    return ops.linear(patches, w["w"], w.get("b"))


def distill_halve(x: Tensor, w: dict) -> Tensor:
    """Conv(width 3, pad 1) → ELU → max-pool(width 3, stride 2, pad 1)."""
    t = x.shape[1]
    if t < 2 or t % 2:
        raise ShapeError(f"distillation needs an even T >= 2, got {t}")
    h = ops.elu(ops.conv1d(x, w["w"], w["b"], width=3, stride=1, pad=1))
    return ops.max_pool1d(h, width=3, stride=2, pad=1)


def _cubic(d: np.ndarray, a: float) -> np.ndarray:
    d = np.abs(d)
    near = ((a + 2) * d - (a + 3)) * d * d + 1
    far = ((a * d - 5 * a) * d + 8 * a) * d - 4 * a
    return np.where(d <= 1, near, np.where(d < 2, far, 0.0))


@lru_cache(maxsize=32)
def bicubic_matrix(t: int, a: float = -0.75) -> np.ndarray:
    """2T×T interpolation matrix: half-pixel centres, edge replication."""
    out = np.zeros((2 * t, t))
    for j in range(2 * t):
        src = (j + 0.5) / 2.0 - 0.5
        left = math.floor(src)
        for tap in range(left - 1, left + 3):
            out[j, min(max(tap, 0), t - 1)] += _cubic(np.array(src - tap), a)
    out.setflags(write=False)
    return out


def upsample_bicubic(x: Tensor, a: float = -0.75) -> Tensor:
    """Double T by cubic convolution along time; depth unchanged."""
    if x.ndim != 3 or x.shape[1] < 2:
        raise ShapeError("bicubic upsampling needs B×T×D with T >= 2")
    return ops.matmul(Tensor(bicubic_matrix(x.shape[1], float(a))), x)


def pixel_shuffle(x: Tensor) -> Tensor:
    """``out[b, 2t+i, d] = in[b, t, 2d+i]``: doubles T, halves D."""
    b, t, d = x.shape
    if d % 2:
        raise ShapeError(f"pixel shuffle needs an even depth, got {d}")
    r = ops.transpose(ops.reshape(x, (b, t, d // 2, 2)))
    return ops.reshape(r, (b, 2 * t, d // 2))


def pixel_unshuffle(x: Tensor) -> Tensor:
    b, t, d = x.shape
    if t % 2:
        raise ShapeError(f"pixel unshuffle needs an even length, got {t}")
    r = ops.transpose(ops.reshape(x, (b, t // 2, 2, d)))
    return ops.reshape(r, (b, t // 2, 2 * d))
