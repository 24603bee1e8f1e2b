"""Conditional generator and dual-head critic."""
from __future__ import annotations

import numpy as np

from .. import nn
from ..autodiff import ShapeError, Tensor
from ..autodiff import ops
from .config import CriticConfig, GeneratorConfig


# ------------------------------------------------------------------ generator

def init_generator(rng: np.random.Generator, cfg: GeneratorConfig) -> dict:
    cfg.validate()
    w = {
        "cond": {
            "label": nn.init_linear(rng, cfg.label_dim, cfg.label_proj_dim),
            "seed": nn.init_linear(rng, cfg.noise_dim + cfg.label_proj_dim, cfg.t_seed * cfg.d_seed),
        },
        "stages": {},
    }
    for i, st in enumerate(cfg.plan()):
        p = _gen_block(cfg, st)
        w["stages"][str(i)] = {
            "lape_in": nn.init_lape(rng, st["t"], st["d"]),
            "block": nn.init_encoder(rng, p),
            "lape_out": nn.init_lape(rng, st["t_out"], st["d_out"]),
        }
    d_final = cfg.plan()[-1]["d_out"] if cfg.n_stages else cfg.d_seed
    w["out"] = nn.init_linear(rng, d_final, cfg.d_out)
    return w


def _gen_block(cfg: GeneratorConfig, st: dict) -> nn.BlockParams:
    return nn.BlockParams(
        d_model=st["d"], n_heads=cfg.n_heads, ffn_mult=cfg.ffn_mult, attn_kind=st["attn"],
        partition_len=cfg.partition_len if st["attn"] == "grid" else None, norm_eps=cfg.norm_eps,
    )


def condition_embed(noise: Tensor, labels: Tensor, w: dict, cfg: GeneratorConfig) -> Tensor:
    """Project labels up, join with noise, project to the B×t_seed×d_seed seed."""
    if noise.ndim != 2 or noise.shape[1] != cfg.noise_dim:
        raise ShapeError(f"noise shape {noise.shape}, expected (B, {cfg.noise_dim})")
    if labels.ndim != 2 or labels.shape != (noise.shape[0], cfg.label_dim):
        raise ShapeError(f"label shape {labels.shape}, expected ({noise.shape[0]}, {cfg.label_dim})")
    lab = ops.linear(labels, w["label"]["w"], w["label"]["b"])
    joint = ops.concat([noise, lab], axis=1)
    seed = ops.linear(joint, w["seed"]["w"], w["seed"]["b"])
    return ops.reshape(seed, (noise.shape[0], cfg.t_seed, cfg.d_seed))


def generator_forward(noise, labels, w: dict, cfg: GeneratorConfig, trace: list | None = None) -> Tensor:
    """Noise + condition → B×t_target×d_out window in normalized units."""
    noise, labels = ops.as_tensor(noise), ops.as_tensor(labels)
    x = condition_embed(noise, labels, w["cond"], cfg)
    if trace is not None:
        trace.append(x.shape[1:])
    for i, st in enumerate(cfg.plan()):
        sw = w["stages"][str(i)]
        x = nn.lape_add(x, sw["lape_in"])
        x = nn.encoder_block(x, _gen_block(cfg, st), sw["block"])
        x = nn.upsample_bicubic(x) if st["upscale"] == "bicubic" else nn.pixel_shuffle(x)
        x = nn.lape_add(x, sw["lape_out"])
        if trace is not None:
            trace.append(x.shape[1:])
    return ops.linear(x, w["out"]["w"], w["out"]["b"])


# --------------------------------------------------------------------- critic

def _critic_block(cfg: CriticConfig) -> nn.BlockParams:
    return nn.BlockParams(d_model=cfg.d_model, n_heads=cfg.n_heads, ffn_mult=cfg.ffn_mult,
                          attn_kind="psa", psa_factor=cfg.psa_factor, norm_eps=cfg.norm_eps)


def init_critic(rng: np.random.Generator, cfg: CriticConfig) -> dict:
    cfg.validate()
    p = _critic_block(cfg)
    w = {"embed": nn.init_linear(rng, cfg.patch_len0 * cfg.d_in, cfg.d_model), "stages": {}}
    n_tok = cfg.t // cfg.patch_len0
    for i in range(cfg.stages):
        plen = cfg.patch_len0 * 2 ** i
        w["stages"][str(i)] = {
            "inject": nn.init_linear(rng, plen * cfg.d_in, cfg.d_inject),
            "merge": nn.init_linear(rng, cfg.d_model + cfg.d_inject, cfg.d_model),
            "lape": nn.init_lape(rng, n_tok >> i, cfg.d_model),
            "block": nn.init_encoder(rng, p),
            "distill": nn.init_distill(rng, cfg.d_model),
        }
    w["adv"] = {"h": nn.init_linear(rng, cfg.d_model, cfg.head_hidden),
                "o": nn.init_linear(rng, cfg.head_hidden, 1)}
    w["label"] = {"h": nn.init_linear(rng, cfg.d_model, cfg.head_hidden),
                  "o": nn.init_linear(rng, cfg.head_hidden, cfg.label_dim)}
    return w


def critic_features(window, w: dict, cfg: CriticConfig, seed=0, trace: list | None = None) -> Tensor:
    """Hierarchical extraction: B×T×D window → B×d_model features."""
    window = ops.as_tensor(window)
    if window.ndim != 3 or window.shape[1:] != (cfg.t, cfg.d_in):
        raise ShapeError(f"critic expects B×{cfg.t}×{cfg.d_in}, got {window.shape}")
    p = _critic_block(cfg)
    x = nn.patch_embed(window, cfg.patch_len0, w["embed"])
    if trace is not None:
        trace.append(x.shape[1])
    for i in range(cfg.stages):
        sw = w["stages"][str(i)]
        raw = nn.patch_embed(window, cfg.patch_len0 * 2 ** i, sw["inject"])
        x = ops.linear(ops.concat([x, raw], axis=2), sw["merge"]["w"], sw["merge"]["b"])
        x = nn.lape_add(x, sw["lape"])
        x = nn.encoder_block(x, p, sw["block"], rng_seed=(int(seed), i))
        x = nn.distill_halve(x, sw["distill"])
        if trace is not None:
            trace.append(x.shape[1])
    if x.shape[1] != 1:
        raise ShapeError(f"extraction left {x.shape[1]} time steps")
    return ops.reshape(x, (x.shape[0], cfg.d_model))


def _head(feat: Tensor, w: dict) -> Tensor:
    h = ops.leaky_relu(ops.linear(feat, w["h"]["w"], w["h"]["b"]), 0.2)
    return ops.linear(h, w["o"]["w"], w["o"]["b"])


def critic_forward(window, w: dict, cfg: CriticConfig, seed=0, trace: list | None = None):
    """Return ``(realness (B,), predicted label (B, label_dim))``."""
    feat = critic_features(window, w, cfg, seed, trace)
    adv = _head(feat, w["adv"])
    realness = ops.reshape(adv, (adv.shape[0],))
    label = ops.sigmoid(_head(feat, w["label"]))
    return realness, label
