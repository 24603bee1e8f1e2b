"""Adversarial training loop and inference."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import partial
from typing import Sequence

import numpy as np

from .. import nn
from ..autodiff import Tape, Tensor, grad, no_record
from .config import ConditionLabel, ModelConfig
from .losses import critic_loss, generator_loss
from .models import critic_forward, generator_forward, init_critic, init_generator

logger = logging.getLogger(__name__)


class NumericAbort(RuntimeError):
    """A loss or gradient became non-finite."""


class Adam:
    def __init__(self, params: dict[str, Tensor], lr=1e-4, beta1=0.0, beta2=0.9, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, p in self.params.items():
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class TrainState:
    config: ModelConfig
    gen_w: dict
    critic_w: dict
    opt_g: Adam
    opt_c: Adam
    rng: np.random.Generator
    step: int = 0
    critic_steps: int = 0
    telemetry: dict = field(default_factory=dict)

    @property
    def gen_params(self) -> dict[str, Tensor]:
        return self.opt_g.params

    @property
    def critic_params(self) -> dict[str, Tensor]:
        return self.opt_c.params


def init_state(config: ModelConfig, seed: int) -> TrainState:
    config.validate()
    rng = np.random.default_rng(seed)
    gen_w = init_generator(rng, config.generator)
    critic_w = init_critic(rng, config.critic)
    lc = config.loss
    opt_g = Adam(nn.flatten_params(gen_w), lc.lr, lc.beta1, lc.beta2, lc.adam_eps)
    opt_c = Adam(nn.flatten_params(critic_w), lc.lr, lc.beta1, lc.beta2, lc.adam_eps)
    return TrainState(config, gen_w, critic_w, opt_g, opt_c, rng)


def _grads(loss: Tensor, params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    names = list(params)
    gs = grad(loss, [params[k] for k in names])
    out = {}
    for k, g in zip(names, gs):
        if not np.all(np.isfinite(g.data)):
            raise NumericAbort(f"non-finite gradient for {k}")
        out[k] = g.data
    return out


def _set_trainable(params: dict[str, Tensor], flag: bool):
    for p in params.values():
        p.requires_grad = flag


def _check(name: str, value: float, step: int):
    if not np.isfinite(value):
        raise NumericAbort(f"{name} became {value} at step {step}")


def train_step(state: TrainState, batches: Sequence[tuple[np.ndarray, np.ndarray]]) -> TrainState:
    """``n_critic`` critic updates followed by one generator update.

    ``batches`` holds one ``(windows, labels)`` pair per critic update (a
    single pair is reused).  All randomness comes from ``state.rng``.
    """
    cfg = state.config
    gc, cc, lc = cfg.generator, cfg.critic, cfg.loss
    if len(batches) == 1 and lc.n_critic > 1:
        batches = list(batches) * lc.n_critic
    if len(batches) != lc.n_critic:
        raise ValueError(f"expected {lc.n_critic} critic batches, got {len(batches)}")
    rng = state.rng

    _set_trainable(state.gen_params, False)
    for windows, labels in batches:
        b = windows.shape[0]
        noise = rng.normal(size=(b, gc.noise_dim))
        with no_record():
            syn = generator_forward(noise, labels, state.gen_w, gc)
        mix = rng.uniform(size=b)
        seed = int(rng.integers(2 ** 31))
        critic = partial(critic_forward, w=state.critic_w, cfg=cc, seed=seed)
        with Tape():
            loss, terms = critic_loss(critic, windows, labels, Tensor(syn.data), lc, mix)
            _check("critic loss", float(loss.data), state.step)
            grads = _grads(loss, state.critic_params)
        state.opt_c.step(grads)
        state.critic_steps += 1
    _set_trainable(state.gen_params, True)

    labels = batches[-1][1]
    b = labels.shape[0]
    noise = rng.normal(size=(b, gc.noise_dim))
    seed = int(rng.integers(2 ** 31))
    critic = partial(critic_forward, w=state.critic_w, cfg=cc, seed=seed)
    _set_trainable(state.critic_params, False)
    try:
        with Tape():
            syn = generator_forward(noise, labels, state.gen_w, gc)
            g_loss, g_terms = generator_loss(critic, syn, labels, lc)
            _check("generator loss", float(g_loss.data), state.step)
            grads = _grads(g_loss, state.gen_params)
    finally:
        _set_trainable(state.critic_params, True)
    state.opt_g.step(grads)
    state.step += 1
    state.telemetry = {
        "step": state.step,
        "critic_loss": float(loss.data),
        "generator_loss": float(g_loss.data),
        "gp": terms["gp"],
        "label_mse": terms["label_mse"],
        "wdist": terms["wdist"],
        "gen_label_mse": g_terms["label_mse"],
    }
    return state


def _label_matrix(labels) -> np.ndarray:
    rows = [lab.vector() if isinstance(lab, ConditionLabel) else np.asarray(lab, dtype=np.float64)
            for lab in labels]
    return np.stack(rows)


def synthesize(gen_w: dict, cfg, labels, n_per_label: int, norm=None, seed: int = 0,
               batch_size: int = 64) -> np.ndarray:
    """Generate ``n_per_label`` windows per label, in label order, denormalized."""
    lab = _label_matrix(labels)
    if lab.shape[1] != cfg.label_dim:
        raise ValueError(f"labels have {lab.shape[1]} entries, model expects {cfg.label_dim}")
    rng = np.random.default_rng(seed)
    rows = np.repeat(lab, n_per_label, axis=0)
    noise = rng.normal(size=(rows.shape[0], cfg.noise_dim))
    out = []
    with no_record():
        for i in range(0, rows.shape[0], batch_size):
            out.append(generator_forward(noise[i:i + batch_size], rows[i:i + batch_size], gen_w, cfg).data)
    windows = np.concatenate(out, axis=0) if out else np.zeros((0, cfg.t_target, cfg.d_out))
    return norm.invert(windows) if norm is not None else windows
