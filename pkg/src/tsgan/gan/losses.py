"""Gradient-penalty Wasserstein losses with an auxiliary label term.

The critic never sees the condition label as input; it predicts it.  The
label term uses authentic windows in the critic loss and conditioned
synthetic windows in the generator loss.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from ..autodiff import ShapeError, Tensor, grad
from ..autodiff import ops
from .config import ConditionLabel, LossConfig

CriticFn = Callable[[Tensor], tuple]


def smooth_labels(label: ConditionLabel, eps: float) -> ConditionLabel:
    if not 0.0 <= eps < 1.0:
        raise ValueError("smoothing eps must lie in [0, 1)")
    k = label.onehot.size
    return ConditionLabel(label.onehot * (1.0 - eps) + eps / k, label.lifetime)


def smooth_label_array(labels: np.ndarray, eps: float, onehot_dim: int | None = None) -> np.ndarray:
    """Row-wise smoothing of the leading ``onehot_dim`` label entries."""
    labels = np.asarray(labels, dtype=np.float64)
    k = labels.shape[-1] if onehot_dim is None else onehot_dim
    out = labels.copy()
    out[..., :k] = labels[..., :k] * (1.0 - eps) + eps / k
    return out


def weighted_label_mse(pred: Tensor, target, weights) -> Tensor:
    """Mean over all elements of ``weight * (pred - target)**2``."""
    target = np.asarray(target.vector() if isinstance(target, ConditionLabel) else target, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if pred.shape[-1] != target.shape[-1] or weights.shape != (pred.shape[-1],):
        raise ShapeError(f"label dims: pred {pred.shape}, target {target.shape}, weights {weights.shape}")
    if target.ndim == 1 and pred.ndim == 2:
        target = np.broadcast_to(target, pred.shape)
    err = ops.square(ops.sub(pred, Tensor(target)))
    return ops.mean(ops.mul(err, Tensor(weights)))


def interpolate(real, syn, mix: np.ndarray) -> Tensor:
    """Per-sample ``mix * real + (1 - mix) * syn``.

    Differentiable in both batches when they require grad; otherwise a fresh
    leaf that requires grad.
    """
    real, syn = ops.as_tensor(real), ops.as_tensor(syn)
    if real.shape != syn.shape:
        raise ShapeError(f"real batch {real.shape} vs synthetic batch {syn.shape}")
    m = np.asarray(mix, dtype=np.float64).reshape((-1,) + (1,) * (real.ndim - 1))
    x_hat = ops.add(ops.mul(real, Tensor(m)), ops.mul(syn, Tensor(1.0 - m)))
    if not x_hat.requires_grad:
        x_hat = Tensor(x_hat.data, requires_grad=True)
    return x_hat


def gradient_penalty(adv_fn: Callable[[Tensor], Tensor], real, syn, mix: np.ndarray) -> Tensor:
    """Mean over the batch of ``(||d adv / d x_hat||_2 - 1)**2``.

    The inner gradient is recorded, so the penalty can be differentiated
    with respect to the critic parameters.
    """
    x_hat = interpolate(real, syn, mix)
    score = adv_fn(x_hat)
    g, = grad(ops.sum(score), [x_hat], create_graph=True)
    axes = tuple(range(1, g.ndim))
    norm = ops.sqrt(ops.add(ops.sum(ops.square(g), axis=axes), 1e-12))
    return ops.mean(ops.square(ops.sub(norm, 1.0)))


def critic_loss(critic: CriticFn, real, real_labels, syn, cfg: LossConfig, mix: np.ndarray):
    """Return ``(loss, terms)`` with terms ``wdist, gp, label_mse`` as floats.

    ``loss = mean adv(syn) - mean adv(real) + lambda_gp*gp + lambda_label*mse``.
    """
    real, syn = ops.as_tensor(real), ops.as_tensor(syn)
    if real.shape != syn.shape:
        raise ShapeError(f"real batch {real.shape} vs synthetic batch {syn.shape}")
    b = real.shape[0]
    adv, lab = critic(ops.concat([real, syn], axis=0))
    adv_real, adv_syn = ops.slice_(adv, 0, 0, b), ops.slice_(adv, 0, b, 2 * b)
    lab_real = ops.slice_(lab, 0, 0, b)
    wdist = ops.sub(ops.mean(adv_syn), ops.mean(adv_real))
    label_dim = lab.shape[-1]
    target = smooth_label_array(real_labels, cfg.smoothing_eps, cfg.onehot_dim)
    mse = weighted_label_mse(lab_real, target, cfg.weights(label_dim))
    gp = gradient_penalty(lambda x: critic(x)[0], real, syn, mix) if cfg.lambda_gp else Tensor(0.0)
    loss = ops.add(ops.add(wdist, ops.scale(gp, cfg.lambda_gp)), ops.scale(mse, cfg.lambda_label))
    terms = {"wdist": float(wdist.data), "gp": float(gp.data), "label_mse": float(mse.data)}
    return loss, terms


def generator_loss(critic: CriticFn, synthetic: Tensor, labels, cfg: LossConfig):
    """``-mean adv(G(z, y)) + lambda_label * mse(label_head(G(z, y)), smooth(y))``."""
    adv, lab = critic(synthetic)
    adv_term = ops.scale(ops.mean(adv), -1.0)
    target = smooth_label_array(labels, cfg.smoothing_eps, cfg.onehot_dim)
    mse = weighted_label_mse(lab, target, cfg.weights(lab.shape[-1]))
    loss = ops.add(adv_term, ops.scale(mse, cfg.lambda_label))
    return loss, {"adv": float(adv_term.data), "label_mse": float(mse.data)}
