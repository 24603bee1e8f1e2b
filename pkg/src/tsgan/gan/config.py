from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def _is_pow2(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


class ConfigError(ValueError):
    pass


@dataclass
class ConditionLabel:
    """One-hot identity plus an optional lifetime fraction."""

    onehot: np.ndarray
    lifetime: float | None = None

    def __post_init__(self):
        self.onehot = np.asarray(self.onehot, dtype=np.float64)
        if self.onehot.ndim != 1 or self.onehot.size == 0:
            raise ValueError("onehot must be a non-empty vector")
        if np.any(self.onehot < 0) or np.any(self.onehot > 1):
            raise ValueError("onehot entries must lie in [0, 1]")
        if self.lifetime is not None:
            self.lifetime = float(self.lifetime)
            if not 0.0 <= self.lifetime <= 1.0:
                raise ValueError(f"lifetime {self.lifetime} outside [0, 1]")

    @classmethod
    def from_class(cls, k: int, n_classes: int, lifetime: float | None = None) -> "ConditionLabel":
        v = np.zeros(n_classes)
        v[k] = 1.0
        return cls(v, lifetime)

    @classmethod
    def from_vector(cls, vec, onehot_dim: int | None = None) -> "ConditionLabel":
        vec = np.asarray(vec, dtype=np.float64)
        k = vec.size if onehot_dim is None else onehot_dim
        life = float(vec[k]) if vec.size > k else None
        return cls(vec[:k], life)

    @property
    def dim(self) -> int:
        return self.onehot.size + (self.lifetime is not None)

    def vector(self) -> np.ndarray:
        if self.lifetime is None:
            return self.onehot.copy()
        return np.append(self.onehot, self.lifetime)

    def to_json(self) -> dict:
        return {"onehot": self.onehot.tolist(), "lifetime": self.lifetime}

    @classmethod
    def from_json(cls, obj) -> "ConditionLabel":
        if isinstance(obj, list):
            return cls(obj)
        return cls(obj["onehot"], obj.get("lifetime"))


@dataclass
class GeneratorConfig:
    noise_dim: int = 100
    label_proj_dim: int = 500
    t_seed: int = 8
    d_seed: int = 64
    t_target: int = 64
    d_out: int = 2
    shuffle_threshold: int = 32
    ga_threshold: int = 16
    label_dim: int = 3
    n_heads: int = 4
    ffn_mult: int = 4
    grid_len: int | None = None  # partition length; defaults to ga_threshold
    norm_eps: float = 0.1

    @property
    def n_stages(self) -> int:
        return int(round(math.log2(self.t_target // self.t_seed)))

    @property
    def partition_len(self) -> int:
        return self.grid_len or self.ga_threshold

    def plan(self) -> list[dict]:
        """Per-stage schedule: input T/D, attention kind, upscaler, output T/D."""
        stages = []
        t, d = self.t_seed, self.d_seed
        for _ in range(self.n_stages):
            attn = "canonical" if t <= self.ga_threshold else "grid"
            up = "bicubic" if t < self.shuffle_threshold else "shuffle"
            t2, d2 = 2 * t, (d // 2 if up == "shuffle" else d)
            stages.append({"t": t, "d": d, "attn": attn, "upscale": up, "t_out": t2, "d_out": d2})
            t, d = t2, d2
        return stages

    def validate(self):
        for name in ("noise_dim", "label_proj_dim", "d_seed", "d_out", "label_dim", "n_heads", "ffn_mult"):
            if getattr(self, name) < 1:
                raise ConfigError(f"generator.{name} must be positive")
        if self.norm_eps <= 0:
            raise ConfigError("generator.norm_eps must be positive")
        if not (_is_pow2(self.t_seed) and _is_pow2(self.t_target)):
            raise ConfigError("generator t_seed and t_target must be powers of two")
        if self.t_target < self.t_seed:
            raise ConfigError("generator t_target must be >= t_seed")
        if self.t_seed < 2 and self.t_target > self.t_seed:
            raise ConfigError("generator t_seed must be >= 2 when up-scaling")
        for st in self.plan():
            d = st["d"]
            if d % self.n_heads or (d // self.n_heads) % 2:
                raise ConfigError(f"depth {d} at T={st['t']} incompatible with {self.n_heads} heads")
            if st["upscale"] == "shuffle" and d % 2:
                raise ConfigError(f"depth {d} odd before shuffle stage at T={st['t']}")
            if st["attn"] == "grid" and st["t"] % self.partition_len:
                raise ConfigError(f"grid partition {self.partition_len} does not divide T={st['t']}")
        return self


@dataclass
class CriticConfig:
    t: int = 64
    d_in: int = 2
    d_model: int = 64
    patch_len0: int = 1
    n_stages: int | None = None
    d_inject: int | None = None
    head_hidden: int = 64
    label_dim: int = 3
    n_heads: int = 4
    ffn_mult: int = 4
    psa_factor: float = 5.0
    norm_eps: float = 0.1

    def __post_init__(self):
        if self.d_inject is None:
            self.d_inject = max(1, self.d_model // 2)

    @property
    def stages(self) -> int:
        return int(round(math.log2(self.t // self.patch_len0)))

    def validate(self):
        if not _is_pow2(self.t):
            raise ConfigError(f"critic window length {self.t} is not a power of two")
        if self.patch_len0 < 1 or self.t % self.patch_len0 or not _is_pow2(self.t // self.patch_len0):
            raise ConfigError("patch_len0 must divide T leaving a power-of-two token count")
        if self.t // self.patch_len0 < 2:
            raise ConfigError("critic needs at least two tokens after patching")
        if self.n_stages is not None and self.n_stages != self.stages:
            raise ConfigError(f"n_stages {self.n_stages} != log2(T/patch_len0) = {self.stages}")
        if self.d_model % self.n_heads or (self.d_model // self.n_heads) % 2:
            raise ConfigError("critic d_model must split into even-width heads")
        for name in ("d_in", "head_hidden", "label_dim", "d_inject"):
            if getattr(self, name) < 1:
                raise ConfigError(f"critic.{name} must be positive")
        if self.psa_factor <= 0 or self.norm_eps <= 0:
            raise ConfigError("psa_factor and norm_eps must be positive")
        return self


@dataclass
class LossConfig:
    lambda_gp: float = 10.0
    lambda_label: float = 1.0
    label_weights: list[float] | None = None
    n_critic: int = 5
    smoothing_eps: float = 0.1
    onehot_dim: int | None = None  # leading label entries that are one-hot; None = all
    lr: float = 1e-4
    beta1: float = 0.0
    beta2: float = 0.9
    adam_eps: float = 1e-8

    def weights(self, label_dim: int) -> np.ndarray:
        if self.label_weights is None:
            return np.ones(label_dim)
        w = np.asarray(self.label_weights, dtype=np.float64)
        if w.shape != (label_dim,):
            raise ConfigError(f"label_weights has {w.size} entries, label_dim is {label_dim}")
        return w

    def validate(self):
        if self.lambda_gp < 0 or self.lambda_label < 0:
            raise ConfigError("loss weights must be non-negative")
        if not 0.0 <= self.smoothing_eps < 1.0:
            raise ConfigError("smoothing_eps must lie in [0, 1)")
        if self.n_critic < 1:
            raise ConfigError("n_critic must be >= 1")
        if self.label_weights is not None and any(w < 0 for w in self.label_weights):
            raise ConfigError("label_weights must be non-negative")
        if not (self.lr > 0 and 0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("invalid Adam hyperparameters")
        return self


@dataclass
class ModelConfig:
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    critic: CriticConfig = field(default_factory=CriticConfig)
    loss: LossConfig = field(default_factory=LossConfig)

    def validate(self):
        g, c = self.generator.validate(), self.critic.validate()
        self.loss.validate()
        if (g.t_target, g.d_out) != (c.t, c.d_in):
            raise ConfigError("generator output shape must match critic input shape")
        if g.label_dim != c.label_dim:
            raise ConfigError("generator and critic label_dim differ")
        self.loss.weights(c.label_dim)
        if self.loss.onehot_dim is not None and not 1 <= self.loss.onehot_dim <= c.label_dim:
            raise ConfigError("onehot_dim must lie in [1, label_dim]")
        return self
