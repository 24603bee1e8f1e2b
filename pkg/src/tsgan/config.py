"""Run configuration: TOML with ``[generator] [critic] [loss] [data] [run]`` sections."""
from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .gan.config import ConfigError, CriticConfig, GeneratorConfig, LossConfig, ModelConfig

# window geometry comes from the corpus
_DATA_FIELDS = {
    "generator": ("t_target", "d_out", "label_dim"),
    "critic": ("t", "d_in", "label_dim"),
}


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    data_path: str | None = None
    seed: int = 0
    max_steps: int = 100
    batch_size: int = 16
    checkpoint_every: int | None = None   # None: only at the end
    eval_every: int = 0                   # 0 disables periodic spectral eval
    eval_samples: int = 64

    def validate(self):
        self.model.validate()
        if self.max_steps < 0:
            raise ConfigError("run.max_steps must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("run.batch_size must be >= 1")
        if self.checkpoint_every is not None and self.checkpoint_every < 1:
            raise ConfigError("run.checkpoint_every must be >= 1")
        if self.eval_every < 0 or self.eval_samples < 1:
            raise ConfigError("invalid run.eval_every / run.eval_samples")
        return self

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "RunConfig":
        m = obj["model"]
        model = ModelConfig(GeneratorConfig(**m["generator"]), CriticConfig(**m["critic"]),
                            LossConfig(**m["loss"]))
        rest = {k: v for k, v in obj.items() if k != "model"}
        return cls(model=model, **rest)


def _build(klass, section: dict, name: str):
    names = {f.name for f in dataclasses.fields(klass)}
    unknown = set(section) - names
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")
    return klass(**section)


def parse_config(doc: dict) -> tuple[RunConfig, dict]:
    """Build a RunConfig from a parsed TOML document.

    Returns the config and the set of geometry keys the user set explicitly,
    so they can be checked against the corpus.
    """
    unknown = set(doc) - {"generator", "critic", "loss", "data", "run"}
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")
    explicit = {sec: {k: doc.get(sec, {})[k] for k in keys if k in doc.get(sec, {})}
                for sec, keys in _DATA_FIELDS.items()}
    model = ModelConfig(
        _build(GeneratorConfig, doc.get("generator", {}), "generator"),
        _build(CriticConfig, doc.get("critic", {}), "critic"),
        _build(LossConfig, doc.get("loss", {}), "loss"),
    )
    data = dict(doc.get("data", {}))
    run = dict(doc.get("run", {}))
    data_path = data.pop("path", None)
    if data:
        raise ConfigError(f"unknown keys in [data]: {sorted(data)}")
    cfg = RunConfig(model=model, data_path=data_path)
    for k, v in run.items():
        if k not in {"seed", "max_steps", "batch_size", "checkpoint_every", "eval_every", "eval_samples"}:
            raise ConfigError(f"unknown key in [run]: {k}")
        setattr(cfg, k, v)
    return cfg, explicit


def load_config(path: str | Path) -> tuple[RunConfig, dict]:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from None
    try:
        return parse_config(doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def bind_to_corpus(cfg: RunConfig, explicit: dict, t: int, d: int, label_dim: int,
                   onehot_dim: int | None) -> RunConfig:
    """Fill window geometry from the corpus; reject explicit values that disagree."""
    want = {"generator": {"t_target": t, "d_out": d, "label_dim": label_dim},
            "critic": {"t": t, "d_in": d, "label_dim": label_dim}}
    for sec, vals in want.items():
        target = getattr(cfg.model, sec)
        for k, v in vals.items():
            if k in explicit.get(sec, {}) and explicit[sec][k] != v:
                raise ConfigError(f"[{sec}] {k}={explicit[sec][k]} but the corpus has {v}")
            setattr(target, k, v)
    if cfg.model.loss.onehot_dim is None and onehot_dim is not None and onehot_dim < label_dim:
        cfg.model.loss.onehot_dim = onehot_dim
    return cfg.validate()
