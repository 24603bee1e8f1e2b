"""Checkpoint files.

``TGCK`` magic, u32 format version, u32 header length, a JSON header, then
float32 little-endian tensor data at the offsets listed in the header.
Parameters and Adam moments are held as float64 in memory.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .config import RunConfig
from .corpus import _atomic_write
from .datasets import DataError, NormParams
from .gan.train import Adam, TrainState, init_state

MAGIC = b"TGCK"
VERSION = 1
_PRE = struct.Struct("<4sII")


def _tensor_table(state: TrainState) -> dict[str, np.ndarray]:
    out = {}
    for tag, opt in (("generator", state.opt_g), ("critic", state.opt_c)):
        for k, p in opt.params.items():
            out[f"{tag}/{k}"] = p.data
        for k in opt.params:
            out[f"adam.{tag}.m/{k}"] = opt.m[k]
            out[f"adam.{tag}.v/{k}"] = opt.v[k]
    return out


def encode_checkpoint(state: TrainState, run: RunConfig, norm: NormParams | None = None,
                      onehot_dim: int | None = None) -> bytes:
    tensors = _tensor_table(state)
    index, blobs, offset = [], [], 0
    for name, arr in tensors.items():
        b = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        index.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(b)
        offset += len(b)
    header = {
        "version": VERSION,
        "config": run.to_json(),
        "step": state.step,
        "critic_steps": state.critic_steps,
        "adam_t": {"generator": state.opt_g.t, "critic": state.opt_c.t},
        "rng": state.rng.bit_generator.state,
        "norm": None if norm is None else norm.to_json(),
        "onehot_dim": onehot_dim,
        "tensors": index,
    }
    hb = json.dumps(header, sort_keys=True).encode()
    return _PRE.pack(MAGIC, VERSION, len(hb)) + hb + b"".join(blobs)


def save_checkpoint(path, state: TrainState, run: RunConfig, norm: NormParams | None = None,
                    onehot_dim: int | None = None):
    _atomic_write(Path(path), encode_checkpoint(state, run, norm, onehot_dim))


def load_checkpoint(path):
    """Return ``(state, run_config, norm, onehot_dim)``."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from None
    if len(raw) < _PRE.size:
        raise DataError(f"{path}: truncated checkpoint")
    magic, version, hlen = _PRE.unpack_from(raw)
    if magic != MAGIC or version != VERSION:
        raise DataError(f"{path}: not a version-{VERSION} checkpoint")
    header = json.loads(raw[_PRE.size:_PRE.size + hlen])
    base = _PRE.size + hlen
    run = RunConfig.from_json(header["config"])
    state = init_state(run.model, run.seed)
    tables = {}
    for ent in header["tensors"]:
        n = int(np.prod(ent["shape"])) if ent["shape"] else 1
        start = base + ent["offset"]
        if start + 4 * n > len(raw):
            raise DataError(f"{path}: tensor {ent['name']} runs past end of file")
        tables[ent["name"]] = np.frombuffer(raw, dtype="<f4", count=n, offset=start) \
            .astype(np.float64).reshape(ent["shape"])
    for tag, opt in (("generator", state.opt_g), ("critic", state.opt_c)):
        _restore(opt, tag, tables, path)
        opt.t = header["adam_t"][tag]
    state.step = header["step"]
    state.critic_steps = header["critic_steps"]
    state.rng.bit_generator.state = header["rng"]
    norm = NormParams.from_json(header["norm"]) if header.get("norm") else None
    return state, run, norm, header.get("onehot_dim")


def _restore(opt: Adam, tag: str, tables: dict, path):
    for k, p in opt.params.items():
        try:
            data = tables[f"{tag}/{k}"]
            m, v = tables[f"adam.{tag}.m/{k}"], tables[f"adam.{tag}.v/{k}"]
        except KeyError:
            raise DataError(f"{path}: missing tensor for {tag}/{k}") from None
        if data.shape != p.data.shape:
            raise DataError(f"{path}: shape mismatch for {tag}/{k}")
        p.data[...] = data
        opt.m[k][...] = m
        opt.v[k][...] = v
