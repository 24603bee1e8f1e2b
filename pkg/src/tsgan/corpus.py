"""``TSW1`` window corpus files and their JSON sidecars.

Layout: magic ``TSW1``; little-endian u32 ``record_count, t, d, label_dim``;
then per record ``label_dim`` float32 label values followed by ``t*d`` float32
window values in time-major order.  The sidecar ``<path>.json`` carries
provenance, split assignment and normalization parameters.
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .datasets import SPLIT_NAMES, DataError, NormParams, WindowRecord
from .gan.config import ConditionLabel

MAGIC = b"TSW1"
_HEADER = struct.Struct("<4sIIII")


@dataclass
class Corpus:
    windows: np.ndarray                      # N × T × D
    labels: np.ndarray                       # N × label_dim
    provenance: list = field(default_factory=list)
    split: list | None = None                # one subset name per record
    norm: dict | None = None                 # subset name -> NormParams
    onehot_dim: int | None = None
    synthetic: bool = False
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.windows = np.asarray(self.windows, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.windows.ndim != 3:
            raise DataError("corpus windows must be N×T×D")
        n = self.windows.shape[0]
        if self.labels.ndim != 2 or self.labels.shape[0] != n:
            raise DataError("corpus labels must be N×label_dim")
        if not self.provenance:
            self.provenance = [{"index": i} for i in range(n)]
        if len(self.provenance) != n:
            raise DataError("provenance length differs from record count")
        if self.split is not None and len(self.split) != n:
            raise DataError("split assignment length differs from record count")

    @property
    def n(self) -> int:
        return self.windows.shape[0]

    @property
    def t(self) -> int:
        return self.windows.shape[1]

    @property
    def d(self) -> int:
        return self.windows.shape[2]

    @property
    def label_dim(self) -> int:
        return self.labels.shape[1]

    @classmethod
    def from_records(cls, records: Sequence[WindowRecord], **kw) -> "Corpus":
        if not records:
            raise DataError("no records")
        windows = np.stack([r.window for r in records])
        labels = np.stack([r.label.vector() for r in records])
        onehot = records[0].label.onehot.size
        kw.setdefault("onehot_dim", onehot)
        return cls(windows, labels, [dict(r.source) for r in records], **kw)

    def subset(self, name: str) -> np.ndarray:
        """Indices of records assigned to ``name`` (all records when unsplit)."""
        if self.split is None:
            return np.arange(self.n)
        return np.array([i for i, s in enumerate(self.split) if s == name], dtype=np.intp)

    def label(self, i: int) -> ConditionLabel:
        return ConditionLabel.from_vector(self.labels[i], self.onehot_dim)

    def sidecar(self) -> dict:
        return {
            "format": "TSW1",
            "record_count": self.n,
            "t": self.t,
            "d": self.d,
            "label_dim": self.label_dim,
            "onehot_dim": self.onehot_dim,
            "synthetic": self.synthetic,
            "norm": None if self.norm is None else {k: v.to_json() for k, v in self.norm.items()},
            "split": self.split,
            "provenance": self.provenance,
            **({"extra": self.extra} if self.extra else {}),
        }


def encode(corpus: Corpus) -> bytes:
    n, t, d = corpus.windows.shape
    body = np.concatenate([corpus.labels, corpus.windows.reshape(n, t * d)], axis=1)
    return _HEADER.pack(MAGIC, n, t, d, corpus.label_dim) + body.astype("<f4").tobytes()


def _atomic_write(path: Path, data: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sidecar_path(path: str | os.PathLike) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".json")


def write_corpus(path: str | os.PathLike, corpus: Corpus):
    path = Path(path)
    blob = encode(corpus)
    meta = json.dumps(corpus.sidecar(), sort_keys=True, indent=1).encode()
    _atomic_write(path, blob)
    _atomic_write(sidecar_path(path), meta)


def read_corpus(path: str | os.PathLike) -> Corpus:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read corpus {path}: {exc}") from None
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated header")
    magic, n, t, d, ld = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 4 * n * (ld + t * d)
    if len(raw) != expected:
        raise DataError(f"{path}: expected {expected} bytes, found {len(raw)}")
    body = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).astype(np.float64).reshape(n, ld + t * d)
    labels = body[:, :ld]
    windows = body[:, ld:].reshape(n, t, d)
    meta = {}
    side = sidecar_path(path)
    if side.exists():
        try:
            meta = json.loads(side.read_text())
        except json.JSONDecodeError as exc:
            raise DataError(f"{side}: invalid JSON ({exc})") from None
    norm = meta.get("norm")
    if norm is not None:
        norm = {k: NormParams.from_json(v) for k, v in norm.items()}
    split = meta.get("split")
    if split is not None and any(s not in SPLIT_NAMES for s in split):
        raise DataError(f"{side}: unknown subset name in split")
    return Corpus(windows, labels, meta.get("provenance") or [], split, norm,
                  meta.get("onehot_dim"), bool(meta.get("synthetic", False)), meta.get("extra", {}))
