"""Artificial compound-sine corpus and run-to-failure accelerometer ingestion."""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .gan.config import ConditionLabel


class DataError(ValueError):
    """Malformed input data or an impossible data request."""


@dataclass
class WindowRecord:
    window: np.ndarray          # T × D
    label: ConditionLabel
    source: dict = field(default_factory=dict)


# ------------------------------------------------------------ artificial data

@dataclass(frozen=True)
class ArtificialClassSpec:
    """Ranges are inclusive.  Frequencies are integer cycles per window."""

    name: str
    n_components: tuple[int, int]
    freq_range: tuple[int, int]
    amp_range: tuple[float, float]
    phase_range: tuple[float, float]

    def validate(self):
        for field_name in ("n_components", "freq_range", "amp_range", "phase_range"):
            lo, hi = getattr(self, field_name)
            if lo > hi:
                raise DataError(f"{self.name}.{field_name}: lower bound above upper bound")
        if self.n_components[0] < 1:
            raise DataError(f"{self.name}: needs at least one component")
        if self.freq_range[0] < 1:
            raise DataError(f"{self.name}: frequencies must be >= 1 cycle per window")
        if self.amp_range[0] <= 0:
            raise DataError(f"{self.name}: amplitudes must be positive")
        return self


TWO_PI = 2.0 * math.pi

DEFAULT_CLASSES = (
    ArtificialClassSpec("easy", (1, 1), (1, 4), (0.75, 1.0), (0.0, TWO_PI / 3)),
    ArtificialClassSpec("medium", (2, 3), (6, 12), (0.4, 0.7), (TWO_PI / 3, 2 * TWO_PI / 3)),
    ArtificialClassSpec("hard", (4, 6), (14, 24), (0.1, 0.35), (2 * TWO_PI / 3, TWO_PI)),
)


def _overlap(r1, r2) -> bool:
    return not (r1[1] < r2[0] or r2[1] < r1[0])


def check_disjoint(specs: Sequence[ArtificialClassSpec]):
    """Raise unless every field range is pairwise disjoint across classes.

    Phase ranges may share an endpoint since the draw is half-open.
    """
    for i, a in enumerate(specs):
        for b in specs[i + 1:]:
            for f in ("n_components", "freq_range", "amp_range"):
                if _overlap(getattr(a, f), getattr(b, f)):
                    raise DataError(f"classes {a.name} and {b.name} overlap in {f}")
            pa, pb = a.phase_range, b.phase_range
            if pa[0] < pb[1] and pb[0] < pa[1]:
                raise DataError(f"classes {a.name} and {b.name} overlap in phase_range")


def _gen_batch(spec: ArtificialClassSpec, n: int, t: int, d: int, rng: np.random.Generator) -> np.ndarray:
    spec.validate()
    if t < 8:
        raise DataError(f"window length {t} < 8")
    lo, hi = spec.n_components
    m = rng.integers(lo, hi + 1, size=(n, d))
    freq = rng.integers(spec.freq_range[0], spec.freq_range[1] + 1, size=(n, d, hi))
    amp = rng.uniform(*spec.amp_range, size=(n, d, hi))
    phase = rng.uniform(*spec.phase_range, size=(n, d, hi))
    amp = np.where(np.arange(hi)[None, None, :] < m[..., None], amp, 0.0)
    steps = np.arange(t) / t
    out = np.empty((n, t, d))
    chunk = max(1, 262144 // (t * d * hi))
    for s in range(0, n, chunk):
        e = min(n, s + chunk)
        arg = TWO_PI * freq[s:e, None] * steps[None, :, None, None] + phase[s:e, None]
        out[s:e] = np.sum(amp[s:e, None] * np.sin(arg), axis=-1)
    return out


def gen_compound_wave(spec: ArtificialClassSpec, t: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """One t×d window; each channel sums a random number of sinusoids."""
    return _gen_batch(spec, 1, t, d, rng)[0]


def gen_artificial_dataset(n_total: int, t: int, d: int,
                           specs: Sequence[ArtificialClassSpec] = DEFAULT_CLASSES,
                           seed: int = 0, strict: bool = False) -> list[WindowRecord]:
    """Class-major corpus with one-hot labels and no lifetime.

    When ``n_total`` is not a multiple of the class count the first
    ``n_total % k`` classes get one extra window; ``strict`` rejects that case.
    """
    k = len(specs)
    if n_total < k:
        raise DataError(f"n_total {n_total} is smaller than the {k} classes")
    if strict and n_total % k:
        raise DataError(f"n_total {n_total} is not a multiple of {k} classes")
    check_disjoint(specs)
    rng = np.random.default_rng(seed)
    base, extra = divmod(n_total, k)
    records = []
    for ci, spec in enumerate(specs):
        label = ConditionLabel.from_class(ci, k)
        per = base + (ci < extra)
        batch = _gen_batch(spec, per, t, d, rng)
        for j in range(per):
            records.append(WindowRecord(batch[j], label, {"class": spec.name, "index": j}))
    return records


# ------------------------------------------------------------------ ingestion

def _sniff_delimiter(line: str) -> str:
    return ";" if ";" in line and "," not in line else ","


def ingest_accel_csv(files: Sequence[str | os.PathLike], columns: Sequence[int] = (4, 5)) -> np.ndarray:
    """Concatenate the selected numeric columns of time-ordered CSV files.

    Returns a ``len(columns) × N`` array.  Any malformed row raises
    :class:`DataError` naming the file and line.
    """
    cols = list(columns)
    if not cols:
        raise DataError("no channel columns selected")
    chunks = []
    for f in files:
        path = Path(f)
        with open(path, newline="") as fh:
            first = fh.readline()
            fh.seek(0)
            reader = csv.reader(fh, delimiter=_sniff_delimiter(first))
            rows = []
            for lineno, row in enumerate(reader, start=1):
                if not row or all(not c.strip() for c in row):
                    continue
                try:
                    rows.append([float(row[c]) for c in cols])
                except IndexError:
                    raise DataError(f"{path}:{lineno}: expected column {max(cols)}, row has {len(row)} fields") from None
                except ValueError:
                    raise DataError(f"{path}:{lineno}: non-numeric channel value") from None
        if rows:
            chunks.append(np.asarray(rows, dtype=np.float64))
    if not chunks:
        raise DataError("run contains no samples")
    series = np.concatenate(chunks, axis=0).T
    if not np.all(np.isfinite(series)):
        raise DataError("run contains non-finite samples")
    return series


def discover_runs(directory: str | os.PathLike) -> dict[str, list[Path]]:
    """Map run name → sorted CSV files.

    Subdirectories are runs; when there are none, each CSV file is a run.
    """
    root = Path(directory)
    if not root.is_dir():
        raise DataError(f"{root} is not a directory")
    subdirs = sorted(p for p in root.iterdir() if p.is_dir())
    runs = {}
    if subdirs:
        for sd in subdirs:
            files = sorted(sd.glob("*.csv"))
            if files:
                runs[sd.name] = files
    else:
        for f in sorted(root.glob("*.csv")):
            runs[f.stem] = [f]
    if not runs:
        raise DataError(f"no CSV runs found under {root}")
    return runs


def is_pow2(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


def window_series(series: np.ndarray, t: int, run_onehot, stride: int | None = None,
                  run_id: str = "") -> list[WindowRecord]:
    """Tile a D×N series into T×D windows labelled with run identity and lifetime.

    Lifetime is ``start / (N - t)`` (0 when ``N == t``).
    """
    if not is_pow2(t):
        raise DataError(f"window length {t} is not a power of two")
    stride = t if stride is None else stride
    if stride < 1:
        raise DataError("stride must be >= 1")
    series = np.asarray(series, dtype=np.float64)
    n = series.shape[1]
    if n < t:
        raise DataError(f"series of length {n} shorter than window {t}")
    onehot = np.asarray(run_onehot, dtype=np.float64)
    span = n - t
    out = []
    for start in range(0, span + 1, stride):
        life = 0.0 if span == 0 else min(1.0, max(0.0, start / span))
        out.append(WindowRecord(series[:, start:start + t].T.copy(), ConditionLabel(onehot, life),
                                {"run": run_id, "start": start}))
    return out


# ----------------------------------------------------------- split and scale

SPLIT_NAMES = ("test", "train", "validate")


def split_indices(n: int, fractions=(0.20, 0.70, 0.10), seed: int = 0) -> dict[str, np.ndarray]:
    """Seeded shuffle then contiguous test/train/validate blocks.

    Test and validate sizes are rounded half-up; the remainder goes to train,
    which keeps every subset within one record of its exact share.
    """
    if n < 3:
        raise DataError(f"cannot split {n} records three ways")
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise DataError("fractions must be three non-negative values summing to 1")
    perm = np.random.default_rng(seed).permutation(n)
    n_test = int(math.floor(fractions[0] * n + 0.5))
    n_val = int(math.floor(fractions[2] * n + 0.5))
    n_train = n - n_test - n_val
    return {
        "test": perm[:n_test],
        "train": perm[n_test:n_test + n_train],
        "validate": perm[n_test + n_train:],
    }


def split_dataset(records: Sequence, fractions=(0.20, 0.70, 0.10), seed: int = 0):
    """Return ``(test, train, validate)`` lists."""
    idx = split_indices(len(records), fractions, seed)
    return tuple([records[i] for i in idx[name]] for name in SPLIT_NAMES)


@dataclass
class NormParams:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if np.any(self.std <= 0):
            raise DataError("normalization std must be positive")

    @classmethod
    def identity(cls, d: int) -> "NormParams":
        return cls(np.zeros(d), np.ones(d))

    def apply(self, windows) -> np.ndarray:
        return (np.asarray(windows, dtype=np.float64) - self.mean) / self.std

    def invert(self, windows) -> np.ndarray:
        return np.asarray(windows, dtype=np.float64) * self.std + self.mean

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_json(cls, obj) -> "NormParams":
        return cls(obj["mean"], obj["std"])


def _stack(subset) -> np.ndarray:
    if isinstance(subset, np.ndarray):
        return subset
    return np.stack([r.window if isinstance(r, WindowRecord) else r for r in subset])


def fit_norm(subset) -> NormParams:
    """Per-channel z-score parameters from this subset only."""
    w = _stack(subset) if len(subset) else None
    if w is None or w.size == 0:
        raise DataError("cannot fit normalization on an empty subset")
    flat = w.reshape(-1, w.shape[-1])
    std = flat.std(axis=0)
    if np.any(std <= 0):
        raise DataError("a channel has zero variance")
    return NormParams(flat.mean(axis=0), std)


def apply_norm(window, params: NormParams) -> np.ndarray:
    return params.apply(window)


def invert_norm(window, params: NormParams) -> np.ndarray:
    return params.invert(window)
