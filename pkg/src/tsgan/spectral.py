"""Wasserstein-Fourier distance between normalized power spectra.

Spectra live on the one-sided grid ``k/T`` (cycles per sample).  The distance
between two windows is the mean over channels of the exact 1-D
Wasserstein-2 distance between the channels' normalized spectra.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from . import kernels


class SpectralError(ValueError):
    """Spectrum without finite positive power, or mismatched grids."""


def freq_grid(t: int) -> np.ndarray:
    return np.arange(t // 2 + 1) / t


def periodogram(signal, remove_mean: bool = True) -> np.ndarray:
    """One-sided ``|X_k|**2`` along the last axis, interior bins doubled."""
    x = np.asarray(signal, dtype=np.float64)
    t = x.shape[-1]
    if t < 2:
        raise SpectralError(f"periodogram needs at least 2 samples, got {t}")
    if remove_mean:
        x = x - x.mean(axis=-1, keepdims=True)
    spec = np.fft.rfft(x, axis=-1)
    p = spec.real ** 2 + spec.imag ** 2
    # the Nyquist bin has no mirror when T is even
    stop = p.shape[-1] - 1 if t % 2 == 0 else p.shape[-1]
    p[..., 1:stop] *= 2.0
    if remove_mean:
        p[..., 0] = 0.0  # rounding residue of the removed mean
    return p


@dataclass(frozen=True)
class NPSD:
    freqs: np.ndarray
    mass: np.ndarray

    def __post_init__(self):
        if self.freqs.shape != self.mass.shape:
            raise SpectralError("frequency grid and mass differ in length")


def normalize_psd(psd, t: int | None = None) -> NPSD:
    """Divide by total power.  ``t`` defaults to the even length ``2*(len-1)``."""
    psd = np.asarray(psd, dtype=np.float64)
    total = psd.sum()
    if not np.isfinite(total) or total <= 0:
        raise SpectralError("spectrum has no finite positive power")
    t = 2 * (psd.size - 1) if t is None else t
    if t // 2 + 1 != psd.size:
        raise SpectralError(f"spectrum of length {psd.size} does not match T={t}")
    return NPSD(freq_grid(t), psd / total)


def npsd(signal, remove_mean: bool = True) -> NPSD:
    x = np.asarray(signal, dtype=np.float64)
    return normalize_psd(periodogram(x, remove_mean), x.shape[-1])


def _normalize_rows(p: np.ndarray) -> np.ndarray:
    total = p.sum(axis=-1, keepdims=True)
    if not np.all(np.isfinite(total)) or np.any(total <= 0):
        raise SpectralError("a channel has no finite positive power")
    return p / total


def _same_grid(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape or not np.array_equal(a, b):
        raise SpectralError("spectra are on different frequency grids")


def wasserstein2_1d(a: NPSD, b: NPSD) -> float:
    """Exact W2 between two spectra via their merged cumulative masses."""
    _same_grid(a.freqs, b.freqs)
    return kernels.w2(a.mass, b.mass, a.freqs)


class NPSDSet:
    """Spectra sharing one grid, stored as an ``n × bins`` mass matrix."""

    def __init__(self, freqs: np.ndarray, masses: np.ndarray):
        masses = np.atleast_2d(np.asarray(masses, dtype=np.float64))
        if masses.shape[0] < 1:
            raise SpectralError("an NPSD set needs at least one member")
        if masses.shape[1] != freqs.size:
            raise SpectralError("member length differs from the grid")
        self.freqs = np.asarray(freqs, dtype=np.float64)
        self.masses = np.ascontiguousarray(masses)

    @classmethod
    def from_members(cls, members: Sequence[NPSD]) -> "NPSDSet":
        if not members:
            raise SpectralError("an NPSD set needs at least one member")
        for m in members[1:]:
            _same_grid(members[0].freqs, m.freqs)
        return cls(members[0].freqs, np.stack([m.mass for m in members]))

    @classmethod
    def from_signals(cls, signals, remove_mean: bool = True) -> "NPSDSet":
        """Signals as an ``n × T`` array."""
        x = np.atleast_2d(np.asarray(signals, dtype=np.float64))
        return cls(freq_grid(x.shape[-1]), _normalize_rows(periodogram(x, remove_mean)))

    @property
    def n(self) -> int:
        return self.masses.shape[0]

    def __len__(self):
        return self.n

    def __iter__(self) -> Iterator[NPSD]:
        for row in self.masses:
            yield NPSD(self.freqs, row)

    def __getitem__(self, i) -> NPSD:
        return NPSD(self.freqs, self.masses[i])


def channel_sets(windows, remove_mean: bool = True) -> list[NPSDSet]:
    """One :class:`NPSDSet` per channel of an ``n × T × D`` window batch."""
    w = np.asarray(windows, dtype=np.float64)
    if w.ndim == 2:
        w = w[None]
    return [NPSDSet.from_signals(w[:, :, c], remove_mean) for c in range(w.shape[2])]


def segment_distance(seg_a, seg_b, remove_mean: bool = True) -> float:
    """Mean over channels of the per-channel spectral W2 of two T×D windows.

    This averages 1-D distances; it is not a multi-dimensional transport
    distance.
    """
    a = np.asarray(seg_a, dtype=np.float64)
    b = np.asarray(seg_b, dtype=np.float64)
    if a.ndim == 1:
        a, b = a[:, None], b[:, None]
    if a.shape != b.shape:
        raise SpectralError(f"segment shapes differ: {a.shape} vs {b.shape}")
    t = a.shape[0]
    pa = _normalize_rows(periodogram(a.T, remove_mean))
    pb = _normalize_rows(periodogram(b.T, remove_mean))
    return float(np.mean(kernels.w2_rows(pa, pb, freq_grid(t))))


def mean_npsd(s: NPSDSet) -> NPSD:
    if s.n < 1:
        raise SpectralError("mean of an empty set")
    return NPSD(s.freqs, s.masses.mean(axis=0))


def distances_to(s: NPSDSet, ref: NPSD) -> np.ndarray:
    _same_grid(s.freqs, ref.freqs)
    refs = np.ascontiguousarray(np.broadcast_to(ref.mass, s.masses.shape))
    return kernels.w2_rows(s.masses, refs, s.freqs)


def standard_distance(s: NPSDSet) -> float:
    """Mean W2 from each member to the set's mean spectrum."""
    return float(np.mean(distances_to(s, mean_npsd(s))))


@dataclass
class SetReport:
    intra_a: float
    intra_b: float
    inter: float
    pairwise_mean: float
    grid: np.ndarray
    mean_a: np.ndarray
    mean_b: np.ndarray

    def to_json(self) -> dict:
        return {
            "intra_a": self.intra_a,
            "intra_b": self.intra_b,
            "inter": self.inter,
            "pairwise_mean": self.pairwise_mean,
            "grid": self.grid.tolist(),
            "mean_a": self.mean_a.tolist(),
            "mean_b": self.mean_b.tolist(),
        }


def set_report(a: NPSDSet, b: NPSDSet, max_pairs: int | None = 1_000_000, seed: int = 0) -> SetReport:
    """Intra-set spreads, distance between set means, and mean cross-pair distance.

    When ``n_a * n_b`` exceeds ``max_pairs`` the cross-pair mean is estimated
    from ``max_pairs`` pairs drawn with a seeded generator.
    """
    _same_grid(a.freqs, b.freqs)
    ma, mb = mean_npsd(a), mean_npsd(b)
    if max_pairs is None or a.n * b.n <= max_pairs:
        pairwise = float(np.mean(kernels.w2_cross(a.masses, b.masses, a.freqs)))
    else:
        rng = np.random.default_rng(seed)
        ia = rng.integers(0, a.n, size=max_pairs)
        ib = rng.integers(0, b.n, size=max_pairs)
        pairwise = float(np.mean(kernels.w2_rows(a.masses[ia], b.masses[ib], a.freqs)))
    return SetReport(
        intra_a=standard_distance(a),
        intra_b=standard_distance(b),
        inter=wasserstein2_1d(ma, mb),
        pairwise_mean=pairwise,
        grid=a.freqs,
        mean_a=ma.mass,
        mean_b=mb.mass,
    )
