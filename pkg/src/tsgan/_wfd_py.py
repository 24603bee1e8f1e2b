"""Pure numpy merged-CDF Wasserstein-2 kernels (fallback for the compiled ones)."""
import numpy as np

TIE = 1e-12


def _snap(ca, cb):
    """Move near-coincident events of the two CDFs onto their common minimum."""
    k = np.clip(np.searchsorted(ca, cb), 1, ca.size - 1)
    k = np.where(np.abs(ca[k - 1] - cb) <= np.abs(ca[k] - cb), k - 1, k)
    hit = np.abs(ca[k] - cb) <= TIE
    low = np.minimum(ca[k], cb)
    ca, cb = ca.copy(), cb.copy()
    ca[k[hit]] = low[hit]
    cb[hit] = low[hit]
    return np.maximum.accumulate(ca), np.maximum.accumulate(cb)


def w2(a, b, x) -> float:
    ca, cb = np.cumsum(a), np.cumsum(b)
    if ca.size > 1:
        # fixed argument order keeps the result exactly symmetric
        if ca.tobytes() <= cb.tobytes():
            ca, cb = _snap(ca, cb)
        else:
            cb, ca = _snap(cb, ca)
    n = ca.size
    u = np.sort(np.concatenate([ca, cb]))
    u = u[u <= min(ca[-1], cb[-1])]
    du = np.diff(u, prepend=0.0)
    ia = np.minimum(np.searchsorted(ca, u, side="left"), n - 1)
    ib = np.minimum(np.searchsorted(cb, u, side="left"), n - 1)
    d = x[ia] - x[ib]
    return float(np.sqrt(np.sum(du * d * d)))


def w2_rows(a, b, x) -> np.ndarray:
    return np.array([w2(a[r], b[r], x) for r in range(a.shape[0])])


def w2_cross(a, b, x) -> np.ndarray:
    out = np.empty((a.shape[0], b.shape[0]))
    for r in range(a.shape[0]):
        for s in range(b.shape[0]):
            out[r, s] = w2(a[r], b[s], x)
    return out
