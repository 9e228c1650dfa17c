"""Slow, independent reference implementations used as test oracles."""

from __future__ import annotations

import itertools
import math

import numpy as np
import pywt


def naive_cosine(wa: dict, wb: dict) -> float | None:
    cells = set(wa) | set(wb)
    dot = sum(wa.get(c, 0) * wb.get(c, 0) for c in cells)
    na = math.sqrt(sum(wa.get(c, 0) ** 2 for c in cells))
    nb = math.sqrt(sum(wb.get(c, 0) ** 2 for c in cells))
    if na == 0 or nb == 0:
        return None
    return dot / (na * nb)


def circular_dwt_step(x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One analysis step by explicit circular convolution and downsampling.

    The filter is centred (offset ``L/2``), the periodization convention.
    """
    n = len(x)
    half = n // 2
    a = np.zeros(half)
    d = np.zeros(half)
    L = len(lo)
    for k in range(half):
        sa = sd = 0.0
        for j in range(L):
            v = x[(2 * k + L // 2 - j) % n]
            sa += lo[j] * v
            sd += hi[j] * v
        a[k], d[k] = sa, sd
    return a, d


def level2_detail_oracle(x: np.ndarray, wavelet: str = "sym16") -> np.ndarray:
    w = pywt.Wavelet(wavelet)
    lo, hi = np.asarray(w.dec_lo), np.asarray(w.dec_hi)
    a1, _ = circular_dwt_step(np.asarray(x, float), lo, hi)
    _, d2 = circular_dwt_step(a1, lo, hi)
    return d2


def maxima_oracle(c: np.ndarray) -> list[int]:
    """Exhaustive scan: |c_i| >= both neighbours and > at least one (edges mirror themselves)."""
    m = [abs(v) for v in c]
    out = []
    for i, v in enumerate(m):
        left = m[i - 1] if i > 0 else v
        right = m[i + 1] if i < len(m) - 1 else v
        if v >= left and v >= right and (v > left or v > right):
            out.append(i)
    return out


def ipa_oracle(x, duration_s: float, zero_rel: float = 1e-9) -> float:
    x = np.asarray(x, float)
    span = float(x.max() - x.min()) if x.size else 0.0
    if span == 0:
        return 0.0
    d = level2_detail_oracle(x - x.mean())
    d = np.array([0.0 if abs(v) <= zero_rel * span else v for v in d])
    med = sorted(d)[len(d) // 2] if len(d) % 2 else 0.5 * sum(sorted(d)[len(d) // 2 - 1: len(d) // 2 + 1])
    dev = sorted(abs(v - med) for v in d)
    mad = dev[len(dev) // 2] if len(dev) % 2 else 0.5 * (dev[len(dev) // 2 - 1] + dev[len(dev) // 2])
    lam = mad / 0.6745 * math.sqrt(2 * math.log(len(d)))
    count = sum(1 for i in maxima_oracle(d) if abs(d[i]) >= lam and d[i] != 0)
    return count / duration_s


def crqa_brute(x, y, radius: int) -> list[list[int]]:
    return [[1 if abs(a - b) <= radius else 0 for b in y] for a in x]


def best_split_brute(X: np.ndarray, r: np.ndarray, min_leaf: int):
    """Try every (feature, midpoint) pair; return the max-SSE-reduction split with tie-breaks."""
    n, d = X.shape
    total = float(np.sum((r - r.mean()) ** 2))
    best = None
    for f in range(d):
        vals = sorted(set(X[:, f].tolist()))
        for lo, hi in zip(vals[:-1], vals[1:]):
            thr = 0.5 * (lo + hi)
            left = X[:, f] <= thr
            nl, nr = int(left.sum()), int((~left).sum())
            if nl < min_leaf or nr < min_leaf:
                continue
            sse = float(np.sum((r[left] - r[left].mean()) ** 2) + np.sum((r[~left] - r[~left].mean()) ** 2))
            gain = total - sse
            if best is None or gain > best[0] + 1e-12:
                best = (gain, f, thr)
    return best


def all_sequences(max_len: int, alphabet=range(4)):
    for n in range(1, max_len + 1):
        yield from itertools.product(alphabet, repeat=n)
