"""Pupil preprocessing and the Index of Pupillary Activity (IPA).

IPA counts the modulus maxima of the level-2 wavelet detail coefficients that
survive a universal threshold, per second of signal. Higher values mean more
fine-grained pupil oscillation, which is read as higher mental effort.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pywt
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array

from .._validation import check_participant, check_positive

WAVELET = "sym16"
LEVEL = 2
# coefficients this far below the window's peak-to-peak range are round-off
_ZERO_REL = 1e-9


@dataclass(frozen=True, slots=True)
class PupilSample:
    participant_id: str
    t: int
    diameter: float
    valid: bool = True


@dataclass(frozen=True)
class MeWindow:
    participant_id: str
    window_start: int
    window_end: int
    ipa: float
    valid: bool = True
    stale: bool = False


@dataclass
class PupilSeries:
    """Uniformly resampled diameter series plus the spans that could not be repaired."""

    t0: float
    rate_hz: float
    values: np.ndarray
    gaps: list[tuple[float, float]] = field(default_factory=list)

    @property
    def period_ms(self) -> float:
        return 1000.0 / self.rate_hz

    @property
    def t_end(self) -> float:
        return self.t0 + len(self.values) * self.period_ms

    def index_range(self, start: float, end: float) -> tuple[int, int]:
        i0 = int(math.ceil((start - self.t0) / self.period_ms - 1e-9))
        i1 = int(math.ceil((end - self.t0) / self.period_ms - 1e-9))
        return max(i0, 0), min(i1, len(self.values))

    def covers(self, start: float, end: float) -> bool:
        i0, i1 = self.index_range(start, end)
        expected = int(round((end - start) / self.period_ms))
        return len(self.values) > 0 and i1 - i0 >= expected and start >= self.t0 - 1e-9

    def window_valid(self, start: float, end: float) -> bool:
        if not self.covers(start, end):
            return False
        return not any(g0 < end and g1 > start for g0, g1 in self.gaps)

    def window(self, start: float, end: float) -> np.ndarray:
        i0, i1 = self.index_range(start, end)
        return self.values[i0:i1]


def preprocess_pupil(
    samples: Sequence[PupilSample],
    *,
    rate_hz: float = 60.0,
    interp_cap_ms: float = 500.0,
    start: float | None = None,
    end: float | None = None,
) -> PupilSeries:
    """Repair short invalid runs and resample onto a uniform grid.

    Invalid runs (blinks, dropouts) up to ``interp_cap_ms`` long are bridged
    by linear interpolation between the flanking valid samples. Longer runs
    are still interpolated, so the grid stays uniform, but are reported in
    ``gaps`` so that overlapping windows can be voided. The run length is the
    valid-to-valid span minus one nominal sample period.
    """
    check_positive(rate_hz, "rate_hz")
    period = 1000.0 / rate_hz
    if not samples:
        t0 = 0.0 if start is None else float(start)
        return PupilSeries(t0, rate_hz, np.empty(0))

    t = np.fromiter((s.t for s in samples), dtype=float, count=len(samples))
    d = np.fromiter((s.diameter for s in samples), dtype=float, count=len(samples))
    ok = np.fromiter((s.valid and s.diameter > 0 for s in samples), dtype=bool, count=len(samples))
    if np.any(np.diff(t) < 0):
        raise ValueError("pupil samples must be sorted by t")

    lo = t[0] if start is None else float(start)
    hi = t[-1] + period if end is None else float(end)
    n = max(int(round((hi - lo) / period)), 0)
    grid = lo + period * np.arange(n)
    if not ok.any():
        return PupilSeries(lo, rate_hz, np.empty(0), [(lo, hi)])

    nominal = float(np.median(np.diff(t))) if len(t) > 1 else period
    tv, dv = t[ok], d[ok]
    values = np.interp(grid, tv, dv)

    gaps: list[tuple[float, float]] = []
    spans = np.diff(tv) - nominal
    for i in np.flatnonzero(spans > interp_cap_ms):
        gaps.append((float(tv[i]), float(tv[i + 1])))
    # leading / trailing runs have only one flank; measure against the grid edges
    if tv[0] - lo > interp_cap_ms:
        gaps.insert(0, (lo - 1.0, float(tv[0])))
    if hi - nominal - tv[-1] > interp_cap_ms:
        gaps.append((float(tv[-1]), hi + 1.0))
    return PupilSeries(lo, rate_hz, values, gaps)


def modulus_maxima(coeffs: np.ndarray) -> np.ndarray:
    """Boolean mask of local maxima of ``|coeffs|``.

    A point is a maximum when it is not smaller than either neighbour and is
    strictly larger than at least one; edges compare against themselves.
    """
    m = np.abs(np.asarray(coeffs, dtype=float))
    if m.size == 0:
        return np.zeros(0, dtype=bool)
    left = np.concatenate(([m[0]], m[:-1]))
    right = np.concatenate((m[1:], [m[-1]]))
    return (left <= m) & (m >= right) & ((m > left) | (m > right))


def universal_threshold(coeffs: np.ndarray) -> float:
    """``sigma * sqrt(2 ln n)`` with sigma estimated as MAD / 0.6745."""
    c = np.asarray(coeffs, dtype=float)
    if c.size < 2:
        return 0.0
    mad = float(np.median(np.abs(c - np.median(c))))
    return mad / 0.6745 * math.sqrt(2.0 * math.log(c.size))


def level2_detail(x: np.ndarray, wavelet: str = WAVELET) -> np.ndarray:
    coeffs = pywt.wavedec(x, wavelet, mode="periodization", level=LEVEL)
    return coeffs[1]


def ipa(x: Sequence[float] | np.ndarray, duration_s: float, wavelet: str = WAVELET) -> float:
    """IPA of one window: surviving modulus maxima per second."""
    check_positive(duration_s, "duration_s")
    x = np.asarray(x, dtype=float)
    span = float(np.ptp(x)) if x.size else 0.0
    if span == 0.0:
        return 0.0
    detail = level2_detail(x - x.mean(), wavelet)
    detail = np.where(np.abs(detail) <= _ZERO_REL * span, 0.0, detail)
    lam = universal_threshold(detail)
    keep = modulus_maxima(detail) & (np.abs(detail) >= lam) & (detail != 0.0)
    return int(keep.sum()) / duration_s


def ipa_window(
    series: PupilSeries,
    window: tuple[float, float],
    participant_id: str = "A",
    previous: MeWindow | None = None,
) -> MeWindow:
    """IPA over ``[start, end)`` of a preprocessed series.

    A window touched by an unrepairable gap (or not covered by the series)
    comes back invalid, carrying ``previous.ipa`` forward as a stale value.
    """
    check_participant(participant_id)
    start, end = window
    if not series.window_valid(start, end):
        carried = previous.ipa if previous is not None else math.nan
        return MeWindow(participant_id, int(start), int(end), carried, valid=False, stale=True)
    value = ipa(series.window(start, end), (end - start) / 1000.0)
    return MeWindow(participant_id, int(start), int(end), value)


class IpaTransformer(TransformerMixin, BaseEstimator):
    """Row-wise IPA for a matrix of equal-length, uniformly sampled windows.

    Parameters
    ----------
    rate_hz : float
        Sampling rate of every row.
    wavelet : str
        Wavelet name understood by PyWavelets.
    """

    def __init__(self, rate_hz: float = 60.0, wavelet: str = WAVELET):
        self.rate_hz = rate_hz
        self.wavelet = wavelet

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_features=4 * 2**LEVEL)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        X = check_array(X, ensure_min_features=4 * 2**LEVEL)
        duration = X.shape[1] / self.rate_hz
        return np.array([ipa(row, duration, self.wavelet) for row in X])
