"""Lagged-value features over the four indicator signals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

SIGNALS = ("JVA", "JME", "ME_A", "ME_B")
N_LAGS = 6
N_FEATURES = len(SIGNALS) * (2 * N_LAGS - 1)


def feature_names(lags: int = N_LAGS) -> list[str]:
    names = [f"{s}_lag{k}" for s in SIGNALS for k in range(lags)]
    names += [f"{s}_diff{k}" for s in SIGNALS for k in range(lags - 1)]
    return names


@dataclass
class IndicatorHistory:
    """Indicator values sampled on a fixed cadence (one row per tick).

    ``None`` marks a signal that had no defined value yet at that tick.
    """

    cadence_ms: int = 10_000
    times: list[int] = field(default_factory=list)
    values: dict[str, list[float | None]] = field(default_factory=lambda: {s: [] for s in SIGNALS})

    def append(self, t: int, row: Mapping[str, float | None]) -> None:
        if self.times and t != self.times[-1] + self.cadence_ms:
            raise ValueError(f"history rows must be {self.cadence_ms} ms apart (got {t} after {self.times[-1]})")
        self.times.append(int(t))
        for s in SIGNALS:
            v = row.get(s)
            self.values[s].append(None if v is None or (isinstance(v, float) and math.isnan(v)) else float(v))

    def __len__(self) -> int:
        return len(self.times)

    def index_of(self, t: int) -> int:
        if not self.times:
            raise KeyError(t)
        k, rem = divmod(t - self.times[0], self.cadence_ms)
        if rem or not 0 <= k < len(self.times):
            raise KeyError(t)
        return int(k)

    def value(self, signal: str, t: int) -> float | None:
        return self.values[signal][self.index_of(t)]

    def defined_count(self, signal: str, upto: int | None = None) -> int:
        vals = self.values[signal] if upto is None else self.values[signal][: upto + 1]
        return sum(v is not None for v in vals)

    def warm(self, t: int, lags: int = N_LAGS) -> bool:
        """True when every signal has ``lags`` defined values at or before ``t``."""
        k = self.index_of(t)
        return all(self.defined_count(s, k) >= lags for s in SIGNALS)


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    t: int
    filled: bool = False


def extract_features(history: IndicatorHistory, t: int | None = None, lags: int = N_LAGS) -> FeatureVector:
    """Last ``lags`` values and ``lags - 1`` first differences per signal.

    Lags run newest first; differences are ``newer - older``. Lags reaching
    before a signal's first defined value take that earliest value, and the
    vector is flagged ``filled``.
    """
    if not len(history):
        raise ValueError("no indicator history")
    t = history.times[-1] if t is None else t
    k = history.index_of(t)
    lagged = []
    filled = False
    for s in SIGNALS:
        series = history.values[s][: k + 1]
        defined = [v for v in series if v is not None]
        if not defined:
            raise ValueError(f"no history for signal {s} at or before t={t}")
        earliest = defined[0]
        row: list[float] = []
        for j in range(k - lags + 1, k + 1):
            v = series[j] if j >= 0 else None
            if v is None:
                v = row[-1] if row else earliest
                filled = True
            row.append(v)
        lagged.append(row[::-1])
    lag_part = [v for row in lagged for v in row]
    diff_part = [row[i] - row[i + 1] for row in lagged for i in range(lags - 1)]
    return FeatureVector(np.asarray(lag_part + diff_part, dtype=float), int(t), filled)


class LagFeatures(TransformerMixin, BaseEstimator):
    """Turn an :class:`IndicatorHistory` into a feature matrix, one row per tick."""

    def __init__(self, lags: int = N_LAGS):
        self.lags = lags

    def fit(self, X=None, y=None):
        return self

    def transform(self, history: IndicatorHistory, times: Iterable[int] | None = None) -> np.ndarray:
        times = history.times if times is None else list(times)
        return np.vstack([extract_features(history, t, self.lags).values for t in times])


def training_rows(
    history: IndicatorHistory,
    target: str,
    horizon_ms: int = 30_000,
    lags: int = N_LAGS,
    start: int | None = None,
) -> tuple[np.ndarray, np.ndarray, list[int]]:
    """Feature/target pairs for every warm tick whose horizon stays in the session."""
    X, y, ts = [], [], []
    last = history.times[-1] if history.times else None
    for t in history.times:
        if start is not None and t < start:
            continue
        if last is None or t + horizon_ms > last:
            break
        if not history.warm(t, lags):
            continue
        target_v = history.value(target, t + horizon_ms)
        if target_v is None:
            continue
        X.append(extract_features(history, t, lags).values)
        y.append(target_v)
        ts.append(t)
    if not X:
        return np.empty((0, len(SIGNALS) * (2 * lags - 1))), np.empty(0), []
    return np.vstack(X), np.asarray(y), ts


def persistence_predictions(history: IndicatorHistory, target: str, times: Sequence[int]) -> np.ndarray:
    """Naive forecast: the last observed value of ``target`` at each time."""
    return np.asarray([history.value(target, t) for t in times], dtype=float)
