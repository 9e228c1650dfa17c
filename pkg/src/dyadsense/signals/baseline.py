"""Resting baselines and the +/-2SD three-level discretization."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

INDICATORS = ("ME_A", "ME_B", "JVA", "JME")

# minimum number of calibration windows per indicator
MIN_WINDOWS = {"ME_A": 6, "ME_B": 6, "JVA": 2, "JME": 2}


class Level(IntEnum):
    LOW = -1
    AVERAGE = 0
    HIGH = 1

    @property
    def code(self) -> str:
        return {Level.LOW: "L", Level.AVERAGE: "A", Level.HIGH: "H"}[self]

    @classmethod
    def from_code(cls, code: str) -> "Level":
        return {"L": cls.LOW, "A": cls.AVERAGE, "H": cls.HIGH}[code]


class CalibrationError(ValueError):
    """Raised when resting data is too short to calibrate an indicator."""

    def __init__(self, indicator: str, have: int, need: int):
        super().__init__(f"calibration failed for {indicator}: {have} windows, need >= {need}")
        self.indicator = indicator


@dataclass(frozen=True)
class BaselineEntry:
    mean: float
    sd: float
    n: int
    fallback: bool = False

    def __post_init__(self):
        if not self.sd > 0:
            raise ValueError(f"baseline sd must be > 0, got {self.sd}")


@dataclass(frozen=True)
class BaselineProfile:
    entries: Mapping[str, BaselineEntry] = field(default_factory=dict)

    def __getitem__(self, indicator: str) -> BaselineEntry:
        return self.entries[indicator]

    def __contains__(self, indicator: str) -> bool:
        return indicator in self.entries

    def to_dict(self) -> dict:
        return {
            k: {"mean": e.mean, "sd": e.sd, "n": e.n, "fallback": e.fallback}
            for k, e in self.entries.items()
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "BaselineProfile":
        return cls({k: BaselineEntry(float(v["mean"]), float(v["sd"]), int(v["n"]), bool(v.get("fallback", False)))
                    for k, v in data.items()})


def floored_sd(values: np.ndarray, floor_frac: float = 0.05, eps: float = 1e-6) -> float:
    mean = float(np.mean(values))
    return max(float(np.std(values)), floor_frac * abs(mean), eps)


def calibrate_baseline(
    resting: Mapping[str, Sequence[float]],
    *,
    min_windows: Mapping[str, int] = MIN_WINDOWS,
    floor_frac: float = 0.05,
    eps: float = 1e-6,
    fallbacks: Mapping[str, tuple[float, float]] | None = None,
) -> BaselineProfile:
    """Mean and (population, floored) SD per indicator over resting windows.

    ``resting`` maps indicator names to their resting window values; NaNs are
    ignored. An indicator short of ``min_windows`` raises
    :class:`CalibrationError` unless a ``(mean, sd)`` fallback is given for it.
    """
    fallbacks = fallbacks or {}
    entries = {}
    for name, raw in resting.items():
        vals = np.asarray([v for v in raw if v is not None and not math.isnan(v)], dtype=float)
        need = min_windows.get(name, 2)
        if vals.size < need:
            if name in fallbacks:
                mean, sd = fallbacks[name]
                entries[name] = BaselineEntry(float(mean), float(sd), int(vals.size), fallback=True)
                continue
            raise CalibrationError(name, int(vals.size), need)
        entries[name] = BaselineEntry(float(np.mean(vals)), floored_sd(vals, floor_frac, eps), int(vals.size))
    return BaselineProfile(entries)


def discretize_level(value: float, baseline: BaselineEntry) -> Level:
    """High above ``mean + 2sd``, Low below ``mean - 2sd``; the bounds themselves are Average."""
    if value > baseline.mean + 2.0 * baseline.sd:
        return Level.HIGH
    if value < baseline.mean - 2.0 * baseline.sd:
        return Level.LOW
    return Level.AVERAGE


class TwoSDDiscretizer(TransformerMixin, BaseEstimator):
    """Column-wise resting-baseline discretizer.

    ``fit`` on resting windows (one column per indicator) learns a floored
    mean/SD per column; ``transform`` maps values to ``Level`` codes
    (-1, 0, 1).
    """

    def __init__(self, floor_frac: float = 0.05, eps: float = 1e-6, min_samples: int = 2):
        self.floor_frac = floor_frac
        self.eps = eps
        self.min_samples = min_samples

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_samples=self.min_samples)
        self.mean_ = X.mean(axis=0)
        self.sd_ = np.array([floored_sd(col, self.floor_frac, self.eps) for col in X.T])
        self.n_features_in_ = X.shape[1]
        self.n_samples_ = X.shape[0]
        return self

    def transform(self, X):
        check_is_fitted(self, ("mean_", "sd_"))
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        hi = X > self.mean_ + 2.0 * self.sd_
        lo = X < self.mean_ - 2.0 * self.sd_
        return hi.astype(int) - lo.astype(int)

    def profile(self, names: Iterable[str]) -> BaselineProfile:
        check_is_fitted(self, ("mean_", "sd_"))
        n = int(self.n_samples_)
        return BaselineProfile({name: BaselineEntry(float(m), float(s), n)
                                for name, m, s in zip(names, self.mean_, self.sd_)})
