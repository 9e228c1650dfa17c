"""Small input-validation helpers shared by the estimators and the engine."""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

PARTICIPANTS = ("A", "B")


def check_participant(pid: str) -> str:
    if pid not in PARTICIPANTS:
        raise ValueError(f"participant_id must be one of {PARTICIPANTS}, got {pid!r}")
    return pid


def check_positive(value: float, name: str, *, strict: bool = True) -> float:
    if value is None or not math.isfinite(value) or value < 0 or (strict and value == 0):
        bound = "> 0" if strict else ">= 0"
        raise ValueError(f"{name} must be finite and {bound}, got {value!r}")
    return value


def check_unit_interval(value: float, name: str, *, open_left: bool = True) -> float:
    lo_ok = value > 0 if open_left else value >= 0
    if not (math.isfinite(value) and lo_ok and value <= 1):
        raise ValueError(f"{name} must lie in {'(0' if open_left else '[0'}, 1], got {value!r}")
    return value


def check_sorted_times(times: Iterable[float], name: str = "samples") -> None:
    prev = -math.inf
    for t in times:
        if t < prev:
            raise ValueError(f"{name} must be sorted by t (found {t} after {prev})")
        prev = t


def check_1d(values: Sequence[float] | np.ndarray, name: str, *, min_len: int = 0) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size < min_len:
        raise ValueError(f"{name} needs at least {min_len} values, got {arr.size}")
    return arr
