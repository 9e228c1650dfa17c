"""Joint mental effort (JME) via cross-recurrence of discretized effort sequences."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._validation import check_participant
from .signals.baseline import BaselineEntry

N_BINS = 10
Z_CLIP = 2.5


@dataclass(frozen=True)
class EffortSequence:
    participant_id: str
    values: tuple[int, ...]
    timestamps: tuple[int, ...] = ()

    def __post_init__(self):
        check_participant(self.participant_id)
        if any(not 0 <= v < N_BINS for v in self.values):
            raise ValueError(f"effort bins must lie in [0, {N_BINS - 1}]")
        if self.timestamps and len(self.timestamps) != len(self.values):
            raise ValueError("timestamps and values differ in length")

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class CrossRecurrenceResult:
    window_start: int
    window_end: int
    recurrence_rate: float
    n: int

    @property
    def matrix_size(self) -> int:
        return self.n * self.n


def effort_bin(value: float, baseline: BaselineEntry, n_bins: int = N_BINS, z_clip: float = Z_CLIP) -> int:
    z = (value - baseline.mean) / baseline.sd
    z = min(max(z, -z_clip), z_clip)
    b = math.floor((z + z_clip) * n_bins / (2.0 * z_clip))
    return min(max(b, 0), n_bins - 1)


def discretize_me_sequence(
    ipa_values: Sequence[float],
    baseline: BaselineEntry,
    participant_id: str = "A",
    timestamps: Sequence[int] = (),
    n_bins: int = N_BINS,
    z_clip: float = Z_CLIP,
) -> EffortSequence:
    """Map IPA values to integer effort bins via the clipped baseline z-score."""
    bins = tuple(effort_bin(v, baseline, n_bins, z_clip) for v in ipa_values)
    return EffortSequence(participant_id, bins, tuple(int(t) for t in timestamps))


def _as_array(seq: EffortSequence | Sequence[int]) -> np.ndarray:
    vals = seq.values if isinstance(seq, EffortSequence) else seq
    return np.asarray(vals, dtype=np.int64)


def cross_recurrence_matrix(x, y, radius: int = 1) -> np.ndarray:
    """``R[i, j] = 1`` iff ``|x_i - y_j| <= radius``.

    Plain arrays may carry leading batch dimensions, which broadcast: shapes
    ``(..., N)`` give ``(..., N, N)``.
    """
    xa, ya = _as_array(x), _as_array(y)
    if xa.ndim == 0 or ya.ndim == 0:
        raise ValueError("sequences must be at least one-dimensional")
    if xa.shape[-1] != ya.shape[-1]:
        raise ValueError(f"sequence lengths differ: {xa.shape[-1]} != {ya.shape[-1]}")
    if xa.shape[-1] < 2:
        raise ValueError("cross-recurrence needs sequences of length >= 2")
    if radius < 0:
        raise ValueError("radius must be >= 0")
    return (np.abs(xa[..., :, None] - ya[..., None, :]) <= radius).astype(np.uint8)


def recurrence_rate(matrix: np.ndarray) -> float:
    m = np.asarray(matrix)
    return float(m.sum()) / m.size


def jme_window(x: EffortSequence, y: EffortSequence, radius: int = 1) -> CrossRecurrenceResult:
    rr = recurrence_rate(cross_recurrence_matrix(x, y, radius))
    ts = x.timestamps or (0,)
    return CrossRecurrenceResult(int(ts[0]), int(ts[-1]), rr, len(x))
