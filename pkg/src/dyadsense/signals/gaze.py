"""Gaze samples, the document-anchored grid and joint visual attention (JVA).

Gaze points are mapped to cells of a grid laid over the *document* rather than
the screen: rows are code lines, columns are equal-width horizontal bands of
the code pane. Scrolling therefore never moves a fixation to a different cell.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .._validation import check_participant, check_positive

Cell = tuple[int, int]


@dataclass(frozen=True, slots=True)
class GazeSample:
    participant_id: str
    t: int
    line: int
    col_band: int
    valid: bool = True


@dataclass(frozen=True)
class Viewport:
    """Geometry of the code pane at the moment a gaze point was recorded.

    ``scroll_offset`` is the number of pixels by which the first visible line
    is scrolled up out of view (sub-line scrolling).
    """

    first_visible_line: int
    line_height: float
    pane_left: float
    pane_top: float
    pane_width: float
    pane_height: float
    scroll_offset: float = 0.0

    def __post_init__(self):
        if self.first_visible_line < 0:
            raise ValueError("first_visible_line must be >= 0")
        check_positive(self.line_height, "line_height")
        check_positive(self.pane_width, "pane_width")
        check_positive(self.pane_height, "pane_height")


def map_gaze_to_grid(raw_x: float, raw_y: float, viewport: Viewport, n_bands: int = 4) -> Cell | None:
    """Map a screen-space gaze point to a document-anchored ``(line, col_band)``.

    Returns ``None`` (the off-pane marker) when the point falls outside the
    code pane or above the first line of the document.
    """
    dx = raw_x - viewport.pane_left
    dy = raw_y - viewport.pane_top
    if not (0 <= dx < viewport.pane_width and 0 <= dy < viewport.pane_height):
        return None
    line = viewport.first_visible_line + math.floor((dy + viewport.scroll_offset) / viewport.line_height)
    if line < 0:
        return None
    band = min(int(math.floor(dx / viewport.pane_width * n_bands)), n_bands - 1)
    return line, band


@dataclass(frozen=True)
class GazeDistribution:
    window_start: int
    window_end: int
    weights: Mapping[Cell, int] = field(default_factory=dict)

    @property
    def empty(self) -> bool:
        return not self.weights

    @property
    def total(self) -> int:
        return sum(self.weights.values())


def build_gaze_distribution(
    samples: Iterable[GazeSample], window: tuple[int, int], n_bands: int = 4
) -> GazeDistribution:
    """Histogram of valid in-window samples over grid cells.

    The window is half-open, ``[start, end)``. Invalid samples and samples
    whose cell is outside the grid are dropped.
    """
    start, end = window
    counts: Counter[Cell] = Counter()
    for s in samples:
        if s.valid and start <= s.t < end and s.line >= 0 and 0 <= s.col_band < n_bands:
            counts[(s.line, s.col_band)] += 1
    return GazeDistribution(start, end, dict(counts))


def jva_cosine(dist_a: GazeDistribution, dist_b: GazeDistribution) -> float | None:
    """Cosine similarity of two gaze histograms over the union of their cells.

    Returns ``None`` when either side is empty; the caller decides how to
    carry the previous value forward.
    """
    if dist_a.empty or dist_b.empty:
        return None
    wa, wb = dist_a.weights, dist_b.weights
    if len(wb) < len(wa):
        wa, wb = wb, wa
    dot = float(sum(w * wb.get(cell, 0) for cell, w in wa.items()))
    na = math.sqrt(sum(float(w) * w for w in dist_a.weights.values()))
    nb = math.sqrt(sum(float(w) * w for w in dist_b.weights.values()))
    return min(1.0, dot / (na * nb))


def validate_gaze_sample(s: GazeSample, n_bands: int = 4) -> GazeSample:
    check_participant(s.participant_id)
    if s.valid and (s.line < 0 or not 0 <= s.col_band < n_bands):
        raise ValueError(f"gaze cell out of range: line={s.line}, col_band={s.col_band}")
    return s
