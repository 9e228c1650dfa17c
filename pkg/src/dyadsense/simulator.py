"""Synthetic dyad sensor streams with known collaboration regimes.

Pupil traces are a slow drift plus white noise plus narrow Gaussian bumps;
IPA follows the bump rate, so a regime sets mental effort by setting the
number of bumps per 10 s window. Gaze fixations scatter around a shared
random-walk line; regimes move participant B's walk away to lower JVA.

A scenario starts with a resting calibration prelude whose bump counts are
deliberately varied, so the baselines have the spread a real resting period
would give.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .records import Annotation, RawInput
from .signals.gaze import GazeSample
from .signals.pupil import PupilSample

REGIMES = ("rest", "aligned", "attention_drift", "effort_imbalance", "dual_overload", "disengaged")

WINDOW_MS = 10_000
BASE_RATE = 1.0
HIGH_RATE = 3.0
REST_MULTIPLIERS = (0.5, 0.7, 0.9, 1.1, 1.3, 1.5)
N_LINES = 200
GAZE_HZ = 30.0
PUPIL_HZ = 60.0

# expected (ME_A, ME_B, JVA, JME); effort_imbalance flips with the overloaded side
EXPECTED = {
    "rest": "AAAA",
    "aligned": "AAHH",
    "attention_drift": "AALH",
    "effort_imbalance": "HLHL",
    "dual_overload": "HHHH",
    "disengaged": "LLHH",
}


@dataclass(frozen=True)
class Segment:
    regime: str
    duration_s: float

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if not self.duration_s > 0:
            raise ValueError(f"segment {self.regime!r} must have positive length, got {self.duration_s}")


@dataclass(frozen=True)
class ScenarioSpec:
    segments: tuple[Segment, ...]
    seed: int = 0
    calibration_s: float = 180.0
    pupil_noise_mm: float = 0.005
    gaze_noise_lines: float = 1.2
    overloaded: str = "A"
    annotations: bool = True
    ramp_s: float = 40.0

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(
            s if isinstance(s, Segment) else Segment(*s) for s in self.segments))
        if not self.segments:
            raise ValueError("scenario needs at least one segment")
        if self.calibration_s < 0:
            raise ValueError("calibration_s must be >= 0")
        if self.overloaded not in ("A", "B"):
            raise ValueError("overloaded must be 'A' or 'B'")
        if self.ramp_s < 0:
            raise ValueError("ramp_s must be >= 0")
        if self.pupil_noise_mm < 0 or self.gaze_noise_lines <= 0:
            raise ValueError("noise amplitudes must be non-negative (gaze > 0)")

    @property
    def duration_s(self) -> float:
        """Length of the scored part (the segments), excluding calibration."""
        return float(sum(s.duration_s for s in self.segments))

    @property
    def total_ms(self) -> int:
        return int(round((self.calibration_s + self.duration_s) * 1000))

    def timeline(self) -> list[tuple[int, int, str]]:
        """``(start_ms, end_ms, regime)`` for the prelude and every segment."""
        out, t = [], 0
        if self.calibration_s > 0:
            t = int(round(self.calibration_s * 1000))
            out.append((0, t, "rest"))
        for seg in self.segments:
            end = t + int(round(seg.duration_s * 1000))
            out.append((t, end, seg.regime))
            t = end
        return out

    def expected_levels(self, regime: str) -> str:
        code = EXPECTED[regime]
        if regime == "effort_imbalance" and self.overloaded == "B":
            code = "LH" + code[2:]
        return code


@dataclass
class SimulatedSession:
    spec: ScenarioSpec
    gaze: dict[str, list[GazeSample]]
    pupil: dict[str, list[PupilSample]]
    annotations: list[Annotation]
    truth: list[dict] = field(default_factory=list)

    def messages(self) -> list[RawInput]:
        """All inputs merged by time (ties: annotations, gaze, pupil; then A before B)."""
        rank = {Annotation: 0, GazeSample: 1, PupilSample: 2}
        items: list[RawInput] = list(self.annotations)
        for p in ("A", "B"):
            items += self.gaze[p] + self.pupil[p]
        return sorted(items, key=lambda m: (m.t, rank[type(m)], getattr(m, "participant_id", "")))


def _rng_streams(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed & (2**64 - 1)).spawn(n)]


def _regime_at(timeline, t_ms: float) -> str:
    for start, end, regime in timeline:
        if start <= t_ms < end:
            return regime
    return timeline[-1][2]


def _bump_rate(regime: str, participant: str, spec: ScenarioSpec) -> float:
    if regime == "dual_overload":
        return HIGH_RATE
    if regime == "disengaged":
        return 0.0
    if regime == "effort_imbalance":
        return HIGH_RATE if participant == spec.overloaded else 0.0
    return BASE_RATE


def _bump_times(spec: ScenarioSpec, participant: str, rng: np.random.Generator) -> np.ndarray:
    """Bump centres: a fixed count per window piece, uniformly placed.

    After a regime change the rate moves linearly from the old regime's rate
    to the new one over ``ramp_s``, so effort builds up rather than jumps.
    """
    timeline = spec.timeline()
    ramp_ms = spec.ramp_s * 1000.0
    cuts = sorted({0, spec.total_ms} | {s for s, _, _ in timeline}
                  | set(range(0, spec.total_ms, WINDOW_MS)))
    cycle: list[float] = []
    mult_by_window: dict[int, float] = {}
    out = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        k_seg = next(i for i, (s, e, _) in enumerate(timeline) if s <= lo < e)
        seg_start, _, regime = timeline[k_seg]
        rate = _bump_rate(regime, participant, spec)
        if regime == "rest":
            w = lo // WINDOW_MS
            if w not in mult_by_window:
                if not cycle:
                    cycle = list(rng.permutation(REST_MULTIPLIERS))
                mult_by_window[w] = cycle.pop()
            rate *= mult_by_window[w]
        elif k_seg > 0 and ramp_ms > 0:
            prev = _bump_rate(timeline[k_seg - 1][2], participant, spec)
            frac = min(1.0, (0.5 * (lo + hi) - seg_start) / ramp_ms)
            rate = prev + (rate - prev) * frac
        k = int(round(rate * (hi - lo) / 1000.0))
        out.append(rng.uniform(lo, hi, k))
    return np.sort(np.concatenate(out)) if out else np.empty(0)


def _blink_mask(t: np.ndarray, rng: np.random.Generator, total_ms: int) -> np.ndarray:
    n = rng.poisson(0.1 * total_ms / 1000.0)
    starts = rng.uniform(0, total_ms, n)
    lengths = rng.uniform(100, 300, n)
    mask = np.zeros(t.shape, dtype=bool)
    for s, ln in zip(starts, lengths):
        mask |= (t >= s) & (t < s + ln)
    return mask


def _pupil_stream(spec: ScenarioSpec, participant: str, rng: np.random.Generator,
                  blinks: np.ndarray) -> list[PupilSample]:
    n = int(spec.total_ms * PUPIL_HZ / 1000.0)
    t = np.round(np.arange(n) * 1000.0 / PUPIL_HZ).astype(np.int64)
    base = 3.5 if participant == "A" else 3.8
    phase = rng.uniform(0, 2 * math.pi)
    x = base + 0.05 * np.sin(2 * math.pi * t / 40_000.0 + phase)
    regimes = np.array([_regime_at(spec.timeline(), v) for v in t[:: int(PUPIL_HZ)]])
    noise_scale = np.repeat(np.where(regimes == "disengaged", 0.5, 1.0), int(PUPIL_HZ))[:n]
    x = x + rng.normal(0.0, spec.pupil_noise_mm, n) * noise_scale
    for c in _bump_times(spec, participant, rng):
        k = int(c * PUPIL_HZ / 1000.0)
        lo, hi = max(k - 3, 0), min(k + 4, n)
        x[lo:hi] += 0.2 * np.exp(-0.5 * ((t[lo:hi] - c) / 8.0) ** 2)
    invalid = blinks
    return [PupilSample(participant, int(ti), float(round(xi, 6)) if ok else 0.0, bool(ok))
            for ti, xi, ok in zip(t, x, ~invalid)]


def _gaze_params(regime: str, spec: ScenarioSpec) -> tuple[float, float]:
    """(offset of B in lines, fixation scatter in lines)."""
    if regime == "rest":
        return 5.0, 2.5 * spec.gaze_noise_lines
    if regime == "attention_drift":
        return 15.0, spec.gaze_noise_lines
    return 0.0, spec.gaze_noise_lines


def _gaze_streams(spec: ScenarioSpec, rng: np.random.Generator,
                  blinks: dict[str, np.ndarray]) -> dict[str, list[GazeSample]]:
    n = int(spec.total_ms * GAZE_HZ / 1000.0)
    t = np.round(np.arange(n) * 1000.0 / GAZE_HZ).astype(np.int64)
    # shared wandering centre, reflected into the document
    steps = rng.normal(0.0, 0.15, n)
    centre = np.empty(n)
    c = N_LINES / 2
    for i in range(n):
        c += steps[i]
        if c < 20 or c > N_LINES - 40:
            c -= 2 * steps[i]
        centre[i] = c
    focus = np.empty(n, dtype=np.int64)
    band = int(rng.integers(0, 4))
    for i in range(n):
        if i % int(GAZE_HZ * 5) == 0 and rng.random() < 0.5:
            band = int(rng.integers(0, 4))
        focus[i] = band
    timeline = spec.timeline()
    params = np.array([_gaze_params(_regime_at(timeline, v), spec) for v in t])
    out = {}
    for p in ("A", "B"):
        offset = params[:, 0] if p == "B" else 0.0
        lines = np.rint(centre + offset + rng.normal(0.0, 1.0, n) * params[:, 1]).astype(np.int64)
        lines = np.clip(lines, 0, N_LINES - 1)
        on_focus = rng.random(n) < 0.7
        bands = np.where(on_focus, focus, rng.integers(0, 4, n))
        valid = (rng.random(n) < 0.95) & ~blinks[p]
        out[p] = [GazeSample(p, int(ti), int(li), int(bi), bool(v)) for ti, li, bi, v in zip(t, lines, bands, valid)]
    return out


def _annotations(spec: ScenarioSpec, rng: np.random.Generator) -> list[Annotation]:
    cal = int(round(spec.calibration_s * 1000))
    out = [Annotation(0, "calibration_start"), Annotation(cal, "calibration_end")]
    if not spec.annotations:
        return out
    end = spec.total_ms
    out.append(Annotation(cal, "task_start"))
    out.append(Annotation(cal, "bug_start"))
    t = float(cal)
    while True:
        t += rng.exponential(120_000.0)
        if t >= end - 1:
            break
        out += [Annotation(int(t), "bug_fixed"), Annotation(int(t), "bug_start")]
    t = float(cal)
    while True:
        t += rng.exponential(20_000.0)
        if t >= end - 1:
            break
        out.append(Annotation(int(t), "code_edit"))
    out.append(Annotation(end - 1, "task_complete"))
    order = {"calibration_start": 0, "calibration_end": 1, "task_start": 2, "bug_fixed": 3, "bug_start": 4}
    return sorted(out, key=lambda a: (a.t, order.get(a.label, 5)))


def generate_dyad_streams(spec: ScenarioSpec) -> SimulatedSession:
    """Deterministic streams for ``spec`` (same seed, same samples)."""
    rng_bl_a, rng_bl_b, rng_pa, rng_pb, rng_gz, rng_an = _rng_streams(spec.seed, 6)
    t_pupil = np.round(np.arange(int(spec.total_ms * PUPIL_HZ / 1000.0)) * 1000.0 / PUPIL_HZ)
    t_gaze = np.round(np.arange(int(spec.total_ms * GAZE_HZ / 1000.0)) * 1000.0 / GAZE_HZ)
    blink_a = _blink_mask(t_pupil, rng_bl_a, spec.total_ms)
    blink_b = _blink_mask(t_pupil, rng_bl_b, spec.total_ms)
    pupil = {"A": _pupil_stream(spec, "A", rng_pa, blink_a), "B": _pupil_stream(spec, "B", rng_pb, blink_b)}
    # gaze blinks follow the pupil blinks (every other pupil sample)
    gaze_blinks = {"A": blink_a[::2][: t_gaze.size], "B": blink_b[::2][: t_gaze.size]}
    gaze = _gaze_streams(spec, rng_gz, gaze_blinks)
    return SimulatedSession(spec, gaze, pupil, _annotations(spec, rng_an), ground_truth_states(spec))


def ground_truth_states(spec: ScenarioSpec, cadence_ms: int = WINDOW_MS, jva_window_ms: int = 30_000,
                        jme_span_ms: int = 120_000) -> list[dict]:
    """Expected levels at every evaluation tick after calibration.

    An indicator is ``None`` (don't care) when its window overlaps a regime
    change, or for effort indicators the onset ramp after it: one tick for
    ME plus the ramp, three for JVA and twelve for JME plus the ramp.
    """
    timeline = spec.timeline()
    changes = [s for s, _, _ in timeline[1:]]
    ramp = int(round(spec.ramp_s * 1000))
    spans = {"ME_A": cadence_ms + ramp, "ME_B": cadence_ms + ramp, "JVA": jva_window_ms, "JME": jme_span_ms + ramp}
    start = int(round(spec.calibration_s * 1000))
    out = []
    t = (start // cadence_ms + 1) * cadence_ms
    while t <= spec.total_ms:
        regime = _regime_at(timeline, t - 1)
        code = spec.expected_levels(regime)
        levels = {}
        for i, (name, span) in enumerate(spans.items()):
            straddles = any(t - span < c < t for c in changes) or t - span < 0
            levels[name] = None if straddles else code[i]
        out.append({"t": t, "regime": regime, "levels": levels})
        t += cadence_ms
    return out


# -- scenario files ---------------------------------------------------------

def dump_scenario(spec: ScenarioSpec) -> str:
    head = {k: v for k, v in asdict(spec).items() if k != "segments"}
    lines = [json.dumps({"kind": "scenario", **head}, separators=(",", ":"))]
    lines += [json.dumps({"kind": "segment", "regime": s.regime, "duration_s": s.duration_s},
                         separators=(",", ":")) for s in spec.segments]
    return "\n".join(lines) + "\n"


def parse_scenario(text: str, seed: int | None = None) -> ScenarioSpec:
    head: dict | None = None
    segs = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        obj = json.loads(line)
        kind = obj.pop("kind", None)
        if kind == "scenario":
            head = obj
        elif kind == "segment":
            segs.append(Segment(obj["regime"], float(obj["duration_s"])))
        else:
            raise ValueError(f"line {n}: unknown scenario record kind {kind!r}")
    if head is None:
        raise ValueError("scenario file has no 'scenario' header line")
    known = {"seed", "calibration_s", "pupil_noise_mm", "gaze_noise_lines", "overloaded", "annotations"}
    params = {k: v for k, v in head.items() if k in known}
    if seed is not None:
        params["seed"] = seed
    return ScenarioSpec(tuple(segs), **params)


def load_scenario(path: str | os.PathLike, seed: int | None = None) -> ScenarioSpec:
    return parse_scenario(Path(path).read_text(), seed)


def save_scenario(spec: ScenarioSpec, path: str | os.PathLike) -> None:
    Path(path).write_text(dump_scenario(spec))


# -- forecasting test data --------------------------------------------------

def ar1_series(n: int, phi: float = 0.9, sigma: float = 0.1, mean: float = 0.5, seed: int = 0) -> np.ndarray:
    """Stationary AR(1): ``x[k] = mean + phi (x[k-1] - mean) + e``."""
    if not -1 < phi < 1:
        raise ValueError("phi must be in (-1, 1)")
    rng = np.random.default_rng(seed)
    e = rng.normal(0.0, sigma, n)
    x = np.empty(n)
    prev = mean + rng.normal(0.0, sigma / math.sqrt(1 - phi * phi))
    for k in range(n):
        prev = mean + phi * (prev - mean) + e[k]
        x[k] = prev
    return x


def iter_scenarios(base: Sequence[tuple[str, float]], seeds: Sequence[int], **kw) -> Iterator[ScenarioSpec]:
    for s in seeds:
        yield ScenarioSpec(tuple(Segment(r, d) for r, d in base), seed=int(s), **kw)


def random_scenario(seed: int, n_segments: int = 6, min_s: int = 60, max_s: int = 180, **kw) -> ScenarioSpec:
    """A seeded random regime sequence (no regime twice in a row), lengths on the 10 s grid."""
    rng = np.random.default_rng([seed, 0x5CE7])
    scored = [r for r in REGIMES if r != "rest"]
    segs, prev = [], None
    for _ in range(n_segments):
        regime = str(rng.choice([r for r in scored if r != prev]))
        length = 10 * int(rng.integers(min_s // 10, max_s // 10 + 1))
        segs.append(Segment(regime, float(length)))
        prev = regime
    kw.setdefault("overloaded", "AB"[int(rng.integers(0, 2))])
    return ScenarioSpec(tuple(segs), seed=seed, **kw)
