"""Streaming session engine: samples in, indicator/state/decision records out.

One engine instance owns all mutable state of one session and is driven by a
single caller. Samples may interleave across participants; windows close once
every input stream has moved past the window end plus a short lookahead (the
watermark), so the output depends only on the per-stream sample order.

Every record the engine produces, including the raw samples, goes to
``sink`` in non-decreasing ``t`` order; raw samples are held back until the
boundary that follows them has been computed.
"""

from __future__ import annotations

import bisect
import hashlib
import heapq
import logging
import math
from collections import deque
from dataclasses import replace
from typing import Callable, Iterable, Mapping

from .config import EngineConfig
from .forecast.features import SIGNALS, IndicatorHistory
from .forecast.gbt import GbtEnsemble
from .forecast.modelio import dumps as model_bytes
from .forecast.states import forecast_values, state_from_values
from .jme import cross_recurrence_matrix, discretize_me_sequence, recurrence_rate
from .policy import CollabState, Policy
from .records import Annotation, RawInput, to_record
from .signals.baseline import BaselineProfile, CalibrationError, Level, calibrate_baseline, discretize_level
from .signals.gaze import GazeSample, build_gaze_distribution, jva_cosine
from .signals.pupil import MeWindow, PupilSample, ipa_window, preprocess_pupil

log = logging.getLogger(__name__)

LOG_VERSION = 1
PARTICIPANTS = ("A", "B")
STREAMS = tuple((kind, pid) for kind in ("gaze", "pupil") for pid in PARTICIPANTS)
Sink = Callable[[dict], None]


def models_fingerprint(models: Mapping[str, GbtEnsemble] | None) -> dict[str, str] | None:
    if not models:
        return None
    return {k: hashlib.sha256(model_bytes(models[k])).hexdigest()[:16] for k in sorted(models)}


class Engine:
    def __init__(
        self,
        config: EngineConfig | None = None,
        models: Mapping[str, GbtEnsemble] | None = None,
        sink: Sink | None = None,
        session_id: str = "session",
    ):
        self.config = cfg = config or EngineConfig.from_flat()
        if models is not None:
            missing = [s for s in SIGNALS if s not in models]
            if missing:
                raise KeyError(f"no forecast model for target(s): {', '.join(missing)}")
        self.models = dict(models) if models else None
        self.sink = sink or (lambda rec: None)
        self.session_id = session_id

        self.stride = cfg.ms("signals.jva_stride_s")
        self.jva_window = cfg.ms("signals.jva_window_s")
        self.me_window = cfg.ms("signals.me_window_s")
        self.cadence = cfg.ms("forecast.cadence_s")
        self.lookahead = int(cfg["signals.lookahead_ms"])
        self.max_lag = int(cfg["signals.max_lag_ms"])
        self.interp_cap = float(cfg["signals.interp_cap_ms"])
        self.rate = float(cfg["signals.pupil_rate_hz"])
        self.bands = int(cfg["signals.col_bands"])
        self.stale_limit = cfg.ms("signals.stale_limit_s")
        self.jme_n = int(cfg["jme.window"])
        self.lags = int(cfg["forecast.lags"])
        self.horizon_s = float(cfg["forecast.horizon_s"])

        self.policy = Policy(cfg.policy)
        self.history = IndicatorHistory(self.cadence)
        self.baselines: BaselineProfile | None = None

        self._last_t: dict[tuple[str, str], int] = {}
        self._pending: list[tuple[int, int, dict]] = []
        self._seq = 0
        self._log_t = 0
        self._next_boundary = self.stride
        self._done_until = 0
        self._gaze = {p: deque() for p in PARTICIPANTS}
        self._pupil: dict[str, list[PupilSample]] = {p: [] for p in PARTICIPANTS}
        self._pupil_t: dict[str, list[int]] = {p: [] for p in PARTICIPANTS}
        self._me: dict[str, list[MeWindow]] = {p: [] for p in PARTICIPANTS}
        self._me_hist: list[tuple[int, float | None, float | None]] = []
        self._jva: list[tuple[int, float | None]] = []
        self._jme_value: float | None = None
        self._defined_at: dict[str, int | None] = {s: None for s in SIGNALS}
        self._current: dict[str, float | None] = {s: None for s in SIGNALS}
        self._calib_start = 0
        self._calib_marker: int | None = None
        self._task_start = 0
        self.closed = False
        self.rejected = 0

        self._emit({"kind": "header", "t": 0, "version": LOG_VERSION, "session_id": session_id,
                    "participants": list(PARTICIPANTS), "config_hash": cfg.hash, "config": cfg.to_flat(),
                    "models": models_fingerprint(self.models)})

    # -- ingestion ---------------------------------------------------------

    def feed(self, item: RawInput) -> bool:
        """Ingest one sample or annotation; returns False if it was rejected."""
        if self.closed:
            raise RuntimeError("engine is closed")
        if isinstance(item, (GazeSample, PupilSample)):
            stream = ("gaze" if isinstance(item, GazeSample) else "pupil", item.participant_id)
            if item.participant_id not in PARTICIPANTS:
                return self._reject(f"unknown participant {item.participant_id!r}")
            last = self._last_t.get(stream)
            if last is not None and item.t < last:
                return self._reject(f"out-of-order {stream[0]} sample for {stream[1]}: t={item.t} < {last}")
            if item.t < self._done_until:
                return self._reject(f"late {stream[0]} sample t={item.t}; windows before {self._done_until} are closed")
            if isinstance(item, GazeSample):
                if item.valid and (item.line < 0 or not 0 <= item.col_band < self.bands):
                    return self._reject(f"gaze cell out of range: ({item.line}, {item.col_band})")
                self._gaze[item.participant_id].append(item)
            else:
                if item.valid and not item.diameter > 0:
                    return self._reject(f"valid pupil sample with non-positive diameter {item.diameter}")
                self._pupil[item.participant_id].append(item)
                self._pupil_t[item.participant_id].append(item.t)
            self._last_t[stream] = item.t
        elif isinstance(item, Annotation):
            if item.t < self._done_until:
                return self._reject(f"late annotation t={item.t}")
            if item.label == "calibration_end":
                self._calib_marker = item.t
            elif item.label == "calibration_start":
                self._calib_start = item.t
        else:
            raise TypeError(f"cannot feed {type(item).__name__}")
        heapq.heappush(self._pending, (item.t, self._seq, to_record(item)))
        self._seq += 1
        wm = self.watermark()
        if wm is not None:
            self._advance(wm)
        return True

    def feed_many(self, items: Iterable[RawInput]) -> None:
        for item in items:
            self.feed(item)

    def close(self) -> None:
        """Finish the session: close every window the received data covers."""
        if self.closed:
            return
        if self._last_t:
            self._advance(max(self._last_t.values()))
        self._flush_raw(math.inf)
        self._emit({"kind": "end", "t": self._log_t, "rejected": self.rejected})
        self.closed = True

    def watermark(self) -> int | None:
        seen = [self._last_t[s] for s in STREAMS if s in self._last_t]
        if not seen:
            return None
        lowest = min(seen) if len(seen) == len(STREAMS) else -math.inf
        return int(max(lowest, max(seen) - self.max_lag))

    # -- internals ---------------------------------------------------------

    def _reject(self, message: str) -> bool:
        self.rejected += 1
        log.warning("rejected input: %s", message)
        self._emit({"kind": "error", "t": self._log_t, "source": "input", "message": message})
        return False

    def _emit(self, record: dict) -> None:
        self._log_t = max(self._log_t, record["t"])
        self.sink(record)

    def _flush_raw(self, before: float) -> None:
        while self._pending and self._pending[0][0] < before:
            self._emit(heapq.heappop(self._pending)[2])

    def _advance(self, wm: int) -> None:
        while self._next_boundary + self.lookahead <= wm:
            self._process(self._next_boundary)
            self._next_boundary += self.stride

    def _process(self, b: int) -> None:
        self._flush_raw(b)
        self._done_until = b
        if b >= self.jva_window:
            self._jva_boundary(b)
        if b % self.cadence == 0:
            for pid in PARTICIPANTS:
                self._me_boundary(pid, b)
            a, bb = self._me["A"][-1].ipa, self._me["B"][-1].ipa
            self._me_hist.append((b, None if math.isnan(a) else a, None if math.isnan(bb) else bb))
            if self.baselines is None and self._calib_marker is not None and b >= self._calib_marker:
                self._calibrate(b)
            if self.baselines is not None:
                self._jme_boundary(b)
            self._indicator_row(b)
            if self.baselines is not None:
                self._tick(b)
        self._trim(b)

    def _jva_boundary(self, b: int) -> None:
        window = (b - self.jva_window, b)
        da = build_gaze_distribution(self._gaze["A"], window, self.bands)
        db = build_gaze_distribution(self._gaze["B"], window, self.bands)
        value = jva_cosine(da, db)
        self._jva.append((b, value))
        if value is not None:
            self._current["JVA"] = value
            self._defined_at["JVA"] = b
        self._emit({"kind": "jva", "t": b, "window_start": window[0], "window_end": b, "value": value,
                    "stale": value is None})

    def _me_boundary(self, pid: str, b: int) -> None:
        start = b - self.me_window
        ts = self._pupil_t[pid]
        margin = self.interp_cap + 2000.0 / self.rate
        lo = bisect.bisect_left(ts, start - margin)
        hi = bisect.bisect_right(ts, b + self.lookahead)
        series = preprocess_pupil(self._pupil[pid][lo:hi], rate_hz=self.rate, interp_cap_ms=self.interp_cap,
                                  start=start, end=b)
        prev = self._me[pid][-1] if self._me[pid] else None
        w = ipa_window(series, (start, b), pid, previous=prev)
        self._me[pid].append(w)
        key = f"ME_{pid}"
        if w.valid:
            self._current[key] = w.ipa
            self._defined_at[key] = b
        self._emit({"kind": "me", "t": b, "participant": pid, "window_start": start, "window_end": b,
                    "ipa": None if math.isnan(w.ipa) else w.ipa, "valid": w.valid, "stale": w.stale})

    def _jme_from(self, hist: list[tuple[int, float | None, float | None]], baselines: BaselineProfile):
        usable = [h for h in hist if h[1] is not None and h[2] is not None]
        if len(usable) < self.jme_n:
            return None
        win = usable[-self.jme_n:]
        bins, clip = int(self.config["jme.bins"]), float(self.config["jme.z_clip"])
        xa = discretize_me_sequence([h[1] for h in win], baselines["ME_A"], "A", n_bins=bins, z_clip=clip)
        xb = discretize_me_sequence([h[2] for h in win], baselines["ME_B"], "B", n_bins=bins, z_clip=clip)
        rr = recurrence_rate(cross_recurrence_matrix(xa, xb, int(self.config["jme.radius"])))
        return win[0][0] - self.me_window, rr

    def _jme_boundary(self, b: int) -> None:
        # task-time windows never reach back into the resting period
        task = [h for h in self._me_hist if h[0] - self.me_window >= self._task_start]
        out = self._jme_from(task, self.baselines)
        if out is None:
            return
        start, rr = out
        stale = self._me["A"][-1].stale or self._me["B"][-1].stale
        self._jme_value = rr
        self._current["JME"] = rr
        self._defined_at["JME"] = b
        self._emit({"kind": "jme", "t": b, "window_start": start, "window_end": b, "value": rr,
                    "n": self.jme_n, "stale": stale})

    def _calibrate(self, b: int) -> None:
        cfg = self.config
        t0, t1 = self._calib_start, self._calib_marker
        me = {f"ME_{p}": [w.ipa for w in self._me[p] if w.valid and w.window_start >= t0 and w.window_end <= t1]
              for p in PARTICIPANTS}
        jva = [v for t, v in self._jva if v is not None and t - self.jva_window >= t0 and t <= t1]
        mins = {"ME_A": int(cfg["signals.min_me_windows"]), "ME_B": int(cfg["signals.min_me_windows"]),
                "JVA": int(cfg["signals.min_jva_windows"]), "JME": 2}
        floor = {"floor_frac": float(cfg["signals.sd_floor_frac"]), "eps": float(cfg["signals.sd_floor_eps"])}
        try:
            partial = calibrate_baseline({**me, "JVA": jva}, min_windows=mins, **floor)
            rest = [h for h in self._me_hist if t0 + self.me_window <= h[0] <= t1]
            jme_vals = []
            for k in range(self.jme_n, len(rest) + 1):
                out = self._jme_from(rest[:k], partial)
                if out is not None:
                    jme_vals.append(out[1])
            jme = calibrate_baseline({"JME": jme_vals}, min_windows=mins, **floor,
                                     fallbacks={"JME": (cfg["jme.fallback_mean"], cfg["jme.fallback_sd"])})
        except CalibrationError as exc:
            self._calib_marker = None
            log.warning("%s", exc)
            self._emit({"kind": "error", "t": b, "source": "calibration", "indicator": exc.indicator,
                        "message": str(exc)})
            return
        self.baselines = BaselineProfile({**partial.entries, **jme.entries})
        self._task_start = t1
        self._emit({"kind": "baseline", "t": b, "calibration_start": t0, "calibration_end": t1,
                    "entries": self.baselines.to_dict()})

    def _indicator_row(self, b: int) -> None:
        values = dict(self._current)
        stale = {s: self._defined_at[s] != b for s in SIGNALS}
        self.history.append(b, values)
        self._emit({"kind": "indicators", "t": b, "values": values, "stale": stale})

    def _observed_level(self, signal: str, b: int) -> Level:
        value, when = self._current[signal], self._defined_at[signal]
        if value is None or when is None or b - when > self.stale_limit:
            return Level.AVERAGE
        return discretize_level(value, self.baselines[signal])

    def _tick(self, b: int) -> None:
        lv = {s: self._observed_level(s, b) for s in SIGNALS}
        stale = frozenset(s for s in SIGNALS if self._defined_at[s] != b)
        observed = CollabState(b, lv["ME_A"], lv["ME_B"], lv["JVA"], lv["JME"], "observed", 0.0, stale)
        predicted = None
        state = observed
        if self.models is not None:
            if self.history.warm(b, self.lags):
                predicted = forecast_values(self.models, self.history, b, self.lags)
                state = state_from_values(predicted, self.baselines, b, "forecast", self.horizon_s)
            else:
                state = replace(observed, origin="cold-start")
        event = self.policy.step(state, observed=observed)
        self._emit({"kind": "state", "t": b, "observed": observed.to_dict(),
                    "evaluated": state.to_dict(), "predicted": predicted})
        if event is None:
            self._emit({"kind": "decision", "t": b, "action": "A1", "rule": None, "suppressed": [],
                        "params": {}})
        else:
            self._emit({"kind": "decision", "t": b, "action": event.action.value, "rule": event.rule,
                        "suppressed": list(event.suppressed), "params": dict(event.params)})

    def _trim(self, b: int) -> None:
        keep_gaze = b + self.stride - self.jva_window
        for dq in self._gaze.values():
            while dq and dq[0].t < keep_gaze:
                dq.popleft()
        next_me_start = (b // self.cadence) * self.cadence
        keep = next_me_start - self.interp_cap - 4000.0 / self.rate
        for pid in PARTICIPANTS:
            k = bisect.bisect_left(self._pupil_t[pid], keep)
            if k > 4096:
                del self._pupil[pid][:k]
                del self._pupil_t[pid][:k]


def run_engine(
    items: Iterable[RawInput],
    config: EngineConfig | None = None,
    models: Mapping[str, GbtEnsemble] | None = None,
    session_id: str = "session",
) -> list[dict]:
    """Feed ``items`` through a fresh engine and return every record it wrote."""
    out: list[dict] = []
    engine = Engine(config, models, out.append, session_id)
    engine.feed_many(items)
    engine.close()
    return out
