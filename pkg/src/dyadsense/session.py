"""Session logs: append-only JSON lines, replay, and outcome analysis.

A log starts with a ``header`` line followed by one record per line, each a
JSON object with a ``kind`` and an integer millisecond ``t``. Records never go
back in time. Readers accept a file cut off mid-line (the partial line is
dropped), so a log stays usable after an abrupt stop.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Any, Iterable, Mapping, Sequence

import numpy as np

from .config import EngineConfig
from .engine import Engine, models_fingerprint
from .forecast.gbt import GbtEnsemble
from .records import RAW_KINDS, dumps, from_record

log = logging.getLogger(__name__)

COMPUTED_KINDS = frozenset({"me", "jva", "jme", "baseline", "indicators", "state", "decision", "error", "end"})
KINDS = RAW_KINDS | COMPUTED_KINDS | {"header"}
PREPOST_WINDOW_S = 120.0


class LogFormatError(ValueError):
    pass


class OutOfOrderError(ValueError):
    pass


class SessionWriter:
    """Append records to a log, one flushed line each.

    Usable directly as an engine sink. A record earlier than its predecessor
    is rejected with :class:`OutOfOrderError` and not written.
    """

    def __init__(self, target: str | os.PathLike | IO[str]):
        if isinstance(target, (str, os.PathLike)):
            self._fh: IO[str] = open(target, "w", encoding="utf-8")
            self._owned = True
        else:
            self._fh, self._owned = target, False
        self.last_t: int | None = None
        self.count = 0

    def write(self, record: Mapping[str, Any]) -> None:
        kind, t = record.get("kind"), record.get("t")
        if kind not in KINDS or not isinstance(t, int):
            raise LogFormatError(f"record needs a known kind and an integer t: {dict(record)!r}")
        if self.count == 0 and kind != "header":
            raise LogFormatError("the first record of a log must be the header")
        if self.count > 0 and kind == "header":
            raise LogFormatError("only one header per log")
        if self.last_t is not None and t < self.last_t:
            raise OutOfOrderError(f"record t={t} is earlier than the previous record t={self.last_t}")
        self._fh.write(dumps(record) + "\n")
        self._fh.flush()
        self.last_t = t
        self.count += 1

    __call__ = write

    def close(self) -> None:
        if self._owned:
            self._fh.close()

    def __enter__(self) -> "SessionWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


@dataclass
class SessionLog:
    header: dict
    records: list[dict]
    lines: list[str]
    truncated: bool = False

    @property
    def complete(self) -> bool:
        return bool(self.records) and self.records[-1]["kind"] == "end"

    def of_kind(self, *kinds: str) -> list[dict]:
        return [r for r in self.records if r["kind"] in kinds]

    @property
    def start_t(self) -> int:
        return min((r["t"] for r in self.records if r["kind"] in RAW_KINDS), default=0)

    @property
    def end_t(self) -> int:
        return self.records[-1]["t"] if self.records else 0


def parse_log(text: str) -> SessionLog:
    lines = text.split("\n")
    truncated = False
    if lines and lines[-1] == "":
        lines.pop()
    elif lines:
        # no trailing newline: the writer died mid-record
        lines.pop()
        truncated = True
    if not lines:
        raise LogFormatError("empty log (no complete header line)")
    objs = []
    for n, line in enumerate(lines, 1):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise LogFormatError(f"line {n}: not JSON ({exc.msg})") from None
        if not isinstance(obj, dict) or obj.get("kind") not in KINDS or not isinstance(obj.get("t"), int):
            raise LogFormatError(f"line {n}: record needs a known kind and an integer t")
        objs.append(obj)
    header = objs[0]
    if header["kind"] != "header":
        raise LogFormatError("line 1: expected the header record")
    last = header["t"]
    for n, obj in enumerate(objs[1:], 2):
        if obj["kind"] == "header":
            raise LogFormatError(f"line {n}: second header")
        if obj["t"] < last:
            raise LogFormatError(f"line {n}: t={obj['t']} goes back in time (previous {last})")
        last = obj["t"]
    return SessionLog(header, objs[1:], lines[1:], truncated)


def read_log(path: str | os.PathLike) -> SessionLog:
    return parse_log(Path(path).read_text(encoding="utf-8"))


def write_log(records: Iterable[Mapping], path: str | os.PathLike) -> None:
    with SessionWriter(path) as w:
        for rec in records:
            w.write(rec)


def raw_inputs(session: SessionLog):
    return [from_record(r) for r in session.records if r["kind"] in RAW_KINDS]


# -- replay -----------------------------------------------------------------

def _replayable(rec: Mapping) -> bool:
    # rejected inputs never reach the log, so their errors cannot be regenerated
    return rec["kind"] != "header" and not (rec["kind"] == "error" and rec.get("source") == "input")


@dataclass
class ReplayResult:
    records: list[dict]
    compared: int
    divergences: list[tuple[int, str, str]] = field(default_factory=list)
    config_mismatch: bool = False
    models_mismatch: bool = False
    truncated: bool = False
    unverified: int = 0

    @property
    def identical(self) -> bool:
        return not self.divergences and not self.config_mismatch and not self.models_mismatch

    @property
    def flagged(self) -> bool:
        return not self.identical


def replay(
    session: SessionLog,
    config: EngineConfig | None = None,
    models: Mapping[str, GbtEnsemble] | None = None,
    max_divergences: int = 20,
) -> ReplayResult:
    """Feed the logged raw inputs through a fresh engine and diff the output.

    Without ``config`` the log's own configuration is used. The engine is
    only closed when the log recorded a clean end, so a cut-off log is
    checked up to the last record it can regenerate; logged records past
    that point are counted as ``unverified``.
    """
    logged_cfg = EngineConfig.from_flat(session.header.get("config", {}))
    if logged_cfg.hash != session.header.get("config_hash"):
        log.warning("header config does not reproduce its hash %s", session.header.get("config_hash"))
    cfg = config or logged_cfg
    config_mismatch = cfg.hash != session.header.get("config_hash")
    if config_mismatch:
        log.warning("replaying with config %s, log was recorded with %s; results may differ",
                    cfg.hash, session.header.get("config_hash"))
    models_mismatch = models_fingerprint(models) != session.header.get("models")
    if models_mismatch:
        log.warning("replaying with different forecast models than the log was recorded with")

    out: list[dict] = []
    engine = Engine(cfg, models, out.append, session.header.get("session_id", "session"))
    for rec in session.records:
        if rec["kind"] in RAW_KINDS:
            engine.feed(from_record(rec))
    if session.complete:
        engine.close()

    original = [line for line, rec in zip(session.lines, session.records) if _replayable(rec)]
    regenerated = [dumps(r) for r in out if _replayable(r)]
    divergences = []
    n = min(len(original), len(regenerated))
    for i in range(n):
        if original[i] != regenerated[i]:
            divergences.append((i, original[i], regenerated[i]))
            if len(divergences) >= max_divergences:
                break
    if len(regenerated) > len(original) and len(divergences) < max_divergences:
        divergences.append((n, "<missing>", regenerated[n]))
    unverified = len(original) - n
    if session.complete and unverified and len(divergences) < max_divergences:
        divergences.append((n, original[n], "<missing>"))
    return ReplayResult(out, n, divergences, config_mismatch, models_mismatch, session.truncated,
                        0 if session.complete else unverified)


# -- outcome measures -------------------------------------------------------

@dataclass(frozen=True)
class SessionMetrics:
    debugging_success: int
    time_on_task: float
    feedback_uptake: list[int]
    event_times: list[int] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.debugging_success < 0 or self.time_on_task < 0 or any(u < 0 for u in self.feedback_uptake):
            raise ValueError("metrics must be non-negative")


def feedback_events(session: SessionLog) -> list[dict]:
    return [r for r in session.of_kind("decision") if r["action"] != "A1"]


def uptake_counts(event_times: Sequence[int], edit_times: Sequence[int], end_t: float) -> list[int]:
    """Edits in ``[t_i, t_{i+1})`` per event; the last event runs to ``end_t`` inclusive."""
    edits = np.sort(np.asarray(edit_times, dtype=float))
    bounds = list(event_times) + [np.nextafter(float(end_t), np.inf)]
    return [int(np.searchsorted(edits, hi, "left") - np.searchsorted(edits, lo, "left"))
            for lo, hi in zip(bounds[:-1], bounds[1:])]


def compute_metrics(session: SessionLog) -> SessionMetrics:
    notes = session.of_kind("annotation")
    task = [a for a in notes if not a["label"].startswith("calibration")]
    events = [e["t"] for e in feedback_events(session)]
    if not task:
        msg = "no task annotations in log; metrics are zero"
        log.warning(msg)
        return SessionMetrics(0, 0.0, [0] * len(events), events, [msg])
    fixed = sum(a["label"] == "bug_fixed" for a in task)
    open_bug = False
    for a in task:
        if a["label"] == "bug_start":
            open_bug = True
        elif a["label"] == "bug_fixed":
            open_bug = False
    starts = [a["t"] for a in task if a["label"] == "task_start"]
    ends = [a["t"] for a in task if a["label"] == "task_complete"]
    t0 = starts[0] if starts else task[0]["t"]
    t1 = ends[-1] if ends else task[-1]["t"]
    warnings = []
    if not starts or not ends:
        warnings.append("missing task_start/task_complete; using the first/last task annotation")
    edits = [a["t"] for a in task if a["label"] == "code_edit"]
    uptake = uptake_counts(events, edits, max(t1, session.end_t))
    return SessionMetrics(fixed + int(open_bug), max(0.0, (t1 - t0) / 1000.0), uptake, events, warnings)


@dataclass(frozen=True)
class PrePostRow:
    t: int
    action: str
    before: float
    after: float
    n_before: int
    n_after: int


@dataclass
class PrePostResult:
    indicator: str
    rows: list[PrePostRow]
    skipped: list[tuple[int, str]]


def indicator_series(session: SessionLog, indicator: str) -> tuple[np.ndarray, np.ndarray]:
    kind = {"JVA": "jva", "JME": "jme"}.get(indicator)
    if kind is None:
        raise ValueError(f"pre/post analysis supports JVA or JME, not {indicator!r}")
    pts = [(r["t"], r["value"]) for r in session.of_kind(kind) if r.get("value") is not None]
    if not pts:
        return np.empty(0, dtype=np.int64), np.empty(0)
    t, v = zip(*pts)
    return np.asarray(t, dtype=np.int64), np.asarray(v, dtype=float)


def prepost_analysis(
    session: SessionLog,
    indicator: str = "JVA",
    window_s: float = PREPOST_WINDOW_S,
    actions: Iterable[str] | None = None,
) -> PrePostResult:
    """Mean indicator value in ``[t - w, t)`` and ``(t, t + w]`` around each feedback event.

    Events whose windows would cross the session start or end, or that have
    no indicator values on one side, are listed in ``skipped``.
    """
    ts, vs = indicator_series(session, indicator)
    w = int(round(window_s * 1000))
    start, end = session.start_t, session.end_t
    keep = set(actions) if actions is not None else None
    rows, skipped = [], []
    for ev in feedback_events(session):
        t = ev["t"]
        if keep is not None and ev["action"] not in keep:
            continue
        if t - w < start:
            skipped.append((t, "insufficient pre-window"))
            continue
        if t + w > end:
            skipped.append((t, "insufficient post-window"))
            continue
        pre = vs[(ts >= t - w) & (ts < t)]
        post = vs[(ts > t) & (ts <= t + w)]
        if not pre.size or not post.size:
            skipped.append((t, "no indicator values in window"))
            continue
        rows.append(PrePostRow(t, ev["action"], float(pre.mean()), float(post.mean()), pre.size, post.size))
    return PrePostResult(indicator, rows, skipped)


def metrics_table(metrics: SessionMetrics, delimiter: str = ",") -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    wr.writerow(["debugging_success", "time_on_task_s", "n_feedback", "total_uptake"])
    wr.writerow([metrics.debugging_success, f"{metrics.time_on_task:.3f}", len(metrics.feedback_uptake),
                 sum(metrics.feedback_uptake)])
    wr.writerow([])
    wr.writerow(["event_t_ms", "uptake"])
    for t, u in zip(metrics.event_times, metrics.feedback_uptake):
        wr.writerow([t, u])
    return buf.getvalue()


def prepost_table(result: PrePostResult, delimiter: str = ",") -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    wr.writerow(["indicator", "event_t_ms", "action", "before", "after", "n_before", "n_after", "note"])
    for r in result.rows:
        wr.writerow([result.indicator, r.t, r.action, f"{r.before:.6f}", f"{r.after:.6f}", r.n_before, r.n_after, ""])
    for t, why in result.skipped:
        wr.writerow([result.indicator, t, "", "", "", "", "", f"skipped: {why}"])
    return buf.getvalue()
