"""Line-delimited JSON messages between sensing clients and the service."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Mapping

from .records import Annotation, RawInput
from .signals.gaze import GazeSample, Viewport, map_gaze_to_grid
from .signals.pupil import PupilSample

INBOUND = frozenset({"hello", "gaze_sample", "pupil_sample", "annotation"})
OUTBOUND = frozenset({"state", "feedback", "error"})


class WireError(ValueError):
    pass


@dataclass(frozen=True)
class Hello:
    session_id: str
    participants: tuple[str, ...] = ("A", "B")
    config: Mapping[str, Any] = field(default_factory=dict)
    t: int = 0


def encode(message: Mapping[str, Any]) -> bytes:
    return json.dumps(message, separators=(",", ":"), allow_nan=False).encode() + b"\n"


def _field(obj: Mapping, key: str, kind: str):
    try:
        return obj[key]
    except KeyError:
        raise WireError(f"{kind} message is missing {key!r}") from None


def decode(line: bytes | str, n_bands: int = 4) -> Hello | RawInput:
    """Parse one inbound line. Unknown fields are ignored; unknown kinds raise."""
    try:
        obj = json.loads(line)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise WireError(f"malformed line: {exc}") from None
    if not isinstance(obj, dict):
        raise WireError("message must be a JSON object")
    kind = obj.get("kind")
    if kind not in INBOUND:
        raise WireError(f"unknown message kind {kind!r}")
    try:
        t = int(_field(obj, "t", kind))
        if kind == "hello":
            return Hello(str(_field(obj, "session", kind)), tuple(obj.get("participants", ("A", "B"))),
                         dict(obj.get("config", {})), t)
        if kind == "annotation":
            return Annotation(t, str(_field(obj, "label", kind)), str(obj.get("note", "")))
        pid = str(_field(obj, "participant", kind))
        valid = bool(obj.get("valid", True))
        if kind == "pupil_sample":
            return PupilSample(pid, t, float(_field(obj, "diameter", kind)), valid)
        if "line" in obj:
            return GazeSample(pid, t, int(obj["line"]), int(_field(obj, "col_band", kind)), valid)
        vp = Viewport(**_field(obj, "viewport", kind))
        cell = map_gaze_to_grid(float(_field(obj, "x", kind)), float(_field(obj, "y", kind)), vp, n_bands)
        if cell is None or not valid:
            return GazeSample(pid, t, 0, 0, False)
        return GazeSample(pid, t, cell[0], cell[1], True)
    except WireError:
        raise
    except (TypeError, ValueError) as exc:
        raise WireError(f"bad {kind} message: {exc}") from None


def to_wire(item: Hello | RawInput, session_id: str) -> dict[str, Any]:
    if isinstance(item, Hello):
        return {"kind": "hello", "t": item.t, "session": item.session_id,
                "participants": list(item.participants), "config": dict(item.config)}
    if isinstance(item, GazeSample):
        return {"kind": "gaze_sample", "t": item.t, "session": session_id, "participant": item.participant_id,
                "line": item.line, "col_band": item.col_band, "valid": item.valid}
    if isinstance(item, PupilSample):
        return {"kind": "pupil_sample", "t": item.t, "session": session_id, "participant": item.participant_id,
                "diameter": item.diameter, "valid": item.valid}
    if isinstance(item, Annotation):
        return {"kind": "annotation", "t": item.t, "session": session_id, "label": item.label, "note": item.note}
    raise TypeError(f"cannot send {type(item).__name__}")


def outbound_for(record: Mapping[str, Any], session_id: str) -> dict[str, Any] | None:
    """The client-facing message for an engine record, if it has one."""
    kind = record["kind"]
    if kind == "state":
        return {"kind": "state", "t": record["t"], "session": session_id, "observed": record["observed"],
                "evaluated": record["evaluated"]}
    if kind == "decision" and record["action"] != "A1":
        return {"kind": "feedback", "t": record["t"], "session": session_id, "action": record["action"],
                "rule": record["rule"], "params": record["params"], "suppressed": record["suppressed"]}
    if kind == "error":
        return error_message(record["message"], record["t"], session_id)
    return None


def error_message(message: str, t: int = 0, session_id: str | None = None) -> dict[str, Any]:
    return {"kind": "error", "t": t, "session": session_id, "message": message}
