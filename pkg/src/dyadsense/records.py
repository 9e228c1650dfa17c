"""Raw input records (samples and client annotations) and their dict form.

The same dict form is used in session logs and, with a different ``kind``
name, on the wire, so a sample survives either route unchanged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Mapping, Union

from .signals.gaze import GazeSample
from .signals.pupil import PupilSample

ANNOTATION_LABELS = frozenset({
    "calibration_start", "calibration_end", "task_start", "task_complete",
    "bug_start", "bug_fixed", "code_edit",
})


@dataclass(frozen=True, slots=True)
class Annotation:
    t: int
    label: str
    note: str = ""


RawInput = Union[GazeSample, PupilSample, Annotation]


def to_record(item: RawInput) -> dict[str, Any]:
    if isinstance(item, GazeSample):
        return {"kind": "gaze", "t": item.t, "participant": item.participant_id,
                "line": item.line, "col_band": item.col_band, "valid": item.valid}
    if isinstance(item, PupilSample):
        return {"kind": "pupil", "t": item.t, "participant": item.participant_id,
                "diameter": item.diameter, "valid": item.valid}
    if isinstance(item, Annotation):
        return {"kind": "annotation", "t": item.t, "label": item.label, "note": item.note}
    raise TypeError(f"not a raw input: {item!r}")


def from_record(rec: Mapping[str, Any]) -> RawInput:
    kind = rec["kind"]
    if kind == "gaze":
        return GazeSample(rec["participant"], int(rec["t"]), int(rec["line"]), int(rec["col_band"]),
                          bool(rec.get("valid", True)))
    if kind == "pupil":
        return PupilSample(rec["participant"], int(rec["t"]), float(rec["diameter"]), bool(rec.get("valid", True)))
    if kind == "annotation":
        return Annotation(int(rec["t"]), str(rec["label"]), str(rec.get("note", "")))
    raise ValueError(f"not a raw record kind: {kind!r}")


RAW_KINDS = frozenset({"gaze", "pupil", "annotation"})


def dumps(record: Mapping[str, Any]) -> str:
    return json.dumps(record, separators=(",", ":"), allow_nan=False)
