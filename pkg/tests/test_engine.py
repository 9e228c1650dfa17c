from __future__ import annotations

import random

import pytest

from dyadsense.config import EngineConfig
from dyadsense.engine import Engine, run_engine
from dyadsense.records import RAW_KINDS, Annotation
from dyadsense.session import COMPUTED_KINDS
from dyadsense.signals.gaze import GazeSample
from dyadsense.signals.pupil import PupilSample
from dyadsense.simulator import ScenarioSpec, Segment, generate_dyad_streams


def computed(records):
    return [r for r in records if r["kind"] in COMPUTED_KINDS]


def test_header_first_and_time_ordered(short_records):
    head = short_records[0]
    assert head["kind"] == "header" and head["t"] == 0 and head["session_id"] == "short"
    assert head["config_hash"] == EngineConfig.from_flat().hash and head["models"] is None
    ts = [r["t"] for r in short_records]
    assert ts == sorted(ts)
    assert short_records[-1]["kind"] == "end"


def test_every_raw_input_is_logged(short_sim, short_records):
    assert sum(r["kind"] in RAW_KINDS for r in short_records) == len(short_sim.messages())


def test_cadences(short_records):
    jva = [r["t"] for r in short_records if r["kind"] == "jva"]
    assert jva[0] == 30_000 and all(b - a == 5000 for a, b in zip(jva, jva[1:]))
    rows = [r["t"] for r in short_records if r["kind"] == "indicators"]
    assert all(t % 10_000 == 0 for t in rows)
    base = next(r for r in short_records if r["kind"] == "baseline")
    decisions = [r["t"] for r in short_records if r["kind"] == "decision"]
    assert decisions[0] == base["t"] and decisions == rows[rows.index(base["t"]):]


def test_baseline_from_the_resting_period(short_records):
    base = next(r for r in short_records if r["kind"] == "baseline")
    assert (base["calibration_start"], base["calibration_end"]) == (0, 180_000)
    assert set(base["entries"]) == {"ME_A", "ME_B", "JVA", "JME"}
    assert not base["entries"]["JME"]["fallback"]


def test_jme_waits_for_a_full_task_window(short_records):
    first = min(r["t"] for r in short_records if r["kind"] == "jme")
    assert first == 180_000 + 12 * 10_000


def test_drift_shows_up_as_gaze_awareness(short_records):
    fired = [r for r in short_records if r["kind"] == "decision" and r["action"] != "A1"]
    assert fired and fired[0]["action"] == "A3"
    assert 260_000 <= fired[0]["t"] <= 260_000 + 60_000


def test_stream_interleaving_does_not_change_the_output(short_sim, short_records):
    # each stream arrives with its own transport delay, all under the 2 s lag limit
    rng = random.Random(3)
    delay = {}
    for m in short_sim.messages():
        key = (type(m).__name__, getattr(m, "participant_id", ""))
        delay.setdefault(key, rng.uniform(0, 1500))
    mixed = sorted(short_sim.messages(),
                   key=lambda m: m.t + delay[(type(m).__name__, getattr(m, "participant_id", ""))])
    again = run_engine(mixed, session_id="short")
    assert not any(r["kind"] == "error" for r in again)
    assert computed(again) == computed(short_records)


class TestRejection:
    def test_out_of_order_sample(self):
        out = []
        eng = Engine(sink=out.append)
        assert eng.feed(GazeSample("A", 100, 1, 0))
        assert not eng.feed(GazeSample("A", 50, 1, 0))
        err = out[-1]
        assert err["kind"] == "error" and err["source"] == "input" and "out-of-order" in err["message"]
        assert eng.rejected == 1

    @pytest.mark.parametrize("item", [
        GazeSample("A", 0, 1, 7),
        PupilSample("B", 0, -1.0),
        GazeSample("C", 0, 1, 0),
    ])
    def test_invalid_values(self, item):
        eng = Engine()
        assert not eng.feed(item)

    def test_invalid_samples_flagged_invalid_are_kept(self):
        assert Engine().feed(PupilSample("A", 0, 0.0, valid=False))

    def test_closed_engine(self):
        eng = Engine()
        eng.close()
        with pytest.raises(RuntimeError):
            eng.feed(Annotation(0, "task_start"))

    def test_missing_model(self):
        with pytest.raises(KeyError, match="ME_B"):
            Engine(models={"JVA": None, "JME": None, "ME_A": None})


def test_short_rest_reports_a_calibration_error():
    spec = ScenarioSpec([Segment("aligned", 40)], seed=1, calibration_s=30)
    out = run_engine(generate_dyad_streams(spec).messages())
    errors = [r for r in out if r["kind"] == "error" and r["source"] == "calibration"]
    assert errors and errors[0]["indicator"] in ("ME_A", "ME_B")
    assert not any(r["kind"] == "decision" for r in out)


def test_silent_stream_stops_holding_back_windows():
    out = []
    eng = Engine(sink=out.append)
    for i in range(0, 40_000, 100):
        eng.feed(GazeSample("A", i, 1, 0))
        eng.feed(GazeSample("B", i, 1, 0))
    # pupil streams never arrive; windows close once data runs 2 s past them
    assert [r["t"] for r in out if r["kind"] == "jva"] == [30_000, 35_000]
    assert all(r["value"] == pytest.approx(1.0) for r in out if r["kind"] == "jva")


def test_late_sample_after_window_closed():
    eng = Engine()
    for i in range(0, 10_000, 100):
        eng.feed(GazeSample("A", i, 1, 0))
    assert not eng.feed(GazeSample("B", 1000, 1, 0))
