"""Trigger rules and the escalating, cooldown-gated feedback policy.

Rules are independent predicates over a dyad state (``ME_A``, ``ME_B``,
``JVA``, ``JME`` levels). When several match, the least intrusive action that
is not blocked wins; the task hint (A5) is a last resort that additionally
needs sustained dual overload and an earlier scaffold in the same episode.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping

from .signals.baseline import Level

H, A, L = Level.HIGH, Level.AVERAGE, Level.LOW


class Action(str, Enum):
    A1_DO_NOTHING = "A1"
    A2_COPILOT = "A2"
    A3_GAZE_AWARENESS = "A3"
    A4_DIALOG_PROMPT = "A4"
    A5_TASK_HINT = "A5"

    @classmethod
    def parse(cls, code: str) -> "Action":
        return cls(code.strip().upper()[:2])


A1, A2, A3, A4, A5 = Action

RULES: dict[Action, str] = {
    A1: "ME_A=A & ME_B=A & JVA=H & JME=H",
    A2: "ME pair in {HH, LL} | (ME pair = HL & JVA=L)",
    A3: "JVA=L",
    A4: "JME=L",
    A5: "ME_A=H & ME_B=H",
}

ORIGINS = ("observed", "forecast", "cold-start")


@dataclass(frozen=True)
class CollabState:
    """Discretized dyad state at evaluation tick ``t``.

    A forecast state describes ``t + horizon_s``; observed and cold-start
    states have ``horizon_s == 0``.
    """

    t: int
    me_a: Level
    me_b: Level
    jva: Level
    jme: Level
    origin: str = "observed"
    horizon_s: float = 0.0
    stale: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.origin not in ORIGINS:
            raise ValueError(f"unknown state origin {self.origin!r}")

    @property
    def levels(self) -> tuple[Level, Level, Level, Level]:
        return self.me_a, self.me_b, self.jva, self.jme

    @property
    def code(self) -> str:
        return "".join(lv.code for lv in self.levels)

    def to_dict(self) -> dict:
        return {"t": self.t, "levels": {"ME_A": self.me_a.code, "ME_B": self.me_b.code,
                                        "JVA": self.jva.code, "JME": self.jme.code},
                "origin": self.origin, "horizon_s": self.horizon_s, "stale": sorted(self.stale)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "CollabState":
        lv = {k: Level.from_code(v) for k, v in d["levels"].items()}
        return cls(int(d["t"]), lv["ME_A"], lv["ME_B"], lv["JVA"], lv["JME"], d.get("origin", "observed"),
                   float(d.get("horizon_s", 0.0)), frozenset(d.get("stale", ())))


@dataclass(frozen=True)
class PolicyConfig:
    cooldown_s: Mapping[Action, float] = field(
        default_factory=lambda: {A2: 120.0, A3: 60.0, A4: 90.0, A5: 300.0})
    a5_sustain_s: float = 60.0
    copilot_duration_s: float = 120.0
    priority: tuple[Action, ...] = (A3, A4, A2, A5)

    def __post_init__(self):
        for action, secs in self.cooldown_s.items():
            if not secs > 0:
                raise ValueError(f"cooldown for {action.value} must be > 0")
        if not (self.a5_sustain_s > 0 and self.copilot_duration_s > 0):
            raise ValueError("durations must be > 0")
        if sorted(self.priority) != sorted((A2, A3, A4, A5)):
            raise ValueError("priority must order exactly A2..A5")


@dataclass(frozen=True)
class FeedbackEvent:
    t: int
    action: Action
    state: CollabState
    rule: str | None
    suppressed: tuple[str, ...] = ()
    params: Mapping[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"t": self.t, "action": self.action.value, "rule": self.rule,
                "suppressed": list(self.suppressed), "params": dict(self.params),
                "state": self.state.to_dict()}


@dataclass
class EscalationState:
    last_fired: dict[Action, int] = field(default_factory=dict)
    episode_open: bool = False
    episode_actions: list[Action] = field(default_factory=list)
    both_high_since: int | None = None

    def copy(self) -> "EscalationState":
        return replace(self, last_fired=dict(self.last_fired), episode_actions=list(self.episode_actions))


def is_desired(state: CollabState) -> bool:
    return state.me_a is A and state.me_b is A and state.jva is H and state.jme is H


def match_rules(state: CollabState) -> list[Action]:
    """Every action whose trigger holds, in table order A1..A5."""
    me = {state.me_a, state.me_b}
    out = []
    if is_desired(state):
        out.append(A1)
    if (state.me_a is state.me_b and state.me_a in (H, L)) or (me == {H, L} and state.jva is L):
        out.append(A2)
    if state.jva is L:
        out.append(A3)
    if state.jme is L:
        out.append(A4)
    if state.me_a is H and state.me_b is H:
        out.append(A5)
    return out


def _blocked_reason(action: Action, t: int, esc: EscalationState, config: PolicyConfig) -> str | None:
    last = esc.last_fired.get(action)
    if last is not None and t < last + config.cooldown_s[action] * 1000:
        return "cooldown"
    if action is A5:
        if esc.both_high_since is None or t - esc.both_high_since < config.a5_sustain_s * 1000:
            return "sustain"
        if not any(a in (A2, A3, A4) for a in esc.episode_actions):
            return "no-prior-scaffold"
    return None


def select_action(
    candidates: Iterable[Action],
    escalation: EscalationState,
    config: PolicyConfig,
    t: int,
    close_episode: bool = True,
) -> tuple[Action, tuple[str, ...]]:
    """Pick the action for one tick and update ``escalation`` in place.

    Returns the action and a tuple of suppression notes (``"A2:cooldown"``...)
    for matching candidates that were skipped.
    """
    candidates = list(candidates)
    if A1 in candidates:
        if close_episode:
            escalation.episode_open = False
            escalation.episode_actions.clear()
        return A1, ()
    if not candidates:
        return A1, ()
    escalation.episode_open = True
    notes = []
    for action in config.priority:
        if action not in candidates:
            continue
        reason = _blocked_reason(action, t, escalation, config)
        if reason is None:
            escalation.last_fired[action] = t
            escalation.episode_actions.append(action)
            return action, tuple(notes)
        notes.append(f"{action.value}:{reason}")
    return A1, tuple(notes)


def step(
    state: CollabState,
    config: PolicyConfig,
    escalation: EscalationState,
    observed: CollabState | None = None,
) -> tuple[FeedbackEvent | None, EscalationState]:
    """One evaluation tick: match rules, select, update timers.

    ``observed`` is the measured state at the same tick when ``state`` is a
    forecast; only an observed desired state closes an episode.
    """
    esc = escalation.copy()
    t = state.t
    if state.me_a is H and state.me_b is H:
        if esc.both_high_since is None:
            esc.both_high_since = t
    else:
        esc.both_high_since = None

    reference = state if state.origin != "forecast" or observed is None else observed
    candidates = match_rules(state)
    action, notes = select_action(candidates, esc, config, t, close_episode=is_desired(reference))
    if action is A1 and is_desired(reference):
        esc.episode_open = False
        esc.episode_actions.clear()
    elif not is_desired(state):
        esc.episode_open = True
    if action is A1 and not notes:
        return None, esc
    params = {"duration_s": config.copilot_duration_s} if action is A2 else {}
    rule = RULES[action] if action is not A1 else None
    return FeedbackEvent(t, action, state, rule, notes, params), esc


class Policy:
    """Stateful wrapper that owns one session's escalation state."""

    def __init__(self, config: PolicyConfig | None = None):
        self.config = config or PolicyConfig()
        self.escalation = EscalationState()

    def step(self, state: CollabState, observed: CollabState | None = None) -> FeedbackEvent | None:
        event, self.escalation = step(state, self.config, self.escalation, observed)
        return event
