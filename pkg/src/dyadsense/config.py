"""Engine configuration: flat ``section.key=value`` text with validated defaults."""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping

from .policy import Action, PolicyConfig


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def _pos(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _unit(v):
    return 0 < v <= 1


def _priority(v: str):
    try:
        acts = [Action.parse(p) for p in v.split(",")]
    except ValueError:
        return False
    return sorted(a.value for a in acts) == ["A2", "A3", "A4", "A5"]


# key -> (default, validator, description)
SCHEMA: dict[str, tuple[Any, Callable[[Any], bool], str]] = {
    "signals.jva_window_s": (30.0, _pos, "JVA window length"),
    "signals.jva_stride_s": (5.0, _pos, "JVA window stride"),
    "signals.col_bands": (4, _pos, "horizontal grid bands"),
    "signals.me_window_s": (10.0, _pos, "IPA window length"),
    "signals.pupil_rate_hz": (60.0, _pos, "pupil resampling rate"),
    "signals.interp_cap_ms": (500.0, _nonneg, "longest invalid run bridged by interpolation"),
    "signals.sd_floor_frac": (0.05, _nonneg, "baseline SD floor as a fraction of |mean|"),
    "signals.sd_floor_eps": (1e-6, _pos, "absolute baseline SD floor"),
    "signals.stale_limit_s": (60.0, _pos, "age after which carried values read as Average"),
    "signals.min_me_windows": (6, _pos, "ME windows required for calibration"),
    "signals.min_jva_windows": (2, _pos, "JVA windows required for calibration"),
    "signals.lookahead_ms": (500, _nonneg, "sample lookahead before closing a window"),
    "signals.max_lag_ms": (2000, _pos, "a silent stream stops holding back the watermark after this lag"),
    "jme.window": (12, lambda v: v >= 2, "ME samples per cross-recurrence window"),
    "jme.radius": (1, _nonneg, "recurrence radius in bins"),
    "jme.bins": (10, lambda v: v >= 2, "effort bins"),
    "jme.z_clip": (2.5, _pos, "z-score clip for effort binning"),
    "jme.fallback_mean": (0.5, lambda v: 0 <= v <= 1, "JME baseline mean when uncalibrated"),
    "jme.fallback_sd": (0.15, _pos, "JME baseline SD when uncalibrated"),
    "forecast.rounds": (100, _nonneg, "boosting rounds"),
    "forecast.learning_rate": (0.1, _unit, "shrinkage"),
    "forecast.max_depth": (4, _nonneg, "tree depth"),
    "forecast.min_samples_leaf": (5, _pos, "rows per leaf"),
    "forecast.horizon_s": (30.0, _pos, "forecast horizon"),
    "forecast.cadence_s": (10.0, _pos, "evaluation cadence"),
    "forecast.lags": (6, lambda v: v >= 2, "lagged values per signal"),
    "policy.cooldown_a2_s": (120.0, _pos, "A2 cooldown"),
    "policy.cooldown_a3_s": (60.0, _pos, "A3 cooldown"),
    "policy.cooldown_a4_s": (90.0, _pos, "A4 cooldown"),
    "policy.cooldown_a5_s": (300.0, _pos, "A5 cooldown"),
    "policy.a5_sustain_s": (60.0, _pos, "both-ME-High duration before A5"),
    "policy.copilot_duration_s": (120.0, _pos, "A2 activation length"),
    "policy.priority": ("A3,A4,A2,A5", _priority, "least to most intrusive"),
    "app.max_buffered_raw": (200_000, _pos, "raw records buffered for the log writer before dropping"),
}


def _coerce(key: str, raw: Any) -> Any:
    default = SCHEMA[key][0]
    try:
        if isinstance(default, bool):
            return raw if isinstance(raw, bool) else str(raw).lower() in ("1", "true", "yes")
        if isinstance(default, int):
            f = float(raw)
            if f != int(f):
                raise ValueError
            return int(f)
        if isinstance(default, float):
            return float(raw)
        return str(raw).strip()
    except (TypeError, ValueError):
        raise ConfigError(key, f"cannot parse {raw!r} as {type(default).__name__}") from None


@dataclass(frozen=True)
class EngineConfig:
    values: Mapping[str, Any]

    @classmethod
    def from_flat(cls, overrides: Mapping[str, Any] | None = None) -> "EngineConfig":
        vals = {k: spec[0] for k, spec in SCHEMA.items()}
        for key, raw in (overrides or {}).items():
            if key not in SCHEMA:
                raise ConfigError(key, "unknown configuration key")
            vals[key] = _coerce(key, raw)
        for key, v in vals.items():
            if not SCHEMA[key][1](v):
                raise ConfigError(key, f"invalid value {v!r} ({SCHEMA[key][2]})")
        if vals["signals.jva_window_s"] * 1000 % (vals["signals.jva_stride_s"] * 1000):
            raise ConfigError("signals.jva_stride_s", "must divide the JVA window")
        cadence_ms = vals["forecast.cadence_s"] * 1000
        if cadence_ms % (vals["signals.jva_stride_s"] * 1000) or vals["signals.me_window_s"] * 1000 != cadence_ms:
            raise ConfigError("forecast.cadence_s", "must equal the ME window and be a multiple of the JVA stride")
        if vals["forecast.horizon_s"] * 1000 % cadence_ms:
            raise ConfigError("forecast.horizon_s", "must be a multiple of the cadence")
        return cls(vals)

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def to_flat(self) -> dict[str, Any]:
        return dict(sorted(self.values.items()))

    def dumps(self) -> str:
        return "".join(f"{k}={_fmt(v)}\n" for k, v in self.to_flat().items())

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()[:16]

    def ms(self, key: str) -> int:
        return int(round(self.values[key] * 1000))

    @property
    def policy(self) -> PolicyConfig:
        v = self.values
        return PolicyConfig(
            cooldown_s={Action.A2_COPILOT: v["policy.cooldown_a2_s"], Action.A3_GAZE_AWARENESS: v["policy.cooldown_a3_s"],
                        Action.A4_DIALOG_PROMPT: v["policy.cooldown_a4_s"], Action.A5_TASK_HINT: v["policy.cooldown_a5_s"]},
            a5_sustain_s=v["policy.a5_sustain_s"],
            copilot_duration_s=v["policy.copilot_duration_s"],
            priority=tuple(Action.parse(p) for p in v["policy.priority"].split(",")),
        )


def _fmt(v: Any) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}", f"expected key=value, got {line!r}")
        key, val = line.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def load_config(path: str | os.PathLike | None = None, overrides: Mapping[str, Any] | None = None) -> EngineConfig:
    flat: dict[str, Any] = {}
    if path is not None:
        flat.update(parse_config_text(Path(path).read_text()))
    flat.update(overrides or {})
    return EngineConfig.from_flat(flat)
