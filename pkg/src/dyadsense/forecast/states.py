"""Turn four per-signal forecasts into a discretized dyad state."""

from __future__ import annotations

from dataclasses import replace
from typing import Mapping

from ..policy import CollabState
from ..signals.baseline import BaselineProfile, discretize_level
from .features import N_LAGS, SIGNALS, IndicatorHistory, extract_features
from .gbt import GbtEnsemble


def forecast_values(
    ensembles: Mapping[str, GbtEnsemble], history: IndicatorHistory, t: int | None = None, lags: int = N_LAGS
) -> dict[str, float]:
    missing = [s for s in SIGNALS if s not in ensembles]
    if missing:
        raise KeyError(f"no forecast model for target(s): {', '.join(missing)}")
    x = extract_features(history, t, lags).values
    return {s: ensembles[s].predict_one(x) for s in SIGNALS}


def state_from_values(
    values: Mapping[str, float], baselines: BaselineProfile, t: int, origin: str = "forecast", horizon_s: float = 30.0
) -> CollabState:
    lv = {s: discretize_level(values[s], baselines[s]) for s in SIGNALS}
    return CollabState(t, lv["ME_A"], lv["ME_B"], lv["JVA"], lv["JME"], origin, horizon_s)


def forecast_states(
    ensembles: Mapping[str, GbtEnsemble],
    history: IndicatorHistory,
    baselines: BaselineProfile,
    t: int | None = None,
    observed: CollabState | None = None,
    lags: int = N_LAGS,
) -> CollabState:
    """Forecast state at ``t + horizon``.

    Before every signal has ``lags`` values of history the observed state is
    returned instead, re-tagged ``cold-start``.
    """
    t = history.times[-1] if t is None else t
    if not history.warm(t, lags):
        if observed is None:
            raise ValueError("cold start: not enough history and no observed state given")
        return replace(observed, origin="cold-start", horizon_s=0.0)
    values = forecast_values(ensembles, history, t, lags)
    horizon = min(e.horizon_s for e in ensembles.values())
    return state_from_values(values, baselines, t, "forecast", horizon)
