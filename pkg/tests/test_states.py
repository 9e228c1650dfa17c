from __future__ import annotations

import numpy as np
import pytest

from dyadsense.forecast.features import SIGNALS, IndicatorHistory
from dyadsense.forecast.gbt import GbtEnsemble
from dyadsense.forecast.states import forecast_states
from dyadsense.forecast.train import build_training_set, evaluate_models, train_models
from dyadsense.policy import CollabState
from dyadsense.signals.baseline import BaselineEntry, BaselineProfile, Level
from dyadsense.simulator import ar1_series

BASE = BaselineProfile({"JVA": BaselineEntry(0.5, 0.1, 6), "JME": BaselineEntry(0.4, 0.05, 6),
                        "ME_A": BaselineEntry(1.0, 0.2, 6), "ME_B": BaselineEntry(1.2, 0.2, 6)})


def constant_models(values):
    return {s: GbtEnsemble(s, values[s], 0.1, 0) for s in SIGNALS}


def warm_history(n=8):
    h = IndicatorHistory()
    for k in range(n):
        h.append(k * 10_000, {s: 0.5 for s in SIGNALS})
    return h


def test_baseline_means_give_all_average():
    st = forecast_states(constant_models({s: BASE[s].mean for s in SIGNALS}), warm_history(), BASE)
    assert st.levels == (Level.AVERAGE,) * 4 and st.origin == "forecast" and st.t == 70_000


def test_three_sd_is_high():
    vals = {s: BASE[s].mean for s in SIGNALS}
    vals["ME_A"] += 3 * BASE["ME_A"].sd
    assert forecast_states(constant_models(vals), warm_history(), BASE).me_a is Level.HIGH


def test_missing_model_names_the_target():
    models = constant_models({s: 0.5 for s in SIGNALS})
    del models["ME_B"]
    with pytest.raises(KeyError, match="ME_B"):
        forecast_states(models, warm_history(), BASE)


def test_cold_start_returns_observed():
    observed = CollabState(20_000, Level.HIGH, Level.LOW, Level.AVERAGE, Level.AVERAGE, "observed")
    st = forecast_states(constant_models({s: 0.5 for s in SIGNALS}), warm_history(3), BASE, observed=observed)
    assert st.origin == "cold-start" and st.levels == observed.levels
    with pytest.raises(ValueError):
        forecast_states(constant_models({s: 0.5 for s in SIGNALS}), warm_history(3), BASE)


def ar1_histories(n_sessions, offset):
    out = []
    for k in range(n_sessions):
        series = {s: ar1_series(240, phi=0.8, sigma=0.05, mean=0.5, seed=1000 * (offset + k) + j)
                  for j, s in enumerate(SIGNALS)}
        h = IndicatorHistory()
        for i in range(240):
            h.append(i * 10_000, {s: float(series[s][i]) for s in SIGNALS})
        out.append(h)
    return out


def test_ar1_forecaster_beats_persistence():
    models = train_models(ar1_histories(6, 0), rounds=60, learning_rate=0.1, max_depth=2, min_samples_leaf=20)
    scores = evaluate_models(models, ar1_histories(3, 100))
    for s in scores.values():
        assert s.n > 500
        assert s.mse <= 0.9 * s.persistence_mse, (s.target, s.ratio)


def test_training_set_needs_rows():
    with pytest.raises(ValueError, match="JVA"):
        build_training_set([warm_history(3)], "JVA")
    ts, persist = build_training_set(ar1_histories(1, 7), "JME")
    assert len(ts) == persist.size == 240 - 5 - 3
    assert np.all((ts.y > 0) & (ts.y < 1))
