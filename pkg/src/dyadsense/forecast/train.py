"""Training and evaluation of the four forecasters from recorded sessions."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .features import N_LAGS, SIGNALS, IndicatorHistory, persistence_predictions, training_rows
from .gbt import GbtEnsemble, TrainingSet, fit_ensemble

log = logging.getLogger(__name__)


def history_from_records(records: Iterable[Mapping], cadence_ms: int = 10_000) -> IndicatorHistory:
    """Rebuild the engine's indicator history from a session's ``indicators`` records."""
    hist = IndicatorHistory(cadence_ms)
    for rec in records:
        if rec.get("kind") == "indicators":
            hist.append(int(rec["t"]), rec["values"])
    return hist


def build_training_set(
    histories: Sequence[IndicatorHistory], target: str, horizon_ms: int = 30_000, lags: int = N_LAGS
) -> tuple[TrainingSet, np.ndarray]:
    """Stack rows from every history; also returns the persistence forecast per row."""
    xs, ys, ps = [], [], []
    for h in histories:
        X, y, ts = training_rows(h, target, horizon_ms, lags)
        if len(y):
            xs.append(X)
            ys.append(y)
            ps.append(persistence_predictions(h, target, ts))
    if not xs:
        raise ValueError(f"no warm training rows for {target}")
    return TrainingSet(np.vstack(xs), np.concatenate(ys), target), np.concatenate(ps)


def train_models(
    histories: Sequence[IndicatorHistory],
    *,
    rounds: int = 100,
    learning_rate: float = 0.1,
    max_depth: int = 4,
    min_samples_leaf: int = 5,
    horizon_s: float = 30.0,
    lags: int = N_LAGS,
) -> dict[str, GbtEnsemble]:
    models = {}
    for target in SIGNALS:
        train, _ = build_training_set(histories, target, int(horizon_s * 1000), lags)
        log.info("training %s on %d rows", target, len(train))
        models[target] = fit_ensemble(train, rounds, learning_rate, max_depth, min_samples_leaf, horizon_s)
    return models


@dataclass(frozen=True)
class TargetScore:
    target: str
    n: int
    mse: float
    persistence_mse: float

    @property
    def ratio(self) -> float:
        return self.mse / self.persistence_mse if self.persistence_mse > 0 else float("inf")


def evaluate_models(
    models: Mapping[str, GbtEnsemble], histories: Sequence[IndicatorHistory], lags: int = N_LAGS
) -> dict[str, TargetScore]:
    """Held-out MSE of each model next to the persistence forecast's MSE."""
    out = {}
    for target in SIGNALS:
        model = models[target]
        data, persist = build_training_set(histories, target, int(model.horizon_s * 1000), lags)
        pred = model.predict(data.X)
        out[target] = TargetScore(target, len(data), float(np.mean((pred - data.y) ** 2)),
                                  float(np.mean((persist - data.y) ** 2)))
    return out
