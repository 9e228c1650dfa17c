"""Exact-greedy gradient-boosted regression trees (squared-error loss).

Deliberately simpler than XGBoost: first-order gradients only, no
regularisation terms, no histogram binning. Every split considers every
midpoint between consecutive distinct feature values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .._validation import check_unit_interval

BOUNDED_TARGETS = frozenset({"JVA", "JME"})
LEAF = -1


@dataclass
class RegressionTree:
    """Binary tree in flat preorder arrays; ``feature[i] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    value: np.ndarray
    left: np.ndarray
    right: np.ndarray

    @classmethod
    def leaf(cls, value: float) -> "RegressionTree":
        return cls(np.array([LEAF]), np.array([0.0]), np.array([float(value)]),
                   np.array([-1]), np.array([-1]))

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        def _depth(i: int) -> int:
            if self.feature[i] == LEAF:
                return 0
            return 1 + max(_depth(self.left[i]), _depth(self.right[i]))
        return _depth(0)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        X = np.atleast_2d(X)
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            feat = self.feature[node]
            inner = feat != LEAF
            if not inner.any():
                return node
            go_left = X[rows[inner], feat[inner]] <= self.threshold[node[inner]]
            node[inner] = np.where(go_left, self.left[node[inner]], self.right[node[inner]])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def preorder(self) -> list[tuple[int, int, float]]:
        """``(kind, feature, threshold_or_value)`` per node; kind 1 = split, 0 = leaf."""
        out = []
        for i in range(self.n_nodes):
            if self.feature[i] == LEAF:
                out.append((0, -1, float(self.value[i])))
            else:
                out.append((1, int(self.feature[i]), float(self.threshold[i])))
        return out

    @classmethod
    def from_preorder(cls, nodes: Sequence[tuple[int, int, float]]) -> "RegressionTree":
        feature, threshold, value, left, right = [], [], [], [], []
        pos = 0

        def build() -> int:
            nonlocal pos
            if pos >= len(nodes):
                raise ValueError("truncated preorder node list")
            kind, feat, num = nodes[pos]
            me = len(feature)
            pos += 1
            feature.append(LEAF if kind == 0 else int(feat))
            threshold.append(0.0 if kind == 0 else float(num))
            value.append(float(num) if kind == 0 else 0.0)
            left.append(-1)
            right.append(-1)
            if kind == 1:
                left[me] = build()
                right[me] = build()
            elif kind != 0:
                raise ValueError(f"unknown node kind {kind}")
            return me

        build()
        if pos != len(nodes):
            raise ValueError("trailing nodes after a complete tree")
        return cls(np.array(feature, dtype=np.int64), np.array(threshold, dtype=float),
                   np.array(value, dtype=float), np.array(left, dtype=np.int64),
                   np.array(right, dtype=np.int64))


def _exact_mean(r: np.ndarray) -> float:
    # fsum is exactly rounded, so the leaf value does not depend on row order
    return math.fsum(r.tolist()) / r.size


def _best_split(X: np.ndarray, r: np.ndarray, min_samples_leaf: int):
    """Best ``(gain, feature, threshold)`` over all features, or ``None``.

    Rows are put in canonical order (by residual, then by each feature) so the
    prefix sums, and therefore the chosen split, are independent of the input
    row order. Ties go to the lowest feature index, then the lowest threshold.
    """
    n, n_feat = X.shape
    by_r = np.argsort(r, kind="stable")
    Xr, rr = X[by_r], r[by_r]
    rc = rr - rr.mean()
    order = np.argsort(Xr, axis=0, kind="stable")
    xs = np.take_along_axis(Xr, order, axis=0)
    cs = np.cumsum(rc[order], axis=0)
    total = cs[-1]
    i = np.arange(1, n)[:, None]
    left_sum = cs[:-1]
    gain = left_sum**2 / i + (total - left_sum) ** 2 / (n - i) - total**2 / n
    ok = (xs[1:] > xs[:-1]) & (i >= min_samples_leaf) & (n - i >= min_samples_leaf)
    gain = np.where(ok, gain, -np.inf)
    flat = gain.T.ravel()
    k = int(np.argmax(flat))
    best = flat[k]
    if not np.isfinite(best):
        return None
    f, pos = divmod(k, n - 1)
    lo, hi = float(xs[pos, f]), float(xs[pos + 1, f])
    thr = 0.5 * (lo + hi)
    if not lo <= thr < hi:
        # adjacent floats: the midpoint rounds onto ``hi``
        thr = lo
    return float(best), int(f), thr


def fit_tree(
    features: np.ndarray,
    residuals: np.ndarray,
    max_depth: int = 4,
    min_samples_leaf: int = 5,
) -> RegressionTree:
    """Fit one squared-error regression tree to ``residuals``.

    Leaves output the mean residual of their rows. Growth stops at
    ``max_depth``, when a node has fewer than ``2 * min_samples_leaf`` rows,
    or when no split reduces the squared error.
    """
    X = np.asarray(features, dtype=float)
    r = np.asarray(residuals, dtype=float)
    if X.ndim != 2 or r.ndim != 1 or X.shape[0] != r.size:
        raise ValueError("features must be (n, d) and residuals (n,)")
    if r.size == 0:
        raise ValueError("cannot fit a tree on zero rows")
    if max_depth < 0 or min_samples_leaf < 1:
        raise ValueError("max_depth must be >= 0 and min_samples_leaf >= 1")

    feature, threshold, value, left, right = [], [], [], [], []

    def grow(idx: np.ndarray, depth: int) -> int:
        me = len(feature)
        node_r = r[idx]
        feature.append(LEAF)
        threshold.append(0.0)
        value.append(_exact_mean(node_r))
        left.append(-1)
        right.append(-1)
        if depth >= max_depth or idx.size < 2 * min_samples_leaf or np.ptp(node_r) == 0.0:
            return me
        split = _best_split(X[idx], node_r, min_samples_leaf)
        sse = float(np.sum((node_r - node_r.mean()) ** 2))
        if split is None or split[0] <= 1e-12 * sse:
            return me
        _, f, thr = split
        goes_left = X[idx, f] <= thr
        feature[me] = f
        threshold[me] = thr
        value[me] = 0.0
        left[me] = grow(idx[goes_left], depth + 1)
        right[me] = grow(idx[~goes_left], depth + 1)
        return me

    grow(np.arange(r.size), 0)
    return RegressionTree(np.array(feature, dtype=np.int64), np.array(threshold, dtype=float),
                          np.array(value, dtype=float), np.array(left, dtype=np.int64),
                          np.array(right, dtype=np.int64))


@dataclass
class GbtEnsemble:
    """A trained forecaster for one target signal."""

    target: str
    base_score: float
    learning_rate: float
    max_depth: int
    trees: list[RegressionTree] = field(default_factory=list)
    horizon_s: float = 30.0
    n_features: int = 44

    def raw_predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            out = out + self.learning_rate * tree.predict(X)
        return out

    def predict(self, X) -> np.ndarray:
        out = self.raw_predict(X)
        if self.target in BOUNDED_TARGETS:
            out = np.clip(out, 0.0, 1.0)
        return out

    def predict_one(self, x) -> float:
        return float(self.predict(np.asarray(x, dtype=float)[None, :])[0])


@dataclass
class TrainingSet:
    X: np.ndarray
    y: np.ndarray
    target: str = ""

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise ValueError("TrainingSet needs X (n, d) and y (n,)")

    def __len__(self) -> int:
        return self.y.shape[0]


def fit_ensemble(
    train: TrainingSet,
    rounds: int = 100,
    learning_rate: float = 0.1,
    max_depth: int = 4,
    min_samples_leaf: int = 5,
    horizon_s: float = 30.0,
) -> GbtEnsemble:
    """Boost ``rounds`` trees on squared error, starting from the mean target."""
    if len(train) == 0:
        raise ValueError("empty training set")
    check_unit_interval(learning_rate, "learning_rate")
    model = GradientBoostedRegressor(rounds, learning_rate, max_depth, min_samples_leaf, target=train.target,
                                     horizon_s=horizon_s)
    return model.fit(train.X, train.y).ensemble_


class GradientBoostedRegressor(RegressorMixin, BaseEstimator):
    """scikit-learn style front end for :class:`GbtEnsemble`.

    Parameters
    ----------
    n_estimators : int
        Boosting rounds.
    learning_rate : float
        Shrinkage in (0, 1].
    max_depth : int
        Maximum tree depth.
    min_samples_leaf : int
        Minimum rows per leaf.
    target : str
        Signal name; JVA and JME predictions are clipped to [0, 1].
    horizon_s : float
        Forecast horizon recorded in the fitted ensemble.

    Attributes
    ----------
    ensemble_ : GbtEnsemble
    train_mse_ : list of float
        Training MSE after 0, 1, ..., n_estimators rounds.
    """

    def __init__(self, n_estimators=100, learning_rate=0.1, max_depth=4, min_samples_leaf=5,
                 target="", horizon_s=30.0):
        self.n_estimators = n_estimators
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.target = target
        self.horizon_s = horizon_s

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        check_unit_interval(self.learning_rate, "learning_rate")
        base = _exact_mean(y)
        pred = np.full(y.shape, base)
        trees = []
        mse = [float(np.mean((y - pred) ** 2))]
        for _ in range(self.n_estimators):
            tree = fit_tree(X, y - pred, self.max_depth, self.min_samples_leaf)
            trees.append(tree)
            pred = pred + self.learning_rate * tree.predict(X)
            mse.append(float(np.mean((y - pred) ** 2)))
        self.ensemble_ = GbtEnsemble(self.target, base, float(self.learning_rate), int(self.max_depth),
                                     trees, float(self.horizon_s), X.shape[1])
        self.train_mse_ = mse
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "ensemble_")
        X = check_array(X)
        return self.ensemble_.predict(X)
