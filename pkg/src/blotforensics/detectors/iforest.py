"""Isolation Forest with array-backed trees and a signed inlier score."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import digamma
from sklearn.base import BaseEstimator, OutlierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .._rng import derive_seed, make_rng

SCORE_OFFSET = 0.5


def harmonic(i) -> np.ndarray:
    """H(i) = 1 + 1/2 + ... + 1/i, with H(0) = 0."""
    i = np.asarray(i, dtype=np.float64)
    return digamma(i + 1.0) + np.euler_gamma


def average_path_length(m) -> np.ndarray:
    """c(m) = 2 H(m-1) - 2 (m-1)/m, the mean unsuccessful-search depth of a BST.

    c(0) = c(1) = 0.
    """
    m = np.asarray(m, dtype=np.float64)
    out = np.zeros_like(m)
    big = m > 1
    mb = m[big]
    out[big] = 2.0 * harmonic(mb - 1.0) - 2.0 * (mb - 1.0) / mb
    return out if out.ndim else float(out)


@dataclass
class IsolationTree:
    """Flat tree: node ``k`` is a leaf when ``feature[k] == -1``.

    Internal nodes send ``x[feature] < threshold`` to ``left``.  Leaves keep the
    number of training rows that reached them in ``size``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray
    depth: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def height(self) -> int:
        return int(self.depth.max())

    def leaf_index(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            cur = node[active]
            go_left = X[active, self.feature[cur]] < self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = active[self.feature[node[active]] >= 0]
        return node

    def path_length(self, X: np.ndarray) -> np.ndarray:
        leaf = self.leaf_index(X)
        return self.depth[leaf] + average_path_length(self.size[leaf])


def _grow_tree(X: np.ndarray, height_limit: int, rng: np.random.Generator) -> IsolationTree:
    feature, threshold, left, right, size, depth = [], [], [], [], [], []

    def new_node(d):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        size.append(0)
        depth.append(d)
        return len(feature) - 1

    stack = [(new_node(0), np.arange(len(X)))]
    while stack:
        node, rows = stack.pop()
        d = depth[node]
        size[node] = len(rows)
        # two draws per node regardless of outcome, so that duplicated columns
        # consume the stream identically to the original ones
        u_feat, u_thr = rng.random(2)
        if len(rows) <= 1 or d >= height_limit:
            continue
        sub = X[rows]
        lo = sub.min(axis=0)
        hi = sub.max(axis=0)
        splittable = np.flatnonzero(np.nextafter(lo, np.inf) < hi)
        if splittable.size == 0:
            continue
        q = int(splittable[min(int(u_feat * splittable.size), splittable.size - 1)])
        t = lo[q] + u_thr * (hi[q] - lo[q])
        if t <= lo[q]:
            t = np.nextafter(lo[q], np.inf)
        if t >= hi[q]:
            t = np.nextafter(hi[q], -np.inf)
        mask = sub[:, q] < t
        feature[node] = q
        threshold[node] = float(t)
        size[node] = 0
        l_node = new_node(d + 1)
        r_node = new_node(d + 1)
        left[node], right[node] = l_node, r_node
        # right pushed first so the left subtree is numbered first
        stack.append((r_node, rows[~mask]))
        stack.append((l_node, rows[mask]))

    return IsolationTree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        size=np.array(size, dtype=np.int64),
        depth=np.array(depth, dtype=np.int64),
    )


class IsolationForestDetector(OutlierMixin, BaseEstimator):
    """Isolation Forest trained on pristine samples.

    ``decision_function`` returns ``0.5 - s(x)`` where ``s`` is the usual
    anomaly score ``2 ** (-E[h(x)] / c(max_samples))``, so inliers score
    positive and outliers negative.

    Parameters
    ----------
    n_trees : int, default=100
    max_samples : int or None, default=None
        Rows drawn without replacement for each tree; None uses all rows.
    seed : int, default=0
        Master seed; tree ``t`` draws from a stream derived from ``(seed, t)``.
    """

    def __init__(self, n_trees=100, max_samples=None, seed=0):
        self.n_trees = n_trees
        self.max_samples = max_samples
        self.seed = seed

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64, ensure_all_finite=True)
        n, k = X.shape
        if n < 2:
            raise ValueError("isolation forest needs at least 2 training rows")
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        m = n if self.max_samples is None else int(self.max_samples)
        if m < 2:
            raise ValueError("max_samples must be >= 2")
        m = min(m, n)
        height_limit = int(math.ceil(math.log2(m)))
        trees = []
        for t in range(self.n_trees):
            rng = make_rng(derive_seed(self.seed, "tree", t))
            rows = np.sort(rng.permutation(n)[:m]) if m < n else np.arange(n)
            trees.append(_grow_tree(X[rows], height_limit, rng))
        self.trees_ = trees
        self.max_samples_ = m
        self.height_limit_ = height_limit
        self.n_features_in_ = k
        return self

    def _check_query(self, X):
        check_is_fitted(self, "trees_")
        X = check_array(X, dtype=np.float64, ensure_all_finite=True)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return X

    def expected_path_length(self, X) -> np.ndarray:
        X = self._check_query(X)
        total = np.zeros(len(X))
        for tree in self.trees_:
            total += tree.path_length(X)
        return total / len(self.trees_)

    def anomaly_score(self, X) -> np.ndarray:
        """Classic score in (0, 1]; larger means more anomalous."""
        return 2.0 ** (-self.expected_path_length(X) / average_path_length(self.max_samples_))

    def score_samples(self, X) -> np.ndarray:
        return -self.anomaly_score(X)

    def decision_function(self, X) -> np.ndarray:
        return SCORE_OFFSET - self.anomaly_score(X)

    def predict(self, X) -> np.ndarray:
        """+1 for inliers (score > 0), -1 otherwise."""
        return np.where(self.decision_function(X) > 0, 1, -1)


def fit_isolation_forest(X, n_trees=100, max_samples=None, seed=0) -> IsolationForestDetector:
    return IsolationForestDetector(n_trees=n_trees, max_samples=max_samples, seed=seed).fit(X)


def score_isolation_forest(model: IsolationForestDetector, x) -> np.ndarray | float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return float(model.decision_function(x[None, :])[0])
    return model.decision_function(x)
