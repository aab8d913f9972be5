"""Bagged regression trees with variance-reduction splits."""

from __future__ import annotations

import numpy as np


class RegressionTree:
    """Depth-limited CART regressor stored as flat node arrays.

    ``feature[i] == -1`` marks a leaf whose prediction is ``value[i]``.
    """

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=int)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=int)
        self.right = np.asarray(right, dtype=int)
        self.value = np.asarray(value, dtype=float)

    @classmethod
    def grow(
        cls,
        X: np.ndarray,
        y: np.ndarray,
        max_depth: int,
        max_features: int,
        rng: np.random.Generator,
        min_samples_split: int = 2,
    ) -> RegressionTree:
        nodes: list[list] = []  # [feature, threshold, left, right, value]
        n_features = X.shape[1]
        m = min(max_features, n_features)

        def build(idx: np.ndarray, depth: int) -> int:
            node = len(nodes)
            ys = y[idx]
            nodes.append([-1, 0.0, -1, -1, float(ys.sum()) / len(ys)])
            if depth >= max_depth or len(idx) < min_samples_split or ys.min() == ys.max():
                return node
            candidates = np.sort(rng.choice(n_features, size=m, replace=False))
            split = _best_split(X[idx], ys, candidates)
            if split is None:
                return node
            feat, thr = split
            mask = X[idx, feat] <= thr
            nodes[node][0], nodes[node][1] = feat, thr
            nodes[node][2] = build(idx[mask], depth + 1)
            nodes[node][3] = build(idx[~mask], depth + 1)
            return node

        build(np.arange(len(y)), 0)
        return cls(*zip(*nodes))

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=int)
        rows = np.arange(len(X))
        while True:
            feat = self.feature[node]
            inner = feat >= 0
            if not inner.any():
                return self.value[node]
            go_left = X[rows[inner], feat[inner]] <= self.threshold[node[inner]]
            node[inner] = np.where(go_left, self.left[node[inner]], self.right[node[inner]])

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> RegressionTree:
        return cls(d["feature"], d["threshold"], d["left"], d["right"], d["value"])


def _best_split(X: np.ndarray, y: np.ndarray, features: np.ndarray) -> tuple[int, float] | None:
    """Split maximizing the drop in squared error; earliest feature, then lowest threshold, wins ties."""
    n = len(y)
    total = y.sum()
    cols = X[:, features]
    order = np.argsort(cols, axis=0, kind="stable")
    xs = cols[order, np.arange(cols.shape[1])]
    left_sum = np.cumsum(y[order], axis=0)[:-1]
    left_n = np.arange(1, n)[:, None]
    # sum^2/n of both children; the no-split value is total^2/n
    score = left_sum**2 / left_n + (total - left_sum) ** 2 / (n - left_n)
    score = np.where(xs[1:] > xs[:-1], score, -np.inf)
    best_per_feature = score.max(axis=0)
    f = int(np.argmax(best_per_feature))
    baseline = total**2 / n
    if not best_per_feature[f] > baseline * (1 + 1e-12) + 1e-300:
        return None
    pos = int(np.argmax(score[:, f]))
    lo, hi = xs[pos, f], xs[pos + 1, f]
    mid = (lo + hi) / 2
    # adjacent floats can round the midpoint up onto the right-hand value
    return int(features[f]), float(mid if mid < hi else lo)


class RandomForest:
    def __init__(self, trees: list[RegressionTree]):
        self.trees = trees

    @classmethod
    def fit(
        cls, X: np.ndarray, y: np.ndarray, n_trees: int, max_depth: int, max_features: int, seed: int
    ) -> RandomForest:
        # canonical row order so the bootstrap does not depend on input order
        order = np.lexsort(np.column_stack([X, y]).T[::-1])
        X, y = X[order], y[order]
        n = len(y)
        trees = []
        for t in range(n_trees):
            rng = np.random.default_rng(np.random.SeedSequence([seed, t]))
            sample = rng.integers(0, n, size=n)
            trees.append(RegressionTree.grow(X[sample], y[sample], max_depth, max_features, rng))
        return cls(trees)

    def tree_predictions(self, X: np.ndarray) -> np.ndarray:
        """Per-tree outputs, shape ``(n_trees, n_samples)``."""
        return np.array([t.predict(X) for t in self.trees])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.tree_predictions(X).mean(axis=0)

    def to_dict(self) -> dict:
        return {"trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> RandomForest:
        return cls([RegressionTree.from_dict(t) for t in d["trees"]])
