from __future__ import annotations

import numpy as np

METRICS = ("euclidean", "manhattan")


class KNeighbors:
    """Uniform-weight k-nearest-neighbour regression.

    Equidistant neighbours are ranked by their position in the training
    data, so the lowest training index wins ties.
    """

    def __init__(self, X: np.ndarray, y: np.ndarray, k: int, metric: str = "euclidean"):
        if metric not in METRICS:
            raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
        if k < 1:
            raise ValueError("k must be positive")
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.k = k
        self.metric = metric

    def distances(self, x: np.ndarray) -> np.ndarray:
        diff = self.X - x
        if self.metric == "manhattan":
            return np.abs(diff).sum(axis=1)
        return np.sqrt((diff**2).sum(axis=1))

    def neighbours(self, x: np.ndarray) -> np.ndarray:
        k = min(self.k, len(self.y))
        return np.argsort(self.distances(x), kind="stable")[:k]

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.array([self.y[self.neighbours(x)].mean() for x in np.atleast_2d(X)])

    def to_dict(self) -> dict:
        return {"X": self.X.tolist(), "y": self.y.tolist(), "k": self.k, "metric": self.metric}

    @classmethod
    def from_dict(cls, d: dict) -> KNeighbors:
        p = len(d["X"][0]) if d["X"] else 0
        return cls(np.array(d["X"], dtype=float).reshape(-1, p), np.array(d["y"], dtype=float), d["k"], d["metric"])
