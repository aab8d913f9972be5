"""Regressors mapping the 7 link features to noise, SKR and QBER.

One :class:`FittedModel` predicts one target. Features are z-scored with
statistics taken from the training rows only; the statistics travel with
the fitted model so predictions need nothing else.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..dataset import FEATURE_NAMES, TARGET_NAMES, DatasetBundle, Instance, feature_matrix, target_vector
from .forest import RandomForest
from .linear import LinearModel, SingularMatrixError, fit_lasso, fit_least_squares, fit_ridge
from .neighbors import KNeighbors

KINDS = ("RF", "LS", "KN", "Lasso", "Ridge")
MODEL_FORMAT = "qkdcoexist.model/1"
PREDICTOR_FORMAT = "qkdcoexist.predictor/1"

__all__ = [
    "KINDS",
    "ModelSpec",
    "FittedModel",
    "Predictor",
    "ComparisonTable",
    "SingularMatrixError",
    "fit",
    "fit_arrays",
    "predict",
    "mse",
    "compare_models",
    "default_specs",
    "fit_predictor",
]


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    k: int = 5
    metric: str = "euclidean"
    lam: float | None = None  # Ridge defaults to 1.0, Lasso to 0.01
    n_trees: int = 100
    max_depth: int = 8
    max_features: int = math.ceil(len(FEATURE_NAMES) / 3)
    bootstrap_seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if self.k < 1 or self.n_trees < 1 or self.max_depth < 1 or self.max_features < 1:
            raise ValueError("k, n_trees, max_depth and max_features must be positive")
        if self.lam is not None and self.lam < 0:
            raise ValueError("lambda must be non-negative")

    @property
    def penalty(self) -> float:
        if self.lam is not None:
            return self.lam
        return {"Ridge": 1.0, "Lasso": 0.01}.get(self.kind, 0.0)


def default_specs(seed: int = 0) -> list[ModelSpec]:
    return [ModelSpec(kind, bootstrap_seed=seed) for kind in KINDS]


@dataclass(frozen=True)
class FittedModel:
    spec: ModelSpec
    target: str
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    estimator: LinearModel | KNeighbors | RandomForest = field(repr=False)

    def standardize(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(self.feature_mean):
            raise ValueError(f"expected {len(self.feature_mean)} features, got {X.shape[1]}")
        return (X - self.feature_mean) / self.feature_scale

    def predict_many(self, X) -> np.ndarray:
        return self.estimator.predict(self.standardize(X))

    @property
    def coefficients(self) -> tuple[np.ndarray, float]:
        """Linear models only: ``(weights, intercept)`` in raw feature units."""
        if not isinstance(self.estimator, LinearModel):
            raise TypeError(f"{self.spec.kind} has no coefficients")
        w = self.estimator.coef / self.feature_scale
        return w, self.estimator.intercept - float(self.feature_mean @ w)

    def tree_spread(self, x) -> float:
        """Standard deviation of the individual tree outputs at ``x`` (RF only)."""
        if not isinstance(self.estimator, RandomForest):
            raise TypeError("tree spread is only defined for RF")
        return float(self.estimator.tree_predictions(self.standardize(x)).std())

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "spec": asdict(self.spec),
            "target": self.target,
            "feature_mean": self.feature_mean.tolist(),
            "feature_scale": self.feature_scale.tolist(),
            "params": self.estimator.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> FittedModel:
        if d.get("format") != MODEL_FORMAT:
            raise ValueError(f"unsupported model format {d.get('format')!r}")
        spec = ModelSpec(**d["spec"])
        loader = {"RF": RandomForest, "KN": KNeighbors}.get(spec.kind, LinearModel)
        return cls(
            spec,
            d["target"],
            np.array(d["feature_mean"], dtype=float),
            np.array(d["feature_scale"], dtype=float),
            loader.from_dict(d["params"]),
        )


def fit_arrays(spec: ModelSpec, X, y, target: str = "") -> FittedModel:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if len(y) == 0:
        raise ValueError("cannot fit on an empty dataset")
    if len(y) < 2:
        raise ValueError("need at least 2 instances to fit")
    if X.shape[0] != len(y):
        raise ValueError("feature rows and targets differ in length")
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    Xs = (X - mean) / scale
    if spec.kind == "LS":
        est = fit_least_squares(Xs, y)
    elif spec.kind == "Ridge":
        est = fit_ridge(Xs, y, spec.penalty)
    elif spec.kind == "Lasso":
        est = fit_lasso(Xs, y, spec.penalty)
    elif spec.kind == "KN":
        est = KNeighbors(Xs, y, spec.k, spec.metric)
    else:
        est = RandomForest.fit(Xs, y, spec.n_trees, spec.max_depth, spec.max_features, spec.bootstrap_seed)
    return FittedModel(spec, target, mean, scale, est)


def fit(spec: ModelSpec, instances: Sequence[Instance], target_selector: str | Callable[[Instance], float]) -> FittedModel:
    """Fit one model on ``instances``; ``target_selector`` is a target name or a callable."""
    if not instances:
        raise ValueError("cannot fit on an empty dataset")
    if callable(target_selector):
        y = np.array([target_selector(i) for i in instances], dtype=float)
        name = getattr(target_selector, "__name__", "custom")
    else:
        if target_selector not in TARGET_NAMES:
            raise ValueError(f"unknown target {target_selector!r}")
        y = target_vector(instances, target_selector)
        name = target_selector
    return fit_arrays(spec, feature_matrix(instances), y, name)


def predict(model: FittedModel, feature_vector: Sequence[float]) -> float:
    x = np.asarray(feature_vector, dtype=float)
    if x.ndim != 1:
        raise ValueError("predict takes a single feature vector")
    return float(model.predict_many(x)[0])


def mse(predictions: Sequence[float], actuals: Sequence[float]) -> float:
    p = np.asarray(predictions, dtype=float)
    a = np.asarray(actuals, dtype=float)
    if p.shape != a.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {a.shape}")
    if p.size == 0:
        raise ValueError("mse of empty input")
    return float(np.mean((p - a) ** 2))


@dataclass(frozen=True)
class Predictor:
    """One fitted model per target, all of the same kind."""

    models: dict[str, FittedModel]

    @property
    def kind(self) -> str:
        return next(iter(self.models.values())).spec.kind

    def predict(self, features: Sequence[float]) -> dict[str, float]:
        return {t: predict(self.models[t], features) for t in TARGET_NAMES}

    def to_dict(self) -> dict:
        return {"format": PREDICTOR_FORMAT, "models": {t: m.to_dict() for t, m in self.models.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> Predictor:
        if d.get("format") != PREDICTOR_FORMAT:
            raise ValueError(f"unsupported predictor format {d.get('format')!r}")
        return cls({t: FittedModel.from_dict(m) for t, m in d["models"].items()})

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> Predictor:
        return cls.from_dict(json.loads(Path(path).read_text()))


def fit_predictor(spec: ModelSpec, instances: Sequence[Instance]) -> Predictor:
    return Predictor({t: fit(spec, instances, t) for t in TARGET_NAMES})


BASELINE = "Mean"


@dataclass(frozen=True)
class ComparisonTable:
    """Validation MSE per (model, target); ``per_set[model][target]`` keeps each set's value."""

    models: tuple[str, ...]
    per_set: dict[str, dict[str, tuple[float, ...]]]

    def mean(self, model: str, target: str) -> float:
        return float(np.mean(self.per_set[model][target]))

    @property
    def rows(self) -> list[dict]:
        return [{"model": m, **{t: self.mean(m, t) for t in TARGET_NAMES}} for m in self.models]

    def beats_baseline(self, model: str) -> bool:
        return all(
            v < b
            for t in TARGET_NAMES
            for v, b in zip(self.per_set[model][t], self.per_set[BASELINE][t])
        )

    def format(self) -> str:
        head = f"{'model':<8}" + "".join(f"{t + ' MSE':>16}" for t in TARGET_NAMES)
        lines = [head, "-" * len(head)]
        for row in self.rows:
            lines.append(f"{row['model']:<8}" + "".join(f"{row[t]:>16.4e}" for t in TARGET_NAMES))
        return "\n".join(lines)


def compare_models(bundle: DatasetBundle, specs: Sequence[ModelSpec]) -> ComparisonTable:
    """Fit each spec on training set ``s`` and score it on validation set ``s``, for every ``s``."""
    per_set: dict[str, dict[str, list[float]]] = {}
    names = [s.kind for s in specs] + [BASELINE]
    if len(set(names)) != len(names):
        raise ValueError("model kinds in a comparison must be unique")
    for train, val in zip(bundle.training_sets, bundle.validation_sets):
        Xv = feature_matrix(val)
        for target in TARGET_NAMES:
            yv = target_vector(val, target)
            yt = target_vector(train, target)
            per_set.setdefault(BASELINE, {}).setdefault(target, []).append(mse(np.full_like(yv, yt.mean()), yv))
            for spec in specs:
                model = fit(spec, train, target)
                per_set.setdefault(spec.kind, {}).setdefault(target, []).append(mse(model.predict_many(Xv), yv))
    return ComparisonTable(
        tuple(names),
        {m: {t: tuple(v) for t, v in d.items()} for m, d in per_set.items()},
    )


def with_overrides(spec: ModelSpec, **overrides) -> ModelSpec:
    return replace(spec, **{k: v for k, v in overrides.items() if v is not None})
