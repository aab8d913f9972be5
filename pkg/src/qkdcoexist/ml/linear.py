"""Least squares, ridge and lasso on standardized features.

All three work on centred data so the intercept is never penalized; it is
recovered as the target mean at the end.
"""

from __future__ import annotations

import numpy as np


class SingularMatrixError(np.linalg.LinAlgError):
    pass


class LinearModel:
    """Coefficients ``w`` and intercept ``b`` such that ``y ~ X @ w + b``."""

    def __init__(self, coef: np.ndarray, intercept: float, sweeps: int = 0):
        self.coef = np.asarray(coef, dtype=float)
        self.intercept = float(intercept)
        self.sweeps = sweeps

    def predict(self, X: np.ndarray) -> np.ndarray:
        return X @ self.coef + self.intercept

    def to_dict(self) -> dict:
        return {"coef": self.coef.tolist(), "intercept": self.intercept, "sweeps": self.sweeps}

    @classmethod
    def from_dict(cls, d: dict) -> LinearModel:
        return cls(np.array(d["coef"], dtype=float), d["intercept"], d.get("sweeps", 0))


def _centre(X, y):
    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    return X - x_mean, y - y_mean, x_mean, y_mean


def _with_intercept(coef, x_mean, y_mean, sweeps=0) -> LinearModel:
    return LinearModel(coef, y_mean - float(x_mean @ coef), sweeps)


def fit_least_squares(X: np.ndarray, y: np.ndarray) -> LinearModel:
    Xc, yc, x_mean, y_mean = _centre(X, y)
    gram = Xc.T @ Xc
    if gram.size and (np.linalg.matrix_rank(gram) < gram.shape[0] or np.linalg.cond(gram) > 1e12):
        raise SingularMatrixError(
            "normal equations are singular (collinear or constant features); use Ridge with lambda > 0"
        )
    coef = np.linalg.solve(gram, Xc.T @ yc) if gram.size else np.zeros(0)
    return _with_intercept(coef, x_mean, y_mean)


def fit_ridge(X: np.ndarray, y: np.ndarray, lam: float) -> LinearModel:
    """Minimizes ``||y - Xw - b||^2 + lam * ||w||^2``."""
    if lam < 0:
        raise ValueError("ridge lambda must be non-negative")
    if lam == 0:
        return fit_least_squares(X, y)
    Xc, yc, x_mean, y_mean = _centre(X, y)
    p = X.shape[1]
    coef = np.linalg.solve(Xc.T @ Xc + lam * np.eye(p), Xc.T @ yc)
    return _with_intercept(coef, x_mean, y_mean)


def soft_threshold(z: float, gamma: float) -> float:
    if z > gamma:
        return z - gamma
    if z < -gamma:
        return z + gamma
    return 0.0


def fit_lasso(
    X: np.ndarray, y: np.ndarray, lam: float, tol: float = 1e-8, max_sweeps: int = 10_000
) -> LinearModel:
    """Cyclic coordinate descent on ``(1/2n) ||y - Xw - b||^2 + lam * ||w||_1``.

    Stops once no coefficient moves by more than ``tol`` in a full sweep.
    """
    if lam < 0:
        raise ValueError("lasso lambda must be non-negative")
    Xc, yc, x_mean, y_mean = _centre(X, y)
    n, p = Xc.shape
    # covariance updates keep each coordinate step O(p) instead of O(n)
    gram = Xc.T @ Xc / n
    xty = Xc.T @ yc / n
    col_sq = np.diag(gram).tolist()
    coef = np.zeros(p)
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        max_step = 0.0
        for j in range(p):
            if col_sq[j] == 0.0:
                continue
            old = coef[j]
            rho = xty[j] - gram[j] @ coef + col_sq[j] * old
            new = soft_threshold(rho, lam) / col_sq[j]
            if new != old:
                coef[j] = new
                max_step = max(max_step, abs(new - old))
        if max_step <= tol:
            break
    return _with_intercept(coef, x_mean, y_mean, sweeps)
