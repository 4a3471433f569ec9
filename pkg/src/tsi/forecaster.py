"""Ridge regression from the last-step representation to the next ``k`` steps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

DEFAULT_ALPHAS = (0.1, 0.2, 0.5, 1, 2, 5, 10, 20, 50, 100, 200, 500, 1000)


@dataclass
class RidgeModel:
    """``weights`` is ``[(d + 1), k * m]``; its last row is the unpenalized bias."""

    weights: np.ndarray
    alpha: float
    horizon: int
    n_features: int

    @property
    def coef(self) -> np.ndarray:
        return self.weights[:-1]

    @property
    def bias(self) -> np.ndarray:
        return self.weights[-1]


@dataclass(frozen=True)
class Metrics:
    mse: float
    mae: float
    count: int


def _augment(H: np.ndarray) -> np.ndarray:
    return np.hstack([H, np.ones((H.shape[0], 1))])


def fit_ridge(H, Y, alpha: float, horizon: int | None = None) -> RidgeModel:
    """Closed-form ridge with an appended, unpenalized bias column.

    ``Y`` is ``[N, k * m]`` (or ``[N, k, m]``, flattened row-major over step
    then variable). Solves ``(Z^T Z + alpha J) W = Z^T Y`` by Cholesky, where
    ``J`` is the identity with the bias entry zeroed.
    """
    H = np.asarray(H, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    if H.ndim != 2 or H.shape[0] < 1:
        raise ValueError("need at least one row of shape [N, d]")
    if Y.shape[0] != H.shape[0]:
        raise ValueError(f"{H.shape[0]} representation rows but {Y.shape[0]} target rows")
    if Y.ndim == 3:
        horizon = Y.shape[1]
    k = horizon or 1
    Y = Y.reshape(Y.shape[0], -1)
    Z = _augment(H)
    A = Z.T @ Z
    A[np.diag_indices(H.shape[1])] += alpha
    try:
        factor = linalg.cho_factor(A, lower=False, check_finite=False)
    except linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("ridge system is singular; use alpha > 0") from exc
    W = linalg.cho_solve(factor, Z.T @ Y, check_finite=False)
    if not np.all(np.isfinite(W)):
        raise np.linalg.LinAlgError("ridge solution is not finite")
    return RidgeModel(W, float(alpha), k, Y.shape[1] // k)


def predict(model: RidgeModel, H) -> np.ndarray:
    """Forecast ``[k, m]`` for one representation row, or ``[N, k, m]`` for a batch."""
    H = np.asarray(H, dtype=np.float64)
    d = model.weights.shape[0] - 1
    if H.shape[-1] != d:
        raise ValueError(f"representation has width {H.shape[-1]}, model expects {d}")
    out = H @ model.coef + model.bias
    return out.reshape(*H.shape[:-1], model.horizon, model.n_features)


def evaluate(predictions, truths) -> Metrics:
    """MSE and MAE over every (window, step, variable) entry."""
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(truths, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"prediction shape {p.shape} differs from truth shape {t.shape}")
    if p.size == 0:
        raise ValueError("nothing to evaluate")
    err = p - t
    return Metrics(mse=float(np.mean(err * err)), mae=float(np.mean(np.abs(err))), count=int(err.size))


def select_alpha(H_train, Y_train, H_val, Y_val, grid=DEFAULT_ALPHAS) -> float:
    """Grid value with the lowest validation MSE; ties go to the smaller alpha."""
    grid = sorted(float(a) for a in grid)
    if not grid:
        raise ValueError("alpha grid is empty")
    Y_val = np.asarray(Y_val, dtype=np.float64)
    best, best_mse = None, np.inf
    for alpha in grid:
        model = fit_ridge(H_train, Y_train, alpha, horizon=_horizon(Y_val))
        mse = evaluate(predict(model, H_val).reshape(Y_val.shape), Y_val).mse
        if mse < best_mse:
            best, best_mse = alpha, mse
    return best


def _horizon(Y: np.ndarray) -> int:
    return Y.shape[1] if Y.ndim == 3 else 1


def persistence(X, horizon: int) -> np.ndarray:
    """Repeat the last observed row of each window ``[..., h, m]`` for ``horizon`` steps."""
    X = np.asarray(X, dtype=np.float64)
    last = X[..., -1:, :]
    return np.repeat(last, horizon, axis=-2)
