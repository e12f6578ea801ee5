"""Lasso-regularized logistic regression and the next-mid-price regression.

The logistic baseline is fit by proximal gradient (ISTA) with an exact
soft-thresholding prox and a fixed 1/L step from the data's Lipschitz
bound; the intercept is never penalized. The next-mid model is a
closed-form two-regressor least squares with adjusted R-squared reported
on a chronological holdout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from scipy.stats import norm


@dataclass
class LassoLogisticModel:
    coef: np.ndarray
    intercept: float
    lam: float
    n_iter_run: int
    converged: bool
    final_change: float

    def predict_proba(self, x: np.ndarray) -> np.ndarray | float:
        return predict_logistic(self, x)


def soft_threshold(v: np.ndarray, t: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def fit_lasso_logistic(
    x: np.ndarray,
    y: np.ndarray,
    lam: float,
    max_iter: int = 10_000,
    tol: float = 1e-8,
) -> LassoLogisticModel:
    """Minimize mean log-loss + lam * ||w||_1 (intercept unpenalized)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if x.ndim != 2 or x.shape[0] != len(y):
        raise ValueError("x must be (m, d) with one label per row")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("labels must be binary 0/1")
    if lam < 0:
        raise ValueError("lam must be non-negative")

    m, d = x.shape
    design = np.column_stack([np.ones(m), x])
    # Lipschitz bound of the mean log-loss gradient: lmax(X'X) / (4m).
    lips = float(np.linalg.eigvalsh(design.T @ design).max()) / (4.0 * m)
    step = 1.0 / lips

    w = np.zeros(d)
    b = 0.0
    change = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        p = expit(b + x @ w)
        grad_w = x.T @ (p - y) / m
        grad_b = float(np.mean(p - y))
        w_new = soft_threshold(w - step * grad_w, step * lam)
        b_new = b - step * grad_b
        change = max(float(np.max(np.abs(w_new - w), initial=0.0)), abs(b_new - b))
        w, b = w_new, b_new
        if change < tol:
            break
    return LassoLogisticModel(
        coef=w, intercept=b, lam=lam, n_iter_run=it,
        converged=change < tol, final_change=change,
    )


def predict_logistic(model: LassoLogisticModel, x: np.ndarray) -> np.ndarray | float:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xm = x[None, :] if single else x
    if xm.shape[1] != len(model.coef):
        raise ValueError(f"expected {len(model.coef)} features, got {xm.shape[1]}")
    out = expit(model.intercept + xm @ model.coef)
    return float(out[0]) if single else out


@dataclass
class NextMidModel:
    intercept: float
    coef_mid: float
    coef_side: float
    adj_r2: float
    n_train: int
    n_val: int

    def predict(self, mid_price: np.ndarray, side: np.ndarray) -> np.ndarray:
        return self.intercept + self.coef_mid * np.asarray(mid_price, dtype=float) \
            + self.coef_side * np.asarray(side, dtype=float)


def fit_next_mid(
    mid_price: np.ndarray,
    side: np.ndarray,
    next_mid: np.ndarray,
    val_fraction: float = 0.3,
) -> NextMidModel:
    """Closed-form least squares of next mid on (mid, side), rows in time order.

    The trailing ``val_fraction`` of rows is held out for the adjusted
    R-squared report and never used in the normal equations.
    """
    mid_price = np.asarray(mid_price, dtype=float)
    side = np.asarray(side, dtype=float)
    next_mid = np.asarray(next_mid, dtype=float)
    n = len(mid_price)
    if not (len(side) == len(next_mid) == n):
        raise ValueError("inputs must have equal length")
    n_val = int(round(n * val_fraction))
    n_train = n - n_val
    if n_train < 4 or n_val < 2:
        raise ValueError("too few rows for a train/validation split")

    a_train = np.column_stack([np.ones(n_train), mid_price[:n_train], side[:n_train]])
    if np.ptp(mid_price[:n_train]) == 0.0:
        raise ValueError("singular design: MidPrice is constant on the training rows")
    if np.linalg.matrix_rank(a_train) < 3:
        raise ValueError("singular design matrix")
    # QR-based solve: the raw design is ill-conditioned (mid >> spread moves)
    theta = np.linalg.lstsq(a_train, next_mid[:n_train], rcond=None)[0]

    a_val = np.column_stack([np.ones(n_val), mid_price[n_train:], side[n_train:]])
    y_val = next_mid[n_train:]
    resid = y_val - a_val @ theta
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((y_val - y_val.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    adj_r2 = 1.0 - (1.0 - r2) * (n_val - 1) / (n_val - 2 - 1)
    return NextMidModel(
        intercept=float(theta[0]), coef_mid=float(theta[1]), coef_side=float(theta[2]),
        adj_r2=float(adj_r2), n_train=n_train, n_val=n_val,
    )


def qq_data(residuals: np.ndarray) -> np.ndarray:
    """Standard-normal Q-Q pairs for standardized residuals.

    Returns (n, 2) rows of (theoretical quantile, empirical quantile) at
    plotting positions (i - 0.5) / n.
    """
    residuals = np.asarray(residuals, dtype=float).ravel()
    n = len(residuals)
    if n < 10:
        raise ValueError("need at least 10 residuals")
    std = residuals.std(ddof=1)
    if std == 0.0:
        raise ValueError("zero-variance residuals")
    standardized = np.sort((residuals - residuals.mean()) / std)
    theoretical = norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    return np.column_stack([theoretical, standardized])
