"""Classification metrics, leak-free time-series cross-validation, grid search."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

PROB_CLIP = 1e-12


@dataclass
class EvalReport:
    n: int
    log_loss: float
    accuracy: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int
    histogram_counts: np.ndarray
    histogram_edges: np.ndarray

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "log_loss": self.log_loss,
            "accuracy": self.accuracy,
            "f1": self.f1,
            "confusion": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn},
            "histogram_counts": [int(c) for c in self.histogram_counts],
            "histogram_edges": [float(e) for e in self.histogram_edges],
        }


def log_loss(y_true: np.ndarray, p_pred: np.ndarray) -> float:
    y = np.asarray(y_true, dtype=float)
    p = np.clip(np.asarray(p_pred, dtype=float), PROB_CLIP, 1.0 - PROB_CLIP)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def classification_report(
    y_true: np.ndarray,
    p_pred: np.ndarray,
    threshold: float = 0.5,
) -> EvalReport:
    """Log-loss, accuracy, F1 (positive class = done = 1), confusion counts,
    and a 20-bin histogram of the predicted probabilities."""
    y = np.asarray(y_true, dtype=float).ravel()
    p = np.asarray(p_pred, dtype=float).ravel()
    if len(y) != len(p):
        raise ValueError("y_true and p_pred lengths differ")
    if len(y) == 0:
        raise ValueError("empty input")

    pred = (p > threshold).astype(float)
    tp = int(np.sum((pred == 1) & (y == 1)))
    fp = int(np.sum((pred == 1) & (y == 0)))
    tn = int(np.sum((pred == 0) & (y == 0)))
    fn = int(np.sum((pred == 0) & (y == 1)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    counts, edges = np.histogram(p, bins=20, range=(0.0, 1.0))
    return EvalReport(
        n=len(y),
        log_loss=log_loss(y, p),
        accuracy=float((pred == y).mean()),
        f1=float(f1),
        tp=tp, fp=fp, tn=tn, fn=fn,
        histogram_counts=counts,
        histogram_edges=edges,
    )


@dataclass
class FoldSpec:
    """Ordered (train range, validation range) pairs; half-open row indices.

    Every fold trains strictly before it validates; construction fails on
    any violation, so emitted folds can never leak future rows.
    """

    folds: list[tuple[tuple[int, int], tuple[int, int]]]
    n: int

    def __post_init__(self):
        seen: list[tuple[int, int]] = []
        for (tr_lo, tr_hi), (va_lo, va_hi) in self.folds:
            if not (0 <= tr_lo < tr_hi <= va_lo < va_hi <= self.n):
                raise ValueError(f"fold ordering violated: train [{tr_lo},{tr_hi}) vs val [{va_lo},{va_hi})")
            for lo, hi in seen:
                if va_lo < hi and lo < va_hi:
                    raise ValueError("validation ranges overlap")
            seen.append((va_lo, va_hi))

    @property
    def k(self) -> int:
        return len(self.folds)


def time_series_folds(n: int, k: int, mode: str = "expanding") -> FoldSpec:
    """k chronological folds over n rows split into k+1 equal blocks.

    expanding: fold j trains on blocks [0, j) and validates on block j.
    sliding: fold j trains on block j-1 only.
    """
    if k < 1:
        raise ValueError("k must be positive")
    if n < 2 * k:
        raise ValueError(f"need at least {2 * k} rows for {k} folds")
    if mode not in ("expanding", "sliding"):
        raise ValueError("mode must be 'expanding' or 'sliding'")
    edges = [i * n // (k + 1) for i in range(k + 2)]
    folds = []
    for j in range(1, k + 1):
        tr_lo = 0 if mode == "expanding" else edges[j - 1]
        folds.append(((tr_lo, edges[j]), (edges[j], edges[j + 1])))
    return FoldSpec(folds=folds, n=n)


def expand_grid(param_lists: dict[str, list]) -> list[dict]:
    """Cartesian product of per-parameter value lists, in listed order."""
    keys = list(param_lists)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(param_lists[k] for k in keys))]


@dataclass
class GridSearchResult:
    best_params: dict
    best_score: float
    table: list[dict] = field(default_factory=list)
    summary: list[dict] = field(default_factory=list)


def grid_search_cv(
    fit_fn,
    grid: list[dict],
    x: np.ndarray,
    y: np.ndarray,
    folds: FoldSpec,
    predict_fn=None,
    complexity_key=None,
) -> GridSearchResult:
    """Exhaustively score every grid point on every fold by validation log-loss.

    fit_fn(x_train, y_train, params) must return a model; predict_fn
    defaults to model.predict_proba. A grid point whose training raises is
    marked failed and skipped (error if all fail). Ties on mean log-loss
    break toward the smallest complexity_key (grid position when absent).
    """
    if not grid:
        raise ValueError("empty parameter grid")
    if predict_fn is None:
        predict_fn = lambda model, xv: model.predict_proba(xv)

    table: list[dict] = []
    summary: list[dict] = []
    for gi, params in enumerate(grid):
        scores = []
        failed = False
        for fi, ((tr_lo, tr_hi), (va_lo, va_hi)) in enumerate(folds.folds):
            row = {
                "grid_index": gi,
                "params": dict(params),
                "fold": fi,
                "n_train": tr_hi - tr_lo,
                "n_val": va_hi - va_lo,
                "val_log_loss": None,
                "status": "ok",
            }
            if not failed:
                try:
                    model = fit_fn(x[tr_lo:tr_hi], y[tr_lo:tr_hi], params)
                    p = predict_fn(model, x[va_lo:va_hi])
                    row["val_log_loss"] = log_loss(y[va_lo:va_hi], p)
                    scores.append(row["val_log_loss"])
                except Exception as exc:  # point failure must not kill the search
                    failed = True
                    row["status"] = f"failed: {exc}"
            else:
                row["status"] = "skipped: earlier fold failed"
            table.append(row)
        summary.append({
            "grid_index": gi,
            "params": dict(params),
            "mean_val_log_loss": float(np.mean(scores)) if scores and not failed else None,
            "status": "failed" if failed else "ok",
        })

    ok = [s for s in summary if s["status"] == "ok"]
    if not ok:
        raise RuntimeError("every grid point failed to train")
    if complexity_key is None:
        complexity_key = lambda params: 0
    best = min(ok, key=lambda s: (s["mean_val_log_loss"], complexity_key(s["params"]), s["grid_index"]))
    return GridSearchResult(
        best_params=best["params"],
        best_score=best["mean_val_log_loss"],
        table=table,
        summary=summary,
    )
