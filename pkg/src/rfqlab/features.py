"""Feature engineering for RFQ records and empirical fill-rate curves.

Engineered columns per RFQ: per-bond mid-price momentum at lags 5/10/20,
spread (mid minus quoted), side-signed response, and log notional. Rows
whose bond has fewer than 20 prior observations are flagged so model code
can exclude them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import LSQUnivariateSpline

from .market_sim import RfqRecord


class FeatureError(ValueError):
    """Invalid input to a feature transformation."""


CONTINUOUS_FEATURES = ("mom5", "mom10", "mom20", "spread", "response", "log_notional")
CATEGORICAL_FEATURES = ("side", "counterparty", "competition")

# Fixed category values so one-hot layouts never depend on the data seen.
CATEGORY_LEVELS = {"side": (0, 1), "counterparty": (0, 1, 2, 3), "competition": (1, 2, 3, 4)}

MIN_HISTORY = 20


@dataclass
class FeatureTable:
    """Column-oriented engineered features plus row metadata."""

    mom5: np.ndarray
    mom10: np.ndarray
    mom20: np.ndarray
    spread: np.ndarray
    response: np.ndarray
    log_notional: np.ndarray
    side: np.ndarray
    counterparty: np.ndarray
    competition: np.ndarray
    history_valid: np.ndarray
    time: np.ndarray
    bond: np.ndarray
    status: np.ndarray
    live: np.ndarray
    mid_price: np.ndarray
    quoted_price: np.ndarray
    next_mid_price: np.ndarray

    def __len__(self) -> int:
        return len(self.time)

    def take(self, mask_or_index) -> "FeatureTable":
        cols = {name: getattr(self, name)[mask_or_index] for name in self.__dataclass_fields__}
        return FeatureTable(**cols)

    def column(self, name: str) -> np.ndarray:
        if name not in self.__dataclass_fields__:
            raise FeatureError(f"unknown feature column {name!r}")
        return getattr(self, name)


def compute_features(records: list[RfqRecord]) -> FeatureTable:
    """Engineer the model feature set from RFQ records ordered by time.

    Momentum lags run over each bond's own mid-price sequence; rows with
    fewer than ``MIN_HISTORY`` prior observations on their bond keep zeroed
    momentum and history_valid=False.
    """
    if not records:
        raise FeatureError("no records")
    n = len(records)
    out = {name: np.zeros(n) for name in ("mom5", "mom10", "mom20")}
    history: dict[int, list[float]] = {}
    history_valid = np.zeros(n, dtype=bool)

    for i, rec in enumerate(records):
        hist = history.setdefault(rec.bond, [])
        for lag, col in ((5, "mom5"), (10, "mom10"), (20, "mom20")):
            if len(hist) >= lag:
                past = hist[-lag]
                if past == 0.0:
                    raise FeatureError(
                        f"mid price 0 at lag {lag} for bond {rec.bond} (row {i})"
                    )
                out[col][i] = rec.mid_price / past - 1.0
        history_valid[i] = len(hist) >= MIN_HISTORY
        hist.append(rec.mid_price)

    spread = np.array([r.mid_price - r.quoted_price for r in records])
    side = np.array([r.side for r in records], dtype=float)
    return FeatureTable(
        mom5=out["mom5"],
        mom10=out["mom10"],
        mom20=out["mom20"],
        spread=spread,
        response=np.where(side == 1, spread, -spread),
        log_notional=np.array([math.log(r.notional) for r in records]),
        side=side,
        counterparty=np.array([r.counterparty for r in records], dtype=float),
        competition=np.array([r.competition for r in records], dtype=float),
        history_valid=history_valid,
        time=np.array([r.time for r in records], dtype=int),
        bond=np.array([r.bond for r in records], dtype=int),
        status=np.array([r.status for r in records], dtype=float),
        live=np.array([r.live for r in records], dtype=int),
        mid_price=np.array([r.mid_price for r in records]),
        quoted_price=np.array([r.quoted_price for r in records]),
        next_mid_price=np.array([r.next_mid_price for r in records]),
    )


def feature_matrix(table: FeatureTable, one_hot: bool = False) -> tuple[np.ndarray, list[str]]:
    """Raw (unstandardized) design matrix: continuous columns then categoricals."""
    cols = [table.column(name) for name in CONTINUOUS_FEATURES]
    names = list(CONTINUOUS_FEATURES)
    for cat in CATEGORICAL_FEATURES:
        values = table.column(cat)
        if one_hot and cat != "side":
            for level in CATEGORY_LEVELS[cat]:
                cols.append((values == level).astype(float))
                names.append(f"{cat}_{level}")
        else:
            cols.append(values.astype(float))
            names.append(cat)
    return np.column_stack(cols), names


@dataclass
class StandardizationStats:
    """Per-column center/scale fitted on training rows.

    Continuous columns are z-scored; categorical (and one-hot) columns pass
    through with center 0 / scale 1. Constant columns are dropped entirely
    and listed in ``dropped``.
    """

    names: list[str]
    center: np.ndarray
    scale: np.ndarray
    dropped: list[str] = field(default_factory=list)

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise FeatureError(f"column {name!r} not in standardization schema") from None


def fit_standardization(x: np.ndarray, names: list[str]) -> StandardizationStats:
    if x.size == 0:
        raise FeatureError("cannot fit standardization on empty input")
    keep, center, scale, dropped = [], [], [], []
    for j, name in enumerate(names):
        col = x[:, j]
        if np.ptp(col) == 0.0:
            dropped.append(name)
            continue
        keep.append(j)
        if name in CONTINUOUS_FEATURES:
            center.append(col.mean())
            scale.append(col.std())
        else:
            center.append(0.0)
            scale.append(1.0)
    return StandardizationStats(
        names=[names[j] for j in keep],
        center=np.array(center),
        scale=np.array(scale),
        dropped=dropped,
    )


def apply_standardization(x: np.ndarray, names: list[str], stats: StandardizationStats) -> np.ndarray:
    idx = [names.index(n) for n in stats.names]
    return (x[:, idx] - stats.center) / stats.scale


def standardize(
    x: np.ndarray,
    names: list[str],
    stats: StandardizationStats | None = None,
) -> tuple[np.ndarray, StandardizationStats]:
    """Z-score continuous columns; fit stats on the input unless given."""
    if stats is None:
        stats = fit_standardization(x, names)
    return apply_standardization(x, names, stats), stats


def unstandardize(x: np.ndarray, stats: StandardizationStats) -> np.ndarray:
    return x * stats.scale + stats.center


@dataclass
class FillRateCurve:
    """Binned empirical fill rate for one feature, with a smoothed overlay."""

    feature: str
    centers: np.ndarray
    raw: np.ndarray
    smooth: np.ndarray
    counts: np.ndarray
    note: str = ""


def _smooth_rates(centers: np.ndarray, raw: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Clamped cubic smoothing with interior knots at the center deciles.

    Falls back to fewer knots, then to a plain cubic least-squares fit,
    when the bin count cannot support the knot layout.
    """
    if len(centers) < 4:
        return raw.copy()
    weights = np.sqrt(counts.astype(float))
    for n_knots in (9, 4, 2, 0):
        if n_knots >= len(centers) - 2:
            continue
        qs = np.linspace(0, 1, n_knots + 2)[1:-1]
        knots = np.quantile(centers, qs) if n_knots else np.array([])
        knots = knots[(knots > centers[0]) & (knots < centers[-1])]
        try:
            spline = LSQUnivariateSpline(centers, raw, t=knots, k=3, w=weights)
            return np.clip(spline(centers), 0.0, 1.0)
        except ValueError:
            continue
    coeffs = np.polyfit(centers, raw, deg=min(3, len(centers) - 1), w=weights)
    return np.clip(np.polyval(coeffs, centers), 0.0, 1.0)


def fill_rate_curve(
    values: np.ndarray,
    statuses: np.ndarray,
    n_bins: int = 20,
    smooth: bool = True,
    feature: str = "",
) -> FillRateCurve:
    """Equal-count binned fill rates with an optional smoothed overlay.

    Bin edges are value quantiles (deduplicated, so discrete features get
    one bin per distinct mass point); the bin center is the mean value of
    its members. When all statuses are identical, smoothing is skipped and
    the note says so.
    """
    values = np.asarray(values, dtype=float)
    statuses = np.asarray(statuses, dtype=float)
    if len(values) != len(statuses):
        raise FeatureError("values and statuses must have the same length")
    if len(values) == 0:
        raise FeatureError("empty input")
    if n_bins < 2:
        raise FeatureError("n_bins must be at least 2")

    edges = np.unique(np.quantile(values, np.linspace(0.0, 1.0, n_bins + 1)))
    bin_idx = np.clip(np.searchsorted(edges, values, side="right") - 1, 0, len(edges) - 2)
    centers, raw, counts = [], [], []
    for b in range(len(edges) - 1):
        mask = bin_idx == b
        cnt = int(mask.sum())
        if cnt == 0:
            continue
        centers.append(values[mask].mean())
        raw.append(statuses[mask].mean())
        counts.append(cnt)
    centers = np.array(centers)
    raw = np.array(raw)
    counts = np.array(counts, dtype=int)

    note = ""
    if not smooth:
        smoothed = raw.copy()
        note = "smoothing disabled"
    elif np.ptp(statuses) == 0.0:
        smoothed = raw.copy()
        note = "constant labels; smoothing skipped"
    else:
        smoothed = _smooth_rates(centers, raw, counts)
    return FillRateCurve(
        feature=feature, centers=centers, raw=raw, smooth=smoothed, counts=counts, note=note
    )
