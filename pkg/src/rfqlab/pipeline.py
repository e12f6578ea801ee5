"""End-to-end wiring: datasets to features to fitted models to quotes.

Training rows are the history-valid, non-live records in time order. All
spec'd splits are chronological and leakage-checked: standardization stats
come from training rows only and are reused downstream.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import bnt, linear_models, pricing
from .ensemble import EnsembleModel
from .evaluation import classification_report, log_loss
from .features import (
    FeatureTable,
    StandardizationStats,
    apply_standardization,
    compute_features,
    feature_matrix,
    fit_standardization,
)
from .market_sim import RfqRecord, gen_competitor_quotes, competitor_stream
from .pricing import ExceedCurve, QuoteDecision, SIDE_BID, SIDE_OFFER


class PipelineError(RuntimeError):
    pass


def usable_rows(table: FeatureTable) -> FeatureTable:
    """History-valid, non-live rows: the model-visible slice of a dataset."""
    return table.take(table.history_valid & (table.live == 0))


def chronological_split(table: FeatureTable, test_fraction: float = 0.3
                        ) -> tuple[FeatureTable, FeatureTable]:
    """Time-ordered train/test split; raises if ordering would leak."""
    n = len(table)
    n_test = int(round(n * test_fraction))
    n_train = n - n_test
    if n_train < 1 or n_test < 1:
        raise PipelineError("split leaves an empty train or test set")
    order = np.argsort(table.time, kind="stable")
    table = table.take(order)
    train = table.take(np.arange(n_train))
    test = table.take(np.arange(n_train, n))
    if train.time.max() >= test.time.min():
        raise PipelineError("chronological split violated: train overlaps test in time")
    return train, test


def _fingerprint(x: np.ndarray, y: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(x).tobytes())
    h.update(np.ascontiguousarray(y).tobytes())
    return h.hexdigest()[:16]


@dataclass
class FittedClassifier:
    """A fill-probability model plus the preprocessing it was trained with."""

    kind: str  # "bnt" | "lasso_logistic"
    model: object
    stats: StandardizationStats
    raw_names: list[str]
    one_hot: bool = False
    fingerprint: str = ""
    seed: int = 0

    def _standardize(self, raw: np.ndarray) -> np.ndarray:
        return apply_standardization(raw, self.raw_names, self.stats)

    def predict_table(self, table: FeatureTable) -> np.ndarray:
        raw, names = feature_matrix(table, one_hot=self.one_hot)
        if names != self.raw_names:
            raise PipelineError("feature schema mismatch between model and table")
        return np.atleast_1d(self.model.predict_proba(self._standardize(raw)))

    def predict_raw(self, raw: np.ndarray) -> np.ndarray:
        return np.atleast_1d(self.model.predict_proba(self._standardize(raw)))


@dataclass
class FittedEnsemble:
    """Soft/hard voting over fitted classifiers sharing a feature schema."""

    members: list[FittedClassifier]
    vote_mode: str = "soft"
    threshold: float = 0.5

    def __post_init__(self):
        if len(self.members) < 2:
            raise PipelineError("ensemble needs at least 2 members")

    @property
    def raw_names(self) -> list[str]:
        return self.members[0].raw_names

    @property
    def one_hot(self) -> bool:
        return self.members[0].one_hot

    def predict_table(self, table: FeatureTable) -> np.ndarray:
        return np.mean([m.predict_table(table) for m in self.members], axis=0)

    def predict_raw(self, raw: np.ndarray) -> np.ndarray:
        return np.mean([m.predict_raw(raw) for m in self.members], axis=0)

    def as_ensemble_model(self) -> EnsembleModel:
        class _Member:
            def __init__(self, fitted):
                self.fitted = fitted

            def predict_proba(self, x):
                return self.fitted.predict_raw(x)

        return EnsembleModel(members=[_Member(m) for m in self.members],
                             vote_mode=self.vote_mode, threshold=self.threshold)


def fit_bnt_classifier(
    train: FeatureTable,
    hyperparams: bnt.BntHyperparams | None = None,
    one_hot: bool = False,
) -> FittedClassifier:
    raw, names = feature_matrix(train, one_hot=one_hot)
    stats = fit_standardization(raw, names)
    x = apply_standardization(raw, names, stats)
    y = train.status
    hp = hyperparams or bnt.BntHyperparams()
    model = bnt.fit(x, y, hp, feature_names=list(stats.names))
    return FittedClassifier(
        kind="bnt", model=model, stats=stats, raw_names=names, one_hot=one_hot,
        fingerprint=_fingerprint(x, y), seed=hp.seed,
    )


def fit_lasso_classifier(
    train: FeatureTable,
    lam: float = 0.001,
    one_hot: bool = False,
) -> FittedClassifier:
    raw, names = feature_matrix(train, one_hot=one_hot)
    stats = fit_standardization(raw, names)
    x = apply_standardization(raw, names, stats)
    y = train.status
    model = linear_models.fit_lasso_logistic(x, y, lam)
    return FittedClassifier(
        kind="lasso_logistic", model=model, stats=stats, raw_names=names, one_hot=one_hot,
        fingerprint=_fingerprint(x, y),
    )


def fit_next_mid_model(train: FeatureTable, val_fraction: float = 0.3) -> linear_models.NextMidModel:
    return linear_models.fit_next_mid(
        train.mid_price, train.side, train.next_mid_price, val_fraction=val_fraction
    )


class RfqFillModel:
    """Adapter giving the quote optimizer fill probabilities per candidate quote.

    Spread and response are re-derived at each candidate quote price; all
    other features keep the RFQ's own values, looked up by timestamp.
    """

    def __init__(self, classifier: FittedClassifier | FittedEnsemble, table: FeatureTable):
        self.classifier = classifier
        raw, names = feature_matrix(table, one_hot=classifier.one_hot)
        if names != classifier.raw_names:
            raise PipelineError("feature schema mismatch")
        self._rows = {int(t): raw[i] for i, t in enumerate(table.time)}
        self._spread_col = names.index("spread")
        self._response_col = names.index("response")

    def fill_probability(self, rfq: RfqRecord, quote_prices: np.ndarray) -> np.ndarray:
        base = self._rows.get(int(rfq.time))
        if base is None:
            raise PipelineError(f"no feature row for RFQ at time {rfq.time}")
        quotes = np.atleast_1d(np.asarray(quote_prices, dtype=float))
        rows = np.tile(base, (len(quotes), 1))
        spread = rfq.mid_price - quotes
        rows[:, self._spread_col] = spread
        rows[:, self._response_col] = spread if rfq.side == SIDE_BID else -spread
        return self.classifier.predict_raw(rows)


def build_exceed_curves(
    validation: FeatureTable,
    next_mid_model: linear_models.NextMidModel,
    offsets: np.ndarray | None = None,
    per_bond: bool = True,
) -> dict[tuple[int, int], ExceedCurve]:
    """One exceed curve per (bond, side) from validation predictions."""
    curves: dict[tuple[int, int], ExceedCurve] = {}
    predicted = next_mid_model.predict(validation.mid_price, validation.side)
    bonds = sorted(set(int(b) for b in validation.bond)) if per_bond else [-1]
    for bond in bonds:
        in_bond = np.ones(len(validation), dtype=bool) if bond == -1 else validation.bond == bond
        for side in (SIDE_OFFER, SIDE_BID):
            mask = in_bond & (validation.side == side)
            if not np.any(mask):
                continue
            curves[(bond, side)] = pricing.exceed_curve(
                predicted[mask], validation.next_mid_price[mask], side,
                offsets=offsets, bond=bond,
            )
    return curves


def live_records(records: list[RfqRecord]) -> list[RfqRecord]:
    return [r for r in records if r.live]


def quote_live_rfqs(
    records: list[RfqRecord],
    table: FeatureTable,
    classifier: FittedClassifier | FittedEnsemble,
    next_mid_model: linear_models.NextMidModel,
    curves: dict[tuple[int, int], ExceedCurve],
) -> list[QuoteDecision]:
    fill_model = RfqFillModel(classifier, table)
    decisions = []
    for rfq in live_records(records):
        curve = curves.get((rfq.bond, rfq.side)) or curves.get((-1, rfq.side))
        decisions.append(pricing.optimal_quote(rfq, fill_model, next_mid_model, curve))
    return decisions


@dataclass
class CompetitionRow:
    time: int
    bond: int
    side: int
    our_quote: float
    competitor_quotes: list[float]
    true_next_mid: float
    our_utility: float
    won: bool
    our_loss: bool
    n_winners: int


def compete_live_rfqs(
    records: list[RfqRecord],
    decisions: list[QuoteDecision],
    seed: int,
    quote_band: float = 0.01,
) -> list[CompetitionRow]:
    """Auction every live RFQ against simulated competitor quotes.

    Competitor count follows each RFQ's competition field; quotes come from
    the dedicated competitor substream of the given seed.
    """
    rng = competitor_stream(seed)
    live = live_records(records)
    if len(live) != len(decisions):
        raise PipelineError("one decision per live RFQ required")
    rows = []
    for rfq, decision in zip(live, decisions):
        competitors = gen_competitor_quotes(rfq, rfq.competition, rng, quote_band)
        outcome = pricing.auction_utility(
            decision.quote_price, competitors, rfq.next_mid_price, rfq.side
        )
        rows.append(CompetitionRow(
            time=rfq.time, bond=rfq.bond, side=rfq.side,
            our_quote=decision.quote_price,
            competitor_quotes=[float(q) for q in competitors],
            true_next_mid=rfq.next_mid_price,
            our_utility=float(outcome.utility[0]),
            won=0 in outcome.winners,
            our_loss=bool(outcome.loss[0]),
            n_winners=len(outcome.winners),
        ))
    return rows


def comparison_report(
    train: FeatureTable,
    test: FeatureTable,
    seed: int = 0,
    n_iter: int = 50,
    lam: float = 0.001,
) -> dict:
    """Train LR, ABR2, ABR6, and their soft/hard ensemble; score the test rows."""
    lr = fit_lasso_classifier(train, lam=lam)
    abr2 = fit_bnt_classifier(train, bnt.BntHyperparams(
        n_iter=n_iter, initial_relative_stiffness=2.0, seed=seed))
    abr6 = fit_bnt_classifier(train, bnt.BntHyperparams(
        n_iter=n_iter, initial_relative_stiffness=6.0, seed=seed))
    ens = FittedEnsemble(members=[lr, abr2, abr6])

    y = test.status
    rows = []
    probs = {}
    for name, clf in (("LR", lr), ("ABR2", abr2), ("ABR6", abr6)):
        p = clf.predict_table(test)
        probs[name] = p
        rep = classification_report(y, p)
        rows.append({"model": name, "vote": "", **rep.to_dict()})
    p_soft = ens.predict_table(test)
    probs["Ensemble1"] = p_soft
    rows.append({"model": "Ensemble1", "vote": "soft", **classification_report(y, p_soft).to_dict()})

    member_probs = np.vstack([probs["LR"], probs["ABR2"], probs["ABR6"]])
    votes = (member_probs > 0.5).sum(axis=0)
    hard_class = (votes * 2 > member_probs.shape[0]).astype(float)
    hard = classification_report(y, hard_class)  # classes as degenerate probabilities
    hard_row = {"model": "Ensemble1", "vote": "hard", **hard.to_dict()}
    hard_row["log_loss"] = log_loss(y, p_soft)  # hard votes carry no probability
    rows.append(hard_row)

    by_competition = []
    pred = (p_soft > 0.5).astype(float)
    for level in sorted(set(int(c) for c in test.competition)):
        mask = test.competition == level
        by_competition.append({
            "competition": level,
            "n": int(mask.sum()),
            "error_rate": float((pred[mask] != y[mask]).mean()),
        })
    return {"models": rows, "error_by_competition": by_competition}
