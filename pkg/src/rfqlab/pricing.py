"""Quote selection by expected payoff and the RFQ auction utility rules.

A quote's expected payoff is P(fill) - P(exceed limit), where "exceed
limit" means the quote crosses the realized next mid-price adversely (a
bid above it, an offer below it). The optimizer grid-searches offsets
around the predicted next mid, restricted to the safe side, then applies
an anti-tie cap pulling the quote next to the current mid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .market_sim import RfqRecord

SIDE_BID = 1
SIDE_OFFER = 0

GRID_STEP = 0.01
CAP_DISTANCE = 0.01


class PricingError(RuntimeError):
    """Invalid pricing inputs (missing curve, empty grid, bad side)."""


def default_offsets() -> np.ndarray:
    """Quote offsets -1.00 .. +1.00 in 0.01 steps."""
    return np.round(np.arange(-100, 101) * GRID_STEP, 2)


@dataclass
class ExceedCurve:
    """P(exceed limit) per quote offset, estimated on validation RFQs."""

    bond: int
    side: int
    offsets: np.ndarray
    probs: np.ndarray
    n_samples: int

    def __post_init__(self):
        if len(self.offsets) != len(self.probs):
            raise PricingError("offsets and probs must align")
        if np.any((self.probs < 0) | (self.probs > 1)):
            raise PricingError("exceed probabilities must lie in [0, 1]")
        diffs = np.diff(self.probs)
        if self.side == SIDE_BID and np.any(diffs < 0):
            raise PricingError("bid exceed curve must be non-decreasing in offset")
        if self.side == SIDE_OFFER and np.any(diffs > 0):
            raise PricingError("offer exceed curve must be non-increasing in offset")


def exceed_curve(
    predicted_next_mid: np.ndarray,
    true_next_mid: np.ndarray,
    side: int,
    offsets: np.ndarray | None = None,
    bond: int = -1,
) -> ExceedCurve:
    """Average the adverse-crossing indicator over validation RFQs per offset.

    bid: quote = prediction + offset exceeds the limit when it is strictly
    above the true next mid; offer when strictly below.
    """
    predicted_next_mid = np.asarray(predicted_next_mid, dtype=float)
    true_next_mid = np.asarray(true_next_mid, dtype=float)
    if len(predicted_next_mid) != len(true_next_mid):
        raise PricingError("prediction and truth lengths differ")
    if len(predicted_next_mid) == 0:
        raise PricingError("empty validation set")
    if side not in (SIDE_BID, SIDE_OFFER):
        raise PricingError(f"side must be {SIDE_BID} (bid) or {SIDE_OFFER} (offer)")
    if offsets is None:
        offsets = default_offsets()

    quotes = predicted_next_mid[None, :] + np.asarray(offsets, dtype=float)[:, None]
    if side == SIDE_BID:
        exceed = quotes > true_next_mid[None, :]
    else:
        exceed = quotes < true_next_mid[None, :]
    return ExceedCurve(
        bond=bond, side=side,
        offsets=np.asarray(offsets, dtype=float),
        probs=exceed.mean(axis=1),
        n_samples=len(true_next_mid),
    )


def expected_payoff(p_fill: float, p_exceed: float) -> float:
    """P(fill) - P(exceed limit)."""
    if not (0.0 <= p_fill <= 1.0 and 0.0 <= p_exceed <= 1.0):
        raise PricingError("probabilities must lie in [0, 1]")
    return p_fill - p_exceed


@dataclass
class QuoteDecision:
    time: int
    bond: int
    side: int
    predicted_next_mid: float
    quote_price: float
    offset: float
    grid_offset: float
    grid_quote: float
    p_fill: float
    p_exceed: float
    payoff: float
    cap_applied: bool


def optimal_quote(
    rfq: RfqRecord,
    fill_model,
    next_mid_model,
    curve: ExceedCurve,
) -> QuoteDecision:
    """Pick the feasible grid quote maximizing expected payoff, then cap it.

    fill_model must expose fill_probability(rfq, quote_prices) -> array.
    Feasibility keeps bids at or below the predicted next mid and offers at
    or above it. Payoff ties break toward the less aggressive quote (lower
    bid / higher offer). The anti-tie cap then pulls the quote to at least
    mid - 0.01 (bid) or at most mid + 0.01 (offer), clamped back to the
    feasible side of the prediction.
    """
    if curve is None:
        raise PricingError(f"no exceed curve for bond {rfq.bond} side {rfq.side}")
    if curve.side != rfq.side:
        raise PricingError("exceed curve side does not match the RFQ")

    p_hat = float(np.atleast_1d(next_mid_model.predict(rfq.mid_price, rfq.side))[0])
    if rfq.side == SIDE_BID:
        feasible = curve.offsets <= 1e-12
    else:
        feasible = curve.offsets >= -1e-12
    if not np.any(feasible):
        raise PricingError("empty feasible quote grid")

    offsets = curve.offsets[feasible]
    p_exceed = curve.probs[feasible]
    candidates = p_hat + offsets
    p_fill = np.asarray(fill_model.fill_probability(rfq, candidates), dtype=float)
    payoff = p_fill - p_exceed

    if rfq.side == SIDE_BID:
        # offsets ascend from the least aggressive bid; first argmax keeps it
        best = int(np.argmax(payoff))
    else:
        rev = len(payoff) - 1 - int(np.argmax(payoff[::-1]))
        best = rev

    candidate = float(candidates[best])
    if rfq.side == SIDE_BID:
        final = max(candidate, rfq.mid_price - CAP_DISTANCE)
        final = min(final, p_hat)
    else:
        final = min(candidate, rfq.mid_price + CAP_DISTANCE)
        final = max(final, p_hat)
    return QuoteDecision(
        time=rfq.time,
        bond=rfq.bond,
        side=rfq.side,
        predicted_next_mid=p_hat,
        quote_price=final,
        offset=final - p_hat,
        grid_offset=float(offsets[best]),
        grid_quote=candidate,
        p_fill=float(p_fill[best]),
        p_exceed=float(p_exceed[best]),
        payoff=float(payoff[best]),
        cap_applied=final != candidate,
    )


@dataclass
class AuctionOutcome:
    """Participant 0 is us; the rest are competitors."""

    quotes: np.ndarray
    loss: np.ndarray
    winners: list[int]
    utility: np.ndarray


def auction_utility(
    our_quote: float,
    competitor_quotes: np.ndarray,
    true_next_mid: float,
    side: int,
) -> AuctionOutcome:
    """Apply the auction rules to one RFQ.

    Loss-making quotes (adverse crossing of the true next mid) score -1 and
    drop out. Among the rest the most competitive price (highest bid or
    lowest offer) scores +1; an n-way exact price tie scores 1/n - 0.5
    each. Everyone else scores 0.
    """
    if side not in (SIDE_BID, SIDE_OFFER):
        raise PricingError(f"side must be {SIDE_BID} or {SIDE_OFFER}")
    quotes = np.concatenate([[float(our_quote)], np.asarray(competitor_quotes, dtype=float)])
    if side == SIDE_BID:
        loss = quotes > true_next_mid
    else:
        loss = quotes < true_next_mid
    utility = np.zeros(len(quotes))
    utility[loss] = -1.0
    winners: list[int] = []
    eligible = ~loss
    if np.any(eligible):
        pool = quotes[eligible]
        best = pool.max() if side == SIDE_BID else pool.min()
        winners = [int(i) for i in np.flatnonzero(eligible & (quotes == best))]
        n = len(winners)
        utility[winners] = 1.0 if n == 1 else 1.0 / n - 0.5
    return AuctionOutcome(quotes=quotes, loss=loss, winners=winners, utility=utility)
