"""Synthetic TBA RFQ market data generation.

All randomness flows through numpy Generators derived from a single config
seed, one independent substream per concern (price paths, RFQ fields, quote
offsets, fill labels, competitor quotes), so identical configs reproduce
identical datasets byte for byte.

Price paths: the spread follows a geometric Brownian motion while bid and
ask are rebuilt each step around the previous mid with independent normal
shocks. Quotes sit inside a narrow uniform band around the mid. Fill labels
come from one of three selectable label modes (see ``gen_status``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit


class SimulationError(RuntimeError):
    """A generator produced non-finite values; points at bad config magnitudes."""


STATUS_MODES = ("verbatim", "ring_distance", "feature_linked")

# Ask is clamped to bid + this when shocks would cross the book.
CROSS_CLAMP = 1e-4

# Mean of ln(notional) when the base-10 exponent is uniform on {3..7};
# centers the default feature-linked intercept at 50% fill probability.
LOG_NOTIONAL_MEAN = 5.0 * math.log(10.0)

# Shipped default seed; golden regression files are generated from it.
DEFAULT_SEED = 42

# Substream tags (second entry of the Generator seed sequence).
_PATH_STREAM = 0
_FIELD_STREAM = 1
_QUOTE_STREAM = 2
_STATUS_STREAM = 3
_COMPETITOR_STREAM = 4


def substream(seed: int, *tags: int) -> np.random.Generator:
    """Independent generator derived from a base seed and integer tags."""
    return np.random.default_rng([int(seed), *map(int, tags)])


@dataclass
class StatusCoeffs:
    """Logit coefficients for the feature_linked label mode.

    Fill probability is sigmoid(intercept + a_response*Response
    + a_log_notional*LogNotional + a_mom5*MOM5). The negative response and
    notional coefficients make fills rarer when the quote concedes less or
    the ticket is larger. The intercept cancels the mean LogNotional term,
    so an average RFQ with zero response and flat momentum sits at p = 0.5.
    """

    a_response: float = -250.0
    a_log_notional: float = -0.15
    a_mom5: float = 5000.0
    intercept: float = 0.15 * LOG_NOTIONAL_MEAN

    def logit(self, response: float, log_notional: float, mom5: float) -> float:
        return (
            self.intercept
            + self.a_response * response
            + self.a_log_notional * log_notional
            + self.a_mom5 * mom5
        )


@dataclass
class SimConfig:
    """Knobs for the RFQ dataset generator.

    The trailing ``n_live`` records are flagged live: real quoting targets
    whose fill status must not be used for training.
    """

    n_records: int = 10005
    n_live: int = 5
    n_bonds: int = 5
    p0: float = 124.24
    s0: float = 0.1
    mu: float = 0.0
    sigma_s: float = 0.02
    sigma_b: float = 0.005
    sigma_a: float = 0.005
    dt: float = 1.0
    quote_band: float = 0.01
    status_mode: str = "feature_linked"
    seed: int = DEFAULT_SEED
    status_coeffs: StatusCoeffs = field(default_factory=StatusCoeffs)

    def validate(self) -> None:
        if self.n_records < 1:
            raise ValueError("n_records must be positive")
        if not 0 <= self.n_live < self.n_records:
            raise ValueError("n_live must satisfy 0 <= n_live < n_records")
        if self.n_bonds < 1:
            raise ValueError("n_bonds must be positive")
        if self.p0 <= 0 or self.s0 <= 0:
            raise ValueError("p0 and s0 must be positive")
        if min(self.sigma_s, self.sigma_b, self.sigma_a) < 0:
            raise ValueError("volatilities must be non-negative")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.quote_band <= 0:
            raise ValueError("quote_band must be positive")
        if self.status_mode not in STATUS_MODES:
            raise ValueError(f"status_mode must be one of {STATUS_MODES}")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")


@dataclass
class PricePath:
    """Level-1 price sequence for one bond. mid is exactly (bid+ask)/2."""

    bond_id: int
    bid: np.ndarray
    ask: np.ndarray
    mid: np.ndarray
    spread: np.ndarray

    @property
    def n_steps(self) -> int:
        return len(self.mid)


@dataclass
class RfqRecord:
    """One RFQ row. side: 1=bid, 0=offer. status: 1=done, 0=missed."""

    time: int
    bond: int
    side: int
    notional: int
    counterparty: int
    mid_price: float
    quoted_price: float
    competition: int
    status: int
    next_mid_price: float
    live: int = 0


def gen_price_paths(config: SimConfig, bond_id: int, n_steps: int | None = None) -> PricePath:
    """Simulate one bond's bid/ask/mid path on its own random stream.

    The spread is GBM: S_{t+1} = S_t * exp(mu*dt + sigma_s*eps*sqrt(dt)).
    Bid/ask re-center on the previous mid with the new half-spread plus
    normal shocks; a crossed book is clamped to ask = bid + 1e-4 so path
    length and determinism are preserved.
    """
    config.validate()
    n = config.n_records if n_steps is None else int(n_steps)
    if n < 1:
        raise ValueError("n_steps must be positive")
    rng = substream(config.seed, _PATH_STREAM, bond_id)

    bid = np.empty(n)
    ask = np.empty(n)
    mid = np.empty(n)
    spread = np.empty(n)
    bid[0] = config.p0 - config.s0 / 2.0
    ask[0] = config.p0 + config.s0 / 2.0
    mid[0] = (bid[0] + ask[0]) / 2.0
    spread[0] = config.s0

    if n > 1:
        eps_s = rng.standard_normal(n - 1)
        eps_b = rng.standard_normal(n - 1) * config.sigma_b
        eps_a = rng.standard_normal(n - 1) * config.sigma_a
        drift = config.mu * config.dt
        vol = config.sigma_s * math.sqrt(config.dt)
        # overflow flows to the finiteness check below instead of raising here
        with np.errstate(over="ignore", invalid="ignore"):
            growth = np.exp(drift + vol * eps_s)
            for t in range(n - 1):
                spread[t + 1] = spread[t] * growth[t]
                b = mid[t] - spread[t + 1] / 2.0 + eps_b[t]
                a = mid[t] + spread[t + 1] / 2.0 + eps_a[t]
                if a < b:
                    a = b + CROSS_CLAMP
                bid[t + 1] = b
                ask[t + 1] = a
                mid[t + 1] = (b + a) / 2.0

    for name, arr in (("bid", bid), ("ask", ask), ("mid", mid), ("spread", spread)):
        if not np.all(np.isfinite(arr)):
            raise SimulationError(
                f"non-finite {name} in price path for bond {bond_id}; "
                "check mu/sigma/dt magnitudes"
            )
    return PricePath(bond_id=bond_id, bid=bid, ask=ask, mid=mid, spread=spread)


def sample_ring_point(rng: np.random.Generator) -> np.ndarray:
    """Point on a noisy unit ring: radius (1 + 0.3*N) at angle 2*pi*U."""
    u = rng.random()
    radius = 1.0 + 0.3 * rng.standard_normal()
    return np.array([radius * math.cos(2.0 * math.pi * u),
                     radius * math.sin(2.0 * math.pi * u)])


def fill_probability(point: np.ndarray, mode: str) -> float:
    """Fill probability of a 2-D label point under verbatim/ring_distance.

    verbatim: sigmoid(10*|x|^2). Degenerate on ring-sampled points (the
    squared norm concentrates near 1, so p ~ 1 almost surely); kept for
    fidelity with the original recipe.

    ring_distance: sigmoid(10*(|x|^2 - 1)), the same logit re-centered on
    the unit circle. Signed: points inside get p < 0.5, points outside
    p > 0.5, p = 0.5 exactly on the circle.
    """
    nsq = float(point[0]) ** 2 + float(point[1]) ** 2
    if mode == "verbatim":
        return float(expit(10.0 * nsq))
    if mode == "ring_distance":
        return float(expit(10.0 * (nsq - 1.0)))
    raise ValueError(f"no point-based fill probability for mode {mode!r}")


def feature_fill_probability(
    response: float,
    log_notional: float,
    mom5: float,
    coeffs: StatusCoeffs | None = None,
) -> float:
    """Fill probability of the feature_linked label mode."""
    coeffs = coeffs or StatusCoeffs()
    return float(expit(coeffs.logit(response, log_notional, mom5)))


def gen_status(
    mode: str,
    rng: np.random.Generator,
    features: tuple[float, float, float] | None = None,
    coeffs: StatusCoeffs | None = None,
) -> int:
    """Draw one fill label.

    ``features`` must be (response, log_notional, mom5) in feature_linked
    mode and is ignored otherwise.
    """
    if mode == "feature_linked":
        if features is None:
            raise ValueError("feature_linked status mode requires (response, log_notional, mom5)")
        p = feature_fill_probability(*features, coeffs=coeffs)
    elif mode in ("verbatim", "ring_distance"):
        p = fill_probability(sample_ring_point(rng), mode)
    else:
        raise ValueError(f"unknown status mode {mode!r}")
    return int(rng.random() < p)


def gen_quote_price(mid: float, rng: np.random.Generator, quote_band: float = 0.01) -> float:
    """Quote uniformly within +/- quote_band of the mid."""
    if not math.isfinite(mid):
        raise ValueError("mid must be finite")
    if quote_band < 0:
        raise ValueError("quote_band must be non-negative")
    if quote_band == 0:
        return mid
    return mid + rng.uniform(-quote_band, quote_band)


def gen_rfq_dataset(config: SimConfig) -> list[RfqRecord]:
    """Generate the full RFQ dataset.

    Fields: time strictly increasing 5-digit-style integers (start 10000,
    steps uniform 1..9); side Bernoulli(0.5); counterparty uniform {0..3};
    competition uniform {1..4}; notional 10^k with k uniform {3..7}. Each
    record consumes one step of its bond's price path; next_mid_price is
    that path's following mid. The trailing n_live records are flagged live
    and pinned one-per-bond so every bond has a quoting target.
    """
    config.validate()
    n = config.n_records
    rng_fields = substream(config.seed, _FIELD_STREAM)
    rng_quotes = substream(config.seed, _QUOTE_STREAM)
    rng_status = substream(config.seed, _STATUS_STREAM)

    time_steps = rng_fields.integers(1, 10, size=n - 1) if n > 1 else np.empty(0, dtype=int)
    times = 10000 + np.concatenate([[0], np.cumsum(time_steps)])
    n_hist = n - config.n_live
    bonds = np.concatenate([
        rng_fields.integers(0, config.n_bonds, size=n_hist),
        np.arange(config.n_live) % config.n_bonds,
    ]).astype(int)
    sides = rng_fields.integers(0, 2, size=n)
    counterparties = rng_fields.integers(0, 4, size=n)
    competitions = rng_fields.integers(1, 5, size=n)
    notionals = 10 ** rng_fields.integers(3, 8, size=n)

    counts = np.bincount(bonds, minlength=config.n_bonds)
    paths = [
        gen_price_paths(config, b, n_steps=int(counts[b]) + 1)
        for b in range(config.n_bonds)
    ]

    records: list[RfqRecord] = []
    cursor = np.zeros(config.n_bonds, dtype=int)
    mid_history: list[list[float]] = [[] for _ in range(config.n_bonds)]
    for i in range(n):
        b = bonds[i]
        t = cursor[b]
        cursor[b] += 1
        mid = float(paths[b].mid[t])
        next_mid = float(paths[b].mid[t + 1])
        quoted = gen_quote_price(mid, rng_quotes, config.quote_band)

        if config.status_mode == "feature_linked":
            hist = mid_history[b]
            mom5 = mid / hist[-5] - 1.0 if len(hist) >= 5 else 0.0
            spread = mid - quoted
            response = spread if sides[i] == 1 else -spread
            status = gen_status(
                config.status_mode,
                rng_status,
                features=(response, math.log(notionals[i]), mom5),
                coeffs=config.status_coeffs,
            )
        else:
            status = gen_status(config.status_mode, rng_status)
        mid_history[b].append(mid)

        records.append(RfqRecord(
            time=int(times[i]),
            bond=int(b),
            side=int(sides[i]),
            notional=int(notionals[i]),
            counterparty=int(counterparties[i]),
            mid_price=mid,
            quoted_price=quoted,
            competition=int(competitions[i]),
            status=status,
            next_mid_price=next_mid,
            live=int(i >= n_hist),
        ))
    return records


def gen_competitor_quotes(
    rfq: RfqRecord,
    n: int,
    rng: np.random.Generator,
    quote_band: float = 0.01,
) -> np.ndarray:
    """n competitor quotes around the RFQ's mid, same band as our own quotes."""
    if n < 0:
        raise ValueError("competitor count must be non-negative")
    return rfq.mid_price + rng.uniform(-quote_band, quote_band, size=n)


def competitor_stream(seed: int) -> np.random.Generator:
    """The dedicated substream for competitor quote simulation."""
    return substream(seed, _COMPETITOR_STREAM)


def gen_ring_dataset(
    n: int,
    seed: int,
    mode: str = "ring_distance",
) -> tuple[np.ndarray, np.ndarray]:
    """2-D classification set (X, y) drawn from the point-based label modes."""
    if mode not in ("verbatim", "ring_distance"):
        raise ValueError("gen_ring_dataset supports verbatim and ring_distance only")
    rng = np.random.default_rng([int(seed), _STATUS_STREAM])
    u = rng.random(n)
    radius = 1.0 + 0.3 * rng.standard_normal(n)
    x = np.column_stack([radius * np.cos(2.0 * np.pi * u),
                         radius * np.sin(2.0 * np.pi * u)])
    nsq = np.sum(x * x, axis=1)
    logit = 10.0 * nsq if mode == "verbatim" else 10.0 * (nsq - 1.0)
    y = (rng.random(n) < expit(logit)).astype(float)
    return x, y
