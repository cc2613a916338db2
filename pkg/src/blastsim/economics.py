"""Valuation, bidding, pricing, and welfare math for the spectrum market.

Everything here is a pure function over exact rationals (``fractions.Fraction``,
denominated in USD). Rounding to integer cents happens only at the ledger
boundary via :func:`to_cents`, so the settlement layer never accumulates
floating-point drift and test oracles can compare results exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence, Union

Money = Union[int, float, str, Fraction]


class EmptyHistoryError(ValueError):
    """No recorded winning bids; callers fall back to the closed-form shade."""


class _MarketFailure:
    """Marker for a market with positive optimal welfare and zero realized
    welfare, i.e. unbounded inefficiency."""

    __slots__ = ()

    def __repr__(self) -> str:
        return "MARKET_FAILURE"


MARKET_FAILURE = _MarketFailure()


def is_market_failure(value: object) -> bool:
    return value is MARKET_FAILURE


def to_cents(amount: Money) -> int:
    """Quantize an exact USD amount to integer cents, rounding half up."""
    cents = Fraction(amount) * 100
    return math.floor(cents + Fraction(1, 2))


def from_cents(cents: int) -> Fraction:
    return Fraction(cents, 100)


@dataclass(frozen=True)
class ValuationParams:
    """Link-budget inputs for capacity-based valuation.

    ``alpha`` is the monetization coefficient (USD per MHz of spectrum per
    bps/Hz of spectral efficiency); the remaining terms form the SINR.
    """

    alpha: float
    tx_power_mw: float
    channel_gain: float
    noise_mw: float
    interference_mw: float = 0.0

    def __post_init__(self) -> None:
        if self.noise_mw <= 0:
            raise ValueError("noise_mw must be > 0")
        for name in ("alpha", "tx_power_mw", "channel_gain", "interference_mw"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def sinr(self) -> float:
        return (self.tx_power_mw * self.channel_gain) / (self.noise_mw + self.interference_mw)


def shannon_valuation(params: ValuationParams, spectrum_mhz: float) -> float:
    """Monetary value of ``spectrum_mhz`` under Shannon spectral efficiency.

    alpha * S * log2(1 + SINR). Zero SINR (e.g. zero transmit power) yields 0.
    Monotone non-decreasing in spectrum, power, and gain; concave in SINR.
    """
    if spectrum_mhz < 0:
        raise ValueError("spectrum_mhz must be >= 0")
    return params.alpha * spectrum_mhz * math.log2(1.0 + params.sinr)


def linear_valuation(utility_per_mhz: Money, capacity_mhz: Money) -> Fraction:
    """Willingness to pay for a whole block: utility/MHz times block size."""
    u = Fraction(utility_per_mhz)
    c = Fraction(capacity_mhz)
    if u < 0 or c < 0:
        raise ValueError("utility and capacity must be >= 0")
    return u * c


@dataclass
class BidHistory:
    """Sliding window of recently observed winning bids (USD values)."""

    window: int = 20
    winning_bids: list[Fraction] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.window < 1:
            raise ValueError("window must be >= 1")
        self.winning_bids = [Fraction(b) for b in self.winning_bids]
        if len(self.winning_bids) > self.window:
            raise ValueError("more winning bids than the window allows")
        if any(b < 0 for b in self.winning_bids):
            raise ValueError("winning bids must be >= 0")

    @classmethod
    def recent(cls, values: Sequence[Money], window: int = 20) -> "BidHistory":
        """Build a history from the trailing ``window`` entries of ``values``."""
        kept = [Fraction(v) for v in values][-window:]
        return cls(window=window, winning_bids=kept)

    def __len__(self) -> int:
        return len(self.winning_bids)


def bne_shade_bid(valuation: Money, num_bidders: int) -> Fraction:
    """Symmetric equilibrium shade for a first-price auction with uniform
    independent private values: bid (N-1)/N of one's valuation."""
    if num_bidders < 1:
        raise ValueError("num_bidders must be >= 1")
    v = Fraction(valuation)
    if v < 0:
        raise ValueError("valuation must be >= 0")
    return Fraction(num_bidders - 1, num_bidders) * v


def empirical_win_cdf(history: BidHistory, bid: Money) -> Fraction:
    """Empirical probability that ``bid`` beats a recorded winning bid.

    Counts recorded winning bids strictly below ``bid``; a step function,
    non-decreasing in the bid.
    """
    if not history.winning_bids:
        raise EmptyHistoryError("no winning bids recorded")
    b = Fraction(bid)
    below = sum(1 for w in history.winning_bids if w < b)
    return Fraction(below, len(history.winning_bids))


def optimize_first_price_bid(
    valuation: Money,
    history: BidHistory,
    grid_step: Money | None = None,
) -> Fraction:
    """Grid search for the bid maximizing expected surplus (v - b) * F(b).

    The grid is {0, step, 2*step, ...} strictly below the valuation; ties in
    expected surplus resolve to the lowest bid. Defaults to a step of 1% of
    the valuation.
    """
    v = Fraction(valuation)
    if v <= 0:
        raise ValueError("valuation must be > 0")
    if not history.winning_bids:
        raise EmptyHistoryError("no winning bids recorded")
    step = Fraction(grid_step) if grid_step is not None else v / 100
    if step <= 0:
        raise ValueError("grid_step must be > 0")

    best_bid = Fraction(0)
    best_surplus = (v - best_bid) * empirical_win_cdf(history, best_bid)
    k = 1
    while True:
        b = k * step
        if b >= v:
            break
        surplus = (v - b) * empirical_win_cdf(history, b)
        if surplus > best_surplus:
            best_bid, best_surplus = b, surplus
        k += 1
    return best_bid


@dataclass(frozen=True)
class PricingPolicy:
    """Skimming parameters: list at markup * valuation, decay while unsold."""

    markup: Fraction = Fraction(23, 20)
    decay: Fraction = Fraction(1, 10)

    def __post_init__(self) -> None:
        object.__setattr__(self, "markup", Fraction(self.markup))
        object.__setattr__(self, "decay", Fraction(self.decay))
        if self.markup <= 1:
            raise ValueError("markup must be > 1")
        if not 0 <= self.decay < 1:
            raise ValueError("decay must be in [0, 1)")


def initial_reserve(seller_valuation: Money, policy: PricingPolicy) -> Fraction:
    v = Fraction(seller_valuation)
    if v < 0:
        raise ValueError("seller_valuation must be >= 0")
    return policy.markup * v


def decay_reserve(prev: Money, seller_valuation: Money, policy: PricingPolicy) -> Fraction:
    """Next reserve after an unsold round: decay, floored at the seller's
    own valuation (break-even constraint)."""
    p = Fraction(prev)
    v = Fraction(seller_valuation)
    if v < 0 or p < v:
        raise ValueError("require prev >= seller_valuation >= 0")
    return max(v, p * (1 - policy.decay))


@dataclass(frozen=True)
class SurplusBreakdown:
    buyer_profit: Fraction
    seller_profit: Fraction

    @property
    def total(self) -> Fraction:
        return self.buyer_profit + self.seller_profit


def trade_surplus(
    buyer_utility: Money,
    seller_utility: Money,
    capacity_mhz: Money,
    price: Money,
) -> SurplusBreakdown:
    """Per-trade welfare split.

    Buyer profit is max(0, u_b*c - p); seller profit is p - u_s*c. Whenever
    the buyer's valuation covers the price the transfer cancels and the total
    equals (u_b - u_s)*c regardless of the price paid.
    """
    c = Fraction(capacity_mhz)
    if c <= 0:
        raise ValueError("capacity_mhz must be > 0")
    u_b = Fraction(buyer_utility)
    u_s = Fraction(seller_utility)
    p = Fraction(price)
    buyer = max(Fraction(0), u_b * c - p)
    seller = p - u_s * c
    return SurplusBreakdown(buyer_profit=buyer, seller_profit=seller)


def price_of_anarchy(sw_opt: Money, sw_eq: Money):
    """Ratio of optimal to realized welfare (>= 1), or MARKET_FAILURE when
    positive welfare was available but none was realized."""
    opt = Fraction(sw_opt)
    eq = Fraction(sw_eq)
    if eq < 0:
        raise ValueError("sw_eq must be >= 0")
    if eq > opt:
        raise ValueError("sw_eq cannot exceed sw_opt")
    if eq == 0:
        return Fraction(1) if opt == 0 else MARKET_FAILURE
    return opt / eq
