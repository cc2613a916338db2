"""Autonomous trading agents.

Two strategies share one actuation layer:

* ``heuristic`` — fixed decision rules: sell surplus capacity at a
  mechanism-specific markup, bid truthfully in second-price auctions, shade
  by (n-1)/n (floored at half valuation) in first-price auctions, and take
  the best direct-sale listing priced within valuation.
* ``pipeline`` — a perceive / plan / act sequence. Perception classifies the
  market from public data; planning applies the game-theoretic bid and
  pricing rules from :mod:`blastsim.economics` (or defers to a pluggable
  external brain over HTTP, falling back to the built-in planner on timeout
  or malformed output); actuation re-checks feasibility so no invalid
  transaction ever reaches the ledger.

Planning is pure over a :class:`MarketView` snapshot. Actuation happens in
the simulation's per-tick permutation order, and sealed-bid buys emit a
commit now plus a reveal queued for the reveal tick.
"""

from __future__ import annotations

import logging
import statistics
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import httpx

from . import auctionhouse, economics
from .auctionhouse import (
    AuctionHouse,
    DIRECT_SALE,
    FIRST_PRICE,
    OPEN,
    REVEALING,
    SEALED_BID,
    SECOND_PRICE,
)
from .economics import BidHistory, PricingPolicy, linear_valuation, to_cents
from .ledger import InsufficientFundsError, Ledger, commit_digest

logger = logging.getLogger(__name__)

HOMOGENEOUS = "homogeneous"
HETEROGENEOUS = "heterogeneous"
STABLE = "stable"
FADING = "fading"

# Analyst thresholds: dispersion below this coefficient of variation reads
# as a homogeneous market; a strict decline across this many window means
# reads as fading demand. These shape logged assessments only.
_CV_HOMOGENEOUS = 0.05
_FADE_WINDOWS = 3


@dataclass
class AgentState:
    """Ledger-derived view of one agent at a tick boundary."""

    agent_id: str
    balance_cents: int
    utility_per_mhz: Fraction
    need_mhz: Fraction
    holdings: dict[str, Fraction] = field(default_factory=dict)  # token id -> MHz

    @property
    def held_capacity_mhz(self) -> Fraction:
        return sum(self.holdings.values(), Fraction(0))


def demand_gap(state: AgentState) -> Fraction:
    """Unmet spectrum need: max(0, need - held capacity)."""
    return max(Fraction(0), state.need_mhz - state.held_capacity_mhz)


def surplus_capacity(state: AgentState) -> Fraction:
    return max(Fraction(0), state.held_capacity_mhz - state.need_mhz)


@dataclass(frozen=True)
class BoardEntry:
    """Public auction-board row enriched with the token's capacity."""

    auction_id: str
    token_id: str
    mechanism: str
    seller: str
    reserve_cents: int
    phase: str
    commit_count: int
    capacity_mhz: Fraction


@dataclass(frozen=True)
class TradeStats:
    wins: int = 0
    attempts: int = 0
    profit_cents: int = 0

    @property
    def win_rate(self) -> float:
        return self.wins / self.attempts if self.attempts else 0.0

    @property
    def profit_per_win(self) -> float:
        return self.profit_cents / 100 / self.wins if self.wins else 0.0


@dataclass(frozen=True)
class MarketView:
    """Everything an agent may legitimately see: ledger-public data plus its
    own private bids and outcomes."""

    tick: int
    mechanism: str
    num_buyers: int
    open_auctions: list[BoardEntry]
    recent_winning_bids: BidHistory
    own_pending_bids: frozenset[str]
    own_idle_tokens: list[tuple[str, Fraction]]  # (token id, capacity), mint order
    own_active_listings: int
    stats: TradeStats


@dataclass(frozen=True)
class Assessment:
    market_structure: str
    win_rate: float
    demand_trend: str
    risk_note: str


@dataclass(frozen=True)
class Intent:
    """A single-tick trading intention; ``idle`` carries no fields."""

    kind: str  # "buy" | "sell" | "idle"
    auction_id: Optional[str] = None
    token_id: Optional[str] = None
    value_cents: Optional[int] = None
    reserve_cents: Optional[int] = None
    reserve_value: Optional[Fraction] = None  # exact reserve, for decay tracking
    mechanism: Optional[str] = None


IDLE = Intent(kind="idle")


def perceive(view: MarketView) -> Assessment:
    """Classify market structure and demand trend from public bid history."""
    bids = [float(b) for b in view.recent_winning_bids.winning_bids]
    structure = HETEROGENEOUS
    if len(bids) >= 2:
        mean = statistics.fmean(bids)
        if mean > 0:
            cv = statistics.pstdev(bids) / mean
            if cv < _CV_HOMOGENEOUS:
                structure = HOMOGENEOUS
        elif all(b == 0 for b in bids):
            structure = HOMOGENEOUS

    trend = STABLE
    if len(bids) >= _FADE_WINDOWS:
        width = max(1, len(bids) // _FADE_WINDOWS)
        tail = bids[-width * _FADE_WINDOWS :]
        means = [
            statistics.fmean(tail[i * width : (i + 1) * width])
            for i in range(_FADE_WINDOWS)
        ]
        if all(means[i] > means[i + 1] for i in range(_FADE_WINDOWS - 1)):
            trend = FADING

    win_rate = view.stats.win_rate
    note = (
        f"win_rate={win_rate:.2f} structure={structure} trend={trend} "
        f"profit_per_win={view.stats.profit_per_win:.2f}"
    )
    return Assessment(
        market_structure=structure,
        win_rate=win_rate,
        demand_trend=trend,
        risk_note=note,
    )


def _buy_candidates(state: AgentState, view: MarketView) -> list[BoardEntry]:
    return [
        e
        for e in view.open_auctions
        if e.phase == OPEN
        and e.seller != state.agent_id
        and e.auction_id not in view.own_pending_bids
    ]


def _pick_direct_sale(state: AgentState, candidates: list[BoardEntry]) -> Optional[Intent]:
    """Largest positive surplus (valuation minus ask) within budget."""
    best: Optional[BoardEntry] = None
    best_surplus: Optional[Fraction] = None
    for entry in candidates:
        valuation = linear_valuation(state.utility_per_mhz, entry.capacity_mhz)
        ask = economics.from_cents(entry.reserve_cents)
        if ask > valuation or entry.reserve_cents > state.balance_cents:
            continue
        surplus = valuation - ask
        if best_surplus is None or surplus > best_surplus:
            best, best_surplus = entry, surplus
    if best is None:
        return None
    return Intent(
        kind="buy",
        auction_id=best.auction_id,
        token_id=best.token_id,
        value_cents=best.reserve_cents,
        mechanism=DIRECT_SALE,
    )


def heuristic_decide(state: AgentState, view: MarketView, mechanism: str) -> Intent:
    """Fixed-rule baseline.

    Sells only when owned capacity strictly exceeds need, listing the first
    idle token at a 15% (direct sale), 10% (first price), or 5% (second
    price) markup over private valuation. Buys close the demand gap:
    truthful bids under second price, (n-1)/n shading floored at half
    valuation under first price, best-surplus takes under direct sale.
    """
    if surplus_capacity(state) > 0 and view.own_idle_tokens:
        token_id, capacity = view.own_idle_tokens[0]
        valuation = linear_valuation(state.utility_per_mhz, capacity)
        markup = {
            DIRECT_SALE: Fraction(23, 20),
            FIRST_PRICE: Fraction(11, 10),
            SECOND_PRICE: Fraction(21, 20),
        }[mechanism]
        reserve = markup * valuation
        return Intent(
            kind="sell",
            token_id=token_id,
            reserve_cents=to_cents(reserve),
            reserve_value=reserve,
            mechanism=mechanism,
        )

    if demand_gap(state) > 0:
        candidates = _buy_candidates(state, view)
        if mechanism == DIRECT_SALE:
            intent = _pick_direct_sale(state, candidates)
            return intent if intent is not None else IDLE
        for entry in candidates:
            valuation = linear_valuation(state.utility_per_mhz, entry.capacity_mhz)
            if mechanism == FIRST_PRICE:
                shaded = economics.bne_shade_bid(valuation, max(view.num_buyers, 1))
                bid = max(shaded, valuation / 2)
            else:
                bid = valuation
            bid_cents = min(to_cents(bid), state.balance_cents)
            if bid_cents <= 0:
                continue
            return Intent(
                kind="buy",
                auction_id=entry.auction_id,
                token_id=entry.token_id,
                value_cents=bid_cents,
                mechanism=mechanism,
            )
    return IDLE


def default_plan(
    state: AgentState,
    view: MarketView,
    mechanism: str,
    policy: PricingPolicy,
    grid_step: Optional[Fraction],
    last_reserves: dict[str, Fraction],
) -> Intent:
    """Deterministic built-in planner.

    Buy side: truthful valuation under second price; empirically optimized
    shading (closed-form fallback while no history exists) under first
    price; best-surplus take under direct sale. Bids landing below the
    posted reserve are withheld rather than submitted. Sell side: list the
    first idle token at markup * valuation, decaying while unsold, floored
    at own valuation.
    """
    if demand_gap(state) > 0:
        candidates = _buy_candidates(state, view)
        if mechanism == DIRECT_SALE:
            intent = _pick_direct_sale(state, candidates)
            return intent if intent is not None else IDLE
        for entry in candidates:
            valuation = linear_valuation(state.utility_per_mhz, entry.capacity_mhz)
            if valuation <= 0:
                continue
            if mechanism == SECOND_PRICE:
                bid = valuation
            else:
                try:
                    bid = economics.optimize_first_price_bid(
                        valuation, view.recent_winning_bids, grid_step
                    )
                except economics.EmptyHistoryError:
                    bid = economics.bne_shade_bid(valuation, max(view.num_buyers, 1))
            bid_cents = min(to_cents(bid), to_cents(valuation), state.balance_cents)
            if bid_cents <= 0 or bid_cents < entry.reserve_cents:
                continue
            return Intent(
                kind="buy",
                auction_id=entry.auction_id,
                token_id=entry.token_id,
                value_cents=bid_cents,
                mechanism=mechanism,
            )
        return IDLE

    if surplus_capacity(state) > 0 and view.own_idle_tokens:
        token_id, capacity = view.own_idle_tokens[0]
        own_value = linear_valuation(state.utility_per_mhz, capacity)
        previous = last_reserves.get(token_id)
        if previous is None:
            reserve = economics.initial_reserve(own_value, policy)
        else:
            reserve = economics.decay_reserve(previous, own_value, policy)
        return Intent(
            kind="sell",
            token_id=token_id,
            reserve_cents=to_cents(reserve),
            reserve_value=reserve,
            mechanism=mechanism,
        )
    return IDLE


# -- external brain -----------------------------------------------------------


class ExternalBrain:
    """HTTP adapter for an out-of-process planner.

    One POST per plan call; the request and response schemas are documented
    in the README. Any transport failure, timeout, or schema violation makes
    the caller fall back to the built-in planner.
    """

    def __init__(self, endpoint: str, timeout_s: float = 10.0):
        self.endpoint = endpoint
        self.timeout_s = timeout_s

    def __call__(self, request: dict) -> dict:
        response = httpx.post(self.endpoint, json=request, timeout=self.timeout_s)
        response.raise_for_status()
        return response.json()


Planner = Callable[[dict], dict]


def build_brain_request(
    state: AgentState,
    view: MarketView,
    assessment: Assessment,
    mechanism: str,
) -> dict:
    """Wire payload for one external plan call. Money is integer cents."""
    return {
        "agent": state.agent_id,
        "tick": view.tick,
        "mechanism": mechanism,
        "assessment": {
            "market_structure": assessment.market_structure,
            "win_rate": assessment.win_rate,
            "demand_trend": assessment.demand_trend,
            "risk_note": assessment.risk_note,
        },
        "state": {
            "balance_cents": state.balance_cents,
            "utility_per_mhz": float(state.utility_per_mhz),
            "need_mhz": float(state.need_mhz),
            "held_capacity_mhz": float(state.held_capacity_mhz),
            "holdings": sorted(state.holdings),
        },
        "open_auctions": [
            {
                "auction_id": e.auction_id,
                "token_id": e.token_id,
                "mechanism": e.mechanism,
                "seller": e.seller,
                "reserve_cents": e.reserve_cents,
                "phase": e.phase,
                "commit_count": e.commit_count,
                "capacity_mhz": float(e.capacity_mhz),
            }
            for e in view.open_auctions
        ],
        "bid_history": [
            to_cents(b) for b in view.recent_winning_bids.winning_bids
        ],
    }


def _intent_from_response(
    response: dict, state: AgentState, view: MarketView, mechanism: str
) -> Intent:
    """Validate and clamp a brain response; raises ValueError when malformed."""
    if not isinstance(response, dict):
        raise ValueError("brain response must be a JSON object")
    kind = response.get("intent")
    if kind == "idle":
        return IDLE
    if kind == "buy":
        auction_id = response.get("auction_id")
        entry = next(
            (
                e
                for e in view.open_auctions
                if e.auction_id == auction_id
                and e.phase == OPEN
                and e.seller != state.agent_id
            ),
            None,
        )
        if entry is None:
            raise ValueError(f"buy intent targets unknown or closed auction {auction_id!r}")
        raw = response.get("value")
        if not isinstance(raw, (int, float)) or isinstance(raw, bool):
            raise ValueError("buy intent requires a numeric value")
        valuation_cents = to_cents(
            linear_valuation(state.utility_per_mhz, entry.capacity_mhz)
        )
        clamped = max(0, min(int(raw), valuation_cents, state.balance_cents))
        if clamped != int(raw):
            logger.info(
                "%s: brain bid %s clamped to %s", state.agent_id, raw, clamped
            )
        return Intent(
            kind="buy",
            auction_id=entry.auction_id,
            token_id=entry.token_id,
            value_cents=clamped,
            mechanism=mechanism,
        )
    if kind == "sell":
        token_id = response.get("token_id")
        idle = dict(view.own_idle_tokens)
        if token_id not in idle:
            raise ValueError(f"sell intent targets non-idle token {token_id!r}")
        raw = response.get("reserve")
        if not isinstance(raw, (int, float)) or isinstance(raw, bool):
            raise ValueError("sell intent requires a numeric reserve")
        reserve_cents = max(0, int(raw))
        return Intent(
            kind="sell",
            token_id=token_id,
            reserve_cents=reserve_cents,
            reserve_value=economics.from_cents(reserve_cents),
            mechanism=mechanism,
        )
    raise ValueError(f"unknown intent kind {kind!r}")


def plan(
    assessment: Assessment,
    state: AgentState,
    view: MarketView,
    mechanism: str,
    brain: Optional[Planner],
    *,
    policy: PricingPolicy,
    grid_step: Optional[Fraction] = None,
    last_reserves: Optional[dict[str, Fraction]] = None,
) -> Intent:
    """Produce a validated intent, delegating to ``brain`` when configured.

    Brain failures (transport, timeout, malformed output) fall back to the
    built-in planner and are logged, never fatal.
    """
    last_reserves = last_reserves if last_reserves is not None else {}
    if brain is not None:
        request = build_brain_request(state, view, assessment, mechanism)
        try:
            response = brain(request)
            return _intent_from_response(response, state, view, mechanism)
        except Exception as exc:  # noqa: BLE001 - any brain fault means fallback
            logger.warning("%s: brain failed (%s); using default planner", state.agent_id, exc)
    return default_plan(state, view, mechanism, policy, grid_step, last_reserves)


# -- actuation -----------------------------------------------------------------


class AgentRuntime:
    """Per-agent mutable trading state: strategy, pending reveals, reserve
    memory for skimming, and win/attempt statistics."""

    def __init__(
        self,
        state: AgentState,
        strategy: str = "heuristic",
        brain: Optional[Planner] = None,
        policy: Optional[PricingPolicy] = None,
        grid_step: Optional[Fraction] = None,
    ):
        if strategy not in ("heuristic", "pipeline"):
            raise ValueError(f"unknown strategy {strategy!r}")
        self.state = state
        self.strategy = strategy
        self.brain = brain
        self.policy = policy if policy is not None else PricingPolicy()
        self.grid_step = grid_step
        self.pending_reveals: dict[str, tuple[str, int]] = {}  # auction -> (salt, cents)
        self.last_reserves: dict[str, Fraction] = {}
        self.wins = 0
        self.attempts = 0
        self.profit_cents = 0
        self.last_assessment: Optional[Assessment] = None

    @property
    def agent_id(self) -> str:
        return self.state.agent_id

    def stats(self) -> TradeStats:
        return TradeStats(
            wins=self.wins, attempts=self.attempts, profit_cents=self.profit_cents
        )

    def decide(self, view: MarketView) -> Intent:
        if self.strategy == "heuristic":
            return heuristic_decide(self.state, view, view.mechanism)
        assessment = perceive(view)
        self.last_assessment = assessment
        logger.debug("%s assessment: %s", self.agent_id, assessment.risk_note)
        return plan(
            assessment,
            self.state,
            view,
            view.mechanism,
            self.brain,
            policy=self.policy,
            grid_step=self.grid_step,
            last_reserves=self.last_reserves,
        )

    def act(
        self,
        intent: Intent,
        house: AuctionHouse,
        ledger: Ledger,
        rng,
    ) -> list[str]:
        """Submit due reveals, then execute the intent after re-checking
        feasibility. Infeasible intents are dropped and logged."""
        actions: list[str] = []
        for auction_id in list(self.pending_reveals):
            auction = house.auctions.get(auction_id)
            if auction is None or auction.phase == auctionhouse.ENDED:
                self.pending_reveals.pop(auction_id)
                continue
            if auction.phase != REVEALING:
                continue
            salt, value_cents = self.pending_reveals.pop(auction_id)
            try:
                house.reveal_bid(auction_id, self.agent_id, salt, value_cents)
                actions.append(f"reveal:{auction_id}")
            except auctionhouse.AuctionError as exc:
                logger.info("%s: reveal on %s rejected: %s", self.agent_id, auction_id, exc)

        if intent.kind == "idle":
            return actions

        if intent.kind == "buy":
            auction = house.auctions.get(intent.auction_id or "")
            if auction is None or auction.phase != OPEN:
                logger.info("%s: buy target %s not open", self.agent_id, intent.auction_id)
                return actions
            value_cents = intent.value_cents or 0
            if value_cents > ledger.balance(self.agent_id):
                logger.info("%s: bid %s exceeds balance", self.agent_id, value_cents)
                return actions
            if auction.mechanism == DIRECT_SALE:
                self.attempts += 1
                try:
                    outcome = house.buy_now(auction.auction_id, self.agent_id)
                except (auctionhouse.AuctionError, InsufficientFundsError) as exc:
                    logger.info("%s: buy_now rejected: %s", self.agent_id, exc)
                    return actions
                self.wins += 1
                capacity = ledger.tokens[auction.token_id].capacity_mhz
                valuation = to_cents(linear_valuation(self.state.utility_per_mhz, capacity))
                self.profit_cents += valuation - (outcome.clearing_price_cents or 0)
                actions.append(f"buy_now:{auction.auction_id}")
            else:
                salt = rng.randbytes(16).hex()
                digest = commit_digest(salt, value_cents)
                try:
                    house.commit_bid(
                        auction.auction_id,
                        self.agent_id,
                        digest,
                        private_payload={"salt": salt, "value_cents": value_cents},
                    )
                except auctionhouse.AuctionError as exc:
                    logger.info("%s: commit rejected: %s", self.agent_id, exc)
                    return actions
                self.pending_reveals[auction.auction_id] = (salt, value_cents)
                actions.append(f"commit:{auction.auction_id}")
            return actions

        if intent.kind == "sell":
            token = ledger.tokens.get(intent.token_id or "")
            if token is None or token.owner != self.agent_id:
                logger.info("%s: sell of unowned token %s rejected", self.agent_id, intent.token_id)
                return actions
            if house.active_listing_for(token.token_id) is not None:
                logger.info("%s: token %s already listed", self.agent_id, token.token_id)
                return actions
            try:
                auction = house.create_listing(
                    token.token_id,
                    self.agent_id,
                    intent.mechanism or DIRECT_SALE,
                    intent.reserve_cents or 0,
                )
            except (auctionhouse.AuctionError, ValueError) as exc:
                logger.info("%s: listing rejected: %s", self.agent_id, exc)
                return actions
            if intent.reserve_value is not None:
                self.last_reserves[token.token_id] = intent.reserve_value
            actions.append(f"list:{auction.auction_id}")
            return actions

        logger.info("%s: unknown intent kind %r dropped", self.agent_id, intent.kind)
        return actions

    def on_auction_ended(self, auction, outcome, capacity_mhz: Fraction) -> None:
        """Update statistics and reserve memory after a finalized auction."""
        self.pending_reveals.pop(auction.auction_id, None)
        if auction.seller == self.agent_id:
            if not outcome.unsold:
                self.last_reserves.pop(auction.token_id, None)
            return
        if auction.mechanism in SEALED_BID and self.agent_id in auction.reveals:
            self.attempts += 1
            if outcome.winner == self.agent_id:
                self.wins += 1
                valuation = to_cents(
                    linear_valuation(self.state.utility_per_mhz, capacity_mhz)
                )
                self.profit_cents += valuation - (outcome.clearing_price_cents or 0)
