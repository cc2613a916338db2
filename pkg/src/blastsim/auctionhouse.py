"""Per-token sale state machines: direct sale, first-price and second-price
sealed bid, with a commit-reveal lifecycle.

Sealed-bid auctions run on fixed windows driven by :meth:`AuctionHouse.advance_phases`:
commits are accepted for exactly one tick after listing, reveals the tick
after that, and the auction finalizes at the following tick boundary. Direct
sale listings are buyable for one tick and then expire unsold (relisting,
typically at a decayed ask, is the seller's decision). All mutations flow
through the ledger's serialized apply loop; this module holds no state that
is not reconstructible from the transaction log.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

from .ledger import (
    InsufficientFundsError,
    Ledger,
    NotOwnerError,
    TradeRecord,
    TX_BUY_NOW,
    TX_CLOSE,
    TX_COMMIT,
    TX_FINALIZE,
    TX_LIST,
    TX_REVEAL,
    commit_digest,
    fmt_usd,
)

logger = logging.getLogger(__name__)

# Mechanisms
DIRECT_SALE = "direct_sale"
FIRST_PRICE = "first_price"
SECOND_PRICE = "second_price"
MECHANISMS = (DIRECT_SALE, FIRST_PRICE, SECOND_PRICE)
SEALED_BID = (FIRST_PRICE, SECOND_PRICE)

_MECHANISM_ALIASES = {
    "ds": DIRECT_SALE,
    "fp": FIRST_PRICE,
    "sp": SECOND_PRICE,
    DIRECT_SALE: DIRECT_SALE,
    FIRST_PRICE: FIRST_PRICE,
    SECOND_PRICE: SECOND_PRICE,
}


def parse_mechanism(value: str) -> str:
    try:
        return _MECHANISM_ALIASES[value.lower()]
    except KeyError:
        raise ValueError(f"unknown mechanism {value!r} (expected ds, fp, or sp)") from None


# Phases. CLOSED is a transient state inside close_bidding; a sealed-bid
# auction rests only in OPEN, REVEALING, or ENDED.
OPEN = "open"
CLOSED = "closed"
REVEALING = "revealing"
ENDED = "ended"


class AuctionError(Exception):
    pass


class PhaseError(AuctionError):
    pass


class AlreadyListedError(AuctionError):
    pass


class SelfDealError(AuctionError):
    pass


class WrongMechanismError(AuctionError):
    pass


class NoCommitError(AuctionError):
    pass


class DigestMismatchError(AuctionError):
    """Reveal does not match the committed digest (signals tampering)."""


class UnknownAuctionError(AuctionError):
    pass


@dataclass
class CommitEntry:
    bidder: str
    digest: str
    seq: int  # global commit order; ties resolve to the earliest


@dataclass
class RevealEntry:
    bidder: str
    value_cents: int
    salt: str
    commit_seq: int


@dataclass
class Outcome:
    winner: Optional[str]
    clearing_price_cents: Optional[int]
    losing_bids: list[tuple[str, int]] = field(default_factory=list)
    unsold: bool = False

    def to_dict(self) -> dict:
        return {
            "winner": self.winner,
            "clearing_price": None
            if self.clearing_price_cents is None
            else fmt_usd(self.clearing_price_cents),
            "losing_bids": [[b, fmt_usd(v)] for b, v in self.losing_bids],
            "unsold": self.unsold,
        }


@dataclass
class Auction:
    auction_id: str
    token_id: str
    mechanism: str
    seller: str
    reserve_cents: int
    phase: str = OPEN
    opened_tick: int = 0
    closed_tick: Optional[int] = None
    commits: dict[str, CommitEntry] = field(default_factory=dict)
    reveals: dict[str, RevealEntry] = field(default_factory=dict)
    outcome: Optional[Outcome] = None

    def board_entry(self, commit_count: int | None = None) -> dict:
        """Public board row: never includes bid values."""
        return {
            "auction_id": self.auction_id,
            "token_id": self.token_id,
            "mechanism": self.mechanism,
            "seller": self.seller,
            "reserve": fmt_usd(self.reserve_cents),
            "phase": self.phase,
            "opened_tick": self.opened_tick,
            "commit_count": len(self.commits) if commit_count is None else commit_count,
        }


def rank_qualifying(reveals: list[RevealEntry], reserve_cents: int) -> list[RevealEntry]:
    """Valid reveals at or above the reserve, best first (highest value,
    then earliest commit)."""
    qualifying = [r for r in reveals if r.value_cents >= reserve_cents]
    return sorted(qualifying, key=lambda r: (-r.value_cents, r.commit_seq))


def clearing_price(mechanism: str, ranked: list[RevealEntry]) -> int:
    """Price paid by ``ranked[0]``: own bid under first price; under second
    price the best losing qualifying bid, or the winner's own bid when no
    competitor remains."""
    if not ranked:
        raise ValueError("no qualifying reveals")
    if mechanism == FIRST_PRICE:
        return ranked[0].value_cents
    if mechanism == SECOND_PRICE:
        return ranked[1].value_cents if len(ranked) > 1 else ranked[0].value_cents
    raise WrongMechanismError(f"{mechanism} has no sealed-bid clearing rule")


def determine_outcome(
    mechanism: str, reveals: list[RevealEntry], reserve_cents: int
) -> Outcome:
    """Pure winner determination over (valid reveals, reserve, commit order).

    Replaying the same inputs always reproduces the same outcome; the
    stateful :meth:`AuctionHouse.finalize` routes through this function.
    """
    ranked = rank_qualifying(reveals, reserve_cents)
    if not ranked:
        return Outcome(
            winner=None,
            clearing_price_cents=None,
            losing_bids=[(r.bidder, r.value_cents) for r in reveals],
            unsold=True,
        )
    winner = ranked[0]
    price = clearing_price(mechanism, ranked)
    losers = [(r.bidder, r.value_cents) for r in reveals if r.bidder != winner.bidder]
    return Outcome(winner=winner.bidder, clearing_price_cents=price, losing_bids=losers)


class AuctionHouse:
    """Stateful lifecycle driver for all auctions on one ledger."""

    def __init__(self, ledger: Ledger):
        self.ledger = ledger
        self.auctions: dict[str, Auction] = {}
        self._active_by_token: dict[str, str] = {}
        self._next_id = 0
        self._commit_seq = 0

    # -- helpers ---------------------------------------------------------------

    def _get(self, auction_id: str) -> Auction:
        try:
            return self.auctions[auction_id]
        except KeyError:
            raise UnknownAuctionError(f"unknown auction {auction_id}") from None

    def _board_key(self, auction: Auction) -> str:
        return f"auction/{auction.auction_id}/board"

    def board(self) -> list[dict]:
        """JSON-shaped list of open and revealing auctions."""
        return [
            a.board_entry()
            for a in self.auctions.values()
            if a.phase in (OPEN, REVEALING)
        ]

    def active_listing_for(self, token_id: str) -> Optional[str]:
        return self._active_by_token.get(token_id)

    def active_listings_by(self, seller: str) -> int:
        return sum(
            1
            for a in self.auctions.values()
            if a.seller == seller and a.phase in (OPEN, REVEALING)
        )

    # -- lifecycle operations ----------------------------------------------------

    def create_listing(
        self, token_id: str, seller: str, mechanism: str, reserve_cents: int
    ) -> Auction:
        mechanism = parse_mechanism(mechanism)
        token = self.ledger.tokens.get(token_id)
        if token is None:
            raise UnknownAuctionError(f"unknown token {token_id}")
        if token.owner != seller:
            raise NotOwnerError(f"{seller} does not own {token_id}")
        if token_id in self._active_by_token:
            raise AlreadyListedError(f"{token_id} already listed")
        if reserve_cents < 0:
            raise ValueError("reserve must be >= 0")
        auction = Auction(
            auction_id=f"auct-{self._next_id:05d}",
            token_id=token_id,
            mechanism=mechanism,
            seller=seller,
            reserve_cents=reserve_cents,
            opened_tick=self.ledger.tick,
        )
        self._next_id += 1
        self.auctions[auction.auction_id] = auction
        self._active_by_token[token_id] = auction.auction_id
        self.ledger._append(
            submitter=seller,
            kind=TX_LIST,
            payload={
                "auction_id": auction.auction_id,
                "token_id": token_id,
                "mechanism": mechanism,
                "reserve_cents": reserve_cents,
            },
            world_writes={self._board_key(auction): auction.board_entry()},
        )
        return auction

    def buy_now(self, auction_id: str, buyer: str) -> Outcome:
        auction = self._get(auction_id)
        if auction.mechanism != DIRECT_SALE:
            raise WrongMechanismError("buy_now requires a direct-sale listing")
        if auction.phase != OPEN:
            raise PhaseError(f"auction {auction_id} is {auction.phase}, not open")
        if buyer == auction.seller:
            raise SelfDealError("seller cannot buy its own listing")
        price = auction.reserve_cents
        record = self.ledger.apply_settlement(
            token_id=auction.token_id,
            buyer=buyer,
            seller=auction.seller,
            price_cents=price,
            mechanism=DIRECT_SALE,
            auction_id=auction_id,
        )
        auction.phase = ENDED
        auction.outcome = Outcome(winner=buyer, clearing_price_cents=price)
        self._active_by_token.pop(auction.token_id, None)
        self.ledger._append(
            submitter=buyer,
            kind=TX_BUY_NOW,
            payload={"auction_id": auction_id, "buyer": buyer, "price_cents": price},
            world_writes={
                self._board_key(auction): auction.board_entry(),
                f"auction/{auction_id}/outcome": auction.outcome.to_dict(),
            },
        )
        return auction.outcome

    def commit_bid(
        self,
        auction_id: str,
        bidder: str,
        digest: str,
        private_payload: Optional[dict] = None,
    ) -> None:
        """Record a salted digest on the public ledger.

        ``private_payload`` (typically ``{"salt": ..., "value_cents": ...}``)
        is written only to the bidder's private store; the commit
        transaction's world writes carry the digest alone. A re-commit
        before close overwrites and takes a new position in the commit
        order.
        """
        auction = self._get(auction_id)
        if auction.mechanism not in SEALED_BID:
            raise WrongMechanismError("commit_bid requires a sealed-bid auction")
        if auction.phase != OPEN:
            raise PhaseError(f"auction {auction_id} is {auction.phase}, not open")
        if bidder == auction.seller:
            raise SelfDealError("seller cannot bid on its own auction")
        entry = CommitEntry(bidder=bidder, digest=digest, seq=self._commit_seq)
        self._commit_seq += 1
        auction.commits[bidder] = entry
        private_writes = (
            {bidder: {f"bid/{auction_id}": private_payload}}
            if private_payload is not None
            else {}
        )
        self.ledger._append(
            submitter=bidder,
            kind=TX_COMMIT,
            payload={"auction_id": auction_id, "bidder": bidder},
            world_writes={
                f"auction/{auction_id}/commit/{bidder}": digest,
                self._board_key(auction): auction.board_entry(),
            },
            private_writes=private_writes,
        )

    def close_bidding(self, auction_id: str) -> Auction:
        auction = self._get(auction_id)
        if auction.mechanism not in SEALED_BID:
            raise WrongMechanismError("close_bidding requires a sealed-bid auction")
        if auction.phase != OPEN:
            raise PhaseError(f"auction {auction_id} is {auction.phase}, not open")
        auction.phase = CLOSED  # transient: no commits accepted from here on
        auction.phase = REVEALING
        auction.closed_tick = self.ledger.tick
        self.ledger._append(
            submitter=auction.seller,
            kind=TX_CLOSE,
            payload={"auction_id": auction_id},
            world_writes={self._board_key(auction): auction.board_entry()},
        )
        return auction

    def reveal_bid(self, auction_id: str, bidder: str, salt: str, value_cents: int) -> None:
        auction = self._get(auction_id)
        if auction.phase != REVEALING:
            raise PhaseError(f"auction {auction_id} is {auction.phase}, not revealing")
        entry = auction.commits.get(bidder)
        if entry is None:
            raise NoCommitError(f"{bidder} has no commit on {auction_id}")
        if commit_digest(salt, value_cents) != entry.digest:
            logger.warning("reveal mismatch on %s by %s", auction_id, bidder)
            raise DigestMismatchError(
                f"reveal by {bidder} does not match committed digest"
            )
        auction.reveals[bidder] = RevealEntry(
            bidder=bidder, value_cents=value_cents, salt=salt, commit_seq=entry.seq
        )
        # Values may appear publicly once bidding is closed.
        self.ledger._append(
            submitter=bidder,
            kind=TX_REVEAL,
            payload={
                "auction_id": auction_id,
                "bidder": bidder,
                "value_cents": value_cents,
            },
            world_writes={
                f"auction/{auction_id}/reveal/{bidder}": fmt_usd(value_cents)
            },
        )

    def finalize(self, auction_id: str) -> Outcome:
        """Determine the winner among valid reveals and settle on the ledger.

        A winner whose balance no longer covers the price is skipped and the
        remaining qualifying reveals are re-ranked; with none left the token
        stays with the seller.
        """
        auction = self._get(auction_id)
        if auction.phase != REVEALING:
            raise PhaseError(f"auction {auction_id} is {auction.phase}, not revealing")
        reveals = list(auction.reveals.values())
        ranked = rank_qualifying(reveals, auction.reserve_cents)
        outcome: Optional[Outcome] = None
        record: Optional[TradeRecord] = None
        while ranked:
            candidate = determine_outcome(auction.mechanism, ranked, auction.reserve_cents)
            assert candidate.winner is not None
            try:
                record = self.ledger.apply_settlement(
                    token_id=auction.token_id,
                    buyer=candidate.winner,
                    seller=auction.seller,
                    price_cents=candidate.clearing_price_cents,
                    mechanism=auction.mechanism,
                    auction_id=auction_id,
                )
            except InsufficientFundsError:
                logger.info(
                    "winner %s cannot settle %s; trying next bidder",
                    candidate.winner,
                    auction_id,
                )
                ranked = ranked[1:]
                continue
            outcome = Outcome(
                winner=candidate.winner,
                clearing_price_cents=candidate.clearing_price_cents,
                losing_bids=[
                    (r.bidder, r.value_cents)
                    for r in reveals
                    if r.bidder != candidate.winner
                ],
            )
            break
        if outcome is None:
            outcome = Outcome(
                winner=None,
                clearing_price_cents=None,
                losing_bids=[(r.bidder, r.value_cents) for r in reveals],
                unsold=True,
            )
        auction.phase = ENDED
        auction.outcome = outcome
        self._active_by_token.pop(auction.token_id, None)
        self.ledger._append(
            submitter=auction.seller,
            kind=TX_FINALIZE,
            payload={
                "auction_id": auction_id,
                "unsold": outcome.unsold,
                "winner": outcome.winner,
                "price_cents": outcome.clearing_price_cents,
            },
            world_writes={
                self._board_key(auction): auction.board_entry(),
                f"auction/{auction_id}/outcome": outcome.to_dict(),
            },
        )
        return outcome

    # -- scheduler ---------------------------------------------------------------

    def advance_phases(self, now_tick: int) -> list[tuple[Auction, Outcome]]:
        """End-of-tick window driver.

        Sealed-bid auctions opened at ``now_tick - 1`` close; those closed at
        ``now_tick - 1`` finalize. Direct-sale listings opened at
        ``now_tick - 1`` expire unsold if nobody bought. Returns the
        (auction, outcome) pairs that ended this tick.
        """
        ended: list[tuple[Auction, Outcome]] = []
        for auction in list(self.auctions.values()):
            if auction.mechanism in SEALED_BID:
                if auction.phase == OPEN and auction.opened_tick <= now_tick - 1:
                    self.close_bidding(auction.auction_id)
                elif auction.phase == REVEALING and (
                    auction.closed_tick is not None
                    and auction.closed_tick <= now_tick - 1
                ):
                    outcome = self.finalize(auction.auction_id)
                    ended.append((auction, outcome))
            elif auction.mechanism == DIRECT_SALE:
                if auction.phase == OPEN and auction.opened_tick <= now_tick - 1:
                    auction.phase = ENDED
                    auction.outcome = Outcome(
                        winner=None, clearing_price_cents=None, unsold=True
                    )
                    self._active_by_token.pop(auction.token_id, None)
                    self.ledger._append(
                        submitter=auction.seller,
                        kind=TX_FINALIZE,
                        payload={
                            "auction_id": auction.auction_id,
                            "unsold": True,
                            "winner": None,
                            "price_cents": None,
                        },
                        world_writes={
                            self._board_key(auction): auction.board_entry(),
                            f"auction/{auction.auction_id}/outcome": auction.outcome.to_dict(),
                        },
                    )
                    ended.append((auction, auction.outcome))
        return ended
