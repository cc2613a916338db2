"""In-process emulation of a permissioned ledger.

Append-only transaction log with tick-based finality, a public world state,
a per-organization private store, token ownership, and closed-economy
currency accounts. "Organizations" are access-control labels, not network
peers; a single serialized apply loop performs every mutation, so past ticks
are immutable and replaying a recorded log reproduces the world state
byte for byte.

Monetary values are integer cents internally. World-state writes render
money as two-decimal dollar strings (e.g. ``"57.50"``) so that committed
sealed-bid plaintexts (decimal cent integers) can never collide with public
numbers during privacy scans.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterable, Optional

AUCTIONEER = "auctioneer"  # role allowed to read any private collection


class LedgerError(Exception):
    """Base class for ledger rule violations."""


class DuplicateTokenError(LedgerError):
    pass


class UnknownTokenError(LedgerError):
    pass


class UnknownAgentError(LedgerError):
    pass


class NotOwnerError(LedgerError):
    """Submitter does not own the asset (an attempted double-spend)."""


class InsufficientFundsError(LedgerError):
    pass


class AccessDeniedError(LedgerError):
    pass


# Transaction kinds, in lifecycle order.
TX_MINT = "Mint"
TX_LIST = "List"
TX_BUY_NOW = "BuyNow"
TX_COMMIT = "Commit"
TX_CLOSE = "Close"
TX_REVEAL = "Reveal"
TX_FINALIZE = "Finalize"
TX_SETTLE = "Settle"


def fmt_usd(cents: int) -> str:
    """Render integer cents as a canonical two-decimal dollar string."""
    sign = "-" if cents < 0 else ""
    cents = abs(cents)
    return f"{sign}{cents // 100}.{cents % 100:02d}"


def commit_digest(salt: str, value_cents: int) -> str:
    """SHA-256 hex digest over UTF-8 of ``salt ":" decimal-cent-value``."""
    return hashlib.sha256(f"{salt}:{value_cents}".encode("utf-8")).hexdigest()


def value_digest(value: Any) -> str:
    """SHA-256 hex digest of a canonical JSON rendering of ``value``."""
    blob = json.dumps(value, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class SpectrumToken:
    """A tradable, time-limited right to a spectrum block with one owner."""

    token_id: str
    center_freq_mhz: float
    bandwidth_mhz: Fraction
    slot_duration: int
    location: str
    capacity_mhz: Fraction
    owner: str
    minted_tick: int = 0

    def __post_init__(self) -> None:
        self.bandwidth_mhz = Fraction(self.bandwidth_mhz)
        self.capacity_mhz = Fraction(self.capacity_mhz)
        if self.bandwidth_mhz <= 0 or self.capacity_mhz <= 0:
            raise ValueError("bandwidth and capacity must be > 0")
        if self.slot_duration < 1:
            raise ValueError("slot_duration must be >= 1")

    def meta(self) -> dict:
        return {
            "center_freq_mhz": float(self.center_freq_mhz),
            "bandwidth_mhz": float(self.bandwidth_mhz),
            "capacity_mhz": float(self.capacity_mhz),
            "slot_duration": self.slot_duration,
            "location": self.location,
        }


@dataclass(frozen=True)
class TradeRecord:
    """A settled trade, the unit of welfare accounting."""

    token_id: str
    buyer: str
    seller: str
    price_cents: int
    tick: int
    mechanism: str
    auction_id: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "token_id": self.token_id,
            "buyer": self.buyer,
            "seller": self.seller,
            "price_cents": self.price_cents,
            "tick": self.tick,
            "mechanism": self.mechanism,
            "auction_id": self.auction_id,
        }


@dataclass(frozen=True)
class Transaction:
    """One appended ledger entry. Immutable once appended; (tick, seq) is a
    total order over the log."""

    tx_id: str
    tick: int
    seq: int
    submitter: str
    kind: str
    payload: dict
    world_writes: dict
    private_writes: dict  # org -> {key: value}

    def to_dict(self) -> dict:
        return {
            "tx_id": self.tx_id,
            "tick": self.tick,
            "seq": self.seq,
            "submitter": self.submitter,
            "kind": self.kind,
            "payload": self.payload,
            "world_writes": self.world_writes,
            "private_writes": self.private_writes,
        }


class Ledger:
    """Single-writer ledger state machine.

    Genesis accounts are constructor state (there is no account-creation
    transaction kind); every later mutation appends a transaction whose
    ``world_writes`` fully describe its public effect, which is what makes
    :meth:`replay` exact.
    """

    def __init__(self, accounts: dict[str, int]):
        for agent, balance in accounts.items():
            if balance < 0:
                raise ValueError(f"negative genesis balance for {agent}")
        self.tick: int = 0
        self.log: list[Transaction] = []
        self.world: dict[str, Any] = {}
        self.private: dict[str, dict[str, Any]] = {}
        self.tokens: dict[str, SpectrumToken] = {}
        self.balances: dict[str, int] = dict(accounts)
        self.trades: list[TradeRecord] = []
        self._seq = 0
        self._genesis_accounts = dict(accounts)
        self._genesis_total = sum(accounts.values())
        self._snapshots: list[dict] = []
        self._hooks: list[Callable[[int], None]] = []
        for agent, balance in accounts.items():
            self.world[f"account/{agent}"] = fmt_usd(balance)

    # -- append machinery ---------------------------------------------------

    def _append(
        self,
        submitter: str,
        kind: str,
        payload: dict,
        world_writes: Optional[dict] = None,
        private_writes: Optional[dict] = None,
    ) -> Transaction:
        world_writes = world_writes or {}
        private_writes = private_writes or {}
        tx = Transaction(
            tx_id=f"tx-{self._seq:06d}",
            tick=self.tick,
            seq=self._seq,
            submitter=submitter,
            kind=kind,
            payload=payload,
            world_writes=copy.deepcopy(world_writes),
            private_writes=copy.deepcopy(private_writes),
        )
        self._seq += 1
        for key, value in world_writes.items():
            self.world[key] = copy.deepcopy(value)
        for org, writes in private_writes.items():
            store = self.private.setdefault(org, {})
            for key, value in writes.items():
                store[key] = copy.deepcopy(value)
        self.log.append(tx)
        return tx

    # -- operations ----------------------------------------------------------

    def mint_token(
        self,
        token_id: str,
        owner: str,
        capacity_mhz,
        center_freq_mhz: float = 3500.0,
        slot_duration: int = 1,
        location: str = "region-0",
    ) -> SpectrumToken:
        """Create a token in the genesis inventory, owned by ``owner``."""
        if token_id in self.tokens:
            raise DuplicateTokenError(f"token {token_id} already minted")
        if owner not in self.balances:
            raise UnknownAgentError(f"unknown owner {owner}")
        token = SpectrumToken(
            token_id=token_id,
            center_freq_mhz=center_freq_mhz,
            bandwidth_mhz=Fraction(capacity_mhz),
            slot_duration=slot_duration,
            location=location,
            capacity_mhz=Fraction(capacity_mhz),
            owner=owner,
            minted_tick=self.tick,
        )
        self.tokens[token_id] = token
        self._append(
            submitter=owner,
            kind=TX_MINT,
            payload={"token_id": token_id, "owner": owner},
            world_writes={
                f"token/{token_id}/owner": owner,
                f"token/{token_id}/meta": token.meta(),
            },
        )
        return token

    def apply_settlement(
        self,
        token_id: str,
        buyer: str,
        seller: str,
        price_cents: int,
        mechanism: str = "direct_sale",
        auction_id: Optional[str] = None,
    ) -> TradeRecord:
        """Atomically transfer a token to the buyer and the funds to the
        seller. Rejects double-spends (seller no longer the owner) and
        overdrafts before touching any state."""
        token = self.tokens.get(token_id)
        if token is None:
            raise UnknownTokenError(f"unknown token {token_id}")
        if buyer not in self.balances or seller not in self.balances:
            raise UnknownAgentError("buyer and seller must hold accounts")
        if price_cents < 0:
            raise ValueError("price must be >= 0")
        if token.owner != seller:
            raise NotOwnerError(f"{seller} does not own {token_id}")
        if self.balances[buyer] < price_cents:
            raise InsufficientFundsError(
                f"{buyer} has {self.balances[buyer]} < price {price_cents}"
            )
        token.owner = buyer
        self.balances[buyer] -= price_cents
        self.balances[seller] += price_cents
        record = TradeRecord(
            token_id=token_id,
            buyer=buyer,
            seller=seller,
            price_cents=price_cents,
            tick=self.tick,
            mechanism=mechanism,
            auction_id=auction_id,
        )
        self.trades.append(record)
        self._append(
            submitter=buyer,
            kind=TX_SETTLE,
            payload=record.to_dict(),
            world_writes={
                f"token/{token_id}/owner": buyer,
                f"account/{buyer}": fmt_usd(self.balances[buyer]),
                f"account/{seller}": fmt_usd(self.balances[seller]),
            },
        )
        return record

    def put_private(self, org: str, key: str, value: Any, caller: Optional[str] = None) -> None:
        """Store a value visible only to ``org`` (and the auctioneer role);
        the world state records only a digest of the value."""
        caller = caller if caller is not None else org
        if caller not in (org, AUCTIONEER):
            raise AccessDeniedError(f"{caller} may not write {org}'s private data")
        self.private.setdefault(org, {})[key] = copy.deepcopy(value)
        self.world[f"pdc/{org}/{key}"] = value_digest(value)

    def get_private(self, org: str, key: str, caller: Optional[str] = None) -> Any:
        caller = caller if caller is not None else org
        if caller not in (org, AUCTIONEER):
            raise AccessDeniedError(f"{caller} may not read {org}'s private data")
        try:
            return copy.deepcopy(self.private[org][key])
        except KeyError:
            raise KeyError(f"no private value {key!r} for {org}") from None

    def advance_tick(self) -> int:
        """Finalize the current tick: snapshot state, fire hooks, increment."""
        # World values are replaced whole on every write and never mutated in
        # place, so a shallow copy freezes this tick's view.
        self._snapshots.append(
            {
                "tick": self.tick,
                "world": dict(self.world),
                "balances": dict(self.balances),
                "owners": {tid: tok.owner for tid, tok in self.tokens.items()},
            }
        )
        for hook in self._hooks:
            hook(self.tick)
        self.tick += 1
        return self.tick

    def on_advance(self, hook: Callable[[int], None]) -> None:
        self._hooks.append(hook)

    def history(
        self,
        kind: Optional[str] = None,
        submitter: Optional[str] = None,
        since_tick: Optional[int] = None,
        until_tick: Optional[int] = None,
    ) -> list[Transaction]:
        """Append-ordered transactions matching the filter."""
        out = []
        for tx in self.log:
            if kind is not None and tx.kind != kind:
                continue
            if submitter is not None and tx.submitter != submitter:
                continue
            if since_tick is not None and tx.tick < since_tick:
                continue
            if until_tick is not None and tx.tick > until_tick:
                continue
            out.append(tx)
        return out

    # -- queries and exports ---------------------------------------------------

    def balance(self, agent: str) -> int:
        try:
            return self.balances[agent]
        except KeyError:
            raise UnknownAgentError(f"unknown agent {agent}") from None

    def total_balance(self) -> int:
        return sum(self.balances.values())

    def assert_conserved(self) -> None:
        total = self.total_balance()
        if total != self._genesis_total:
            raise LedgerError(
                f"currency not conserved: {total} != genesis {self._genesis_total}"
            )

    def holdings_of(self, agent: str) -> dict[str, Fraction]:
        """Tokens owned by ``agent`` (mint order), token id -> capacity."""
        return {
            tid: tok.capacity_mhz
            for tid, tok in self.tokens.items()
            if tok.owner == agent
        }

    def snapshot_at(self, tick: int) -> dict:
        """State as recorded when ``tick`` was advanced past."""
        for snap in self._snapshots:
            if snap["tick"] == tick:
                return snap
        raise KeyError(f"no snapshot for tick {tick}")

    @property
    def snapshots(self) -> list[dict]:
        return self._snapshots

    def owner_at(self, token_id: str, tick: int) -> str:
        return self.snapshot_at(tick)["owners"][token_id]

    def world_dump(self) -> str:
        """Sorted key/value JSON rendering of the world state."""
        return json.dumps(self.world, sort_keys=True, separators=(",", ":"))

    def export_jsonl(self) -> str:
        """One JSON transaction per line, in append order."""
        return "\n".join(
            json.dumps(tx.to_dict(), sort_keys=True, separators=(",", ":"))
            for tx in self.log
        ) + ("\n" if self.log else "")

    @staticmethod
    def replay(genesis_accounts: dict[str, int], transactions: Iterable[dict]) -> dict[str, Any]:
        """Rebuild the public world state by applying recorded writes in
        order; determinism means the result matches the live world exactly."""
        world: dict[str, Any] = {
            f"account/{agent}": fmt_usd(balance)
            for agent, balance in genesis_accounts.items()
        }
        for tx in transactions:
            for key, value in tx["world_writes"].items():
                world[key] = value
        return world
