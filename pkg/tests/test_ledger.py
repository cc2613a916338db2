"""Unit tests for the permissioned-ledger emulation."""

import json
import random

import pytest

from blastsim.ledger import (
    AUCTIONEER,
    AccessDeniedError,
    DuplicateTokenError,
    InsufficientFundsError,
    Ledger,
    NotOwnerError,
    UnknownAgentError,
    UnknownTokenError,
    commit_digest,
    fmt_usd,
    value_digest,
)


@pytest.fixture
def ledger():
    return Ledger({"agent-0": 500_000, "agent-1": 500_000, "agent-2": 500_000})


class TestMint:
    def test_mint_assigns_owner(self, ledger):
        token = ledger.mint_token("token-0", "agent-0", 10, center_freq_mhz=3500.0)
        assert token.owner == "agent-0"
        assert ledger.world["token/token-0/owner"] == "agent-0"
        assert ledger.history(kind="Mint")[-1].payload["token_id"] == "token-0"

    def test_duplicate_id_rejected(self, ledger):
        ledger.mint_token("token-0", "agent-0", 10)
        with pytest.raises(DuplicateTokenError):
            ledger.mint_token("token-0", "agent-1", 10)

    def test_unknown_owner_rejected(self, ledger):
        with pytest.raises(UnknownAgentError):
            ledger.mint_token("token-0", "nobody", 10)

    def test_genesis_inventory_capacity(self, ledger):
        for i in range(25):
            ledger.mint_token(f"token-{i:03d}", "agent-0", 10)
        total = sum(t.capacity_mhz for t in ledger.tokens.values())
        assert total == 250

    def test_invalid_token_shape(self, ledger):
        with pytest.raises(ValueError):
            ledger.mint_token("token-0", "agent-0", 0)
        with pytest.raises(ValueError):
            ledger.mint_token("token-1", "agent-0", 10, slot_duration=0)


class TestSettlement:
    def test_transfers_token_and_funds(self, ledger):
        ledger.mint_token("token-0", "agent-0", 10)
        record = ledger.apply_settlement("token-0", "agent-1", "agent-0", 15_000)
        assert ledger.tokens["token-0"].owner == "agent-1"
        assert ledger.balance("agent-1") == 485_000
        assert ledger.balance("agent-0") == 515_000
        assert record.price_cents == 15_000

    def test_zero_price_transfers_ownership_only(self, ledger):
        ledger.mint_token("token-0", "agent-0", 10)
        ledger.apply_settlement("token-0", "agent-1", "agent-0", 0)
        assert ledger.tokens["token-0"].owner == "agent-1"
        assert ledger.balance("agent-1") == 500_000
        assert ledger.balance("agent-0") == 500_000

    def test_insufficient_funds(self, ledger):
        ledger.mint_token("token-0", "agent-0", 10)
        with pytest.raises(InsufficientFundsError):
            ledger.apply_settlement("token-0", "agent-1", "agent-0", 600_000)

    def test_double_spend_rejected(self, ledger):
        ledger.mint_token("token-0", "agent-0", 10)
        ledger.apply_settlement("token-0", "agent-1", "agent-0", 100)
        with pytest.raises(NotOwnerError):
            ledger.apply_settlement("token-0", "agent-2", "agent-0", 100)

    def test_unknown_token(self, ledger):
        with pytest.raises(UnknownTokenError):
            ledger.apply_settlement("ghost", "agent-1", "agent-0", 100)

    def test_conservation_over_random_settlements(self, ledger):
        rng = random.Random(9)
        for i in range(5):
            ledger.mint_token(f"token-{i}", "agent-0", 10)
        genesis_total = ledger.total_balance()
        agents = ["agent-0", "agent-1", "agent-2"]
        for _ in range(200):
            token = ledger.tokens[rng.choice(list(ledger.tokens))]
            buyer = rng.choice([a for a in agents if a != token.owner])
            price = rng.randint(0, ledger.balance(buyer))
            ledger.apply_settlement(token.token_id, buyer, token.owner, price)
            assert ledger.total_balance() == genesis_total
        ledger.assert_conserved()


class TestPrivateStore:
    def test_put_get_roundtrip(self, ledger):
        ledger.put_private("agent-1", "bid:auct1", 140)
        assert ledger.get_private("agent-1", "bid:auct1") == 140

    def test_other_org_denied(self, ledger):
        ledger.put_private("agent-1", "bid:auct1", 140)
        with pytest.raises(AccessDeniedError):
            ledger.get_private("agent-1", "bid:auct1", caller="agent-2")

    def test_auctioneer_may_read(self, ledger):
        ledger.put_private("agent-1", "bid:auct1", 140)
        assert ledger.get_private("agent-1", "bid:auct1", caller=AUCTIONEER) == 140

    def test_world_holds_digest_not_value(self, ledger):
        ledger.put_private("agent-1", "bid:auct1", 140)
        stored = ledger.world["pdc/agent-1/bid:auct1"]
        assert stored == value_digest(140)
        assert stored != 140
        assert "140" not in json.dumps({"k": stored})


class TestTicks:
    def test_single_advance(self, ledger):
        assert ledger.tick == 0
        assert ledger.advance_tick() == 1

    def test_hundred_ticks(self, ledger):
        for _ in range(100):
            ledger.advance_tick()
        assert ledger.tick == 100

    def test_history_query_returns_pre_advance_state(self, ledger):
        ledger.mint_token("token-0", "agent-0", 10)
        ledger.advance_tick()
        ledger.apply_settlement("token-0", "agent-1", "agent-0", 100)
        ledger.advance_tick()
        assert ledger.owner_at("token-0", 0) == "agent-0"
        assert ledger.owner_at("token-0", 1) == "agent-1"
        assert ledger.snapshot_at(0)["balances"]["agent-1"] == 500_000

    def test_hook_fires_with_finished_tick(self, ledger):
        seen = []
        ledger.on_advance(seen.append)
        ledger.advance_tick()
        ledger.advance_tick()
        assert seen == [0, 1]


class TestHistory:
    def test_filter_by_kind(self, ledger):
        for i in range(3):
            ledger.mint_token(f"token-{i}", "agent-0", 10)
            ledger.apply_settlement(f"token-{i}", "agent-1", "agent-0", 100)
        assert len(ledger.history(kind="Settle")) == 3
        assert len(ledger.history(kind="Mint")) == 3

    def test_empty_ledger(self, ledger):
        assert ledger.history() == []

    def test_settle_history_matches_trade_records(self, ledger):
        for i in range(4):
            ledger.mint_token(f"token-{i}", "agent-0", 10)
            ledger.apply_settlement(f"token-{i}", "agent-1", "agent-0", 100 + i)
        prices = [tx.payload["price_cents"] for tx in ledger.history(kind="Settle")]
        assert prices == [t.price_cents for t in ledger.trades]

    def test_append_order_is_total(self, ledger):
        ledger.mint_token("token-0", "agent-0", 10)
        ledger.advance_tick()
        ledger.apply_settlement("token-0", "agent-1", "agent-0", 100)
        keys = [(tx.tick, tx.seq) for tx in ledger.history()]
        assert keys == sorted(keys)


class TestExportsAndReplay:
    def test_jsonl_one_line_per_tx(self, ledger):
        ledger.mint_token("token-0", "agent-0", 10)
        ledger.apply_settlement("token-0", "agent-1", "agent-0", 100)
        lines = [l for l in ledger.export_jsonl().splitlines() if l]
        assert len(lines) == 2
        assert json.loads(lines[0])["kind"] == "Mint"

    def test_world_dump_sorted(self, ledger):
        ledger.mint_token("token-0", "agent-0", 10)
        dump = json.loads(ledger.world_dump())
        assert list(dump) == sorted(dump)

    def test_replay_reproduces_world(self, ledger):
        rng = random.Random(4)
        for i in range(5):
            ledger.mint_token(f"token-{i}", "agent-0", 10)
        for _ in range(50):
            token = ledger.tokens[rng.choice(list(ledger.tokens))]
            buyer = rng.choice([a for a in ["agent-0", "agent-1", "agent-2"] if a != token.owner])
            ledger.apply_settlement(token.token_id, buyer, token.owner, rng.randint(0, 1000))
        genesis = {"agent-0": 500_000, "agent-1": 500_000, "agent-2": 500_000}
        replayed = Ledger.replay(genesis, [tx.to_dict() for tx in ledger.log])
        assert replayed == ledger.world


class TestHelpers:
    def test_fmt_usd(self):
        assert fmt_usd(11500) == "115.00"
        assert fmt_usd(5) == "0.05"
        assert fmt_usd(500_000) == "5000.00"

    def test_commit_digest_is_salt_sensitive(self):
        d = commit_digest("aa", 14000)
        assert d != commit_digest("ab", 14000)
        assert d != commit_digest("aa", 13900)
        assert len(d) == 64
