"""Scenario configuration, the tick-driven run loop, reproducibility
controls, and artifact export.

A run executes ``num_ticks`` of: build per-agent market views from the
finished tick, decide (perceive/plan or heuristic) for every agent over
those immutable views, act in a freshly drawn seeded permutation, advance
auction windows (close, finalize, settle), fold new trades into the metrics
engine, then advance the ledger tick (which snapshots state and the world
for the privacy scan). With built-in planners the whole pipeline is a pure
function of (config, seed): re-running produces byte-identical artifacts.
"""

from __future__ import annotations

import json
import random
import re
import statistics
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Optional, Union

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from .agents import AgentRuntime, AgentState, BoardEntry, ExternalBrain, MarketView
from .auctionhouse import (
    AuctionHouse,
    DIRECT_SALE,
    OPEN,
    REVEALING,
    SEALED_BID,
    parse_mechanism,
)
from .economics import BidHistory, PricingPolicy, to_cents
from .ledger import Ledger
from .metrics import MetricsEngine

SUMMARY_COLUMNS = [
    "mechanism",
    "seed",
    "trades",
    "avg_usd_per_mhz",
    "surplus_usd",
    "shapley_usd",
    "efficiency",
    "gini",
    "hhi",
]


class ScenarioError(ValueError):
    """Configuration could not be loaded or validated."""


class TokenBatchConfig(BaseModel):
    count: int = 25
    capacity_mhz: float = 10.0
    center_freq_mhz: float = 3500.0
    slot_duration: int = 100
    location: str = "region-0"

    @field_validator("count")
    @classmethod
    def _count_positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError("token count must be >= 1")
        return v

    @field_validator("capacity_mhz")
    @classmethod
    def _capacity_positive(cls, v: float) -> float:
        if v <= 0:
            raise ValueError("capacity_mhz must be > 0")
        return v


class AgentConfig(BaseModel):
    agent_id: str
    role: str  # "seller" | "buyer"
    utility_per_mhz: float
    initial_balance: float = 5000.0
    need_mhz: float = 0.0
    need_ramp_per_tick: float = 0.0
    strategy: str = "pipeline"  # "heuristic" | "pipeline"

    @field_validator("role")
    @classmethod
    def _role_known(cls, v: str) -> str:
        if v not in ("seller", "buyer"):
            raise ValueError("role must be 'seller' or 'buyer'")
        return v

    @field_validator("strategy")
    @classmethod
    def _strategy_known(cls, v: str) -> str:
        if v not in ("heuristic", "pipeline"):
            raise ValueError("strategy must be 'heuristic' or 'pipeline'")
        return v

    @field_validator("utility_per_mhz", "initial_balance", "need_mhz")
    @classmethod
    def _non_negative(cls, v: float) -> float:
        if v < 0:
            raise ValueError("must be >= 0")
        return v


class PricingConfig(BaseModel):
    markup: float = 1.15
    decay: float = 0.10

    @field_validator("markup")
    @classmethod
    def _markup(cls, v: float) -> float:
        if v <= 1:
            raise ValueError("markup must be > 1")
        return v

    @field_validator("decay")
    @classmethod
    def _decay(cls, v: float) -> float:
        if not 0 <= v < 1:
            raise ValueError("decay must be in [0, 1)")
        return v


class BrainConfig(BaseModel):
    endpoint: Optional[str] = None
    timeout_s: float = 10.0


class ScenarioConfig(BaseModel):
    name: str = "custom"
    mechanism: str = "second_price"
    num_ticks: int = 100
    seed: int = 0
    tokens: TokenBatchConfig = Field(default_factory=TokenBatchConfig)
    agents: list[AgentConfig]
    pricing: PricingConfig = Field(default_factory=PricingConfig)
    brain: BrainConfig = Field(default_factory=BrainConfig)
    bid_history_window: int = 20
    grid_step: Optional[float] = None
    max_concurrent_listings: Optional[int] = None
    token_expiry: bool = False

    @field_validator("mechanism")
    @classmethod
    def _mechanism(cls, v: str) -> str:
        return parse_mechanism(v)

    @field_validator("num_ticks")
    @classmethod
    def _ticks(cls, v: int) -> int:
        if v < 1:
            raise ValueError("num_ticks must be >= 1")
        return v

    @field_validator("bid_history_window")
    @classmethod
    def _window(cls, v: int) -> int:
        if v < 1:
            raise ValueError("bid_history_window must be >= 1")
        return v

    @model_validator(mode="after")
    def _agents_consistent(self) -> "ScenarioConfig":
        if not self.agents:
            raise ValueError("agents must be non-empty")
        sellers = [a for a in self.agents if a.role == "seller"]
        if len(sellers) != 1:
            raise ValueError(
                f"exactly one seller required (found {len(sellers)})"
            )
        ids = [a.agent_id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ValueError("agent_id values must be unique")
        if self.grid_step is not None and self.grid_step <= 0:
            raise ValueError("grid_step must be > 0")
        return self

    def with_overrides(
        self,
        mechanism: Optional[str] = None,
        num_ticks: Optional[int] = None,
        seed: Optional[int] = None,
        strategy: Optional[str] = None,
        brain_endpoint: Optional[str] = None,
    ) -> "ScenarioConfig":
        data = self.model_dump()
        if mechanism is not None:
            data["mechanism"] = mechanism
        if num_ticks is not None:
            data["num_ticks"] = num_ticks
        if seed is not None:
            data["seed"] = seed
        if strategy is not None:
            for agent in data["agents"]:
                agent["strategy"] = strategy
        if brain_endpoint is not None:
            data["brain"]["endpoint"] = brain_endpoint
        return ScenarioConfig.model_validate(data)


def _preset_scenario1() -> dict:
    return {
        "name": "scenario1",
        "mechanism": "second_price",
        "num_ticks": 100,
        "seed": 0,
        "tokens": {"count": 25, "capacity_mhz": 10.0},
        "agents": [
            {"agent_id": "agent-0", "role": "seller", "utility_per_mhz": 5.0,
             "initial_balance": 5000.0, "need_mhz": 0.0},
            {"agent_id": "agent-1", "role": "buyer", "utility_per_mhz": 10.0,
             "initial_balance": 5000.0, "need_mhz": 100.0},
            {"agent_id": "agent-2", "role": "buyer", "utility_per_mhz": 15.0,
             "initial_balance": 5000.0, "need_mhz": 100.0},
            {"agent_id": "agent-3", "role": "buyer", "utility_per_mhz": 20.0,
             "initial_balance": 5000.0, "need_mhz": 100.0},
        ],
    }


def _preset_scenario2() -> dict:
    preset = _preset_scenario1()
    preset["name"] = "scenario2"
    for agent in preset["agents"]:
        if agent["role"] == "buyer":
            agent["utility_per_mhz"] = 20.0
    return preset


PRESETS = {
    "scenario1": _preset_scenario1,
    "scenario2": _preset_scenario2,
}


def load_scenario(path_or_name: Union[str, Path]) -> ScenarioConfig:
    """Load a bundled preset by name, or a JSON config from a file path."""
    key = str(path_or_name)
    if key in PRESETS:
        return ScenarioConfig.model_validate(PRESETS[key]())
    path = Path(path_or_name)
    if not path.exists():
        raise ScenarioError(f"no preset or config file named {key!r}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON: {exc}") from exc
    try:
        return ScenarioConfig.model_validate(raw)
    except ValidationError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


@dataclass
class RunArtifacts:
    """Everything a run emits; re-running the same (config, seed) with
    built-in planners reproduces these byte for byte."""

    config: dict
    mechanism: str
    seed: int
    transactions_jsonl: str
    trades_jsonl: str
    metrics_csv: str
    world_snapshots_jsonl: str
    summary: dict
    privacy_report: dict

    def files(self) -> dict[str, str]:
        return {
            "transactions.jsonl": self.transactions_jsonl,
            "trades.jsonl": self.trades_jsonl,
            "metrics.csv": self.metrics_csv,
            "world_snapshots.jsonl": self.world_snapshots_jsonl,
            "summary.csv": summary_csv([self.summary]),
            "privacy_report.json": json.dumps(self.privacy_report, sort_keys=True, indent=2) + "\n",
            "run_config.json": json.dumps(self.config, sort_keys=True, indent=2) + "\n",
        }


class Simulation:
    """One scenario instance wired onto a fresh ledger."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.rng = random.Random(config.seed)
        accounts = {
            a.agent_id: to_cents(Fraction(str(a.initial_balance)))
            for a in config.agents
        }
        self.ledger = Ledger(accounts)
        self.house = AuctionHouse(self.ledger)
        self.utilities = {
            a.agent_id: Fraction(str(a.utility_per_mhz)) for a in config.agents
        }
        self.roles = {a.agent_id: a.role for a in config.agents}
        self.num_buyers = sum(1 for a in config.agents if a.role == "buyer")
        self.seller_id = next(a.agent_id for a in config.agents if a.role == "seller")

        capacity = Fraction(str(config.tokens.capacity_mhz))
        total_capacity = capacity * config.tokens.count
        participants = [
            (a.agent_id, self.utilities[a.agent_id], a.role == "seller")
            for a in config.agents
        ]
        self.metrics = MetricsEngine(participants, total_capacity)

        policy = PricingPolicy(
            markup=Fraction(str(config.pricing.markup)),
            decay=Fraction(str(config.pricing.decay)),
        )
        grid_step = (
            Fraction(str(config.grid_step)) if config.grid_step is not None else None
        )
        self.runtimes: dict[str, AgentRuntime] = {}
        for a in config.agents:
            brain = None
            if a.strategy == "pipeline" and config.brain.endpoint:
                brain = ExternalBrain(config.brain.endpoint, config.brain.timeout_s)
            state = AgentState(
                agent_id=a.agent_id,
                balance_cents=accounts[a.agent_id],
                utility_per_mhz=self.utilities[a.agent_id],
                need_mhz=Fraction(str(a.need_mhz)),
            )
            self.runtimes[a.agent_id] = AgentRuntime(
                state=state,
                strategy=a.strategy,
                brain=brain,
                policy=policy,
                grid_step=grid_step,
            )

        self.world_snapshot_lines: list[str] = []
        self._trades_seen = 0
        self.ledger.on_advance(self._on_advance)

        for i in range(config.tokens.count):
            self.ledger.mint_token(
                token_id=f"token-{i:03d}",
                owner=self.seller_id,
                capacity_mhz=capacity,
                center_freq_mhz=config.tokens.center_freq_mhz,
                slot_duration=config.tokens.slot_duration,
                location=config.tokens.location,
            )

    # -- per-tick helpers -------------------------------------------------------

    def _need_at(self, agent_id: str, tick: int) -> Fraction:
        cfg = next(a for a in self.config.agents if a.agent_id == agent_id)
        need = Fraction(str(cfg.need_mhz)) + Fraction(str(cfg.need_ramp_per_tick)) * tick
        return max(Fraction(0), need)

    def _token_active(self, token, tick: int) -> bool:
        if not self.config.token_expiry:
            return True
        return tick < token.minted_tick + token.slot_duration

    def _refresh_states(self, tick: int) -> None:
        for agent_id, runtime in self.runtimes.items():
            runtime.state.balance_cents = self.ledger.balance(agent_id)
            runtime.state.need_mhz = self._need_at(agent_id, tick)
            runtime.state.holdings = {
                tid: tok.capacity_mhz
                for tid, tok in self.ledger.tokens.items()
                if tok.owner == agent_id and self._token_active(tok, tick)
            }

    def _build_view(self, agent_id: str, tick: int) -> MarketView:
        board = []
        for auction in self.house.auctions.values():
            if auction.phase not in (OPEN, REVEALING):
                continue
            token = self.ledger.tokens[auction.token_id]
            board.append(
                BoardEntry(
                    auction_id=auction.auction_id,
                    token_id=auction.token_id,
                    mechanism=auction.mechanism,
                    seller=auction.seller,
                    reserve_cents=auction.reserve_cents,
                    phase=auction.phase,
                    commit_count=len(auction.commits),
                    capacity_mhz=token.capacity_mhz,
                )
            )
        prices = [
            Fraction(t.price_cents, 100)
            for t in self.ledger.trades
            if t.mechanism == self.config.mechanism
        ]
        history = BidHistory.recent(prices, window=self.config.bid_history_window)
        own_pending = frozenset(
            aid
            for aid, auction in self.house.auctions.items()
            if agent_id in auction.commits and auction.phase in (OPEN, REVEALING)
        )
        runtime = self.runtimes[agent_id]
        at_cap = (
            self.config.max_concurrent_listings is not None
            and self.house.active_listings_by(agent_id)
            >= self.config.max_concurrent_listings
        )
        idle: list[tuple[str, Fraction]] = []
        if not at_cap:
            idle = [
                (tid, tok.capacity_mhz)
                for tid, tok in self.ledger.tokens.items()
                if tok.owner == agent_id
                and self.house.active_listing_for(tid) is None
                and self._token_active(tok, tick)
            ]
        return MarketView(
            tick=tick,
            mechanism=self.config.mechanism,
            num_buyers=self.num_buyers,
            open_auctions=board,
            recent_winning_bids=history,
            own_pending_bids=own_pending,
            own_idle_tokens=idle,
            own_active_listings=self.house.active_listings_by(agent_id),
            stats=runtime.stats(),
        )

    def _on_advance(self, tick: int) -> None:
        balances = dict(self.ledger.balances)
        holdings = {
            agent_id: sum(
                (tok.capacity_mhz
                 for tok in self.ledger.tokens.values()
                 if tok.owner == agent_id),
                Fraction(0),
            )
            for agent_id in self.runtimes
        }
        needs = {a: self._need_at(a, tick) for a in self.runtimes}
        self.metrics.snapshot(tick, balances, holdings, needs)
        commit_open = any(
            a.mechanism in SEALED_BID and a.phase == OPEN
            for a in self.house.auctions.values()
        )
        line = json.dumps(
            {
                "tick": tick,
                "commit_phase_active": commit_open,
                "world": self.ledger.world,
            },
            sort_keys=True,
            separators=(",", ":"),
        )
        self.world_snapshot_lines.append(line)

    def _check_invariants(self) -> None:
        self.ledger.assert_conserved()
        if len(self.ledger.tokens) != self.config.tokens.count:
            raise RuntimeError("token count changed after genesis")
        for token in self.ledger.tokens.values():
            if token.owner not in self.ledger.balances:
                raise RuntimeError(f"token {token.token_id} owned by unknown agent")

    # -- main loop -----------------------------------------------------------------

    def run(self) -> RunArtifacts:
        for tick in range(self.config.num_ticks):
            self._refresh_states(tick)
            views = {a: self._build_view(a, tick) for a in self.runtimes}
            intents = {a: rt.decide(views[a]) for a, rt in self.runtimes.items()}
            order = self.rng.sample(list(self.runtimes), k=len(self.runtimes))
            for agent_id in order:
                self.runtimes[agent_id].act(
                    intents[agent_id], self.house, self.ledger, self.rng
                )
            ended = self.house.advance_phases(tick)
            for auction, outcome in ended:
                capacity = self.ledger.tokens[auction.token_id].capacity_mhz
                for runtime in self.runtimes.values():
                    runtime.on_auction_ended(auction, outcome, capacity)
            for trade in self.ledger.trades[self._trades_seen :]:
                capacity = self.ledger.tokens[trade.token_id].capacity_mhz
                self.metrics.record_trade(
                    trade.price_cents,
                    capacity,
                    self.utilities[trade.buyer],
                    self.utilities[trade.seller],
                )
                self.runtimes[trade.seller].last_reserves.pop(trade.token_id, None)
            self._trades_seen = len(self.ledger.trades)
            self._check_invariants()
            self.ledger.advance_tick()
        return self._artifacts()

    def _artifacts(self) -> RunArtifacts:
        trades_jsonl = "".join(
            json.dumps(t.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"
            for t in self.ledger.trades
        )
        world_jsonl = "".join(line + "\n" for line in self.world_snapshot_lines)
        transactions_jsonl = self.ledger.export_jsonl()
        summary = {
            "mechanism": self.config.mechanism,
            "seed": self.config.seed,
            **self.metrics.summary(),
        }
        privacy_report = verify_privacy(
            [tx.to_dict() for tx in self.ledger.log],
            [json.loads(line) for line in self.world_snapshot_lines],
        )
        return RunArtifacts(
            config=self.config.model_dump(mode="json"),
            mechanism=self.config.mechanism,
            seed=self.config.seed,
            transactions_jsonl=transactions_jsonl,
            trades_jsonl=trades_jsonl,
            metrics_csv=self.metrics.to_csv(),
            world_snapshots_jsonl=world_jsonl,
            summary=summary,
            privacy_report=privacy_report,
        )


def run(config: ScenarioConfig, seed: Optional[int] = None) -> RunArtifacts:
    """Execute one scenario; ``seed`` overrides the config's seed."""
    if seed is not None:
        config = config.with_overrides(seed=seed)
    return Simulation(config).run()


def run_batch(config: ScenarioConfig, num_seeds: int) -> list[RunArtifacts]:
    """Run ``num_seeds`` consecutive seeds starting at the config's seed."""
    if num_seeds < 1:
        raise ScenarioError("num_seeds must be >= 1")
    return [run(config, seed=config.seed + i) for i in range(num_seeds)]


def summary_csv(rows: list[dict]) -> str:
    lines = [",".join(SUMMARY_COLUMNS)]
    for row in rows:
        lines.append(",".join(str(row[c]) for c in SUMMARY_COLUMNS))
    return "\n".join(lines) + "\n"


def aggregate_summaries(rows: list[dict]) -> dict:
    """Mean and sample standard deviation of each numeric summary column."""
    numeric = [c for c in SUMMARY_COLUMNS if c not in ("mechanism", "seed")]
    out: dict = {"runs": len(rows)}
    for col in numeric:
        values = [float(r[col]) for r in rows]
        out[col] = {
            "mean": statistics.fmean(values),
            "stddev": statistics.stdev(values) if len(values) > 1 else 0.0,
        }
    return out


def emit_reports(
    artifacts: Union[RunArtifacts, list[RunArtifacts]], out_dir: Union[str, Path]
) -> dict[str, Path]:
    """Write run artifacts to disk.

    A single run writes its files at the top level. A list writes one
    subdirectory per run plus a combined summary.csv and aggregate.json.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}
    if isinstance(artifacts, RunArtifacts):
        for name, content in artifacts.files().items():
            path = out / name
            path.write_text(content)
            paths[name] = path
        return paths
    rows = [a.summary for a in artifacts]
    for art in artifacts:
        sub = out / f"{art.mechanism}_seed{art.seed}"
        sub.mkdir(parents=True, exist_ok=True)
        for name, content in art.files().items():
            path = sub / name
            path.write_text(content)
            paths[f"{sub.name}/{name}"] = path
    summary_path = out / "summary.csv"
    summary_path.write_text(summary_csv(rows))
    paths["summary.csv"] = summary_path
    aggregate_path = out / "aggregate.json"
    aggregate_path.write_text(
        json.dumps(aggregate_summaries(rows), sort_keys=True, indent=2) + "\n"
    )
    paths["aggregate.json"] = aggregate_path
    return paths


def verify_privacy(transactions: list[dict], world_snapshots: list[dict]) -> dict:
    """Scan world-state snapshots taken while bidding was open for any
    committed plaintext bid value.

    Committed values are read from the audit log's private writes; each is
    searched (as a decimal cent string, with hex-aware boundaries so digests
    and unrelated digit runs cannot alias) in every snapshot between the
    auction's listing and its close. Values revealed after close are public
    by design and are not findings.
    """
    opened: dict[str, int] = {}
    closed: dict[str, int] = {}
    commits: list[tuple[str, str, int]] = []
    for tx in transactions:
        kind = tx.get("kind")
        payload = tx.get("payload", {})
        if kind == "List":
            opened[payload["auction_id"]] = tx["tick"]
        elif kind == "Close":
            closed[payload["auction_id"]] = tx["tick"]
        elif kind == "Commit":
            auction_id = payload["auction_id"]
            bidder = payload["bidder"]
            for writes in tx.get("private_writes", {}).values():
                for value in writes.values():
                    if isinstance(value, dict) and "value_cents" in value:
                        commits.append((auction_id, bidder, int(value["value_cents"])))

    blobs = [
        (snap["tick"], json.dumps(snap["world"], sort_keys=True))
        for snap in world_snapshots
    ]
    findings = []
    patterns: dict[int, re.Pattern] = {}
    for auction_id, bidder, value in commits:
        start = opened.get(auction_id, 0)
        end = closed.get(auction_id)
        pattern = patterns.get(value)
        if pattern is None:
            pattern = re.compile(rf"(?<![0-9A-Fa-f]){value}(?![0-9A-Fa-f])")
            patterns[value] = pattern
        for tick, blob in blobs:
            if tick < start:
                continue
            if end is not None and tick > end:
                continue
            if pattern.search(blob):
                findings.append(
                    {
                        "tick": tick,
                        "auction_id": auction_id,
                        "bidder": bidder,
                        "value_cents": value,
                    }
                )
    return {
        "clean": not findings,
        "findings": findings,
        "snapshots_scanned": len(blobs),
        "commit_values_checked": len(commits),
    }


def verify_privacy_dir(run_dir: Union[str, Path]) -> dict:
    """Post-hoc privacy scan over a written run directory."""
    run_dir = Path(run_dir)
    tx_path = run_dir / "transactions.jsonl"
    snap_path = run_dir / "world_snapshots.jsonl"
    if not tx_path.exists() or not snap_path.exists():
        raise ScenarioError(
            f"{run_dir} lacks transactions.jsonl / world_snapshots.jsonl"
        )
    transactions = [
        json.loads(line) for line in tx_path.read_text().splitlines() if line
    ]
    snapshots = [
        json.loads(line) for line in snap_path.read_text().splitlines() if line
    ]
    return verify_privacy(transactions, snapshots)
