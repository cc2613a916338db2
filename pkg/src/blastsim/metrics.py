"""Market-quality measurement: concentration (HHI), inequality (Gini),
welfare accounting, the cooperative fair-division benchmark, efficiency
trajectory, and residual spectrum demand.

All functions are pure over snapshots. Welfare quantities are exact
rationals; HHI and Gini are floats.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from . import economics


def hhi(shares: Sequence[float]) -> float:
    """Sum of squared ownership shares. Input must be normalized."""
    if any(s < 0 for s in shares):
        raise ValueError("shares must be >= 0")
    total = sum(shares)
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"shares must sum to 1 (got {total})")
    return float(sum(s * s for s in shares))


def gini(balances: Sequence[float]) -> float:
    """Mean normalized absolute pairwise balance difference.

    0 is perfect equality, 1 maximal inequality. An all-zero population is
    defined as perfectly equal.
    """
    if not balances:
        raise ValueError("balances must be non-empty")
    if any(b < 0 for b in balances):
        raise ValueError("balances must be >= 0")
    n = len(balances)
    total = sum(balances)
    if total == 0:
        return 0.0
    diff = sum(abs(a - b) for a in balances for b in balances)
    mean = total / n
    return diff / (2 * n * n * mean)


def capacity_shares(holdings_capacity: Mapping[str, Fraction]) -> list[float]:
    """Ownership fractions by held capacity, in agent order."""
    total = sum(holdings_capacity.values())
    if total <= 0:
        raise ValueError("total capacity must be > 0")
    return [float(Fraction(c) / total) for c in holdings_capacity.values()]


def shapley_benchmark(
    participants: Sequence[tuple[str, Fraction, bool]],
    total_capacity: Fraction,
) -> tuple[Fraction, dict[str, Fraction]]:
    """Average marginal contribution of each agent over all arrival orders.

    A coalition is worth nothing without the seller; with the seller it is
    worth the full capacity valued at the best member utility. Returns the
    grand-coalition value (the fair-welfare total) and per-agent values,
    which sum to it exactly.
    """
    if len(participants) > 10:
        raise ValueError("factorial enumeration is limited to 10 agents")
    sellers = [p for p in participants if p[2]]
    if len(sellers) != 1:
        raise ValueError("exactly one seller required")
    total_capacity = Fraction(total_capacity)
    utilities = {agent_id: Fraction(u) for agent_id, u, _ in participants}
    seller_id = sellers[0][0]

    def coalition_value(members: frozenset[str]) -> Fraction:
        if seller_id not in members or not members:
            return Fraction(0)
        return total_capacity * max(utilities[m] for m in members)

    agent_ids = [p[0] for p in participants]
    accumulated = {a: Fraction(0) for a in agent_ids}
    orders = list(itertools.permutations(agent_ids))
    for order in orders:
        members: frozenset[str] = frozenset()
        value = Fraction(0)
        for agent in order:
            with_agent = members | {agent}
            new_value = coalition_value(with_agent)
            accumulated[agent] += new_value - value
            members, value = with_agent, new_value
    n_orders = len(orders)
    per_agent = {a: accumulated[a] / n_orders for a in agent_ids}
    phi = coalition_value(frozenset(agent_ids))
    return phi, per_agent


def efficiency_ratio(cumulative_surplus: Fraction, phi: Fraction) -> Fraction:
    """Realized surplus as a fraction of the fair-welfare benchmark."""
    phi = Fraction(phi)
    if phi <= 0:
        raise ValueError("benchmark total must be > 0")
    return Fraction(cumulative_surplus) / phi


@dataclass(frozen=True)
class MetricsSnapshot:
    tick: int
    hhi: float
    gini: float
    cumulative_surplus: Fraction
    shapley_total: Fraction
    efficiency: Fraction
    residual_gap_mhz: Fraction
    balances_cents: dict[str, int]
    holdings_mhz: dict[str, Fraction]

    def csv_row(self, agent_order: Sequence[str]) -> str:
        cells = [
            str(self.tick),
            f"{self.hhi:.6f}",
            f"{self.gini:.6f}",
            f"{float(self.cumulative_surplus):.2f}",
            f"{float(self.efficiency):.6f}",
            f"{float(self.residual_gap_mhz):.2f}",
        ]
        for agent in agent_order:
            cells.append(f"{self.balances_cents[agent] / 100:.2f}")
            cells.append(f"{float(self.holdings_mhz[agent]):.2f}")
        return ",".join(cells)


def csv_header(agent_order: Sequence[str]) -> str:
    cols = ["tick", "hhi", "gini", "cumulative_surplus", "efficiency", "residual_gap"]
    for agent in agent_order:
        cols.append(f"balance_{agent}")
        cols.append(f"capacity_{agent}")
    return ",".join(cols)


class MetricsEngine:
    """Accumulates trade surplus and renders per-tick snapshots.

    The fair-welfare total is computed once per scenario from the configured
    utilities and total minted capacity; the per-tick efficiency divides the
    cumulative realized surplus by it.
    """

    def __init__(
        self,
        participants: Sequence[tuple[str, Fraction, bool]],
        total_capacity: Fraction,
    ):
        self.agent_order = [p[0] for p in participants]
        self.utilities = {p[0]: Fraction(p[1]) for p in participants}
        self.phi, self.shapley_values = shapley_benchmark(participants, total_capacity)
        self.cumulative_surplus = Fraction(0)
        self.trades = 0
        self.mhz_traded = Fraction(0)
        self.revenue = Fraction(0)
        self.buyer_profit_total = Fraction(0)
        self.snapshots: list[MetricsSnapshot] = []

    def record_trade(
        self,
        price_cents: int,
        capacity_mhz: Fraction,
        buyer_utility: Fraction,
        seller_utility: Fraction,
    ) -> Fraction:
        """Fold one settled trade into the cumulative surplus."""
        price = economics.from_cents(price_cents)
        breakdown = economics.trade_surplus(
            buyer_utility, seller_utility, capacity_mhz, price
        )
        self.cumulative_surplus += breakdown.total
        self.buyer_profit_total += breakdown.buyer_profit
        self.trades += 1
        self.mhz_traded += Fraction(capacity_mhz)
        self.revenue += price
        return self.cumulative_surplus

    def snapshot(
        self,
        tick: int,
        balances_cents: Mapping[str, int],
        holdings_mhz: Mapping[str, Fraction],
        needs_mhz: Mapping[str, Fraction],
    ) -> MetricsSnapshot:
        shares = capacity_shares({a: holdings_mhz[a] for a in self.agent_order})
        residual = sum(
            (max(Fraction(0), needs_mhz[a] - holdings_mhz[a]) for a in self.agent_order),
            Fraction(0),
        )
        efficiency = (
            efficiency_ratio(self.cumulative_surplus, self.phi)
            if self.phi > 0
            else Fraction(0)
        )
        snap = MetricsSnapshot(
            tick=tick,
            hhi=hhi(shares),
            gini=gini([balances_cents[a] for a in self.agent_order]),
            cumulative_surplus=self.cumulative_surplus,
            shapley_total=self.phi,
            efficiency=efficiency,
            residual_gap_mhz=residual,
            balances_cents={a: balances_cents[a] for a in self.agent_order},
            holdings_mhz={a: Fraction(holdings_mhz[a]) for a in self.agent_order},
        )
        self.snapshots.append(snap)
        return snap

    def to_csv(self) -> str:
        lines = [csv_header(self.agent_order)]
        lines.extend(s.csv_row(self.agent_order) for s in self.snapshots)
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        """Final scenario-wide outcomes (per-MHz price weighting)."""
        last = self.snapshots[-1] if self.snapshots else None
        avg_per_mhz = float(self.revenue / self.mhz_traded) if self.mhz_traded else 0.0
        efficiency = (
            float(efficiency_ratio(self.cumulative_surplus, self.phi))
            if self.phi > 0
            else 0.0
        )
        return {
            "trades": self.trades,
            "avg_usd_per_mhz": round(avg_per_mhz, 6),
            "surplus_usd": round(float(self.cumulative_surplus), 2),
            "shapley_usd": round(float(self.phi), 2),
            "efficiency": round(efficiency, 6),
            "gini": round(last.gini, 6) if last else 0.0,
            "hhi": round(last.hhi, 6) if last else 0.0,
        }
