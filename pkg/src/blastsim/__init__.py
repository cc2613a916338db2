"""Deterministic tick-based simulator of a ledger-backed spectrum trading
marketplace: sealed-bid commit-reveal auctions, autonomous trading agents,
and market-quality metrics."""

__version__ = "0.1.0"
