"""Thin-client command line.

Every command talks to the HTTP service: against a remote server when
``--server`` is given, otherwise against an in-process application instance
so no separate daemon is needed. Exit code 0 on success, 2 on validation
errors.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Optional

import click
import httpx


def _client(server: Optional[str]) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server.rstrip("/"), timeout=600.0)
    from fastapi.testclient import TestClient

    from .service import create_app

    return TestClient(create_app())


def _fail_validation(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(2)


def _post(client: httpx.Client, path: str, payload: dict) -> dict:
    response = client.post(path, json=payload)
    if response.status_code == 422:
        detail = response.json().get("detail", response.text)
        _fail_validation(json.dumps(detail) if not isinstance(detail, str) else detail)
    response.raise_for_status()
    return response.json()


@click.group()
def main() -> None:
    """Spectrum-market simulator: deterministic runs, market metrics, and
    sealed-bid privacy verification."""


@main.command("run")
@click.option("--scenario", default="scenario1", show_default=True,
              help="Preset name (scenario1, scenario2) or path to a JSON config.")
@click.option("--mechanism", type=click.Choice(["ds", "fp", "sp"]), default=None,
              help="Override the configured mechanism.")
@click.option("--ticks", type=int, default=None, help="Override num_ticks.")
@click.option("--seed", type=int, default=None, help="Override the RNG seed.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
              help="Directory for run artifacts.")
@click.option("--seeds", type=int, default=None,
              help="Batch mode: run this many consecutive seeds and emit "
                   "per-seed summaries plus mean/stddev.")
@click.option("--strategy", type=click.Choice(["heuristic", "pipeline"]), default=None,
              help="Override every agent's strategy.")
@click.option("--brain-endpoint", default=None,
              help="External planner URL for pipeline agents.")
@click.option("--server", default=None, help="Remote service URL (default: in-process).")
def run_command(
    scenario: str,
    mechanism: Optional[str],
    ticks: Optional[int],
    seed: Optional[int],
    out_dir: str,
    seeds: Optional[int],
    strategy: Optional[str],
    brain_endpoint: Optional[str],
    server: Optional[str],
) -> None:
    """Execute a scenario and write its artifacts to --out."""
    scenario_field: object = scenario
    path = Path(scenario)
    if path.suffix == ".json" or path.exists():
        try:
            scenario_field = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            _fail_validation(f"cannot read scenario {scenario}: {exc}")
    payload = {
        "scenario": scenario_field,
        "mechanism": mechanism,
        "ticks": ticks,
        "seed": seed,
        "seeds": seeds,
        "strategy": strategy,
        "brain_endpoint": brain_endpoint,
    }
    with _client(server) as client:
        body = _post(client, "/runs", payload)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if seeds is not None:
        (out / "summary.csv").write_text(body["summary_csv"])
        (out / "aggregate.json").write_text(
            json.dumps(body["aggregate"], sort_keys=True, indent=2) + "\n"
        )
        click.echo(f"wrote batch summaries for {len(body['summaries'])} seeds to {out}")
    else:
        for name, content in body["artifacts"].items():
            (out / name).write_text(content)
        click.echo(json.dumps(body["summary"], sort_keys=True))
        click.echo(f"wrote artifacts to {out}")


@main.command("verify-privacy")
@click.option("--run", "run_dir", required=True, type=click.Path(exists=True, file_okay=False),
              help="Run directory containing transactions.jsonl and world_snapshots.jsonl.")
@click.option("--server", default=None, help="Remote service URL (default: in-process).")
def verify_privacy_command(run_dir: str, server: Optional[str]) -> None:
    """Scan a finished run's world-state snapshots for leaked bid values."""
    run_path = Path(run_dir)
    tx_path = run_path / "transactions.jsonl"
    snap_path = run_path / "world_snapshots.jsonl"
    if not tx_path.exists() or not snap_path.exists():
        _fail_validation(
            f"{run_dir} lacks transactions.jsonl / world_snapshots.jsonl"
        )
    payload = {
        "transactions_jsonl": tx_path.read_text(),
        "world_snapshots_jsonl": snap_path.read_text(),
    }
    with _client(server) as client:
        body = _post(client, "/verify-privacy", payload)
    click.echo(json.dumps(body, sort_keys=True, indent=2))


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve_command(host: str, port: int) -> None:
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run("blastsim.service:app", host=host, port=port)


if __name__ == "__main__":
    main()
