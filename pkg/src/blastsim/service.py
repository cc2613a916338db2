"""HTTP face of the simulator.

The service is stateless: a run request executes synchronously and returns
its summary plus the full artifact bundle inline, so clients (including the
bundled CLI) own persistence. Batch requests return per-seed summaries and
an aggregate instead of per-seed artifact bundles.
"""

from __future__ import annotations

from typing import Optional, Union

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .simctl import (
    PRESETS,
    RunArtifacts,
    ScenarioConfig,
    ScenarioError,
    aggregate_summaries,
    load_scenario,
    run,
    run_batch,
    summary_csv,
    verify_privacy,
)

import json


class HealthResponse(BaseModel):
    status: str
    version: str


class PresetInfo(BaseModel):
    name: str
    config: dict


class PresetListResponse(BaseModel):
    presets: list[PresetInfo]


class RunRequest(BaseModel):
    """A preset name or an inline scenario document, plus field overrides."""

    scenario: Union[str, dict] = "scenario1"
    mechanism: Optional[str] = None
    ticks: Optional[int] = None
    seed: Optional[int] = None
    seeds: Optional[int] = Field(default=None, description="batch: number of consecutive seeds")
    strategy: Optional[str] = None
    brain_endpoint: Optional[str] = None


class RunResponse(BaseModel):
    summary: Optional[dict] = None
    artifacts: Optional[dict[str, str]] = None
    summaries: Optional[list[dict]] = None
    aggregate: Optional[dict] = None
    summary_csv: Optional[str] = None


class VerifyPrivacyRequest(BaseModel):
    transactions_jsonl: str
    world_snapshots_jsonl: str


class PrivacyReportResponse(BaseModel):
    clean: bool
    findings: list[dict]
    snapshots_scanned: int
    commit_values_checked: int


def _resolve_config(request: RunRequest) -> ScenarioConfig:
    try:
        if isinstance(request.scenario, str):
            config = load_scenario(request.scenario)
        else:
            config = ScenarioConfig.model_validate(request.scenario)
        return config.with_overrides(
            mechanism=request.mechanism,
            num_ticks=request.ticks,
            seed=request.seed,
            strategy=request.strategy,
            brain_endpoint=request.brain_endpoint,
        )
    except (ScenarioError, ValueError) as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


def create_app() -> FastAPI:
    app = FastAPI(title="blast-sim", version=__version__)

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.get("/presets", response_model=PresetListResponse)
    def presets() -> PresetListResponse:
        return PresetListResponse(
            presets=[
                PresetInfo(name=name, config=builder())
                for name, builder in PRESETS.items()
            ]
        )

    @app.post("/runs", response_model=RunResponse)
    def runs(request: RunRequest) -> RunResponse:
        config = _resolve_config(request)
        if request.seeds is not None:
            if request.seeds < 1:
                raise HTTPException(status_code=422, detail="seeds must be >= 1")
            batch: list[RunArtifacts] = run_batch(config, request.seeds)
            rows = [a.summary for a in batch]
            return RunResponse(
                summaries=rows,
                aggregate=aggregate_summaries(rows),
                summary_csv=summary_csv(rows),
            )
        artifacts = run(config)
        return RunResponse(summary=artifacts.summary, artifacts=artifacts.files())

    @app.post("/verify-privacy", response_model=PrivacyReportResponse)
    def verify(request: VerifyPrivacyRequest) -> PrivacyReportResponse:
        try:
            transactions = [
                json.loads(line)
                for line in request.transactions_jsonl.splitlines()
                if line
            ]
            snapshots = [
                json.loads(line)
                for line in request.world_snapshots_jsonl.splitlines()
                if line
            ]
        except json.JSONDecodeError as exc:
            raise HTTPException(status_code=422, detail=f"bad JSONL: {exc}") from exc
        report = verify_privacy(transactions, snapshots)
        return PrivacyReportResponse(**report)

    return app


app = create_app()
