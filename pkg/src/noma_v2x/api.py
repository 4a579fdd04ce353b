"""HTTP service around the harness.

Run it with ``uvicorn noma_v2x.api:app``. The CLI can talk to it through
``--url``; without that flag the CLI calls the same functions in-process.
"""
from __future__ import annotations

from typing import Any, Literal, Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__, harness
from .config import PRESETS, ConfigError, ExperimentConfig, from_dict, override, preset
from .scenario import ScenarioError
from .schedule import ScheduleFormatError
from .scheduler import MCD, SCHEMES
from .verification import FAST, verify as run_verify

app = FastAPI(title="noma-v2x", version=__version__)


class ConfigSource(BaseModel):
    """Either an inline config mapping or a preset name; inline wins."""

    config: Optional[dict[str, Any]] = None
    preset: Optional[str] = None

    def resolve(self) -> ExperimentConfig:
        if self.config is not None:
            return from_dict(self.config)
        return preset(self.preset or "standard")


class RunRequest(ConfigSource):
    seed: Optional[int] = None
    seeds_per_point: Optional[int] = Field(default=None, ge=1)
    schemes: Optional[list[str]] = None
    sweep: Optional[str] = Field(default=None, description="var=a,b,c")
    jobs: int = Field(default=1, ge=1)


class RunResponse(BaseModel):
    rows: int
    failed: int
    csv: str
    summary: dict[str, Any]


class VerifyRequest(BaseModel):
    level: Literal["fast", "full"] = FAST
    seed: int = 0
    planted_bug: bool = False


class CheckModel(BaseModel):
    name: str
    passed: bool
    detail: str


class VerifyResponse(BaseModel):
    level: str
    passed: bool
    failed: list[str]
    checks: list[CheckModel]


class CheckScheduleRequest(ConfigSource):
    schedule_csv: str
    scenario_csv: str
    scheme: str = MCD


class ConstraintModel(BaseModel):
    satisfied: bool
    witnesses: list[str]


class CheckScheduleResponse(BaseModel):
    ok: bool
    constraints: dict[str, ConstraintModel]


class PresetModel(BaseModel):
    name: str
    description: str
    config: dict[str, Any]


def _config_error(exc: Exception) -> HTTPException:
    return HTTPException(status_code=422, detail={"kind": "config", "message": str(exc)})


@app.get("/health")
def health() -> dict[str, str]:
    return {"status": "ok", "version": __version__}


@app.get("/presets", response_model=list[PresetModel])
def presets() -> list[PresetModel]:
    return [PresetModel(name=name, description=doc, config=cfg.to_dict()) for name, (doc, cfg) in PRESETS.items()]


@app.post("/run", response_model=RunResponse)
def run(req: RunRequest) -> RunResponse:
    try:
        cfg = override(req.resolve(), req.seed, req.seeds_per_point, req.schemes, req.sweep)
    except ConfigError as exc:
        raise _config_error(exc)
    rows = harness.run(cfg, jobs=req.jobs)
    return RunResponse(
        rows=len(rows),
        failed=sum(r["status"] != "ok" for r in rows),
        csv=harness.rows_to_csv(rows),
        summary=harness.summarize(cfg, rows),
    )


@app.post("/verify", response_model=VerifyResponse)
def verify(req: VerifyRequest) -> VerifyResponse:
    report = run_verify(req.level, req.seed, req.planted_bug)
    return VerifyResponse(
        level=report.level,
        passed=report.passed,
        failed=report.failed,
        checks=[CheckModel(name=c.name, passed=c.passed, detail=c.detail) for c in report.checks],
    )


@app.post("/check-schedule", response_model=CheckScheduleResponse)
def check_schedule(req: CheckScheduleRequest) -> CheckScheduleResponse:
    if req.scheme not in SCHEMES:
        raise _config_error(ConfigError(f"unknown scheme {req.scheme!r}"))
    try:
        cfg = req.resolve()
        report = harness.check_schedule(req.schedule_csv, req.scenario_csv, cfg, req.scheme)
    except ConfigError as exc:
        raise _config_error(exc)
    except (ScheduleFormatError, ScenarioError) as exc:
        raise HTTPException(status_code=422, detail={"kind": "parse", "message": str(exc)})
    return CheckScheduleResponse(
        ok=report.ok,
        constraints={c: ConstraintModel(satisfied=not v, witnesses=[str(w) for w in v])
                     for c, v in report.violations.items()},
    )
