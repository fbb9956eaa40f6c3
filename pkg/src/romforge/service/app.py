"""FastAPI wrapper around the pipeline."""

from __future__ import annotations

import csv
import math

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import RomError
from ..pipeline import Bundle, config_from_text, offline_run, online_run, plan_from_text, report_timings, validate
from ..rom_fe import NewtonSettings
from .schemas import (
    ErrorBody,
    InfoResponse,
    OfflineRequest,
    OfflineResponse,
    OnlineRequest,
    OnlineResponse,
    ValidateRequest,
    ValidateResponse,
)

# HTTP status per exit code
STATUS = {2: 422, 3: 409, 4: 409, 5: 404}


def _clean(obj):
    """JSON has no NaN; failed rows carry null instead."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def energy_table(bundle: Bundle) -> list[dict]:
    path = bundle.root / "energy.csv"
    if not path.is_file():
        return []
    with open(path) as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def create_app() -> FastAPI:
    app = FastAPI(title="romforge", version=__version__)

    @app.exception_handler(RomError)
    async def _rom_error(_: Request, exc: RomError):
        body = ErrorBody(kind=exc.kind, exit_code=exc.exit_code, message=str(exc), context=_clean(exc.context))
        return JSONResponse(status_code=STATUS.get(exc.exit_code, 500), content=body.model_dump())

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.get("/info", response_model=InfoResponse)
    def info(bundle: str):
        b = Bundle(bundle)
        return InfoResponse(manifest=b.manifest, energy=energy_table(b), timings=report_timings(b))

    @app.post("/online", response_model=OnlineResponse)
    def online(req: OnlineRequest):
        b = Bundle(req.bundle)
        newton = None
        if req.newton_max is not None:
            newton = NewtonSettings(b.config.newton.tol, req.newton_max)
        res = online_run(b, tuple(req.mu), req.variant, truth=req.truth, n_use=req.n, newton=newton)
        return OnlineResponse(row=_clean(res.row))

    @app.post("/validate", response_model=ValidateResponse)
    def run_validate(req: ValidateRequest):
        report = validate(Bundle(req.bundle), plan_from_text(req.plan))
        return ValidateResponse(rows=_clean(report.rows), summary=_clean(report.summary), files=report.files)

    @app.post("/offline", response_model=OfflineResponse)
    def offline(req: OfflineRequest):
        out = offline_run(config_from_text(req.config), req.output)
        return OfflineResponse(bundle=str(out), files=sorted(Bundle(out).manifest["files"]))

    return app
