"""FastAPI application exposing the harness operations.

Errors surface as HTTP 4xx with a payload carrying the CLI exit code, so a
thin client can exit exactly as an in-process run would.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import HarnessError
from . import handlers
from . import schemas as S


def create_app() -> FastAPI:
    app = FastAPI(title="avbench", version=__version__)

    @app.exception_handler(HarnessError)
    async def harness_error(_request: Request, exc: HarnessError):
        return JSONResponse(
            status_code=422,
            content=S.ErrorPayload(
                error=type(exc).__name__, exit_code=exc.exit_code, message=str(exc)
            ).model_dump(),
        )

    @app.exception_handler(OSError)
    async def os_error(_request: Request, exc: OSError):
        return JSONResponse(
            status_code=422,
            content=S.ErrorPayload(error="IOError", exit_code=2, message=str(exc)).model_dump(),
        )

    @app.get("/health", response_model=S.VersionResponse)
    def health():
        return S.VersionResponse(version=__version__)

    @app.post("/audit", response_model=S.AuditResponse)
    def audit(req: S.AuditRequest):
        return handlers.audit(req)

    @app.post("/trim", response_model=S.TrimResponse)
    def trim(req: S.TrimRequest):
        return handlers.trim(req)

    @app.post("/splits/make", response_model=S.SplitsMakeResponse)
    def splits_make(req: S.SplitsMakeRequest):
        return handlers.splits_make(req)

    @app.post("/splits/check", response_model=S.SplitsCheckResponse)
    def splits_check(req: S.SplitsCheckRequest):
        return handlers.splits_check(req)

    @app.post("/eval", response_model=S.EvalResponse)
    def evaluate(req: S.EvalRequest):
        return handlers.evaluate(req)

    @app.post("/eval/compare", response_model=S.EvalCompareResponse)
    def eval_compare(req: S.EvalCompareRequest):
        return handlers.eval_compare(req)

    @app.post("/sample/plan", response_model=S.SamplePlanResponse)
    def sample_plan(req: S.SamplePlanRequest):
        return handlers.sample_plan(req)

    @app.post("/cross", response_model=S.CrossResponse)
    def cross(req: S.CrossRequest):
        return handlers.cross(req)

    @app.post("/ingest", response_model=S.IngestResponse)
    def ingest(req: S.IngestRequest):
        return handlers.ingest(req)

    @app.post("/manifest/validate", response_model=S.ValidateResponse)
    def validate(req: S.ValidateRequest):
        return handlers.validate(req)

    @app.post("/metrics/auc", response_model=S.MetricResponse)
    def metric_auc(req: S.AucRequest):
        return handlers.metric_auc(req)

    @app.post("/metrics/average-precision", response_model=S.MetricResponse)
    def metric_ap(req: S.AucRequest):
        return handlers.metric_ap(req)

    @app.post("/metrics/fake-score", response_model=S.FakeScoreResponse)
    def metric_fake_score(req: S.FakeScoreRequest):
        return handlers.metric_fake_score(req)

    return app


app = create_app()
