"""FastAPI application wrapping the allocation solver."""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from ..bounds import DomainError
from ..model import InvalidNetworkError
from ..scenario import ScenarioError
from ..solver import NonConvergenceError, PerFlowSolveError
from . import handlers
from .schemas import (
    CompareRequest,
    CompareResponse,
    SolveRequest,
    SolveResponse,
    SweepRequest,
    SweepResponse,
    VerifyRequest,
    VerifyResponse,
)

app = FastAPI(
    title="meshpf",
    description=(
        "Proportional-fair joint airtime and coding-rate allocation for "
        "TDMA wireless mesh networks with lossy links and delay deadlines."
    ),
)


@app.exception_handler(ScenarioError)
@app.exception_handler(InvalidNetworkError)
@app.exception_handler(DomainError)
@app.exception_handler(PerFlowSolveError)
async def _input_error(request: Request, exc: Exception) -> JSONResponse:
    return JSONResponse(status_code=400, content={"detail": str(exc)})


@app.exception_handler(NonConvergenceError)
async def _non_convergence(request: Request, exc: NonConvergenceError) -> JSONResponse:
    return JSONResponse(
        status_code=409,
        content={"detail": str(exc), "error": "non_convergence"},
    )


@app.get("/healthz")
def healthz() -> dict:
    return {"status": "ok"}


@app.post("/solve", response_model=SolveResponse)
def solve_endpoint(request: SolveRequest) -> SolveResponse:
    return handlers.run_solve(request)


@app.post("/sweep", response_model=SweepResponse)
def sweep_endpoint(request: SweepRequest) -> SweepResponse:
    return handlers.run_sweep(request)


@app.post("/verify", response_model=VerifyResponse)
def verify_endpoint(request: VerifyRequest) -> VerifyResponse:
    return handlers.run_verify(request)


@app.post("/compare-baseline", response_model=CompareResponse)
def compare_endpoint(request: CompareRequest) -> CompareResponse:
    return handlers.run_compare(request)
