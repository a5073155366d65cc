"""Request and response models of the allocation service."""

from __future__ import annotations

from typing import Any, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict

from ..scenario import Scenario
from ..solver import SolverConfig


class SolverOptions(BaseModel):
    """Solver knobs exposed on the wire; ``tol`` tightens both the price
    stationarity test and (x10) the slack tolerance."""

    model_config = ConfigDict(extra="forbid")

    gamma: Optional[float] = None
    max_iterations: int = 60000
    tol: Optional[float] = None
    step_schedule: Literal["constant", "sqrt"] = "constant"

    def to_config(self) -> SolverConfig:
        kwargs: dict[str, Any] = {
            "max_iterations": self.max_iterations,
            "step_schedule": self.step_schedule,
        }
        if self.gamma is not None:
            kwargs["step_size"] = self.gamma
        if self.tol is not None:
            kwargs["tol_price"] = self.tol
            kwargs["tol_slack"] = 10.0 * self.tol
        return SolverConfig(**kwargs)


class GeneratorSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: Literal["single-cell", "parking-lot"]
    options: dict[str, Any] = {}


class SolveRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scenario: Optional[Scenario] = None
    generator: Optional[GeneratorSpec] = None
    options: SolverOptions = SolverOptions()
    round_sizes: bool = False


class FlowResult(BaseModel):
    id: str
    n: float
    rate: float
    x: float
    error_bound: float
    throughput: float
    airtime_seconds: dict[str, float]
    airtime_fraction: dict[str, float]
    airtime_total_fraction: float


class CellResult(BaseModel):
    id: str
    price: float
    load: float
    slack: float
    airtime_fraction_total: float


class RoundedFlow(BaseModel):
    id: str
    n: int
    error_bound: Optional[float] = None


class RoundedReport(BaseModel):
    """Floor-rounded integer packet sizes, re-evaluated; not optimal."""

    flows: list[RoundedFlow]
    feasible: bool
    utility: Optional[float] = None


class SolveResponse(BaseModel):
    converged: bool
    iterations: int
    utility: float
    duality_gap: float
    flows: list[FlowResult]
    cells: list[CellResult]
    complementary_slackness: dict[str, float]
    warnings: list[str] = []
    rounded: Optional[RoundedReport] = None


class SweepRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scenario: Optional[Scenario] = None
    generator: Optional[GeneratorSpec] = None
    param: str
    values: list[Union[int, float, str]]
    options: SolverOptions = SolverOptions()


class SweepFlow(BaseModel):
    id: str
    n: float
    rate: float
    error_bound: float
    airtime_total_fraction: float


class SweepRow(BaseModel):
    value: Union[int, float, str]
    converged: bool
    utility: Optional[float] = None
    flows: list[SweepFlow] = []


class SweepResponse(BaseModel):
    param: str
    rows: list[SweepRow]


class VerifyRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scenario: Optional[Scenario] = None
    generator: Optional[GeneratorSpec] = None
    trials: int = 100000
    seed: int = 0
    options: SolverOptions = SolverOptions()


class VerifyFlowReport(BaseModel):
    id: str
    block_symbols: Optional[int] = None
    info_symbols: Optional[int] = None
    x: float
    lower: float
    exact: float
    upper: float
    sandwich_ok: bool
    mc_estimate: Optional[float] = None
    mc_ci_low: Optional[float] = None
    mc_ci_high: Optional[float] = None
    mc_within_ci: Optional[bool] = None


class VerifyResponse(BaseModel):
    flows: list[VerifyFlowReport]
    all_sandwich_ok: bool
    trials: int
    seed: int


class CompareRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scenario: Optional[Scenario] = None
    generator: Optional[GeneratorSpec] = None
    options: SolverOptions = SolverOptions()


class CompareResponse(BaseModel):
    utility_optimal: float
    utility_baseline: float
    gap: float
