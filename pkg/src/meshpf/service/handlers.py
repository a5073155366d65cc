"""Service operations behind the HTTP endpoints.

Each handler maps one request model to one response model and contains
all orchestration; the FastAPI app and the CLI are both thin callers.
"""

from __future__ import annotations

import inspect
import math

from ..bounds import BlockSpec, chernoff_upper, exact_error, lower_bound
from ..model import Network, symbol_error, validate
from ..oracle import monte_carlo_error
from ..scenario import GENERATORS, Scenario, ScenarioError, apply_param
from ..solver import (
    Allocation,
    InvalidNetworkError,
    NonConvergenceError,
    SolveResult,
    classical_baseline,
    solve,
    utility,
)
from .schemas import (
    CellResult,
    CompareRequest,
    CompareResponse,
    FlowResult,
    RoundedFlow,
    RoundedReport,
    SolveRequest,
    SolveResponse,
    SweepFlow,
    SweepRequest,
    SweepResponse,
    SweepRow,
    VerifyFlowReport,
    VerifyRequest,
    VerifyResponse,
)


def resolve_scenario(request) -> Scenario:
    """A request carries either an inline scenario or a generator spec."""
    if (request.scenario is None) == (request.generator is None):
        raise ScenarioError("provide exactly one of 'scenario' and 'generator'")
    if request.scenario is not None:
        return request.scenario
    generator = GENERATORS.get(request.generator.id)
    if generator is None:
        raise ScenarioError(f"unknown generator {request.generator.id!r}")
    try:
        return generator(**request.generator.options)
    except TypeError as exc:
        raise ScenarioError(f"bad generator options: {exc}") from exc


def _network(scenario: Scenario) -> Network:
    network = scenario.to_network()
    violations = validate(network)
    if violations:
        raise InvalidNetworkError(violations)
    return network


def _flow_results(network: Network, allocation: Allocation) -> list[FlowResult]:
    periods = {cell.id: cell.schedule_period for cell in network.cells}
    results = []
    for entry in allocation.flows:
        fractions = {c: t / periods[c] for c, t in entry.airtime.items()}
        results.append(
            FlowResult(
                id=entry.flow_id,
                n=entry.n,
                rate=entry.coding.rate,
                x=entry.coding.x,
                error_bound=entry.error_bound,
                throughput=entry.throughput,
                airtime_seconds=dict(entry.airtime),
                airtime_fraction=fractions,
                airtime_total_fraction=sum(fractions.values()),
            )
        )
    return results


def _rounded_report(network: Network, result: SolveResult) -> RoundedReport:
    sizes = {e.flow_id: math.floor(e.n) for e in result.allocation.flows}
    if any(n < 1 for n in sizes.values()):
        return RoundedReport(
            flows=[RoundedFlow(id=f, n=n) for f, n in sizes.items()],
            feasible=False,
        )
    feasible = True
    for cell in network.cells:
        load = sum(
            sizes[flow.id] / hop.phy_rate
            for flow in network.flows
            for hop in flow.route
            if hop.cell == cell.id
        )
        if load > cell.schedule_period:
            feasible = False
    flows = []
    total = 0.0
    for entry in result.allocation.flows:
        n = sizes[entry.flow_id]
        coding = entry.coding
        if coding.exponent == math.inf or math.isinf(
            network.flow(entry.flow_id).delay_deadline
        ):
            error = 0.0
        else:
            flow = network.flow(entry.flow_id)
            error = chernoff_upper(flow.delay_deadline, n, coding.x, symbol_error(flow))
        total += math.log(n) + math.log1p(-2.0 * coding.x) + math.log1p(-error)
        flows.append(RoundedFlow(id=entry.flow_id, n=n, error_bound=error))
    return RoundedReport(flows=flows, feasible=feasible, utility=total)


def _solve_response(network: Network, result: SolveResult, round_sizes: bool) -> SolveResponse:
    airtime_per_cell: dict[str, float] = {cell.id: 0.0 for cell in network.cells}
    for entry in result.allocation.flows:
        for cell_id, seconds in entry.airtime.items():
            airtime_per_cell[cell_id] += seconds / network.cell(cell_id).schedule_period
    cells = [
        CellResult(
            id=cell.id,
            price=result.prices.per_cell[cell.id],
            load=cell.schedule_period - result.slacks[cell.id],
            slack=result.slacks[cell.id],
            airtime_fraction_total=airtime_per_cell[cell.id],
        )
        for cell in network.cells
    ]
    return SolveResponse(
        converged=result.converged,
        iterations=result.trace.iterations,
        utility=result.allocation.utility,
        duality_gap=result.duality_gap,
        flows=_flow_results(network, result.allocation),
        cells=cells,
        complementary_slackness=dict(result.complementary_slackness),
        warnings=list(result.warnings),
        rounded=_rounded_report(network, result) if round_sizes else None,
    )


def run_solve(request: SolveRequest) -> SolveResponse:
    scenario = resolve_scenario(request)
    network = _network(scenario)
    result = solve(network, request.options.to_config())
    return _solve_response(network, result, request.round_sizes)


def _sweep_scenarios(request: SweepRequest):
    """Yield (value, scenario) pairs for each sweep point."""
    if request.generator is not None:
        generator = GENERATORS.get(request.generator.id)
        if generator is None:
            raise ScenarioError(f"unknown generator {request.generator.id!r}")
        if request.param in inspect.signature(generator).parameters:
            for value in request.values:
                options = dict(request.generator.options)
                options[request.param] = value
                try:
                    yield value, generator(**options)
                except TypeError as exc:
                    raise ScenarioError(f"bad generator options: {exc}") from exc
            return
        base = resolve_scenario(request)
        for value in request.values:
            yield value, apply_param(base, request.param, value)
        return
    base = resolve_scenario(request)
    for value in request.values:
        yield value, apply_param(base, request.param, value)


def run_sweep(request: SweepRequest) -> SweepResponse:
    if not request.values:
        raise ScenarioError("sweep needs a nonempty value list")
    config = request.options.to_config()
    rows = []
    for value, scenario in _sweep_scenarios(request):
        network = _network(scenario)
        periods = {cell.id: cell.schedule_period for cell in network.cells}
        try:
            result = solve(network, config)
            allocation, converged = result.allocation, True
        except NonConvergenceError as exc:
            allocation = exc.best.allocation if exc.best is not None else None
            converged = False
        flows = []
        if allocation is not None:
            for entry in allocation.flows:
                flows.append(
                    SweepFlow(
                        id=entry.flow_id,
                        n=entry.n,
                        rate=entry.coding.rate,
                        error_bound=entry.error_bound,
                        airtime_total_fraction=sum(
                            t / periods[c] for c, t in entry.airtime.items()
                        ),
                    )
                )
        rows.append(
            SweepRow(
                value=value,
                converged=converged,
                utility=None if allocation is None else allocation.utility,
                flows=flows,
            )
        )
    return SweepResponse(param=request.param, rows=rows)


def run_verify(request: VerifyRequest) -> VerifyResponse:
    scenario = resolve_scenario(request)
    network = _network(scenario)
    result = solve(network, request.options.to_config())
    reports = []
    all_ok = True
    for index, entry in enumerate(result.allocation.flows):
        flow = network.flow(entry.flow_id)
        beta = symbol_error(flow)
        deadline = flow.delay_deadline
        if beta <= 0.0 or math.isinf(deadline):
            # loss-free or unbounded blocks: all three quantities vanish;
            # with a finite deadline the rate-1 block can still be simulated
            mc = None
            if not math.isinf(deadline):
                block = max(1, round(deadline * entry.n))
                mc = monte_carlo_error(
                    1, block, block, beta, max(request.trials, 10**4), request.seed + index
                )
            reports.append(
                VerifyFlowReport(
                    id=entry.flow_id,
                    x=entry.coding.x,
                    lower=0.0,
                    exact=0.0,
                    upper=0.0,
                    sandwich_ok=True,
                    mc_estimate=None if mc is None else mc.estimate,
                    mc_ci_low=None if mc is None else mc.ci_low,
                    mc_ci_high=None if mc is None else mc.ci_high,
                    mc_within_ci=None if mc is None else mc.contains(0.0),
                )
            )
            continue
        block = max(1, round(deadline * entry.n))
        info = min(block, max(1, round(deadline * entry.info_symbols)))
        spec = BlockSpec(deadline=1, packet_symbols=float(block), info_symbols=float(info))
        x_rounded = (1.0 - info / block) / 2.0
        lower = lower_bound(spec.deadline, spec.packet_symbols, x_rounded, beta)
        upper = chernoff_upper(spec.deadline, spec.packet_symbols, x_rounded, beta)
        exact = exact_error(spec.deadline, block, info, beta)
        ok = lower <= exact <= upper
        all_ok = all_ok and ok
        mc = monte_carlo_error(
            1, block, info, beta, max(request.trials, 10**4), request.seed + index
        )
        reports.append(
            VerifyFlowReport(
                id=entry.flow_id,
                block_symbols=block,
                info_symbols=info,
                x=x_rounded,
                lower=lower,
                exact=exact,
                upper=upper,
                sandwich_ok=ok,
                mc_estimate=mc.estimate,
                mc_ci_low=mc.ci_low,
                mc_ci_high=mc.ci_high,
                mc_within_ci=mc.contains(exact),
            )
        )
    return VerifyResponse(
        flows=reports, all_sandwich_ok=all_ok, trials=request.trials, seed=request.seed
    )


def run_compare(request: CompareRequest) -> CompareResponse:
    scenario = resolve_scenario(request)
    network = _network(scenario)
    config = request.options.to_config()
    optimal = solve(network, config)
    baseline = classical_baseline(network, config)
    u_base = utility(network, baseline)
    return CompareResponse(
        utility_optimal=optimal.allocation.utility,
        utility_baseline=u_base,
        gap=optimal.allocation.utility - u_base,
    )
