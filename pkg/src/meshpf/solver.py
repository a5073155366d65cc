"""Proportional-fair joint allocation of packet sizes and coding rates.

The objective is the sum over flows of ``ln(n*(1-2x)*(1-e))`` where ``n``
is the packet size, ``x = (1-rate)/2`` the redundancy parameter and
``e = exp(-D*n*I(x||beta))`` the decoding-error bound, subject to the
per-cell schedulability constraints ``sum_f n_f/w_fc <= T_c``.  In
log-transformed coordinates the problem is convex; each cell carries a
dual price and a projected subgradient descent on the prices drives the
per-flow stationarity solves to the global optimum.

Per-flow stationarity at aggregate route cost ``q = sum_c p_c/w_fc``:

    1 + phi(D*n*I(x)) = q*n                      (packet size)
    phi(D*n*I(x))     = 2*I(x)/((1-2x)*theta(x)) (coding rate)

which couple through ``n(x) = (1 + rhs(x))/q`` and leave a single
sign-changing residual in ``x`` that is solved by bracketed root finding.
Delay-insensitive flows (infinite deadline) collapse to ``x = beta + eps``
and ``n = 1/q``; loss-free flows (beta = 0) to ``x = 0`` and ``n = 1/q``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from scipy.optimize import brentq

from .bounds import (
    CodingPoint,
    DomainError,
    phi,
    rate_function,
    theta_star,
)
from .model import (
    InvalidNetworkError,
    Network,
    symbol_error,
    validate,
)

__all__ = [
    "SolverConfig",
    "Prices",
    "FlowAllocation",
    "Allocation",
    "TracePoint",
    "SolverTrace",
    "SolveResult",
    "PerFlowSolveError",
    "NonConvergenceError",
    "InfeasibleError",
    "utility",
    "utility_logspace_gradient",
    "inverse_I",
    "kkt_residuals",
    "per_flow_solve",
    "subgradient_step",
    "solve",
    "dual_value",
    "solve_delay_insensitive",
    "solve_loss_free",
    "classical_baseline",
    "default_step_size",
]


class PerFlowSolveError(RuntimeError):
    """The per-flow stationarity residual has no admissible root."""


class InfeasibleError(RuntimeError):
    """A cell cannot accommodate any positive airtime allocation."""


class NonConvergenceError(RuntimeError):
    """Price iteration exhausted its budget; carries diagnostics."""

    def __init__(self, message: str, trace: "SolverTrace", best: "SolveResult | None"):
        super().__init__(message)
        self.trace = trace
        self.best = best


@dataclass(frozen=True)
class SolverConfig:
    """Tuning knobs of the dual descent.

    ``step_size=None`` derives a step from the network scale.  The
    delay-insensitive coding point is ``beta + epsilon_di*(0.5 - beta)``
    and coding rates are confined to ``[beta + x_domain_margin,
    0.5 - x_domain_margin]``.
    """

    step_size: float | None = None
    max_iterations: int = 60000
    tol_price: float = 1e-10
    tol_slack: float = 1e-9
    tol_kkt: float = 1e-7
    epsilon_di: float = 1e-6
    x_domain_margin: float = 1e-9
    step_schedule: str = "constant"

    def __post_init__(self) -> None:
        positive = {
            "max_iterations": self.max_iterations,
            "tol_price": self.tol_price,
            "tol_slack": self.tol_slack,
            "tol_kkt": self.tol_kkt,
            "epsilon_di": self.epsilon_di,
            "x_domain_margin": self.x_domain_margin,
        }
        if self.step_size is not None:
            positive["step_size"] = self.step_size
        for name, value in positive.items():
            if not value > 0:
                raise ValueError(f"{name} must be strictly positive, got {value!r}")
        if self.step_schedule not in ("constant", "sqrt"):
            raise ValueError(f"unknown step_schedule {self.step_schedule!r}")


@dataclass(frozen=True)
class Prices:
    """Per-cell dual prices (1/second), the cost of transmitting through
    a cell.  The coding-rate box multipliers are never active and stay 0.
    """

    per_cell: Mapping[str, float]

    NU_LOWER = 0.0
    NU_UPPER = 0.0

    def __post_init__(self) -> None:
        for cell_id, price in self.per_cell.items():
            if price < 0:
                raise ValueError(f"price for cell {cell_id!r} is negative")


@dataclass(frozen=True)
class FlowAllocation:
    flow_id: str
    n: float
    n_tilde: float
    coding: CodingPoint
    info_symbols: float
    error_bound: float
    throughput: float
    airtime: Mapping[str, float]

    @property
    def utility(self) -> float:
        return math.log(self.n * self.coding.rate) + math.log1p(-self.error_bound)


@dataclass(frozen=True)
class Allocation:
    """A primal solution: one entry per flow plus the network utility."""

    flows: tuple[FlowAllocation, ...]
    utility: float

    def flow(self, flow_id: str) -> FlowAllocation:
        for entry in self.flows:
            if entry.flow_id == flow_id:
                return entry
        raise KeyError(flow_id)

    def packet_sizes(self) -> dict[str, float]:
        return {entry.flow_id: entry.n for entry in self.flows}


@dataclass(frozen=True)
class TracePoint:
    prices: Mapping[str, float]
    slack: Mapping[str, float]
    utility: float
    dual: float
    gap: float


@dataclass
class SolverTrace:
    points: list[TracePoint] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0


@dataclass(frozen=True)
class SolveResult:
    allocation: Allocation
    prices: Prices
    trace: SolverTrace
    slacks: Mapping[str, float]
    complementary_slackness: Mapping[str, float]
    duality_gap: float
    step_size: float
    warnings: tuple[str, ...] = ()

    @property
    def converged(self) -> bool:
        return self.trace.converged


# --------------------------------------------------------------------------
# per-flow machinery


def _phi_safe(y: float) -> float:
    # x pinned at the clamp can underflow the exponent to ~0; the limit is 1
    return 1.0 if y < 1e-300 else phi(y)


def _log1mexp(y: float) -> float:
    """ln(1 - exp(-y)) for y > 0."""
    return math.log(-math.expm1(-y))


def _coupling_rhs(x: float, beta: float) -> float:
    """The coding-rate stationarity target ``2*I/((1-2x)*theta)``."""
    return 2.0 * rate_function(x, beta) / ((1.0 - 2.0 * x) * theta_star(x, beta))


def per_flow_solve(
    q: float,
    beta: float,
    deadline: float,
    config: SolverConfig | None = None,
) -> tuple[float, float]:
    """Optimal ``(n, x)`` of one flow at aggregate route cost ``q``.

    Dispatches the loss-free (``beta = 0``) and delay-insensitive
    (infinite deadline) closed forms; otherwise finds the unique root of
    the stationarity residual by bracketed bisection-style search over
    ``x in (beta + margin, 0.5 - margin)``.
    """
    config = config or SolverConfig()
    if not q > 0:
        raise DomainError(f"q={q!r} must be positive")
    if beta < 0 or beta >= 0.5:
        raise DomainError(f"beta={beta!r} must lie in [0, 0.5)")
    if beta == 0.0:
        return 1.0 / q, 0.0
    if math.isinf(deadline):
        return 1.0 / q, beta + config.epsilon_di * (0.5 - beta)

    lo = beta + config.x_domain_margin
    hi = 0.5 - config.x_domain_margin
    if not lo < hi:
        raise PerFlowSolveError(
            f"empty coding-rate domain for beta={beta!r} with margin "
            f"{config.x_domain_margin!r}"
        )

    def residual(x: float) -> float:
        rhs = _coupling_rhs(x, beta)
        n = (1.0 + rhs) / q
        return _phi_safe(deadline * n * rate_function(x, beta)) - rhs

    res_lo = residual(lo)
    res_hi = residual(hi)
    if not (res_lo > 0.0 and res_hi < 0.0):
        raise PerFlowSolveError(
            f"stationarity residual has no sign change on [{lo!r}, {hi!r}]: "
            f"endpoints ({res_lo!r}, {res_hi!r})"
        )
    x_opt = brentq(residual, lo, hi, xtol=1e-15, rtol=8.9e-16, maxiter=200)
    n_opt = (1.0 + _coupling_rhs(x_opt, beta)) / q
    return n_opt, x_opt


def inverse_I(I_tilde: float, beta: float, margin: float = 1e-9) -> float:
    """The unique ``x in (beta, 0.5)`` with ``ln I(x||beta) = I_tilde``.

    The exponent is strictly increasing in ``x``, so the inverse is found
    by bracketed search to ``|dx| < 1e-14``; targets below the clamp floor
    return the lower edge (``x -> beta``).
    """
    if beta <= 0 or beta >= 0.5:
        raise DomainError(f"beta={beta!r} must lie in (0, 0.5)")
    target = math.exp(I_tilde)
    lo = beta + 1e-12
    hi = 0.5 - margin
    if target >= rate_function(hi, beta):
        raise DomainError(f"I_tilde={I_tilde!r} above the admissible range")
    if target <= rate_function(lo, beta):
        return lo
    return brentq(
        lambda x: rate_function(x, beta) - target, lo, hi, xtol=1e-15, rtol=8.9e-16
    )


def kkt_residuals(
    n: float, x: float, q: float, beta: float, deadline: float
) -> tuple[float, float]:
    """Stationarity residuals of one flow; both vanish at its optimum.

    ``R1 = 1 + phi(D*n*I) - q*n`` and
    ``R2 = phi(D*n*I) - 2*I/((1-2x)*theta)``.
    """
    if not q > 0:
        raise DomainError(f"q={q!r} must be positive")
    if not n > 0:
        raise DomainError(f"n={n!r} must be positive")
    if beta <= 0.0:
        return 1.0 - q * n, 0.0
    if math.isinf(deadline):
        phi_term = 0.0
    else:
        phi_term = _phi_safe(deadline * n * rate_function(x, beta))
    return 1.0 + phi_term - q * n, phi_term - _coupling_rhs(x, beta)


def utility(network: Network, allocation: Allocation) -> float:
    """Network utility ``sum_f ln n + ln(1-2x) + ln(1-e)`` of an allocation."""
    total = 0.0
    for entry in allocation.flows:
        if entry.error_bound >= 1.0:
            raise DomainError(f"flow {entry.flow_id!r}: error bound >= 1")
        if entry.coding.x >= 0.5:
            raise DomainError(f"flow {entry.flow_id!r}: x >= 0.5")
        total += (
            math.log(entry.n)
            + math.log1p(-2.0 * entry.coding.x)
            + math.log1p(-entry.error_bound)
        )
    return total


def utility_logspace_gradient(
    n_tildes: Sequence[float],
    I_tildes: Sequence[float],
    network: Network,
    margin: float = 1e-9,
) -> tuple[float, list[float], list[float]]:
    """Objective and analytic partials in the log coordinates
    ``(ln n, ln I)``, one pair per network flow (finite deadlines and
    lossy channels only).

    Per flow: ``dU/dln_n = 1 + phi(D*e^(ln_n + ln_I))`` and
    ``dU/dln_I = phi(...) - 2*I/((1-2x)*theta)`` at ``x(ln_I)``.
    """
    if len(n_tildes) != len(network.flows) or len(I_tildes) != len(network.flows):
        raise ValueError("need one (ln n, ln I) pair per network flow")
    total = 0.0
    grad_n: list[float] = []
    grad_I: list[float] = []
    for flow, n_tilde, I_tilde in zip(network.flows, n_tildes, I_tildes):
        beta = symbol_error(flow)
        if beta <= 0.0 or math.isinf(flow.delay_deadline):
            raise DomainError(
                f"flow {flow.id!r}: log-space gradient needs beta > 0 and a finite deadline"
            )
        x = inverse_I(I_tilde, beta, margin)
        y = flow.delay_deadline * math.exp(n_tilde + I_tilde)
        phi_y = _phi_safe(y)
        total += n_tilde + math.log1p(-2.0 * x) + _log1mexp(y)
        grad_n.append(1.0 + phi_y)
        grad_I.append(
            phi_y - 2.0 * math.exp(I_tilde) / ((1.0 - 2.0 * x) * theta_star(x, beta))
        )
    return total, grad_n, grad_I


# --------------------------------------------------------------------------
# dual descent


@dataclass(frozen=True)
class _FlowContext:
    flow_id: str
    beta: float
    deadline: float
    route: tuple[tuple[str, float], ...]  # (cell id, phy rate)
    dest_period: float
    capacity: float  # min_c w_fc * T_c, the largest packet any cell admits


def _contexts(network: Network) -> list[_FlowContext]:
    periods = {cell.id: cell.schedule_period for cell in network.cells}
    contexts = []
    for flow in network.flows:
        route = tuple((hop.cell, hop.phy_rate) for hop in flow.route)
        contexts.append(
            _FlowContext(
                flow_id=flow.id,
                beta=symbol_error(flow),
                deadline=flow.delay_deadline,
                route=route,
                dest_period=periods[flow.route[-1].cell],
                capacity=min(w * periods[c] for c, w in route),
            )
        )
    return contexts


def default_step_sizes(network: Network) -> dict[str, float]:
    """Per-cell step sizes scaled to the local dual curvature.

    Near the optimum the dual Hessian diagonal is roughly
    ``sum_f airtime_f^2 ~ T_c^2 / |F_c|`` per cell, so each cell takes a
    fraction of ``|F_c| / T_c^2``, damped by the longest route length
    (cross-cell coupling).  Since the price update runs per cell anyway,
    a local constant needs no global coordination.
    """
    if not any(network.flows_through(cell.id) for cell in network.cells):
        raise InvalidNetworkError(["no cell carries any flow"])
    longest = max(len(flow.route) for flow in network.flows)
    steps = {}
    for cell in network.cells:
        count = len(network.flows_through(cell.id))
        steps[cell.id] = (
            0.4 * count / cell.schedule_period**2 / longest if count else 0.0
        )
    return steps


def default_step_size(network: Network) -> float:
    """Smallest per-cell default step; the scale a uniform step must match."""
    return min(v for v in default_step_sizes(network).values() if v > 0)


def _initial_prices(network: Network) -> dict[str, float]:
    # |F_c| / T_c makes the closed-form packet sizes n = 1/q exactly fill
    # a symmetric cell, so symmetric instances converge in one step.
    prices = {}
    for cell in network.cells:
        count = len(network.flows_through(cell.id))
        prices[cell.id] = count / cell.schedule_period if count else 0.0
    return prices


def _utility_terms(ctx: _FlowContext, n: float, x: float) -> tuple[float, float]:
    """(utility contribution, error bound) of one flow at (n, x)."""
    if ctx.beta <= 0.0:
        return math.log(n), 0.0
    if math.isinf(ctx.deadline):
        return math.log(n) + math.log1p(-2.0 * x), 0.0
    y = ctx.deadline * n * rate_function(x, ctx.beta)
    return math.log(n) + math.log1p(-2.0 * x) + _log1mexp(y), math.exp(-y)


def _route_cost(ctx: _FlowContext, prices: Mapping[str, float]) -> float:
    q = sum(prices[c] / w for c, w in ctx.route)
    # Keep the inner solve bounded when every price on the route has been
    # projected to zero; overload then pushes the prices back up.
    return max(q, 0.25 / ctx.capacity)


def _solve_all(
    contexts: Sequence[_FlowContext],
    prices: Mapping[str, float],
    config: SolverConfig,
) -> dict[str, tuple[float, float]]:
    return {
        ctx.flow_id: per_flow_solve(_route_cost(ctx, prices), ctx.beta, ctx.deadline, config)
        for ctx in contexts
    }


def _slacks(
    network: Network,
    contexts: Sequence[_FlowContext],
    sols: Mapping[str, tuple[float, float]],
) -> dict[str, float]:
    loads = {cell.id: 0.0 for cell in network.cells}
    for ctx in contexts:
        n = sols[ctx.flow_id][0]
        for cell_id, w in ctx.route:
            loads[cell_id] += n / w
    return {
        cell.id: cell.schedule_period - loads[cell.id] for cell in network.cells
    }


def _step_map(network: Network, config: SolverConfig) -> dict[str, float]:
    if config.step_size is not None:
        return {cell.id: config.step_size for cell in network.cells}
    return default_step_sizes(network)


def subgradient_step(
    prices: Prices,
    network: Network,
    config: SolverConfig,
    packet_sizes: Mapping[str, float],
) -> Prices:
    """One projected subgradient update
    ``p_c <- max(0, p_c - gamma_c*(T_c - load_c))`` on every cell.

    ``gamma_c`` is the configured step size, or the cell-local default.
    """
    steps = _step_map(network, config)
    loads = {cell.id: 0.0 for cell in network.cells}
    for flow in network.flows:
        for hop in flow.route:
            loads[hop.cell] += packet_sizes[flow.id] / hop.phy_rate
    updated = {
        cell.id: max(
            0.0,
            prices.per_cell.get(cell.id, 0.0)
            - steps[cell.id] * (cell.schedule_period - loads[cell.id]),
        )
        for cell in network.cells
    }
    return Prices(per_cell=updated)


def _build_allocation(
    network: Network,
    contexts: Sequence[_FlowContext],
    sols: Mapping[str, tuple[float, float]],
) -> Allocation:
    entries = []
    total = 0.0
    for ctx in contexts:
        n, x = sols[ctx.flow_id]
        if ctx.beta <= 0.0:
            coding = CodingPoint.loss_free()
        else:
            coding = CodingPoint.from_x(x, ctx.beta)
        term, error = _utility_terms(ctx, n, x)
        total += term
        info = n * coding.rate
        entries.append(
            FlowAllocation(
                flow_id=ctx.flow_id,
                n=n,
                n_tilde=math.log(n),
                coding=coding,
                info_symbols=info,
                error_bound=error,
                throughput=info * (1.0 - error) / ctx.dest_period,
                airtime={c: n / w for c, w in ctx.route},
            )
        )
    return Allocation(flows=tuple(entries), utility=total)


def solve(network: Network, config: SolverConfig | None = None) -> SolveResult:
    """Run the synchronous dual loop to the proportional-fair optimum.

    Alternates exact per-flow stationarity solves with a projected
    subgradient price update until the prices are stationary and every
    cell's slack is nonnegative (within tolerances).  Raises
    :class:`NonConvergenceError` with the trace and the best feasible
    iterate when the iteration budget runs out.
    """
    config = config or SolverConfig()
    violations = validate(network)
    if violations:
        raise InvalidNetworkError(violations)
    for cell in network.cells:
        if network.flows_through(cell.id) and not cell.schedule_period > 0:
            raise InfeasibleError(f"cell {cell.id!r} has no schedule time to share")

    contexts = _contexts(network)
    steps = _step_map(network, config)
    prices = _initial_prices(network)
    trace = SolverTrace()
    best: tuple[float, dict[str, float]] | None = None  # (utility, prices)
    converged = False

    for iteration in range(1, config.max_iterations + 1):
        damping = 1.0 if config.step_schedule == "constant" else 1.0 / math.sqrt(iteration)
        sols = _solve_all(contexts, prices, config)
        slacks = _slacks(network, contexts, sols)
        primal = sum(_utility_terms(ctx, *sols[ctx.flow_id])[0] for ctx in contexts)
        gap = sum(prices[c] * slacks[c] for c in prices)
        trace.points.append(
            TracePoint(
                prices=dict(prices),
                slack=dict(slacks),
                utility=primal,
                dual=primal + gap,
                gap=gap,
            )
        )
        feasible = all(s >= -config.tol_slack for s in slacks.values())
        if feasible and (best is None or primal > best[0]):
            best = (primal, dict(prices))
        next_prices = {
            c: max(0.0, prices[c] - damping * steps[c] * slacks[c]) for c in prices
        }
        delta = max(abs(next_prices[c] - prices[c]) for c in prices)
        prices = next_prices
        if delta < config.tol_price and feasible:
            converged = True
            break

    trace.iterations = len(trace.points)
    trace.converged = converged

    def _finalize(price_map: dict[str, float], warn_extra: tuple[str, ...] = ()) -> SolveResult:
        sols = _solve_all(contexts, price_map, config)
        slacks = _slacks(network, contexts, sols)
        allocation = _build_allocation(network, contexts, sols)
        warnings = list(warn_extra)
        for ctx in contexts:
            if ctx.beta <= 0.0:
                continue  # full-rate closed form, nothing to diagnose
            n, x = sols[ctx.flow_id]
            margin = config.x_domain_margin
            if x - ctx.beta < 10 * margin or (0.5 - x) < 10 * margin:
                warnings.append(
                    f"flow {ctx.flow_id!r}: coding point {x!r} touches the domain margin"
                )
            if math.isinf(ctx.deadline):
                continue  # epsilon-form residuals are pinned by construction
            r1, r2 = kkt_residuals(n, x, _route_cost(ctx, price_map), ctx.beta, ctx.deadline)
            if max(abs(r1), abs(r2)) > config.tol_kkt:
                warnings.append(
                    f"flow {ctx.flow_id!r}: stationarity residual "
                    f"{max(abs(r1), abs(r2)):.2e} exceeds tol_kkt"
                )
        return SolveResult(
            allocation=allocation,
            prices=Prices(per_cell=price_map),
            trace=trace,
            slacks=slacks,
            complementary_slackness={c: price_map[c] * slacks[c] for c in price_map},
            duality_gap=sum(price_map[c] * slacks[c] for c in price_map),
            step_size=min(v for v in steps.values() if v > 0),
            warnings=tuple(warnings),
        )

    if not converged:
        best_result = None
        if best is not None:
            best_result = _finalize(best[1], ("best feasible iterate, not converged",))
        raise NonConvergenceError(
            f"no convergence within {config.max_iterations} iterations "
            f"(last price change {delta!r})",
            trace,
            best_result,
        )
    return _finalize(prices)


def dual_value(
    prices: Prices, network: Network, config: SolverConfig | None = None
) -> float:
    """Dual function ``D(p) = sum_f U_f(n*(p), x*(p)) + sum_c p_c*slack_c``.

    Upper-bounds the primal utility of every feasible allocation; a zero
    price on some flow's whole route makes the inner supremum unbounded
    and the value is ``inf``.
    """
    config = config or SolverConfig()
    contexts = _contexts(network)
    total = 0.0
    sols: dict[str, tuple[float, float]] = {}
    for ctx in contexts:
        q = sum(prices.per_cell.get(c, 0.0) / w for c, w in ctx.route)
        if q <= 0.0:
            return math.inf
        sols[ctx.flow_id] = per_flow_solve(q, ctx.beta, ctx.deadline, config)
        total += _utility_terms(ctx, *sols[ctx.flow_id])[0]
    slacks = _slacks(network, contexts, sols)
    return total + sum(prices.per_cell.get(c, 0.0) * slacks[c] for c in slacks)


def solve_delay_insensitive(
    network: Network, config: SolverConfig | None = None
) -> SolveResult:
    """Dual loop specialised to all-infinite deadlines: coding points sit
    at ``beta + eps`` independent of topology and packet sizes equal the
    reciprocal route cost independent of the error rates."""
    if any(not math.isinf(flow.delay_deadline) for flow in network.flows):
        raise ValueError("solve_delay_insensitive requires every deadline infinite")
    return solve(network, config)


def solve_loss_free(network: Network, config: SolverConfig | None = None) -> SolveResult:
    """Dual loop specialised to error-free channels: full-rate codes and
    the classical proportional-fair airtime allocation."""
    if any(symbol_error(flow) != 0.0 for flow in network.flows):
        raise ValueError("solve_loss_free requires every channel loss-free")
    return solve(network, config)


def classical_baseline(
    network: Network, config: SolverConfig | None = None
) -> Allocation:
    """Equal-airtime reference allocation.

    Every cell splits its period evenly among its flows (a multi-hop flow
    takes the smallest share along its route) and every flow codes for the
    channel alone, at the delay-insensitive point ``x = beta + eps``; the
    utility is then evaluated with the true deadlines.
    """
    config = config or SolverConfig()
    violations = validate(network)
    if violations:
        raise InvalidNetworkError(violations)
    shares = {
        cell.id: cell.schedule_period / len(network.flows_through(cell.id))
        for cell in network.cells
        if network.flows_through(cell.id)
    }
    contexts = _contexts(network)
    sols = {}
    for ctx in contexts:
        n = min(w * shares[c] for c, w in ctx.route)
        if ctx.beta <= 0.0:
            x = 0.0
        else:
            x = ctx.beta + config.epsilon_di * (0.5 - ctx.beta)
        sols[ctx.flow_id] = (n, x)
    return _build_allocation(network, contexts, sols)
