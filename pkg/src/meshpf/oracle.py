"""Independent verification tools.

Everything here cross-checks the solver and the bound formulas by a
different route: exhaustive grid search of the primal objective on small
instances, Monte Carlo simulation of the symbol-error channel against the
exact binomial tail, central-difference gradient checks, and the
exponential-size odd-parity enumeration behind the closed-form end-to-end
crossover.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import binom

from .bounds import DomainError, phi, rate_function, theta_star
from .model import Network, symbol_error
from .solver import SolverConfig, utility_logspace_gradient

__all__ = [
    "GridSpec",
    "GridResult",
    "GridSizeError",
    "McReport",
    "grid_search",
    "utility_slack",
    "monte_carlo_error",
    "fd_gradient_check",
    "parity_enumeration_crossover",
]

MAX_EVALUATIONS = 10**8


class GridSizeError(ValueError):
    """Grid would exceed the evaluation budget or the instance guards."""


@dataclass(frozen=True)
class GridSpec:
    """Grid resolution per flow dimension.

    ``tie_groups`` lists groups of interchangeable flows (same route,
    channel and deadline) that share one (n, x) grid point, which keeps
    symmetric instances inside the evaluation budget.  With
    ``use_exact_error`` the objective uses the exact binomial tail on
    integer-rounded blocks instead of the optimisation's error bound.
    """

    n_points: int = 200
    x_points: int = 200
    tie_groups: tuple[tuple[str, ...], ...] = ()
    use_exact_error: bool = False

    def __post_init__(self) -> None:
        if self.n_points < 2 or self.x_points < 2:
            raise GridSizeError("need at least 2 grid points per dimension")


@dataclass(frozen=True)
class GridResult:
    point: Mapping[str, tuple[float, float]]  # flow id -> (n, x)
    utility: float
    increments: Mapping[str, tuple[float, float]]  # flow id -> (dn, dx)
    evaluations: int


@dataclass(frozen=True)
class _Group:
    flow_ids: tuple[str, ...]
    beta: float
    deadline: float
    route: tuple[tuple[str, float], ...]
    epsilon_di: float


def _build_groups(network: Network, grid: GridSpec, config: SolverConfig) -> list[_Group]:
    grouped: dict[str, int] = {}
    groups: list[list[str]] = []
    for tie in grid.tie_groups:
        groups.append(list(tie))
        for fid in tie:
            if fid in grouped:
                raise GridSizeError(f"flow {fid!r} appears in two tie groups")
            grouped[fid] = len(groups) - 1
    for flow in network.flows:
        if flow.id not in grouped:
            groups.append([flow.id])

    out = []
    for ids in groups:
        flows = [network.flow(fid) for fid in ids]
        keys = {
            (
                symbol_error(f),
                f.delay_deadline,
                tuple((h.cell, h.phy_rate) for h in f.route),
            )
            for f in flows
        }
        if len(keys) != 1:
            raise GridSizeError(f"tie group {tuple(ids)} mixes non-identical flows")
        beta, deadline, route = next(iter(keys))
        out.append(
            _Group(
                flow_ids=tuple(ids),
                beta=beta,
                deadline=deadline,
                route=route,
                epsilon_di=config.epsilon_di * (0.5 - beta),
            )
        )
    return out


def grid_search(
    network: Network, grid: GridSpec, config: SolverConfig | None = None
) -> GridResult:
    """Exhaustive search of the primal objective over an (n, x) lattice.

    Schedulability is enforced exactly (infeasible lattice points are
    discarded); loss-free and delay-insensitive flows have their coding
    point pinned at its known optimum so only genuinely free dimensions
    are gridded.  Refuses instances with more than 3 flows, 2 cells or
    10^8 lattice points.
    """
    config = config or SolverConfig()
    if len(network.flows) > 3:
        raise GridSizeError("grid search is limited to 3 flows")
    if len(network.cells) > 2:
        raise GridSizeError("grid search is limited to 2 cells")
    groups = _build_groups(network, grid, config)
    periods = {cell.id: cell.schedule_period for cell in network.cells}

    axes: list[np.ndarray] = []
    for group in groups:
        cap = min(w * periods[c] for c, w in group.route)
        n_axis = np.linspace(cap / grid.n_points, cap, grid.n_points)
        if group.beta <= 0.0:
            x_axis = np.array([0.0])
        elif math.isinf(group.deadline):
            x_axis = np.array([group.beta + group.epsilon_di])
        else:
            x_axis = np.linspace(
                group.beta + config.x_domain_margin,
                0.5 - config.x_domain_margin,
                grid.x_points,
            )
        axes.extend([n_axis, x_axis])

    evaluations = math.prod(len(a) for a in axes)
    if evaluations > MAX_EVALUATIONS:
        raise GridSizeError(f"grid has {evaluations} points (budget {MAX_EVALUATIONS})")

    ndim = len(axes)
    shaped = [
        a.reshape([-1 if i == j else 1 for j in range(ndim)]) for i, a in enumerate(axes)
    ]

    total = np.zeros([1] * ndim)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for g, group in enumerate(groups):
            n = shaped[2 * g]
            x = shaped[2 * g + 1]
            count = len(group.flow_ids)
            term = np.log(n)
            if group.beta > 0.0:
                term = term + np.log1p(-2.0 * x)
                if not math.isinf(group.deadline):
                    if grid.use_exact_error:
                        block = np.rint(group.deadline * n)
                        info = np.rint(group.deadline * n * (1.0 - 2.0 * x))
                        err = binom.sf(
                            np.floor((block - info) / 2.0), block, group.beta
                        )
                        term = term + np.log1p(-np.minimum(err, 1.0 - 1e-300))
                    else:
                        exponent = x * np.log(x / group.beta) + (1.0 - x) * np.log(
                            (1.0 - x) / (1.0 - group.beta)
                        )
                        y = group.deadline * n * exponent
                        term = term + np.log(-np.expm1(-y))
            total = total + count * term

        feasible = np.ones([1] * ndim, dtype=bool)
        for cell_id, period in periods.items():
            load = np.zeros([1] * ndim)
            present = False
            for g, group in enumerate(groups):
                for c, w in group.route:
                    if c == cell_id:
                        load = load + len(group.flow_ids) * shaped[2 * g] / w
                        present = True
            if present:
                feasible = feasible & (load <= period * (1.0 + 1e-12))

        total = np.where(feasible, total, -np.inf)

    flat_best = int(np.argmax(total))
    best_utility = float(total.reshape(-1)[flat_best])
    if not math.isfinite(best_utility):
        raise GridSizeError("no feasible lattice point")
    index = np.unravel_index(flat_best, total.shape)

    point: dict[str, tuple[float, float]] = {}
    increments: dict[str, tuple[float, float]] = {}
    for g, group in enumerate(groups):
        n_axis, x_axis = axes[2 * g], axes[2 * g + 1]
        n_val = float(n_axis[index[2 * g]]) if len(n_axis) > 1 else float(n_axis[0])
        x_val = float(x_axis[index[2 * g + 1]]) if len(x_axis) > 1 else float(x_axis[0])
        dn = float(n_axis[1] - n_axis[0]) if len(n_axis) > 1 else 0.0
        dx = float(x_axis[1] - x_axis[0]) if len(x_axis) > 1 else 0.0
        for fid in group.flow_ids:
            point[fid] = (n_val, x_val)
            increments[fid] = (dn, dx)
    return GridResult(
        point=point, utility=best_utility, increments=increments, evaluations=evaluations
    )


def utility_slack(network: Network, result: GridResult) -> float:
    """First-order utility slack of a grid optimum: the analytic gradient
    at the lattice argmax times one grid increment per dimension."""
    slack = 0.0
    for flow in network.flows:
        n, x = result.point[flow.id]
        dn, dx = result.increments[flow.id]
        beta = symbol_error(flow)
        deadline = flow.delay_deadline
        if beta <= 0.0 or math.isinf(deadline):
            du_dn = 1.0 / n
            du_dx = 0.0
        else:
            exponent = rate_function(x, beta)
            phi_y = phi(deadline * n * exponent)
            du_dn = (1.0 + phi_y) / n
            du_dx = -2.0 / (1.0 - 2.0 * x) + phi_y * theta_star(x, beta) / exponent
        slack += abs(du_dn) * dn + abs(du_dx) * dx
    return slack


@dataclass(frozen=True)
class McReport:
    """Outcome of a seeded Monte Carlo estimate with its 99% confidence
    interval (normal approximation plus a 1/(2*trials) continuity guard)."""

    trials: int
    failures: int
    estimate: float
    ci_low: float
    ci_high: float
    seed: int
    generator: str = "PCG64"

    def contains(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high


_Z99 = 2.5758293035489004  # two-sided 99% normal quantile


def _require_int(value: float, what: str) -> int:
    rounded = round(value)
    if abs(value - rounded) > 1e-9 or rounded < 1:
        raise DomainError(f"{what}={value!r} must be a positive integer")
    return int(rounded)


def monte_carlo_error(
    deadline: int, n: int, k: int, beta: float, trials: int, seed: int
) -> McReport:
    """Estimate the decoding-failure probability by simulating the iid
    symbol-error channel: ``deadline*n`` Bernoulli(beta) draws per trial,
    failure iff the error count exceeds ``(deadline*n - deadline*k)/2``.
    Deterministic for a fixed seed."""
    total = _require_int(deadline * n, "deadline*n")
    info = _require_int(deadline * k, "deadline*k")
    if info > total:
        raise DomainError(f"k={k!r} must not exceed n={n!r}")
    if not 0.0 <= beta < 1.0:
        raise DomainError(f"beta={beta!r} must lie in [0, 1)")
    if trials < 10**4:
        raise DomainError(f"trials={trials!r} must be at least 10^4")
    threshold = (total - info) / 2.0
    rng = np.random.default_rng(seed)
    failures = 0
    remaining = trials
    chunk = max(1, (1 << 22) // total)
    while remaining > 0:
        batch = min(chunk, remaining)
        errors = (rng.random((batch, total)) < beta).sum(axis=1)
        failures += int((errors > threshold).sum())
        remaining -= batch
    estimate = failures / trials
    half = _Z99 * math.sqrt(estimate * (1.0 - estimate) / trials) + 0.5 / trials
    return McReport(
        trials=trials,
        failures=failures,
        estimate=estimate,
        ci_low=max(0.0, estimate - half),
        ci_high=min(1.0, estimate + half),
        seed=seed,
    )


def fd_gradient_check(
    n_tildes: Sequence[float],
    I_tildes: Sequence[float],
    network: Network,
    step: float = 1e-6,
) -> float:
    """Worst relative deviation between the analytic log-space partials
    and central finite differences at one interior point."""
    if not 1e-8 <= step <= 1e-4:
        raise DomainError(f"step={step!r} must lie in [1e-8, 1e-4]")
    _, grad_n, grad_I = utility_logspace_gradient(n_tildes, I_tildes, network)

    def value(nt: Sequence[float], it: Sequence[float]) -> float:
        return utility_logspace_gradient(nt, it, network)[0]

    worst = 0.0
    n_tildes = list(n_tildes)
    I_tildes = list(I_tildes)
    for i in range(len(network.flows)):
        for coord, analytic in (("n", grad_n[i]), ("I", grad_I[i])):
            plus = list(n_tildes), list(I_tildes)
            minus = list(n_tildes), list(I_tildes)
            target = 0 if coord == "n" else 1
            plus[target][i] += step
            minus[target][i] -= step
            fd = (value(*plus) - value(*minus)) / (2.0 * step)
            worst = max(worst, abs(analytic - fd) / max(1.0, abs(analytic)))
    return worst


def parity_enumeration_crossover(hop_alphas: Sequence[float]) -> float:
    """Literal odd-parity sum over all flip patterns; the exponential-size
    counterpart of the closed-form end-to-end crossover.  Limited to 20
    hops."""
    alphas = list(hop_alphas)
    if len(alphas) > 20:
        raise ValueError("parity enumeration is limited to 20 hops")
    total = 0.0
    for mask in range(1 << len(alphas)):
        if bin(mask).count("1") % 2 == 1:
            probability = 1.0
            for i, alpha in enumerate(alphas):
                probability *= alpha if (mask >> i) & 1 else 1.0 - alpha
            total += probability
    return total
