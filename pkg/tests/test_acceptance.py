"""Acceptance suite: every criterion asserts its stated tolerance and
prints one pass/fail line (run with ``pytest -s`` to see them)."""

import math
import time

import numpy as np
import pytest

from meshpf.bounds import (
    chernoff_upper,
    exact_error,
    lower_bound,
    rate_function,
    theta_star,
)
from meshpf.model import INFINITE, Cell, Flow, Hop, Network, symbol_error
from meshpf.oracle import (
    GridSpec,
    fd_gradient_check,
    grid_search,
    monte_carlo_error,
    utility_slack,
)
from meshpf.scenario import single_cell
from meshpf.service import handlers
from meshpf.service.schemas import GeneratorSpec, SweepRequest
from meshpf.solver import (
    SolverConfig,
    classical_baseline,
    kkt_residuals,
    per_flow_solve,
    solve,
    solve_loss_free,
    utility,
)


def _report(number: int, name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"[criterion {number:02d}] {status}: {name}{suffix}", flush=True)
    assert ok, f"criterion {number} failed: {name}{suffix}"


def _fig1_network() -> Network:
    return single_cell(
        n_flows=3, deadline=1, other_deadline="inf", alpha=1e-2, w=10.0, period=1.0, m=1
    ).to_network()


def test_criterion_01_benchmark_reproduction():
    start = time.perf_counter()
    result = solve(_fig1_network())
    elapsed = time.perf_counter() - start
    airtimes = [f.airtime["c1"] for f in result.allocation.flows]
    rates = [f.coding.rate for f in result.allocation.flows]
    losses = [f.error_bound for f in result.allocation.flows]
    ok = (
        abs(airtimes[0] - 0.41) <= 0.02
        and abs(airtimes[1] - 0.295) <= 0.02
        and abs(airtimes[2] - 0.295) <= 0.02
        and abs(rates[0] - 0.62) <= 0.02
        and abs(rates[1] - 0.97) <= 0.02
        and abs(rates[2] - 0.97) <= 0.02
        and abs(losses[0] - 0.20) <= 0.03
        and losses[1] < 1e-3
        and losses[2] < 1e-3
        and elapsed < 1.0
    )
    _report(
        1,
        "single-cell benchmark allocation",
        ok,
        f"airtimes=({airtimes[0]:.3f},{airtimes[1]:.3f},{airtimes[2]:.3f}) "
        f"rates=({rates[0]:.3f},{rates[1]:.3f}) loss1={losses[0]:.3f} {elapsed:.2f}s",
    )


def test_criterion_02_optimum_beats_baseline():
    start = time.perf_counter()
    network = _fig1_network()
    gap = solve(network).allocation.utility - utility(network, classical_baseline(network))
    elapsed = time.perf_counter() - start
    ok = gap > 0 and elapsed < 1.0
    _report(2, "optimum vs equal-airtime baseline", ok, f"gap={gap:.3f} {elapsed:.2f}s")


def test_criterion_03_bound_sandwich():
    start = time.perf_counter()
    violations = 0
    points = 0
    for beta in (0.05, 0.1, 0.25):
        for total in range(1, 201):
            for info in range(1, total + 1):
                x = (1.0 - info / total) / 2.0
                if x <= beta:
                    continue
                points += 1
                exact = exact_error(1, total, info, beta)
                if not (
                    lower_bound(1, total, x, beta) <= exact <= chernoff_upper(1, total, x, beta)
                ):
                    violations += 1
    elapsed = time.perf_counter() - start
    ok = violations == 0 and elapsed < 10.0
    _report(3, "lower <= exact <= upper sandwich", ok,
            f"{points} points, {violations} violations, {elapsed:.1f}s")


def _random_network(rng: np.random.Generator) -> Network:
    n_cells = int(rng.integers(1, 5))
    n_flows = int(rng.integers(1, 7))
    cells = tuple(
        Cell(f"c{j}", float(rng.uniform(0.5, 2.0))) for j in range(n_cells)
    )
    flows = []
    for k in range(n_flows):
        length = int(rng.integers(1, n_cells + 1))
        chosen = rng.choice(n_cells, size=length, replace=False)
        alpha = float(rng.choice([0.0, 1e-4, 1e-2, 0.1, 0.25]))
        deadline = float(rng.choice([1.0, 2.0, 5.0, 10.0, INFINITE]))
        route = tuple(
            Hop(f"c{j}", alpha, float(rng.uniform(5.0, 50.0))) for j in chosen
        )
        flows.append(Flow(f"f{k}", route, deadline))
    return Network(cells=cells, flows=flows)


def test_criterion_04_kkt_and_duality_on_random_networks():
    start = time.perf_counter()
    rng = np.random.default_rng(20250811)
    worst_kkt = worst_cs = worst_gap = 0.0
    for _ in range(20):
        network = _random_network(rng)
        result = solve(network)
        for entry in result.allocation.flows:
            flow = network.flow(entry.flow_id)
            q = sum(result.prices.per_cell[h.cell] / h.phy_rate for h in flow.route)
            r1, r2 = kkt_residuals(
                entry.n, entry.coding.x, q, symbol_error(flow), flow.delay_deadline
            )
            worst_kkt = max(worst_kkt, abs(r1), abs(r2))
        worst_cs = max(
            worst_cs, max(abs(v) for v in result.complementary_slackness.values())
        )
        worst_gap = max(worst_gap, abs(result.duality_gap))
    elapsed = time.perf_counter() - start
    ok = worst_kkt < 1e-6 and worst_cs < 1e-6 and worst_gap < 1e-6 and elapsed < 30.0
    _report(4, "KKT residuals, complementary slackness, duality gap", ok,
            f"kkt={worst_kkt:.1e} cs={worst_cs:.1e} gap={worst_gap:.1e} {elapsed:.1f}s")


def _grid_instances():
    fig1 = _fig1_network()
    single_lossy = single_cell(n_flows=1, deadline=1, alpha=0.05).to_network()
    single_clean = single_cell(n_flows=1, deadline="inf", alpha=0.0).to_network()
    two_rates = Network(
        cells=(Cell("c1", 1.0),),
        flows=(
            Flow("f1", (Hop("c1", 0.01, 10.0),), 1.0),
            Flow("f2", (Hop("c1", 0.01, 20.0),), INFINITE),
        ),
    )
    two_cells = Network(
        cells=(Cell("c1", 1.0), Cell("c2", 1.0)),
        flows=(
            Flow("relay", (Hop("c1", 0.01, 10.0), Hop("c2", 0.01, 10.0)), INFINITE),
            Flow("local", (Hop("c1", 0.05, 10.0),), 1.0),
        ),
    )
    yield "benchmark+tie", fig1, GridSpec(n_points=200, x_points=200, tie_groups=(("f2", "f3"),))
    yield "single-lossy", single_lossy, GridSpec(n_points=240, x_points=240)
    yield "single-clean", single_clean, GridSpec(n_points=240)
    yield "two-rates", two_rates, GridSpec(n_points=200, x_points=200)
    yield "two-cells", two_cells, GridSpec(n_points=200, x_points=200)


def test_criterion_05_grid_search_oracle_equivalence():
    start = time.perf_counter()
    ok = True
    details = []
    for name, network, spec in _grid_instances():
        grid = grid_search(network, spec)
        solved = solve(network)
        slack = utility_slack(network, grid)
        if grid.utility > solved.allocation.utility + slack:
            ok = False
            details.append(f"{name}: grid beats solver beyond slack")
        for entry in solved.allocation.flows:
            gn, gx = grid.point[entry.flow_id]
            dn, dx = grid.increments[entry.flow_id]
            if abs(gn - entry.n) > dn + 1e-12 or abs(gx - entry.coding.x) > dx + 1e-12:
                ok = False
                details.append(
                    f"{name}/{entry.flow_id}: argmax off by "
                    f"(dn={abs(gn - entry.n):.2e}/{dn:.2e}, dx={abs(gx - entry.coding.x):.2e}/{dx:.2e})"
                )
    elapsed = time.perf_counter() - start
    ok = ok and elapsed < 60.0
    _report(5, "grid-search oracle equivalence on 5 instances", ok,
            "; ".join(details) if details else f"{elapsed:.1f}s")


def test_criterion_06_special_case_limits():
    q, beta = 0.3, 1e-2
    cfg = SolverConfig()
    x_gaps, n_gaps = [], []
    for deadline in (10.0, 1e2, 1e3, 1e4):
        n, x = per_flow_solve(q, beta, deadline, cfg)
        x_gaps.append(x - beta)
        n_gaps.append(abs(n - 1.0 / q) * q)
    monotone = all(b < a for a, b in zip(x_gaps, x_gaps[1:])) and all(
        b < a for a, b in zip(n_gaps, n_gaps[1:])
    )
    n_inf, x_inf = per_flow_solve(q, beta, INFINITE, cfg)
    at_eps = x_inf == beta + cfg.epsilon_di * (0.5 - beta) and n_inf == 1.0 / q

    def _three_flow(alpha: float) -> Network:
        rates = (10.0, 20.0, 10.0)
        deadlines = (1e5, INFINITE, INFINITE)
        return Network(
            cells=(Cell("c1", 1.0),),
            flows=tuple(
                Flow(f"f{i}", (Hop("c1", alpha, w),), d)
                for i, (w, d) in enumerate(zip(rates, deadlines), start=1)
            ),
        )

    lossy = solve(_three_flow(1e-12)).allocation
    clean = solve_loss_free(_three_flow(0.0)).allocation
    airtime_gap = max(
        abs(a.airtime["c1"] - b.airtime["c1"]) for a, b in zip(lossy.flows, clean.flows)
    )
    ok = monotone and at_eps and airtime_gap < 1e-4
    _report(6, "delay-insensitive and loss-free limits", ok,
            f"x_gap(1e4)={x_gaps[-1]:.1e} n_gap(1e4)={n_gaps[-1]:.1e} "
            f"airtime_gap={airtime_gap:.1e}")


def test_criterion_07_unequal_airtimes():
    network = Network(
        cells=(Cell("c1", 1.0),),
        flows=(
            Flow("good", (Hop("c1", 1e-4, 10.0),), 1.0),
            Flow("bad", (Hop("c1", 1e-1, 10.0),), 1.0),
        ),
    )
    allocation = solve(network).allocation
    good = allocation.flow("good").airtime["c1"]
    bad = allocation.flow("bad").airtime["c1"]
    ok = abs(bad - good) > 0.01 and bad > good
    _report(7, "channels with more loss get more airtime", ok,
            f"airtimes good={good:.3f} bad={bad:.3f}")


def test_criterion_08_figure_shape_properties():
    # one delay-sensitive flow keeps a margin over N delay-insensitive peers
    sweep = handlers.run_sweep(
        SweepRequest(
            generator=GeneratorSpec(
                id="single-cell", options={"deadline": 1, "other_deadline": "inf"}
            ),
            param="n_flows",
            values=[n + 1 for n in range(1, 11)],
        )
    )
    protected = True
    for row in sweep.rows:
        flows = {f.id: f.airtime_total_fraction for f in row.flows}
        sensitive = flows.pop("f1")
        protected = protected and row.converged and all(sensitive > v for v in flows.values())

    # multi-hop flows with equal deadlines receive more total airtime
    sweep = handlers.run_sweep(
        SweepRequest(
            generator=GeneratorSpec(
                id="parking-lot",
                options={"multi_deadline": 1, "single_deadline": 1, "alpha": 1e-2},
            ),
            param="cells",
            values=list(range(2, 9)),
        )
    )
    ratios = []
    for row in sweep.rows:
        flows = {f.id: f.airtime_total_fraction for f in row.flows}
        ratios.append(flows["f1"] / flows["f2"])
    multihop_ok = all(r > 1.0 for r in ratios) and all(row.converged for row in sweep.rows)

    # varying one single-hop flow's PHY rate leaves the other packet sizes
    # alone; this is a long-block property (the loss-term weight scales as
    # 1/sqrt(w)), so the scenario uses a realistic Msym/s-scale PHY rate
    base_w = 2e6
    values = [base_w * r for r in (0.5, 0.8, 1.0, 1.2, 1.5, 2.0, 2.5, 3.0, 4.0)]
    sweep = handlers.run_sweep(
        SweepRequest(
            generator=GeneratorSpec(
                id="parking-lot",
                options={
                    "cells": 3,
                    "multi_deadline": 1,
                    "single_deadline": 1,
                    "w": base_w,
                    "flow_alphas": [0.25, 1e-4, 0.25, 1e-4],
                },
            ),
            param="flows.f3.route.c2.w",
            values=values,
        )
    )
    series = {fid: [] for fid in ("f1", "f2", "f3", "f4")}
    for row in sweep.rows:
        for flow in row.flows:
            series[flow.id].append(flow.n)

    def rel_var(xs):
        return (max(xs) - min(xs)) / (sum(xs) / len(xs))

    constant_ok = all(rel_var(series[f]) < 1e-3 for f in ("f1", "f2", "f4"))
    slope, intercept = np.polyfit(values, series["f3"], 1)
    fitted = np.polyval([slope, intercept], values)
    residual = np.sum((np.array(series["f3"]) - fitted) ** 2)
    total = np.sum((np.array(series["f3"]) - np.mean(series["f3"])) ** 2)
    r_squared = 1.0 - residual / total
    linear_ok = r_squared > 0.9999

    ok = protected and multihop_ok and constant_ok and linear_ok
    _report(8, "figure-shape properties", ok,
            f"margin={protected} ratios>1={multihop_ok} "
            f"const={constant_ok} R2={r_squared:.6f}")


def test_criterion_09_gradient_and_concavity_certificates():
    rng = np.random.default_rng(61)
    worst = 0.0
    for _ in range(100):
        beta = float(rng.uniform(5e-3, 0.3))
        deadline = float(rng.integers(1, 20))
        network = Network(
            cells=(Cell("c1", 1.0),),
            flows=(Flow("f1", (Hop("c1", beta, 10.0),), deadline),),
        )
        x = float(rng.uniform(beta + 0.02, 0.45))
        n_tilde = math.log(float(rng.uniform(0.5, 20.0)))
        I_tilde = math.log(rate_function(x, beta))
        worst = max(worst, fd_gradient_check([n_tilde], [I_tilde], network, step=1e-6))
    gradient_ok = worst < 1e-4

    convexity_violations = 0
    for beta in (1e-4, 1e-2, 0.1, 0.25):
        # the grid starts 1e-6 above beta: the certificate value there
        # (~(x-beta)^2/(2 beta)) still dominates floating cancellation
        for x in np.linspace(beta + 1e-6, 0.5 - 1e-9, 10**4):
            x = float(x)
            g = x * (1.0 - x) * theta_star(x, beta) ** 2 - rate_function(x, beta)
            if not g > 0.0:
                convexity_violations += 1
    curvature_violations = 0
    for deadline in (1, 2, 10, 1000):
        for y in np.linspace(1e-6, 100.0, 5000):
            value = deadline * y - (-math.expm1(-deadline * y)) * math.exp(-deadline * y)
            if not value > 0.0:
                curvature_violations += 1
    ok = gradient_ok and convexity_violations == 0 and curvature_violations == 0
    _report(9, "analytic gradients and concavity certificates", ok,
            f"fd_dev={worst:.1e} cert_violations="
            f"{convexity_violations}+{curvature_violations}")


def test_criterion_10_monte_carlo_calibration():
    start = time.perf_counter()
    exact = exact_error(1, 40, 20, 0.1)
    hits = 0
    for seed in range(100):
        report = monte_carlo_error(1, 40, 20, 0.1, trials=20000, seed=seed)
        hits += report.contains(exact)
    replay_a = monte_carlo_error(1, 40, 20, 0.1, trials=20000, seed=123)
    replay_b = monte_carlo_error(1, 40, 20, 0.1, trials=20000, seed=123)
    elapsed = time.perf_counter() - start
    ok = hits >= 95 and replay_a == replay_b and elapsed < 20.0
    _report(10, "Monte Carlo calibration and determinism", ok,
            f"hits={hits}/100 exact={exact:.2e} {elapsed:.1f}s")
