"""Command-line front end.

A thin client of the allocation service: it reads scenario files, builds
the request models, invokes the service handlers (in process by default,
over HTTP with ``--server``) and renders tables or CSV.  Exit codes:
0 success, 1 input or domain error, 2 non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import sys

from .bounds import DomainError
from .model import InvalidNetworkError
from .scenario import GENERATORS, ScenarioError, load_scenario
from .service import handlers
from .service.schemas import (
    CompareRequest,
    CompareResponse,
    GeneratorSpec,
    SolveRequest,
    SolveResponse,
    SolverOptions,
    SweepRequest,
    SweepResponse,
    VerifyRequest,
    VerifyResponse,
)
from .solver import NonConvergenceError, PerFlowSolveError

_INPUT_ERRORS = (ScenarioError, InvalidNetworkError, DomainError, PerFlowSolveError, ValueError)


class _RemoteNonConvergence(RuntimeError):
    pass


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def _coerce(text: str):
    if text == "inf":
        return "inf"
    if "," in text:
        return [float(part) for part in text.split(",") if part]
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _gen_options(pairs: list[str] | None) -> dict:
    options = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ScenarioError(f"--gen expects key=value, got {pair!r}")
        key, _, value = pair.partition("=")
        options[key] = _coerce(value)
    return options


def _scenario_fields(args):
    if args.scenario in GENERATORS:
        return None, GeneratorSpec(id=args.scenario, options=_gen_options(args.gen))
    if args.gen:
        raise ScenarioError("--gen is only valid with a generator scenario")
    return load_scenario(args.scenario), None


def _options(args) -> SolverOptions:
    return SolverOptions(
        gamma=args.gamma,
        max_iterations=args.max_iter,
        tol=args.tol,
        step_schedule=args.schedule,
    )


_ENDPOINTS = {
    "/solve": (handlers.run_solve, SolveResponse),
    "/sweep": (handlers.run_sweep, SweepResponse),
    "/verify": (handlers.run_verify, VerifyResponse),
    "/compare-baseline": (handlers.run_compare, CompareResponse),
}


def _call(args, path: str, request):
    handler, response_model = _ENDPOINTS[path]
    if not args.server:
        return handler(request)
    import httpx

    response = httpx.post(
        args.server.rstrip("/") + path,
        json=request.model_dump(mode="json"),
        timeout=600.0,
    )
    if response.status_code in (400, 422):
        raise ScenarioError(str(response.json().get("detail", response.text)))
    if response.status_code == 409:
        raise _RemoteNonConvergence(str(response.json().get("detail", response.text)))
    response.raise_for_status()
    return response_model.model_validate(response.json())


def _write_csv(path: str | None, header: list[str], rows: list[list]) -> None:
    def emit(stream):
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) if v is not None else "" for v in row])

    if path:
        with open(path, "w", newline="", encoding="utf-8") as stream:
            emit(stream)
    else:
        emit(sys.stdout)


def _print_table(header: list[str], rows: list[list]) -> None:
    formatted = [[_fmt(v) if v is not None else "-" for v in row] for row in rows]
    widths = [max(len(h), *(len(r[i]) for r in formatted)) if formatted else len(h)
              for i, h in enumerate(header)]
    print("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    for row in formatted:
        print("  ".join(v.ljust(w) for v, w in zip(row, widths)))


def _solve_rows(response: SolveResponse) -> tuple[list[str], list[list]]:
    cell_ids = [c.id for c in response.cells]
    header = ["flow", "n", "rate", "x", "error_bound", "throughput", "airtime_total"]
    header += [f"air_{c}" for c in cell_ids]
    rows = []
    for flow in response.flows:
        row = [
            flow.id, flow.n, flow.rate, flow.x, flow.error_bound,
            flow.throughput, flow.airtime_total_fraction,
        ]
        row += [flow.airtime_fraction.get(c) for c in cell_ids]
        rows.append(row)
    return header, rows


def cmd_solve(args) -> int:
    scenario, generator = _scenario_fields(args)
    request = SolveRequest(
        scenario=scenario, generator=generator, options=_options(args),
        round_sizes=args.round,
    )
    response = _call(args, "/solve", request)
    header, rows = _solve_rows(response)
    _print_table(header, rows)
    print()
    _print_table(
        ["cell", "price", "load", "slack", "airtime_sum"],
        [[c.id, c.price, c.load, c.slack, c.airtime_fraction_total] for c in response.cells],
    )
    print()
    print(f"utility      {_fmt(response.utility)}")
    print(f"duality_gap  {_fmt(response.duality_gap)}")
    print(f"iterations   {response.iterations}")
    print(f"converged    {response.converged}")
    for warning in response.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    if response.rounded is not None:
        print()
        print("rounded packet sizes (floor, re-evaluated, not optimal):")
        _print_table(
            ["flow", "n_int", "error_bound"],
            [[f.id, f.n, f.error_bound] for f in response.rounded.flows],
        )
        print(f"rounded feasible  {response.rounded.feasible}")
        if response.rounded.utility is not None:
            print(f"rounded utility   {_fmt(response.rounded.utility)}")
    if args.out:
        _write_csv(args.out, header, rows)
    return 0


def _natural_key(flow_id: str):
    digits = "".join(ch for ch in flow_id if ch.isdigit())
    return (len(flow_id), int(digits) if digits else 0, flow_id)


def cmd_sweep(args) -> int:
    scenario, generator = _scenario_fields(args)
    if not args.param or not args.values:
        raise ScenarioError("sweep requires --param and --values")
    request = SweepRequest(
        scenario=scenario, generator=generator, param=args.param,
        values=[_coerce(v) for v in args.values.split(",") if v],
        options=_options(args),
    )
    response = _call(args, "/sweep", request)
    flow_ids: list[str] = []
    for row in response.rows:
        for flow in row.flows:
            if flow.id not in flow_ids:
                flow_ids.append(flow.id)
    flow_ids.sort(key=_natural_key)
    header = ["value", "converged", "utility"]
    for fid in flow_ids:
        header += [f"n_{fid}", f"r_{fid}", f"e_{fid}", f"air_{fid}"]
    rows = []
    for row in response.rows:
        by_id = {flow.id: flow for flow in row.flows}
        out = [row.value, int(row.converged), row.utility]
        for fid in flow_ids:
            flow = by_id.get(fid)
            if flow is None:
                out += [None, None, None, None]
            else:
                out += [flow.n, flow.rate, flow.error_bound, flow.airtime_total_fraction]
        rows.append(out)
    _write_csv(args.out, header, rows)
    return 0


def cmd_verify(args) -> int:
    scenario, generator = _scenario_fields(args)
    request = VerifyRequest(
        scenario=scenario, generator=generator, trials=args.trials, seed=args.seed,
        options=_options(args),
    )
    response = _call(args, "/verify", request)
    header = [
        "flow", "block", "info", "x", "lower", "exact", "upper", "sandwich_ok",
        "mc_estimate", "mc_ci_low", "mc_ci_high", "mc_within_ci",
    ]
    rows = [
        [
            f.id, f.block_symbols, f.info_symbols, f.x, f.lower, f.exact, f.upper,
            f.sandwich_ok, f.mc_estimate, f.mc_ci_low, f.mc_ci_high, f.mc_within_ci,
        ]
        for f in response.flows
    ]
    _print_table(header, rows)
    print()
    print(f"all_sandwich_ok  {response.all_sandwich_ok}")
    if args.out:
        _write_csv(args.out, header, rows)
    return 0 if response.all_sandwich_ok else 1


def cmd_compare(args) -> int:
    scenario, generator = _scenario_fields(args)
    request = CompareRequest(scenario=scenario, generator=generator, options=_options(args))
    response = _call(args, "/compare-baseline", request)
    print(f"utility_optimal   {_fmt(response.utility_optimal)}")
    print(f"utility_baseline  {_fmt(response.utility_baseline)}")
    print(f"gap               {_fmt(response.gap)}")
    if args.out:
        _write_csv(
            args.out,
            ["utility_optimal", "utility_baseline", "gap"],
            [[response.utility_optimal, response.utility_baseline, response.gap]],
        )
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def _add_common(parser: argparse.ArgumentParser, scenario: bool = True) -> None:
    if scenario:
        parser.add_argument(
            "scenario",
            help="scenario JSON file, or a generator id "
            f"({'|'.join(GENERATORS)}) parameterised with --gen",
        )
        parser.add_argument("--gen", action="append", metavar="KEY=VALUE",
                            help="generator option (repeatable)")
    parser.add_argument("--out", help="write CSV output to this file")
    parser.add_argument("--gamma", type=float, default=None, help="dual step size")
    parser.add_argument("--max-iter", type=int, default=60000)
    parser.add_argument("--tol", type=float, default=None,
                        help="price stationarity tolerance (slack tolerance is 10x)")
    parser.add_argument("--schedule", choices=["constant", "sqrt"], default="constant")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--trials", type=int, default=100000)
    parser.add_argument("--server", default=None, metavar="URL",
                        help="send the request to a running service instead")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="meshpf",
        description="Proportional-fair airtime and coding-rate allocation "
        "for TDMA wireless mesh networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve one scenario and print the allocation")
    _add_common(p_solve)
    p_solve.add_argument("--round", action="store_true",
                         help="also report floor-rounded integer packet sizes")
    p_solve.set_defaults(func=cmd_solve)

    p_sweep = sub.add_parser("sweep", help="solve across a parameter sweep, emit CSV")
    _add_common(p_sweep)
    p_sweep.add_argument("--param", required=True,
                         help="scenario path (e.g. flows.f1.deadline) or generator argument")
    p_sweep.add_argument("--values", required=True, help="comma-separated sweep values")
    p_sweep.set_defaults(func=cmd_sweep)

    p_verify = sub.add_parser(
        "verify", help="check bound sandwich and Monte Carlo agreement at the optimum"
    )
    _add_common(p_verify)
    p_verify.set_defaults(func=cmd_verify)

    p_compare = sub.add_parser(
        "compare-baseline", help="optimal utility vs the equal-airtime baseline"
    )
    _add_common(p_compare)
    p_compare.set_defaults(func=cmd_compare)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; 2 is reserved for non-convergence
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NonConvergenceError, _RemoteNonConvergence) as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
