"""Problem instances: cells, flows, routes, channels and deadlines.

A network is a set of TDMA cells, each with a schedule period, and a set
of unicast flows routed across them.  Every hop of a flow is a binary
symmetric channel with its own crossover probability and PHY symbol rate.
All types are immutable and all operations are pure, so instances can be
shared freely across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

__all__ = [
    "INFINITE",
    "Cell",
    "Hop",
    "Flow",
    "Network",
    "ChannelSummary",
    "CellLoad",
    "LoadReport",
    "InvalidNetworkError",
    "validate",
    "end_to_end_crossover",
    "symbol_error",
    "channel_summary",
    "cell_load",
]

# Distinguished delay deadline of delay-insensitive flows.
INFINITE = math.inf


class InvalidNetworkError(ValueError):
    """Raised by solvers when handed a network that fails validation."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


@dataclass(frozen=True)
class Cell:
    """A TDMA interference domain with schedule period in seconds."""

    id: str
    schedule_period: float


@dataclass(frozen=True)
class Hop:
    """One cell traversal: crossover probability and PHY rate (symbols/s)."""

    cell: str
    crossover: float
    phy_rate: float


@dataclass(frozen=True)
class Flow:
    """A unicast flow: ordered loop-free route, delay deadline in schedule
    periods (:data:`INFINITE` allowed) and symbol alphabet size 2**m."""

    id: str
    route: tuple[Hop, ...]
    delay_deadline: float
    alphabet_bits: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "route", tuple(self.route))

    @property
    def source_cell(self) -> str:
        return self.route[0].cell

    @property
    def destination_cell(self) -> str:
        return self.route[-1].cell


@dataclass(frozen=True)
class Network:
    """A full problem instance: cells plus flows routed across them."""

    cells: tuple[Cell, ...]
    flows: tuple[Flow, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "cells", tuple(self.cells))
        object.__setattr__(self, "flows", tuple(self.flows))

    def cell(self, cell_id: str) -> Cell:
        for cell in self.cells:
            if cell.id == cell_id:
                return cell
        raise KeyError(cell_id)

    def flow(self, flow_id: str) -> Flow:
        for flow in self.flows:
            if flow.id == flow_id:
                return flow
        raise KeyError(flow_id)

    def flows_through(self, cell_id: str) -> tuple[Flow, ...]:
        """The flows routed through a cell, in network flow order."""
        return tuple(
            flow for flow in self.flows if any(hop.cell == cell_id for hop in flow.route)
        )


@dataclass(frozen=True)
class ChannelSummary:
    """End-to-end channel statistics of one flow."""

    end_to_end_crossover: float
    symbol_error: float


@dataclass(frozen=True)
class CellLoad:
    load: float
    slack: float


@dataclass(frozen=True)
class LoadReport:
    per_cell: Mapping[str, CellLoad] = field(default_factory=dict)
    feasible: bool = True


def validate(network: Network) -> list[str]:
    """Collect every invariant violation; an empty list means valid.

    Violations are data, not exceptions: callers that require validity
    (the solvers do) raise :class:`InvalidNetworkError` themselves.
    """
    violations: list[str] = []
    seen_cells: set[str] = set()
    for cell in network.cells:
        if cell.id in seen_cells:
            violations.append(f"cell {cell.id!r}: duplicate id")
        seen_cells.add(cell.id)
        if not (math.isfinite(cell.schedule_period) and cell.schedule_period > 0):
            violations.append(f"cell {cell.id!r}: schedule_period must be > 0")
    if not network.flows:
        violations.append("network has no flows")
    seen_flows: set[str] = set()
    for flow in network.flows:
        if flow.id in seen_flows:
            violations.append(f"flow {flow.id!r}: duplicate id")
        seen_flows.add(flow.id)
        if not flow.route:
            violations.append(f"flow {flow.id!r}: route is empty")
            continue
        route_cells = [hop.cell for hop in flow.route]
        if len(set(route_cells)) != len(route_cells):
            violations.append(f"flow {flow.id!r}: route not loop-free")
        for hop in flow.route:
            if hop.cell not in seen_cells:
                violations.append(f"flow {flow.id!r}: unknown cell {hop.cell!r}")
            if not 0.0 <= hop.crossover < 0.5:
                violations.append(
                    f"flow {flow.id!r}, cell {hop.cell!r}: crossover out of [0,0.5)"
                )
            if not hop.phy_rate > 0:
                violations.append(f"flow {flow.id!r}, cell {hop.cell!r}: phy_rate must be > 0")
        deadline = flow.delay_deadline
        if not math.isinf(deadline):
            if not (deadline >= 1 and float(deadline).is_integer()):
                violations.append(
                    f"flow {flow.id!r}: deadline must be a positive integer or infinite"
                )
        if not (isinstance(flow.alphabet_bits, int) and flow.alphabet_bits >= 1):
            violations.append(f"flow {flow.id!r}: alphabet_bits must be an integer >= 1")
        elif all(0.0 <= hop.crossover < 0.5 for hop in flow.route):
            # error recovery needs a coding rate below 1 - 2*beta; a derived
            # symbol error of 0.5+ leaves no admissible rate
            if symbol_error(flow) >= 0.5:
                violations.append(
                    f"flow {flow.id!r}: end-to-end symbol error >= 0.5, "
                    "no admissible coding rate"
                )
    return violations


def end_to_end_crossover(flow: Flow) -> float:
    """Probability that a bit arrives flipped after the whole route.

    A bit is wrong at the destination iff an odd number of per-hop flips
    occurred, which collapses to ``(1 - prod(1 - 2*a_i)) / 2``.
    """
    product = 1.0
    for hop in flow.route:
        product *= 1.0 - 2.0 * hop.crossover
    return (1.0 - product) / 2.0


def symbol_error(flow: Flow) -> float:
    """End-to-end symbol error probability ``1 - (1 - alpha)**m`` for an
    alphabet of ``2**m`` symbols (m channel uses per symbol)."""
    alpha = end_to_end_crossover(flow)
    return -math.expm1(flow.alphabet_bits * math.log1p(-alpha)) if alpha < 1.0 else 1.0


def channel_summary(flow: Flow) -> ChannelSummary:
    return ChannelSummary(
        end_to_end_crossover=end_to_end_crossover(flow),
        symbol_error=symbol_error(flow),
    )


def cell_load(network: Network, packet_sizes: Mapping[str, float]) -> LoadReport:
    """Per-cell airtime load ``sum(n_f / w_fc)`` and slack against the
    schedule period, plus an all-cells feasibility flag."""
    for flow in network.flows:
        if not packet_sizes.get(flow.id, 0.0) > 0:
            raise ValueError(f"flow {flow.id!r}: packet size must be > 0")
    per_cell: dict[str, CellLoad] = {}
    feasible = True
    for cell in network.cells:
        load = 0.0
        for flow in network.flows:
            for hop in flow.route:
                if hop.cell == cell.id:
                    load += packet_sizes[flow.id] / hop.phy_rate
        slack = cell.schedule_period - load
        per_cell[cell.id] = CellLoad(load=load, slack=slack)
        if slack < 0:
            feasible = False
    return LoadReport(per_cell=per_cell, feasible=feasible)
