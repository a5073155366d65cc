"""Scenario files and built-in scenario generators.

A scenario is the JSON form of a :class:`~meshpf.model.Network`::

    {
      "cells": [{"id": "c1", "period": 1.0}],
      "flows": [{"id": "f1",
                 "route": [{"cell": "c1", "alpha": 0.01, "w": 10.0}],
                 "deadline": 1,            # or "inf"
                 "m": 1}]
    }

Unknown keys are rejected.  ``period`` is in seconds and ``w`` in
symbols/second; the benchmark scenarios use ``period = 1`` so that ``w``
reads as symbols per schedule period.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Union

from pydantic import BaseModel, ConfigDict, ValidationError, field_validator

from .model import Cell, Flow, Hop, Network

__all__ = [
    "ScenarioError",
    "HopSpec",
    "FlowSpec",
    "CellSpec",
    "Scenario",
    "load_scenario",
    "parse_scenario",
    "apply_param",
    "single_cell",
    "parking_lot",
    "GENERATORS",
]


class ScenarioError(ValueError):
    """A scenario file or inline scenario failed to parse or validate."""


class HopSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    cell: str
    alpha: float
    w: float


class FlowSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: str
    route: list[HopSpec]
    deadline: Union[int, str]
    m: int = 1

    @field_validator("deadline")
    @classmethod
    def _deadline_form(cls, v):
        if isinstance(v, str):
            if v != "inf":
                raise ValueError('deadline must be a positive integer or "inf"')
            return v
        if v < 1:
            raise ValueError("deadline must be >= 1")
        return v

    def deadline_value(self) -> float:
        return math.inf if self.deadline == "inf" else float(self.deadline)


class CellSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: str
    period: float


class Scenario(BaseModel):
    model_config = ConfigDict(extra="forbid")

    cells: list[CellSpec]
    flows: list[FlowSpec]

    def to_network(self) -> Network:
        return Network(
            cells=tuple(Cell(id=c.id, schedule_period=c.period) for c in self.cells),
            flows=tuple(
                Flow(
                    id=f.id,
                    route=tuple(
                        Hop(cell=h.cell, crossover=h.alpha, phy_rate=h.w) for h in f.route
                    ),
                    delay_deadline=f.deadline_value(),
                    alphabet_bits=f.m,
                )
                for f in self.flows
            ),
        )


def parse_scenario(data) -> Scenario:
    """Validate an already-decoded scenario object."""
    try:
        return Scenario.model_validate(data)
    except ValidationError as exc:
        lines = [
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in exc.errors()
        ]
        raise ScenarioError("invalid scenario: " + "; ".join(lines)) from exc


def load_scenario(path: str | Path) -> Scenario:
    """Load and validate a scenario JSON file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(
            f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    return parse_scenario(data)


def apply_param(scenario: Scenario, path: str, value) -> Scenario:
    """Return a copy of the scenario with one parameter replaced.

    Supported paths: ``cells.<id>.period``, ``flows.<id>.deadline``,
    ``flows.<id>.m`` and ``flows.<id>.route.<cell>.alpha|w``.
    """
    parts = path.split(".")
    data = scenario.model_dump()

    def _find(items, key):
        for item in items:
            if item["id"] == key:
                return item
        raise ScenarioError(f"sweep path {path!r}: no element with id {key!r}")

    try:
        if len(parts) == 3 and parts[0] == "cells" and parts[2] == "period":
            _find(data["cells"], parts[1])["period"] = value
        elif len(parts) == 3 and parts[0] == "flows" and parts[2] in ("deadline", "m"):
            field = parts[2]
            if field == "deadline" and value != "inf":
                if not float(value).is_integer():
                    raise ScenarioError(f"sweep path {path!r}: deadline {value!r} not integral")
                value = int(value)
            _find(data["flows"], parts[1])[field] = value
        elif len(parts) == 5 and parts[0] == "flows" and parts[2] == "route" and parts[4] in ("alpha", "w"):
            flow = _find(data["flows"], parts[1])
            for hop in flow["route"]:
                if hop["cell"] == parts[3]:
                    hop[parts[4]] = value
                    break
            else:
                raise ScenarioError(f"sweep path {path!r}: flow has no hop in cell {parts[3]!r}")
        else:
            raise ScenarioError(f"unsupported sweep path {path!r}")
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"sweep path {path!r}: bad value {value!r}: {exc}") from exc
    return parse_scenario(data)


def _deadline_key(deadline) -> Union[int, str]:
    if deadline == "inf" or (isinstance(deadline, float) and math.isinf(deadline)):
        return "inf"
    return int(deadline)


def single_cell(
    n_flows: int = 3,
    deadline: Union[int, str, float] = 1,
    other_deadline: Union[int, str, float] = "inf",
    alpha: float = 1e-2,
    w: float = 10.0,
    period: float = 1.0,
    m: int = 1,
) -> Scenario:
    """One TDMA cell with ``n_flows`` flows: flow ``f1`` has ``deadline``
    and the rest ``other_deadline`` (default delay-insensitive)."""
    if n_flows < 1:
        raise ScenarioError("single-cell generator needs n_flows >= 1")
    flows = []
    for i in range(1, int(n_flows) + 1):
        flows.append(
            FlowSpec(
                id=f"f{i}",
                route=[HopSpec(cell="c1", alpha=alpha, w=w)],
                deadline=_deadline_key(deadline if i == 1 else other_deadline),
                m=m,
            )
        )
    return Scenario(cells=[CellSpec(id="c1", period=period)], flows=flows)


def parking_lot(
    cells: int = 3,
    multi_deadline: Union[int, str, float] = 1,
    single_deadline: Union[int, str, float] = 1,
    alpha: float = 1e-2,
    w: float = 10.0,
    period: float = 1.0,
    m: int = 1,
    flow_alphas: list[float] | None = None,
    phy_rates: list[float] | None = None,
) -> Scenario:
    """Linear chain of ``cells`` cells carrying one multi-hop flow ``f1``
    (crossing every cell) plus one single-hop flow per cell.

    ``alpha`` is the per-hop crossover applied to every hop.  Alternatively
    ``flow_alphas`` fixes the *end-to-end* crossover of each of the
    ``cells + 1`` flows; the multi-hop flow's value is split evenly over
    its hops.  ``phy_rates`` overrides the PHY rate per flow.
    """
    n = int(cells)
    if n < 1:
        raise ScenarioError("parking-lot generator needs cells >= 1")
    n_flows = n + 1
    if flow_alphas is not None and len(flow_alphas) != n_flows:
        raise ScenarioError(f"flow_alphas must list {n_flows} values")
    if phy_rates is not None and len(phy_rates) != n_flows:
        raise ScenarioError(f"phy_rates must list {n_flows} values")

    def hop_alpha(flow_idx: int, hops: int) -> float:
        if flow_alphas is None:
            return alpha
        target = flow_alphas[flow_idx]
        # invert the odd-parity composition for equal per-hop crossover
        return (1.0 - (1.0 - 2.0 * target) ** (1.0 / hops)) / 2.0

    def rate(flow_idx: int) -> float:
        return w if phy_rates is None else phy_rates[flow_idx]

    cell_ids = [f"c{j}" for j in range(1, n + 1)]
    flows = [
        FlowSpec(
            id="f1",
            route=[HopSpec(cell=c, alpha=hop_alpha(0, n), w=rate(0)) for c in cell_ids],
            deadline=_deadline_key(multi_deadline),
            m=m,
        )
    ]
    for j, cell_id in enumerate(cell_ids, start=1):
        flows.append(
            FlowSpec(
                id=f"f{j + 1}",
                route=[HopSpec(cell=cell_id, alpha=hop_alpha(j, 1), w=rate(j))],
                deadline=_deadline_key(single_deadline),
                m=m,
            )
        )
    return Scenario(cells=[CellSpec(id=c, period=period) for c in cell_ids], flows=flows)


GENERATORS = {
    "single-cell": single_cell,
    "parking-lot": parking_lot,
}
