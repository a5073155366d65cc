import numpy as np
import pytest

from meshpf.model import (
    INFINITE,
    Cell,
    Flow,
    Hop,
    Network,
    cell_load,
    channel_summary,
    end_to_end_crossover,
    symbol_error,
    validate,
)
from meshpf.oracle import parity_enumeration_crossover


def _flow(route, deadline=1.0, m=1, fid="f1"):
    return Flow(id=fid, route=tuple(route), delay_deadline=deadline, alphabet_bits=m)


def _single_hop(alpha=0.01, w=10.0, cell="c1", **kw):
    return _flow([Hop(cell=cell, crossover=alpha, phy_rate=w)], **kw)


class TestValidate:
    def test_valid_network(self):
        net = Network(cells=(Cell("c1", 1.0),), flows=(_single_hop(),))
        assert validate(net) == []

    def test_route_with_repeated_cell(self):
        route = [Hop("c1", 0.01, 10.0), Hop("c2", 0.01, 10.0), Hop("c1", 0.01, 10.0)]
        net = Network(cells=(Cell("c1", 1.0), Cell("c2", 1.0)), flows=(_flow(route),))
        assert any("loop-free" in v for v in validate(net))

    def test_crossover_upper_boundary_excluded(self):
        net = Network(cells=(Cell("c1", 1.0),), flows=(_single_hop(alpha=0.5),))
        assert any("crossover out of [0,0.5)" in v for v in validate(net))

    def test_unknown_cell(self):
        net = Network(cells=(Cell("c1", 1.0),), flows=(_single_hop(cell="nope"),))
        assert any("unknown cell" in v for v in validate(net))

    def test_bad_period_and_duplicates(self):
        net = Network(
            cells=(Cell("c1", 0.0), Cell("c1", 1.0)),
            flows=(_single_hop(), _single_hop()),
        )
        report = validate(net)
        assert any("schedule_period" in v for v in report)
        assert any("duplicate" in v for v in report)

    def test_deadline_must_be_integral_or_infinite(self):
        assert validate(
            Network(cells=(Cell("c1", 1.0),), flows=(_single_hop(deadline=2.5),))
        )
        assert not validate(
            Network(cells=(Cell("c1", 1.0),), flows=(_single_hop(deadline=INFINITE),))
        )
        assert not validate(
            Network(cells=(Cell("c1", 1.0),), flows=(_single_hop(deadline=1e5),))
        )

    def test_empty_flow_set(self):
        assert any("no flows" in v for v in validate(Network(cells=(Cell("c1", 1.0),), flows=())))

    def test_derived_symbol_error_above_half_rejected(self):
        # per-hop crossovers are admissible but the 8-bit symbols are not
        net = Network(cells=(Cell("c1", 1.0),), flows=(_single_hop(alpha=0.2, m=8),))
        assert any("symbol error" in v for v in validate(net))
        ok = Network(cells=(Cell("c1", 1.0),), flows=(_single_hop(alpha=0.02, m=8),))
        assert validate(ok) == []


class TestEndToEndCrossover:
    def test_single_hop_identity(self):
        assert end_to_end_crossover(_single_hop(alpha=0.01)) == pytest.approx(0.01)

    def test_two_hops(self):
        route = [Hop("c1", 0.1, 10.0), Hop("c2", 0.1, 10.0)]
        assert end_to_end_crossover(_flow(route)) == pytest.approx(0.18, rel=1e-12)

    def test_three_hops(self):
        route = [Hop(f"c{i}", 0.1, 10.0) for i in range(3)]
        assert end_to_end_crossover(_flow(route)) == pytest.approx(0.244, rel=1e-12)

    def test_matches_parity_enumeration(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            length = int(rng.integers(1, 7))
            alphas = rng.uniform(0.0, 0.5, size=length)
            route = [Hop(f"c{i}", float(a), 10.0) for i, a in enumerate(alphas)]
            closed = end_to_end_crossover(_flow(route))
            assert closed == pytest.approx(
                parity_enumeration_crossover(alphas), abs=1e-12
            )

    def test_monotone_and_below_half(self):
        base = [0.1, 0.2, 0.05]
        route = [Hop(f"c{i}", a, 10.0) for i, a in enumerate(base)]
        reference = end_to_end_crossover(_flow(route))
        assert reference < 0.5
        for i in range(3):
            bumped = list(base)
            bumped[i] += 0.05
            route2 = [Hop(f"c{j}", a, 10.0) for j, a in enumerate(bumped)]
            assert end_to_end_crossover(_flow(route2)) >= reference


class TestSymbolError:
    def test_binary_alphabet_is_identity(self):
        assert symbol_error(_single_hop(alpha=1e-2, m=1)) == pytest.approx(1e-2, rel=1e-12)

    def test_loss_free(self):
        assert symbol_error(_single_hop(alpha=0.0, m=5)) == 0.0

    def test_two_bit_alphabet(self):
        assert symbol_error(_single_hop(alpha=0.1, m=2)) == pytest.approx(0.19, rel=1e-12)

    def test_monotone_in_m_and_alpha(self):
        values_m = [symbol_error(_single_hop(alpha=0.1, m=m)) for m in range(1, 8)]
        assert all(b > a for a, b in zip(values_m, values_m[1:]))
        values_a = [symbol_error(_single_hop(alpha=a, m=3)) for a in (0.01, 0.05, 0.2, 0.4)]
        assert all(b > a for a, b in zip(values_a, values_a[1:]))

    def test_summary(self):
        summary = channel_summary(_single_hop(alpha=0.1, m=2))
        assert summary.end_to_end_crossover == pytest.approx(0.1)
        assert summary.symbol_error == pytest.approx(0.19)


class TestCellLoad:
    def _two_flow_net(self):
        return Network(
            cells=(Cell("c1", 1.0),),
            flows=(_single_hop(fid="f1"), _single_hop(fid="f2")),
        )

    def test_boundary_feasible(self):
        report = cell_load(self._two_flow_net(), {"f1": 5.0, "f2": 5.0})
        assert report.per_cell["c1"].load == pytest.approx(1.0)
        assert report.per_cell["c1"].slack == pytest.approx(0.0)
        assert report.feasible

    def test_overload(self):
        report = cell_load(self._two_flow_net(), {"f1": 6.0, "f2": 6.0})
        assert report.per_cell["c1"].load == pytest.approx(1.2)
        assert report.per_cell["c1"].slack == pytest.approx(-0.2)
        assert not report.feasible

    def test_empty_cell(self):
        net = Network(cells=(Cell("c1", 1.0), Cell("c2", 2.0)), flows=(_single_hop(),))
        report = cell_load(net, {"f1": 1.0})
        assert report.per_cell["c2"].load == 0.0
        assert report.per_cell["c2"].slack == pytest.approx(2.0)

    def test_linear_in_each_packet_size(self):
        net = self._two_flow_net()
        rng = np.random.default_rng(2)
        for _ in range(20):
            a, b, scale = rng.uniform(0.1, 5.0, size=3)
            base = cell_load(net, {"f1": a, "f2": b}).per_cell["c1"].load
            scaled = cell_load(net, {"f1": scale * a, "f2": b}).per_cell["c1"].load
            assert scaled - base == pytest.approx((scale - 1) * a / 10.0, rel=1e-12)

    def test_requires_positive_sizes(self):
        with pytest.raises(ValueError):
            cell_load(self._two_flow_net(), {"f1": 0.0, "f2": 1.0})
