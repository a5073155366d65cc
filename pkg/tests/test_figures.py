"""Shape properties of the benchmark sweeps beyond the acceptance set:
directions and orderings the allocation must reproduce qualitatively."""

import pytest

from meshpf.service import handlers
from meshpf.service.schemas import GeneratorSpec, SweepRequest


def _airtimes(row):
    return {flow.id: flow.airtime_total_fraction for flow in row.flows}


class TestDeadlineSweep:
    def test_sensitive_premium_decays_with_deadline(self):
        # one deadline flow and two insensitive peers; the allocations
        # approach each other as the deadline is relaxed
        sweep = handlers.run_sweep(
            SweepRequest(
                generator=GeneratorSpec(id="single-cell", options={"n_flows": 3}),
                param="flows.f1.deadline",
                values=[1, 2, 5, 10, 50, 200, 1000],
            )
        )
        premiums = []
        for row in sweep.rows:
            assert row.converged
            air = _airtimes(row)
            premiums.append(air["f1"] / air["f2"])
        assert all(b < a for a, b in zip(premiums, premiums[1:]))
        assert premiums[0] > 1.3  # tight deadline: a pronounced premium
        assert premiums[-1] < 1.1


class TestChannelAsymmetrySweeps:
    def test_airtime_tracks_own_error_rate(self):
        # two deadline-1 flows; flow 1's crossover varies around flow 2's
        sweep = handlers.run_sweep(
            SweepRequest(
                generator=GeneratorSpec(
                    id="single-cell",
                    options={"n_flows": 2, "deadline": 1, "other_deadline": 1},
                ),
                param="flows.f1.route.c1.alpha",
                values=[1e-3, 5e-3, 1e-2, 5e-2, 1e-1],
            )
        )
        shares = []
        for row in sweep.rows:
            assert row.converged
            air = _airtimes(row)
            shares.append(air["f1"])
        # strictly more airtime as the channel degrades
        assert all(b > a for a, b in zip(shares, shares[1:]))
        # equal channels (alpha = 1e-2 for both) split the cell evenly
        equal = _airtimes(sweep.rows[2])
        assert equal["f1"] == pytest.approx(equal["f2"], rel=1e-6)

    def test_airtime_falls_as_own_phy_rate_grows(self):
        sweep = handlers.run_sweep(
            SweepRequest(
                generator=GeneratorSpec(
                    id="single-cell",
                    options={"n_flows": 2, "deadline": 1, "other_deadline": 1},
                ),
                param="flows.f1.route.c1.w",
                values=[5.0, 8.0, 10.0, 15.0, 25.0],
            )
        )
        shares = []
        for row in sweep.rows:
            assert row.converged
            shares.append(_airtimes(row)["f1"])
        assert all(b < a for a, b in zip(shares, shares[1:]))
        equal = _airtimes(sweep.rows[2])  # both at 10 symbols/period
        assert equal["f1"] == pytest.approx(equal["f2"], rel=1e-6)


class TestMultiHopDeadlineMixes:
    def _ratio_sweep(self, multi_deadline, single_deadline):
        sweep = handlers.run_sweep(
            SweepRequest(
                generator=GeneratorSpec(
                    id="parking-lot",
                    options={
                        "multi_deadline": multi_deadline,
                        "single_deadline": single_deadline,
                        "alpha": 1e-2,
                    },
                ),
                param="cells",
                values=[2, 3, 4, 5, 6],
            )
        )
        out = []
        for row in sweep.rows:
            assert row.converged
            air = _airtimes(row)
            out.append((air["f1"], air["f2"]))
        return out

    def test_insensitive_singles_cede_airtime_to_deadline_multihop(self):
        pairs = self._ratio_sweep(1, 100000)
        equal_pairs = self._ratio_sweep(1, 1)
        for (multi, single), (multi_eq, single_eq) in zip(pairs, equal_pairs):
            assert multi / single > 1.0
            # relaxing the single-hop deadlines releases extra airtime
            assert multi / single > multi_eq / single_eq

    def test_insensitive_multihop_ratio_insensitive_to_hop_count(self):
        def spread(values):
            return (max(values) - min(values)) / (sum(values) / len(values))

        flat = [multi / single for multi, single in self._ratio_sweep(100000, 1)]
        growing = [multi / single for multi, single in self._ratio_sweep(1, 1)]
        # singles keep a slight edge over the insensitive multi-hop flow
        assert all(r < 1.0 for r in flat)
        # and the ratio barely moves with hop count, unlike the
        # delay-sensitive case where it keeps growing
        assert spread(flat) < 0.05
        assert spread(growing) > 3 * spread(flat)
        assert all(b > a for a, b in zip(growing, growing[1:]))
