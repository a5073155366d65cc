import pytest

from meshpf.scenario import single_cell


@pytest.fixture
def fig1_scenario():
    """Single cell, three flows: one with deadline 1, two delay-insensitive;
    crossover 1e-2, 10 symbols per schedule period."""
    return single_cell(n_flows=3, deadline=1, other_deadline="inf",
                       alpha=1e-2, w=10.0, period=1.0, m=1)


@pytest.fixture
def fig1_network(fig1_scenario):
    return fig1_scenario.to_network()
