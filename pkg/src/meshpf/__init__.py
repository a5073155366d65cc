"""Proportional-fair joint airtime / coding-rate allocation for TDMA
wireless mesh networks with lossy links and per-flow delay deadlines."""

from .bounds import (
    BlockSpec,
    CodingPoint,
    DomainError,
    chernoff_upper,
    chernoff_upper_raw,
    exact_error,
    lower_bound,
    phi,
    rate_function,
    theta_star,
)
from .model import (
    INFINITE,
    Cell,
    ChannelSummary,
    Flow,
    Hop,
    InvalidNetworkError,
    Network,
    cell_load,
    channel_summary,
    end_to_end_crossover,
    symbol_error,
    validate,
)
from .oracle import (
    GridSpec,
    McReport,
    fd_gradient_check,
    grid_search,
    monte_carlo_error,
    parity_enumeration_crossover,
)
from .scenario import Scenario, ScenarioError, load_scenario, parking_lot, single_cell
from .solver import (
    Allocation,
    NonConvergenceError,
    Prices,
    SolveResult,
    SolverConfig,
    SolverTrace,
    classical_baseline,
    dual_value,
    inverse_I,
    kkt_residuals,
    per_flow_solve,
    solve,
    solve_delay_insensitive,
    solve_loss_free,
    subgradient_step,
    utility,
    utility_logspace_gradient,
)

__version__ = "0.1.0"
