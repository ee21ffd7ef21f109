"""Multi-step Richardson-Romberg extrapolation of Euler-scheme Monte Carlo.

Combines R coupled Euler schemes (steps T/(r n), r = 1..R) driven by one
consistent Brownian path into a single estimator whose weak error decays
like n^-R while its variance stays at the level of a single scheme.
Includes half-order weights for path-dependent payoffs of the discrete
scheme, Brownian-bridge extrema augmentation for the continuous scheme,
and a complexity-optimal (n, M) budget planner.
"""

from .estimator import (
    BudgetPlan,
    EstimateReport,
    EstimatorConfig,
    PilotEstimate,
    StreamingMoments,
    SyntheticExpansion,
    estimate,
    pilot_estimate_c,
    plan_budget,
    theta,
    variance_ratio_experiment,
)
from .noise import (
    IncrementBlock,
    IncrementSchedule,
    RandomSource,
    build_schedule,
    derive_stream,
    empirical_block_covariance,
    lcm_atoms,
    overlap_oracle_matrix,
    sample_block,
    sample_independent_block,
    totient_cardinality,
)
from .payoff import (
    PayoffSpec,
    analytic_reference,
    bs_call,
    bs_partial_lookback,
    bs_put,
    bs_up_and_out,
    evaluate,
    evaluate_bundle,
    partial_lookback_call,
    up_and_out_call,
    vanilla_call,
)
from .scheme import (
    BlowUpError,
    CoupledPathBundle,
    SdeModel,
    black_scholes,
    bridge_max_sample,
    bridge_min_sample,
    euler_step,
    simulate_coupled,
)
from .weights import (
    HALF_ORDER,
    INTEGER,
    ErrorScale,
    WeightVector,
    half_order_weights,
    leading_coefficient_factor,
    solve_weights,
    standard_weights,
    sum_of_squares,
    weights_for_scale,
)

__version__ = "0.1.0"

__all__ = [
    "BlowUpError",
    "BudgetPlan",
    "CoupledPathBundle",
    "ErrorScale",
    "EstimateReport",
    "EstimatorConfig",
    "HALF_ORDER",
    "INTEGER",
    "IncrementBlock",
    "IncrementSchedule",
    "PayoffSpec",
    "PilotEstimate",
    "RandomSource",
    "SdeModel",
    "StreamingMoments",
    "SyntheticExpansion",
    "WeightVector",
    "analytic_reference",
    "black_scholes",
    "bridge_max_sample",
    "bridge_min_sample",
    "bs_call",
    "bs_partial_lookback",
    "bs_put",
    "bs_up_and_out",
    "build_schedule",
    "derive_stream",
    "empirical_block_covariance",
    "estimate",
    "euler_step",
    "evaluate",
    "evaluate_bundle",
    "half_order_weights",
    "lcm_atoms",
    "leading_coefficient_factor",
    "overlap_oracle_matrix",
    "partial_lookback_call",
    "pilot_estimate_c",
    "plan_budget",
    "sample_block",
    "sample_independent_block",
    "simulate_coupled",
    "solve_weights",
    "standard_weights",
    "sum_of_squares",
    "theta",
    "totient_cardinality",
    "up_and_out_call",
    "vanilla_call",
    "variance_ratio_experiment",
    "weights_for_scale",
]
