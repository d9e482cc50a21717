"""Entropy-balanced difference-in-differences estimation.

Estimate per-individual pre-intervention outcome trends, solve
entropy-balancing weights that equate trend (and covariate) moments between
groups, fit weighted difference-in-differences regressions with
cluster-robust inference, and reproduce bias-reduction experiments with a
seeded Monte Carlo harness.
"""

from .balance import (
    BalanceError,
    BalanceProblem,
    BalanceWeights,
    DegenerateConstraints,
    InfeasibleTargets,
    NonConvergence,
    SolverConfig,
    build_constraints,
    check_balance,
    effective_sample_size,
    solve_entropy_balance,
    write_weights_csv,
)
from .did import (
    DidFit,
    PretrendTest,
    TimeSpec,
    fit_did,
    percent_bias_reduction,
    pretrend_test,
)
from .harness import (
    AnalysisConfig,
    AnalysisReport,
    Arm,
    BiasReport,
    ConfigError,
    ExperimentConfig,
    ExperimentError,
    analyze_panel,
    emit_report,
    overlap_summary,
    run_experiment,
)
from .matching import MatchSet, MatchWeights, match_nearest, match_weights, write_matches_csv
from .panel import (
    Panel,
    ValidationIssue,
    ValidationReport,
    balance_table,
    load_panel,
    pre_panel,
    read_panel_csv,
    to_long_frame,
    write_panel_csv,
)
from .simulate import (
    DgpSpec,
    ar1_covariance,
    expected_did,
    generate_panel,
    scenario_spec,
    trend_reliability,
    with_rho,
)
from .trends import (
    TrendMatrix,
    first_difference_trends,
    polynomial_trends,
    split_trends,
    write_trends_csv,
)

__version__ = "0.1.0"
