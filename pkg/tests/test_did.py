import math

import numpy as np
import pytest

from ebdid import (
    TimeSpec,
    expected_did,
    fit_did,
    generate_panel,
    load_panel,
    percent_bias_reduction,
    pre_panel,
    pretrend_test,
    scenario_spec,
)
from ebdid.balance import build_constraints, solve_entropy_balance
from ebdid.panel import Panel
from ebdid.trends import first_difference_trends, split_trends

from conftest import long_rows

NP_TIME = TimeSpec.nonparametric()


def panel_of(outcomes, group, times, t_e):
    p = load_panel(long_rows(outcomes, group=group, times=times), intervention_time=t_e)
    assert isinstance(p, Panel)
    return p


def dd_of_group_means(p: Panel, comparison_weights=None):
    """Direct group-mean oracle: (post - mean pre) contrast, one post time."""
    w = comparison_weights
    if w is None:
        w = np.full(p.n_comparison, 1.0 / p.n_comparison)
    w = w / w.sum()
    m1 = p.outcomes[p.treated_mask].mean(axis=0)
    m0 = w @ p.outcomes[p.comparison_mask]
    pre = p.pre_mask
    return (m1[~pre][0] - m1[pre].mean()) - (m0[~pre][0] - m0[pre].mean())


def test_canonical_2x2_identity():
    rng = np.random.default_rng(30)
    for _ in range(200):
        n1, n0 = rng.integers(1, 6, size=2)
        y = rng.normal(size=(n1 + n0, 2))
        group = [1] * n1 + [0] * n0
        p = panel_of(y, group=group, times=[1, 2], t_e=2)
        fit = fit_did(p, None, NP_TIME)
        m = lambda a, j: y[np.array(group) == a][:, j].mean()
        truth = (m(1, 1) - m(1, 0)) - (m(0, 1) - m(0, 0))
        assert fit.tau_hat == pytest.approx(truth, abs=1e-12)


def test_noiseless_no_overlap_means_match_analytic_oracle():
    # Exact mean outcomes of the no-overlap preset: comparison slope -0.2,
    # treated flat, tau = 0.
    times = [1, 2, 3, 4, 5]
    treated = [[1.0] * 5] * 3
    comparison = [[-0.2 * t for t in times]] * 6
    p = panel_of(treated + comparison, group=[1] * 3 + [0] * 6, times=times, t_e=5)
    fit = fit_did(p, None, NP_TIME)
    spec = scenario_spec("scenario2")
    oracle = expected_did(spec, NP_TIME)
    assert oracle == pytest.approx(0.5, abs=1e-12)  # slope gap 0.2 x 2.5
    assert fit.tau_hat == pytest.approx(oracle, abs=1e-10)


def test_balanced_slopes_give_zero_effect():
    # Comparison slopes -0.4 / +0.4 weighted evenly average to the treated
    # slope 0; with tau = 0 the weighted effect estimate must vanish.
    times = [1, 2, 3, 4, 5]
    rows = [
        [1.0] * 5,
        [-0.4 * t for t in times],
        [0.4 * t for t in times],
    ]
    p = panel_of(rows, group=[1, 0, 0], times=times, t_e=5)
    w = np.array([0.5, 0.5])
    for spec in (NP_TIME, TimeSpec.polynomial(1)):
        fit = fit_did(p, w, spec)
        assert fit.tau_hat == pytest.approx(0.0, abs=1e-10)


def test_weight_scaling_invariance():
    p = generate_panel(scenario_spec("scenario1", n0=60, n1=30, rho=0.5), seed=31)
    rng = np.random.default_rng(32)
    w = rng.uniform(0.1, 1.0, p.n_comparison)
    for spec in (NP_TIME, TimeSpec.polynomial(1), TimeSpec.polynomial(2)):
        a = fit_did(p, w, spec).tau_hat
        b = fit_did(p, w * 37.5, spec).tau_hat
        assert a == pytest.approx(b, abs=1e-10)


def test_outcome_shift_moves_levels_not_effect():
    p = generate_panel(scenario_spec("scenario1", n0=50, n1=25, rho=0.3), seed=33)
    shifted = Panel(
        unit_ids=p.unit_ids,
        group=p.group,
        times=p.times,
        intervention_time=p.intervention_time,
        outcomes=p.outcomes + 100.0,
        covariates=None,
    )
    for spec in (NP_TIME, TimeSpec.polynomial(1)):
        a, b = fit_did(p, None, spec), fit_did(shifted, None, spec)
        assert b.tau_hat == pytest.approx(a.tau_hat, abs=1e-9)
        first_coef = next(iter(a.coefficients))
        assert b.coefficients[first_coef] == pytest.approx(
            a.coefficients[first_coef] + 100.0, rel=1e-9
        )


def test_nonparametric_single_post_equals_group_mean_dd():
    rng = np.random.default_rng(34)
    for _ in range(20):
        n1, n0, k = 4, 6, 4
        y = rng.normal(size=(n1 + n0, k))
        p = panel_of(y, group=[1] * n1 + [0] * n0, times=[1, 2, 3, 4], t_e=4)
        w = rng.uniform(0.2, 1.0, n0)
        fit = fit_did(p, w, NP_TIME)
        assert fit.tau_hat == pytest.approx(dd_of_group_means(p, w), abs=1e-10)


def test_ci_brackets_estimate_and_se_nonnegative():
    p = generate_panel(scenario_spec("scenario1", rho=0.5), seed=35)
    fit = fit_did(p, None, TimeSpec.polynomial(1))
    assert fit.ci_low <= fit.tau_hat <= fit.ci_high
    assert fit.standard_error >= 0
    assert fit.n_treated == 500 and fit.n_comparison == 1000
    payload = fit.to_dict()
    assert payload["time_spec"] == "poly1"
    assert "--" in fit.formatted()


def test_coverage_of_cluster_robust_interval():
    # Unbiased configuration: parallel trends by design, tau = 0.5.
    spec = scenario_spec("null_parallel", n0=80, n1=40, tau=0.5, rho=0.5)
    hits = 0
    n_reps = 1000
    for rep in range(n_reps):
        p = generate_panel(spec, np.random.SeedSequence(entropy=36, spawn_key=(rep,)))
        fit = fit_did(p, None, NP_TIME)
        hits += fit.ci_low <= 0.5 <= fit.ci_high
    assert 0.92 <= hits / n_reps <= 0.98


def test_rank_deficiency_fails_loudly():
    p = panel_of(
        [[1.0, 2.0], [0.5, 1.5]], group=[1, 0], times=[1, 2], t_e=2
    )
    with pytest.raises(ValueError, match="rank"):
        fit_did(p, None, TimeSpec.polynomial(2))  # 3 time params from 2 times


def test_negative_weights_rejected():
    p = generate_panel(scenario_spec("scenario1", n0=10, n1=5), seed=37)
    with pytest.raises(ValueError, match="negative"):
        fit_did(p, np.array([-0.1] + [1.0] * 9), NP_TIME)


def test_no_post_period_rejected():
    p = generate_panel(scenario_spec("scenario1", n0=10, n1=5), seed=38)
    with pytest.raises(ValueError, match="post"):
        fit_did(pre_panel(p), None, NP_TIME)


# ---------------------------------------------------------------------------
# pre-trend test
# ---------------------------------------------------------------------------


def test_pretrend_rejects_on_diverging_trends():
    # Group slopes differ by 0.2 at N=1500: essentially always detected.
    p = generate_panel(scenario_spec("scenario1", rho=0.5), seed=39)
    result = pretrend_test(p)
    assert result.df == 3
    assert result.p_value < 1e-3


def test_pretrend_passes_after_first_difference_balancing():
    p = generate_panel(scenario_spec("scenario1", rho=0.5), seed=40)
    comparison, treated = split_trends(first_difference_trends(pre_panel(p)), p)
    w = solve_entropy_balance(build_constraints(comparison, treated))
    result = pretrend_test(p, w)
    assert max(abs(v) for v in result.interactions.values()) <= 1e-6
    assert result.p_value > 0.999999


def test_pretrend_needs_two_pre_periods(tiny_2x2):
    p = load_panel(tiny_2x2, intervention_time=2)
    with pytest.raises(ValueError):
        pretrend_test(p)


def test_pretrend_statistic_invariant_to_group_labeling_of_reference():
    # Statistic computed from the same panel twice is identical (pure function).
    p = generate_panel(scenario_spec("scenario1", n0=80, n1=40, rho=0.3), seed=41)
    a, b = pretrend_test(p), pretrend_test(p)
    assert a.statistic == b.statistic and a.p_value == b.p_value


# ---------------------------------------------------------------------------
# percent bias reduction
# ---------------------------------------------------------------------------


def test_percent_bias_reduction_values():
    assert percent_bias_reduction(0.0, 0.37) == pytest.approx(100.0)
    assert percent_bias_reduction(0.42, 0.42) == pytest.approx(0.0)
    assert percent_bias_reduction(-0.1, 0.2) == pytest.approx(150.0)
    assert percent_bias_reduction(0.4, 0.2) == pytest.approx(-100.0)
    assert math.isnan(percent_bias_reduction(0.1, 0.0))
