import numpy as np
import pytest

from ebdid import load_panel, pre_panel
from ebdid.trends import (
    first_difference_trends,
    polynomial_trends,
    split_trends,
    write_trends_csv,
)

from conftest import long_rows


def panel_from(outcomes, times, t_e, group=None):
    outcomes = np.asarray(outcomes, dtype=float)
    if group is None:
        group = [1] + [0] * (outcomes.shape[0] - 1)
    p = load_panel(long_rows(outcomes, group=group, times=times), intervention_time=t_e)
    assert not isinstance(p, type(None))
    return p


def test_constant_series_has_zero_differences():
    p = panel_from([[3.0] * 5, [7.0] * 5], times=[1, 2, 3, 4, 5], t_e=5)
    tm = first_difference_trends(pre_panel(p))
    assert tm.features.shape == (2, 3)
    assert np.all(tm.features == 0)


def test_linear_series_differences():
    times = [1, 2, 3, 4, 5]
    y = [[2 * t for t in times], [2 * t + 1 for t in times]]
    p = panel_from(y, times=times, t_e=5)
    tm = first_difference_trends(pre_panel(p))
    assert np.allclose(tm.features, 2.0, atol=1e-12)


def test_unequal_spacing_divides_by_gap():
    p = panel_from([[1.0, 5.0, 9.0], [0.0, 0.0, 0.0]], times=[1, 3, 4], t_e=4)
    tm = first_difference_trends(pre_panel(p))
    # (5-1)/(3-1) = 2 over the wide gap
    assert tm.features[0, 0] == pytest.approx(2.0, abs=1e-14)


def test_first_differences_need_two_pre_periods(tiny_2x2=None):
    p = panel_from([[1.0, 2.0], [3.0, 4.0]], times=[1, 2], t_e=2)
    with pytest.raises(ValueError):
        first_difference_trends(pre_panel(p))


def test_noiseless_linear_slope_recovered_exactly():
    times = [1, 2, 3, 4, 5]
    y = [[3 + 0.5 * t for t in times], [1 - 0.1 * t for t in times]]
    p = panel_from(y, times=times, t_e=5)
    tm = polynomial_trends(pre_panel(p), order=1)
    assert tm.features[:, 0] == pytest.approx([0.5, -0.1], abs=1e-12)


def test_noiseless_quadratic_recovered_exactly():
    # Coefficients taken from the quadratic-heterogeneity preset means.
    times = [1, 2, 3, 4, 5]
    y = [
        [1 - 0.2 * t + 0.05 * t**2 for t in times],
        [0.5 + 0.3 * t - 0.02 * t**2 for t in times],
    ]
    p = panel_from(y, times=times, t_e=5)
    tm = polynomial_trends(pre_panel(p), order=2)
    assert tm.features[0] == pytest.approx([-0.2, 0.05], abs=1e-9)
    assert tm.features[1] == pytest.approx([0.3, -0.02], abs=1e-9)


def test_alternating_series_matches_normal_equations_oracle():
    pre_times = np.array([1.0, 2.0, 3.0, 4.0])
    y = np.array([0.0, 1.0, 0.0, 1.0])
    p = panel_from(
        [list(y) + [0.0], [0, 0, 0, 0, 0]], times=[1, 2, 3, 4, 5], t_e=5
    )
    tm = polynomial_trends(pre_panel(p), order=1)
    # independent oracle: solve the normal equations on the raw basis
    X = np.column_stack([np.ones(4), pre_times])
    oracle = np.linalg.solve(X.T @ X, X.T @ y)[1]
    assert oracle == pytest.approx(0.2)  # frozen: direct least squares on 4 points
    assert tm.features[0, 0] == pytest.approx(oracle, abs=1e-12)


@pytest.mark.parametrize("k_pre", [2, 3])
def test_slope_equals_mean_of_differences_small_grids(k_pre):
    # Plain-mean identity holds on equally spaced grids of 2 or 3 points.
    rng = np.random.default_rng(100 + k_pre)
    times = list(range(1, k_pre + 2))
    y = rng.normal(size=(6, k_pre + 1))
    p = panel_from(y, times=times, t_e=times[-1], group=[1, 1, 1, 0, 0, 0])
    pre = pre_panel(p)
    with np.errstate(all="raise"):
        slopes = polynomial_trends(pre, 1).features[:, 0]
        diffs = first_difference_trends(pre).features
    assert np.allclose(slopes, diffs.mean(axis=1), atol=1e-10)


def test_slope_is_weighted_mean_of_differences_k4():
    # On 4 equally spaced points the OLS slope weights the middle gap more:
    # weights proportional to m * (K - m) = (3, 4, 3).
    rng = np.random.default_rng(104)
    y = rng.normal(size=(5, 5))
    p = panel_from(y, times=[1, 2, 3, 4, 5], t_e=5, group=[1, 0, 0, 0, 0])
    pre = pre_panel(p)
    slopes = polynomial_trends(pre, 1).features[:, 0]
    diffs = first_difference_trends(pre).features
    w = np.array([3.0, 4.0, 3.0])
    assert np.allclose(slopes, diffs @ w / w.sum(), atol=1e-10)


def test_level_shift_leaves_features_unchanged():
    rng = np.random.default_rng(42)
    y = rng.normal(size=(4, 5))
    times = [1, 2, 3, 4, 5]
    p = panel_from(y, times=times, t_e=5, group=[1, 1, 0, 0])
    p_shift = panel_from(y + 11.5, times=times, t_e=5, group=[1, 1, 0, 0])
    for order in (1, 2):
        a = polynomial_trends(pre_panel(p), order).features
        b = polynomial_trends(pre_panel(p_shift), order).features
        assert np.allclose(a, b, atol=1e-9)
    a = first_difference_trends(pre_panel(p)).features
    b = first_difference_trends(pre_panel(p_shift)).features
    assert np.allclose(a, b, atol=1e-12)


def test_large_calendar_times_stay_conditioned():
    # Raw powers of years are ill-conditioned; the scaled basis must not care.
    times = [2014.0, 2015.0, 2016.0, 2017.0]
    y = [[5 + 0.25 * (t - 2014) - 0.03 * (t - 2014) ** 2 for t in times]] * 2
    p = panel_from(y, times=times, t_e=2017, group=[1, 0])
    tm = polynomial_trends(pre_panel(p), order=2)
    raw_lin = 0.25 - 0.03 * (-2 * 2014)
    raw_quad = -0.03
    assert tm.features[0] == pytest.approx([raw_lin, raw_quad], rel=1e-7)


def test_polynomial_needs_enough_pre_periods():
    p = panel_from([[1.0, 2.0, 3.0], [1, 1, 1]], times=[1, 2, 3], t_e=3)
    with pytest.raises(ValueError):
        polynomial_trends(pre_panel(p), order=2)
    with pytest.raises(ValueError):
        polynomial_trends(pre_panel(p), order=0)


def test_exact_interpolation_warns():
    p = panel_from([[1.0, 2.0, 5.0], [1, 1, 1]], times=[1, 2, 3], t_e=3)
    with pytest.warns(UserWarning, match="interpolate"):
        polynomial_trends(pre_panel(p), order=1)


def test_split_and_csv_export(tmp_path):
    rng = np.random.default_rng(7)
    y = rng.normal(size=(4, 4))
    p = panel_from(y, times=[1, 2, 3, 4], t_e=4, group=[1, 0, 1, 0])
    tm = first_difference_trends(pre_panel(p))
    comparison, treated = split_trends(tm, p)
    assert comparison.n_units == 2 and treated.n_units == 2
    assert np.array_equal(treated.unit_ids, p.treated_ids())

    path = tmp_path / "trends.csv"
    write_trends_csv(tm, path)
    header = path.read_text().splitlines()[0]
    assert header == "unit,feature_1,feature_2"
