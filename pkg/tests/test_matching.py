import numpy as np
import pytest

from ebdid import generate_panel, pre_panel, scenario_spec
from ebdid.matching import match_nearest, match_weights, write_matches_csv
from ebdid.trends import POLYNOMIAL, TrendMatrix, polynomial_trends, split_trends


def tm(values, ids=None, kind=POLYNOMIAL):
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if values.shape[0] == 1:
        values = values.T
    if ids is None:
        ids = np.arange(values.shape[0])
    return TrendMatrix(
        unit_ids=np.asarray(ids), features=values, kind=kind, time_basis=np.arange(4.0)
    )


def test_nearest_unit_selected():
    ms = match_nearest(tm([0.0], ids=[10]), tm([0.0, 5.0], ids=[1, 2]), caliper_sd=0.2)
    assert ms.pairs == ((10, 1),)
    assert ms.unmatched_treated == ()
    assert ms.distances[0] == 0.0


def test_without_replacement_leaves_second_treated_unmatched():
    ms = match_nearest(tm([0.0, 0.0], ids=[1, 2]), tm([0.01], ids=[9]), caliper_sd=5.0)
    assert ms.n_pairs == 1
    assert ms.pairs[0] == (1, 9)
    assert ms.unmatched_treated == (2,)


def test_caliper_excludes_distant_units():
    # pooled sd of (0, 10) is large, but a tight caliper still blocks the pair
    ms = match_nearest(tm([0.0]), tm([10.0], ids=[5]), caliper_sd=0.2)
    assert ms.n_pairs == 0
    assert ms.unmatched_treated == (0,)


def test_injective_and_within_caliper_on_random_features():
    rng = np.random.default_rng(15)
    xt = rng.normal(0, 1, 60)
    xc = rng.normal(0.3, 1.2, 100)
    ms = match_nearest(tm(xt), tm(xc, ids=np.arange(100, 200)), caliper_sd=0.2)
    comp_used = [c for _, c in ms.pairs]
    assert len(comp_used) == len(set(comp_used))
    assert ms.n_pairs + len(ms.unmatched_treated) == 60
    pooled_sd = np.concatenate([xt, xc]).std(ddof=1)
    assert np.all(ms.distances <= 0.2 * pooled_sd + 1e-12)
    assert ms.caliper_bound == pytest.approx(0.2 * pooled_sd)


def test_determinism():
    rng = np.random.default_rng(16)
    xt, xc = rng.normal(size=30), rng.normal(size=50)
    a = match_nearest(tm(xt), tm(xc))
    b = match_nearest(tm(xt), tm(xc))
    assert a.pairs == b.pairs and a.unmatched_treated == b.unmatched_treated


def test_greedy_order_is_ascending_treated_id():
    # Both treated units prefer comparison 0; the smaller treated id wins it.
    ms = match_nearest(
        tm([1.0, 1.0], ids=[2, 1]), tm([1.0, 1.4], ids=[0, 1]), caliper_sd=3.0
    )
    assert dict(ms.pairs)[1] == 0
    assert dict(ms.pairs)[2] == 1


def test_multifeature_euclidean_standardized():
    rng = np.random.default_rng(17)
    xt = rng.normal(size=(20, 2))
    xc = rng.normal(size=(40, 2))
    ms = match_nearest(tm(xt), tm(xc, ids=np.arange(100, 140)), caliper_sd=0.2)
    assert ms.metric == "euclidean on standardized features"
    assert ms.caliper_bound == pytest.approx(0.2 * np.sqrt(2))
    comp_used = [c for _, c in ms.pairs]
    assert len(comp_used) == len(set(comp_used))


def test_no_overlap_scenario_match_failure():
    # Point-mass slopes 0.2 apart with small residual noise: the caliper of
    # 0.2 pooled SDs (~0.02) cannot bridge the group gap.
    spec = scenario_spec("scenario2", sigma2=0.01, rho=0.0)
    p = generate_panel(spec, seed=18)
    comparison, treated = split_trends(polynomial_trends(pre_panel(p), 1), p)
    pooled_sd = np.concatenate(
        [treated.features[:, 0], comparison.features[:, 0]]
    ).std(ddof=1)
    assert pooled_sd == pytest.approx(0.1, abs=0.02)
    ms = match_nearest(treated, comparison, caliper_sd=0.2)
    assert ms.n_pairs < 0.05 * treated.n_units
    assert len(ms.unmatched_treated) > 0.9 * treated.n_units


def test_match_weights_uniform_on_matched_units():
    spec = scenario_spec("scenario1", n0=40, n1=20, rho=0.5)
    p = generate_panel(spec, seed=19)
    comparison, treated = split_trends(polynomial_trends(pre_panel(p), 1), p)
    ms = match_nearest(treated, comparison, caliper_sd=1.5)
    assert ms.n_pairs > 0
    mw = match_weights(ms, p)
    w = mw.comparison_weights
    assert w.sum() == pytest.approx(1.0)
    matched = w > 0
    assert matched.sum() == ms.n_pairs
    assert np.allclose(w[matched], 1.0 / ms.n_pairs)
    assert mw.treated_mask.sum() == ms.n_pairs


def test_match_weights_rejects_empty_matchset():
    spec = scenario_spec("scenario2", sigma2=0.01, rho=0.0, n0=50, n1=20)
    p = generate_panel(spec, seed=20)
    comparison, treated = split_trends(polynomial_trends(pre_panel(p), 1), p)
    ms = match_nearest(treated, comparison, caliper_sd=1e-6)
    assert ms.n_pairs == 0
    with pytest.raises(ValueError, match="empty MatchSet"):
        match_weights(ms, p)


def test_pair_csv_export(tmp_path):
    ms = match_nearest(tm([0.0], ids=[3]), tm([0.1, 2.0], ids=[7, 8]), caliper_sd=2.0)
    path = tmp_path / "matches.csv"
    write_matches_csv(ms, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "treated_unit,comparison_unit,distance"
    assert lines[1].startswith("3,7,")
