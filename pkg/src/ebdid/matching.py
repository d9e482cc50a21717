"""Nearest-neighbor matching on trend features, the benchmark comparator.

Greedy 1:1 matching without replacement with a caliper expressed in
standard-deviation units: treated units are processed in ascending unit-id
order and each takes its nearest still-unmatched comparison unit, provided
the distance is inside the caliper. For a single trend feature the distance
is the absolute difference and the caliper bound is
``caliper_sd * SD(pooled features)``. For several features (an extension;
the benchmark itself matches on the single estimated linear trend) the
distance is Euclidean on features standardized by pooled SD, with bound
``caliper_sd * sqrt(M)``, which reduces to the single-feature rule at M=1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .panel import Panel
from .trends import TrendMatrix


@dataclass(frozen=True, eq=False)
class MatchSet:
    """Treated-to-comparison pairs plus the units that found no match."""

    pairs: tuple  # of (treated_id, comparison_id)
    distances: np.ndarray
    unmatched_treated: tuple
    caliper_sd: float
    caliper_bound: float
    metric: str

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "treated_unit": [p[0] for p in self.pairs],
                "comparison_unit": [p[1] for p in self.pairs],
                "distance": self.distances,
            }
        )


def write_matches_csv(ms: MatchSet, path) -> None:
    """Export the pair list as ``treated_unit,comparison_unit,distance``."""
    ms.to_frame().to_csv(path, index=False)


def _pooled_sd(x_treated: np.ndarray, x_comparison: np.ndarray) -> np.ndarray:
    pooled = np.concatenate([x_treated, x_comparison], axis=0)
    return pooled.std(axis=0, ddof=1)


def match_nearest(
    trends_treated: TrendMatrix,
    trends_comparison: TrendMatrix,
    caliper_sd: float = 0.2,
) -> MatchSet:
    """Greedy caliper matching of treated to comparison trend features.

    Deterministic: treated units are visited in ascending id order; ties in
    distance resolve to the smaller comparison id. Unmatched treated units
    are reported, never fatal.
    """
    if caliper_sd <= 0:
        raise ValueError("caliper_sd must be positive")
    if trends_treated.kind != trends_comparison.kind:
        raise ValueError("trend kinds differ between groups")
    if trends_treated.order != trends_comparison.order:
        raise ValueError("trend feature counts differ between groups")

    xt = trends_treated.features
    xc = trends_comparison.features
    m = xt.shape[1]
    sd = _pooled_sd(xt, xc)

    if m == 1:
        bound = caliper_sd * float(sd[0])
        vt = xt[:, 0]
        vc = xc[:, 0]
        metric = "absolute difference"
    else:
        safe_sd = np.where(sd == 0, 1.0, sd)
        vt = xt / safe_sd
        vc = xc / safe_sd
        bound = caliper_sd * np.sqrt(m)
        metric = "euclidean on standardized features"

    treated_order = np.argsort(trends_treated.unit_ids, kind="stable")
    comp_ids = trends_comparison.unit_ids

    pairs, dists, unmatched = [], [], []
    if m == 1:
        comp_order = np.lexsort((comp_ids, vc))
        sorted_vals = vc[comp_order].tolist()  # plain floats: the scan is a Python loop
        sorted_ids = comp_ids[comp_order].tolist()
        n_comp = len(sorted_vals)
        used = bytearray(n_comp)
        positions = np.searchsorted(vc[comp_order], vt[treated_order]).tolist()
        treated_ids = trends_treated.unit_ids[treated_order].tolist()
        treated_vals = vt[treated_order].tolist()

        for x, pos, tid in zip(treated_vals, positions, treated_ids):
            left = pos - 1
            while left >= 0 and used[left]:
                left -= 1
            right = pos
            while right < n_comp and used[right]:
                right += 1
            best, best_d = None, np.inf
            if left >= 0:
                best, best_d = left, abs(sorted_vals[left] - x)
            if right < n_comp:
                d = abs(sorted_vals[right] - x)
                if (
                    best is None
                    or d < best_d
                    or (d == best_d and sorted_ids[right] < sorted_ids[best])
                ):
                    best, best_d = right, d
            if best is None or best_d > bound:
                unmatched.append(tid)
                continue
            used[best] = 1
            pairs.append((tid, sorted_ids[best]))
            dists.append(best_d)
    else:
        available = np.ones(len(vc), dtype=bool)
        for ti in treated_order:
            if not available.any():
                unmatched.append(trends_treated.unit_ids[ti])
                continue
            d = np.linalg.norm(vc - vt[ti], axis=1)
            d = np.where(available, d, np.inf)
            best = int(np.argmin(d))  # argmin takes the first, so smaller index wins ties
            if d[best] > bound:
                unmatched.append(trends_treated.unit_ids[ti])
                continue
            available[best] = False
            pairs.append((trends_treated.unit_ids[ti], comp_ids[best]))
            dists.append(float(d[best]))

    return MatchSet(
        pairs=tuple(pairs),
        distances=np.asarray(dists, dtype=float),
        unmatched_treated=tuple(unmatched),
        caliper_sd=caliper_sd,
        caliper_bound=float(bound),
        metric=metric,
    )


@dataclass(frozen=True, eq=False)
class MatchWeights:
    """Weights that let the DD estimator consume a matched sample.

    Matched comparison units share uniform weights summing to one; unmatched
    comparison units get zero. ``treated_mask`` restricts the treated side
    to matched units, so the DD runs on pairs only (a local effect when
    units drop, which the fit reports through its counts).
    """

    comparison_weights: np.ndarray
    treated_mask: np.ndarray
    n_pairs: int


def match_weights(ms: MatchSet, p: Panel) -> MatchWeights:
    """Turn a match set into panel-aligned weights for weighted DD."""
    if ms.n_pairs == 0:
        raise ValueError("empty MatchSet: no pairs to weight")
    comp_ids = list(p.comparison_ids())
    treat_ids = list(p.treated_ids())
    comp_index = {u: i for i, u in enumerate(comp_ids)}
    treat_index = {u: i for i, u in enumerate(treat_ids)}

    w = np.zeros(len(comp_ids))
    tmask = np.zeros(len(treat_ids), dtype=bool)
    for treated_unit, comparison_unit in ms.pairs:
        if treated_unit not in treat_index or comparison_unit not in comp_index:
            raise ValueError("MatchSet does not correspond to this panel")
        w[comp_index[comparison_unit]] = 1.0
        tmask[treat_index[treated_unit]] = True
    w /= w.sum()
    return MatchWeights(comparison_weights=w, treated_mask=tmask, n_pairs=ms.n_pairs)
