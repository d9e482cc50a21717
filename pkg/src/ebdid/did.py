"""Weighted microlevel difference-in-differences estimation and inference.

The regression stacks one row per unit-time. Time enters either as a
polynomial (intercept plus powers of t) or nonparametrically (one fixed
effect per time, no separate intercept), alongside a group main effect and
the group-by-post interaction whose coefficient is the effect estimate.
Every row of a unit carries that unit's weight, following the conventions
of the standard weighting pipelines:

* unweighted: every row has weight 1 (plain OLS);
* balancing weights: treated rows have weight 1 and the comparison weights
  are normalized to sum to one (so rescaling them never changes the fit).
  The treated group's total weight therefore dominates, which is what lets
  a correctly specified polynomial time model keep the estimate unbiased
  even when the weights balanced noisy trend estimates;
* matched samples: every matched row has weight 1 and unmatched units drop.

Inference is a cluster-robust sandwich at the unit level, which covers
within-unit serial correlation.

Because the regressors vary only with group and time, all linear algebra
runs on two K x p per-group design blocks rather than the full stacked
matrix; results are identical to the stacked fit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import stats

from .panel import Panel

Z_95 = 1.96  # normal-approximation 95% interval


@dataclass(frozen=True)
class TimeSpec:
    """How common time effects enter the DD regression."""

    kind: str  # "polynomial" or "nonparametric"
    order: Optional[int] = None

    def __post_init__(self):
        if self.kind == "polynomial":
            if self.order is None or self.order < 1:
                raise ValueError("polynomial time needs order >= 1")
        elif self.kind == "nonparametric":
            if self.order is not None:
                raise ValueError("nonparametric time takes no order")
        else:
            raise ValueError(f"unknown time spec kind {self.kind!r}")

    @classmethod
    def polynomial(cls, order: int) -> "TimeSpec":
        return cls("polynomial", int(order))

    @classmethod
    def nonparametric(cls) -> "TimeSpec":
        return cls("nonparametric")

    @property
    def label(self) -> str:
        if self.kind == "polynomial":
            return f"poly{self.order}"
        return "nonparametric"

    @classmethod
    def from_label(cls, label: str) -> "TimeSpec":
        if label == "nonparametric":
            return cls.nonparametric()
        if label.startswith("poly"):
            return cls.polynomial(int(label[4:]))
        raise ValueError(f"unknown time spec label {label!r}")


@dataclass(frozen=True, eq=False)
class DidFit:
    """Point estimate, sandwich inference, and fit metadata."""

    tau_hat: float
    standard_error: float
    ci_low: float
    ci_high: float
    coefficients: dict
    weights_used: str
    n_treated: int
    n_comparison: int
    ess_comparison: float
    time_spec: str

    def to_dict(self) -> dict:
        return {
            "tau_hat": self.tau_hat,
            "standard_error": self.standard_error,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "coefficients": self.coefficients,
            "weights_used": self.weights_used,
            "n_treated": self.n_treated,
            "n_comparison": self.n_comparison,
            "ess_comparison": self.ess_comparison,
            "time_spec": self.time_spec,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def formatted(self, digits: int = 2) -> str:
        """Report-style ``estimate (low--high)`` rendering."""
        return (
            f"{self.tau_hat:.{digits}f} "
            f"({self.ci_low:.{digits}f}--{self.ci_high:.{digits}f})"
        )


@dataclass(frozen=True, eq=False)
class PretrendTest:
    """Joint Wald test that all pre-period group-by-time interactions are zero."""

    statistic: float
    df: int
    p_value: float
    interactions: dict

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "df": self.df,
            "p_value": self.p_value,
            "interactions": self.interactions,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _resolve_weights(p: Panel, weights):
    """Per-unit regression weights for (comparison, treated) rows."""
    if weights is None:
        return np.ones(p.n_comparison), np.ones(p.n_treated), "none"

    comp_w = np.asarray(
        getattr(weights, "comparison_weights", weights), dtype=float
    ).copy()
    if comp_w.shape != (p.n_comparison,):
        raise ValueError(
            f"weights cover {comp_w.shape[0]} units, panel has "
            f"{p.n_comparison} comparison units"
        )
    if np.any(comp_w < 0):
        raise ValueError("negative weights")
    total = comp_w.sum()
    if total <= 0:
        raise ValueError("comparison weights sum to zero")

    if hasattr(weights, "treated_mask"):
        # Matched sample: weight 1 on every matched row, drop the rest.
        treated_mask = np.asarray(weights.treated_mask, dtype=bool)
        if not treated_mask.any():
            raise ValueError("no treated units carry weight")
        n_pairs = treated_mask.sum()
        return comp_w * (n_pairs / total), treated_mask.astype(float), "match"

    label = "entropy" if hasattr(weights, "dual") else "custom"
    return comp_w / total, np.ones(p.n_treated), label


@lru_cache(maxsize=128)
def _group_blocks_cached(times_key: tuple, t_e: float, spec: TimeSpec):
    times = np.asarray(times_key)
    k = len(times)
    post = (times >= t_e).astype(float)
    if spec.kind == "polynomial":
        powers = [times**p for p in range(1, spec.order + 1)]
        base = np.column_stack([np.ones(k)] + powers)
        names = ["const"] + [f"t^{p}" for p in range(1, spec.order + 1)]
    else:
        if k < 2:
            raise ValueError("nonparametric time needs at least 2 times")
        base = np.eye(k)
        names = [f"mu@{t:g}" for t in times]
    blocks = {}
    for a in (0, 1):
        blocks[a] = np.column_stack([base, np.full(k, float(a)), float(a) * post])
    names = names + ["group", "group_post"]
    stacked = np.vstack([blocks[0], blocks[1]])
    if np.linalg.matrix_rank(stacked) < stacked.shape[1]:
        raise ValueError("rank-deficient design (collinear time/group columns)")
    return blocks, tuple(names)


def _group_blocks(times: np.ndarray, t_e: float, spec: TimeSpec):
    """K x p design block per group and the coefficient names (rank-checked)."""
    return _group_blocks_cached(tuple(float(t) for t in times), float(t_e), spec)


def _blockwise_wls(p: Panel, comp_w, treat_w, blocks):
    """WLS coefficients and unit-clustered sandwich on group-block designs."""
    n_params = blocks[0].shape[1]
    xtwx = np.zeros((n_params, n_params))
    xtwy = np.zeros(n_params)
    grp = {0: (p.comparison_mask, comp_w), 1: (p.treated_mask, treat_w)}
    for a, (mask, w) in grp.items():
        X = blocks[a]
        xtwx += w.sum() * (X.T @ X)
        xtwy += X.T @ (w @ p.outcomes[mask])

    beta = np.linalg.solve(xtwx, xtwy)

    bread = np.linalg.inv(xtwx)
    meat = np.zeros((n_params, n_params))
    n_clusters = 0
    for a, (mask, w) in grp.items():
        X = blocks[a]
        resid = p.outcomes[mask] - X @ beta  # one row per unit
        sq = resid.T @ (resid * (w**2)[:, None])
        meat += X.T @ sq @ X
        n_clusters += int((w > 0).sum())
    if n_clusters > 1:
        meat *= n_clusters / (n_clusters - 1)
    vcov = bread @ meat @ bread
    return beta, vcov, n_clusters


def fit_did(p: Panel, weights=None, spec: TimeSpec = TimeSpec.nonparametric()) -> DidFit:
    """Weighted least-squares DD fit with unit-clustered standard errors.

    Parameters
    ----------
    p : Panel
        Must contain at least one post-intervention time.
    weights : optional
        Comparison-unit weights: anything exposing ``comparison_weights``
        (solved balance weights, match weights) or a raw array aligned to
        ``p.comparison_ids()``. ``None`` runs the unweighted DD. Match
        weights restrict the treated side to matched units.
    spec : TimeSpec
        Polynomial or nonparametric common time effects.

    Returns
    -------
    DidFit
        The group-by-post coefficient, its cluster-robust standard error,
        and a 95% normal-approximation interval.
    """
    if p.k_post < 1:
        raise ValueError("panel has no post-intervention times")
    comp_w, treat_w, label = _resolve_weights(p, weights)
    blocks, names = _group_blocks(p.times, p.intervention_time, spec)
    beta, vcov, _ = _blockwise_wls(p, comp_w, treat_w, blocks)

    tau = float(beta[-1])
    se = float(math.sqrt(max(vcov[-1, -1], 0.0)))
    ess = float(comp_w.sum() ** 2 / (comp_w**2).sum())
    return DidFit(
        tau_hat=tau,
        standard_error=se,
        ci_low=tau - Z_95 * se,
        ci_high=tau + Z_95 * se,
        coefficients={n: float(b) for n, b in zip(names, beta)},
        weights_used=label,
        n_treated=int((treat_w > 0).sum()),
        n_comparison=int((comp_w > 0).sum()),
        ess_comparison=ess,
        time_spec=spec.label,
    )


def pretrend_test(p: Panel, weights=None) -> PretrendTest:
    """Wald test for a departure from parallel observed pre-period trends.

    Fits the pre-period data with nonparametric time, a group main effect,
    and group-by-time interactions (reference: earliest pre-period), then
    jointly tests the interactions with the unit-clustered covariance.
    The statistic is invariant to the reference-period choice.
    """
    from .panel import pre_panel

    if p.k_pre < 2:
        raise ValueError("pre-trend test needs at least 2 pre-periods")
    pre = pre_panel(p)
    comp_w, treat_w, _ = _resolve_weights(pre, weights)

    k = pre.k
    base = np.eye(k)
    names = [f"mu@{t:g}" for t in pre.times]
    inter = np.eye(k)[:, 1:]  # drop the earliest period as reference
    blocks = {}
    for a in (0, 1):
        blocks[a] = np.column_stack([base, np.full(k, float(a)), float(a) * inter])
    names = names + ["group"] + [f"group@{t:g}" for t in pre.times[1:]]

    beta, vcov, _ = _blockwise_wls(pre, comp_w, treat_w, blocks)

    q = k - 1
    theta = beta[-q:]
    v_theta = vcov[-q:, -q:]
    stat = float(theta @ np.linalg.solve(v_theta, theta))
    return PretrendTest(
        statistic=stat,
        df=q,
        p_value=float(stats.chi2.sf(stat, q)),
        interactions={n: float(b) for n, b in zip(names[-q:], theta)},
    )


def percent_bias_reduction(bias_weighted: float, bias_unweighted: float) -> float:
    """``100 * (1 - bias_weighted / bias_unweighted)``.

    Signed: values above 100 mean overcorrection, negative values mean the
    weighting amplified the bias. Undefined when the unweighted bias is
    exactly zero; returned as NaN (not applicable) rather than raising.
    """
    if bias_unweighted == 0:
        return math.nan
    return 100.0 * (1.0 - bias_weighted / bias_unweighted)
