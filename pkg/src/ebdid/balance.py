"""Entropy balancing: comparison-group weights under moment constraints.

Solves ``min_w sum_i w_i log(w_i / q_i)`` over comparison units subject to
``sum_i w_i C_ij = target_j`` for every constraint column, ``sum_i w_i = 1``
and ``w_i > 0``, with uniform base weights ``q_i = 1/N_0``. The primal has
the closed form ``w_i(lambda) ~ q_i exp(-lambda' C_i)``; the solver runs
exact Newton iterations with backtracking on the smooth dual, falling back
to gradient steps whenever the Hessian (the weighted covariance of the
constraint columns) is singular.

Failure modes are typed: an unbounded dual means the targets lie outside
the convex hull of the comparison rows (:class:`InfeasibleTargets`, an
overlap failure); exhausting the iteration budget raises
:class:`NonConvergence`; collinear constraint columns raise
:class:`DegenerateConstraints`.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .trends import TrendMatrix


class BalanceError(Exception):
    """Base class for entropy-balancing failures."""


class NonConvergence(BalanceError):
    """Iteration budget exhausted; often signals a near-overlap failure."""


class InfeasibleTargets(BalanceError):
    """Targets outside the convex hull of comparison constraint rows.

    Balancing requires overlap: every treated unit's trend features must lie
    within the support of the comparison distribution. An unbounded dual is
    the numerical signature of that overlap failing.
    """


class DegenerateConstraints(BalanceError):
    """Collinear or otherwise rank-deficient constraint columns."""


@dataclass(frozen=True, eq=False)
class BalanceProblem:
    """Moment-constraint system for one balancing run.

    ``constraint_matrix`` has one row per comparison unit and one column per
    moment function; ``targets`` are the treated-group sample means of the
    same functions. ``column_labels`` records each column's provenance as
    ``(feature_name, moment_order)``.
    """

    constraint_matrix: np.ndarray
    targets: np.ndarray
    base_weights: np.ndarray
    column_labels: tuple
    n_treated: int
    dropped_labels: tuple = ()

    def __post_init__(self):
        C = np.asarray(self.constraint_matrix, dtype=float)
        t = np.asarray(self.targets, dtype=float)
        q = np.asarray(self.base_weights, dtype=float)
        object.__setattr__(self, "constraint_matrix", C)
        object.__setattr__(self, "targets", t)
        object.__setattr__(self, "base_weights", q)
        if C.ndim != 2 or C.shape[1] < 1:
            raise ValueError("constraint matrix must be N0 x J with J >= 1")
        if t.shape != (C.shape[1],):
            raise ValueError("targets length does not match constraint columns")
        if q.shape != (C.shape[0],):
            raise ValueError("base weights length does not match rows")
        if not np.isfinite(C).all() or not np.isfinite(t).all():
            raise ValueError("constraints and targets must be finite")
        if np.any(q <= 0) or abs(q.sum() - 1.0) > 1e-9:
            raise ValueError("base weights must be positive and sum to 1")

    @property
    def n_comparison(self) -> int:
        return self.constraint_matrix.shape[0]

    @property
    def n_constraints(self) -> int:
        return self.constraint_matrix.shape[1]


@dataclass(frozen=True, eq=False)
class BalanceWeights:
    """Solved weights plus the dual vector and convergence diagnostics."""

    comparison_weights: np.ndarray
    treated_weight: float
    dual: np.ndarray
    iterations: int
    max_violation: float
    max_violation_standardized: float
    dual_gradient_norm: float

    def diagnostics(self) -> dict:
        return {
            "iterations": self.iterations,
            "max_violation": self.max_violation,
            "max_violation_standardized": self.max_violation_standardized,
            "dual_gradient_norm": self.dual_gradient_norm,
            "dual": [float(v) for v in self.dual],
        }

    def diagnostics_json(self) -> str:
        return json.dumps(self.diagnostics())


@dataclass(frozen=True)
class SolverConfig:
    """Newton solver settings; the defaults define solver success."""

    tol: float = 1e-8
    max_iter: int = 200
    dual_bound: float = 1e6


def _moment_columns(values: np.ndarray, names, moment_orders):
    cols, labels = [], []
    for order in sorted(moment_orders):
        for j, name in enumerate(names):
            cols.append(values[:, j] ** order)
            labels.append((name, order))
    return np.column_stack(cols), labels


def build_constraints(
    trends_comparison: TrendMatrix,
    trends_treated: TrendMatrix,
    covariates_comparison: Optional[np.ndarray] = None,
    covariates_treated: Optional[np.ndarray] = None,
    covariate_names: Sequence[str] = (),
    moment_orders=(1,),
) -> BalanceProblem:
    """Assemble the constraint matrix and treated-group targets.

    One column per (trend feature, moment order) and per (covariate, moment
    order), with first moments ``h(z) = z`` and raw second moments
    ``h(z) = z^2``. Comparison-group columns with zero variance are dropped
    with a warning when they already equal the target, and are an
    infeasibility error otherwise.
    """
    orders = sorted(set(int(m) for m in moment_orders))
    if not orders or not set(orders) <= {1, 2}:
        raise ValueError("moment_orders must be a non-empty subset of {1, 2}")
    if trends_comparison.kind != trends_treated.kind:
        raise ValueError(
            f"trend kinds differ: {trends_comparison.kind} vs {trends_treated.kind}"
        )
    if trends_comparison.order != trends_treated.order:
        raise ValueError("trend matrices have different numbers of features")

    comp_vals = trends_comparison.features
    treat_vals = trends_treated.features
    names = [f"{trends_comparison.kind}:{n}" for n in trends_comparison.feature_names]

    if (covariates_comparison is None) != (covariates_treated is None):
        raise ValueError("covariates must be supplied for both groups or neither")
    if covariates_comparison is not None:
        Zc = np.asarray(covariates_comparison, dtype=float)
        Zt = np.asarray(covariates_treated, dtype=float)
        if Zc.ndim != 2 or Zt.ndim != 2 or Zc.shape[1] != Zt.shape[1]:
            raise ValueError("covariate matrices must be 2-D with equal columns")
        if Zc.shape[0] != comp_vals.shape[0] or Zt.shape[0] != treat_vals.shape[0]:
            raise ValueError("covariate rows do not match trend rows")
        cov_names = list(covariate_names) or [
            f"covariate_{j + 1}" for j in range(Zc.shape[1])
        ]
        if len(cov_names) != Zc.shape[1]:
            raise ValueError("covariate_names do not match covariate columns")
        comp_vals = np.hstack([comp_vals, Zc])
        treat_vals = np.hstack([treat_vals, Zt])
        names = names + cov_names

    C, labels = _moment_columns(comp_vals, names, orders)
    T, _ = _moment_columns(treat_vals, names, orders)
    targets = T.mean(axis=0)

    keep, dropped = [], []
    for j in range(C.shape[1]):
        if np.ptp(C[:, j]) == 0.0:
            const = C[0, j]
            if abs(const - targets[j]) <= 1e-12 * max(1.0, abs(const)):
                dropped.append(labels[j])
                warnings.warn(
                    f"dropping constant constraint column {labels[j]} "
                    "(already equal to its target)",
                    stacklevel=2,
                )
            else:
                raise InfeasibleTargets(
                    f"constraint column {labels[j]} is constant at {const} in the "
                    f"comparison group but targets {targets[j]}; no weights can "
                    "satisfy it (no overlap on this moment)"
                )
        else:
            keep.append(j)
    if not keep:
        raise DegenerateConstraints("all constraint columns are constant")

    n0 = C.shape[0]
    return BalanceProblem(
        constraint_matrix=C[:, keep],
        targets=targets[keep],
        base_weights=np.full(n0, 1.0 / n0),
        column_labels=tuple(labels[j] for j in keep),
        n_treated=treat_vals.shape[0],
        dropped_labels=tuple(dropped),
    )


def solve_entropy_balance(
    prob: BalanceProblem, cfg: SolverConfig = SolverConfig()
) -> BalanceWeights:
    """Solve the dual of the entropy-balancing program by exact Newton.

    Columns are standardized internally (treated mean 0, comparison SD 1)
    for conditioning; the returned dual vector is mapped back to the raw
    column scale, so ``w_i`` is proportional to
    ``q_i * exp(-dual @ C_i)`` elementwise.

    Raises
    ------
    DegenerateConstraints
        If the standardized columns are collinear.
    InfeasibleTargets
        If the dual diverges (targets outside the comparison convex hull).
    NonConvergence
        If the iteration budget is exhausted before the violation tolerance
        is met; usually a near-violation of overlap.
    """
    C = prob.constraint_matrix
    q = prob.base_weights
    sd = C.std(axis=0, ddof=1)
    if np.any(sd == 0):
        raise DegenerateConstraints("constant constraint column reached the solver")
    Cs = (C - prob.targets) / sd

    if np.linalg.matrix_rank(Cs) < Cs.shape[1]:
        raise DegenerateConstraints("collinear constraint columns")

    logq = np.log(q)
    lam = np.zeros(Cs.shape[1])

    def state(l):
        """Dual value, primal weights, and standardized residual at l."""
        eta = logq - Cs @ l
        m = eta.max()
        ew = np.exp(eta - m)
        z = ew.sum()
        w = ew / z
        return float(m + np.log(z)), w, w @ Cs

    phi, w, resid = state(lam)
    iterations = 0
    for it in range(cfg.max_iter + 1):
        if np.max(np.abs(resid)) <= cfg.tol:
            break
        if it == cfg.max_iter:
            raise NonConvergence(
                f"no convergence in {cfg.max_iter} iterations "
                f"(max standardized violation {np.max(np.abs(resid)):.3e}); "
                "this usually signals weak overlap between groups"
            )
        iterations = it + 1
        grad = -resid
        hess = (Cs * w[:, None]).T @ Cs - np.outer(resid, resid)
        if np.abs(hess).max() <= 1e-13:
            # Weights collapsed to a point mass with the constraint still
            # violated: the dual recedes linearly, i.e. the target sits
            # outside (or on the boundary of) the comparison support.
            raise InfeasibleTargets(
                "weights collapsed onto the support boundary before meeting "
                "the targets: treated moments lie outside the comparison "
                "group's convex hull (overlap failure)"
            )
        try:
            step = np.linalg.solve(hess, resid)
            if not np.isfinite(step).all() or grad @ step >= 0:
                step = resid
        except np.linalg.LinAlgError:
            step = resid  # gradient direction when the Hessian is singular

        if np.max(np.abs(resid)) <= 1e-5:
            # Inside the quadratic basin the dual decrease falls below the
            # evaluation noise of phi, so a phi-based line search would
            # stall; the pure Newton step contracts quadratically here.
            lam = lam + step
            phi, w, resid = state(lam)
            continue

        descent = grad @ step
        alpha = 1.0
        old_sup = np.max(np.abs(resid))
        cand_state = None
        for _ in range(60):
            cand_state = state(lam + alpha * step)
            if cand_state[0] <= phi + 1e-4 * alpha * descent:
                break
            if np.max(np.abs(cand_state[2])) <= 0.9 * old_sup:
                break
            alpha *= 0.5
        lam = lam + alpha * step
        phi, w, resid = cand_state
        if np.linalg.norm(lam) > cfg.dual_bound:
            raise InfeasibleTargets(
                "dual diverged: targets lie outside the convex hull of the "
                "comparison constraint rows (overlap failure; treated trend "
                "features are not covered by the comparison group)"
            )

    raw_resid = w @ C - prob.targets
    return BalanceWeights(
        comparison_weights=w,
        treated_weight=1.0 / prob.n_treated,
        dual=lam / sd,
        iterations=iterations,
        max_violation=float(np.max(np.abs(raw_resid))),
        max_violation_standardized=float(np.max(np.abs(resid))),
        dual_gradient_norm=float(np.linalg.norm(resid)),
    )


def check_balance(w, prob: BalanceProblem) -> np.ndarray:
    """Per-constraint residuals ``sum_i w_i C_ij - target_j``."""
    wv = np.asarray(getattr(w, "comparison_weights", w), dtype=float)
    if wv.shape != (prob.n_comparison,):
        raise ValueError("weight vector does not match comparison units")
    return wv @ prob.constraint_matrix - prob.targets


def effective_sample_size(w) -> float:
    """Kish effective sample size ``(sum w)^2 / sum w^2``.

    Equals the unit count under uniform weights and shrinks as the weights
    concentrate.
    """
    wv = np.asarray(getattr(w, "comparison_weights", w), dtype=float)
    if np.any(wv < 0):
        raise ValueError("weights must be non-negative")
    return float(wv.sum() ** 2 / (wv**2).sum())


def write_weights_csv(unit_ids, w, path) -> None:
    """Export comparison weights as ``unit,weight``."""
    wv = np.asarray(getattr(w, "comparison_weights", w), dtype=float)
    pd.DataFrame({"unit": np.asarray(unit_ids), "weight": wv}).to_csv(
        path, index=False
    )
