"""Panel generation from the random-slope AR(1) family, plus analytic oracles.

Each individual's mean outcome is a polynomial in time with random
coefficients drawn per group, ``mu_it = b0 + b1 t + b2 t^2 + tau A I(t > K_pre)``,
and the errors around it are multivariate normal with a homoscedastic AR(1)
covariance. Times are coded 1..K with the first post-intervention time at
``K_pre + 1``, which keeps the additive effect indicator ``I(t > K_pre)``
and the estimators' post-period indicator ``t >= t_e`` in exact agreement.

``expected_did`` evaluates the expectation of a DD estimator in closed form
on the exact group mean series (the estimators are linear in the outcomes,
so the expectation equals the estimate computed from expected outcomes).
It deliberately builds its own design matrices rather than sharing the
estimation code, so it can serve as an independent oracle.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .did import TimeSpec
from .panel import Panel

SCENARIO_1 = "scenario1"
SCENARIO_2 = "scenario2"
SCENARIO_3 = "scenario3"
NULL_PARALLEL = "null_parallel"
VARIANCE_SWEEP = "variance_sweep"
SCENARIOS = (SCENARIO_1, SCENARIO_2, SCENARIO_3, NULL_PARALLEL, VARIANCE_SWEEP)


@dataclass(frozen=True, eq=False)
class DgpSpec:
    """Full parameterization of one simulated data generating process."""

    n0: int = 1000
    n1: int = 500
    k_pre: int = 4
    k_post: int = 1
    tau: float = 0.0
    nu0: np.ndarray = field(default_factory=lambda: np.zeros(3))
    nu1: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gamma0: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    gamma1: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    rho: float = 0.0
    sigma2: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "nu0", np.asarray(self.nu0, dtype=float))
        object.__setattr__(self, "nu1", np.asarray(self.nu1, dtype=float))
        object.__setattr__(self, "gamma0", np.asarray(self.gamma0, dtype=float))
        object.__setattr__(self, "gamma1", np.asarray(self.gamma1, dtype=float))
        if self.n0 < 1 or self.n1 < 1:
            raise ValueError("group sizes must be positive")
        if self.k_pre < 2 or self.k_post < 1:
            raise ValueError("need k_pre >= 2 and k_post >= 1")
        if not (0 <= self.rho < 1):
            raise ValueError("rho must lie in [0, 1)")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        for name in ("nu0", "nu1"):
            if getattr(self, name).shape != (3,):
                raise ValueError(f"{name} must have length 3")
        for name in ("gamma0", "gamma1"):
            g = getattr(self, name)
            if g.shape != (3, 3):
                raise ValueError(f"{name} must be 3x3")
            if not np.allclose(g, g.T):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(g).min() < -1e-10:
                raise ValueError(f"{name} must be positive semidefinite")

    @property
    def k(self) -> int:
        return self.k_pre + self.k_post

    @property
    def times(self) -> np.ndarray:
        return np.arange(1, self.k + 1, dtype=float)

    @property
    def intervention_time(self) -> float:
        return float(self.k_pre + 1)


_SCENARIO_PARAMS = {
    SCENARIO_1: dict(
        nu0=(0.0, 0.0, 0.0),
        nu1=(1.0, -0.2, 0.0),
        gamma0=np.diag([0.0, 0.2**2, 0.0]),
        gamma1=np.diag([0.0, 0.1**2, 0.0]),
    ),
    SCENARIO_2: dict(
        nu0=(0.0, -0.2, 0.0),
        nu1=(1.0, 0.0, 0.0),
        gamma0=np.zeros((3, 3)),
        gamma1=np.zeros((3, 3)),
    ),
    SCENARIO_3: dict(
        nu0=(0.0, 0.0, 0.0),
        nu1=(1.0, -0.2, 0.05),
        gamma0=np.array(
            [
                [1.0, 0.1, -0.04],
                [0.1, 0.2**2, -0.0075],
                [-0.04, -0.0075, 0.05**2],
            ]
        ),
        gamma1=np.array(
            [
                [1.0, 0.05, -0.02],
                [0.05, 0.1**2, -0.001875],
                [-0.02, -0.001875, 0.025**2],
            ]
        ),
    ),
    # Same counterfactual trend distribution in both groups (levels differ):
    # the unweighted DD is already unbiased and weighting must not hurt.
    NULL_PARALLEL: dict(
        nu0=(0.0, 0.0, 0.0),
        nu1=(1.0, 0.0, 0.0),
        gamma0=np.diag([0.0, 0.2**2, 0.0]),
        gamma1=np.diag([0.0, 0.2**2, 0.0]),
    ),
}


def scenario_spec(scenario: str, **overrides) -> DgpSpec:
    """Preset DGP for a named scenario, with keyword overrides.

    ``variance_sweep`` is the overlap scenario held at rho = 0.5 with the
    error variance meant to be overridden, for reliability sweeps.
    """
    key = scenario.lower()
    if key == VARIANCE_SWEEP:
        base = dict(_SCENARIO_PARAMS[SCENARIO_1], rho=0.5)
    elif key in _SCENARIO_PARAMS:
        base = dict(_SCENARIO_PARAMS[key])
    else:
        raise ValueError(f"unknown scenario {scenario!r}; one of {SCENARIOS}")
    base.update(overrides)
    return DgpSpec(**base)


def ar1_covariance(k: int, rho: float, sigma2: float) -> np.ndarray:
    """Homoscedastic AR(1) covariance ``sigma2 * rho**|s-t|`` (K x K)."""
    if not (0 <= rho < 1):
        raise ValueError("rho must lie in [0, 1)")
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    idx = np.arange(k)
    return sigma2 * rho ** np.abs(idx[:, None] - idx[None, :])


def _psd_factor(g: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(g)
    vals = np.clip(vals, 0.0, None)
    return vecs * np.sqrt(vals)


def generate_panel(spec: DgpSpec, seed: Union[int, np.random.SeedSequence]) -> Panel:
    """Draw one balanced panel; bit-identical for a given (spec, seed).

    Comparison units come first (ids ``0..n0-1``), treated after
    (``n0..n0+n1-1``). The intervention effect enters additively after all
    random draws, so panels generated with different ``tau`` from the same
    seed differ only on treated post-period cells, by exactly ``tau``.
    """
    rng = np.random.default_rng(seed)
    t = spec.times
    basis = np.column_stack([np.ones_like(t), t, t**2])

    beta0 = spec.nu0 + rng.standard_normal((spec.n0, 3)) @ _psd_factor(spec.gamma0).T
    beta1 = spec.nu1 + rng.standard_normal((spec.n1, 3)) @ _psd_factor(spec.gamma1).T
    beta = np.vstack([beta0, beta1])

    chol = np.linalg.cholesky(ar1_covariance(spec.k, spec.rho, spec.sigma2))
    errors = rng.standard_normal((spec.n0 + spec.n1, spec.k)) @ chol.T

    group = np.concatenate(
        [np.zeros(spec.n0, dtype=np.int8), np.ones(spec.n1, dtype=np.int8)]
    )
    mu = beta @ basis.T
    post = t > spec.k_pre
    mu[group == 1] += spec.tau * post

    return Panel(
        unit_ids=np.arange(spec.n0 + spec.n1),
        group=group,
        times=t,
        intervention_time=spec.intervention_time,
        outcomes=mu + errors,
        covariates=None,
    )


def _mean_series(spec: DgpSpec, balanced: bool):
    """Exact E[y | A, t] series for both groups (treated includes tau)."""
    t = spec.times
    basis = np.column_stack([np.ones_like(t), t, t**2])
    m1 = basis @ spec.nu1 + spec.tau * (t > spec.k_pre)
    if balanced:
        # Oracle-balanced weights equate the comparison trend components
        # (slope and curvature) to the treated ones; levels stay its own.
        nu_w = np.array([spec.nu0[0], spec.nu1[1], spec.nu1[2]])
    else:
        nu_w = spec.nu0
    m0 = basis @ nu_w
    return m1, m0


def expected_did(
    spec: DgpSpec, time_spec: TimeSpec, weights: Optional[str] = None
) -> float:
    """Expectation of the DD estimate under the DGP, in closed form.

    Evaluates the regression's normal equations on the exact group mean
    series, with each group-time cell carrying the estimator's total row
    weight for that cell: group sizes for the unweighted estimator, and
    the treated size against a unit total for balancing weights.
    ``weights=None`` is the unweighted estimator; ``"balanced"`` models
    ideal trend-balancing weights (comparison slope and curvature replaced
    by the treated values). The true bias of an estimator is
    ``expected_did(...) - spec.tau``.
    """
    if weights not in (None, "balanced"):
        raise ValueError("weights must be None or 'balanced'")
    m1, m0 = _mean_series(spec, balanced=weights == "balanced")
    cell_w = {1: float(spec.n1), 0: float(spec.n0) if weights is None else 1.0}

    t = spec.times
    k = spec.k
    post = (t > spec.k_pre).astype(float)
    if time_spec.kind == "polynomial":
        time_cols = [np.ones(k)] + [t**p for p in range(1, time_spec.order + 1)]
    else:
        time_cols = [np.eye(k)[:, j] for j in range(k)]
    rows, y, w = [], [], []
    for a, series in ((0, m0), (1, m1)):
        for j in range(k):
            rows.append(
                [col[j] for col in time_cols] + [float(a), float(a) * post[j]]
            )
            y.append(series[j])
            w.append(cell_w[a])
    X = np.asarray(rows)
    y = np.asarray(y)
    sw = np.sqrt(np.asarray(w))
    coef, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    return float(coef[-1])


def trend_reliability(spec: DgpSpec, trend_kind: str = "linear") -> float:
    """Share of estimated-slope variance that is true between-unit variance.

    ``between / (between + within)`` where between is the comparison group's
    true slope variance and within is the sampling variance of the
    per-individual OLS slope over the pre-period under the AR(1) error
    covariance (``a' Sigma a`` for the slope-extracting functional ``a``).
    Zero between-unit variance yields 0 by convention, with a warning.
    """
    if trend_kind not in ("linear", "polynomial1"):
        raise ValueError("reliability is defined for the linear trend estimator")
    between = float(spec.gamma0[1, 1])
    t = spec.times[: spec.k_pre]
    X = np.column_stack([np.ones_like(t), t])
    a = np.linalg.solve(X.T @ X, X.T)[1]
    sigma = ar1_covariance(spec.k_pre, spec.rho, spec.sigma2)
    within = float(a @ sigma @ a)
    if between == 0.0:
        warnings.warn(
            "no between-individual slope variance: reliability is 0 by convention",
            stacklevel=2,
        )
        return 0.0
    return between / (between + within)


def with_rho(spec: DgpSpec, rho: float) -> DgpSpec:
    """Copy of a spec at a different autocorrelation."""
    return replace(spec, rho=rho)
