"""Per-individual pre-intervention outcome trend estimation.

Two estimators of each individual's outcome trend over the pre-period:
consecutive first differences (nonparametric, one feature per gap) and
per-individual polynomial regression slopes (intercepts are discarded so
that only trends, never outcome levels, enter any balancing step).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .panel import Panel

FIRST_DIFFERENCE = "first_difference"
POLYNOMIAL = "polynomial"


@dataclass(frozen=True, eq=False)
class TrendMatrix:
    """Per-individual trend features, aligned to a panel's unit order.

    Attributes
    ----------
    unit_ids : ndarray, shape (N,)
    features : ndarray, shape (N, M)
        Trend estimates; column meanings depend on ``kind``.
    kind : str
        ``"first_difference"`` (M = K_pre - 1 consecutive slopes) or
        ``"polynomial"`` (M regression slope coefficients, intercept dropped).
    time_basis : ndarray
        The pre-intervention times the features were computed from.
    """

    unit_ids: np.ndarray
    features: np.ndarray
    kind: str
    time_basis: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "features", np.asarray(self.features, dtype=float))
        object.__setattr__(self, "unit_ids", np.asarray(self.unit_ids))
        object.__setattr__(self, "time_basis", np.asarray(self.time_basis, dtype=float))
        if self.kind not in (FIRST_DIFFERENCE, POLYNOMIAL):
            raise ValueError(f"unknown trend kind {self.kind!r}")
        if self.features.ndim != 2 or self.features.shape[1] < 1:
            raise ValueError("features must be N x M with M >= 1")
        if self.features.shape[0] != self.unit_ids.shape[0]:
            raise ValueError("unit_ids do not match feature rows")
        if not np.isfinite(self.features).all():
            raise ValueError("trend features must be finite")

    @property
    def n_units(self) -> int:
        return self.features.shape[0]

    @property
    def order(self) -> int:
        return self.features.shape[1]

    @property
    def feature_names(self) -> tuple:
        return tuple(f"feature_{m + 1}" for m in range(self.order))

    def restrict(self, mask: np.ndarray) -> "TrendMatrix":
        """Subset of units (used to split treated from comparison rows)."""
        return TrendMatrix(
            unit_ids=self.unit_ids[mask],
            features=self.features[mask],
            kind=self.kind,
            time_basis=self.time_basis,
        )


def split_trends(tm: TrendMatrix, p: Panel):
    """Split a trend matrix into (comparison, treated) halves of a panel."""
    if tm.n_units != p.n_units or not np.array_equal(tm.unit_ids, p.unit_ids):
        raise ValueError("trend matrix is not aligned to the panel's units")
    return tm.restrict(p.comparison_mask), tm.restrict(p.treated_mask)


def _pre_block(p: Panel):
    mask = p.pre_mask
    k_pre = int(mask.sum())
    return p.times[mask], p.outcomes[:, mask], k_pre


def first_difference_trends(pre: Panel) -> TrendMatrix:
    """Consecutive slopes of each individual's pre-period outcome series.

    Feature m is ``(y(t_m) - y(t_{m-1})) / (t_m - t_{m-1})`` over the
    pre-intervention times, so unequal spacing is handled by construction.
    Requires at least two pre-periods.
    """
    t, y, k_pre = _pre_block(pre)
    if k_pre < 2:
        raise ValueError("first differences need at least 2 pre-periods")
    dt = np.diff(t)
    feats = np.diff(y, axis=1) / dt
    return TrendMatrix(
        unit_ids=pre.unit_ids, features=feats, kind=FIRST_DIFFERENCE, time_basis=t
    )


def _scaled_basis_change(t: np.ndarray, order: int):
    """Centered and scaled time powers, with the map back to raw powers.

    Fitting on s = (t - c)/h keeps the design well conditioned for large
    calendar times; the returned matrix T satisfies raw = T @ scaled for
    full coefficient vectors (including the intercept).
    """
    c = t.mean()
    h = (t.max() - t.min()) / 2 or 1.0
    s = (t - c) / h
    design = np.vander(s, order + 1, increasing=True)
    change = np.zeros((order + 1, order + 1))
    base = np.array([-c / h, 1.0 / h])
    for k in range(order + 1):
        powk = np.polynomial.polynomial.polypow(base, k) if k else np.array([1.0])
        change[: k + 1, k] = powk
    return design, change


def polynomial_trends(pre: Panel, order: int) -> TrendMatrix:
    """Per-individual OLS slope coefficients of outcome on time powers.

    Fits each individual's pre-period series on ``{1, t, ..., t^order}`` and
    keeps the slope coefficients; the intercept is discarded because
    balancing it would balance outcome levels rather than trends. Requires
    ``K_pre >= order + 1``; equality is allowed (exact interpolation) but
    produces maximally noisy features, so a warning is issued.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    t, y, k_pre = _pre_block(pre)
    if k_pre < order + 1:
        raise ValueError(
            f"polynomial trends of order {order} need at least "
            f"{order + 1} pre-periods, panel has {k_pre}"
        )
    if k_pre == order + 1:
        warnings.warn(
            "order + 1 pre-periods: per-individual fits interpolate exactly "
            "and the trend features carry no noise averaging",
            stacklevel=2,
        )
    design, change = _scaled_basis_change(t, order)
    scaled, *_ = np.linalg.lstsq(design, y.T, rcond=None)
    raw = change @ scaled
    return TrendMatrix(
        unit_ids=pre.unit_ids,
        features=raw[1:].T,
        kind=POLYNOMIAL,
        time_basis=t,
    )


def write_trends_csv(tm: TrendMatrix, path) -> None:
    """Export as ``unit,feature_1..feature_M`` for overlap plotting."""
    frame = pd.DataFrame(tm.features, columns=list(tm.feature_names))
    frame.insert(0, "unit", tm.unit_ids)
    frame.to_csv(path, index=False)
