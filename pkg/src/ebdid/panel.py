"""Balanced long-format panel data: loading, validation, and group summaries.

The :class:`Panel` is the carrier every other module consumes. It holds one
outcome series per individual on a common, strictly increasing time grid,
a binary intervention indicator per individual, and optional time-invariant
baseline covariates. Panels are immutable after construction and safe to
share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd

PANEL_COLUMNS = ("unit", "time", "group", "outcome")


@dataclass(frozen=True)
class ValidationIssue:
    """One structured problem found while assembling a panel."""

    code: str
    message: str
    unit: object = None
    time: object = None

    def __str__(self) -> str:
        return self.message


@dataclass
class ValidationReport:
    """Errors, warnings, and basic counts from panel validation.

    A :class:`Panel` is only constructed when ``errors`` is empty; otherwise
    the report itself is returned to the caller.
    """

    errors: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    counts: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.errors

    def add_error(self, code: str, message: str, unit=None, time=None) -> None:
        self.errors.append(ValidationIssue(code, message, unit=unit, time=time))

    def add_warning(self, code: str, message: str, unit=None, time=None) -> None:
        self.warnings.append(ValidationIssue(code, message, unit=unit, time=time))


@dataclass(frozen=True, eq=False)
class Panel:
    """A balanced individual-by-time outcome panel.

    Parameters
    ----------
    unit_ids : ndarray, shape (N,)
        Opaque individual identifiers, in a fixed deterministic order.
    group : ndarray of int, shape (N,)
        Binary intervention indicator per individual (1 = intervention).
    times : ndarray of float, shape (K,)
        Strictly increasing observation times.
    intervention_time : float
        First post-intervention time t_e. Times ``t >= t_e`` are post-period.
        Must satisfy ``times[0] < t_e``; a panel may have zero post-period
        times (the output of :func:`pre_panel`).
    outcomes : ndarray, shape (N, K)
        Outcome value for each individual at each time.
    covariates : ndarray, shape (N, p), optional
        Time-invariant baseline covariates.
    covariate_names : tuple of str
        Column names for ``covariates``.
    validation : ValidationReport, optional
        The report produced when this panel was loaded.
    """

    unit_ids: np.ndarray
    group: np.ndarray
    times: np.ndarray
    intervention_time: float
    outcomes: np.ndarray
    covariates: Optional[np.ndarray] = None
    covariate_names: tuple = ()
    validation: Optional[ValidationReport] = None

    def __post_init__(self):
        object.__setattr__(self, "unit_ids", np.asarray(self.unit_ids))
        object.__setattr__(self, "group", np.asarray(self.group, dtype=np.int8))
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "outcomes", np.asarray(self.outcomes, dtype=float))
        if self.covariates is not None:
            object.__setattr__(
                self, "covariates", np.asarray(self.covariates, dtype=float)
            )
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))

        n, k = self.outcomes.shape
        if self.unit_ids.shape != (n,):
            raise ValueError("unit_ids length does not match outcomes rows")
        if self.group.shape != (n,):
            raise ValueError("group length does not match outcomes rows")
        if self.times.shape != (k,):
            raise ValueError("times length does not match outcomes columns")
        if k < 1:
            raise ValueError("panel needs at least one time")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isin(self.group, (0, 1))):
            raise ValueError("group must be binary 0/1")
        if not (self.group == 1).any() or not (self.group == 0).any():
            raise ValueError("both groups must be non-empty")
        if not np.isfinite(self.outcomes).all():
            raise ValueError("outcomes must be finite")
        if not self.times[0] < self.intervention_time:
            raise ValueError("intervention_time must exceed the first time")
        if self.covariates is not None:
            if self.covariates.shape[0] != n:
                raise ValueError("covariates rows do not match units")
            if len(self.covariate_names) != self.covariates.shape[1]:
                raise ValueError("covariate_names do not match covariates columns")
            if not np.isfinite(self.covariates).all():
                raise ValueError("covariates must be finite")

    # -- shape and group helpers -------------------------------------------

    @property
    def n_units(self) -> int:
        return self.outcomes.shape[0]

    @property
    def k(self) -> int:
        return self.outcomes.shape[1]

    @property
    def pre_mask(self) -> np.ndarray:
        return self.times < self.intervention_time

    @property
    def post_mask(self) -> np.ndarray:
        return self.times >= self.intervention_time

    @property
    def k_pre(self) -> int:
        return int(self.pre_mask.sum())

    @property
    def k_post(self) -> int:
        return int(self.post_mask.sum())

    @property
    def pre_times(self) -> np.ndarray:
        return self.times[self.pre_mask]

    @property
    def post_times(self) -> np.ndarray:
        return self.times[self.post_mask]

    @property
    def treated_mask(self) -> np.ndarray:
        return self.group == 1

    @property
    def comparison_mask(self) -> np.ndarray:
        return self.group == 0

    @property
    def n_treated(self) -> int:
        return int(self.treated_mask.sum())

    @property
    def n_comparison(self) -> int:
        return int(self.comparison_mask.sum())

    def treated_ids(self) -> np.ndarray:
        return self.unit_ids[self.treated_mask]

    def comparison_ids(self) -> np.ndarray:
        return self.unit_ids[self.comparison_mask]

    def equals(self, other: "Panel") -> bool:
        """Exact (bitwise) equality of all panel contents."""
        if not isinstance(other, Panel):
            return False
        same = (
            np.array_equal(self.unit_ids, other.unit_ids)
            and np.array_equal(self.group, other.group)
            and np.array_equal(self.times, other.times)
            and self.intervention_time == other.intervention_time
            and np.array_equal(self.outcomes, other.outcomes)
            and self.covariate_names == other.covariate_names
        )
        if not same:
            return False
        if (self.covariates is None) != (other.covariates is None):
            return False
        if self.covariates is not None:
            return np.array_equal(self.covariates, other.covariates)
        return True


def _as_dataframe(rows) -> pd.DataFrame:
    if isinstance(rows, pd.DataFrame):
        return rows.copy()
    return pd.DataFrame(list(rows))


def load_panel(rows, intervention_time: float):
    """Assemble and validate a balanced panel from long-format records.

    Parameters
    ----------
    rows : DataFrame or iterable of mappings
        Long-format records with columns ``unit, time, group, outcome`` and
        optionally additional covariate columns. One row per unit-time.
    intervention_time : float
        First post-intervention time t_e; must satisfy t_1 < t_e <= t_K.

    Returns
    -------
    Panel or ValidationReport
        A panel when validation finds no errors, otherwise the report
        describing every problem found (missing cells name the unit and
        time, etc.). Warnings that do not block construction (for example
        fewer than two pre-periods) travel on ``panel.validation``.
    """
    report = ValidationReport()
    df = _as_dataframe(rows)

    missing_cols = [c for c in PANEL_COLUMNS if c not in df.columns]
    if missing_cols:
        report.add_error("missing_columns", f"missing columns: {missing_cols}")
        return report

    covariate_names = tuple(c for c in df.columns if c not in PANEL_COLUMNS)

    for col in ("time", "outcome", "group") + covariate_names:
        converted = pd.to_numeric(df[col], errors="coerce")
        bad = converted.isna() & df[col].notna()
        if bad.any() or df[col].isna().any():
            first = df.loc[bad | df[col].isna()].iloc[0]
            report.add_error(
                "non_numeric",
                f"column '{col}' has a non-numeric or missing value for "
                f"unit {first['unit']} at time {first['time']}",
                unit=first["unit"],
                time=first["time"],
            )
        df[col] = converted
    if report.errors:
        return report

    dup = df.duplicated(subset=["unit", "time"], keep=False)
    if dup.any():
        first = df.loc[dup].iloc[0]
        report.add_error(
            "duplicate_rows",
            f"duplicate rows for unit {first['unit']} at time {first['time']}",
            unit=first["unit"],
            time=first["time"],
        )
        return report

    times = np.sort(df["time"].unique())
    units = np.sort(df["unit"].unique())
    n, k = len(units), len(times)

    if not (times[0] < intervention_time <= times[-1]):
        report.add_error(
            "intervention_time",
            f"intervention_time {intervention_time} outside "
            f"({times[0]}, {times[-1]}]",
        )

    # Balanced-panel check: every unit at every time, no imputation.
    cell_index = pd.MultiIndex.from_product([units, times], names=["unit", "time"])
    observed = pd.MultiIndex.from_frame(df[["unit", "time"]])
    missing = cell_index.difference(observed)
    for unit, time in missing[:20]:
        report.add_error(
            "missing_cell",
            f"unit {unit} has no observation at time {time}",
            unit=unit,
            time=time,
        )
    if len(missing) > 20:
        report.add_error(
            "missing_cell", f"... and {len(missing) - 20} more missing cells"
        )

    per_unit_group = df.groupby("unit")["group"].nunique()
    for unit in per_unit_group.index[per_unit_group > 1]:
        report.add_error(
            "group_flip", f"unit {unit} changes group across times", unit=unit
        )
    bad_group = ~df["group"].isin((0, 1))
    if bad_group.any():
        first = df.loc[bad_group].iloc[0]
        report.add_error(
            "non_binary_group",
            f"unit {first['unit']} has non-binary group value {first['group']}",
            unit=first["unit"],
        )

    if covariate_names:
        per_unit_cov = df.groupby("unit")[list(covariate_names)].nunique()
        varying = per_unit_cov.gt(1).any(axis=0)
        for name in varying.index[varying]:
            report.add_error(
                "covariate_varies", f"covariate '{name}' varies within a unit"
            )

    k_pre = int((times < intervention_time).sum())
    k_post = k - k_pre
    report.counts = {
        "n_comparison": int((df.groupby("unit")["group"].first() == 0).sum()),
        "n_treated": int((df.groupby("unit")["group"].first() == 1).sum()),
        "k_pre": k_pre,
        "k_post": k_post,
    }
    if report.counts["n_treated"] == 0:
        report.add_error("empty_group", "no treated units")
    if report.counts["n_comparison"] == 0:
        report.add_error("empty_group", "no comparison units")

    if report.errors:
        return report

    if k_pre < 2:
        report.add_warning(
            "few_pre_periods",
            "fewer than 2 pre-periods: trend estimation is unavailable, "
            "only the 2x2 design is identified",
        )
    elif k_pre < 3:
        report.add_warning(
            "few_pre_periods",
            "fewer than 3 pre-periods limits the polynomial trend order to 1",
        )

    wide = df.pivot(index="unit", columns="time", values="outcome")
    wide = wide.reindex(index=units, columns=times)
    group = df.groupby("unit")["group"].first().reindex(units).to_numpy(dtype=np.int8)

    covariates = None
    if covariate_names:
        covariates = (
            df.groupby("unit")[list(covariate_names)]
            .first()
            .reindex(units)
            .to_numpy(dtype=float)
        )

    return Panel(
        unit_ids=units,
        group=group,
        times=times,
        intervention_time=float(intervention_time),
        outcomes=wide.to_numpy(dtype=float),
        covariates=covariates,
        covariate_names=covariate_names,
        validation=report,
    )


def read_panel_csv(path, intervention_time: float):
    """Load a panel from the long-format CSV schema ``unit,time,group,outcome[,...]``."""
    # round_trip parsing so emit-then-reload reproduces outcomes bitwise
    return load_panel(
        pd.read_csv(path, float_precision="round_trip"), intervention_time
    )


def to_long_frame(p: Panel) -> pd.DataFrame:
    """Emit a panel back to the long format, one row per unit-time."""
    n, k = p.outcomes.shape
    data = {
        "unit": np.repeat(p.unit_ids, k),
        "time": np.tile(p.times, n),
        "group": np.repeat(p.group.astype(int), k),
        "outcome": p.outcomes.reshape(-1),
    }
    for j, name in enumerate(p.covariate_names):
        data[name] = np.repeat(p.covariates[:, j], k)
    return pd.DataFrame(data)


def write_panel_csv(p: Panel, path) -> None:
    """Write a panel in the long CSV schema; reloading reproduces it exactly.

    Float cells are rendered with shortest round-trip precision so parsing
    the file back yields bitwise-equal values.
    """
    frame = to_long_frame(p)
    out = frame.copy()
    for col in out.columns:
        if out[col].dtype == float:
            out[col] = out[col].map(lambda v: repr(float(v)))
    out.to_csv(path, index=False)


def pre_panel(p: Panel) -> Panel:
    """Restrict a panel to the pre-intervention times (t < t_e).

    The intervention time is carried along as metadata, so the result has
    zero post-period times. Idempotent; unit order, groups, and covariates
    are preserved.
    """
    mask = p.pre_mask
    if not mask.any():
        raise ValueError("panel has no pre-intervention times")
    if mask.all():
        return p
    return Panel(
        unit_ids=p.unit_ids,
        group=p.group,
        times=p.times[mask],
        intervention_time=p.intervention_time,
        outcomes=p.outcomes[:, mask],
        covariates=p.covariates,
        covariate_names=p.covariate_names,
        validation=p.validation,
    )


def _kish_ess(w: np.ndarray) -> float:
    w = np.asarray(w, dtype=float)
    return float(w.sum() ** 2 / (w**2).sum())


def balance_table(
    p: Panel,
    weights=None,
    covariates: Optional[Sequence[str]] = None,
    outcome_times: Optional[Sequence[float]] = None,
) -> pd.DataFrame:
    """Group means before and after weighting, plus effective sample sizes.

    Parameters
    ----------
    p : Panel
    weights : array-like or BalanceWeights-compatible, optional
        Comparison-unit weights aligned to ``p.comparison_ids()``. ``None``
        means uniform (the weighted column then equals the unweighted one).
    covariates : sequence of str, optional
        Covariate columns to tabulate; defaults to all.
    outcome_times : sequence of float, optional
        Times whose outcome levels to tabulate; defaults to all pre-periods.

    Returns
    -------
    DataFrame indexed by measure with columns
    ``treated, comparison, comparison_weighted``. The first row reports the
    Kish effective sample size of each column's weighting.
    """
    comp = p.comparison_mask
    treat = p.treated_mask

    w = getattr(weights, "comparison_weights", weights)
    if w is None:
        w = np.full(p.n_comparison, 1.0 / p.n_comparison)
    w = np.asarray(w, dtype=float)
    if w.shape != (p.n_comparison,):
        raise ValueError(
            f"weights length {w.shape} does not match "
            f"{p.n_comparison} comparison units"
        )
    w_norm = w / w.sum()

    if covariates is None:
        covariates = p.covariate_names
    unknown = [c for c in covariates if c not in p.covariate_names]
    if unknown:
        raise ValueError(f"unknown covariate columns: {unknown}")
    if outcome_times is None:
        outcome_times = list(p.pre_times)
    unknown_t = [t for t in outcome_times if t not in p.times]
    if unknown_t:
        raise ValueError(f"times not in panel: {unknown_t}")

    rows = {}
    rows["effective_sample_size"] = (
        float(p.n_treated),
        float(p.n_comparison),
        _kish_ess(w),
    )
    for name in covariates:
        col = p.covariates[:, p.covariate_names.index(name)]
        rows[name] = (
            float(col[treat].mean()),
            float(col[comp].mean()),
            float(w_norm @ col[comp]),
        )
    for t in outcome_times:
        col = p.outcomes[:, int(np.where(p.times == t)[0][0])]
        rows[f"outcome@{t:g}"] = (
            float(col[treat].mean()),
            float(col[comp].mean()),
            float(w_norm @ col[comp]),
        )

    return pd.DataFrame.from_dict(
        rows, orient="index", columns=["treated", "comparison", "comparison_weighted"]
    )
