"""Experiment orchestration: simulation grids, bias reports, panel analysis.

An experiment is one JSON config: a scenario plus overrides, an
autocorrelation grid, a replication count, a seed, and a list of estimator
arms (balancing method x trend features x time spec). Each replication
draws one panel per grid point from its own seed substream, so results are
reproducible regardless of how many worker threads run and aggregation is
order-independent. Per-panel, every arm sees the same draw, which is what
makes the percent-bias-reduction comparisons paired.

The real-data workflow (``analyze_panel``) mirrors the report tables: a
balance table, an overlap summary with histogram counts, pre-trend tests
before and after weighting, and DD estimates before and after weighting.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from .balance import (
    BalanceError,
    build_constraints,
    effective_sample_size,
    solve_entropy_balance,
)
from .did import TimeSpec, fit_did, percent_bias_reduction, pretrend_test
from .matching import match_nearest, match_weights
from .panel import Panel, balance_table, pre_panel, read_panel_csv
from .simulate import DgpSpec, scenario_spec, trend_reliability
from .simulate import generate_panel
from .trends import first_difference_trends, polynomial_trends, split_trends

TREND_KINDS = ("linear", "quadratic", "first_differences")
BALANCE_METHODS = ("none", "entropy", "match")
REPORT_COLUMNS = (
    "arm",
    "time_spec",
    "rho",
    "mean_bias",
    "mc_se",
    "pbr",
    "reliability",
    "fail_rate",
)


class ConfigError(Exception):
    """Malformed or inconsistent experiment/analysis configuration."""


class ExperimentError(Exception):
    """A hard numerical failure: an arm failed in every replication."""


def _estimate_trends(pre: Panel, kind: str):
    if kind == "linear":
        return polynomial_trends(pre, 1)
    if kind == "quadratic":
        return polynomial_trends(pre, 2)
    if kind == "first_differences":
        return first_difference_trends(pre)
    raise ConfigError(f"unknown trend kind {kind!r}; one of {TREND_KINDS}")


@dataclass(frozen=True)
class Arm:
    """One estimator: balancing method, trend features, and time spec."""

    balance: str
    time: str
    trend: Optional[str] = None
    moments: tuple = (1,)
    caliper_sd: float = 0.2

    def __post_init__(self):
        if self.balance not in BALANCE_METHODS:
            raise ConfigError(f"unknown balance method {self.balance!r}")
        if self.balance != "none":
            if self.trend not in TREND_KINDS:
                raise ConfigError(
                    f"arm with balance {self.balance!r} needs a trend kind"
                )
        TimeSpec.from_label(self.time)
        object.__setattr__(self, "moments", tuple(int(m) for m in self.moments))

    @property
    def label(self) -> str:
        if self.balance == "none":
            return "none"
        return f"{self.balance}-{self.trend}"

    @property
    def time_spec(self) -> TimeSpec:
        return TimeSpec.from_label(self.time)

    def to_dict(self) -> dict:
        out = {"balance": self.balance, "time": self.time}
        if self.balance != "none":
            out["trend"] = self.trend
        if self.balance == "entropy":
            out["moments"] = list(self.moments)
        if self.balance == "match":
            out["caliper_sd"] = self.caliper_sd
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Arm":
        return cls(
            balance=d.get("balance", "none"),
            time=d.get("time", "nonparametric"),
            trend=d.get("trend"),
            moments=tuple(d.get("moments", (1,))),
            caliper_sd=float(d.get("caliper_sd", 0.2)),
        )


DEFAULT_RHO_GRID = (0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one simulation experiment."""

    scenario: str
    arms: tuple
    rho_grid: tuple = DEFAULT_RHO_GRID
    replications: int = 500
    seed: int = 0
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "arms", tuple(self.arms))
        object.__setattr__(self, "rho_grid", tuple(float(r) for r in self.rho_grid))
        if self.replications < 1:
            raise ConfigError("replication count must be >= 1")
        if not self.arms:
            raise ConfigError("at least one arm is required")
        if not any(a.balance == "none" for a in self.arms):
            raise ConfigError(
                "at least one arm must use balance 'none' "
                "(the bias-reduction denominator)"
            )
        if len({(a.label, a.time) for a in self.arms}) != len(self.arms):
            raise ConfigError("duplicate arms (same label and time spec)")

    def spec_at(self, rho: float) -> DgpSpec:
        try:
            return scenario_spec(self.scenario, **{**self.overrides, "rho": rho})
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "overrides": dict(self.overrides),
            "rho_grid": list(self.rho_grid),
            "replications": self.replications,
            "seed": self.seed,
            "arms": [a.to_dict() for a in self.arms],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        try:
            return cls(
                scenario=d["scenario"],
                arms=tuple(Arm.from_dict(a) for a in d.get("arms", ())),
                rho_grid=tuple(d.get("rho_grid", DEFAULT_RHO_GRID)),
                replications=int(d.get("replications", 500)),
                seed=int(d.get("seed", 0)),
                overrides=dict(d.get("overrides", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad experiment config: {exc}") from exc

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read experiment config {path}: {exc}") from exc


def _json_safe(value):
    """Replace NaN with None so emitted JSON stays strictly parseable."""
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


@dataclass(frozen=True, eq=False)
class BiasReport:
    """Per (arm, rho) simulation summary with the fixed CSV schema."""

    frame: pd.DataFrame
    config: ExperimentConfig

    def to_csv(self, path) -> None:
        self.frame.to_csv(path, index=False)

    def to_json(self) -> str:
        return json.dumps(
            _json_safe(
                {
                    "config": self.config.to_dict(),
                    "cells": self.frame.to_dict(orient="records"),
                }
            )
        )

    def cell(self, arm_label: str, time_spec: str, rho: float) -> pd.Series:
        f = self.frame
        hit = f[
            (f["arm"] == arm_label)
            & (f["time_spec"] == time_spec)
            & (f["rho"] == rho)
        ]
        if len(hit) != 1:
            raise KeyError((arm_label, time_spec, rho))
        return hit.iloc[0]

    def plot_data(self) -> pd.DataFrame:
        return self.frame[["arm", "time_spec", "rho", "pbr"]].copy()


def _arm_weights(arm: Arm, panel: Panel, trends_by_kind: dict):
    if arm.balance == "none":
        return None
    comparison, treated = split_trends(trends_by_kind[arm.trend], panel)
    if arm.balance == "entropy":
        prob = build_constraints(comparison, treated, moment_orders=arm.moments)
        return solve_entropy_balance(prob)
    ms = match_nearest(treated, comparison, caliper_sd=arm.caliper_sd)
    return match_weights(ms, panel)


def _weight_key(arm: Arm):
    if arm.balance == "none":
        return "none"
    if arm.balance == "entropy":
        return ("entropy", arm.trend, arm.moments)
    return ("match", arm.trend, arm.caliper_sd)


def _replication_biases(cfg: ExperimentConfig, spec: DgpSpec, rho_idx: int, rep: int):
    """One panel draw, all arms. Failed arms yield NaN."""
    seed = np.random.SeedSequence(entropy=cfg.seed, spawn_key=(rho_idx, rep))
    panel = generate_panel(spec, seed)
    pre = pre_panel(panel)
    trends_by_kind = {
        kind: _estimate_trends(pre, kind)
        for kind in {a.trend for a in cfg.arms if a.trend is not None}
    }
    # Arms differing only in time spec share one weight solve per panel.
    weight_cache: dict = {}
    out = np.full(len(cfg.arms), np.nan)
    for j, arm in enumerate(cfg.arms):
        key = _weight_key(arm)
        if key not in weight_cache:
            try:
                weight_cache[key] = _arm_weights(arm, panel, trends_by_kind)
            except (BalanceError, ValueError) as exc:
                weight_cache[key] = exc
        w = weight_cache[key]
        if isinstance(w, Exception):
            continue  # counted as a failure for this arm
        try:
            fit = fit_did(panel, w, arm.time_spec)
        except (BalanceError, ValueError):
            continue
        out[j] = fit.tau_hat - spec.tau
    return out


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> BiasReport:
    """Run the full (arm x rho) grid and summarize bias per cell.

    Deterministic for a given config seed: every (rho, replication) pair
    draws from its own seed substream and writes into a preallocated slot,
    so the report is byte-identical no matter how many threads run.
    """
    n_arms, n_rho, reps = len(cfg.arms), len(cfg.rho_grid), cfg.replications
    biases = np.full((n_rho, reps, n_arms), np.nan)
    specs = [cfg.spec_at(rho) for rho in cfg.rho_grid]

    def work(task):
        r, rep = task
        biases[r, rep] = _replication_biases(cfg, specs[r], r, rep)

    tasks = [(r, rep) for r in range(n_rho) for rep in range(reps)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, tasks, chunksize=max(1, len(tasks) // (8 * threads))))
    else:
        for task in tasks:
            work(task)

    for j, arm in enumerate(cfg.arms):
        if np.isnan(biases[:, :, j]).all():
            raise ExperimentError(
                f"arm {arm.label!r} ({arm.time}) failed in every replication"
            )

    rows = []
    for r, rho in enumerate(cfg.rho_grid):
        denominators = {}
        for j, arm in enumerate(cfg.arms):
            if arm.balance == "none":
                vals = biases[r, :, j]
                denominators[arm.time] = float(np.nanmean(vals))
        for j, arm in enumerate(cfg.arms):
            vals = biases[r, :, j]
            used = vals[~np.isnan(vals)]
            mean_bias = float(used.mean()) if used.size else math.nan
            mc_se = (
                float(used.std(ddof=1) / math.sqrt(used.size))
                if used.size > 1
                else math.nan
            )
            if arm.balance == "none":
                pbr = 0.0
            elif arm.time in denominators and used.size:
                pbr = percent_bias_reduction(mean_bias, denominators[arm.time])
            else:
                pbr = math.nan  # no denominator, or estimator undefined
            reliability = (
                trend_reliability(specs[r]) if arm.trend == "linear" else math.nan
            )
            rows.append(
                {
                    "arm": arm.label,
                    "time_spec": arm.time,
                    "rho": rho,
                    "mean_bias": mean_bias,
                    "mc_se": mc_se,
                    "pbr": pbr,
                    "reliability": reliability,
                    "fail_rate": float(np.isnan(vals).mean()),
                }
            )
    frame = pd.DataFrame(rows, columns=list(REPORT_COLUMNS))
    return BiasReport(frame=frame, config=cfg)


# ---------------------------------------------------------------------------
# Real-data analysis workflow
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnalysisConfig:
    """Inputs for the panel analysis workflow (and weights/match-only modes)."""

    panel: str
    intervention_time: float
    covariates: tuple = ()
    trend: str = "linear"
    moments: tuple = (1,)
    time: str = "nonparametric"
    caliper_sd: float = 0.2
    histogram_bins: int = 30

    def __post_init__(self):
        if self.trend not in TREND_KINDS:
            raise ConfigError(f"unknown trend kind {self.trend!r}")
        TimeSpec.from_label(self.time)
        object.__setattr__(self, "covariates", tuple(self.covariates))
        object.__setattr__(self, "moments", tuple(int(m) for m in self.moments))

    @classmethod
    def from_dict(cls, d: dict) -> "AnalysisConfig":
        try:
            return cls(
                panel=d["panel"],
                intervention_time=float(d["intervention_time"]),
                covariates=tuple(d.get("covariates", ())),
                trend=d.get("trend", "linear"),
                moments=tuple(d.get("moments", (1,))),
                time=d.get("time", "nonparametric"),
                caliper_sd=float(d.get("caliper_sd", 0.2)),
                histogram_bins=int(d.get("histogram_bins", 30)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad analysis config: {exc}") from exc

    @classmethod
    def from_file(cls, path, panel_override=None) -> "AnalysisConfig":
        try:
            with open(path) as fh:
                d = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read analysis config {path}: {exc}") from exc
        if panel_override is not None:
            d["panel"] = str(panel_override)
        return cls.from_dict(d)


def _load_panel_or_raise(cfg: AnalysisConfig) -> Panel:
    loaded = read_panel_csv(cfg.panel, cfg.intervention_time)
    if isinstance(loaded, Panel):
        return loaded
    msgs = "; ".join(str(e) for e in loaded.errors)
    raise ConfigError(f"panel {cfg.panel} failed validation: {msgs}")


def _analysis_trends(cfg: AnalysisConfig, panel: Panel):
    pre = pre_panel(panel)
    tm = _estimate_trends(pre, cfg.trend)
    comparison, treated = split_trends(tm, panel)
    return tm, comparison, treated


def overlap_summary(trends_treated, trends_comparison, bins: int = 30) -> dict:
    """Support ranges, out-of-support counts, and histogram bin counts.

    The out-of-support count diagnoses the overlap requirement: treated
    units whose trend features fall outside the comparison range cannot be
    reproduced by any positive reweighting of the comparison group.
    """
    features = []
    histograms = []
    outside_any = np.zeros(trends_treated.n_units, dtype=bool)
    for m, name in enumerate(trends_treated.feature_names):
        xt = trends_treated.features[:, m]
        xc = trends_comparison.features[:, m]
        lo, hi = float(xc.min()), float(xc.max())
        outside = (xt < lo) | (xt > hi)
        outside_any |= outside
        features.append(
            {
                "feature": name,
                "treated_min": float(xt.min()),
                "treated_max": float(xt.max()),
                "comparison_min": lo,
                "comparison_max": hi,
                "n_treated_outside": int(outside.sum()),
                "treated_outside_units": [
                    u.item() if hasattr(u, "item") else u
                    for u in trends_treated.unit_ids[outside][:50]
                ],
            }
        )
        edges = np.histogram_bin_edges(np.concatenate([xt, xc]), bins=bins)
        for group, x in (("treated", xt), ("comparison", xc)):
            counts, _ = np.histogram(x, bins=edges)
            for b in range(len(counts)):
                histograms.append(
                    {
                        "feature": name,
                        "group": group,
                        "bin_left": float(edges[b]),
                        "bin_right": float(edges[b + 1]),
                        "count": int(counts[b]),
                    }
                )
    return {
        "features": features,
        "n_treated_outside_support": int(outside_any.sum()),
        "histograms": histograms,
    }


@dataclass(frozen=True, eq=False)
class AnalysisReport:
    """Balance, overlap, pre-trend, and estimate sections for one panel."""

    counts: dict
    balance: pd.DataFrame
    overlap: dict
    pretrend_before: object
    pretrend_after: Optional[object]
    estimate_unweighted: object
    estimate_weighted: Optional[object]
    balance_failure: Optional[dict]
    weights: Optional[np.ndarray]
    comparison_ids: np.ndarray

    def to_dict(self) -> dict:
        out = {
            "counts": self.counts,
            "balance": [
                {"measure": idx, **row}
                for idx, row in self.balance.to_dict(orient="index").items()
            ],
            "overlap": self.overlap,
            "pretrend": {
                "before": self.pretrend_before.to_dict(),
                "after": self.pretrend_after.to_dict() if self.pretrend_after else None,
            },
            "estimates": {
                "unweighted": {
                    **self.estimate_unweighted.to_dict(),
                    "formatted": self.estimate_unweighted.formatted(),
                },
                "weighted": (
                    {
                        **self.estimate_weighted.to_dict(),
                        "formatted": self.estimate_weighted.formatted(),
                    }
                    if self.estimate_weighted
                    else None
                ),
            },
        }
        if self.balance_failure:
            out["balance_failure"] = self.balance_failure
        return _json_safe(out)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def analyze_panel(cfg: AnalysisConfig) -> AnalysisReport:
    """Run the full before/after-weighting analysis on a user panel.

    An entropy solve failure does not abort: it is reported as a diagnosed
    infeasibility with the overlap summary attached, since failure to
    balance is itself evidence against overlap.
    """
    panel = _load_panel_or_raise(cfg)
    _, comparison, treated = _analysis_trends(cfg, panel)
    overlap = overlap_summary(treated, comparison, bins=cfg.histogram_bins)

    time_spec = TimeSpec.from_label(cfg.time)
    fit_before = fit_did(panel, None, time_spec)
    pret_before = pretrend_test(panel, None)

    weights = None
    failure = None
    fit_after = None
    pret_after = None
    if cfg.covariates:
        missing = [c for c in cfg.covariates if c not in panel.covariate_names]
        if missing:
            raise ConfigError(f"panel lacks covariate columns: {missing}")
        idx = [panel.covariate_names.index(c) for c in cfg.covariates]
        zc = panel.covariates[np.ix_(panel.comparison_mask, idx)]
        zt = panel.covariates[np.ix_(panel.treated_mask, idx)]
    else:
        zc = zt = None
    try:
        prob = build_constraints(
            comparison,
            treated,
            covariates_comparison=zc,
            covariates_treated=zt,
            covariate_names=cfg.covariates,
            moment_orders=cfg.moments,
        )
        weights = solve_entropy_balance(prob)
    except BalanceError as exc:
        failure = {
            "error": type(exc).__name__,
            "message": str(exc),
            "n_treated_outside_support": overlap["n_treated_outside_support"],
        }
    if weights is not None:
        fit_after = fit_did(panel, weights, time_spec)
        pret_after = pretrend_test(panel, weights)

    table = balance_table(panel, weights, covariates=cfg.covariates)
    counts = {
        "n_treated": panel.n_treated,
        "n_comparison": panel.n_comparison,
        "k_pre": panel.k_pre,
        "k_post": panel.k_post,
        "ess_weighted": (
            effective_sample_size(weights) if weights is not None else math.nan
        ),
    }
    return AnalysisReport(
        counts=counts,
        balance=table,
        overlap=overlap,
        pretrend_before=pret_before,
        pretrend_after=pret_after,
        estimate_unweighted=fit_before,
        estimate_weighted=fit_after,
        balance_failure=failure,
        weights=weights.comparison_weights if weights is not None else None,
        comparison_ids=panel.comparison_ids(),
    )


def solve_weights_only(cfg: AnalysisConfig):
    """Weights-only mode: panel in, (comparison ids, solved weights) out."""
    panel = _load_panel_or_raise(cfg)
    _, comparison, treated = _analysis_trends(cfg, panel)
    if cfg.covariates:
        idx = [panel.covariate_names.index(c) for c in cfg.covariates]
        zc = panel.covariates[np.ix_(panel.comparison_mask, idx)]
        zt = panel.covariates[np.ix_(panel.treated_mask, idx)]
    else:
        zc = zt = None
    prob = build_constraints(
        comparison,
        treated,
        covariates_comparison=zc,
        covariates_treated=zt,
        covariate_names=cfg.covariates,
        moment_orders=cfg.moments,
    )
    return panel.comparison_ids(), solve_entropy_balance(prob)


def match_only(cfg: AnalysisConfig):
    """Match mode: panel in, MatchSet out."""
    panel = _load_panel_or_raise(cfg)
    _, comparison, treated = _analysis_trends(cfg, panel)
    return match_nearest(treated, comparison, caliper_sd=cfg.caliper_sd)


def emit_report(report, out_dir, formats=("csv", "json", "plotdata")) -> list:
    """Write a report's files into ``out_dir``; returns the written paths.

    Bias reports emit ``bias_report.csv`` (fixed schema), ``bias_report.json``
    and ``pbr_by_rho.csv`` (tidy arm, rho, PBR). Analysis reports emit
    ``analysis.json``, ``balance_table.csv`` and ``overlap_histogram.csv``
    (tidy group, bin, count).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    unknown = set(formats) - {"csv", "json", "plotdata"}
    if unknown:
        raise ConfigError(f"unknown output formats: {sorted(unknown)}")
    written = []
    if isinstance(report, BiasReport):
        if "csv" in formats:
            path = out / "bias_report.csv"
            report.to_csv(path)
            written.append(path)
        if "json" in formats:
            path = out / "bias_report.json"
            path.write_text(report.to_json())
            written.append(path)
        if "plotdata" in formats:
            path = out / "pbr_by_rho.csv"
            report.plot_data().to_csv(path, index=False)
            written.append(path)
    elif isinstance(report, AnalysisReport):
        if "json" in formats:
            path = out / "analysis.json"
            path.write_text(report.to_json())
            written.append(path)
        if "csv" in formats:
            path = out / "balance_table.csv"
            report.balance.rename_axis("measure").to_csv(path)
            written.append(path)
        if "plotdata" in formats:
            path = out / "overlap_histogram.csv"
            pd.DataFrame(report.overlap["histograms"]).to_csv(path, index=False)
            written.append(path)
    else:
        raise TypeError(f"cannot emit report of type {type(report).__name__}")
    return written
