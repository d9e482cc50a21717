import json

import pandas as pd
import pytest

from ebdid import generate_panel, scenario_spec, write_panel_csv
from ebdid.cli import main


@pytest.fixture
def sim_config(tmp_path):
    cfg = {
        "scenario": "scenario1",
        "overrides": {"n0": 50, "n1": 25},
        "rho_grid": [0.5],
        "replications": 5,
        "seed": 12,
        "arms": [
            {"balance": "none", "time": "nonparametric"},
            {"balance": "entropy", "time": "nonparametric", "trend": "linear"},
        ],
    }
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(cfg))
    return path


@pytest.fixture
def analysis_setup(tmp_path):
    panel = tmp_path / "panel.csv"
    write_panel_csv(
        generate_panel(scenario_spec("scenario1", n0=80, n1=40, rho=0.9, tau=0.5), 13),
        panel,
    )
    cfg = {
        "panel": str(panel),
        "intervention_time": 5,
        "trend": "linear",
        "moments": [1],
        "time": "poly1",
    }
    path = tmp_path / "analysis.json"
    path.write_text(json.dumps(cfg))
    return path, panel


def test_simulate_writes_reports(sim_config, tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["simulate", str(sim_config), "--out", str(out), "--threads", "2"])
    assert code == 0
    assert (out / "bias_report.csv").exists()
    assert (out / "bias_report.json").exists()
    assert (out / "pbr_by_rho.csv").exists()
    frame = pd.read_csv(out / "bias_report.csv")
    assert set(frame["arm"]) == {"none", "entropy-linear"}


def test_simulate_seed_flag_changes_results(sim_config, tmp_path):
    out1, out2, out3 = (tmp_path / d for d in ("a", "b", "c"))
    main(["simulate", str(sim_config), "--out", str(out1)])
    main(["simulate", str(sim_config), "--out", str(out2), "--seed", "999"])
    main(["simulate", str(sim_config), "--out", str(out3)])
    a = (out1 / "bias_report.csv").read_bytes()
    b = (out2 / "bias_report.csv").read_bytes()
    c = (out3 / "bias_report.csv").read_bytes()
    assert a != b
    assert a == c


def test_analyze_subcommand(analysis_setup, tmp_path):
    cfg_path, _ = analysis_setup
    out = tmp_path / "analysis_out"
    code = main(["analyze", str(cfg_path), "--out", str(out)])
    assert code == 0
    payload = json.loads((out / "analysis.json").read_text())
    assert set(payload["estimates"]) == {"unweighted", "weighted"}
    assert {"balance", "overlap", "pretrend", "estimates"} <= set(payload)


def test_balance_subcommand_writes_weights(analysis_setup, tmp_path):
    cfg_path, _ = analysis_setup
    out = tmp_path / "w"
    code = main(["balance", str(cfg_path), "--out", str(out)])
    assert code == 0
    weights = pd.read_csv(out / "weights.csv")
    assert list(weights.columns) == ["unit", "weight"]
    assert len(weights) == 80
    assert weights["weight"].sum() == pytest.approx(1.0)
    diag = json.loads((out / "solver_diagnostics.json").read_text())
    assert diag["max_violation_standardized"] <= 1e-8


def test_match_subcommand_writes_pairs(analysis_setup, tmp_path):
    cfg_path, _ = analysis_setup
    out = tmp_path / "m"
    code = main(["match", str(cfg_path), "--out", str(out)])
    assert code == 0
    pairs = pd.read_csv(out / "matches.csv")
    assert list(pairs.columns) == ["treated_unit", "comparison_unit", "distance"]


def test_panel_positional_overrides_config(analysis_setup, tmp_path):
    cfg_path, panel = analysis_setup
    other = tmp_path / "other.csv"
    write_panel_csv(
        generate_panel(scenario_spec("scenario1", n0=30, n1=15, rho=0.9), 14), other
    )
    out = tmp_path / "w2"
    code = main(["balance", str(cfg_path), str(other), "--out", str(out)])
    assert code == 0
    assert len(pd.read_csv(out / "weights.csv")) == 30


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["simulate", str(bad)]) == 1
    assert "config error" in capsys.readouterr().err


def test_numerical_failure_exit_code(tmp_path, capsys):
    # no-overlap panel: entropy balancing must fail and exit 2
    panel = tmp_path / "sep.csv"
    write_panel_csv(
        generate_panel(scenario_spec("scenario2", sigma2=0.01, n0=60, n1=30), 15),
        panel,
    )
    cfg = tmp_path / "cfg.json"
    cfg.write_text(
        json.dumps(
            {
                "panel": str(panel),
                "intervention_time": 5,
                "trend": "linear",
                "time": "poly1",
            }
        )
    )
    assert main(["balance", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "numerical failure" in capsys.readouterr().err


def test_analyze_reports_infeasibility_with_exit_2(tmp_path, capsys):
    panel = tmp_path / "sep.csv"
    write_panel_csv(
        generate_panel(scenario_spec("scenario2", sigma2=0.01, n0=60, n1=30), 16),
        panel,
    )
    cfg = tmp_path / "cfg.json"
    cfg.write_text(
        json.dumps(
            {
                "panel": str(panel),
                "intervention_time": 5,
                "trend": "linear",
                "time": "poly1",
            }
        )
    )
    out = tmp_path / "an"
    assert main(["analyze", str(cfg), "--out", str(out)]) == 2
    payload = json.loads((out / "analysis.json").read_text())
    assert payload["balance_failure"]["n_treated_outside_support"] >= 0
    assert payload["estimates"]["weighted"] is None
