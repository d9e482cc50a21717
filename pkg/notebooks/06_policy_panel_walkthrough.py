"""
Analyzing a policy panel from a CSV file
========================================

The analysis workflow mirrors a report appendix: a balance table, an
overlap check on the estimated trends, pre-trend tests before and after
weighting, and effect estimates before and after weighting. Everything here
also runs from the command line:

    ebdid analyze analysis.json --out out/
    ebdid balance analysis.json --out out/     # weights CSV only
    ebdid match   analysis.json --out out/     # pair list only
"""

import json

from ebdid import generate_panel, scenario_spec, write_panel_csv
from ebdid.harness import AnalysisConfig, analyze_panel, emit_report

# ---------------------------------------------------------------------------
# 1. A study panel with a known truth
# ---------------------------------------------------------------------------
# Simulated stand-in for a real extract: true effect 0.5, treated trends
# drifting down 0.2 per period relative to comparison, strong error
# persistence. Saved in the long CSV schema the loader expects.

spec = scenario_spec("scenario1", rho=0.9, tau=0.5)
write_panel_csv(generate_panel(spec, seed=6), "/tmp/study_panel.csv")

config = AnalysisConfig(
    panel="/tmp/study_panel.csv",
    intervention_time=5,
    trend="first_differences",
    moments=(1,),
    time="poly1",
)

# ---------------------------------------------------------------------------
# 2. Run the full workflow
# ---------------------------------------------------------------------------

report = analyze_panel(config)

print("counts:", report.counts)
print("\nbalance table:")
print(report.balance.round(3))

print("\noverlap:")
for feat in report.overlap["features"]:
    print(
        f"  {feat['feature']}: treated [{feat['treated_min']:+.2f}, "
        f"{feat['treated_max']:+.2f}] vs comparison "
        f"[{feat['comparison_min']:+.2f}, {feat['comparison_max']:+.2f}] "
        f"({feat['n_treated_outside']} treated outside)"
    )

pb, pa = report.pretrend_before, report.pretrend_after
print(f"\npre-trend p-value before weighting: {pb.p_value:.2e}")
print(f"pre-trend p-value after weighting:  {pa.p_value:.6f}")

print("\nestimates (truth is 0.50):")
print("  unweighted:", report.estimate_unweighted.formatted())
print("  weighted:  ", report.estimate_weighted.formatted())

# ---------------------------------------------------------------------------
# 3. Emit the report files
# ---------------------------------------------------------------------------

paths = emit_report(report, "/tmp/study_out")
print("\nwrote:")
for p in paths:
    print(" ", p)
print("\nanalysis.json sections:",
      sorted(json.loads((paths[0]).read_text()).keys()))
