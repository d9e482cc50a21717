"""
Panels, validation, and balance tables
======================================

The Panel is the one data structure everything else consumes: a balanced
individual-by-time outcome matrix with a binary group indicator and an
intervention time. This walkthrough builds one from long-format records,
shows what validation rejects, and prints a balance table.
"""

import numpy as np
import pandas as pd

from ebdid import (
    balance_table,
    generate_panel,
    load_panel,
    pre_panel,
    read_panel_csv,
    scenario_spec,
    write_panel_csv,
)

# ---------------------------------------------------------------------------
# 1. Loading long-format records
# ---------------------------------------------------------------------------
# One row per unit-time with columns unit, time, group, outcome. Extra
# columns are treated as time-invariant baseline covariates.

rows = pd.DataFrame(
    {
        "unit": [1, 1, 1, 2, 2, 2, 3, 3, 3],
        "time": [1, 2, 3] * 3,
        "group": [1, 1, 1, 0, 0, 0, 0, 0, 0],
        "outcome": [2.0, 2.5, 3.4, 1.0, 1.1, 1.3, 0.8, 1.0, 1.1],
        "age": [70, 70, 70, 68, 68, 68, 75, 75, 75],
    }
)
panel = load_panel(rows, intervention_time=3)
print("units:", panel.n_units, " times:", list(panel.times))
print("pre-periods:", panel.k_pre, " post-periods:", panel.k_post)
print("warnings:", [str(w) for w in panel.validation.warnings])

# ---------------------------------------------------------------------------
# 2. What validation rejects
# ---------------------------------------------------------------------------
# Incomplete panels are a load-time error, never imputed. The report names
# the offending unit and time.

broken = rows.drop(index=4)  # unit 2 loses time 2
report = load_panel(broken, intervention_time=3)
print("\nvalidation errors for the broken stream:")
for issue in report.errors:
    print(" -", issue)

# ---------------------------------------------------------------------------
# 3. Round-tripping through the CSV schema
# ---------------------------------------------------------------------------
# write_panel_csv renders floats at full round-trip precision, so reloading
# reproduces the outcomes bit for bit.

write_panel_csv(panel, "/tmp/demo_panel.csv")
again = read_panel_csv("/tmp/demo_panel.csv", intervention_time=3)
print("\nround trip identical:", again.equals(panel))

# ---------------------------------------------------------------------------
# 4. Balance tables on a realistic panel
# ---------------------------------------------------------------------------
# Generate a panel from the overlap scenario preset and attach a covariate,
# then compare group means. With no weights the weighted column just equals
# the raw comparison column; notebook 03 shows it after balancing.

sim = generate_panel(scenario_spec("scenario1", rho=0.5), seed=1)
table = balance_table(sim, outcome_times=sim.pre_times[:2])
print("\nbalance table (no weights):")
print(table.round(3))

# The pre-period restriction used by trend estimation keeps the
# intervention time as metadata:
pre = pre_panel(sim)
print("\npre-period times:", pre.times.tolist(), " t_e:", pre.intervention_time)
