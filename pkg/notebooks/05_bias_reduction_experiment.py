"""
A bias-reduction experiment end to end
======================================

The harness fans one seeded data-generating process across an
autocorrelation grid, runs every estimator arm on the same panels, and
reports mean bias, Monte Carlo error, and percent bias reduction against
the unweighted arm with the same time specification.

This demo uses a reduced replication count so it finishes in seconds; the
checked-in configs under configs/ are the full-size versions, runnable as
`ebdid simulate configs/scenario1_grid.json --threads 4 --out out/`.
"""

from ebdid.harness import Arm, ExperimentConfig, emit_report, run_experiment

config = ExperimentConfig(
    scenario="scenario1",
    rho_grid=(0.0, 0.5, 0.99),
    replications=100,
    seed=20260808,
    arms=(
        Arm("none", "poly1"),
        Arm("none", "nonparametric"),
        Arm("entropy", "poly1", "linear"),
        Arm("entropy", "nonparametric", "linear"),
        Arm("match", "poly1", "linear"),
    ),
)

report = run_experiment(config, threads=2)
print(report.frame.round(4).to_string(index=False))

# The signature patterns, visible even at 100 replications:
#  - entropy + linear time sits near 100% bias reduction at every rho
#    (a correctly specified time polynomial makes the weighting robust
#    to noise in the estimated trends);
#  - the nonparametric-time arms improve as the autocorrelation grows,
#    because persistent errors make the estimated trends more reliable;
#  - matching removes less bias than entropy balancing throughout.

paths = emit_report(report, "/tmp/demo_experiment")
print("\nwrote:")
for p in paths:
    print(" ", p)
