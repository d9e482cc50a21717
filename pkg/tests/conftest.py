from pathlib import Path

import numpy as np
import pandas as pd
import pytest

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def long_rows(outcomes, group, times, unit_ids=None, covariates=None):
    """Build a long-format DataFrame from a small wide description."""
    outcomes = np.asarray(outcomes, dtype=float)
    n, k = outcomes.shape
    if unit_ids is None:
        unit_ids = list(range(1, n + 1))
    rows = []
    for i in range(n):
        for j in range(k):
            row = {
                "unit": unit_ids[i],
                "time": times[j],
                "group": group[i],
                "outcome": outcomes[i, j],
            }
            if covariates:
                for name, col in covariates.items():
                    row[name] = col[i]
            rows.append(row)
    return pd.DataFrame(rows)


@pytest.fixture
def tiny_2x2():
    """Two units, two times, one pre and one post period."""
    return long_rows([[1.0, 2.0], [0.5, 0.7]], group=[1, 0], times=[1, 2])
