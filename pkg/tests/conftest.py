import numpy as np
import pytest

from synthpanel import build_panel


def panel_from_matrix(Y, n_pre, periods_start=2000, covariates=None):
    """Build a panel from a units-by-periods matrix, last row treated."""
    Y = np.asarray(Y, dtype=float)
    n_units, n_periods = Y.shape
    periods = list(range(periods_start, periods_start + n_periods))
    records = []
    for i in range(n_units - 1):
        for j, p in enumerate(periods):
            cov = {name: mat[i][j] for name, mat in (covariates or {}).items()}
            records.append((f"d{i:02d}", p, Y[i, j], cov))
    for j, p in enumerate(periods):
        cov = {name: mat[-1][j] for name, mat in (covariates or {}).items()}
        records.append(("treated", p, Y[-1, j], cov))
    return build_panel(records, "treated", periods_start + n_pre)


def random_panel(rng, n_donors=None, n_pre=None, n_post=None, scale=10.0):
    """A random balanced panel with the last unit treated."""
    n_donors = n_donors or int(rng.integers(2, 7))
    n_pre = n_pre or int(rng.integers(2, 7))
    n_post = n_post or int(rng.integers(1, 4))
    Y = rng.normal(0.0, scale, size=(n_donors + 1, n_pre + n_post))
    return panel_from_matrix(Y, n_pre)


@pytest.fixture
def company_levels_panel():
    """Small level panel shaped like an annual passenger study."""
    Y = np.array([
        [400.0, 409.0, 418.0, 428.0, 439.0, 212.0, 265.0, 383.0],
        [17.8, 18.2, 18.7, 19.1, 19.6, 9.6, 12.2, 17.4],
        [125.0, 128.0, 131.0, 134.0, 137.0, 66.0, 84.0, 122.0],
        [46.0, 47.0, 48.0, 49.0, 50.0, 25.0, 31.0, 45.0],
        [221.0, 228.0, 235.0, 241.0, 249.0, 120.0, 152.0, 221.0],
    ])
    return panel_from_matrix(Y, n_pre=6, periods_start=2015)
