from pathlib import Path

import numpy as np
import pytest

from netcf.data import RatingMatrix

ROOT = Path(__file__).resolve().parent.parent
ML100K = ROOT / "data" / "ml-100k" / "u.data"


def random_dense(rng, n_users=10, n_items=12, density=0.5, lo=1, hi=5):
    vals = rng.integers(lo, hi + 1, size=(n_users, n_items))
    return np.where(rng.random((n_users, n_items)) < density, vals, 0)


def random_matrix(seed, n_users=10, n_items=12, density=0.5):
    rng = np.random.default_rng(seed)
    return RatingMatrix.from_dense(random_dense(rng, n_users, n_items, density))


@pytest.fixture(scope="session")
def ml100k():
    if not ML100K.exists():
        pytest.skip("MovieLens 100k not fetched (run scripts/fetch_ml100k.py)")
    from netcf.data import load_ratings
    return load_ratings(ML100K)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
