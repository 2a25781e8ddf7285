import numpy as np
import pytest


def central_difference(fn, z, step=1e-5):
    """Central finite-difference gradient of a scalar function of a vector."""
    z = np.asarray(z, dtype=np.float64)
    grad = np.zeros_like(z)
    for i in range(z.size):
        bump = np.zeros_like(z)
        bump[i] = step
        grad[i] = (fn(z + bump) - fn(z - bump)) / (2.0 * step)
    return grad


def rel_error(actual, expected) -> float:
    """Vector-norm relative error of ``actual`` against ``expected``."""
    actual = np.asarray(actual, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    denom = max(np.linalg.norm(expected), 1e-300)
    return float(np.linalg.norm(actual - expected) / denom)


@pytest.fixture
def rng():
    return np.random.default_rng(42)
