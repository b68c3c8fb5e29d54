import numpy as np
import pytest

from mhl.space import make_space


@pytest.fixture
def quad2():
    return make_space("euclid-quadratic", dim=2)


@pytest.fixture
def lin2():
    return make_space("euclid-linear", dim=2)


@pytest.fixture
def quantile():
    return make_space("quantile-entropy", m=32, tau=1e-3)


@pytest.fixture
def tripod():
    return make_space("tripod-quadratic")


def assert_close(a, b, tol, label=""):
    a, b = np.asarray(a, float), np.asarray(b, float)
    err = float(np.max(np.abs(a - b)))
    assert err <= tol, f"{label} off by {err:.3e} (tol {tol:.1e})"
