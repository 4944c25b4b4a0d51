import numpy as np
import pytest

from shrinkdiff.core import Dataset, PriorSpec


def random_instance(rng, n, p, signal=None, standardize=True):
    X = rng.standard_normal((n, p))
    beta = np.zeros(p)
    if signal is not None:
        beta[: len(signal)] = signal
    Y = X @ beta + rng.standard_normal(n)
    return Dataset.from_arrays(X, Y, standardize=standardize)


def orthogonal_design(n, p, rng):
    """n x p matrix with X'X = n I exactly up to rounding (scaled QR factor)."""
    Q, _ = np.linalg.qr(rng.standard_normal((n, p)))
    return Q * np.sqrt(n)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def priors_small():
    return PriorSpec(tau0_sq=0.01, tau1_sq=2.0, q=0.2)
