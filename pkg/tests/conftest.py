"""
Shared fixtures: synthetic regression data and small fitted models.
"""
from types import SimpleNamespace

import numpy as np
import pytest

from src.basis.kernel_basis import build_basis
from src.model.hyperparameters import Hyperparameters
from src.vsugs.online import OnlineOptions, fit_online


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte-Carlo, timing and desk-scale runs")


def model_class_data(n, rng, basis_count=3, m=2, p=2, noise=0.1, coef=None):
    """
    Responses that are an exact function of the kernel design plus Gaussian noise.

    Returns:
        (X, Y, basis, E, B) with Y = E B + noise
    """
    X = rng.uniform(-2.0, 2.0, (n, p))
    basis = build_basis(X, basis_count, rng)
    E = basis.design(X)
    B = coef if coef is not None else rng.uniform(-1.0, 1.0, (basis.design_dim, m))
    Y = E @ B + noise * rng.standard_normal((n, m))
    return X, Y, basis, E, B


def two_regime_data(n, rng, noise=0.1):
    """
    Rows drawn from one of two regressions on the same covariates, B and -B.

    Returns:
        (X, Y, basis, E, labels)
    """
    coef = np.array([[2.0, 2.0], [1.0, -1.0], [-1.0, 1.0]])
    X, Y, basis, E, _ = model_class_data(n, rng, basis_count=2, noise=noise, coef=coef)
    labels = rng.integers(0, 2, n)
    flipped = labels == 1
    Y[flipped] = -E[flipped] @ coef + noise * rng.standard_normal((int(flipped.sum()), 2))
    return X, Y, basis, E, labels


def fit_small(n=200, basis_count=2, trunc=2, m=2, warm=50, seed=7, noise=0.1, **hkw):
    rng = np.random.default_rng(seed)
    X, Y, basis, E, B = model_class_data(n, rng, basis_count=basis_count, m=m, noise=noise)
    h = Hyperparameters.defaults(response_dim=m, basis_count=basis_count, trunc=trunc, **hkw)
    fit = fit_online(zip(X, Y), h, basis, OnlineOptions(warm_count=warm, seed=seed))
    return SimpleNamespace(X=X, Y=Y, E=E, B=B, basis=basis, h=h, fit=fit, state=fit.state)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_fit():
    """m=2, N=2, T=2 state fitted online to 200 model-class points."""
    return fit_small()


@pytest.fixture(scope="session")
def scalar_fit():
    """m=1, N=2, T=2 state fitted online to 200 model-class points."""
    return fit_small(m=1, seed=11)
