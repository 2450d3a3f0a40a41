"""Shared test helpers: central finite differences and gradient comparison."""

import numpy as np
import pytest


def numerical_grad(f, x, eps=1e-5):
    """Central-difference gradient of a scalar function at x (any shape)."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(x)
        flat[i] = orig - eps
        lo = f(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * eps)
    return grad


def assert_grad_close(analytic, numeric, tol=1e-4):
    """Relative max-norm agreement between analytic and numeric gradients."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    assert a.shape == n.shape
    scale = max(float(np.max(np.abs(n))), 1e-8)
    err = float(np.max(np.abs(a - n))) / scale
    assert err <= tol, f"gradient mismatch: relative error {err:.3e} > {tol}"


@pytest.fixture
def rng():
    return np.random.default_rng(7)
