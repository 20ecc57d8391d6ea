import numpy as np
import pytest


def fd_grad_params(loss_fn, params, h=1e-5):
    """Central finite differences of a scalar loss over a {name: array} dict.

    ``loss_fn`` must be deterministic (freeze any sampling noise outside).
    """
    grads = {}
    for name, arr in params.items():
        g = np.zeros_like(arr)
        for i in range(arr.size):
            orig = arr.flat[i]
            arr.flat[i] = orig + h
            lp = loss_fn(params)
            arr.flat[i] = orig - h
            lm = loss_fn(params)
            arr.flat[i] = orig
            g.flat[i] = (lp - lm) / (2 * h)
        grads[name] = g
    return grads


def assert_grads_close(analytic, numeric, rtol=1e-4, atol=1e-7):
    for name in numeric:
        a = analytic[name]
        n = numeric[name]
        denom = np.maximum(np.abs(n), 1e-3)
        rel = np.abs(a - n) / denom
        assert np.all((rel <= rtol) | (np.abs(a - n) <= atol)), (
            f"gradient mismatch for {name}: max rel err {rel.max():.2e}"
        )


@pytest.fixture
def fd_oracle():
    return fd_grad_params


@pytest.fixture
def grads_close():
    return assert_grads_close
