import numpy as np
import pytest

from siamloc.nn import forward, model_params, set_model_params


def central_fd(fun, params, step=1e-5):
    """Central finite-difference gradient of a scalar function."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.zeros_like(params)
    for i in range(params.size):
        e = np.zeros_like(params)
        e[i] = step
        grad[i] = (fun(params + e) - fun(params - e)) / (2 * step)
    return grad


def max_rel_err(analytic, numeric, floor=1e-6):
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))


def model_fd(model, loss_of_model, step=1e-5):
    theta = model_params(model)
    return central_fd(lambda p: loss_of_model(set_model_params(model, p)), theta, step)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
