from typing import Callable, Dict

import numpy as np

Params = Dict[str, np.ndarray]


def numerical_gradient(loss_fn: Callable[[], float], params: Params, h: float = 1e-5) -> Params:
    """
    Central finite differences of loss_fn() w.r.t. every entry of params (perturbed in place).
    """
    grads = {}
    for name, value in params.items():
        grad = np.zeros_like(value)
        flat, flat_grad = value.reshape(-1), grad.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            plus = loss_fn()
            flat[i] = original - h
            minus = loss_fn()
            flat[i] = original
            flat_grad[i] = (plus - minus) / (2.0 * h)
        grads[name] = grad
    return grads


def max_relative_error(analytic: Params, numeric: Params, floor: float = 1e-4) -> float:
    """
    max |a - n| / max(|a| + |n|, floor) over every coordinate.
    """
    worst = 0.0
    for name, a in analytic.items():
        n = numeric[name]
        error = np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), floor)
        worst = max(worst, float(np.max(error)) if error.size else 0.0)
    return worst


def gradient_check(loss_fn: Callable[[], float], analytic: Params, params: Params, h: float = 1e-5) -> float:
    """
    Compare analytic gradients against central differences.
    :param loss_fn: Evaluates the loss at the current params.
    :param analytic: Analytic gradients at the current params.
    :param params: Parameters referenced by loss_fn, perturbed in place and restored.
    :return: Max relative error.
    """
    return max_relative_error(analytic, numerical_gradient(loss_fn, params, h))
