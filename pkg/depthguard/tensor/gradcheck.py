"""Central finite-difference oracle for checking backward rules."""

from typing import Callable

import numpy as np

from depthguard.tensor.tensor import Tensor, backward


def numerical_gradient(fn: Callable[[Tensor], Tensor], x: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Return d fn(x) / dx by central differences, one coordinate at a time.

    ``fn`` maps a double-precision tensor to a scalar tensor.
    """
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        upper = fn(Tensor(x, dtype="f64")).item()
        flat[i] = original - step
        lower = fn(Tensor(x, dtype="f64")).item()
        flat[i] = original
        out[i] = (upper - lower) / (2 * step)
    return grad


def analytic_gradient(fn: Callable[[Tensor], Tensor], x: np.ndarray) -> np.ndarray:
    """Return d fn(x) / dx through :func:`backward`."""
    leaf = Tensor(x, dtype="f64", requires_grad=True)
    backward(fn(leaf))
    return leaf.grad


def directional_check(fn: Callable[[Tensor], Tensor], x: np.ndarray, direction: np.ndarray, step: float = 1e-6):
    """Return (analytic, numeric) directional derivatives of ``fn`` at ``x`` along ``direction``."""
    x = np.asarray(x, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    analytic = float(np.sum(analytic_gradient(fn, x) * direction))
    upper = fn(Tensor(x + step * direction, dtype="f64")).item()
    lower = fn(Tensor(x - step * direction, dtype="f64")).item()
    return analytic, (upper - lower) / (2 * step)


def relative_error(a, b) -> float:
    """Max-norm relative error between two arrays, safe at zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12)
    return float(np.max(np.abs(a - b)) / scale)
