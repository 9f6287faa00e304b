"""Differentiable tensor operations.

Binary operations accept two tensors of identical shape, or a tensor and a Python number. Nothing else
broadcasts; spreading a one-channel mask over RGB is an explicit op in :mod:`depthguard.masking`.
"""

from numbers import Real
from typing import Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from depthguard.exceptions import (
    DegenerateExtent,
    DomainError,
    EmptyTensor,
    NonIntegralExtent,
    ShapeMismatch,
    check_shape,
)
from depthguard.tensor.tensor import Function, Tensor

Operand = Union[Tensor, Real]


###################################
# Elementwise
###################################


class Add(Function):
    name = "add"

    @staticmethod
    def forward(node, a, b):
        return a + b

    @staticmethod
    def backward(node, grad):
        return grad, grad


class Sub(Function):
    name = "sub"

    @staticmethod
    def forward(node, a, b):
        return a - b

    @staticmethod
    def backward(node, grad):
        return grad, -grad


class Mul(Function):
    name = "mul"

    @staticmethod
    def forward(node, a, b):
        node.saved["a"], node.saved["b"] = a, b
        return a * b

    @staticmethod
    def backward(node, grad):
        a, b = node.saved["a"], node.saved["b"]
        return grad * b, grad * a


class Div(Function):
    name = "div"

    @staticmethod
    def forward(node, a, b):
        if (b == 0).any():
            index = tuple(int(i) for i in np.argwhere(b == 0)[0])
            raise DomainError(f"[div] zero divisor at index {index}")
        node.saved["a"], node.saved["b"] = a, b
        return a / b

    @staticmethod
    def backward(node, grad):
        a, b = node.saved["a"], node.saved["b"]
        grad_a = grad / b if node.needs_grad(0) else None
        grad_b = -grad * a / (b * b) if node.needs_grad(1) else None
        return grad_a, grad_b


class AddScalar(Function):
    name = "add_scalar"

    @staticmethod
    def forward(node, a, value):
        return a + a.dtype.type(value)

    @staticmethod
    def backward(node, grad):
        return (grad,)


class ScalarMul(Function):
    name = "scalar_mul"

    @staticmethod
    def forward(node, a, value):
        node.saved["value"] = a.dtype.type(value)
        return a * node.saved["value"]

    @staticmethod
    def backward(node, grad):
        return (grad * node.saved["value"],)


class Neg(Function):
    name = "neg"

    @staticmethod
    def forward(node, a):
        return -a

    @staticmethod
    def backward(node, grad):
        return (-grad,)


class Abs(Function):
    name = "abs"

    @staticmethod
    def forward(node, a):
        node.saved["sign"] = np.sign(a)
        return np.abs(a)

    @staticmethod
    def backward(node, grad):
        return (grad * node.saved["sign"],)


class Ln(Function):
    name = "ln"

    @staticmethod
    def forward(node, a):
        bad = a <= 0
        if bad.any():
            index = tuple(int(i) for i in np.argwhere(bad)[0])
            raise DomainError(f"[ln] non-positive argument {float(a[index])} at index {index}")
        node.saved["a"] = a
        return np.log(a)

    @staticmethod
    def backward(node, grad):
        return (grad / node.saved["a"],)


class Sqrt(Function):
    name = "sqrt"

    @staticmethod
    def forward(node, a):
        bad = a < 0
        if bad.any():
            index = tuple(int(i) for i in np.argwhere(bad)[0])
            raise DomainError(f"[sqrt] negative argument at index {index}")
        out = np.sqrt(a)
        node.saved["out"] = out
        return out

    @staticmethod
    def backward(node, grad):
        return (grad / (2 * node.saved["out"]),)


class Clamp(Function):
    name = "clamp"

    @staticmethod
    def forward(node, a, lo, hi):
        node.saved["inside"] = (a > lo) & (a < hi)
        return np.clip(a, lo, hi)

    @staticmethod
    def backward(node, grad):
        return (grad * node.saved["inside"],)


class Relu(Function):
    name = "relu"

    @staticmethod
    def forward(node, a):
        node.saved["positive"] = a > 0
        return np.maximum(a, 0)

    @staticmethod
    def backward(node, grad):
        return (grad * node.saved["positive"],)


class Sigmoid(Function):
    name = "sigmoid"

    @staticmethod
    def forward(node, a):
        out = 0.5 * (1 + np.tanh(0.5 * a))
        # saturate one ulp inside (0, 1) so the open range holds in single precision
        tiny = np.finfo(a.dtype).tiny
        out = np.clip(out, tiny, np.nextafter(a.dtype.type(1), a.dtype.type(0)))
        node.saved["out"] = out
        return out

    @staticmethod
    def backward(node, grad):
        out = node.saved["out"]
        return (grad * out * (1 - out),)


class Softplus(Function):
    name = "softplus"

    @staticmethod
    def forward(node, a):
        node.saved["a"] = a
        return np.logaddexp(a.dtype.type(0), a)

    @staticmethod
    def backward(node, grad):
        a = node.saved["a"]
        return (grad * 0.5 * (1 + np.tanh(0.5 * a)),)


def _binary(function, scalar_function, a: Operand, b: Operand) -> Tensor:
    if isinstance(a, Tensor) and isinstance(b, Tensor):
        check_shape(function.name, a.shape, b.shape, "operands")
        return function.apply(a, b)
    if isinstance(a, Tensor) and isinstance(b, Real):
        return scalar_function(a, b)
    raise ShapeMismatch(f"[{function.name}] unsupported operands {type(a).__name__}, {type(b).__name__}")


def add(a: Tensor, b: Operand) -> Tensor:
    """Elementwise sum of two same-shape tensors, or a tensor plus a scalar."""
    return _binary(Add, lambda t, v: AddScalar.apply(t, value=v), a, b)


def sub(a: Tensor, b: Operand) -> Tensor:
    """Elementwise difference."""
    return _binary(Sub, lambda t, v: AddScalar.apply(t, value=-v), a, b)


def mul(a: Tensor, b: Operand) -> Tensor:
    """Elementwise product."""
    return _binary(Mul, lambda t, v: ScalarMul.apply(t, value=v), a, b)


def div(a: Tensor, b: Operand) -> Tensor:
    """Elementwise quotient. A zero divisor is a domain error."""
    if isinstance(b, Real):
        if b == 0:
            raise DomainError("[div] zero divisor")
        return ScalarMul.apply(a, value=1.0 / b)
    return _binary(Div, None, a, b)


def scalar_mul(a: Tensor, value: float) -> Tensor:
    """Multiply every element by a constant."""
    return ScalarMul.apply(a, value=value)


def neg(a: Tensor) -> Tensor:
    """Elementwise negation."""
    return Neg.apply(a)


def abs(a: Tensor) -> Tensor:  # noqa: A001
    """Elementwise absolute value; the gradient at 0 is 0."""
    return Abs.apply(a)


def ln(a: Tensor) -> Tensor:
    """Natural logarithm; raises DomainError naming the first non-positive element."""
    return Ln.apply(a)


def sqrt(a: Tensor) -> Tensor:
    """Elementwise square root of a non-negative tensor."""
    return Sqrt.apply(a)


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp into [lo, hi]; the gradient passes only strictly inside (lo, hi)."""
    if lo > hi:
        raise DomainError(f"[clamp] lo={lo} exceeds hi={hi}")
    return Clamp.apply(a, lo=lo, hi=hi)


def relu(a: Tensor) -> Tensor:
    """Rectified linear unit; the gradient at 0 is 0."""
    return Relu.apply(a)


def sigmoid(a: Tensor) -> Tensor:
    """Logistic function with values strictly inside (0, 1)."""
    return Sigmoid.apply(a)


def softplus(a: Tensor) -> Tensor:
    """ln(1 + exp(a)), evaluated without overflow."""
    return Softplus.apply(a)


def sign(a: Tensor) -> Tensor:
    """Elementwise -1/0/+1 with sign(0) = 0. Never recorded on the tape."""
    return Tensor._wrap(np.sign(a.data))


###################################
# Reductions
###################################


def _sequential_sum(a: np.ndarray) -> float:
    # double accumulation in index order: deterministic for a fixed input
    return np.cumsum(a.reshape(-1), dtype=np.float64)[-1]


class Sum(Function):
    name = "sum"

    @staticmethod
    def forward(node, a):
        if a.size == 0:
            raise EmptyTensor("[sum] empty tensor")
        node.saved["shape"] = a.shape
        return np.asarray(_sequential_sum(a), dtype=a.dtype)

    @staticmethod
    def backward(node, grad):
        return (np.full(node.saved["shape"], grad, dtype=grad.dtype),)


class Mean(Function):
    name = "mean"

    @staticmethod
    def forward(node, a):
        if a.size == 0:
            raise EmptyTensor("[mean] empty tensor")
        node.saved["shape"] = a.shape
        return np.asarray(_sequential_sum(a) / a.size, dtype=a.dtype)

    @staticmethod
    def backward(node, grad):
        shape = node.saved["shape"]
        return (np.full(shape, grad / np.prod(shape), dtype=grad.dtype),)


def sum(a: Tensor) -> Tensor:  # noqa: A001
    """Sum of all elements as a scalar tensor."""
    return Sum.apply(a)


def mean(a: Tensor) -> Tensor:
    """Mean of all elements as a scalar tensor."""
    return Mean.apply(a)


###################################
# Spatial
###################################


def conv_output_extent(extent: int, kernel: int, stride: int, padding: int) -> int:
    """Return the output extent of a convolution along one axis.

    The extent is ``(extent + 2 * padding - kernel) // stride + 1``. It is rejected when the windows
    would leave real (unpadded) input pixels uncovered; leftover padding is allowed.

    :raises NonIntegralExtent: windows do not tile the input
    """
    span = extent + 2 * padding - kernel
    if span < 0:
        raise NonIntegralExtent(f"kernel {kernel} larger than padded extent {extent + 2 * padding}")
    out = span // stride + 1
    last_covered = (out - 1) * stride + kernel - 1
    if last_covered < padding + extent - 1:
        raise NonIntegralExtent(
            f"extent {extent} with kernel {kernel}, stride {stride}, padding {padding} drops input pixels"
        )
    return out


class Conv2d(Function):
    name = "conv2d"

    @staticmethod
    def forward(node, x, weight, bias, stride, padding):
        channels, height, width = x.shape
        out_channels, _, k, _ = weight.shape
        out_h = conv_output_extent(height, k, stride, padding)
        out_w = conv_output_extent(width, k, stride, padding)
        padded = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
        windows = sliding_window_view(padded, (k, k), axis=(1, 2))[:, ::stride, ::stride][:, :out_h, :out_w]
        cols = np.ascontiguousarray(windows.transpose(1, 2, 0, 3, 4)).reshape(out_h * out_w, channels * k * k)
        w2d = weight.reshape(out_channels, -1)
        out = (cols @ w2d.T).T.reshape(out_channels, out_h, out_w) + bias[:, None, None]
        node.saved.update(
            cols=cols, w2d=w2d, x_shape=x.shape, padded_shape=padded.shape, k=k, stride=stride, padding=padding
        )
        return out

    @staticmethod
    def backward(node, grad):
        saved = node.saved
        cols, w2d, k, stride, padding = saved["cols"], saved["w2d"], saved["k"], saved["stride"], saved["padding"]
        out_channels, out_h, out_w = grad.shape
        g2d = grad.reshape(out_channels, out_h * out_w)

        grad_x = grad_w = grad_b = None
        if node.needs_grad(1):
            grad_w = (g2d @ cols).reshape(node.inputs[1].shape)
        if node.needs_grad(2):
            grad_b = g2d.sum(axis=1)
        if node.needs_grad(0):
            channels, height, width = saved["x_shape"]
            gcols = (g2d.T @ w2d).reshape(out_h, out_w, channels, k, k).transpose(2, 0, 1, 3, 4)
            gpad = np.zeros(saved["padded_shape"], dtype=grad.dtype)
            row_stop = (out_h - 1) * stride + 1
            col_stop = (out_w - 1) * stride + 1
            for i in range(k):
                for j in range(k):
                    gpad[:, i : i + row_stop : stride, j : j + col_stop : stride] += gcols[:, :, :, i, j]
            grad_x = gpad[:, padding : padding + height, padding : padding + width]
        return grad_x, grad_w, grad_b


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlate a [C_in, H, W] input with [C_out, C_in, k, k] kernels and add a [C_out] bias.

    :raises ShapeMismatch: inconsistent channel counts, non-square or even kernels
    :raises NonIntegralExtent: the windows do not tile the input
    """
    if x.ndim != 3 or weight.ndim != 4 or bias.ndim != 1:
        raise ShapeMismatch(
            f"[conv2d] expected 3-d input, 4-d weight, 1-d bias; got {x.shape}, {weight.shape}, {bias.shape}"
        )
    out_channels, in_channels, kh, kw = weight.shape
    if kh != kw or kh % 2 == 0:
        raise ShapeMismatch(f"[conv2d] kernel must be square with odd extent, got {kh}x{kw}")
    if in_channels != x.shape[0]:
        raise ShapeMismatch(f"[conv2d] weight expects {in_channels} input channels, input has {x.shape[0]}")
    if bias.shape != (out_channels,):
        raise ShapeMismatch(f"[conv2d] bias shape {bias.shape} does not match {out_channels} output channels")
    if stride < 1 or padding < 0:
        raise ShapeMismatch(f"[conv2d] invalid stride {stride} or padding {padding}")
    return Conv2d.apply(x, weight, bias, stride=stride, padding=padding)


def interpolation_matrix(n_in: int, n_out: int, dtype=np.float64) -> np.ndarray:
    """Return the [n_out, n_in] linear interpolation matrix for half-pixel-centre (align-corners false) resampling."""
    matrix = np.zeros((n_out, n_in), dtype=np.float64)
    scale = n_in / n_out
    for i in range(n_out):
        src = min(max((i + 0.5) * scale - 0.5, 0.0), n_in - 1)
        i0 = int(np.floor(src))
        i1 = min(i0 + 1, n_in - 1)
        frac = src - i0
        matrix[i, i0] += 1.0 - frac
        matrix[i, i1] += frac
    return matrix.astype(dtype)


class Upsample2x(Function):
    name = "bilinear_upsample2x"

    @staticmethod
    def forward(node, x):
        _, height, width = x.shape
        rows = interpolation_matrix(height, 2 * height, x.dtype)
        cols = interpolation_matrix(width, 2 * width, x.dtype)
        node.saved["rows"], node.saved["cols"] = rows, cols
        return rows @ x @ cols.T

    @staticmethod
    def backward(node, grad):
        rows, cols = node.saved["rows"], node.saved["cols"]
        return (rows.T @ grad @ cols,)


def bilinear_upsample2x(x: Tensor) -> Tensor:
    """Double both spatial extents of a [C, H, W] tensor by bilinear interpolation.

    :raises DegenerateExtent: H or W below 2
    """
    if x.ndim != 3:
        raise ShapeMismatch(f"[bilinear_upsample2x] expected [C, H, W], got {x.shape}")
    if x.shape[1] < 2 or x.shape[2] < 2:
        raise DegenerateExtent(f"[bilinear_upsample2x] spatial extent {x.shape[1:]} below 2")
    return Upsample2x.apply(x)


class ForwardDiff(Function):
    name = "forward_diff"

    @staticmethod
    def forward(node, x, axis, edge):
        moved = np.moveaxis(x, axis, 0)
        out = np.zeros_like(moved)
        out[:-1] = moved[1:] - moved[:-1]
        if edge == "clamp":
            out[-1] = moved[-1] - moved[-2]
        node.saved["axis"], node.saved["edge"] = axis, edge
        return np.moveaxis(out, 0, axis)

    @staticmethod
    def backward(node, grad):
        axis, edge = node.saved["axis"], node.saved["edge"]
        g = np.moveaxis(grad, axis, 0)
        out = np.zeros_like(g)
        out[1:] += g[:-1]
        out[:-1] -= g[:-1]
        if edge == "clamp":
            out[-1] += g[-1]
            out[-2] -= g[-1]
        return (np.moveaxis(out, 0, axis),)


def forward_diff(x: Tensor, axis: int, edge: str = "zero") -> Tensor:
    """Forward difference ``x[i+1] - x[i]`` along ``axis``.

    The last entry is 0 for ``edge="zero"`` and repeats the backward difference ``x[n-1] - x[n-2]``
    for ``edge="clamp"``.
    """
    if edge not in ("zero", "clamp"):
        raise DomainError(f"[forward_diff] unknown edge rule {edge!r}")
    axis = axis % x.ndim
    if edge == "clamp" and x.shape[axis] < 2:
        raise DegenerateExtent(f"[forward_diff] clamped edge needs extent >= 2 along axis {axis}")
    return ForwardDiff.apply(x, axis=axis, edge=edge)
