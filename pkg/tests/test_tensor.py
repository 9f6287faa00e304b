from pathlib import Path

import numpy as np
import pytest

from depthguard.exceptions import (
    BackwardError,
    DegenerateExtent,
    DomainError,
    DTypeMismatch,
    EmptyTensor,
    FormatError,
    NonIntegralExtent,
    ShapeMismatch,
    TruncatedFile,
)
from depthguard.tensor import (
    Tensor,
    abs,
    add,
    backward,
    bilinear_upsample2x,
    clamp,
    conv2d,
    div,
    forward_diff,
    ln,
    load_tensor,
    mean,
    mul,
    neg,
    relu,
    save_tensor,
    scalar_mul,
    sigmoid,
    sign,
    softplus,
    sqrt,
    sub,
    sum,
    tensor_from_bytes,
    tensor_to_bytes,
)
from depthguard.tensor.gradcheck import analytic_gradient, numerical_gradient, relative_error
from depthguard.tensor.ops import conv_output_extent


def _f64(values) -> Tensor:
    return Tensor(np.asarray(values, dtype=np.float64), dtype="f64")


def test_conv_identity_kernel():
    """A 1x1 unit kernel returns its input"""
    x = Tensor(np.random.default_rng(0).uniform(size=(1, 4, 5)))
    out = conv2d(x, Tensor(np.ones((1, 1, 1, 1))), Tensor(np.zeros(1)))
    np.testing.assert_array_equal(out.data, x.data)


def test_conv_all_ones_overlap_counts():
    """A 3x3 all-ones kernel over an all-ones 3x3 input counts the overlapping pixels"""
    out = conv2d(Tensor(np.ones((1, 3, 3))), Tensor(np.ones((1, 1, 3, 3))), Tensor(np.zeros(1)), padding=1)
    assert out.data[0, 1, 1] == 9
    assert out.data[0, 0, 0] == 4
    assert out.data[0, 0, 1] == 6


@pytest.mark.parametrize("stride", [1, 2])
@pytest.mark.parametrize("seed", range(20))
def test_conv_gradients_match_finite_differences(seed: int, stride: int):
    """Input, weight and bias gradients of conv2d match central differences"""
    rng = np.random.default_rng(seed)
    c_in, c_out = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    x = rng.normal(size=(c_in, 6, 6))
    w = rng.normal(size=(c_out, c_in, 3, 3))
    b = rng.normal(size=c_out)
    out_side = 6 // stride
    weights = _f64(rng.normal(size=(c_out, out_side, out_side)))

    def wrt_input(t):
        return sum(mul(conv2d(t, _f64(w), _f64(b), stride=stride, padding=1), weights))

    def wrt_weight(t):
        return sum(mul(conv2d(_f64(x), t, _f64(b), stride=stride, padding=1), weights))

    def wrt_bias(t):
        return sum(mul(conv2d(_f64(x), _f64(w), t, stride=stride, padding=1), weights))

    for fn, at in ((wrt_input, x), (wrt_weight, w), (wrt_bias, b)):
        assert relative_error(analytic_gradient(fn, at), numerical_gradient(fn, at)) <= 1e-5


def test_conv_output_extent_rejects_dropped_pixels():
    assert conv_output_extent(16, 3, 2, 1) == 8
    assert conv_output_extent(5, 3, 1, 1) == 5
    with pytest.raises(NonIntegralExtent):
        conv_output_extent(5, 2, 2, 0)
    with pytest.raises(NonIntegralExtent):
        conv_output_extent(2, 5, 1, 0)


def test_conv_rejects_channel_mismatch():
    with pytest.raises(ShapeMismatch):
        conv2d(Tensor(np.ones((2, 4, 4))), Tensor(np.ones((1, 3, 3, 3))), Tensor(np.zeros(1)))


def test_ln_of_half():
    out = ln(Tensor(np.full((2, 2), 0.5)))
    np.testing.assert_allclose(out.data, -0.693147, atol=1e-6)


def test_ln_rejects_non_positive_and_names_index():
    with pytest.raises(DomainError, match=r"\(1,\)"):
        ln(Tensor([1.0, 0.0, 2.0]))


def test_clamp_values_and_gradient():
    out = clamp(Tensor([-2.0, 0.5, 3.0]), 0.0, 1.0)
    np.testing.assert_array_equal(out.data, [0.0, 0.5, 1.0])

    x = Tensor([-2.0, 0.5, 3.0], requires_grad=True)
    backward(sum(clamp(x, 0.0, 1.0)))
    np.testing.assert_array_equal(x.grad, [0.0, 1.0, 0.0])

    with pytest.raises(DomainError):
        clamp(x, 1.0, 0.0)


def test_relu_gradient_at_zero_is_zero():
    x = Tensor([-1.0, 0.0, 2.0], requires_grad=True)
    backward(sum(relu(x)))
    np.testing.assert_array_equal(x.grad, [0.0, 0.0, 1.0])


def test_sigmoid_gradient_matches_finite_differences():
    x = np.random.default_rng(3).normal(size=(3, 4))

    def fn(t):
        return sum(sigmoid(t))

    assert relative_error(analytic_gradient(fn, x), numerical_gradient(fn, x)) <= 1e-6


def test_sigmoid_stays_inside_open_interval():
    out = sigmoid(Tensor([-200.0, 0.0, 200.0]))
    assert out.data.min() > 0
    assert out.data.max() < 1


ELEMENTWISE = {
    "add": lambda t, u: add(t, u),
    "sub": lambda t, u: sub(t, u),
    "mul": lambda t, u: mul(t, u),
    "div": lambda t, u: div(t, add(abs(u), 1.0)),
    "scalar_mul": lambda t, u: scalar_mul(t, -1.7),
    "neg": lambda t, u: neg(t),
    "abs": lambda t, u: abs(t),
    "ln": lambda t, u: ln(add(abs(t), 0.5)),
    "sqrt": lambda t, u: sqrt(add(abs(t), 0.5)),
    "clamp": lambda t, u: clamp(t, -0.5, 0.5),
    "relu": lambda t, u: relu(t),
    "sigmoid": lambda t, u: sigmoid(t),
    "softplus": lambda t, u: softplus(t),
    "upsample": lambda t, u: bilinear_upsample2x(t),
    "forward_diff_zero": lambda t, u: forward_diff(t, axis=-1, edge="zero"),
    "forward_diff_clamp": lambda t, u: forward_diff(t, axis=-2, edge="clamp"),
}


@pytest.mark.parametrize("name", sorted(ELEMENTWISE))
@pytest.mark.parametrize("seed", range(20))
def test_op_gradients_match_finite_differences(name, seed):
    """Analytic input gradients of every differentiable op match central differences"""
    rng = np.random.default_rng(seed)
    # magnitudes in [0.1, 1] keep finite-difference steps clear of the abs/relu kinks and the clamp bounds
    x = rng.choice([-1.0, 1.0], size=(2, 3, 3)) * rng.uniform(0.1, 1.0, size=(2, 3, 3))
    x[np.abs(np.abs(x) - 0.5) < 0.01] = 0.3
    other = _f64(rng.normal(size=(2, 3, 3)))
    op = ELEMENTWISE[name]
    out = op(_f64(x), other)
    weights = _f64(rng.normal(size=out.shape))

    def fn(t):
        return sum(mul(op(t, other), weights))

    assert relative_error(analytic_gradient(fn, x), numerical_gradient(fn, x, step=1e-4)) <= 1e-5


def test_upsample_constant_and_ramp():
    np.testing.assert_allclose(bilinear_upsample2x(Tensor(np.full((2, 3, 4), 0.7))).data, 0.7, rtol=1e-6)
    ramp = bilinear_upsample2x(_f64([[[0.0, 1.0], [0.0, 1.0]]]))
    np.testing.assert_allclose(ramp.data[0, 0], [0.0, 0.25, 0.75, 1.0])
    with pytest.raises(DegenerateExtent):
        bilinear_upsample2x(Tensor(np.ones((1, 1, 4))))


def test_reductions():
    assert mean(Tensor([1.0, 2.0, 3.0, 6.0])).item() == 3.0
    x = Tensor(np.ones((2, 3)), requires_grad=True)
    backward(sum(x))
    np.testing.assert_array_equal(x.grad, np.ones((2, 3)))
    y = Tensor(np.ones(4), requires_grad=True)
    backward(mean(y))
    np.testing.assert_allclose(y.grad, np.full(4, 0.25))
    with pytest.raises(EmptyTensor):
        mean(Tensor(np.zeros(0)))


def test_reductions_are_zero_dimensional():
    """Reductions give shape () tensors that backward accepts"""
    x = Tensor(np.random.default_rng(0).uniform(size=(1, 4, 4)), requires_grad=True)
    assert mean(x).shape == ()
    assert sum(x).shape == ()
    assert mul(mean(x), mean(x)).shape == ()
    backward(mean(x))
    assert x.grad.shape == (1, 4, 4)


def test_backward_of_sum_of_squares():
    x = _f64([1.0, -2.0, 3.0]).requires_grad_()
    backward(sum(mul(x, x)))
    np.testing.assert_array_equal(x.grad, [2.0, -4.0, 6.0])


def test_backward_accumulates_until_reset():
    x = _f64([1.0, 2.0]).requires_grad_()
    backward(sum(x))
    backward(sum(x))
    np.testing.assert_array_equal(x.grad, [2.0, 2.0])
    x.zero_grad()
    assert x.grad is None


def test_backward_reaches_shared_subexpressions():
    x = _f64([2.0]).requires_grad_()
    y = mul(x, x)
    backward(sum(add(y, y)))
    np.testing.assert_array_equal(x.grad, [8.0])


def test_backward_errors():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(BackwardError):
        backward(mul(x, x))
    with pytest.raises(BackwardError):
        backward(sum(Tensor([1.0, 2.0])))


def test_tape_replay_is_deterministic():
    rng = np.random.default_rng(4)
    w = _f64(rng.normal(size=(2, 3, 3, 3)))
    b = _f64(rng.normal(size=2))
    x = rng.uniform(size=(3, 8, 8))

    def fn(t):
        return mean(sigmoid(conv2d(t, w, b, stride=2, padding=1)))

    first, second = analytic_gradient(fn, x), analytic_gradient(fn, x)
    np.testing.assert_array_equal(first, second)
    assert fn(_f64(x)).item() == fn(_f64(x)).item()


def test_sign_examples():
    np.testing.assert_array_equal(sign(Tensor([-3.2, 0.0, 1e-9])).data, [-1.0, 0.0, 1.0])
    t = Tensor(np.random.default_rng(5).normal(size=10))
    np.testing.assert_array_equal(sign(sign(t)).data, sign(t).data)
    np.testing.assert_array_equal(sign(neg(t)).data, -sign(t).data)
    assert not sign(Tensor([1.0], requires_grad=True)).requires_grad


def test_mixed_precision_is_rejected():
    with pytest.raises(DTypeMismatch):
        add(Tensor([1.0], dtype="f32"), Tensor([1.0], dtype="f64"))


def test_binary_ops_do_not_broadcast():
    with pytest.raises(ShapeMismatch):
        add(Tensor(np.ones(3)), Tensor(np.ones(2)))


def test_division_by_zero_is_a_domain_error():
    with pytest.raises(DomainError):
        div(Tensor([1.0]), Tensor([0.0]))


def test_tensor_file_round_trip(tmp_path: Path):
    """DGT1 files round-trip bit-exactly in both precisions"""
    for dtype in ("f32", "f64"):
        t = Tensor(np.random.default_rng(6).normal(size=(2, 3, 4)), dtype=dtype)
        path = tmp_path / f"t_{dtype}.dgt"
        save_tensor(path, t)
        loaded = load_tensor(path)
        assert loaded.dtype == t.dtype
        assert loaded.data.tobytes() == t.data.tobytes()
        assert tensor_to_bytes(loaded) == path.read_bytes()


def test_tensor_bytes_errors():
    encoded = tensor_to_bytes(Tensor(np.ones((2, 2))))
    with pytest.raises(TruncatedFile) as info:
        tensor_from_bytes(encoded[:-3])
    assert info.value.offset is not None
    with pytest.raises(FormatError):
        tensor_from_bytes(b"XXXX" + encoded[4:])
