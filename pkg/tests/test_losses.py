import math

import numpy as np
import pytest

from depthguard.exceptions import DomainError, ShapeMismatch
from depthguard.losses import LossKind, attack_objective, f_log, l_depth, l_dif, l_grad, l_normal, sparsity
from depthguard.tensor import Tensor, backward

LN_HALF = math.log(0.5)


def _map(values, shape) -> Tensor:
    return Tensor(np.asarray(values, dtype=np.float64).reshape(shape), dtype="f64")


def test_f_log_values():
    np.testing.assert_allclose(f_log(Tensor([0.5, 0.0])).data, [0.0, LN_HALF], atol=1e-6)
    with pytest.raises(DomainError, match=r"\(1,\)"):
        f_log(Tensor([0.2, -0.1]))


def test_l_depth_examples():
    y = _map(np.random.default_rng(0).uniform(1, 5, size=4), (1, 2, 2))
    assert l_depth(y, y).item() == pytest.approx(LN_HALF, abs=1e-6)
    assert l_depth(y + 0.5, y).item() == pytest.approx(0.0, abs=1e-6)

    y_true = _map([1, 1, 2, 2], (1, 2, 2))
    pred = _map([1, 2, 2, 4], (1, 2, 2))
    expected = (2 * LN_HALF + math.log(1.5) + math.log(2.5)) / 4
    assert l_depth(pred, y_true).item() == pytest.approx(expected, abs=1e-6)
    assert expected == pytest.approx(-0.016135, abs=1e-6)


def test_l_grad_examples():
    y = _map(np.random.default_rng(1).uniform(1, 5, size=12), (1, 3, 4))
    assert l_grad(y, y).item() == pytest.approx(2 * LN_HALF, abs=1e-6)
    assert l_grad(y + 0.7, y).item() == pytest.approx(2 * LN_HALF, abs=1e-6)


def test_l_grad_two_pixel_stencil():
    """Error map [0, 1]: one horizontal difference of 1, the padded edge and the single row give zeros"""
    y_true = _map([1.0, 1.0], (1, 1, 2))
    y = _map([1.0, 2.0], (1, 1, 2))
    expected = (math.log(1.5) + LN_HALF) / 2 + LN_HALF
    assert l_grad(y, y_true).item() == pytest.approx(expected, abs=1e-9)


def test_l_normal_examples():
    y = _map(np.random.default_rng(2).uniform(1, 5, size=16), (1, 4, 4))
    assert l_normal(y, y).item() == pytest.approx(0.0, abs=1e-9)
    assert l_normal(y + 1.3, y).item() == pytest.approx(0.0, abs=1e-9)

    ramp = _map([0.0, 1.0, 0.0, 1.0], (1, 2, 2))
    assert l_normal(ramp, -ramp).item() == pytest.approx(1.0, abs=1e-9)


def test_l_dif_total_is_exact_sum():
    y_true = _map(np.random.default_rng(3).uniform(1, 5, size=16), (1, 4, 4))
    assert l_dif(y_true, y_true).total.item() == pytest.approx(3 * LN_HALF, abs=1e-6)
    assert 3 * LN_HALF == pytest.approx(-2.079442, abs=1e-6)

    y = _map(np.random.default_rng(4).uniform(1, 5, size=16), (1, 4, 4))
    parts = l_dif(y, y_true)
    assert parts.total.item() == parts.l_depth.item() + parts.l_grad.item() + parts.l_normal.item()
    assert parts.sparsity is None
    assert parts.objective() is parts.total


def test_l_dif_objective_adds_weighted_sparsity():
    y = _map(np.ones(4), (1, 2, 2))
    mask = _map([1.0, 0.0, 1.0, 0.0], (1, 2, 2))
    parts = l_dif(y, y, mask=mask, lam=2.0)
    assert parts.sparsity.item() == pytest.approx(0.5)
    assert parts.objective().item() == pytest.approx(3 * LN_HALF + 1.0, abs=1e-6)
    assert parts.objective().shape == ()
    assert parts.as_row()["sparsity"] == pytest.approx(0.5)


def test_l_dif_is_differentiable():
    y_true = _map(np.random.default_rng(5).uniform(1, 5, size=16), (1, 4, 4))
    y = Tensor(np.random.default_rng(6).uniform(1, 5, size=(1, 4, 4)), dtype="f64", requires_grad=True)
    backward(l_dif(y, y_true).total)
    assert np.isfinite(y.grad).all()
    assert np.abs(y.grad).max() > 0


def test_sparsity_examples():
    assert sparsity(Tensor(np.ones((1, 4, 4)))).item() == 1.0
    assert sparsity(Tensor(np.zeros((1, 4, 4)))).item() == 0.0
    assert sparsity(Tensor(np.array([1.0, 1.0, 0.0, 0.0]).reshape(1, 2, 2))).item() == 0.5
    with pytest.raises(DomainError):
        sparsity(Tensor([1.5, 0.0]))


@pytest.mark.parametrize(
    "kind, expected",
    [(LossKind.L1, 1.0), (LossKind.L2, 1.0), (LossKind.REL, 0.5), (LossKind.LOG10, 0.30103)],
)
def test_attack_objectives_on_single_pixel(kind: LossKind, expected: float):
    assert attack_objective(kind, _map([1.0], (1, 1, 1)), _map([2.0], (1, 1, 1))).item() == pytest.approx(
        expected, abs=1e-5
    )


def test_attack_objectives_clamp_below_floor():
    y = _map([0.0, -1.0], (1, 1, 2))
    y_true = _map([0.0, 2.0], (1, 1, 2))
    for kind in ("rel", "log10"):
        value = attack_objective(kind, y, y_true).item()
        assert np.isfinite(value)


def test_attack_objective_errors():
    with pytest.raises(DomainError):
        LossKind.parse("huber")
    assert LossKind.parse("LDIF") is LossKind.LDIF
    with pytest.raises(ShapeMismatch):
        attack_objective("l1", _map([1.0, 2.0], (1, 1, 2)), _map([1.0], (1, 1, 1)))
