"""Scalar objectives: the depth/gradient/normal training loss, mask sparsity and the attack objectives."""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional

import numpy as np

from depthguard.constants import DEPTH_FLOOR, LOG_OFFSET
from depthguard.exceptions import DomainError, check_shape
from depthguard.tensor import Tensor, abs, add, clamp, div, forward_diff, ln, mean, mul, scalar_mul, sqrt, sub


class LossKind(str, Enum):
    """Objectives an attacker can maximize."""

    L1 = "l1"
    L2 = "l2"
    REL = "rel"
    LOG10 = "log10"
    LDIF = "ldif"

    @classmethod
    def parse(cls, value) -> "LossKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise DomainError(f"unknown loss kind {value!r}, expected one of {[k.value for k in cls]}")


@dataclass
class LossBreakdown:
    """Components of the depth/gradient/normal loss; ``total`` is their exact sum."""

    l_depth: Tensor
    l_grad: Tensor
    l_normal: Tensor
    total: Tensor
    sparsity: Optional[Tensor] = None
    lam: float = 0.0

    def objective(self) -> Tensor:
        """Training objective ``total + lam * sparsity``."""
        if self.sparsity is None or self.lam == 0.0:
            return self.total
        return add(self.total, scalar_mul(self.sparsity, self.lam))

    def as_row(self) -> Dict[str, float]:
        """Plain floats keyed by CSV column name."""
        return {
            "l_depth": self.l_depth.item(),
            "l_grad": self.l_grad.item(),
            "l_normal": self.l_normal.item(),
            "total": self.total.item(),
            "sparsity": float("nan") if self.sparsity is None else self.sparsity.item(),
        }


def f_log(e: Tensor) -> Tensor:
    """Elementwise ``ln(e + 0.5)`` for a nonnegative error map.

    :raises DomainError: any element is negative
    """
    if (e.data < 0).any():
        index = tuple(int(i) for i in np.argwhere(e.data < 0)[0])
        raise DomainError(f"[f_log] negative error {float(e.data[index])} at index {index}")
    return ln(e + LOG_OFFSET)


def _error_map(y: Tensor, y_true: Tensor, caller: str) -> Tensor:
    check_shape(caller, y.shape, y_true.shape, "depth maps")
    return abs(sub(y_true, y))


def l_depth(y: Tensor, y_true: Tensor) -> Tensor:
    """Mean of ``f_log`` over the absolute depth error."""
    return mean(f_log(_error_map(y, y_true, "l_depth")))


def l_grad(y: Tensor, y_true: Tensor) -> Tensor:
    """Mean of ``f_log`` over the absolute horizontal and vertical differences of the error map.

    The difference past the last column (row) is zero.
    """
    e = _error_map(y, y_true, "l_grad")
    du = abs(forward_diff(e, axis=-1, edge="zero"))
    dv = abs(forward_diff(e, axis=-2, edge="zero"))
    return add(mean(f_log(du)), mean(f_log(dv)))


def _normal_terms(d: Tensor):
    du = forward_diff(d, axis=-1, edge="clamp")
    dv = forward_diff(d, axis=-2, edge="clamp")
    length = sqrt(add(add(mul(du, du), mul(dv, dv)), 1.0))
    return du, dv, length


def l_normal(y: Tensor, y_true: Tensor) -> Tensor:
    """Mean of ``1 - cos`` of the angle between surface normals ``(-du, -dv, 1)`` of the two maps."""
    check_shape("l_normal", y.shape, y_true.shape, "depth maps")
    du1, dv1, len1 = _normal_terms(y_true)
    du2, dv2, len2 = _normal_terms(y)
    dot = add(add(mul(du1, du2), mul(dv1, dv2)), 1.0)
    cos = clamp(div(dot, mul(len1, len2)), -1.0, 1.0)
    return mean(_one_minus(cos))


def _one_minus(t: Tensor) -> Tensor:
    return add(scalar_mul(t, -1.0), 1.0)


def l_dif(y: Tensor, y_true: Tensor, mask: Optional[Tensor] = None, lam: float = 0.0) -> LossBreakdown:
    """Sum of the depth, gradient and normal losses with the breakdown retained.

    :param y: estimated depth
    :param y_true: target depth
    :param mask: optional saliency mask whose sparsity is reported (and weighted by ``lam``)
    :param lam: sparsity weight used by :meth:`LossBreakdown.objective`
    """
    depth = l_depth(y, y_true)
    grad = l_grad(y, y_true)
    normal = l_normal(y, y_true)
    total = add(add(depth, grad), normal)
    return LossBreakdown(depth, grad, normal, total, None if mask is None else sparsity(mask), lam)


def sparsity(m: Tensor) -> Tensor:
    """Mean mask value, i.e. the normalized L1 norm of a mask in [0, 1].

    :raises DomainError: a mask value lies outside [0, 1]
    """
    if m.size and ((m.data < 0).any() or (m.data > 1).any()):
        raise DomainError(f"[sparsity] mask values must lie in [0, 1], got range [{m.data.min()}, {m.data.max()}]")
    return mean(m)


def _floored(t: Tensor) -> Tensor:
    return clamp(t, DEPTH_FLOOR, math.inf)


def attack_objective(kind, y: Tensor, y_true: Tensor) -> Tensor:
    """Evaluate one of the attack objectives of ``y`` against ``y_true``.

    REL and LOG10 clamp both maps below at the depth floor before taking ratios or logs.
    """
    kind = LossKind.parse(kind)
    check_shape("attack_objective", y.shape, y_true.shape, "depth maps")
    if kind is LossKind.L1:
        return mean(abs(sub(y_true, y)))
    if kind is LossKind.L2:
        diff = sub(y_true, y)
        return mean(mul(diff, diff))
    if kind is LossKind.REL:
        target = _floored(y_true)
        return mean(div(abs(sub(target, _floored(y))), target))
    if kind is LossKind.LOG10:
        diff = sub(ln(_floored(y_true)), ln(_floored(y)))
        return scalar_mul(mean(abs(diff)), 1.0 / math.log(10.0))
    return l_dif(y, y_true).total
