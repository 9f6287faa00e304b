"""Elementwise masking of an RGB image by a single-channel saliency map."""

from depthguard.exceptions import ShapeMismatch
from depthguard.tensor import Function, Tensor


class MaskChannels(Function):
    """x[c] * m[0] for every channel c, differentiable in both arguments."""

    name = "apply_mask"

    @staticmethod
    def forward(node, x, m):
        node.saved["x"], node.saved["m"] = x, m
        return x * m

    @staticmethod
    def backward(node, grad):
        x, m = node.saved["x"], node.saved["m"]
        grad_x = grad * m if node.needs_grad(0) else None
        grad_m = (grad * x).sum(axis=0, keepdims=True) if node.needs_grad(1) else None
        return grad_x, grad_m


def apply_mask(x: Tensor, m: Tensor) -> Tensor:
    """Multiply each channel of a [C, H, W] image by a [1, H, W] mask.

    :raises ShapeMismatch: the mask is not single channel or its spatial extent differs from the image
    """
    if x.ndim != 3 or m.ndim != 3 or m.shape[0] != 1 or m.shape[1:] != x.shape[1:]:
        raise ShapeMismatch(f"[apply_mask] cannot mask image {x.shape} with mask {m.shape}")
    return MaskChannels.apply(x, m)
