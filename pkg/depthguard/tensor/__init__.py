from .tensor import DType, Function, TapeNode, Tensor, backward
from .ops import (
    abs,
    add,
    bilinear_upsample2x,
    clamp,
    conv2d,
    div,
    forward_diff,
    ln,
    mean,
    mul,
    neg,
    relu,
    scalar_mul,
    sigmoid,
    sign,
    softplus,
    sqrt,
    sub,
    sum,
)
from .serialization import load_tensor, save_tensor, tensor_from_bytes, tensor_to_bytes
