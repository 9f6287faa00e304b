"""Forward passes of the depth estimator and the saliency predictor."""

from typing import Callable

from depthguard.constants import DEPTH_FLOOR
from depthguard.exceptions import ShapeMismatch, SpecError
from depthguard.networks.spec import NetworkSpec
from depthguard.networks.store import ParameterStore, init_parameters
from depthguard.tensor import Tensor, bilinear_upsample2x, conv2d, relu, sigmoid, softplus

Model = Callable[[Tensor], Tensor]


def build_network(spec: NetworkSpec, seed: int, dtype="f32", role: str = None) -> ParameterStore:
    """Deterministically initialize a network described by ``spec``."""
    return init_parameters(spec, seed, dtype=dtype, role=role)


def _trunk(params: ParameterStore, x: Tensor) -> Tensor:
    spec = params.spec
    if x.shape != spec.input_dims:
        raise ShapeMismatch(f"[{spec.role} network] input shape {x.shape} does not match spec {spec.input_dims}")
    h = x
    for layer in spec.layers:
        if layer.upsample:
            h = bilinear_upsample2x(h)
        h = conv2d(
            h,
            params[f"{layer.name}/weight"],
            params[f"{layer.name}/bias"],
            stride=layer.stride,
            padding=layer.kernel // 2,
        )
        if layer.name != "head":
            h = relu(h)
    return h


def forward_depth(params: ParameterStore, x: Tensor) -> Tensor:
    """Predict a (1, H/2, W/2) depth map; every value is at least ``DEPTH_FLOOR``.

    :raises SpecError: ``params`` belong to a saliency network
    :raises ShapeMismatch: ``x`` does not have the spec's input shape
    """
    if params.spec.role != "depth":
        raise SpecError(f"forward_depth needs a depth network, got a {params.spec.role} network")
    return softplus(_trunk(params, x)) + DEPTH_FLOOR


def forward_saliency(params: ParameterStore, x: Tensor) -> Tensor:
    """Predict a (1, H, W) saliency mask with values strictly inside (0, 1).

    :raises SpecError: ``params`` belong to a depth network
    :raises ShapeMismatch: ``x`` does not have the spec's input shape
    """
    if params.spec.role != "saliency":
        raise SpecError(f"forward_saliency needs a saliency network, got a {params.spec.role} network")
    return sigmoid(_trunk(params, x))


def forward(params: ParameterStore, x: Tensor) -> Tensor:
    """Dispatch to the forward pass matching the store's spec role."""
    if params.spec.role == "depth":
        return forward_depth(params, x)
    return forward_saliency(params, x)


def as_model(params: ParameterStore) -> Model:
    """Close over ``params`` so the network can be called as ``model(x)``."""

    def model(x: Tensor) -> Tensor:
        return forward(params, x)

    return model
