"""Contains the ParameterStore class."""

import hashlib
from collections import OrderedDict
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from depthguard.exceptions import CheckpointMismatch, SpecError
from depthguard.networks.spec import NetworkSpec
from depthguard.tensor import Tensor


class ParameterStore:
    """Named network parameters plus the metadata needed to rebuild and identify them.

    Parameter order follows the NetworkSpec layer plan (``<layer>/weight`` then ``<layer>/bias``), which is
    also the order of the checkpoint file.
    """

    def __init__(
        self,
        spec: NetworkSpec,
        params: Dict[str, Tensor],
        role: Optional[str] = None,
        seed: Optional[int] = None,
        epoch: int = 0,
    ):
        """Initialize - wrap a complete set of parameters for ``spec``.

        :param spec: architecture the parameters belong to
        :param params: mapping of parameter name to tensor
        :param role: optional role tag (N, N_adv, G or G_adv)
        :param seed: initialization seed, if known
        :param epoch: number of completed training epochs
        :raises CheckpointMismatch: names or shapes do not match the spec
        """
        self.spec = spec
        self.role = role
        self.seed = seed
        self.epoch = int(epoch)
        self._params: "OrderedDict[str, Tensor]" = OrderedDict()
        expected = expected_shapes(spec)
        missing = [n for n in expected if n not in params]
        extra = [n for n in params if n not in expected]
        if missing or extra:
            raise CheckpointMismatch(f"parameter names do not match the spec: missing {missing}, unexpected {extra}")
        for name, shape in expected.items():
            tensor = params[name]
            if tensor.shape != shape:
                raise CheckpointMismatch(f"{name}: shape {tensor.shape} does not match spec shape {shape}")
            self._params[name] = tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def names(self) -> List[str]:
        """Parameter names in layer order."""
        return list(self._params)

    def items(self) -> List[Tuple[str, Tensor]]:
        """(name, tensor) pairs in layer order."""
        return list(self._params.items())

    def tensors(self) -> List[Tensor]:
        """Parameter tensors in layer order."""
        return list(self._params.values())

    def parameter_count(self) -> int:
        """Total number of scalars held."""
        return sum(t.size for t in self._params.values())

    def copy(self, requires_grad: bool = False, role: Optional[str] = None) -> "ParameterStore":
        """Return a deep copy, optionally re-tagged and marked trainable."""
        params = {n: Tensor(t.data, dtype=t.dtype, requires_grad=requires_grad) for n, t in self._params.items()}
        return ParameterStore(self.spec, params, role=role or self.role, seed=self.seed, epoch=self.epoch)

    def frozen(self) -> "ParameterStore":
        """Return a copy whose tensors never receive gradients."""
        return self.copy(requires_grad=False)

    def trainable(self) -> "ParameterStore":
        """Return a copy whose tensors are differentiable leaves."""
        return self.copy(requires_grad=True)

    def zero_grad(self):
        for t in self._params.values():
            t.zero_grad()

    def fingerprint(self) -> str:
        """Hex digest over names and raw parameter bytes; equal stores have equal fingerprints."""
        digest = hashlib.sha256()
        for name, t in self._params.items():
            digest.update(name.encode("utf-8"))
            digest.update(np.ascontiguousarray(t.data).tobytes())
        return digest.hexdigest()

    def __repr__(self):
        return f"ParameterStore(role={self.role}, spec={self.spec.role}, params={self.parameter_count()})"


def expected_shapes(spec: NetworkSpec) -> "OrderedDict[str, Tuple[int, ...]]":
    """Return the ordered parameter names and shapes implied by ``spec``."""
    shapes = OrderedDict()
    for layer in spec.layers:
        shapes[f"{layer.name}/weight"] = (layer.out_channels, layer.in_channels, layer.kernel, layer.kernel)
        shapes[f"{layer.name}/bias"] = (layer.out_channels,)
    return shapes


def init_parameters(spec: NetworkSpec, seed: int, dtype="f32", role: Optional[str] = None) -> ParameterStore:
    """Initialize parameters for ``spec``: He-normal weights, zero biases.

    Identical (spec, seed) pairs yield bit-identical stores.

    :raises SpecError: negative seed
    """
    if seed < 0:
        raise SpecError(f"seed must be non-negative, got {seed}")
    rng = np.random.default_rng(seed)
    params = {}
    for layer in spec.layers:
        fan_in = layer.in_channels * layer.kernel**2
        std = np.sqrt(2.0 / fan_in)
        shape = (layer.out_channels, layer.in_channels, layer.kernel, layer.kernel)
        params[f"{layer.name}/weight"] = Tensor(rng.normal(0.0, std, size=shape), dtype=dtype)
        params[f"{layer.name}/bias"] = Tensor(np.zeros(layer.out_channels), dtype=dtype)
    return ParameterStore(spec, params, role=role, seed=seed)
