"""Contains the Tensor class, the tape node and the reverse-mode backward pass."""

from enum import IntEnum
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from depthguard.exceptions import BackwardError, DomainError, DTypeMismatch, NonFiniteValue


class DType(IntEnum):
    """Scalar precision tag. The integer value is the DGT1 dtype code."""

    F32 = 0
    F64 = 1

    @property
    def numpy(self) -> np.dtype:
        """Numpy dtype used for storage."""
        return np.dtype(np.float32) if self is DType.F32 else np.dtype(np.float64)

    @property
    def label(self) -> str:
        """Short name, e.g. ``f32``."""
        return "f32" if self is DType.F32 else "f64"

    @classmethod
    def parse(cls, value) -> "DType":
        """Build a DType from a DType, a short name ("f32"/"f64") or a numpy dtype."""
        if isinstance(value, DType):
            return value
        if isinstance(value, str):
            lookup = {"f32": cls.F32, "float32": cls.F32, "f64": cls.F64, "float64": cls.F64}
            if value in lookup:
                return lookup[value]
            raise DomainError(f"unknown dtype tag {value!r}")
        dt = np.dtype(value)
        if dt == np.float32:
            return cls.F32
        if dt == np.float64:
            return cls.F64
        raise DomainError(f"unsupported numpy dtype {dt}")


class TapeNode:
    """One recorded operation: the op, the tensors it consumed, and what its backward rule needs."""

    __slots__ = ("op", "inputs", "saved", "function")

    def __init__(self, op: str, inputs: Tuple["Tensor", ...], function: type):
        self.op = op
        self.inputs = inputs
        self.saved: Dict[str, Any] = {}
        self.function = function

    def needs_grad(self, index: int) -> bool:
        """Whether the input at ``index`` takes part in differentiation."""
        return self.inputs[index].requires_grad

    def __repr__(self):
        return f"TapeNode({self.op}, inputs={len(self.inputs)})"


class Tensor:
    """A dense row-major array of real scalars with optional gradient tracking.

    Tensors are value-like: operations never modify their inputs, so a tensor can be read from any
    number of threads. Only leaves (tensors created directly with ``requires_grad=True``) receive a
    ``grad`` buffer during :func:`backward`.
    """

    __slots__ = ("data", "requires_grad", "grad", "_node", "__weakref__")

    def __init__(self, data, dtype=None, requires_grad: bool = False):
        """Initialize - create a tensor from array-like data.

        :param data: nested sequence, scalar or numpy array; always copied
        :param dtype: precision tag ("f32", "f64" or a DType), single precision by default
        :param requires_grad: mark the tensor as a differentiable leaf
        """
        if dtype is None:
            dtype = DType.parse(data.dtype) if isinstance(data, Tensor) else DType.F32
        dtype = DType.parse(dtype)
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.array(data, dtype=dtype.numpy, copy=True, order="C")
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._node: Optional[TapeNode] = None

    @classmethod
    def _wrap(cls, array: np.ndarray, requires_grad: bool = False, node: Optional[TapeNode] = None) -> "Tensor":
        """Adopt an array without copying (internal use by ops)."""
        t = cls.__new__(cls)
        t.data = np.asarray(array, order="C")
        t.requires_grad = requires_grad
        t.grad = None
        t._node = node
        return t

    @property
    def shape(self) -> Tuple[int, ...]:
        """Extents, outermost first."""
        return self.data.shape

    @property
    def dtype(self) -> DType:
        """Precision tag."""
        return DType.parse(self.data.dtype)

    @property
    def ndim(self) -> int:
        """Number of dimensions."""
        return self.data.ndim

    @property
    def size(self) -> int:
        """Number of scalars."""
        return self.data.size

    @property
    def node(self) -> Optional[TapeNode]:
        """The tape node that produced this tensor, if it was recorded."""
        return self._node

    @property
    def is_leaf(self) -> bool:
        """Whether the tensor was created directly rather than by a recorded op."""
        return self._node is None

    def numpy(self) -> np.ndarray:
        """Return a copy of the data as a numpy array."""
        return self.data.copy()

    def item(self) -> float:
        """Return the value of a one-element tensor as a Python float."""
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        """Return a copy that is not part of any tape and does not require gradients."""
        return Tensor(self.data, dtype=self.dtype)

    def requires_grad_(self, flag: bool = True) -> "Tensor":
        """Set the leaf flag in place and return self."""
        self.requires_grad = flag
        return self

    def zero_grad(self):
        """Drop the accumulated gradient."""
        self.grad = None

    def astype(self, dtype) -> "Tensor":
        """Return a detached copy in another precision."""
        return Tensor(self.data, dtype=dtype)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype.label}{flag})"

    def __len__(self):
        return self.shape[0]

    def __add__(self, other):
        from depthguard.tensor import ops

        return ops.add(self, other)

    def __radd__(self, other):
        from depthguard.tensor import ops

        return ops.add(self, other)

    def __sub__(self, other):
        from depthguard.tensor import ops

        return ops.sub(self, other)

    def __rsub__(self, other):
        from depthguard.tensor import ops

        return ops.add(ops.neg(self), other)

    def __mul__(self, other):
        from depthguard.tensor import ops

        return ops.mul(self, other)

    def __rmul__(self, other):
        from depthguard.tensor import ops

        return ops.mul(self, other)

    def __truediv__(self, other):
        from depthguard.tensor import ops

        return ops.div(self, other)

    def __neg__(self):
        from depthguard.tensor import ops

        return ops.neg(self)


class Function:
    """Base class for differentiable operations.

    Subclasses implement ``forward(node, *arrays, **params) -> array`` and
    ``backward(node, grad) -> tuple of arrays (or None per input)``; both receive the TapeNode so the
    forward rule can stash intermediates in ``node.saved``.
    """

    name = "function"

    @staticmethod
    def forward(node: TapeNode, *arrays: np.ndarray, **params) -> np.ndarray:
        raise NotImplementedError("Subclass must implement forward()")

    @staticmethod
    def backward(node: TapeNode, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        raise NotImplementedError("Subclass must implement backward()")

    @classmethod
    def apply(cls, *inputs: Tensor, **params) -> Tensor:
        """Run the forward rule and record a tape node when any input requires grad."""
        dtype = inputs[0].data.dtype
        for t in inputs[1:]:
            if t.data.dtype != dtype:
                raise DTypeMismatch(f"[{cls.name}] operands mix {dtype} and {t.data.dtype}")
        node = TapeNode(cls.name, tuple(inputs), cls)
        out = cls.forward(node, *[t.data for t in inputs], **params)
        out = np.asarray(out, dtype=dtype)
        if not np.isfinite(out).all():
            raise NonFiniteValue(f"[{cls.name}] forward produced non-finite values")
        if any(t.requires_grad for t in inputs):
            return Tensor._wrap(out, requires_grad=True, node=node)
        return Tensor._wrap(out)


def _topological_order(root: Tensor):
    """Return every tensor reachable from ``root`` that requires grad, inputs before consumers."""
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        tensor, expanded = stack.pop()
        if expanded:
            order.append(tensor)
            continue
        if id(tensor) in visited:
            continue
        visited.add(id(tensor))
        stack.append((tensor, True))
        if tensor._node is not None:
            for parent in tensor._node.inputs:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
    return order


def backward(loss: Tensor):
    """Populate ``grad`` of every leaf that requires grad and contributed to ``loss``.

    Gradients accumulate: calling backward twice without :meth:`Tensor.zero_grad` adds them.

    :param loss: a scalar (shape ``()``) tensor
    :raises BackwardError: loss is not a scalar, or is not attached to any tape
    :raises NonFiniteValue: a backward rule produced NaN or Inf
    """
    if loss.shape != ():
        raise BackwardError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise BackwardError("loss is detached: nothing in its history requires grad")

    seed = np.ones((), dtype=loss.data.dtype)
    if loss._node is None:
        loss.grad = seed.copy() if loss.grad is None else loss.grad + seed
        return

    order = _topological_order(loss)
    grads = {id(loss): seed}
    for tensor in reversed(order):
        grad = grads.pop(id(tensor), None)
        if grad is None:
            continue
        node = tensor._node
        if node is None:
            tensor.grad = grad.copy() if tensor.grad is None else tensor.grad + grad
            continue
        input_grads = node.function.backward(node, grad)
        for parent, parent_grad in zip(node.inputs, input_grads):
            if parent_grad is None or not parent.requires_grad:
                continue
            parent_grad = np.asarray(parent_grad, dtype=parent.data.dtype)
            if not np.isfinite(parent_grad).all():
                raise NonFiniteValue(f"[{node.op}] backward produced non-finite gradients")
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + parent_grad
            else:
                grads[id(parent)] = parent_grad
