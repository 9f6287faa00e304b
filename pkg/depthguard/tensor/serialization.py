"""Reading and writing single tensors in the DGT1 binary format.

Layout (little endian)::

    magic    4 bytes  b"DGT1"
    dtype    u8       0 = f32, 1 = f64
    ndim     u8
    extents  ndim x u32
    payload  row-major scalars
"""

import struct
from pathlib import Path
from typing import Tuple

import numpy as np

from depthguard.constants import TENSOR_MAGIC
from depthguard.exceptions import FormatError, TruncatedFile
from depthguard.tensor.tensor import DType, Tensor

HEADER = struct.Struct("<4sBB")
_PAYLOAD_DTYPES = {DType.F32: np.dtype("<f4"), DType.F64: np.dtype("<f8")}


def tensor_to_bytes(tensor: Tensor) -> bytes:
    """Encode a tensor as DGT1 bytes."""
    dtype = tensor.dtype
    header = HEADER.pack(TENSOR_MAGIC, int(dtype), tensor.ndim)
    extents = struct.pack(f"<{tensor.ndim}I", *tensor.shape)
    payload = np.ascontiguousarray(tensor.data, dtype=_PAYLOAD_DTYPES[dtype]).tobytes()
    return header + extents + payload


def take_bytes(buffer, offset: int, length: int, what: str) -> bytes:
    if offset + length > len(buffer):
        raise TruncatedFile(f"file ends inside {what}: need {length} bytes, {len(buffer) - offset} left", offset)
    return bytes(buffer[offset : offset + length])


def tensor_from_bytes(buffer, offset: int = 0) -> Tuple[Tensor, int]:
    """Decode one DGT1 tensor starting at ``offset``.

    :returns: the tensor and the offset just past its payload
    :raises FormatError: bad magic or dtype code
    :raises TruncatedFile: the buffer ends early
    """
    magic, code, ndim = HEADER.unpack(take_bytes(buffer, offset, HEADER.size, "tensor header"))
    if magic != TENSOR_MAGIC:
        raise FormatError(f"bad tensor magic {magic!r}, expected {TENSOR_MAGIC!r}", offset)
    if code not in (DType.F32, DType.F64):
        raise FormatError(f"unknown dtype code {code}", offset + 4)
    dtype = DType(code)
    offset += HEADER.size
    shape = struct.unpack(f"<{ndim}I", take_bytes(buffer, offset, 4 * ndim, "tensor extents"))
    offset += 4 * ndim
    count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
    nbytes = count * _PAYLOAD_DTYPES[dtype].itemsize
    payload = take_bytes(buffer, offset, nbytes, "tensor payload")
    array = np.frombuffer(payload, dtype=_PAYLOAD_DTYPES[dtype]).reshape(shape).astype(dtype.numpy)
    return Tensor._wrap(array.copy()), offset + nbytes


def save_tensor(path, tensor: Tensor):
    """Write one tensor to ``path``."""
    Path(path).write_bytes(tensor_to_bytes(tensor))


def load_tensor(path) -> Tensor:
    """Read one tensor from ``path``; trailing bytes are an error."""
    buffer = Path(path).read_bytes()
    tensor, end = tensor_from_bytes(buffer)
    if end != len(buffer):
        raise FormatError(f"{len(buffer) - end} trailing bytes after tensor", end)
    return tensor
