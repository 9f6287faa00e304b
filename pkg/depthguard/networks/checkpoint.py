"""Reading and writing parameter stores in the DGW1 checkpoint format.

Layout (little endian)::

    magic      4 bytes  b"DGW1"
    version    u16
    spec_hash  u64      hash of the canonical network spec
    count      u32      number of parameters
    count x    u16 name length, UTF-8 name, DGT1 tensor
    meta_len   u32
    metadata   canonical JSON: role, seed, epoch, spec
"""

import json
import struct
from pathlib import Path
from typing import Optional

from loguru import logger

from depthguard.constants import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from depthguard.exceptions import CheckpointMismatch, FormatError, SpecError
from depthguard.networks.spec import NetworkSpec
from depthguard.networks.store import ParameterStore
from depthguard.tensor.serialization import take_bytes, tensor_from_bytes, tensor_to_bytes

HEADER = struct.Struct("<4sHQI")
NAME_LEN = struct.Struct("<H")
META_LEN = struct.Struct("<I")


def _canonical(data: dict) -> bytes:
    return json.dumps(data, sort_keys=True, separators=(",", ":")).encode("utf-8")


def checkpoint_to_bytes(store: ParameterStore) -> bytes:
    """Encode a store as DGW1 bytes; encoding is deterministic."""
    chunks = [HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, store.spec.spec_hash(), len(store))]
    for name, tensor in store.items():
        encoded = name.encode("utf-8")
        chunks.append(NAME_LEN.pack(len(encoded)))
        chunks.append(encoded)
        chunks.append(tensor_to_bytes(tensor))
    meta = _canonical({"role": store.role, "seed": store.seed, "epoch": store.epoch, "spec": store.spec.to_dict()})
    chunks.append(META_LEN.pack(len(meta)))
    chunks.append(meta)
    return b"".join(chunks)


def checkpoint_from_bytes(buffer, expected_spec: Optional[NetworkSpec] = None) -> ParameterStore:
    """Decode DGW1 bytes into a ParameterStore.

    :param buffer: the whole checkpoint
    :param expected_spec: when given, the checkpoint must have been written for this spec
    :raises FormatError: bad magic, version or metadata
    :raises TruncatedFile: the buffer ends early
    :raises CheckpointMismatch: spec hash or parameter layout disagrees with the expected spec
    """
    magic, version, spec_hash, count = HEADER.unpack(take_bytes(buffer, 0, HEADER.size, "checkpoint header"))
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}, expected {CHECKPOINT_MAGIC!r}", 0)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", 4)
    if expected_spec is not None and expected_spec.spec_hash() != spec_hash:
        raise CheckpointMismatch(
            f"checkpoint spec hash {spec_hash:016x} does not match expected {expected_spec.spec_hash():016x}"
        )

    offset = HEADER.size
    params = {}
    for _ in range(count):
        (length,) = NAME_LEN.unpack(take_bytes(buffer, offset, NAME_LEN.size, "parameter name length"))
        offset += NAME_LEN.size
        raw = take_bytes(buffer, offset, length, "parameter name")
        try:
            name = raw.decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("parameter name is not valid UTF-8", offset)
        offset += length
        if name in params:
            raise FormatError(f"duplicate parameter {name!r}", offset - length)
        params[name], offset = tensor_from_bytes(buffer, offset)

    (meta_len,) = META_LEN.unpack(take_bytes(buffer, offset, META_LEN.size, "metadata length"))
    offset += META_LEN.size
    meta_offset = offset
    raw = take_bytes(buffer, offset, meta_len, "metadata")
    offset += meta_len
    if offset != len(buffer):
        raise FormatError(f"{len(buffer) - offset} trailing bytes after checkpoint", offset)
    try:
        meta = json.loads(raw.decode("utf-8"))
        spec = NetworkSpec.from_dict(meta["spec"])
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, SpecError) as e:
        raise FormatError(f"malformed checkpoint metadata: {e}", meta_offset)
    if spec.spec_hash() != spec_hash:
        raise CheckpointMismatch("checkpoint header hash does not match its embedded spec")

    return ParameterStore(spec, params, role=meta.get("role"), seed=meta.get("seed"), epoch=meta.get("epoch", 0))


def save_checkpoint(path, store: ParameterStore):
    """Write ``store`` to ``path``."""
    Path(path).write_bytes(checkpoint_to_bytes(store))
    logger.debug(f"Wrote {store.role or 'network'} checkpoint ({store.parameter_count()} scalars) to {path}")


def load_checkpoint(path, expected_spec: Optional[NetworkSpec] = None) -> ParameterStore:
    """Read a store from ``path``; see :func:`checkpoint_from_bytes`."""
    return checkpoint_from_bytes(Path(path).read_bytes(), expected_spec=expected_spec)
