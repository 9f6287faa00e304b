"""Reading and writing datasets in the DGD1 binary format.

Layout (little endian)::

    magic       4 bytes  b"DGD1"
    count       u32      number of records
    prov_len    u32      0 when there is no provenance
    provenance  canonical JSON (e.g. the attack configuration)
    count x
        length  u32      bytes in the record body
        crc32   u32      checksum of the record body
        body    DGT1 image, DGT1 depth, u64 scene seed
"""

import json
import struct
import zlib
from pathlib import Path
from typing import Optional

from loguru import logger

from depthguard.constants import DATASET_MAGIC
from depthguard.data.records import Dataset, SampleRecord
from depthguard.exceptions import ChecksumMismatch, DatasetError, FormatError
from depthguard.tensor.serialization import take_bytes, tensor_from_bytes, tensor_to_bytes

HEADER = struct.Struct("<4sII")
RECORD_HEADER = struct.Struct("<II")
SEED = struct.Struct("<Q")


def _record_body(record: SampleRecord) -> bytes:
    return tensor_to_bytes(record.image) + tensor_to_bytes(record.depth) + SEED.pack(record.scene_seed)


def dataset_to_bytes(dataset: Dataset) -> bytes:
    """Encode a dataset as DGD1 bytes."""
    provenance = b""
    if dataset.provenance is not None:
        provenance = json.dumps(dataset.provenance, sort_keys=True, separators=(",", ":")).encode("utf-8")
    chunks = [HEADER.pack(DATASET_MAGIC, len(dataset), len(provenance)), provenance]
    for record in dataset:
        body = _record_body(record)
        chunks.append(RECORD_HEADER.pack(len(body), zlib.crc32(body)))
        chunks.append(body)
    return b"".join(chunks)


def _parse_record(body: bytes, base: int) -> SampleRecord:
    image, offset = tensor_from_bytes(body, 0)
    depth, offset = tensor_from_bytes(body, offset)
    (seed,) = SEED.unpack(take_bytes(body, offset, SEED.size, "scene seed"))
    offset += SEED.size
    if offset != len(body):
        raise FormatError(f"record body has {len(body) - offset} unexpected trailing bytes", base + offset)
    try:
        return SampleRecord(image, depth, seed)
    except DatasetError as e:
        raise FormatError(f"invalid record: {e.detail}", base)


def dataset_from_bytes(buffer) -> Dataset:
    """Decode DGD1 bytes.

    :raises FormatError: bad magic, malformed provenance or record
    :raises TruncatedFile: the buffer ends early
    :raises ChecksumMismatch: a record body was altered
    """
    magic, count, prov_len = HEADER.unpack(take_bytes(buffer, 0, HEADER.size, "dataset header"))
    if magic != DATASET_MAGIC:
        raise FormatError(f"bad dataset magic {magic!r}, expected {DATASET_MAGIC!r}", 0)
    offset = HEADER.size
    provenance = None
    if prov_len:
        raw = take_bytes(buffer, offset, prov_len, "provenance")
        try:
            provenance = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FormatError(f"malformed provenance: {e}", offset)
        offset += prov_len

    records = []
    for index in range(count):
        raw = take_bytes(buffer, offset, RECORD_HEADER.size, f"record {index} header")
        length, checksum = RECORD_HEADER.unpack(raw)
        offset += RECORD_HEADER.size
        body = take_bytes(buffer, offset, length, f"record {index}")
        if zlib.crc32(body) != checksum:
            raise ChecksumMismatch(f"record {index} checksum mismatch", offset)
        records.append(_parse_record(body, offset))
        offset += length
    if offset != len(buffer):
        raise FormatError(f"{len(buffer) - offset} trailing bytes after {count} records", offset)
    try:
        return Dataset(records, provenance=provenance)
    except DatasetError as e:
        raise FormatError(e.detail)


def save_dataset(path, dataset: Dataset):
    """Write ``dataset`` to ``path``."""
    Path(path).write_bytes(dataset_to_bytes(dataset))
    logger.info(f"Wrote {len(dataset)} record(s) to {path}")


def load_dataset(path, expected_dims: Optional[tuple] = None) -> Dataset:
    """Read a dataset from ``path``.

    :param expected_dims: when given, the records must have these image (H, W) dims
    :raises DatasetError: dims differ from ``expected_dims``
    """
    dataset = dataset_from_bytes(Path(path).read_bytes())
    if expected_dims is not None and len(dataset) and dataset.dims != tuple(expected_dims):
        raise DatasetError(f"{path} holds {dataset.dims} images, expected {tuple(expected_dims)}")
    logger.debug(f"Loaded {len(dataset)} record(s) from {path}")
    return dataset
