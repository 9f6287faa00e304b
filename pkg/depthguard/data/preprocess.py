"""Resize-then-crop preprocessing, train/test splits and ingestion of externally converted data."""

from typing import Optional, Tuple

import numpy as np
from loguru import logger

from depthguard.data.dataset_io import load_dataset
from depthguard.data.records import Dataset, SampleRecord, check_dims
from depthguard.exceptions import DatasetError, PreprocessError
from depthguard.tensor import Tensor
from depthguard.tensor.ops import interpolation_matrix

# full-scale pipeline: resize to 320x240, then crop the central 304x228
RESIZE_RATIO = (240 / 228, 320 / 304)


def resize_bilinear(array: np.ndarray, dims: Tuple[int, int]) -> np.ndarray:
    """Bilinearly resample a [C, H, W] array to [C, h, w] (half-pixel centres)."""
    _, height, width = array.shape
    if (height, width) == tuple(dims):
        return array.copy()
    rows = interpolation_matrix(height, dims[0], np.float64)
    cols = interpolation_matrix(width, dims[1], np.float64)
    return (rows @ array.astype(np.float64) @ cols.T).astype(array.dtype)


def center_crop(array: np.ndarray, dims: Tuple[int, int]) -> np.ndarray:
    """Keep the central ``dims`` of a [C, H, W] array; odd margins favour the top/left.

    :raises PreprocessError: crop larger than the array
    """
    _, height, width = array.shape
    out_h, out_w = dims
    if out_h > height or out_w > width:
        raise PreprocessError(f"cannot crop {height}x{width} to {out_h}x{out_w}")
    top = (height - out_h) // 2
    left = (width - out_w) // 2
    return array[:, top : top + out_h, left : left + out_w].copy()


def default_resize_dims(source: Tuple[int, int], target: Tuple[int, int]) -> Tuple[int, int]:
    """Intermediate resize dims: the target scaled by the full-scale resize/crop ratio, capped at the source."""
    return tuple(
        max(t, min(s, int(round(t * ratio)))) for s, t, ratio in zip(source, target, RESIZE_RATIO)
    )


def preprocess(
    image: Tensor,
    depth: Tensor,
    target: Tuple[int, int],
    resize: Optional[Tuple[int, int]] = None,
    scene_seed: int = 0,
) -> SampleRecord:
    """Resize then center-crop an image to ``target``; the depth map follows to half the target dims.

    Records already at the target dims (depth at half) pass through unchanged.

    :param image: [3, H, W] image in [0, 1]
    :param depth: [1, h, w] depth map of any resolution covering the same field of view
    :param target: output image (H, W); both must be even
    :param resize: intermediate resize dims, :func:`default_resize_dims` when omitted
    :raises PreprocessError: target larger than the source, odd target, or bad resize dims
    """
    if image.ndim != 3 or image.shape[0] != 3 or depth.ndim != 3 or depth.shape[0] != 1:
        raise PreprocessError(f"expected [3, H, W] image and [1, h, w] depth, got {image.shape} and {depth.shape}")
    target = tuple(int(v) for v in target)
    source = image.shape[1:]
    if target[0] % 2 or target[1] % 2 or min(target) <= 0:
        raise PreprocessError(f"target dims {target} must be positive and even")
    if target[0] > source[0] or target[1] > source[1]:
        raise PreprocessError(f"target {target} larger than source {source}")
    half = (target[0] // 2, target[1] // 2)
    if source == target and depth.shape[1:] == half:
        return SampleRecord(Tensor(image), Tensor(depth), scene_seed)

    resize = default_resize_dims(source, target) if resize is None else tuple(resize)
    if not (target[0] <= resize[0] <= source[0] and target[1] <= resize[1] <= source[1]):
        raise PreprocessError(f"resize dims {resize} must lie between target {target} and source {source}")

    out_image = center_crop(resize_bilinear(image.data, resize), target)
    out_depth = center_crop(resize_bilinear(depth.data, resize), target)
    out_depth = resize_bilinear(out_depth, half)
    return SampleRecord(
        Tensor(np.clip(out_image, 0.0, 1.0), dtype=image.dtype), Tensor(out_depth, dtype=depth.dtype), scene_seed
    )


def split(dataset: Dataset, train_fraction: float, seed: int) -> Tuple[Dataset, Dataset]:
    """Seeded disjoint train/test split; records keep their original relative order within each split.

    :raises DatasetError: fraction outside (0, 1)
    """
    if not 0.0 < train_fraction < 1.0:
        raise DatasetError(f"train fraction must lie in (0, 1), got {train_fraction}")
    n = len(dataset)
    n_train = int(round(n * train_fraction))
    order = np.random.default_rng(seed).permutation(n)
    train = sorted(int(i) for i in order[:n_train])
    test = sorted(int(i) for i in order[n_train:])
    return dataset.subset(train), dataset.subset(test)


def ingest(path, dims: Tuple[int, int]) -> Dataset:
    """Load an externally converted DGD1 file and preprocess every record to ``dims``.

    :raises DatasetError: image values outside [0, 1] or non-positive depths
    """
    dims = check_dims(dims)
    source = load_dataset(path)
    records = []
    for index, record in enumerate(source):
        if record.image.data.min() < 0 or record.image.data.max() > 1:
            raise DatasetError(f"record {index}: image values outside [0, 1]")
        if record.depth.data.min() <= 0:
            raise DatasetError(f"record {index}: non-positive depth")
        records.append(preprocess(record.image, record.depth, dims, scene_seed=record.scene_seed))
    logger.info(f"Ingested {len(records)} record(s) from {path} at {dims[0]}x{dims[1]}")
    provenance = dict(source.provenance or {})
    provenance["ingested"] = {"path": str(path), "dims": list(dims)}
    return Dataset(records, provenance=provenance)
