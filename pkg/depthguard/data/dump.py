"""Image dumps for inspection: PGM for single-channel maps, PPM for RGB images."""

from pathlib import Path
from typing import Tuple

import numpy as np
from loguru import logger
from PIL import Image

from depthguard.exceptions import ShapeMismatch
from depthguard.tensor import Tensor


def _to_array(t) -> np.ndarray:
    return np.asarray(t.data if isinstance(t, Tensor) else t, dtype=np.float64)


def normalize_map(values: np.ndarray) -> Tuple[np.ndarray, float, float]:
    """Min-max scale to 0..255 bytes; a constant map becomes all zeros."""
    lo, hi = float(values.min()), float(values.max())
    if hi > lo:
        scaled = (values - lo) / (hi - lo)
    else:
        scaled = np.zeros_like(values)
    return np.round(scaled * 255.0).astype(np.uint8), lo, hi


def dump_map(path, values) -> Path:
    """Write a [1, H, W] map as binary PGM (P5) plus a ``.txt`` sidecar with the normalization range."""
    array = _to_array(values)
    if array.ndim != 3 or array.shape[0] != 1:
        raise ShapeMismatch(f"[dump_map] expected a [1, H, W] map, got {array.shape}")
    path = Path(path).with_suffix(".pgm")
    pixels, lo, hi = normalize_map(array[0])
    Image.fromarray(pixels).save(path, format="PPM")
    path.with_suffix(".txt").write_text(f"min={lo:.6f}\nmax={hi:.6f}\n")
    logger.debug(f"Wrote {path}")
    return path


def dump_image(path, image) -> Path:
    """Write a [3, H, W] image in [0, 1] as binary PPM (P6)."""
    array = _to_array(image)
    if array.ndim != 3 or array.shape[0] != 3:
        raise ShapeMismatch(f"[dump_image] expected a [3, H, W] image, got {array.shape}")
    path = Path(path).with_suffix(".ppm")
    pixels = np.ascontiguousarray(np.round(np.clip(array, 0.0, 1.0) * 255.0).astype(np.uint8).transpose(1, 2, 0))
    Image.fromarray(pixels).save(path, format="PPM")
    logger.debug(f"Wrote {path}")
    return path


def dump_diff(path, x_star, x) -> Path:
    """Write ``max over channels |x* - x|`` amplified to the full 0..255 range as PGM."""
    a, b = _to_array(x_star), _to_array(x)
    if a.shape != b.shape:
        raise ShapeMismatch(f"[dump_diff] {a.shape} vs {b.shape}")
    return dump_map(path, np.abs(a - b).max(axis=0, keepdims=True))
