"""Synthetic indoor-like scenes with analytic ground-truth depth.

A scene is a back wall at the room depth plus a few fronto-parallel boxes in front of it. Boxes are
axis-aligned rectangles on the depth grid (half the image resolution), so every depth pixel maps to a
2x2 image block that is entirely inside or outside a box. Nearer boxes are painted last and occlude
farther ones. The image carries the usual monocular cues: apparent size shrinks with depth, brightness
falls off with distance, and occlusion boundaries are darkened.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from loguru import logger

from depthguard.constants import DEFAULT_DIMS, SYNTH_DEPTH_RANGE
from depthguard.data.records import Dataset, SampleRecord, check_dims
from depthguard.exceptions import DatasetError
from depthguard.tensor import Tensor
from depthguard.workers import map_ordered

MIN_ROOM_DEPTH = 4.0
EDGE_DARKENING = 0.6
FALLOFF = 0.08
AMBIENT = 0.3


@dataclass(frozen=True)
class Box:
    """A fronto-parallel rectangle covering depth-grid rows [top, bottom) and columns [left, right)."""

    top: int
    left: int
    bottom: int
    right: int
    depth: float
    albedo: Tuple[float, float, float] = (0.5, 0.5, 0.5)


@dataclass(frozen=True)
class SceneSpec:
    """Layout and appearance of one synthetic scene."""

    room_depth: float
    boxes: Tuple[Box, ...] = ()
    wall_albedo: Tuple[float, float, float] = (0.6, 0.6, 0.6)
    light: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    noise: float = 0.02

    def validate(self, dims: Tuple[int, int]):
        """Check depth ranges and that every box lies inside the frame.

        :raises DatasetError: a depth leaves the indoor range or a box leaves the frame
        """
        lo, hi = SYNTH_DEPTH_RANGE
        if not lo <= self.room_depth <= hi:
            raise DatasetError(f"room depth {self.room_depth} outside [{lo}, {hi}]")
        rows, cols = dims[0] // 2, dims[1] // 2
        for box in self.boxes:
            if not lo <= box.depth <= hi:
                raise DatasetError(f"box depth {box.depth} outside [{lo}, {hi}]")
            if not (0 <= box.top < box.bottom <= rows and 0 <= box.left < box.right <= cols):
                raise DatasetError(f"box {box} does not fit a {rows}x{cols} depth grid")


def sample_scene(rng: np.random.Generator, dims: Tuple[int, int], n_boxes: Optional[int] = None) -> SceneSpec:
    """Draw a random scene for images of size ``dims``."""
    rows, cols = dims[0] // 2, dims[1] // 2
    focal = 0.8 * cols
    room_depth = float(rng.uniform(MIN_ROOM_DEPTH, SYNTH_DEPTH_RANGE[1]))
    count = int(rng.integers(2, 7)) if n_boxes is None else n_boxes
    boxes = []
    for _ in range(count):
        depth = float(rng.uniform(SYNTH_DEPTH_RANGE[0], room_depth - 0.25))
        width_m, height_m = rng.uniform(0.3, 1.2, size=2)
        box_cols = int(np.clip(round(width_m * focal / depth), 2, cols))
        box_rows = int(np.clip(round(height_m * focal / depth), 2, rows))
        top = int(rng.integers(0, rows - box_rows + 1))
        left = int(rng.integers(0, cols - box_cols + 1))
        albedo = tuple(float(a) for a in rng.uniform(0.15, 0.95, size=3))
        boxes.append(Box(top, left, top + box_rows, left + box_cols, depth, albedo))
    wall_albedo = tuple(float(a) for a in rng.uniform(0.35, 0.75, size=3))
    light = rng.normal(size=3)
    light[2] = abs(light[2]) + 1.0
    light = light / np.linalg.norm(light)
    noise = float(rng.uniform(0.01, 0.04))
    return SceneSpec(room_depth, tuple(boxes), wall_albedo, tuple(float(v) for v in light), noise)


def rasterize_depth(scene: SceneSpec, dims: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray]:
    """Paint the scene far to near; return the (rows, cols) depth map and the (3, rows, cols) albedo map."""
    rows, cols = dims[0] // 2, dims[1] // 2
    depth = np.full((rows, cols), scene.room_depth, dtype=np.float64)
    albedo = np.empty((3, rows, cols), dtype=np.float64)
    albedo[:] = np.asarray(scene.wall_albedo)[:, None, None]
    for box in sorted(scene.boxes, key=lambda b: -b.depth):
        depth[box.top : box.bottom, box.left : box.right] = box.depth
        albedo[:, box.top : box.bottom, box.left : box.right] = np.asarray(box.albedo)[:, None, None]
    return depth, albedo


def _upsample(a: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(a, 2, axis=-2), 2, axis=-1)


def render_scene(scene: SceneSpec, dims: Tuple[int, int], rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Render ``scene`` into a float32 image [3, H, W] and depth map [1, H/2, W/2].

    ``rng`` supplies the texture noise.
    """
    scene.validate(dims)
    depth, albedo = rasterize_depth(scene, dims)
    full_depth = _upsample(depth)

    # every surface faces the camera, so the Lambertian factor is the light's z component
    shade = AMBIENT + (1.0 - AMBIENT) * max(0.0, scene.light[2])
    image = _upsample(albedo) * shade / (1.0 + FALLOFF * full_depth)

    edges = np.zeros(full_depth.shape, dtype=bool)
    vertical = full_depth[1:, :] != full_depth[:-1, :]
    horizontal = full_depth[:, 1:] != full_depth[:, :-1]
    edges[1:, :] |= vertical
    edges[:-1, :] |= vertical
    edges[:, 1:] |= horizontal
    edges[:, :-1] |= horizontal
    image = np.where(edges, image * EDGE_DARKENING, image)

    image = image + scene.noise * rng.standard_normal(image.shape)
    image = np.clip(image, 0.0, 1.0)
    return image.astype(np.float32), depth[None].astype(np.float32)


def scene_seeds(seed: int, n: int):
    """Independent 64-bit per-record seeds derived from one run seed."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in children]


def generate_record(scene_seed: int, dims: Tuple[int, int] = DEFAULT_DIMS, n_boxes: Optional[int] = None):
    """Generate one record from its scene seed."""
    rng = np.random.default_rng(scene_seed)
    scene = sample_scene(rng, dims, n_boxes=n_boxes)
    image, depth = render_scene(scene, dims, rng)
    return SampleRecord(Tensor(image), Tensor(depth), scene_seed)


def synth_generate(seed: int, n: int, dims: Tuple[int, int] = DEFAULT_DIMS) -> Dataset:
    """Generate ``n`` synthetic records, bitwise deterministic per (seed, n, dims).

    :raises DatasetError: ``n`` < 1 or dims not divisible by 16
    """
    dims = check_dims(dims)
    if n < 1:
        raise DatasetError(f"need at least one record, got n={n}")
    if seed < 0:
        raise DatasetError(f"seed must be non-negative, got {seed}")
    records = map_ordered(lambda s: generate_record(s, dims), scene_seeds(seed, n), desc="generating scenes")
    logger.info(f"Generated {n} synthetic scenes at {dims[0]}x{dims[1]} (seed {seed})")
    return Dataset(records, provenance={"source": "synth", "seed": seed, "n": n, "dims": list(dims)})
