"""Contains the SampleRecord and Dataset classes."""

from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple

from depthguard.constants import DIMS_DIVISOR
from depthguard.exceptions import DatasetError
from depthguard.tensor import Tensor


@dataclass
class SampleRecord:
    """An RGB image in [0, 1], its half-resolution depth map in meters, and the seed that produced it."""

    image: Tensor
    depth: Tensor
    scene_seed: int = 0

    def __post_init__(self):
        if self.image.ndim != 3 or self.image.shape[0] != 3:
            raise DatasetError(f"image must be [3, H, W], got {self.image.shape}")
        _, height, width = self.image.shape
        if self.depth.shape != (1, height // 2, width // 2) or height % 2 or width % 2:
            raise DatasetError(f"depth {self.depth.shape} is not half the resolution of image {self.image.shape}")
        if not 0 <= self.scene_seed < 2**64:
            raise DatasetError(f"scene seed {self.scene_seed} does not fit in 64 bits")

    @property
    def dims(self) -> Tuple[int, int]:
        """Image (H, W)."""
        return self.image.shape[1], self.image.shape[2]


class Dataset:
    """An ordered list of records with an optional provenance description (e.g. the attack that made it)."""

    def __init__(self, records: Sequence[SampleRecord] = (), provenance: Optional[dict] = None):
        self.records: List[SampleRecord] = list(records)
        self.provenance = provenance
        dims = {r.dims for r in self.records}
        if len(dims) > 1:
            raise DatasetError(f"records have mixed dimensions {sorted(dims)}")

    def __len__(self):
        return len(self.records)

    def __getitem__(self, index: int) -> SampleRecord:
        return self.records[index]

    def __iter__(self) -> Iterator[SampleRecord]:
        return iter(self.records)

    @property
    def dims(self) -> Optional[Tuple[int, int]]:
        """Image (H, W) shared by all records, or None when empty."""
        return self.records[0].dims if self.records else None

    def pairs(self) -> List[Tuple[Tensor, Tensor]]:
        """(image, depth) pairs in record order."""
        return [(r.image, r.depth) for r in self.records]

    def subset(self, indices: Sequence[int]) -> "Dataset":
        """Records at ``indices``, in that order."""
        return Dataset([self.records[i] for i in indices], provenance=self.provenance)


def check_dims(dims: Tuple[int, int], divisor: int = DIMS_DIVISOR) -> Tuple[int, int]:
    """Validate (H, W) image dims.

    :raises DatasetError: non-positive or not divisible by ``divisor``
    """
    try:
        height, width = (int(v) for v in dims)
    except (TypeError, ValueError):
        raise DatasetError(f"dims must be a pair of integers, got {dims!r}")
    if height <= 0 or width <= 0 or height % divisor or width % divisor:
        raise DatasetError(f"dims {height}x{width} must be positive multiples of {divisor}")
    return height, width


def parse_dims(text: str) -> Tuple[int, int]:
    """Parse ``"HxW"`` into (H, W)."""
    parts = str(text).lower().split("x")
    if len(parts) != 2:
        raise DatasetError(f"dims must look like HxW, got {text!r}")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError:
        raise DatasetError(f"dims must look like HxW, got {text!r}")
