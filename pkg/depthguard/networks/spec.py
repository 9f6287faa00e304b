"""Contains the NetworkSpec class and the layer plan derived from it."""

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import List, Tuple

from depthguard.constants import DIMS_DIVISOR
from depthguard.exceptions import SpecError, check_choice

ROLES = ("depth", "saliency")


@dataclass(frozen=True)
class LayerPlan:
    """One convolution of a network: where it sits and what it maps."""

    name: str
    in_channels: int
    out_channels: int
    kernel: int
    stride: int
    upsample: bool


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture of a toy encoder-decoder network.

    Depth networks output a (1, H/2, W/2) map of positive depths; saliency networks output a (1, H, W)
    mask in (0, 1).
    """

    role: str = "depth"
    input_dims: Tuple[int, int, int] = (3, 64, 48)
    widths: Tuple[int, ...] = (8, 16, 32)
    encoder_depth: int = 3
    kernel: int = 3
    _plan: List[LayerPlan] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "input_dims", tuple(int(v) for v in self.input_dims))
        object.__setattr__(self, "widths", tuple(int(v) for v in self.widths))
        self.validate()
        object.__setattr__(self, "_plan", self._build_plan())

    def validate(self):
        """Check the spec invariants.

        :raises SpecError: unknown role, bad dims, or widths inconsistent with the encoder depth
        """
        check_choice(type(self).__name__, self.role, ROLES, "role", SpecError)
        if len(self.input_dims) != 3 or self.input_dims[0] != 3:
            raise SpecError(f"input_dims must be (3, H, W), got {self.input_dims}")
        if self.encoder_depth < 1:
            raise SpecError(f"encoder_depth must be >= 1, got {self.encoder_depth}")
        divisor = max(DIMS_DIVISOR, 2**self.encoder_depth)
        _, height, width = self.input_dims
        if height <= 0 or width <= 0 or height % divisor or width % divisor:
            raise SpecError(f"H and W must be positive multiples of {divisor}, got {height}x{width}")
        if len(self.widths) != self.encoder_depth or any(w <= 0 for w in self.widths):
            raise SpecError(f"need {self.encoder_depth} positive stage widths, got {list(self.widths)}")
        if self.kernel % 2 == 0 or self.kernel < 1:
            raise SpecError(f"kernel must be odd, got {self.kernel}")

    def _build_plan(self) -> List[LayerPlan]:
        k = self.kernel
        plan = []
        channels = self.input_dims[0]
        for i, width in enumerate(self.widths):
            plan.append(LayerPlan(f"enc{i}", channels, width, k, 2, False))
            channels = width
        stages = self.encoder_depth - 1 if self.role == "depth" else self.encoder_depth
        for j in range(stages):
            back = self.encoder_depth - 2 - j
            width = self.widths[back] if back >= 0 else self.widths[0]
            plan.append(LayerPlan(f"dec{j}", channels, width, k, 1, True))
            channels = width
        plan.append(LayerPlan("head", channels, 1, k, 1, False))
        return plan

    @property
    def layers(self) -> List[LayerPlan]:
        """Convolutions in execution order."""
        return list(self._plan)

    @property
    def output_dims(self) -> Tuple[int, int, int]:
        """Shape of the network output."""
        _, height, width = self.input_dims
        if self.role == "depth":
            return (1, height // 2, width // 2)
        return (1, height, width)

    def parameter_count(self) -> int:
        """Closed-form number of scalars: sum of C_out * C_in * k^2 + C_out over layers."""
        return sum(p.out_channels * p.in_channels * p.kernel**2 + p.out_channels for p in self._plan)

    def to_dict(self) -> dict:
        """Convert the spec into a plain dict."""
        data = asdict(self)
        data.pop("_plan")
        data["input_dims"] = list(self.input_dims)
        data["widths"] = list(self.widths)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkSpec":
        """Build a spec from :meth:`to_dict` output."""
        try:
            return cls(
                role=data["role"],
                input_dims=tuple(data["input_dims"]),
                widths=tuple(data["widths"]),
                encoder_depth=int(data["encoder_depth"]),
                kernel=int(data.get("kernel", 3)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise SpecError(f"network spec is missing or has malformed fields: {e}")

    def spec_hash(self) -> int:
        """Stable 64-bit hash of the canonical JSON form."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode("utf-8")
        return int.from_bytes(hashlib.sha256(canonical).digest()[:8], "little")
