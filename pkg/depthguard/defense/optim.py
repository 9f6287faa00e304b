"""Contains the Adam optimizer."""

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from depthguard.exceptions import TrainingError
from depthguard.tensor import Tensor


@dataclass(frozen=True)
class AdamConfig:
    """Adam hyper-parameters; weight decay is added to the gradient before the moment updates."""

    lr: float = 1e-4
    betas: Tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 1e-4
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0 or not all(0.0 <= b < 1.0 for b in self.betas) or self.weight_decay < 0:
            raise TrainingError(f"invalid Adam settings {self}")


class Adam:
    """Adam over an explicit list of leaf tensors.

    Only registered tensors are ever updated; anything else reachable from the loss (for example a
    frozen depth network) is left untouched.
    """

    def __init__(self, params: List[Tensor], config: AdamConfig = AdamConfig()):
        self.params = list(params)
        for p in self.params:
            if not p.requires_grad or not p.is_leaf:
                raise TrainingError("Adam can only update leaf tensors that require grad")
        self.config = config
        self.step_count = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        """Apply one update from the accumulated gradients; tensors without a gradient are skipped."""
        cfg = self.config
        beta1, beta2 = cfg.betas
        self.step_count += 1
        correction1 = 1.0 - beta1**self.step_count
        correction2 = 1.0 - beta2**self.step_count
        for p, m, v in zip(self.params, self._m, self._v):
            if p.grad is None:
                continue
            grad = p.grad + cfg.weight_decay * p.data if cfg.weight_decay else p.grad
            m *= beta1
            m += (1.0 - beta1) * grad
            v *= beta2
            v += (1.0 - beta2) * grad * grad
            update = cfg.lr * (m / correction1) / (np.sqrt(v / correction2) + cfg.eps)
            p.data -= update.astype(p.data.dtype)
