"""Fast gradient sign attacks on the depth network and on the masked composite system."""

from dataclasses import asdict, dataclass
from enum import Enum
from typing import Callable, List, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from depthguard.constants import ONE_LEVEL_ALPHA
from depthguard.exceptions import AttackError, NonFiniteValue, check_range, check_shape
from depthguard.losses import LossKind, attack_objective
from depthguard.masking import apply_mask
from depthguard.networks import ParameterStore, forward_depth, forward_saliency
from depthguard.tensor import Tensor, backward
from depthguard.workers import map_ordered

Model = Callable[[Tensor], Tensor]


class AttackTarget(str, Enum):
    """Which system the attacker differentiates through."""

    PLAIN = "plain"
    COMPOSITE = "composite"


@dataclass(frozen=True)
class AttackConfig:
    """Parameters of one (I)FGSM attack.

    ``alpha`` is ``"eps-split"`` (eps / iters), ``"paper"`` (one 8-bit level, 1/255) or a positive
    step size in [0, 1] image units.
    """

    eps: float
    iters: int = 1
    alpha: Union[str, float] = "eps-split"
    objective: LossKind = LossKind.L1
    target: AttackTarget = AttackTarget.PLAIN
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "objective", LossKind.parse(self.objective))
        object.__setattr__(self, "target", AttackTarget(self.target))
        check_range("AttackConfig", self.eps, 0.0, 1.0, "eps", AttackError)
        if int(self.iters) != self.iters or self.iters < 1:
            raise AttackError(f"[AttackConfig] iters must be an integer >= 1, got {self.iters}")
        if isinstance(self.alpha, str):
            if self.alpha not in ("eps-split", "paper"):
                raise AttackError(f"[AttackConfig] alpha must be 'eps-split', 'paper' or a number, got {self.alpha!r}")
        elif not self.alpha > 0:
            raise AttackError(f"[AttackConfig] alpha must be positive, got {self.alpha}")

    def step_size(self) -> float:
        """Resolved per-iteration step."""
        if self.alpha == "eps-split":
            return self.eps / self.iters
        if self.alpha == "paper":
            return ONE_LEVEL_ALPHA
        return float(self.alpha)

    def describe(self) -> dict:
        """Plain-data description, used as dataset provenance."""
        data = asdict(self)
        data["objective"] = self.objective.value
        data["target"] = self.target.value
        data["step_size"] = self.step_size()
        return data


@dataclass
class AttackResult:
    """Outcome of one attack."""

    x_star: Tensor
    linf: float
    objective_before: float
    objective_after: float
    iterations_run: int


def clip_eps(x_t: Tensor, x: Tensor, eps: float) -> Tensor:
    """Clamp ``x_t`` elementwise into ``[max(0, x - eps), min(1, x + eps)]``."""
    check_shape("clip_eps", x_t.shape, x.shape, "images")
    lo = np.maximum(x.data - eps, 0.0)
    hi = np.minimum(x.data + eps, 1.0)
    return Tensor(np.clip(x_t.data, lo, hi), dtype=x.dtype)


def ifgsm(model: Model, x: Tensor, y_true: Tensor, cfg: AttackConfig) -> AttackResult:
    """Iterative fast gradient sign attack: ``iters`` ascent steps of size alpha, clipped to the eps band.

    :param model: differentiable map from an image to a depth map
    :param x: clean image with values in [0, 1]
    :param y_true: depth target whose distance to ``model(x*)`` is maximized
    :param cfg: attack parameters
    :raises AttackError: a gradient became non-finite (the message names the iteration)
    """
    x = x.detach()
    y_true = y_true.detach()
    alpha = np.asarray(cfg.step_size(), dtype=x.data.dtype)
    before = attack_objective(cfg.objective, model(x), y_true).item()

    x_star = x
    for t in range(1, cfg.iters + 1):
        leaf = Tensor(x_star.data, dtype=x.dtype, requires_grad=True)
        try:
            objective = attack_objective(cfg.objective, model(leaf), y_true)
            if objective.requires_grad:
                backward(objective)
        except NonFiniteValue as e:
            raise AttackError(f"iteration {t}/{cfg.iters}: {e.detail}")
        grad = leaf.grad if leaf.grad is not None else np.zeros_like(x.data)
        if not np.isfinite(grad).all():
            raise AttackError(f"iteration {t}/{cfg.iters}: non-finite input gradient")
        x_star = clip_eps(Tensor(x_star.data + alpha * np.sign(grad), dtype=x.dtype), x, cfg.eps)

    after = attack_objective(cfg.objective, model(x_star), y_true).item()
    linf = float(np.max(np.abs(x_star.data - x.data))) if x.size else 0.0
    return AttackResult(x_star, linf, before, after, cfg.iters)


def fgsm(model: Model, x: Tensor, y_true: Tensor, eps: float, objective=LossKind.L1) -> AttackResult:
    """Single-step fast gradient sign attack (IFGSM with one step of size eps)."""
    return ifgsm(model, x, y_true, AttackConfig(eps=eps, iters=1, alpha="eps-split", objective=objective))


def depth_model(n_params: ParameterStore) -> Model:
    """The plain system ``N(x)``."""
    return lambda x: forward_depth(n_params, x)


def composite_model(n_params: ParameterStore, g_params: ParameterStore) -> Model:
    """The masked system ``N(x * G(x))``."""
    return lambda x: forward_depth(n_params, apply_mask(x, forward_saliency(g_params, x)))


def attack_composite(
    n_params: ParameterStore, g_params: ParameterStore, x: Tensor, y_true: Tensor, cfg: AttackConfig
) -> AttackResult:
    """Attack the composite system, differentiating through both networks and the mask product.

    :raises AttackError: ``cfg.target`` is not the composite system
    """
    if cfg.target is not AttackTarget.COMPOSITE:
        raise AttackError(f"attack_composite needs target=composite, got {cfg.target.value}")
    return ifgsm(composite_model(n_params, g_params), x, y_true, cfg)


def self_target(model: Model, x: Tensor) -> Tensor:
    """Label-free target: the model's own clean prediction."""
    return model(x.detach()).detach()


def attack_samples(
    model: Model,
    samples: Sequence[Tuple[Tensor, Tensor]],
    cfg: AttackConfig,
    use_self_target: bool = False,
    desc: str = "attacking",
) -> List[AttackResult]:
    """Attack every (image, depth) pair independently; results keep the input order."""
    logger.debug(f"Attacking {len(samples)} samples with {cfg.describe()}")

    def run(sample):
        x, y_true = sample
        target = self_target(model, x) if use_self_target else y_true
        return ifgsm(model, x, target, cfg)

    return map_ordered(run, samples, desc=desc)
