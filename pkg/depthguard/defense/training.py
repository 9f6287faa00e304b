"""Training loops for the depth network and the saliency network.

Every run draws from one seeded generator in a fixed order so it can be replayed from its audit log:
per epoch one permutation of the training set, then per sample the branch variable ``p`` and, only when
the adversarial branch is taken, ``eps`` followed by the iteration count.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Tuple

import numpy as np
from loguru import logger
from tqdm import tqdm

from depthguard.attacks import AttackConfig, depth_model, ifgsm
from depthguard.constants import DEFAULT_ADV_PROB, DEFAULT_EPS_RANGE, DEFAULT_ITER_RANGE
from depthguard.data.records import Dataset
from depthguard.defense.optim import Adam, AdamConfig
from depthguard.exceptions import (
    AttackError,
    DatasetError,
    NonFiniteValue,
    TrainingError,
    check_range,
)
from depthguard.losses import LossBreakdown, LossKind, l_dif
from depthguard.masking import apply_mask
from depthguard.networks import NetworkSpec, ParameterStore, build_network, forward_depth, forward_saliency
from depthguard.tensor import Tensor, backward, scalar_mul

SALIENCY_ADV_LAMBDA = 1.0
SALIENCY_CLEAN_LAMBDA = 5.0


@dataclass(frozen=True)
class TrainConfig:
    """Settings of one training run.

    ``iters_per_epoch`` defaults to the training set size; ``lam`` defaults to the value appropriate for
    the trained role (1 for the adversarially trained saliency network, 5 for the clean one).
    """

    epochs: int = 20
    iters_per_epoch: Optional[int] = None
    lam: Optional[float] = None
    adam: AdamConfig = field(default_factory=AdamConfig)
    adv_prob: float = DEFAULT_ADV_PROB
    eps_range: Tuple[float, float] = DEFAULT_EPS_RANGE
    iter_range: Tuple[int, int] = DEFAULT_ITER_RANGE
    batch_size: int = 1
    seed: int = 0

    def __post_init__(self):
        caller = type(self).__name__
        if self.epochs < 1:
            raise TrainingError(f"[{caller}] epochs must be >= 1, got {self.epochs}")
        if self.iters_per_epoch is not None and self.iters_per_epoch < 1:
            raise TrainingError(f"[{caller}] iters_per_epoch must be >= 1, got {self.iters_per_epoch}")
        if self.batch_size < 1:
            raise TrainingError(f"[{caller}] batch_size must be >= 1, got {self.batch_size}")
        if self.lam is not None and self.lam < 0:
            raise TrainingError(f"[{caller}] lam must be >= 0, got {self.lam}")
        check_range(caller, self.adv_prob, 0.0, 1.0, "adv_prob", TrainingError)
        lo, hi = self.eps_range
        check_range(caller, lo, 0.0, 1.0, "eps_range[0]", TrainingError)
        check_range(caller, hi, lo, 1.0, "eps_range[1]", TrainingError)
        lo, hi = self.iter_range
        if lo < 1 or hi < lo:
            raise TrainingError(f"[{caller}] iter_range must satisfy 1 <= lo <= hi, got {self.iter_range}")
        if self.seed < 0:
            raise TrainingError(f"[{caller}] seed must be non-negative, got {self.seed}")


@dataclass(frozen=True)
class AuditRecord:
    """Random draws of one training sample."""

    epoch: int
    iteration: int
    sample: int
    p: float
    adversarial: bool
    eps: Optional[float] = None
    iters: Optional[int] = None


@dataclass
class TrainResult:
    """A trained store, its per-epoch mean losses and the audit log of random draws."""

    store: ParameterStore
    epoch_losses: List[float]
    audit: List[AuditRecord]

    @property
    def adversarial_count(self) -> int:
        return sum(1 for r in self.audit if r.adversarial)


def sample_branch(rng: np.random.Generator, cfg: TrainConfig) -> Tuple[float, bool, Optional[float], Optional[int]]:
    """Draw ``p`` and, on the adversarial branch (``p > 1 - adv_prob``), ``eps`` then ``floor(Uniform(lo, hi))``."""
    p = float(rng.uniform(0.0, 1.0))
    if not p > 1.0 - cfg.adv_prob:
        return p, False, None, None
    eps = float(rng.uniform(*cfg.eps_range))
    lo, hi = cfg.iter_range
    iters = int(math.floor(rng.uniform(lo, hi))) if hi > lo else lo
    return p, True, eps, iters


def saliency_loss(
    n_params: ParameterStore, g_params: ParameterStore, x: Tensor, y_true: Tensor, lam: float
) -> LossBreakdown:
    """Depth/gradient/normal loss of ``N(x * G(x))`` against the ground truth, plus ``lam`` times mask sparsity."""
    mask = forward_saliency(g_params, x)
    return l_dif(forward_depth(n_params, apply_mask(x, mask)), y_true, mask=mask, lam=lam)


def depth_loss(n_params: ParameterStore, x: Tensor, y_true: Tensor) -> LossBreakdown:
    """Depth/gradient/normal loss of ``N(x)`` against the ground truth."""
    return l_dif(forward_depth(n_params, x), y_true)


def _train_loop(
    role: str,
    params: ParameterStore,
    data: Dataset,
    cfg: TrainConfig,
    loss_fn: Callable[[Tensor, Tensor], LossBreakdown],
    attack_target: Callable[[], ParameterStore],
) -> TrainResult:
    if len(data) == 0:
        raise DatasetError(f"cannot train {role} on an empty dataset")
    pairs = data.pairs()
    n = len(pairs)
    iterations = cfg.iters_per_epoch or n
    if iterations * cfg.batch_size > n:
        logger.warning(f"{role}: {iterations * cfg.batch_size} samples per epoch exceed the {n} records; wrapping")

    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(1)[0])
    optimizer = Adam(params.tensors(), cfg.adam)
    audit: List[AuditRecord] = []
    epoch_losses: List[float] = []

    for epoch in tqdm(range(1, cfg.epochs + 1), desc=f"training {role}", disable=None):
        order = rng.permutation(n)
        cursor = 0
        values = []
        for iteration in range(1, iterations + 1):
            optimizer.zero_grad()
            batch_value = 0.0
            for _ in range(cfg.batch_size):
                index = int(order[cursor % n])
                cursor += 1
                x, y_true = pairs[index]
                p, adversarial, eps, iters = sample_branch(rng, cfg)
                audit.append(AuditRecord(epoch, iteration, index, p, adversarial, eps, iters))
                try:
                    if adversarial:
                        attack_cfg = AttackConfig(eps=eps, iters=iters, objective=LossKind.L1)
                        x = ifgsm(depth_model(attack_target()), x, y_true, attack_cfg).x_star
                    objective = loss_fn(x, y_true).objective()
                    value = objective.item()
                    if not math.isfinite(value):
                        raise NonFiniteValue(f"loss is {value}")
                    backward(scalar_mul(objective, 1.0 / cfg.batch_size) if cfg.batch_size > 1 else objective)
                except (NonFiniteValue, AttackError) as e:
                    raise TrainingError(f"{role}: epoch {epoch}, iteration {iteration}: {e.detail}")
                batch_value += value / cfg.batch_size
            optimizer.step()
            values.append(batch_value)
            logger.debug(f"{role} epoch {epoch} iteration {iteration}: loss {batch_value:.6f}")
        epoch_losses.append(math.fsum(values) / len(values))
        logger.info(f"{role} epoch {epoch}/{cfg.epochs}: mean loss {epoch_losses[-1]:.6f}")

    store = params.copy(requires_grad=False, role=role)
    store.epoch = params.epoch + cfg.epochs
    return TrainResult(store, epoch_losses, audit)


def default_saliency_spec(n_spec: NetworkSpec, encoder_depth: Optional[int] = None) -> NetworkSpec:
    """Saliency spec sharing the depth network's input dims and stage widths."""
    depth = n_spec.encoder_depth if encoder_depth is None else encoder_depth
    widths = list(n_spec.widths[:depth]) + [n_spec.widths[-1]] * max(0, depth - len(n_spec.widths))
    return NetworkSpec(role="saliency", input_dims=n_spec.input_dims, widths=tuple(widths), encoder_depth=depth)


def train_saliency(
    n_params: ParameterStore,
    data: Dataset,
    cfg: TrainConfig,
    role: str = "G_adv",
    g_spec: Optional[NetworkSpec] = None,
) -> TrainResult:
    """Train a saliency network against a frozen depth network.

    Adversarial inputs (drawn with probability ``adv_prob``) are generated against N alone. N's tensors
    are frozen copies and are never registered with the optimizer.
    """
    lam = SALIENCY_ADV_LAMBDA if cfg.lam is None else cfg.lam
    n_frozen = n_params.frozen()
    g_spec = default_saliency_spec(n_params.spec) if g_spec is None else g_spec
    g_params = build_network(g_spec, cfg.seed, dtype=n_params.tensors()[0].dtype).trainable()
    logger.info(f"Training {role} (lambda={lam}, adv_prob={cfg.adv_prob}) on {len(data)} records")
    return _train_loop(
        role,
        g_params,
        data,
        cfg,
        lambda x, y_true: saliency_loss(n_frozen, g_params, x, y_true, lam),
        lambda: n_frozen,
    )


def train_saliency_adv(n_params: ParameterStore, data: Dataset, cfg: TrainConfig, **kwargs) -> TrainResult:
    """Adversarially train G_adv on clean and perturbed inputs."""
    return train_saliency(n_params, data, cfg, role="G_adv", **kwargs)


def train_saliency_clean(n_params: ParameterStore, data: Dataset, cfg: TrainConfig, **kwargs) -> TrainResult:
    """Train G on clean inputs only (adv_prob forced to 0, lambda 5 unless given)."""
    lam = SALIENCY_CLEAN_LAMBDA if cfg.lam is None else cfg.lam
    return train_saliency(n_params, data, replace(cfg, adv_prob=0.0, lam=lam), role="G", **kwargs)


def _train_depth(data: Dataset, cfg: TrainConfig, spec: Optional[NetworkSpec], role: str) -> TrainResult:
    if spec is None:
        spec = NetworkSpec(input_dims=(3, *data.dims)) if len(data) else NetworkSpec()
    if spec.role != "depth":
        raise TrainingError(f"{role} needs a depth network spec, got role {spec.role}")
    n_params = build_network(spec, cfg.seed).trainable()
    logger.info(f"Training {role} (adv_prob={cfg.adv_prob}) on {len(data)} records")
    return _train_loop(
        role,
        n_params,
        data,
        cfg,
        lambda x, y_true: depth_loss(n_params, x, y_true),
        n_params.frozen,
    )


def train_depth(data: Dataset, cfg: TrainConfig, spec: Optional[NetworkSpec] = None) -> TrainResult:
    """Train N on clean images."""
    return _train_depth(data, replace(cfg, adv_prob=0.0), spec, role="N")


def train_depth_adv(data: Dataset, cfg: TrainConfig, spec: Optional[NetworkSpec] = None) -> TrainResult:
    """Train N_adv on a mix of clean and IFGSM-perturbed images, attacking the current weights."""
    return _train_depth(data, cfg, spec, role="N_adv")
