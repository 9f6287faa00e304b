"""Parameter sweeps comparing the undefended network (A) with the robust saliency defense (F)."""

from typing import Iterable, List, Optional

from loguru import logger

from depthguard.attacks import AttackConfig
from depthguard.data.records import Dataset
from depthguard.defense.configurations import ConfigurationId, Stores, evaluate_configuration
from depthguard.defense.training import TrainConfig, default_saliency_spec, train_saliency_adv
from depthguard.losses import LossKind
from depthguard.metrics import EvalReport

SWEEP_CONFIGS = (ConfigurationId.A, ConfigurationId.F)
ABLATION_EPS = 0.1
ABLATION_ITERS = 5


def _sweep(stores: Stores, dataset: Dataset, attacks: Iterable[AttackConfig], configs) -> List[EvalReport]:
    reports = []
    for attack in attacks:
        for config_id in configs:
            reports.append(evaluate_configuration(config_id, stores, dataset, attack=attack))
    return reports


def eps_sweep(
    stores: Stores, dataset: Dataset, eps_values: Iterable[float], iters: int = 1, configs=SWEEP_CONFIGS
) -> List[EvalReport]:
    """Evaluate A and F under (I)FGSM for each eps; FGSM by default."""
    return _sweep(stores, dataset, [AttackConfig(eps=e, iters=iters) for e in eps_values], configs)


def iters_sweep(
    stores: Stores, dataset: Dataset, iters_values: Iterable[int], eps: float = ABLATION_EPS, configs=SWEEP_CONFIGS
) -> List[EvalReport]:
    """Evaluate A and F under IFGSM at a fixed eps for each iteration count."""
    return _sweep(stores, dataset, [AttackConfig(eps=eps, iters=t) for t in iters_values], configs)


def loss_ablation(
    stores: Stores, dataset: Dataset, kinds: Optional[Iterable[LossKind]] = None, configs=SWEEP_CONFIGS
) -> List[EvalReport]:
    """Evaluate A and F when the attacker maximizes each objective in turn (IFGSM, T=5, eps=0.1).

    The attack column of each report names the objective, e.g. ``ifgsm-rel``.
    """
    kinds = list(LossKind) if kinds is None else [LossKind.parse(k) for k in kinds]
    reports = []
    for kind in kinds:
        attack = AttackConfig(eps=ABLATION_EPS, iters=ABLATION_ITERS, objective=kind)
        for report in _sweep(stores, dataset, [attack], configs):
            report.attack = f"{report.attack}-{kind.value}"
            reports.append(report)
    return reports


def encoder_depth_sweep(
    stores: Stores,
    train_data: Dataset,
    test_data: Dataset,
    depths: Iterable[int],
    cfg: TrainConfig,
) -> List[EvalReport]:
    """Train G_adv with each encoder depth and evaluate configuration F under IFGSM (T=5, eps=0.1).

    The config column of each report reads ``F@<depth>``.
    """
    n = stores.require("N")
    attack = AttackConfig(eps=ABLATION_EPS, iters=ABLATION_ITERS)
    reports = []
    for depth in depths:
        logger.info(f"Encoder depth {depth}: training G_adv")
        spec = default_saliency_spec(n.spec, encoder_depth=depth)
        g_adv = train_saliency_adv(n, train_data, cfg, g_spec=spec).store
        report = evaluate_configuration(ConfigurationId.F, Stores(n=n, g_adv=g_adv), test_data, attack=attack)
        report.config = f"F@{depth}"
        reports.append(report)
    return reports
