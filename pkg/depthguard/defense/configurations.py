"""The six evaluated configurations of depth network, saliency network and attack."""

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

from loguru import logger

from depthguard.attacks import AttackConfig, AttackTarget, composite_model, depth_model, ifgsm
from depthguard.data.records import Dataset
from depthguard.exceptions import AttackError, DatasetError, MissingCheckpoint
from depthguard.losses import l_dif
from depthguard.masking import apply_mask
from depthguard.metrics import EvalReport, evaluate_dataset
from depthguard.networks import ParameterStore, forward_depth, forward_saliency
from depthguard.tensor import Tensor


class ConfigurationId(str, Enum):
    """Which networks see which input. ``x*`` is always generated against N unless the attack is composite."""

    A = "A"  # N(x*)
    B = "B"  # N(x)
    C = "C"  # N_adv(x*)
    D = "D"  # N(x* * G(x*))
    E = "E"  # N(x* * G(x))
    F = "F"  # N(x* * G_adv(x*))

    @property
    def label(self) -> str:
        return CONFIG_LABELS[self]


CONFIG_LABELS = {
    ConfigurationId.A: "N(x*)",
    ConfigurationId.B: "N(x)",
    ConfigurationId.C: "N_adv(x*)",
    ConfigurationId.D: "N(x* x G(x*))",
    ConfigurationId.E: "N(x* x G(x))",
    ConfigurationId.F: "N(x* x G_adv(x*))",
}

# stores each configuration needs, by role
REQUIRED_ROLES = {
    ConfigurationId.A: ("N",),
    ConfigurationId.B: ("N",),
    ConfigurationId.C: ("N", "N_adv"),
    ConfigurationId.D: ("N", "G"),
    ConfigurationId.E: ("N", "G"),
    ConfigurationId.F: ("N", "G_adv"),
}


@dataclass
class Stores:
    """Trained networks available to an evaluation, any of which may be missing."""

    n: Optional[ParameterStore] = None
    n_adv: Optional[ParameterStore] = None
    g: Optional[ParameterStore] = None
    g_adv: Optional[ParameterStore] = None

    def require(self, role: str) -> ParameterStore:
        """Return the store for ``role``.

        :raises MissingCheckpoint: the store was not supplied
        """
        store = {"N": self.n, "N_adv": self.n_adv, "G": self.g, "G_adv": self.g_adv}[role]
        if store is None:
            raise MissingCheckpoint(f"role {role} is required but no checkpoint was given")
        return store


def attack_name(cfg: Optional[AttackConfig]) -> str:
    """CSV label of an attack configuration."""
    if cfg is None or cfg.eps == 0.0:
        return "none"
    if cfg.target is AttackTarget.COMPOSITE:
        return "composite"
    return "fgsm" if cfg.iters == 1 else "ifgsm"


def _mask_store(config_id: ConfigurationId, stores: Stores) -> Optional[ParameterStore]:
    if config_id in (ConfigurationId.D, ConfigurationId.E):
        return stores.require("G")
    if config_id is ConfigurationId.F:
        return stores.require("G_adv")
    return None


def adversarial_input(
    config_id: ConfigurationId, stores: Stores, x: Tensor, y_true: Tensor, attack: Optional[AttackConfig]
) -> Tensor:
    """Generate ``x*`` for one sample: against N, or against ``N(x * G(x))`` for a composite attack."""
    if attack is None or attack.eps == 0.0:
        return x
    n = stores.require("N")
    if attack.target is AttackTarget.COMPOSITE:
        g = _mask_store(config_id, stores)
        if g is None:
            raise AttackError(f"configuration {config_id.value} has no saliency network to attack through")
        return ifgsm(composite_model(n, g), x, y_true, attack).x_star
    return ifgsm(depth_model(n), x, y_true, attack).x_star


def configuration_forward(
    config_id: ConfigurationId, stores: Stores, x: Tensor, x_star: Tensor
) -> Tuple[Tensor, Optional[Tensor]]:
    """Run the dataflow of one configuration; return the depth estimate and the mask used, if any."""
    if config_id is ConfigurationId.B:
        return forward_depth(stores.require("N"), x), None
    if config_id is ConfigurationId.A:
        return forward_depth(stores.require("N"), x_star), None
    if config_id is ConfigurationId.C:
        return forward_depth(stores.require("N_adv"), x_star), None
    g = _mask_store(config_id, stores)
    mask = forward_saliency(g, x if config_id is ConfigurationId.E else x_star)
    return forward_depth(stores.require("N"), apply_mask(x_star, mask)), mask


def evaluate_configuration(
    config_id,
    stores: Stores,
    dataset: Dataset,
    attack: Optional[AttackConfig] = None,
    adv_dataset: Optional[Dataset] = None,
) -> EvalReport:
    """Evaluate one configuration over ``dataset``.

    :param config_id: which of the six dataflows to run
    :param stores: trained networks; missing roles required by ``config_id`` are an error
    :param dataset: clean test split
    :param attack: attack used to generate ``x*`` on the fly (ignored when ``adv_dataset`` is given)
    :param adv_dataset: precomputed adversarial images aligned record by record with ``dataset``
    :raises MissingCheckpoint: a required network is absent
    :raises DatasetError: empty split or misaligned adversarial dataset
    """
    config_id = ConfigurationId(config_id)
    for role in REQUIRED_ROLES[config_id]:
        stores.require(role)
    if len(dataset) == 0:
        raise DatasetError("cannot evaluate an empty split")
    if adv_dataset is not None and len(adv_dataset) != len(dataset):
        raise DatasetError(f"adversarial dataset has {len(adv_dataset)} records, clean split has {len(dataset)}")

    descriptor = _descriptor(config_id, attack, adv_dataset)
    pairs = dataset.pairs()

    def predict(index):
        x, y_true = pairs[index]
        if config_id is ConfigurationId.B:
            x_star = x
        elif adv_dataset is not None:
            x_star = adv_dataset[index].image
        else:
            x_star = adversarial_input(config_id, stores, x, y_true, attack)
        y, mask = configuration_forward(config_id, stores, x, x_star)
        breakdown = l_dif(y, y_true, mask=mask)
        return y, y_true, breakdown.as_row()

    logger.info(f"Evaluating {config_id.value}: {config_id.label} ({descriptor['attack']}, eps={descriptor['eps']})")
    return evaluate_dataset(predict, len(pairs), desc=f"evaluating {config_id.value}", **descriptor)


def _descriptor(config_id: ConfigurationId, attack: Optional[AttackConfig], adv_dataset: Optional[Dataset]) -> dict:
    if config_id is ConfigurationId.B:
        return {"config": config_id.value, "attack": "none", "eps": 0.0, "iters": 0}
    if adv_dataset is not None and adv_dataset.provenance and "attack" in adv_dataset.provenance:
        provenance = adv_dataset.provenance["attack"]
        attack = AttackConfig(
            eps=provenance["eps"],
            iters=provenance["iters"],
            alpha=provenance.get("alpha", "eps-split"),
            objective=provenance.get("objective", "l1"),
            target=provenance.get("target", "plain"),
        )
    if attack is None:
        return {"config": config_id.value, "attack": "none", "eps": 0.0, "iters": 0}
    return {"config": config_id.value, "attack": attack_name(attack), "eps": attack.eps, "iters": attack.iters}

