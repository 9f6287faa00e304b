"""End-to-end toy pipeline: data, the four networks, and the comparison tables."""

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional

from loguru import logger
from rich.console import Console
from rich.table import Table

from depthguard.attacks import AttackConfig, AttackTarget, attack_samples, depth_model
from depthguard.config import RunConfig
from depthguard.data import Dataset, SampleRecord, save_dataset, split, synth_generate
from depthguard.defense import (
    ConfigurationId,
    Stores,
    evaluate_configuration,
    loss_ablation,
    train_depth,
    train_depth_adv,
    train_saliency_adv,
    train_saliency_clean,
)
from depthguard.metrics import EvalReport, write_losses, write_reports
from depthguard.networks import save_checkpoint

TABLE1_CONFIGS = (ConfigurationId.A, ConfigurationId.D, ConfigurationId.E)
TABLE2_CONFIGS = (ConfigurationId.A, ConfigurationId.C, ConfigurationId.E, ConfigurationId.F)
COMPOSITE_EPS = (0.05, 0.1)


@dataclass
class ReproduceResult:
    """Paths written by :func:`run_reproduce` and the rows of each table."""

    workdir: Path
    stores: Stores
    tables: Dict[str, List[EvalReport]] = field(default_factory=dict)
    files: List[Path] = field(default_factory=list)


def adversarial_dataset(stores: Stores, dataset: Dataset, attack: AttackConfig) -> Dataset:
    """Perturb every record against N; depths and seeds are kept."""
    model = depth_model(stores.require("N"))
    results = attack_samples(model, dataset.pairs(), attack, desc=f"attacking eps={attack.eps}")
    records = [SampleRecord(r.x_star, rec.depth, rec.scene_seed) for r, rec in zip(results, dataset)]
    return Dataset(records, provenance={"attack": attack.describe()})


def train_all(cfg: RunConfig, train: Dataset) -> Stores:
    """Train N, N_adv, G and G_adv with the configured settings."""
    train_cfg = cfg.train_config()
    spec = cfg.network_spec("depth")
    n = train_depth(train, train_cfg, spec).store
    n_adv = train_depth_adv(train, train_cfg, spec).store
    g = train_saliency_clean(n, train, train_cfg).store
    g_adv = train_saliency_adv(n, train, train_cfg).store
    return Stores(n=n, n_adv=n_adv, g=g, g_adv=g_adv)


def table_attack(cfg: RunConfig, eps: float, target: AttackTarget = AttackTarget.PLAIN) -> AttackConfig:
    """Attack used by the comparison tables: ``[eval] iters`` steps with the configured step size and objective."""
    attack = cfg.attack_config(eps=eps, iters=cfg.eval.iters)
    return AttackConfig(
        eps=attack.eps, iters=attack.iters, alpha=attack.alpha, objective=attack.objective, target=target
    )


def comparison_tables(cfg: RunConfig, stores: Stores, test: Dataset) -> Dict[str, List[EvalReport]]:
    """Rows of table1 (masking variants plus the composite attack), table2 (defenses) and table3 (objectives).

    Adversarial sets are generated once per eps and shared by both tables.
    """
    adversarial: Dict[float, Optional[Dataset]] = {}

    def plain_attack(eps: float):
        attack = table_attack(cfg, eps)
        if eps not in adversarial:
            adversarial[eps] = adversarial_dataset(stores, test, attack) if eps > 0 else None
        return attack, adversarial[eps]

    table1: List[EvalReport] = []
    for eps in cfg.eval.eps_list:
        attack, adv = plain_attack(eps)
        for config_id in TABLE1_CONFIGS:
            table1.append(evaluate_configuration(config_id, stores, test, attack=attack, adv_dataset=adv))
        if eps in COMPOSITE_EPS:
            composite = table_attack(cfg, eps, AttackTarget.COMPOSITE)
            table1.append(evaluate_configuration(ConfigurationId.D, stores, test, attack=composite))

    table2: List[EvalReport] = []
    for eps in cfg.eval.table2_eps:
        attack, adv = plain_attack(eps)
        for config_id in TABLE2_CONFIGS:
            table2.append(evaluate_configuration(config_id, stores, test, attack=attack, adv_dataset=adv))
    table3 = loss_ablation(stores, test)
    return {"table1": table1, "table2": table2, "table3": table3}


def summarize(tables: Dict[str, List[EvalReport]], console: Optional[Console] = None):
    """Print the RMSE columns of every table."""
    console = console or Console(stderr=True)
    for name, reports in tables.items():
        table = Table(title=name)
        for column in ("config", "attack", "eps", "iters", "rmse", "d1"):
            table.add_column(column, justify="right" if column not in ("config", "attack") else "left")
        for r in reports:
            table.add_row(r.config, r.attack, f"{r.eps:.3f}", str(r.iters), f"{r.rmse:.4f}", f"{r.delta1:.4f}")
        console.print(table)


def with_seed(cfg: RunConfig, seed: Optional[int]) -> RunConfig:
    """Use ``seed`` for data generation, the train/test split and training."""
    if seed is None:
        return cfg
    return replace(
        cfg,
        data=replace(cfg.data, seed=seed, split_seed=seed),
        train=replace(cfg.train, seed=seed),
    )


def run_reproduce(
    workdir, seed: Optional[int] = None, cfg: Optional[RunConfig] = None, show: bool = True
) -> ReproduceResult:
    """Run the whole pipeline under ``workdir``; every artifact is a deterministic function of ``seed`` and ``cfg``.

    A ``seed`` overrides the data, split and training seeds of ``cfg``.
    """
    cfg = with_seed(cfg or RunConfig(), seed)
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    files: List[Path] = []

    data = synth_generate(cfg.data.seed, cfg.data.n, cfg.data.dims)
    train, test = split(data, cfg.data.train_fraction, cfg.data.split_seed)
    logger.info(f"Split {len(data)} records into {len(train)} train / {len(test)} test")
    for name, subset in (("train.dgd", train), ("test.dgd", test)):
        save_dataset(workdir / name, subset)
        files.append(workdir / name)

    stores = train_all(cfg, train)
    for role, store in (("n", stores.n), ("n_adv", stores.n_adv), ("g", stores.g), ("g_adv", stores.g_adv)):
        save_checkpoint(workdir / f"{role}.dgw", store)
        files.append(workdir / f"{role}.dgw")

    tables = comparison_tables(cfg, stores, test)
    for name, reports in tables.items():
        write_reports(workdir / f"{name}.csv", reports, append=False)
        write_losses(workdir / f"{name}.losses.csv", reports, append=False)
        files.extend([workdir / f"{name}.csv", workdir / f"{name}.losses.csv"])
    files.append(cfg.write(workdir / "resolved.ini"))

    if show:
        summarize(tables)
    return ReproduceResult(workdir, stores, tables, files)
