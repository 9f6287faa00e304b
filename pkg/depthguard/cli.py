"""Command line front end: data generation, training, attacks, evaluation, dumps and the full pipeline.

Every command writes its resolved configuration next to its output (``<output>.config.ini``, or
``resolved.ini`` inside an output directory). Failures print one line, ``error: <code>: <detail>``,
exit nonzero and remove whatever the command had started writing.
"""

from contextlib import contextmanager
from enum import Enum
from pathlib import Path
from typing import Iterator, List, Optional

import typer
from loguru import logger
from tqdm import tqdm

from depthguard.attacks import AttackTarget, attack_samples, composite_model, depth_model
from depthguard.config import RunConfig
from depthguard.data import (
    Dataset,
    SampleRecord,
    dump_diff,
    dump_image,
    dump_map,
    ingest,
    load_dataset,
    save_dataset,
    synth_generate,
)
from depthguard.defense import (
    ConfigurationId,
    Stores,
    default_saliency_spec,
    encoder_depth_sweep,
    eps_sweep,
    evaluate_configuration,
    iters_sweep,
    train_depth,
    train_depth_adv,
    train_saliency_adv,
    train_saliency_clean,
)
from depthguard.exceptions import ConfigError, DepthGuardError
from depthguard.losses import LossKind
from depthguard.metrics import EvalReport, write_losses, write_reports
from depthguard.networks import ParameterStore, forward_depth, forward_saliency, load_checkpoint, save_checkpoint
from depthguard.reproduce import run_reproduce

app = typer.Typer(add_completion=False, help="Adversarial attacks on toy depth networks and saliency-mask defenses.")
sweep_app = typer.Typer(add_completion=False, help="Parameter sweeps of the undefended and defended networks.")
app.add_typer(sweep_app, name="sweep")

DEFAULT_DUMP_COUNT = 4


class TrainKind(str, Enum):
    """Which network ``train`` produces."""

    DEPTH = "depth"
    DEPTH_ADV = "depth-adv"
    SALIENCY = "saliency"
    SALIENCY_ADV = "saliency-adv"


class DumpKind(str, Enum):
    """What ``dump`` writes for each selected record."""

    IMAGE = "image"
    DEPTH = "depth"
    SALIENCY = "saliency"
    DIFF = "diff"


class Outputs:
    """Files and directories a command writes, removed again if the command fails.

    Files appended to are only removed when the command created them.
    """

    def __init__(self):
        self._files: List[Path] = []
        self._dirs: List[tuple] = []

    def file(self, path, append: bool = False) -> Path:
        path = Path(path)
        if not (append and path.exists()):
            self._files.append(path)
        return path

    def directory(self, path) -> Path:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        self._dirs.append((path, {p for p in path.iterdir()}))
        return path

    def sidecar(self, cfg: RunConfig, output) -> Path:
        """Write the resolved config as ``<output>.config.ini``."""
        path = self.file(Path(f"{output}.config.ini"))
        return cfg.write(path)

    def cleanup(self):
        for path in self._files:
            path.unlink(missing_ok=True)
        for path, before in self._dirs:
            if path.is_dir():
                for created in set(path.iterdir()) - before:
                    if created.is_file():
                        created.unlink()


def fail(code: str, detail: str):
    """Print the single-line error and exit nonzero."""
    typer.echo(f"error: {code}: {detail}", err=True)
    raise typer.Exit(code=1)


@contextmanager
def guarded() -> Iterator[Outputs]:
    """Run a command body; on error remove partial outputs and report ``error: <code>: <detail>``."""
    outputs = Outputs()
    try:
        yield outputs
    except DepthGuardError as e:
        logger.opt(exception=e).debug("Command failed")
        outputs.cleanup()
        fail(e.code, e.detail)
    except OSError as e:
        logger.opt(exception=e).debug("Command failed")
        outputs.cleanup()
        fail("io", str(e))


def _checkpoint(path: Optional[Path], role: str) -> Optional[ParameterStore]:
    if path is None:
        return None
    store = load_checkpoint(path)
    if store.role is not None and store.role != role:
        logger.warning(f"{path} holds a {store.role} checkpoint, using it as {role}")
    return store


def _dataset(path: Path) -> Dataset:
    if not path.is_file():
        raise ConfigError(f"dataset {path} does not exist")
    return load_dataset(path)


def _with_dims(overrides: dict, dataset: Dataset) -> dict:
    """Resolve the data dims from the dataset actually used."""
    if dataset.dims is not None:
        overrides = dict(overrides, **{"data.dims": dataset.dims})
    return overrides


def _write_table(outputs: Outputs, path: Path, reports: List[EvalReport], append: bool):
    losses_path = path.with_name(f"{path.stem}.losses.csv")
    write_reports(outputs.file(path, append=append), reports, append=append)
    write_losses(outputs.file(losses_path, append=append), reports, append=append)


@app.callback()
def main(verbose: bool = typer.Option(False, "--verbose", "-v", help="Log per-iteration detail.")):
    """Configure logging so log lines and progress bars share the terminal."""
    logger.remove()
    logger.add(lambda msg: tqdm.write(msg, end=""), colorize=True, level="DEBUG" if verbose else "INFO")


@app.command()
def synth(
    out: Path = typer.Option(..., "--out", "-o", help="DGD1 file to write."),
    seed: Optional[int] = typer.Option(None, "--seed", "-s", help="Master seed of the scene generator."),
    n: Optional[int] = typer.Option(None, "--n", "-n", help="Number of records."),
    dims: Optional[str] = typer.Option(None, "--dims", help="Image dimensions as HxW, multiples of 16."),
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="INI run configuration."),
):
    """Generate a synthetic dataset of box scenes with analytic depth."""
    with guarded() as outputs:
        cfg = RunConfig.load(config, {"data.seed": seed, "data.n": n, "data.dims": dims})
        data = synth_generate(cfg.data.seed, cfg.data.n, cfg.data.dims)
        save_dataset(outputs.file(out), data)
        outputs.sidecar(cfg, out)


@app.command("ingest")
def ingest_command(
    source: Path = typer.Option(..., "--in", "-i", help="Externally converted DGD1 file."),
    out: Path = typer.Option(..., "--out", "-o", help="DGD1 file to write."),
    dims: Optional[str] = typer.Option(None, "--dims", help="Target image dimensions as HxW."),
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="INI run configuration."),
):
    """Resize and center-crop an external dataset to the configured dimensions."""
    with guarded() as outputs:
        cfg = RunConfig.load(config, {"data.dims": dims})
        if not source.is_file():
            raise ConfigError(f"dataset {source} does not exist")
        save_dataset(outputs.file(out), ingest(source, cfg.data.dims))
        outputs.sidecar(cfg, out)


@app.command()
def train(
    kind: TrainKind = typer.Argument(..., help="Network to train."),
    data: Path = typer.Option(..., "--data", "-d", help="Training DGD1 file."),
    out: Path = typer.Option(..., "--out", "-o", help="DGW1 checkpoint to write."),
    frozen_n: Optional[Path] = typer.Option(None, "--frozen-n", help="Depth checkpoint held fixed (saliency only)."),
    epochs: Optional[int] = typer.Option(None, "--epochs", "-e", help="Override [train] epochs."),
    seed: Optional[int] = typer.Option(None, "--seed", "-s", help="Override [train] seed."),
    lam: Optional[float] = typer.Option(None, "--lambda", help="Override the sparsity weight."),
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="INI run configuration."),
):
    """Train N, N_adv, G or G_adv."""
    with guarded() as outputs:
        dataset = _dataset(data)
        overrides = _with_dims({"train.epochs": epochs, "train.seed": seed, "train.lam": lam}, dataset)
        cfg = RunConfig.load(config, overrides)
        train_cfg = cfg.train_config()
        if kind in (TrainKind.DEPTH, TrainKind.DEPTH_ADV):
            if frozen_n is not None:
                logger.warning("--frozen-n is ignored when training a depth network")
            trainer = train_depth if kind is TrainKind.DEPTH else train_depth_adv
            result = trainer(dataset, train_cfg, cfg.network_spec("depth"))
        else:
            if frozen_n is None:
                raise ConfigError(f"train {kind.value} requires --frozen-n")
            n = _checkpoint(frozen_n, "N")
            g_spec = default_saliency_spec(n.spec, encoder_depth=cfg.network.encoder_depth)
            trainer = train_saliency_clean if kind is TrainKind.SALIENCY else train_saliency_adv
            result = trainer(n, dataset, train_cfg, g_spec=g_spec)
        save_checkpoint(outputs.file(out), result.store)
        logger.info(f"{result.store.role}: {result.adversarial_count} adversarial iteration(s)")
        outputs.sidecar(cfg, out)


@app.command()
def attack(
    n: Path = typer.Option(..., "--n", help="Depth checkpoint to attack."),
    data: Path = typer.Option(..., "--data", "-d", help="Clean DGD1 file."),
    out: Path = typer.Option(..., "--out", "-o", help="Adversarial DGD1 file to write."),
    g: Optional[Path] = typer.Option(None, "--g", help="Saliency checkpoint for a composite attack."),
    target: Optional[AttackTarget] = typer.Option(None, "--target", help="Attack N alone or N(x * G(x))."),
    eps: Optional[float] = typer.Option(None, "--eps", help="Linf budget in [0, 1]."),
    iters: Optional[int] = typer.Option(None, "--iters", "-t", help="Number of steps; 1 is FGSM."),
    alpha: Optional[str] = typer.Option(None, "--alpha", help="eps-split, paper (one 8-bit level) or a number."),
    loss: Optional[LossKind] = typer.Option(None, "--loss", help="Objective the attacker maximizes."),
    self_target: Optional[bool] = typer.Option(
        None, "--self/--ground-truth", help="Attack against N's own clean prediction instead of the labels."
    ),
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="INI run configuration."),
):
    """Perturb every record of a dataset and store the adversarial images with their provenance."""
    with guarded() as outputs:
        dataset = _dataset(data)
        overrides = {
            "attack.eps": eps,
            "attack.iters": iters,
            "attack.alpha": alpha,
            "attack.loss": loss.value if loss else None,
            "attack.target": target.value if target else None,
            "attack.self_target": self_target,
        }
        cfg = RunConfig.load(config, _with_dims(overrides, dataset))
        attack_cfg = cfg.attack_config()
        n_store = _checkpoint(n, "N")
        if attack_cfg.target is AttackTarget.COMPOSITE:
            if g is None:
                raise ConfigError("a composite attack requires --g")
            model = composite_model(n_store, _checkpoint(g, "G"))
        else:
            if g is not None:
                logger.warning("--g is ignored unless --target composite")
            model = depth_model(n_store)
        results = attack_samples(model, dataset.pairs(), attack_cfg, use_self_target=cfg.attack.self_target)
        records = [SampleRecord(r.x_star, rec.depth, rec.scene_seed) for r, rec in zip(results, dataset)]
        provenance = {"attack": attack_cfg.describe(), "source": str(data), "self_target": cfg.attack.self_target}
        save_dataset(outputs.file(out), Dataset(records, provenance=provenance))
        if results:
            worst = max(r.linf for r in results)
            logger.info(f"Largest perturbation {worst:.6f} (eps {attack_cfg.eps})")
        outputs.sidecar(cfg, out)


@app.command("eval")
def evaluate(
    config_id: ConfigurationId = typer.Option(..., "--config-id", help="Configuration A-F."),
    data: Path = typer.Option(..., "--data", "-d", help="Clean test DGD1 file."),
    out: Path = typer.Option(..., "--out", "-o", help="CSV to append the report row to."),
    n: Optional[Path] = typer.Option(None, "--n", help="Depth checkpoint N."),
    n_adv: Optional[Path] = typer.Option(None, "--n-adv", help="Adversarially trained depth checkpoint."),
    g: Optional[Path] = typer.Option(None, "--g", help="Saliency checkpoint G."),
    g_adv: Optional[Path] = typer.Option(None, "--g-adv", help="Robust saliency checkpoint G_adv."),
    adv_data: Optional[Path] = typer.Option(None, "--adv-data", help="Precomputed adversarial DGD1 file."),
    eps: Optional[float] = typer.Option(None, "--eps", help="Attack on the fly with this eps (no --adv-data)."),
    iters: Optional[int] = typer.Option(None, "--iters", "-t", help="Steps of the on-the-fly attack."),
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="INI run configuration."),
):
    """Evaluate one configuration and append its metrics to a CSV (losses go to ``<out>.losses.csv``)."""
    with guarded() as outputs:
        dataset = _dataset(data)
        adv = _dataset(adv_data) if adv_data is not None else None
        cfg = RunConfig.load(config, _with_dims({"attack.eps": eps, "attack.iters": iters}, dataset))
        stores = Stores(
            n=_checkpoint(n, "N"),
            n_adv=_checkpoint(n_adv, "N_adv"),
            g=_checkpoint(g, "G"),
            g_adv=_checkpoint(g_adv, "G_adv"),
        )
        attack_cfg = cfg.attack_config() if adv is None and eps is not None else None
        report = evaluate_configuration(config_id, stores, dataset, attack=attack_cfg, adv_dataset=adv)
        _write_table(outputs, out, [report], append=True)
        outputs.sidecar(cfg, out)
        logger.info(f"{report.config} ({report.attack}, eps={report.eps}): rmse {report.rmse:.4f}")


@app.command()
def dump(
    what: DumpKind = typer.Option(..., "--what", "-w", help="Maps to write."),
    source: Path = typer.Option(..., "--in", "-i", help="Clean DGD1 file."),
    out: Path = typer.Option(..., "--out", "-o", help="Output directory."),
    n: Optional[Path] = typer.Option(None, "--n", help="Depth checkpoint for predicted depth."),
    g: Optional[Path] = typer.Option(None, "--g", help="Saliency checkpoint for masks."),
    adv_data: Optional[Path] = typer.Option(None, "--adv-data", help="Adversarial DGD1 aligned with --in."),
    index: List[int] = typer.Option([], "--index", help="Record indices; the first four by default."),
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="INI run configuration."),
):
    """Write PGM/PPM images of inputs, depths, saliency masks or perturbations."""
    with guarded() as outputs:
        dataset = _dataset(source)
        adv = _dataset(adv_data) if adv_data is not None else None
        cfg = RunConfig.load(config, _with_dims({}, dataset))
        if adv is not None and len(adv) != len(dataset):
            raise ConfigError(f"--adv-data has {len(adv)} records, --in has {len(dataset)}")
        if what is DumpKind.SALIENCY and g is None:
            raise ConfigError("dump --what saliency requires --g")
        if what is DumpKind.DIFF and adv is None:
            raise ConfigError("dump --what diff requires --adv-data")
        indices = list(index) or list(range(min(DEFAULT_DUMP_COUNT, len(dataset))))
        for i in indices:
            if not 0 <= i < len(dataset):
                raise ConfigError(f"--index {i} outside 0..{len(dataset) - 1}")
        n_store, g_store = _checkpoint(n, "N"), _checkpoint(g, "G")
        directory = outputs.directory(out)

        for i in indices:
            record = dataset[i]
            x = adv[i].image if adv is not None else record.image
            stem = directory / f"{i:04d}"
            if what is DumpKind.IMAGE:
                dump_image(f"{stem}_image", record.image)
                if adv is not None:
                    dump_image(f"{stem}_adv", x)
            elif what is DumpKind.DEPTH:
                dump_map(f"{stem}_depth_true", record.depth)
                if n_store is not None:
                    dump_map(f"{stem}_depth_pred", forward_depth(n_store, x))
            elif what is DumpKind.SALIENCY:
                dump_map(f"{stem}_saliency", forward_saliency(g_store, x))
            else:
                dump_diff(f"{stem}_diff", x, record.image)
        cfg.write(directory / "resolved.ini")
        logger.info(f"Wrote {what.value} dumps of {len(indices)} record(s) to {directory}")


@app.command()
def reproduce(
    workdir: Path = typer.Option(..., "--workdir", "-w", help="Directory for every artifact of the run."),
    seed: Optional[int] = typer.Option(None, "--seed", "-s", help="Master seed for data, split and training."),
    n: Optional[int] = typer.Option(None, "--n", "-n", help="Override [data] n."),
    epochs: Optional[int] = typer.Option(None, "--epochs", "-e", help="Override [train] epochs."),
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="INI run configuration."),
):
    """Run the whole toy pipeline and write table1.csv, table2.csv and table3.csv."""
    with guarded() as outputs:
        cfg = RunConfig.load(config, {"data.n": n, "train.epochs": epochs})
        run_reproduce(outputs.directory(workdir), seed, cfg)


def _sweep_stores(n: Path, g_adv: Optional[Path]) -> Stores:
    return Stores(n=_checkpoint(n, "N"), g_adv=_checkpoint(g_adv, "G_adv"))


@sweep_app.command("eps")
def sweep_eps(
    n: Path = typer.Option(..., "--n", help="Depth checkpoint N."),
    g_adv: Path = typer.Option(..., "--g-adv", help="Robust saliency checkpoint G_adv."),
    data: Path = typer.Option(..., "--data", "-d", help="Clean test DGD1 file."),
    out: Path = typer.Option(Path("eps_sweep.csv"), "--out", "-o", help="CSV to write."),
    eps: List[float] = typer.Option([], "--eps", help="Budgets to sweep; [eval] sweep_eps by default."),
    iters: int = typer.Option(1, "--iters", "-t", help="Attack steps; 1 is FGSM."),
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="INI run configuration."),
):
    """Configurations A and F across attack budgets."""
    with guarded() as outputs:
        dataset = _dataset(data)
        cfg = RunConfig.load(config, _with_dims({"eval.sweep_eps": tuple(eps) or None}, dataset))
        reports = eps_sweep(_sweep_stores(n, g_adv), dataset, cfg.eval.sweep_eps, iters=iters)
        _write_table(outputs, out, reports, append=False)
        outputs.sidecar(cfg, out)


@sweep_app.command("iters")
def sweep_iters(
    n: Path = typer.Option(..., "--n", help="Depth checkpoint N."),
    g_adv: Path = typer.Option(..., "--g-adv", help="Robust saliency checkpoint G_adv."),
    data: Path = typer.Option(..., "--data", "-d", help="Clean test DGD1 file."),
    out: Path = typer.Option(Path("iters_sweep.csv"), "--out", "-o", help="CSV to write."),
    iters: List[int] = typer.Option([], "--iters", "-t", help="Step counts; [eval] sweep_iters by default."),
    eps: float = typer.Option(0.1, "--eps", help="Fixed Linf budget."),
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="INI run configuration."),
):
    """Configurations A and F across IFGSM iteration counts."""
    with guarded() as outputs:
        dataset = _dataset(data)
        cfg = RunConfig.load(config, _with_dims({"eval.sweep_iters": tuple(iters) or None}, dataset))
        reports = iters_sweep(_sweep_stores(n, g_adv), dataset, cfg.eval.sweep_iters, eps=eps)
        _write_table(outputs, out, reports, append=False)
        outputs.sidecar(cfg, out)


@sweep_app.command("depth")
def sweep_depth(
    n: Path = typer.Option(..., "--n", help="Depth checkpoint N, held fixed."),
    train_data: Path = typer.Option(..., "--train-data", help="Training DGD1 file for G_adv."),
    data: Path = typer.Option(..., "--data", "-d", help="Clean test DGD1 file."),
    out: Path = typer.Option(Path("depth_sweep.csv"), "--out", "-o", help="CSV to write."),
    depth: List[int] = typer.Option([], "--depth", help="Encoder depths; [eval] encoder_depths by default."),
    epochs: Optional[int] = typer.Option(None, "--epochs", "-e", help="Override [train] epochs."),
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="INI run configuration."),
):
    """Retrain G_adv per saliency encoder depth and evaluate configuration F."""
    with guarded() as outputs:
        train_set, test_set = _dataset(train_data), _dataset(data)
        overrides = {"eval.encoder_depths": tuple(depth) or None, "train.epochs": epochs}
        cfg = RunConfig.load(config, _with_dims(overrides, test_set))
        reports = encoder_depth_sweep(
            Stores(n=_checkpoint(n, "N")), train_set, test_set, cfg.eval.encoder_depths, cfg.train_config()
        )
        _write_table(outputs, out, reports, append=False)
        outputs.sidecar(cfg, out)


if __name__ == "__main__":
    app()
