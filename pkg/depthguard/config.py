"""Run configuration read from INI-style files with [data], [network], [train], [attack] and [eval] sections.

Unknown sections and keys are errors. Command line flags override file values; the resolved
configuration is written next to every output so a run can be repeated from the sidecar alone.
"""

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from depthguard.attacks import AttackConfig
from depthguard.constants import DEFAULT_DIMS
from depthguard.defense.optim import AdamConfig
from depthguard.defense.training import TrainConfig
from depthguard.exceptions import ConfigError, DepthGuardError
from depthguard.networks import NetworkSpec


@dataclass(frozen=True)
class DataSection:
    """Synthetic data generation and splitting."""

    seed: int = 0
    n: int = 200
    dims: Tuple[int, ...] = DEFAULT_DIMS
    train_fraction: float = 0.8
    split_seed: int = 0


@dataclass(frozen=True)
class NetworkSection:
    """Toy network architecture."""

    widths: Tuple[int, ...] = (8, 16, 32)
    encoder_depth: int = 3
    dtype: str = "f32"


@dataclass(frozen=True)
class TrainSection:
    """Optimizer and sampling settings.

    ``lam`` < 0 selects the role default and ``iters_per_epoch`` 0 the dataset size.
    """

    epochs: int = 20
    iters_per_epoch: int = 0
    lam: float = -1.0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 1e-4
    adv_prob: float = 0.5
    eps_min: float = 0.01
    eps_max: float = 0.3
    iter_min: int = 1
    iter_max: int = 10
    batch_size: int = 1
    seed: int = 0


@dataclass(frozen=True)
class AttackSection:
    """Attack used by the ``attack`` command and as the default evaluation attack."""

    eps: float = 0.05
    iters: int = 10
    alpha: str = "eps-split"
    loss: str = "l1"
    target: str = "plain"
    self_target: bool = False


@dataclass(frozen=True)
class EvalSection:
    """Settings of the reproduction tables and sweeps."""

    eps_list: Tuple[float, ...] = (0.0, 0.05, 0.1)
    table2_eps: Tuple[float, ...] = (0.0, 0.05, 0.1, 0.15, 0.2)
    iters: int = 10
    sweep_eps: Tuple[float, ...] = (0.0, 0.01, 0.02, 0.05, 0.1, 0.2)
    sweep_iters: Tuple[int, ...] = (1, 2, 5, 10)
    encoder_depths: Tuple[int, ...] = (2, 3, 4)


SECTIONS = {
    "data": DataSection,
    "network": NetworkSection,
    "train": TrainSection,
    "attack": AttackSection,
    "eval": EvalSection,
}


def _coerce(section: str, name: str, annotation, default, raw: Any):
    where = f"[{section}] {name}"
    if not isinstance(raw, str):
        return tuple(raw) if isinstance(default, tuple) else raw
    text = raw.strip()
    try:
        if annotation is bool:
            lowered = text.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if annotation is int:
            return int(text)
        if annotation is float:
            return float(text)
        if annotation is str:
            return text
        # tuples: "64x48" for dims, comma separated lists otherwise
        item = type(default[0]) if default else float
        parts = text.lower().split("x") if name == "dims" else [p for p in text.split(",") if p.strip()]
        return tuple(item(p.strip()) for p in parts)
    except (ValueError, TypeError):
        raise ConfigError(f"{where}: cannot parse {raw!r}")


def _build_section(section: str, values: Dict[str, Any]):
    cls = SECTIONS[section]
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, raw in values.items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in section [{section}] (expected one of {sorted(known)})")
        f = known[key]
        kwargs[key] = _coerce(section, key, f.type, f.default, raw)
    return cls(**kwargs)


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    return str(value)


@dataclass(frozen=True)
class RunConfig:
    """All settings of a run."""

    data: DataSection = field(default_factory=DataSection)
    network: NetworkSection = field(default_factory=NetworkSection)
    train: TrainSection = field(default_factory=TrainSection)
    attack: AttackSection = field(default_factory=AttackSection)
    eval: EvalSection = field(default_factory=EvalSection)

    @classmethod
    def from_string(cls, text: str, overrides: Optional[Dict[str, Any]] = None) -> "RunConfig":
        """Parse INI text; ``overrides`` maps ``"section.key"`` to a value that wins over the file.

        :raises ConfigError: syntax errors, unknown sections or keys, unparsable values
        """
        parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
        try:
            parser.read_string(text)
        except configparser.Error as e:
            raise ConfigError(f"malformed config: {e}")
        values: Dict[str, Dict[str, Any]] = {name: {} for name in SECTIONS}
        for section in parser.sections():
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}] (expected one of {sorted(SECTIONS)})")
            values[section].update(parser[section])
        for dotted, value in (overrides or {}).items():
            if value is None:
                continue
            section, _, key = dotted.partition(".")
            if section not in SECTIONS:
                raise ConfigError(f"unknown section in override {dotted!r}")
            values[section][key] = value
        return cls(**{name: _build_section(name, section_values) for name, section_values in values.items()})

    @classmethod
    def load(cls, path=None, overrides: Optional[Dict[str, Any]] = None) -> "RunConfig":
        """Read ``path`` (defaults only when None) and apply ``overrides``."""
        text = ""
        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise ConfigError(f"config file {path} does not exist")
            text = path.read_text()
        return cls.from_string(text, overrides)

    def to_ini(self) -> str:
        """Render the resolved configuration as INI text."""
        lines = []
        for name in SECTIONS:
            lines.append(f"[{name}]")
            section = getattr(self, name)
            for f in dataclasses.fields(section):
                value = getattr(section, f.name)
                if f.name == "dims":
                    lines.append(f"{f.name} = {'x'.join(str(v) for v in value)}")
                else:
                    lines.append(f"{f.name} = {_format(value)}")
            lines.append("")
        return "\n".join(lines)

    def write(self, path) -> Path:
        """Write the resolved configuration to ``path``."""
        path = Path(path)
        path.write_text(self.to_ini())
        return path

    def network_spec(self, role: str = "depth", encoder_depth: Optional[int] = None) -> NetworkSpec:
        """Network spec for the configured image dims."""
        depth = self.network.encoder_depth if encoder_depth is None else encoder_depth
        return NetworkSpec(
            role=role,
            input_dims=(3, *self.data.dims),
            widths=self.network.widths,
            encoder_depth=depth,
        )

    def train_config(self) -> TrainConfig:
        """Training settings as a :class:`TrainConfig`."""
        t = self.train
        try:
            return TrainConfig(
                epochs=t.epochs,
                iters_per_epoch=t.iters_per_epoch or None,
                lam=None if t.lam < 0 else t.lam,
                adam=AdamConfig(lr=t.lr, betas=(t.beta1, t.beta2), weight_decay=t.weight_decay),
                adv_prob=t.adv_prob,
                eps_range=(t.eps_min, t.eps_max),
                iter_range=(t.iter_min, t.iter_max),
                batch_size=t.batch_size,
                seed=t.seed,
            )
        except DepthGuardError as e:
            raise ConfigError(f"[train] {e.detail}")

    def attack_config(self, eps: Optional[float] = None, iters: Optional[int] = None) -> AttackConfig:
        """Attack settings, optionally with a different eps or iteration count."""
        a = self.attack
        alpha: Any = a.alpha
        if alpha not in ("eps-split", "paper"):
            try:
                alpha = float(alpha)
            except ValueError:
                raise ConfigError(f"[attack] alpha must be 'eps-split', 'paper' or a number, got {alpha!r}")
        try:
            return AttackConfig(
                eps=a.eps if eps is None else eps,
                iters=a.iters if iters is None else iters,
                alpha=alpha,
                objective=a.loss,
                target=a.target,
            )
        except (DepthGuardError, ValueError) as e:
            raise ConfigError(f"[attack] {getattr(e, 'detail', e)}")
