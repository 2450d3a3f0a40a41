"""Experiment configuration: INI parsing, validation, defaults, echo.

The file format is line-oriented `key = value` under the six sections
[dataset] [model] [srcm] [defense] [optimizer] [run]. Unknown sections
or keys are rejected by name. Every run report embeds the fully
resolved echo, which parses back to an identical configuration.

Environment overrides: LAB_SEED replaces run.seed, LAB_OUT_DIR replaces
the CLI output directory (handled by the CLI, not here).
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field

from .defenses import DefenseConfig
from .errors import ConfigError
from .srcm import HEAD_DESIGNS, SRCM, SrcmConfig, VANILLA

SECTIONS = ("dataset", "model", "srcm", "defense", "optimizer", "run")


@dataclass
class DatasetConfig:
    source: str = "synthetic"
    path: str | None = None
    n: int = 20_000
    d: int = 600
    classes: int = 100
    flip_prob: float = 0.2
    seed: int | None = None  # None: follow run.seed

    def __post_init__(self):
        if self.source not in ("synthetic", "file"):
            raise ConfigError(f"dataset.source must be 'synthetic' or 'file', got '{self.source}'")
        if self.source == "file" and not self.path:
            raise ConfigError("dataset.source = file requires dataset.path")


@dataclass
class ModelConfig:
    hidden: tuple[int, ...] = (1024, 512, 256)
    activation: str = "tanh"
    head_design: str = VANILLA

    def __post_init__(self):
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ConfigError(f"model.hidden must be positive widths, got {self.hidden}")
        if self.activation not in ("tanh", "relu"):
            raise ConfigError(f"model.activation must be tanh or relu, got '{self.activation}'")
        if self.head_design not in HEAD_DESIGNS:
            raise ConfigError(
                f"model.head_design must be one of {HEAD_DESIGNS}, got '{self.head_design}'"
            )


@dataclass
class OptimizerConfig:
    lr: float = 0.1
    momentum: float = 0.09
    weight_decay: float = 5e-4

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"optimizer.lr must be positive, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"optimizer.momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError(f"optimizer.weight_decay must be >= 0, got {self.weight_decay}")


@dataclass
class RunConfig:
    seed: int = 0
    epochs: int = 100
    batch_size: int = 128
    repeat: int = 1
    sweep_r1: tuple[float, ...] = (0.5, 1.0, 2.0, 4.0, 8.0)
    sweep_d: tuple[float, ...] = (0.5, 1.0, 2.0)

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"run.epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"run.batch_size must be >= 1, got {self.batch_size}")
        if self.repeat < 1:
            raise ConfigError(f"run.repeat must be >= 1, got {self.repeat}")
        if not self.sweep_r1 or any(v <= 0 for v in self.sweep_r1):
            raise ConfigError(f"run.sweep_r1 must be positive values, got {self.sweep_r1}")
        if not self.sweep_d or any(v <= 0 for v in self.sweep_d):
            raise ConfigError(f"run.sweep_d must be positive values, got {self.sweep_d}")


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    srcm: SrcmConfig | None = None
    defense: DefenseConfig = field(default_factory=DefenseConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def __post_init__(self):
        if self.model.head_design != VANILLA and self.srcm is None:
            raise ConfigError(
                f"head_design {self.model.head_design} requires [srcm] r1 and d"
            )


def _parse_value(section: str, key: str, raw: str, kind):
    try:
        if kind is bool:
            lowered = raw.strip().lower()
            if lowered in ("true", "yes", "1"):
                return True
            if lowered in ("false", "no", "0"):
                return False
            raise ValueError(f"not a boolean: '{raw}'")
        if kind == "int_list":
            return tuple(int(tok) for tok in raw.split(","))
        if kind == "float_list":
            return tuple(float(tok) for tok in raw.split(","))
        return kind(raw)
    except ValueError as e:
        raise ConfigError(f"[{section}] {key}: {e}") from None


# section -> key -> target type
_SCHEMA = {
    "dataset": {
        "source": str,
        "path": str,
        "n": int,
        "d": int,
        "classes": int,
        "flip_prob": float,
        "seed": int,
    },
    "model": {"hidden": "int_list", "activation": str, "head_design": str},
    "srcm": {"r1": float, "d": float, "all_on": bool, "hidden_width": int},
    "defense": {
        "kind": str,
        "epsilon": float,
        "beta": float,
        "patience": int,
        "min_delta": float,
        "val_fraction": float,
    },
    "optimizer": {"lr": float, "momentum": float, "weight_decay": float},
    "run": {
        "seed": int,
        "epochs": int,
        "batch_size": int,
        "repeat": int,
        "sweep_r1": "float_list",
        "sweep_d": "float_list",
    },
}


def parse_config(text: str) -> ExperimentConfig:
    """Validate and resolve a configuration; all defaults applied."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}") from None

    values: dict[str, dict] = {s: {} for s in SECTIONS}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]; expected one of {SECTIONS}")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key '{key}' in section [{section}]")
            values[section][key] = _parse_value(section, key, raw, _SCHEMA[section][key])

    srcm_keys = values.pop("srcm")
    head = values["model"].get("head_design", VANILLA)
    srcm_cfg = None
    if head != VANILLA or srcm_keys:
        missing = [k for k in ("r1", "d") if k not in srcm_keys]
        if head != VANILLA and missing:
            raise ConfigError(f"head_design {head} requires [srcm] {' and '.join(missing)}")
        if srcm_keys:
            if missing:
                raise ConfigError(f"[srcm] requires {' and '.join(missing)} when present")
            srcm_keys.setdefault("all_on", head == SRCM)
            srcm_cfg = SrcmConfig(**srcm_keys)

    seed_override = os.environ.get("LAB_SEED")
    if seed_override is not None:
        try:
            values["run"]["seed"] = int(seed_override)
        except ValueError:
            raise ConfigError(f"LAB_SEED must be an integer, got '{seed_override}'") from None

    try:
        return ExperimentConfig(
            dataset=DatasetConfig(**values["dataset"]),
            model=ModelConfig(**values["model"]),
            srcm=srcm_cfg,
            defense=DefenseConfig(**values["defense"]),
            optimizer=OptimizerConfig(**values["optimizer"]),
            run=RunConfig(**values["run"]),
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_items(cfg: ExperimentConfig) -> list[tuple[str, str]]:
    """Resolved configuration as ordered (section.key, value-string) pairs.

    Unset-by-meaning values (dataset.path, dataset.seed, the whole srcm
    section for a vanilla head) are omitted rather than serialized as
    sentinels. This is the single source for both the INI echo and the
    report's config block.
    """
    ds, mo, de, op, rn = cfg.dataset, cfg.model, cfg.defense, cfg.optimizer, cfg.run
    items = [("dataset.source", ds.source)]
    if ds.path is not None:
        items.append(("dataset.path", ds.path))
    items += [
        ("dataset.n", _fmt(ds.n)),
        ("dataset.d", _fmt(ds.d)),
        ("dataset.classes", _fmt(ds.classes)),
        ("dataset.flip_prob", _fmt(ds.flip_prob)),
    ]
    if ds.seed is not None:
        items.append(("dataset.seed", _fmt(ds.seed)))
    items += [
        ("model.hidden", _fmt(mo.hidden)),
        ("model.activation", mo.activation),
        ("model.head_design", mo.head_design),
    ]
    if cfg.srcm is not None:
        items += [
            ("srcm.r1", _fmt(cfg.srcm.r1)),
            ("srcm.d", _fmt(cfg.srcm.d)),
            ("srcm.all_on", _fmt(cfg.srcm.all_on)),
        ]
        if cfg.srcm.hidden_width is not None:
            items.append(("srcm.hidden_width", _fmt(cfg.srcm.hidden_width)))
    items += [
        ("defense.kind", de.kind),
        ("defense.epsilon", _fmt(de.epsilon)),
        ("defense.beta", _fmt(de.beta)),
        ("defense.patience", _fmt(de.patience)),
        ("defense.min_delta", _fmt(de.min_delta)),
        ("defense.val_fraction", _fmt(de.val_fraction)),
        ("optimizer.lr", _fmt(op.lr)),
        ("optimizer.momentum", _fmt(op.momentum)),
        ("optimizer.weight_decay", _fmt(op.weight_decay)),
        ("run.seed", _fmt(rn.seed)),
        ("run.epochs", _fmt(rn.epochs)),
        ("run.batch_size", _fmt(rn.batch_size)),
        ("run.repeat", _fmt(rn.repeat)),
        ("run.sweep_r1", _fmt(rn.sweep_r1)),
        ("run.sweep_d", _fmt(rn.sweep_d)),
    ]
    return items


def config_echo(cfg: ExperimentConfig) -> str:
    """Fully resolved INI text; parse_config(echo) == cfg."""
    lines: list[str] = []
    current = None
    for dotted, value in config_items(cfg):
        section, _, key = dotted.partition(".")
        if section != current:
            if current is not None:
                lines.append("")
            lines.append(f"[{section}]")
            current = section
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
