"""Run configuration files: UTF-8 ``key = value`` lines under section
headers. Unknown sections or keys are rejected, and every default is
materialized into the echoed effective configuration so a run can be
reproduced from the echo alone."""

from __future__ import annotations

import configparser
from dataclasses import dataclass

from .data import BatchSpec
from .errors import ConfigError
from .losses import LossConfig
from .trainer import TrainConfig

# section -> key -> (parser, default); None default means "required".
_SCHEMA = {
    "data": {
        "path": (str, None),
        "split": (str, "class-half"),
    },
    "batch": {
        "classes": (int, 10),
        "samples": (int, 5),
        "seed": (int, None),  # falls back to train.seed
    },
    "loss": {
        "mode": (str, "almn"),
        "beta": (float, 1.0),
        "lambda": (float, 0.0005),
        "m_angle": (int, 1),
    },
    "model": {
        "hidden": (str, "64,64"),
        "embedding_dim": (int, 32),
    },
    "train": {
        "iterations": (int, 2000),
        "lr": (float, 0.01),
        "lr_decay_factor": (float, 0.8),
        "decay_at_iteration": (int, None),  # None: 60% of iterations
        "momentum": (float, 0.9),
        "weight_decay": (float, 0.0002),
        "center_alpha": (float, 0.5),
        "center_update_every": (int, 1),
        "head_lr_multiplier": (float, 10.0),
        "seed": (int, 0),
    },
    "output": {
        "dir": (str, "out"),
        "figures": (str, "true"),
    },
}

_OPTIONAL_REQUIRED = {("batch", "seed"), ("train", "decay_at_iteration")}


@dataclass
class RunConfig:
    """Fully resolved run settings."""

    data_path: str
    split: str
    train_cfg: TrainConfig
    output_dir: str
    figures: bool

    def echo(self) -> str:
        """Effective configuration, every default materialized."""
        t = self.train_cfg
        lines = [
            "[data]",
            f"path = {self.data_path}",
            f"split = {self.split}",
            "",
            "[batch]",
            f"classes = {t.batch.m}",
            f"samples = {t.batch.n}",
            f"seed = {t.batch.seed}",
            "",
            "[loss]",
            f"mode = {t.loss.margin_mode}",
            f"beta = {t.loss.beta!r}",
            f"lambda = {t.loss.lam!r}",
            f"m_angle = {t.loss.m_angle}",
            "",
            "[model]",
            f"hidden = {','.join(str(h) for h in t.hidden)}",
            f"embedding_dim = {t.embedding_dim}",
            "",
            "[train]",
            f"iterations = {t.iterations}",
            f"lr = {t.lr!r}",
            f"lr_decay_factor = {t.lr_decay_factor!r}",
            f"decay_at_iteration = {t.decay_iteration}",
            f"momentum = {t.momentum!r}",
            f"weight_decay = {t.weight_decay!r}",
            f"center_alpha = {t.center_alpha!r}",
            f"center_update_every = {t.center_update_every}",
            f"head_lr_multiplier = {t.head_lr_multiplier!r}",
            f"seed = {t.seed}",
            "",
            "[output]",
            f"dir = {self.output_dir}",
            f"figures = {'true' if self.figures else 'false'}",
            "",
        ]
        return "\n".join(lines)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def parse_run_config(path) -> RunConfig:
    """Load and validate a run configuration file."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, "r", encoding="utf-8") as f:
            parser.read_file(f)
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from None

    values: dict[tuple[str, str], object] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{path}: unknown key '{key}' in [{section}]")
            caster, _ = _SCHEMA[section][key]
            try:
                values[(section, key)] = caster(raw)
            except ValueError:
                raise ConfigError(
                    f"{path}: bad value for {section}.{key}: {raw!r}"
                ) from None

    def get(section, key):
        if (section, key) in values:
            return values[(section, key)]
        _, default = _SCHEMA[section][key]
        if default is None and (section, key) not in _OPTIONAL_REQUIRED:
            raise ConfigError(f"{path}: missing required key {section}.{key}")
        return default

    split = get("data", "split")
    if split not in ("class-half", "none"):
        raise ConfigError(f"{path}: data.split must be 'class-half' or 'none'")

    seed = get("train", "seed")
    batch_seed = get("batch", "seed")
    hidden_raw = str(get("model", "hidden")).strip()
    try:
        hidden = tuple(int(h) for h in hidden_raw.split(",") if h.strip())
    except ValueError:
        raise ConfigError(f"{path}: model.hidden must be comma-separated integers") from None
    if not hidden:
        raise ConfigError(f"{path}: model.hidden must name at least one layer")

    try:
        loss_cfg = LossConfig(
            beta=get("loss", "beta"),
            lam=get("loss", "lambda"),
            margin_mode=get("loss", "mode"),
            m_angle=get("loss", "m_angle"),
        )
        batch_spec = BatchSpec(
            m=get("batch", "classes"),
            n=get("batch", "samples"),
            seed=seed if batch_seed is None else batch_seed,
        )
        train_cfg = TrainConfig(
            iterations=get("train", "iterations"),
            lr=get("train", "lr"),
            lr_decay_factor=get("train", "lr_decay_factor"),
            decay_at_iteration=get("train", "decay_at_iteration"),
            momentum=get("train", "momentum"),
            weight_decay=get("train", "weight_decay"),
            loss=loss_cfg,
            batch=batch_spec,
            center_alpha=get("train", "center_alpha"),
            center_update_every=get("train", "center_update_every"),
            head_lr_multiplier=get("train", "head_lr_multiplier"),
            hidden=hidden,
            embedding_dim=get("model", "embedding_dim"),
            seed=seed,
        )
    except ValueError as e:
        raise ConfigError(f"{path}: {e}") from None

    return RunConfig(
        data_path=get("data", "path"),
        split=split,
        train_cfg=train_cfg,
        output_dir=get("output", "dir"),
        figures=_parse_bool(str(get("output", "figures"))),
    )
