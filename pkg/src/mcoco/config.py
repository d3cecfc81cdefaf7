"""Flat ``key = value`` run configuration.

One setting per line, ``#`` starts a comment. Keys are the TrainingConfig
fields plus ``dataset``, ``out`` and ``normalize``. Lists are comma
separated; ``view_hidden_dims`` separates views with ``;``.
Booleans accept true/false/yes/no/1/0.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from .trainer import TrainingConfig


class ConfigError(ValueError):
    pass


def _bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _ints(v: str):
    return [int(x) for x in v.split(",") if x.strip()]


def _view_ints(v: str):
    return [_ints(part) for part in v.split(";") if part.strip()]


_TRAINING_PARSERS = {
    "k": int, "latent_dim": int, "hidden_dims": _ints, "view_hidden_dims": _view_ints,
    "generator_hidden": int, "tau": float, "lambda1": float, "lambda2": float,
    "learning_rate": float, "batch_size": int, "pretrain_epochs": int, "train_epochs": int,
    "seed": int, "use_se": _bool, "use_ml_semantic": _bool, "adam_beta1": float,
    "adam_beta2": float, "adam_eps": float, "full_dataset_targets": _bool, "kmeans_restarts": int,
}
assert set(_TRAINING_PARSERS) == {f.name for f in fields(TrainingConfig)}

_RUN_PARSERS = {"dataset": str, "out": str, "normalize": _bool}

ABLATIONS = {
    "full": {"use_se": True, "use_ml_semantic": True},
    "no-se": {"use_se": False},
    "no-ml": {"use_ml_semantic": False},
}


@dataclass
class RunConfig:
    training: TrainingConfig = field(default_factory=TrainingConfig)
    dataset: Optional[str] = None
    out: Optional[str] = None
    normalize: bool = True

    def apply_ablation(self, name: str):
        if name not in ABLATIONS:
            raise ConfigError(f"unknown ablation {name!r}; choose from {sorted(ABLATIONS)}")
        for key, value in ABLATIONS[name].items():
            setattr(self.training, key, value)

    def dumps(self) -> str:
        lines = [f"dataset = {self.dataset}"] if self.dataset else []
        if self.out:
            lines.append(f"out = {self.out}")
        lines.append(f"normalize = {str(self.normalize).lower()}")
        for f in fields(TrainingConfig):
            v = getattr(self.training, f.name)
            if v is None:
                continue
            if f.name == "view_hidden_dims":
                v = ";".join(",".join(map(str, h)) for h in v)
            elif isinstance(v, list):
                v = ",".join(map(str, v))
            elif isinstance(v, bool):
                v = str(v).lower()
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    values, run = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in _TRAINING_PARSERS:
            target, parser = values, _TRAINING_PARSERS[key]
        elif key in _RUN_PARSERS:
            target, parser = run, _RUN_PARSERS[key]
        else:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in target:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            target[key] = parser(value)
        except ValueError as e:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {e}") from None
    cfg = RunConfig(training=TrainingConfig(**values), **run)
    try:
        cfg.training.validate()
    except ValueError as e:
        raise ConfigError(f"{source}: {e}") from None
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror}") from None
    return parse_config(text, str(path))
