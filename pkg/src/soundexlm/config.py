"""Experiment configuration: a flat key=value file plus CLI overrides.

Unknown keys are rejected; flag overrides win over file values. Path fields
are validated lazily by the stages that need them, except vocab_path which,
when set, must exist before any training starts.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from soundexlm.encoding import FLAVORS


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    task: str = "sentiment"
    flavor: str = "samlm"
    seed: int = 0
    out_dir: str = "runs/exp"

    train_path: str = ""
    dev_path: str = ""
    test_path: str = ""
    pretrain_path: str = ""
    dict_path: str = ""
    vocab_path: str = ""

    vocab_size: int = 256
    hidden_dim: int = 64
    num_layers: int = 2
    num_heads: int = 4
    ff_dim: int = 128
    max_len: int = 128
    dropout_rate: float = 0.1

    mask_rate: float = 0.15
    batch_size: int = 16
    pretrain_epochs: int = 3
    pretrain_lr: float = 3e-4
    finetune_epochs: int = 5
    finetune_lr: float = 3e-4

    candidate_budget: int = 32
    max_words_perturbed: int = 0  # 0: no cap
    attack_examples: int = 0  # 0: attack the whole test split

    explain_text: str = ""
    explain_permutations: int = 2000
    exact_threshold: int = 12

    def __post_init__(self):
        if self.flavor not in FLAVORS:
            raise ConfigError(f"flavor must be one of {FLAVORS}: {self.flavor!r}")
        if not 0.0 <= self.mask_rate <= 1.0:
            raise ConfigError(f"mask_rate must be in [0, 1]: {self.mask_rate}")
        for name in ("vocab_size", "hidden_dim", "num_layers", "num_heads",
                     "ff_dim", "max_len", "batch_size"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("pretrain_epochs", "finetune_epochs", "max_words_perturbed",
                     "attack_examples"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _parse_value(key: str, raw: str):
    if key not in _FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    target = _FIELDS[key].type
    try:
        if target == "int":
            return int(raw)
        if target == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from exc


def parse_config_text(text: str, source: str = "<string>") -> dict:
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected key=value")
        key, _, raw = stripped.partition("=")
        values[key.strip()] = _parse_value(key.strip(), raw.strip())
    return values


def load_config(
    path: str | Path | None, overrides: dict | None = None
) -> ExperimentConfig:
    """Build a config from an optional file plus override values (flags win)."""
    values: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        values.update(parse_config_text(p.read_text(encoding="utf-8"), str(p)))
    for key, raw in (overrides or {}).items():
        if raw is None:
            continue
        values[key] = _parse_value(key, str(raw))
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def config_as_text(config: ExperimentConfig) -> str:
    lines = [
        f"{f.name}={getattr(config, f.name)}"
        for f in dataclasses.fields(ExperimentConfig)
    ]
    return "\n".join(lines) + "\n"
