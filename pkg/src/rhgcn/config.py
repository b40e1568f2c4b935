"""Run configuration: defaults, flat key-value files, lossless round-trips.

Config files are plain ``key = value`` lines (``#`` comments allowed), one
per field of :class:`RunConfig`.  Values on the command line override the
file, which overrides the defaults.  Floats are written with shortest
round-trip repr so serialize -> parse is lossless.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError

__all__ = ["RunConfig", "parse_config_text", "load_config_file", "config_to_text"]


@dataclass
class RunConfig:
    data: str = ""
    synth: str = ""
    signature: str = "16x1"
    layers: int = 8
    alpha: float = 0.1
    beta_base: float = 0.5
    drop_rate: float = 0.0
    # 0.5 keeps ReLU stacks stable: the tangent projection at an origin
    # displaced by r amplifies off-plane components by up to cosh(2r)
    origin_radius: float = 0.5
    activation: str = "relu"
    noise_granularity: str = "per_node_component"
    noise_clamp: bool = False
    optimizer: str = "adam"
    lr: float = 0.01
    weight_decay: float = 0.0005
    momentum: float = 0.9
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    epochs: int = 200
    patience: int = 100
    seed: int = 0
    out: str = "runs/run"

    def validate(self) -> None:
        if self.data and self.synth:
            raise ConfigError("set either data or synth, not both")
        if self.layers < 1:
            raise ConfigError(f"layers must be >= 1, got {self.layers}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.beta_base < 0.0:
            raise ConfigError(f"beta_base must be nonnegative, got {self.beta_base}")
        if not 0.0 <= self.drop_rate < 1.0:
            raise ConfigError(f"drop_rate must lie in [0, 1), got {self.drop_rate}")
        if self.origin_radius < 0.0:
            raise ConfigError(f"origin_radius must be nonnegative, got {self.origin_radius}")
        if self.activation not in ("relu", "identity"):
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.noise_granularity not in ("per_node_component", "per_component"):
            raise ConfigError(f"unknown noise granularity {self.noise_granularity!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.lr <= 0.0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.weight_decay < 0.0:
            raise ConfigError(f"weight_decay must be nonnegative, got {self.weight_decay}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be nonnegative, got {self.epochs}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELDS = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _parse_value(key: str, raw: str):
    kind = _FIELDS[key]
    raw = raw.strip()
    if kind == "bool":
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"config key {key!r}: expected a boolean, got {raw!r}")
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from exc
    return raw


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = dataclasses.replace(base) if base is not None else RunConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, eq, value = stripped.partition("=")
        if not eq:
            raise ConfigError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        setattr(cfg, key, _parse_value(key, value))
    return cfg


def load_config_file(path, base: RunConfig | None = None) -> RunConfig:
    with open(Path(path), "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), base)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_to_text(cfg: RunConfig) -> str:
    lines = [f"{f.name} = {_format_value(getattr(cfg, f.name))}"
             for f in dataclasses.fields(RunConfig)]
    return "\n".join(lines) + "\n"
