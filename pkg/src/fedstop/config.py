"""Declarative experiment configuration (JSON).

Schema, with defaults::

    {
      "model":   {"kind": "logreg", "hidden_dim": 16},
      "data":    {"num_classes": 4, "input_dim": 10, "n_per_class": 2500,
                  "class_sep": 2.5, "skew": "dirichlet", "c": 0.1,
                  "split": [0.8, 0.1, 0.1]},
      "method":  {"method": "fedavg", "local_lr": 0.05, "local_steps": 5,
                  "batch_size": 32, "mu": 0.01, "alpha": 0.1, "sam_radius": 0.05},
      "monitor": {"tau": 0.01, "rho": 10},
      "N": 100, "M": 10, "R": 500, "seeds": [0, 1, 2],
      "eval_every": 1, "snapshot_every": 0,
      "val_monitors": true, "halt_at_stop": null
    }

``halt_at_stop`` is ``null`` (run the full budget and record every rule),
``"datafree"`` or ``"val"`` (halt once every validation rule has fired).
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from .data import SKEWS, PartitionSpec
from .errors import ConfigError
from .fedcore import MethodConfig
from .model import ModelSpec
from .stopping import MonitorConfig

__all__ = ["ModelConfig", "DataConfig", "ExperimentConfig", "load_config", "config_hash"]


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "logreg"
    hidden_dim: int = 16


@dataclass(frozen=True)
class DataConfig:
    num_classes: int = 4
    input_dim: int = 10
    n_per_class: int = 2500
    class_sep: float = 2.5
    skew: str = "dirichlet"
    c: float = 0.1
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)

    def __post_init__(self):
        if self.skew not in SKEWS:
            raise ConfigError(f"unknown skew {self.skew!r}")
        if len(self.split) != 3 or any(f <= 0 for f in self.split) or abs(sum(self.split) - 1) > 1e-9:
            raise ConfigError("data.split must be three positive fractions summing to 1")
        if self.n_per_class < 1:
            raise ConfigError("data.n_per_class must be positive")
        if self.class_sep < 0:
            raise ConfigError("data.class_sep must be non-negative")
        if self.skew == "pathological" and not (int(self.c) == self.c and 1 <= self.c <= self.num_classes):
            raise ConfigError("pathological c must be an integer in [1, num_classes]")
        if not self.c > 0:
            raise ConfigError("data.c must be positive")


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    data: DataConfig = field(default_factory=DataConfig)
    method: MethodConfig = field(default_factory=MethodConfig)
    monitor: MonitorConfig = field(default_factory=MonitorConfig)
    N: int = 100
    M: int = 10
    R: int = 500
    seeds: tuple[int, ...] = (0, 1, 2)
    eval_every: int = 1
    snapshot_every: int = 0
    val_monitors: bool = True
    halt_at_stop: str | None = None

    def __post_init__(self):
        if self.N < 1:
            raise ConfigError("N must be >= 1")
        if not 1 <= self.M <= self.N:
            raise ConfigError(f"need 1 <= M <= N, got M={self.M}, N={self.N}")
        if self.R < 2:
            raise ConfigError("R must be >= 2")
        if len(self.seeds) == 0:
            raise ConfigError("seeds must be non-empty")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")
        if self.snapshot_every < 0:
            raise ConfigError("snapshot_every must be >= 0")
        if self.halt_at_stop not in (None, "datafree", "val"):
            raise ConfigError("halt_at_stop must be null, 'datafree' or 'val'")
        if self.halt_at_stop == "val" and not self.val_monitors:
            raise ConfigError("halt_at_stop='val' requires val_monitors")
        # every accepted config must yield a valid ModelSpec
        self.model_spec()

    def model_spec(self) -> ModelSpec:
        return ModelSpec(self.model.kind, self.data.input_dim, self.data.num_classes,
                         self.model.hidden_dim if self.model.kind == "mlp" else 0)

    def partition_spec(self, seed) -> PartitionSpec:
        return PartitionSpec(self.data.skew, self.data.c, self.N, seed)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["data"]["split"] = list(self.data.split)
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        raw = dict(raw)
        parts = {}
        for key, typ in (("model", ModelConfig), ("data", DataConfig),
                         ("method", MethodConfig), ("monitor", MonitorConfig)):
            parts[key] = _build(typ, raw.pop(key, {}), key)
        top = _build(_TopLevel, raw, "config")
        try:
            return cls(**parts, **asdict(top))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    def with_overrides(self, overrides: dict[str, Any]) -> "ExperimentConfig":
        """Return a copy with dotted-path fields replaced, e.g. ``{"method.mu": 0.1}``."""
        d = self.to_dict()
        for path, value in overrides.items():
            node = d
            *head, leaf = path.split(".")
            for key in head:
                if key not in node or not isinstance(node[key], dict):
                    raise ConfigError(f"unknown config path {path!r}")
                node = node[key]
            if leaf not in node:
                raise ConfigError(f"unknown config path {path!r}")
            node[leaf] = value
        return ExperimentConfig.from_dict(d)


@dataclass(frozen=True)
class _TopLevel:
    N: int = 100
    M: int = 10
    R: int = 500
    seeds: tuple[int, ...] = (0, 1, 2)
    eval_every: int = 1
    snapshot_every: int = 0
    val_monitors: bool = True
    halt_at_stop: str | None = None


_INT_FIELDS = {"hidden_dim", "num_classes", "input_dim", "n_per_class", "local_steps",
               "batch_size", "rho", "N", "M", "R", "eval_every", "snapshot_every"}


def _build(typ, raw, where: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be an object")
    known = {f.name for f in fields(typ)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown field(s) in {where}: {sorted(unknown)}")
    kwargs = {}
    for name, value in raw.items():
        if name in _INT_FIELDS:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{where}.{name} must be an integer")
        elif name in ("split", "seeds"):
            if not isinstance(value, (list, tuple)):
                raise ConfigError(f"{where}.{name} must be a list")
            if name == "seeds" and not all(isinstance(s, int) and not isinstance(s, bool) for s in value):
                raise ConfigError("seeds must be integers")
            value = tuple(value)
        elif name == "val_monitors":
            if not isinstance(value, bool):
                raise ConfigError("val_monitors must be true or false")
        elif name in ("kind", "skew", "method", "halt_at_stop"):
            if value is not None and not isinstance(value, str):
                raise ConfigError(f"{where}.{name} must be a string")
        elif isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}.{name} must be a number")
        kwargs[name] = value
    try:
        return typ(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    """Parse a JSON config file. Raises ``ConfigError`` on invalid content."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(raw)


def config_hash(cfg: ExperimentConfig) -> str:
    """Stable hash of everything except the seed list."""
    d = cfg.to_dict()
    d.pop("seeds")
    blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()
