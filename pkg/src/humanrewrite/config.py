"""Experiment configuration: flat ``key = value`` files plus provenance records."""

from __future__ import annotations

import hashlib
import json
import platform
import sys
from dataclasses import asdict, dataclass, fields
from importlib import resources
from pathlib import Path

import numpy as np
import scipy

from .corpus import GeneratorSpec
from .encoding import CRPT, RPT, EncoderOptions
from .network import TrainConfig
from .rewriting import SearchLimits

__all__ = ["ConfigError", "ExperimentConfig", "default_rules_path", "read_config_file", "write_provenance"]


class ConfigError(ValueError):
    pass


def default_rules_path(name: str = "algebra") -> Path:
    return Path(str(resources.files("humanrewrite") / "data" / f"{name}.rules"))


@dataclass
class ExperimentConfig:
    rules: str = ""
    # encoder
    mode: str = RPT
    rpt_depth: int = 3
    breadth: int = 2
    max_position_depth: int = 3
    sav: bool = False
    rar: int = 0
    # network and schedule
    hidden_layers: int = 5
    hidden_units: int = 1024
    init_lr: float = 0.01
    halve_threshold: float = 0.1
    stop_threshold: float = 0.01
    batch_size: int = 2
    max_epochs: int = 100
    seed: int = 0
    # corpus generation
    schemes: int = 450
    task_weights: str = "1/3,1/3,1/3"
    numeral_min: int = 0
    numeral_max: int = 20
    depth_min: int = 1
    depth_max: int = 3
    search_max_depth: int = 12
    search_max_nodes: int = 20_000
    search_max_term_size: int = 60
    # paths
    corpus: str = ""
    model: str = ""
    out: str = ""

    def __post_init__(self):
        if not self.rules:
            self.rules = str(default_rules_path())

    def validate(self) -> ExperimentConfig:
        """Build every sub-config once so that a bad value fails before any work starts."""
        try:
            self.encoder_options()
            self.train_config()
            self.generator_spec()
            self.search_limits()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.mode not in (RPT, CRPT):
            raise ConfigError(f"mode must be rpt or crpt, not {self.mode!r}")
        return self

    def encoder_options(self) -> EncoderOptions:
        return EncoderOptions(
            mode=self.mode,
            depth=self.rpt_depth,
            breadth=self.breadth,
            max_position_depth=self.max_position_depth,
            sav=self.sav,
            rar=self.rar,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            hidden_layers=self.hidden_layers,
            hidden_units=self.hidden_units,
            init_lr=self.init_lr,
            halve_threshold=self.halve_threshold,
            stop_threshold=self.stop_threshold,
            batch_size=self.batch_size,
            seed=self.seed,
            max_epochs=self.max_epochs,
        )

    def weights(self) -> tuple[float, float, float]:
        parts = [p.strip() for p in self.task_weights.split(",")]
        try:
            vals = [_fraction(p) for p in parts]
        except (ValueError, ZeroDivisionError):
            raise ConfigError(f"bad task_weights {self.task_weights!r}") from None
        if len(vals) != 3:
            raise ConfigError("task_weights needs three values: linear, differential, integral")
        total = sum(vals)
        return tuple(v / total for v in vals)  # type: ignore[return-value]

    def generator_spec(self) -> GeneratorSpec:
        return GeneratorSpec(
            weights=self.weights(),
            numeral_range=(self.numeral_min, self.numeral_max),
            depth_range=(self.depth_min, self.depth_max),
            schemes=self.schemes,
            seed=self.seed,
        )

    def search_limits(self) -> SearchLimits:
        return SearchLimits(self.search_max_depth, self.search_max_nodes, self.search_max_term_size)

    def model_name(self) -> str:
        return f"FNN{self.hidden_layers}+{self.encoder_options().tag}"

    def to_text(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in asdict(self).items())

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()

    def update(self, values: dict) -> ExperimentConfig:
        known = {f.name: f for f in fields(self)}
        for key, raw in values.items():
            name = key.replace("-", "_")
            if name not in known:
                raise ConfigError(f"unknown config key {key!r}")
            setattr(self, name, _coerce(known[name].type, raw, key))
        return self


def _fraction(s: str) -> float:
    if "/" in s:
        a, b = s.split("/", 1)
        return float(a) / float(b)
    return float(s)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _coerce(typ, raw, key: str):
    if not isinstance(raw, str):
        return raw
    typ = typ if isinstance(typ, str) else typ.__name__
    try:
        if typ == "bool":
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {key}") from None
    return raw.strip()


def read_config_file(path: str | Path) -> dict[str, str]:
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def write_provenance(directory: str | Path, command: str, cfg: ExperimentConfig, extra: dict | None = None) -> Path:
    from . import __version__

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / f"{command}.config").write_text(cfg.to_text())
    record = {
        "command": command,
        "argv": sys.argv,
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "versions": {
            "humanrewrite": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    if extra:
        record.update(extra)
    path = d / f"{command}.provenance.json"
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    return path
