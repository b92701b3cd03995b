"""Run configuration: a versioned JSON document with one section per stage.

Unknown keys are rejected at every level. Values given with ``--set`` on the
command line override the file.
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

CONFIG_VERSION = 1
CONFIG_DIR_ENV = "FIMKIT_CONFIG_DIR"
DEFAULT_CONFIG_NAME = "default.json"


class ConfigError(ValueError):
    pass


@dataclass
class DataSection:
    kind: str = "tree"                 # tree | swiss-roll | csv
    input: Optional[str] = None        # csv path when kind == "csv"
    has_header: bool = True
    label_column: Optional[str] = None
    intrinsic_columns: List[str] = field(default_factory=list)
    n_branches: int = 5
    per_branch: int = 60
    dim: int = 4
    noise_sd: float = 0.02
    branch_length: float = 1.0
    n: int = 1000                      # swiss-roll sample count
    seed: int = 3
    input_noise: float = 0.001         # gaussian noise added before training
    input_noise_seed: int = 11


@dataclass
class KernelSection:
    kind: str = "adaptive-gaussian"
    sigma: Optional[float] = None
    knn: Optional[int] = 10
    beta: float = 2.0
    anisotropy: float = 1.0


@dataclass
class DiffusionSection:
    t: float = 60.0
    floor_eps: float = 1e-7


@dataclass
class MdsSection:
    k: Optional[int] = None            # None: width of the network's last layer
    max_iters: int = 300
    tol: float = 1e-6


@dataclass
class NetworkSection:
    arch: List[int] = field(default_factory=lambda: [100, 70, 20])
    activation: str = "relu"
    fim_mode: str = "standard"


@dataclass
class TrainingSection:
    learning_rate: float = 1e-4
    epochs: int = 150
    batch_size: int = 32
    weight_decay: float = 0.0
    seed: int = 0
    pairs_per_batch: int = 128


@dataclass
class GeodesicSection:
    preset: str = "sphere"             # sphere | euclidean | swiss-roll | learned-fim
    metric: str = "learned-fim"        # swiss-roll preset: learned-fim | learned-fim-ambient | euclidean
    checkpoint: Optional[str] = None
    start: Optional[List[float]] = None
    target: Optional[List[float]] = None
    lam: float = 100.0
    n_steps: int = 20
    epochs: int = 5000
    learning_rate: float = 1e-2
    schedule: str = "cosine"
    final_lr_ratio: float = 1e-3
    seed: int = 0
    n_pairs: int = 5                   # swiss-roll preset: anchor plus n_pairs partners
    pair_seed: int = 0
    pair_epochs: int = 300             # swiss-roll preset: epochs per pair
    roll_t: float = 20.0               # swiss-roll preset: diffusion time for the learned metric


@dataclass
class ScanSection:
    subsample: int = 50
    subsample_seed: int = 0
    branch_length: Optional[float] = 10.0   # overrides data.branch_length for tree scans
    t_range: List[float] = field(default_factory=lambda: [1.0, 15.0])
    sigma_range: List[float] = field(default_factory=lambda: [50.0, 150.0])
    t_steps: int = 15
    sigma_steps: int = 100
    h_t: float = 1e-2
    rel_h_sigma: float = 1e-2


@dataclass
class SensitivitySection:
    knn_values: List[int] = field(default_factory=lambda: [5, 10, 15])
    noise_values: List[float] = field(default_factory=lambda: [0.0005, 0.001, 0.0015])
    arch_values: List[List[int]] = field(
        default_factory=lambda: [[100, 100, 50], [100, 80, 30], [100, 70, 20]])


@dataclass
class RunConfig:
    version: int = CONFIG_VERSION
    data: DataSection = field(default_factory=DataSection)
    kernel: KernelSection = field(default_factory=KernelSection)
    diffusion: DiffusionSection = field(default_factory=DiffusionSection)
    mds: MdsSection = field(default_factory=MdsSection)
    network: NetworkSection = field(default_factory=NetworkSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    geodesic: GeodesicSection = field(default_factory=GeodesicSection)
    scan: ScanSection = field(default_factory=ScanSection)
    sensitivity: SensitivitySection = field(default_factory=SensitivitySection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


_SECTIONS = {f.name: f.default_factory for f in dataclasses.fields(RunConfig) if f.name != "version"}


def _apply(obj, values: dict, where: str) -> None:
    if not isinstance(values, dict):
        raise ConfigError(f"{where or 'config'} must be an object")
    names = {f.name for f in dataclasses.fields(obj)}
    for key, val in values.items():
        path = f"{where}.{key}" if where else key
        if key not in names:
            raise ConfigError(f"unknown config key {path!r}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            _apply(current, val, path)
        else:
            setattr(obj, key, val)


def from_dict(doc: dict) -> RunConfig:
    cfg = RunConfig()
    version = doc.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version!r}")
    _apply(cfg, doc, "")
    return cfg


def resolve_path(name: Optional[str]) -> Optional[Path]:
    """Config path from ``--config``; bare names are looked up in $FIMKIT_CONFIG_DIR.

    With no name, ``$FIMKIT_CONFIG_DIR/default.json`` is used when it exists.
    """
    env_dir = os.environ.get(CONFIG_DIR_ENV)
    if name is None:
        if env_dir and (Path(env_dir) / DEFAULT_CONFIG_NAME).is_file():
            return Path(env_dir) / DEFAULT_CONFIG_NAME
        return None
    p = Path(name)
    if p.is_file():
        return p
    if env_dir and (Path(env_dir) / name).is_file():
        return Path(env_dir) / name
    raise ConfigError(f"config file {name!r} not found")


def load(name: Optional[str] = None, overrides=()) -> RunConfig:
    path = resolve_path(name)
    doc = {}
    if path is not None:
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    cfg = from_dict(doc)
    for item in overrides:
        set_value(cfg, item)
    return cfg


def set_value(cfg: RunConfig, assignment: str) -> None:
    """Apply ``section.key=value``; the value is parsed as JSON, else kept as text."""
    key, sep, raw = assignment.partition("=")
    if not sep or "." not in key:
        raise ConfigError(f"override {assignment!r} must look like section.key=value")
    section, _, name = key.partition(".")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    if section not in _SECTIONS:
        raise ConfigError(f"unknown config section {section!r}")
    _apply(cfg, {section: {name: value}}, "")


_CHOICES = {
    ("data", "kind"): ("tree", "swiss-roll", "csv"),
    ("network", "activation"): ("relu", "selu"),
    ("network", "fim_mode"): ("standard", "literal"),
    ("geodesic", "preset"): ("sphere", "euclidean", "swiss-roll", "learned-fim"),
    ("geodesic", "metric"): ("learned-fim", "learned-fim-ambient", "euclidean"),
    ("geodesic", "schedule"): ("constant", "cosine"),
}


def _type_ok(value, default) -> bool:
    if default is None or value is None:
        return True
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, str):
        return isinstance(value, str)
    if isinstance(default, list):
        return isinstance(value, list)
    return True


def validate(cfg: RunConfig) -> None:
    """Type and enum checks; range checks happen where each stage builds its own config."""
    for name in _SECTIONS:
        section = getattr(cfg, name)
        reference = _SECTIONS[name]()
        for f in dataclasses.fields(section):
            value = getattr(section, f.name)
            if not _type_ok(value, getattr(reference, f.name)):
                raise ConfigError(f"{name}.{f.name} has the wrong type: {value!r}")
            allowed = _CHOICES.get((name, f.name))
            if allowed and value not in allowed:
                raise ConfigError(f"{name}.{f.name} must be one of {', '.join(allowed)}; got {value!r}")
