"""Experiment configuration: a YAML (or JSON) mapping validated into a dataclass.

Schema (every key optional except ``group``)::

    group: heisenberg1            # registry id
    gauges: [koranyi, carnot]     # registry ids; the first is the default
    fields:                       # analytic builders or files
      - builder: cone
        params: {radius: 1.0}
        gauge: koranyi            # gauge passed to gauge-aware builders
        radial: true              # also run the fixed-point check
      - path: data/u.csv
    resolution: 64                # nodes per axis; a value < 1 is a spacing h
    levels: 512                   # threshold count K
    p_values: [1, 2]
    checks: [validate, constants, equimeasurability, ...]
    seed: 0
    out: results/
    workers: 1
    corrupt_group: false          # negative control: perturb the group law
    tolerances: {equimeasurability: 0.01, inequality: 0.03, ...}
    constants: {nodes: null, refine: 1.5, sigma_samples: 200000}
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .errors import InputError
from .fields import BUILDERS
from .gauges import gauge_ids
from .groups import group_ids

ALL_CHECKS = (
    "validate", "constants", "equimeasurability", "fixed_point", "perimeter_homogeneity",
    "coarea", "sphere_weight", "quasimonotone", "energy_p1", "energy_weighted", "energy_carnot",
)

DEFAULT_TOLERANCES = {
    "equimeasurability": 0.01,
    "inequality": 0.03,
    "homogeneity": 0.05,
    "coarea": 0.05,
    "sphere_weight": 0.05,
    "constants": 0.03,
    "polar": 0.02,
}

BUNDLED = ("euclidean-smoke", "euclidean-plane", "heisenberg-full", "corrupted-group")


@dataclass
class FieldSpec:
    builder: str | None = None
    params: dict = field(default_factory=dict)
    path: str | None = None
    gauge: str | None = None
    radial: bool = False
    name: str | None = None

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        return self.builder if self.builder else Path(self.path).stem


@dataclass
class ExperimentConfig:
    group: str
    gauges: list[str] = field(default_factory=lambda: ["euclidean"])
    fields: list[FieldSpec] = field(default_factory=list)
    resolution: float | list[float] | None = None
    levels: int = 512
    p_values: list[float] = field(default_factory=lambda: [1.0, 2.0])
    checks: list[str] = field(default_factory=lambda: list(ALL_CHECKS))
    seed: int = 0
    out: str | None = None
    workers: int = 1
    corrupt_group: bool = False
    tolerances: dict[str, float] = field(default_factory=dict)
    constants: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.group not in group_ids():
            raise InputError(f"config.group: unknown group id {self.group!r}; known: {group_ids()}")
        if isinstance(self.gauges, str):
            self.gauges = [self.gauges]
        if not self.gauges:
            raise InputError("config.gauges: at least one gauge id is required")
        for gid in self.gauges:
            if gid not in gauge_ids():
                raise InputError(f"config.gauges: unknown gauge id {gid!r}; known: {gauge_ids()}")
        self.fields = [f if isinstance(f, FieldSpec) else _field_spec(f, i)
                       for i, f in enumerate(self.fields)]
        for res in self.resolutions:
            if not res > 0:
                raise InputError(f"config.resolution: must be positive, got {res}")
        if int(self.levels) < 2:
            raise InputError("config.levels: need at least 2 threshold levels")
        self.levels = int(self.levels)
        self.p_values = [float(p) for p in self.p_values]
        if any(p < 1 for p in self.p_values):
            raise InputError("config.p_values: every p must be >= 1")
        unknown = sorted(set(self.checks) - set(ALL_CHECKS))
        if unknown:
            raise InputError(f"config.checks: unknown checks {unknown}; known: {list(ALL_CHECKS)}")
        bad = sorted(set(self.tolerances) - set(DEFAULT_TOLERANCES))
        if bad:
            raise InputError(f"config.tolerances: unknown keys {bad}")
        if int(self.workers) < 1:
            raise InputError("config.workers: must be >= 1")
        self.seed = int(self.seed)

    @property
    def resolutions(self) -> list[float]:
        if self.resolution is None:
            return []
        if isinstance(self.resolution, (list, tuple)):
            return [float(r) for r in self.resolution]
        return [float(self.resolution)]

    def tolerance(self, key: str) -> float:
        return float(self.tolerances.get(key, DEFAULT_TOLERANCES[key]))

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        """sha256 of the canonical JSON form, ``out`` and ``workers`` excluded."""
        d = self.to_dict()
        d.pop("out", None)
        d.pop("workers", None)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _field_spec(raw, index: int) -> FieldSpec:
    if not isinstance(raw, dict):
        raise InputError(f"config.fields[{index}]: expected a mapping, got {type(raw).__name__}")
    unknown = set(raw) - {"builder", "params", "path", "gauge", "radial", "name"}
    if unknown:
        raise InputError(f"config.fields[{index}]: unknown keys {sorted(unknown)}")
    spec = FieldSpec(**raw)
    if (spec.builder is None) == (spec.path is None):
        raise InputError(f"config.fields[{index}]: give exactly one of 'builder' or 'path'")
    if spec.builder is not None and spec.builder not in BUILDERS:
        raise InputError(f"config.fields[{index}].builder: unknown builder {spec.builder!r}; "
                         f"known: {sorted(BUILDERS)}")
    if spec.gauge is not None and spec.gauge not in gauge_ids():
        raise InputError(f"config.fields[{index}].gauge: unknown gauge id {spec.gauge!r}")
    return spec


def config_from_dict(d: dict) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise InputError("config must be a mapping")
    if "group" not in d:
        raise InputError("config.group: missing required key")
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(d) - known
    if unknown:
        raise InputError(f"config: unknown keys {sorted(unknown)}")
    return ExperimentConfig(**d)


def load_config(path) -> ExperimentConfig:
    """Read a ``.yaml``/``.yml``/``.json`` file, or a bundled config by name."""
    p = Path(path)
    if not p.exists() and str(path) in BUNDLED:
        return bundled_config(str(path))
    if not p.is_file():
        raise InputError(f"config file not found: {p}")
    text = p.read_text()
    try:
        data = json.loads(text) if p.suffix.lower() == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise InputError(f"{p}: cannot parse config ({exc})") from None
    cfg = config_from_dict(data)
    # relative field paths are resolved against the config file
    for spec in cfg.fields:
        if spec.path is not None and not Path(spec.path).is_absolute():
            spec.path = str((p.parent / spec.path).resolve())
    return cfg


def bundled_config(name: str) -> ExperimentConfig:
    if name not in BUNDLED:
        raise InputError(f"unknown bundled config {name!r}; known: {list(BUNDLED)}")
    text = resources.files("carnot_rearrange").joinpath("configs", f"{name}.yaml").read_text()
    return config_from_dict(yaml.safe_load(text))
