"""Experiment configuration: YAML files, shipped presets and validation.

A config describes one campaign. Comparative campaigns list several
``systems``; each system is a set of overrides (mode, loading, CSI, channel
model) applied to the top-level fields, and all systems share the channel
realizations and noise seeds derived from the master seed.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from ..bitloading import CLUSTER_SIZES
from ..chanest import CsiModel
from ..fec.modes import ModeError, get_mode

KINDS = ("ber_outage", "capacity_outage", "channel_stats", "loading_study")
PRESETS = ("desk", "paper")
LOADING_ALGORITHMS = ("none", "ccb", "piazzo")
SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass(frozen=True)
class LoadingConfig:
    algorithm: str = "none"
    gap_db: float | None = None  # None: 6 dB for convolutional codes, 3 dB otherwise
    cluster_size: int = 1
    target_ber: float = 1e-5

    def gap_for(self, code_family: str | None) -> float:
        if self.gap_db is not None:
            return float(self.gap_db)
        return 6.0 if code_family in (None, "CONV") else 3.0


@dataclass(frozen=True)
class CsiConfig:
    kind: str = "perfect"
    P: int = 2
    L: int = 32

    def model(self) -> CsiModel:
        return CsiModel(self.kind, P=self.P, L=self.L)


@dataclass(frozen=True)
class SystemConfig:
    name: str
    channel_model: str
    mode: str | None
    csi: CsiConfig
    loading: LoadingConfig
    noiseless: bool = False


@dataclass
class ExperimentConfig:
    kind: str
    name: str = "experiment"
    channel_model: str = "CM1"
    mode: str | None = None
    csi: CsiConfig = field(default_factory=CsiConfig)
    loading: LoadingConfig = field(default_factory=LoadingConfig)
    snr_grid: list[float] = field(default_factory=lambda: list(np.arange(0.0, 31.0)))
    n_realizations: int = 100
    target_ber: float = 1e-5
    outage_quantile: float = 0.10
    seed: int = 1
    output: str = "results"
    systems: list[dict] = field(default_factory=list)
    # BER estimation
    min_errors: int = 100
    max_bits: int = 20_000_000
    bisection_steps: int = 2
    noiseless: bool = False
    # capacity studies
    rates: list[float] = field(default_factory=lambda: [1.0, 1.5])
    # channel statistics
    channel_models: list[str] = field(default_factory=lambda: ["CM1", "CM2", "CM3", "CM4"])
    histogram_realizations: int = 10_000
    histogram_bins: int = 100
    eigen_realizations: int = 1000
    bandwidths_mhz: list[float] = field(default_factory=lambda: [528.0, 1056.0, 1584.0])
    ray_phase: str = "uniform"

    def __post_init__(self):
        try:
            if isinstance(self.csi, dict):
                self.csi = CsiConfig(**self.csi)
            if isinstance(self.loading, dict):
                self.loading = LoadingConfig(**self.loading)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        self.snr_grid = _parse_grid(self.snr_grid)
        self.systems = list(self.systems or [])
        self.validate()

    # ------------------------------------------------------------ checks
    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        grid = np.asarray(self.snr_grid, dtype=float)
        if grid.ndim != 1 or grid.size == 0 or not np.all(np.isfinite(grid)):
            raise ConfigError("snr_grid must be a non-empty list of finite values")
        if np.any(np.diff(grid) <= 0):
            raise ConfigError("snr_grid must be strictly increasing")
        if int(self.n_realizations) < 1:
            raise ConfigError("n_realizations must be >= 1")
        if not 0 < self.target_ber < 1:
            raise ConfigError("target_ber must lie in (0, 1)")
        if not 0 < self.outage_quantile < 1:
            raise ConfigError("outage_quantile must lie in (0, 1)")
        if self.min_errors < 1 or self.max_bits < 1 or self.bisection_steps < 0:
            raise ConfigError("min_errors, max_bits must be >= 1 and bisection_steps >= 0")
        for system in self.resolved_systems():
            self._check_system(system)

    def _check_system(self, s: SystemConfig) -> None:
        if s.loading.algorithm not in LOADING_ALGORITHMS:
            raise ConfigError(f"{s.name}: unknown loading algorithm {s.loading.algorithm!r}")
        if s.loading.cluster_size not in CLUSTER_SIZES:
            raise ConfigError(f"{s.name}: cluster_size must be one of {CLUSTER_SIZES}")
        try:
            s.csi.model()
        except ValueError as exc:
            raise ConfigError(f"{s.name}: {exc}") from None
        if self.kind == "ber_outage":
            if s.mode is None:
                raise ConfigError(f"{s.name}: ber_outage needs a transmission mode")
            try:
                mode = get_mode(s.mode)
            except (ModeError, KeyError) as exc:
                raise ConfigError(f"{s.name}: {exc}") from None
            if s.loading.algorithm != "none" and mode.spreading != 1:
                raise ConfigError(f"{s.name}: loading requires a mode without spreading")

    # ----------------------------------------------------------- systems
    def resolved_systems(self) -> list[SystemConfig]:
        base = {
            "name": self.name,
            "channel_model": self.channel_model,
            "mode": self.mode,
            "csi": asdict(self.csi),
            "loading": asdict(self.loading),
            "noiseless": self.noiseless,
        }
        entries = self.systems or [{}]
        out, names = [], set()
        for i, over in enumerate(entries):
            if not isinstance(over, dict):
                raise ConfigError(f"systems[{i}] must be a mapping")
            unknown = set(over) - set(base)
            if unknown:
                raise ConfigError(f"systems[{i}]: unknown keys {sorted(unknown)}")
            merged = copy.deepcopy(base)
            for key, value in over.items():
                if key in ("csi", "loading"):
                    merged[key].update(value or {})
                else:
                    merged[key] = value
            if self.systems and "name" not in over:
                raise ConfigError(f"systems[{i}] needs a name")
            if merged["name"] in names:
                raise ConfigError(f"duplicate system name {merged['name']!r}")
            names.add(merged["name"])
            try:
                out.append(SystemConfig(
                    name=str(merged["name"]),
                    channel_model=str(merged["channel_model"]),
                    mode=merged["mode"],
                    csi=CsiConfig(**merged["csi"]),
                    loading=LoadingConfig(**merged["loading"]),
                    noiseless=bool(merged["noiseless"]),
                ))
            except TypeError as exc:
                raise ConfigError(f"systems[{i}]: {exc}") from None
        return out

    # ------------------------------------------------------ persistence
    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["snr_grid"] = [float(x) for x in self.snr_grid]
        return d

    def config_hash(self) -> str:
        """Hash of the canonical config, excluding the output location."""
        d = self.to_dict()
        d.pop("output")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a mapping")
        doc = dict(doc)
        for key in ("csi", "loading"):
            if key in doc and doc[key] is None:
                doc[key] = {}
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def _parse_grid(spec) -> list[float]:
    """A list of values or ``{start, stop, step}`` with ``stop`` inclusive."""
    if isinstance(spec, dict):
        try:
            start, stop, step = float(spec["start"]), float(spec["stop"]), float(spec["step"])
        except (KeyError, TypeError, ValueError):
            raise ConfigError("snr_grid mapping needs numeric start, stop and step") from None
        if step <= 0 or stop < start:
            raise ConfigError("snr_grid needs step > 0 and stop >= start")
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 10) for i in range(n)]
    try:
        return [float(x) for x in spec]
    except (TypeError, ValueError):
        raise ConfigError("snr_grid must be a list of numbers or a start/stop/step mapping") from None


def load_config(path: str | Path, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    doc = dict(doc or {})
    doc.update(overrides or {})
    return ExperimentConfig.from_dict(doc)


def preset_names(preset: str) -> list[str]:
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; expected one of {PRESETS}")
    root = resources.files("mbofdm").joinpath(f"data/presets/{preset}")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_preset(preset: str, study: str, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    """Shipped config ``data/presets/<preset>/<study>.yaml``."""
    if study not in preset_names(preset):
        raise ConfigError(f"preset {preset!r} has no study {study!r}; available: {preset_names(preset)}")
    text = resources.files("mbofdm").joinpath(f"data/presets/{preset}/{study}.yaml").read_text()
    doc = dict(yaml.safe_load(text))
    doc.update(overrides or {})
    return ExperimentConfig.from_dict(doc)
