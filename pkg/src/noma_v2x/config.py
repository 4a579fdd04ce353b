"""Experiment configuration: nested dataclasses, YAML loading and named presets."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from .channel import RadioConfig
from .powerctrl import PowerConfig
from .scenario import KMH, ScenarioConfig, ScenarioError
from .scheduler import GGA, MCD, OMA, SCHEMES, SchedulerConfig


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


@dataclass(frozen=True)
class TrafficConfig:
    packet_bits: int = 2400
    control_fraction: float = 0.15
    system_bandwidth: float = 10e6
    oma_channels: int = 10


SWEEP_VARS = {
    "v": "vehicle speed, km/h",
    "r": "communication range of interest, m",
    "k_max": "sub-channels per NOMA Tx",
    "rate_threshold": "decode rate threshold, bits/s/Hz",
    "n_users": "user count",
    "w": "power-control decode fraction",
}


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    radio: RadioConfig = field(default_factory=RadioConfig)
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    power: PowerConfig = field(default_factory=PowerConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    schemes: tuple[str, ...] = SCHEMES
    seed: int = 0
    seeds_per_point: int = 10
    sweep_var: str | None = None
    sweep_values: tuple[float, ...] = ()

    def __post_init__(self):
        unknown = [s for s in self.schemes if s not in SCHEMES]
        if unknown or not self.schemes:
            raise ConfigError(f"schemes must be a non-empty subset of {list(SCHEMES)}, got {list(self.schemes)}")
        if self.seeds_per_point < 1:
            raise ConfigError("seeds_per_point must be >= 1")
        if self.sweep_var is not None:
            if self.sweep_var not in SWEEP_VARS:
                raise ConfigError(f"unknown sweep variable {self.sweep_var!r}; choose from {sorted(SWEEP_VARS)}")
            if not self.sweep_values:
                raise ConfigError("sweep grid is empty")
            for value in self.sweep_values:
                self._changes_at(value)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    @property
    def points(self) -> list[float | None]:
        return list(self.sweep_values) if self.sweep_var else [None]

    def _changes_at(self, value: float) -> dict[str, Any]:
        var = self.sweep_var
        try:
            if var == "v":
                return {"scenario": self.scenario.replace(speed=float(value) * KMH)}
            if var == "r":
                return {"scenario": self.scenario.replace(comm_range=float(value))}
            if var == "k_max":
                return {"scheduler": self.scheduler.replace(k_max=int(value))}
            if var == "rate_threshold":
                return {"radio": self.radio.replace(rate_threshold=float(value))}
            if var == "n_users":
                return {"scenario": self.scenario.replace(n_users=int(value))}
            if var == "w":
                return {"power": dataclasses.replace(self.power, w=float(value))}
        except (ValueError, ScenarioError) as exc:
            raise ConfigError(f"{var}={value}: {exc}") from None
        raise ConfigError(f"unknown sweep variable {var!r}")

    def at(self, value: float | None) -> "ExperimentConfig":
        """The config with the sweep variable set to ``value``."""
        if self.sweep_var is None or value is None:
            return self
        return self.replace(**self._changes_at(value))

    def for_scheme(self, scheme: str) -> tuple[RadioConfig, SchedulerConfig]:
        """Radio and scheduler settings a scheme actually runs with.

        NOMA schemes split the band into ``scheduler.n_channels``; OMA uses
        ``traffic.oma_channels`` orthogonal channels, one per Tx.
        """
        t = self.traffic
        if scheme == OMA:
            k = t.oma_channels
            return (self.radio.replace(subchannel_bandwidth=t.system_bandwidth / k),
                    self.scheduler.replace(n_channels=k, k_max=1))
        k = self.scheduler.n_channels
        return self.radio.replace(subchannel_bandwidth=t.system_bandwidth / k), self.scheduler

    def required_rate(self, scheme: str) -> float:
        from .metrics import latency_required_rate

        radio, _ = self.for_scheme(scheme)
        control = 0.0 if scheme == OMA else self.traffic.control_fraction
        return latency_required_rate(self.traffic.packet_bits, self.scenario.slot_duration,
                                     radio.subchannel_bandwidth, control)

    def to_dict(self) -> dict:
        out = {
            "scenario": dataclasses.asdict(self.scenario),
            "radio": dataclasses.asdict(self.radio),
            "scheduler": dataclasses.asdict(self.scheduler),
            "power": dataclasses.asdict(self.power),
            "traffic": dataclasses.asdict(self.traffic),
            "schemes": list(self.schemes),
            "seed": self.seed,
            "seeds_per_point": self.seeds_per_point,
        }
        out["scenario"]["speed_kmh"] = out["scenario"].pop("speed") / KMH
        if self.sweep_var:
            out["sweep"] = {"var": self.sweep_var, "values": list(self.sweep_values)}
        return out


def _build(cls, data: Any, where: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"[{where}] must be a mapping")
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"[{where}] unknown keys {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}] {exc}") from None


def from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    known = {"scenario", "radio", "scheduler", "power", "traffic", "schemes", "seed", "seeds_per_point", "sweep"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    scen = dict(data.get("scenario") or {})
    if "speed_kmh" in scen:
        scen["speed"] = float(scen.pop("speed_kmh")) * KMH
    for key in ("speed_min_kmh", "speed_max_kmh"):
        if key in scen:
            val = scen.pop(key)
            scen[key.replace("_kmh", "")] = None if val is None else float(val) * KMH
    try:
        scenario = _build(ScenarioConfig, scen, "scenario")
    except ScenarioError as exc:
        raise ConfigError(f"[scenario] {exc}") from None
    sweep = data.get("sweep") or {}
    try:
        return ExperimentConfig(
            scenario=scenario,
            radio=_build(RadioConfig, data.get("radio"), "radio"),
            scheduler=_build(SchedulerConfig, data.get("scheduler"), "scheduler"),
            power=_build(PowerConfig, data.get("power"), "power"),
            traffic=_build(TrafficConfig, data.get("traffic"), "traffic"),
            schemes=tuple(data.get("schemes", SCHEMES)),
            seed=int(data.get("seed", 0)),
            seeds_per_point=int(data.get("seeds_per_point", 10)),
            sweep_var=sweep.get("var"),
            sweep_values=tuple(sweep.get("values", ())),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def load(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return from_dict(data or {})


def parse_sweep(text: str) -> tuple[str, tuple[float, ...]]:
    """``"v=15,30,45"`` -> ``("v", (15.0, 30.0, 45.0))``."""
    var, sep, values = text.partition("=")
    var = var.strip()
    if not sep or not var:
        raise ConfigError(f"sweep must look like var=a,b,c, got {text!r}")
    if var not in SWEEP_VARS:
        raise ConfigError(f"unknown sweep variable {var!r}; choose from {sorted(SWEEP_VARS)}")
    try:
        grid = tuple(float(v) for v in values.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"sweep values must be numbers, got {values!r}") from None
    if not grid:
        raise ConfigError("sweep grid is empty")
    return var, grid


def override(cfg: ExperimentConfig, seed: int | None = None, seeds_per_point: int | None = None,
             schemes: tuple[str, ...] | list[str] | None = None, sweep: str | None = None) -> ExperimentConfig:
    """Apply command-line style overrides on top of a loaded config."""
    changes: dict[str, Any] = {}
    if seed is not None:
        changes["seed"] = int(seed)
    if seeds_per_point is not None:
        changes["seeds_per_point"] = int(seeds_per_point)
    if schemes:
        changes["schemes"] = tuple(schemes)
    if sweep:
        changes["sweep_var"], changes["sweep_values"] = parse_sweep(sweep)
    if not changes:
        return cfg
    try:
        return cfg.replace(**changes)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def dump(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


PRESETS: dict[str, tuple[str, ExperimentConfig]] = {}


def _preset(name: str, doc: str, cfg: ExperimentConfig):
    PRESETS[name] = (doc, cfg)


def preset(name: str) -> ExperimentConfig:
    try:
        return PRESETS[name][1]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {sorted(PRESETS)}") from None


_preset(
    "standard",
    "Evaluation profile: 23 dBm, -174 dBm/Hz, 2 GHz, 10 MHz, 40 x 1 ms slots, q_max 4, "
    "300-byte packets, 15% control, K=5 NOMA / K=10 OMA, threshold 2 bits/s/Hz",
    ExperimentConfig(),
)

_preset(
    "desk",
    "The evaluation profile at desk scale: N=40, velocity sweep 15..60 km/h, 50 seeds per point",
    ExperimentConfig(seeds_per_point=50, sweep_var="v", sweep_values=(15.0, 30.0, 45.0, 60.0)),
)

_preset(
    "smoke",
    "Tiny plan for a quick end-to-end check: N=20, one point, 2 seeds",
    ExperimentConfig(scenario=ScenarioConfig(n_users=20), seeds_per_point=2),
)
