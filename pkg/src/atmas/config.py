"""Scenario and experiment configuration.

Configs are TOML files whose tables map one-to-one onto the dataclasses
below. Unknown keys are rejected so typos fail loudly instead of silently
falling back to defaults.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, get_type_hints

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib


class ConfigError(ValueError):
    """Malformed or out-of-range configuration."""


def load_toml(path: str | Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc


@dataclass
class GeometryConfig:
    earth_radius_km: float = 6371.0
    altitude_km: float = 20000.0
    beam_half_angle_deg: float = 11.64
    bs_coverage_km: float = 20.0
    bs_pitch_km: float = 20.0
    region_km: float = 100.0
    # subsatellite point in the local tangent plane of the region centre
    subsatellite_point_km: list[float] = field(default_factory=lambda: [500.0, 0.0])

    def validate(self) -> None:
        if self.altitude_km <= 0:
            raise ConfigError("geometry.altitude_km must be > 0")
        if not 0 < self.beam_half_angle_deg < 90:
            raise ConfigError("geometry.beam_half_angle_deg must lie in (0, 90)")
        if self.bs_coverage_km <= 0 or self.bs_pitch_km <= 0 or self.region_km <= 0:
            raise ConfigError("geometry distances must be > 0")
        if len(self.subsatellite_point_km) != 2:
            raise ConfigError("geometry.subsatellite_point_km must be [x, y]")


@dataclass
class MobilityConfig:
    speed_mean_kmh: list[float] = field(default_factory=lambda: [4.0, 60.0])
    speed_cv: float = 0.25
    turn_std_deg: list[float] = field(default_factory=lambda: [5.0, 30.0])
    roam_radius_km: float = 12.0
    home_spread_km: float = 25.0
    heading_corr: float = 0.8
    # spoofer home offset, in units of divergence * roam_radius_km
    spoof_home_shift: float = 1.5

    def validate(self) -> None:
        lo, hi = self.speed_mean_kmh
        if not 0 <= lo <= hi:
            raise ConfigError("mobility.speed_mean_kmh must be [lo, hi] with 0 <= lo <= hi")
        lo, hi = self.turn_std_deg
        if not 0 <= lo <= hi:
            raise ConfigError("mobility.turn_std_deg must be [lo, hi] with 0 <= lo <= hi")
        if self.speed_cv < 0 or self.roam_radius_km <= 0 or self.home_spread_km < 0:
            raise ConfigError("mobility spreads must be non-negative")
        if not 0 <= self.heading_corr < 1:
            raise ConfigError("mobility.heading_corr must lie in [0, 1)")


@dataclass
class TrafficConfig:
    conversational_rate_Bps: float = 2000.0
    conversational_cv: float = 0.10
    streaming_on_rate_Bps: float = 50000.0
    streaming_on_mean_s: float = 8.0
    streaming_off_mean_s: float = 2.0
    interactive_arrival_per_s: float = 0.5
    interactive_pareto_shape: float = 1.5
    interactive_pareto_scale_B: float = 5000.0
    # fraction of the window's volume sent uplink, per service
    uplink_share: list[float] = field(default_factory=lambda: [0.5, 0.05, 0.25])
    uplink_noise_sigma: float = 0.6
    # per-MU lognormal sigma for the personal traffic multiplier
    user_scale_sigma: float = 0.5
    # per-MU Dirichlet concentration of the service mix
    mix_concentration: float = 0.6

    def validate(self) -> None:
        if len(self.uplink_share) != 3 or not all(0 <= s <= 1 for s in self.uplink_share):
            raise ConfigError("traffic.uplink_share must hold three values in [0, 1]")
        if self.interactive_pareto_shape <= 1:
            raise ConfigError("traffic.interactive_pareto_shape must be > 1 (finite mean)")


@dataclass
class DatasetConfig:
    n_mu: int = 20
    n_windows: int = 1000
    window_s: int = 30
    sample_hz: int = 1
    illegal_fraction: float = 0.3
    divergence: float = 0.4

    def validate(self) -> None:
        if self.n_mu < 1 or self.n_windows < 0:
            raise ConfigError("dataset.n_mu must be >= 1 and n_windows >= 0")
        if self.window_s <= 0 or self.sample_hz <= 0:
            raise ConfigError("dataset.window_s and sample_hz must be > 0")
        if not 0 <= self.illegal_fraction <= 1:
            raise ConfigError("dataset.illegal_fraction must lie in [0, 1]")
        if not 0 <= self.divergence <= 1:
            raise ConfigError("dataset.divergence must lie in [0, 1]")


@dataclass
class ChannelConfig:
    mu_bs_ms: float = 2.0
    bs_sat_ms: float = 15.0
    sat_ncc_ms: float = 15.0
    jitter_ms: float = 3.0
    loss_prob: float = 0.0

    def validate(self) -> None:
        if min(self.mu_bs_ms, self.bs_sat_ms, self.sat_ncc_ms, self.jitter_ms) < 0:
            raise ConfigError("channel delays must be >= 0")
        if not 0 <= self.loss_prob <= 1:
            raise ConfigError("channel.loss_prob must lie in [0, 1]")


@dataclass
class ProtocolConfig:
    threshold_ms: int = 50
    group: str = "modp2048"
    fuzzy_key_bits: int = 64
    fuzzy_block: int = 7
    biometric_noise_flips: int = 2
    timeout_ms: int = 1000
    nonce_cache_size: int = 4096

    def validate(self) -> None:
        if self.threshold_ms < 0 or self.timeout_ms <= 0:
            raise ConfigError("protocol.threshold_ms must be >= 0 and timeout_ms > 0")
        if self.fuzzy_block % 2 == 0:
            raise ConfigError("protocol.fuzzy_block must be odd")


@dataclass
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 12
    min_samples_split: int = 2

    def validate(self) -> None:
        if self.n_trees < 1 or self.max_depth < 1 or self.min_samples_split < 2:
            raise ConfigError("forest hyperparameters out of range")


@dataclass
class AuthConfig:
    min_enroll_windows: int = 200
    threshold_low: float = 0.8
    threshold_medium: float = 0.65
    threshold_high: float = 0.5
    negatives_per_mu: int = 200

    def validate(self) -> None:
        for t in (self.threshold_low, self.threshold_medium, self.threshold_high):
            if not 0 <= t <= 1:
                raise ConfigError("auth thresholds must lie in [0, 1]")


@dataclass
class ExperimentConfig:
    algorithms: list[str] = field(default_factory=lambda: ["forest", "tree", "knn", "logreg"])
    fractions: list[float] = field(default_factory=lambda: [0.1, 0.2, 0.3, 0.4, 0.5])
    n_seeds: int = 10
    test_fraction: float = 0.3
    tag: str = ""

    def validate(self) -> None:
        if self.n_seeds < 1:
            raise ConfigError("experiment.n_seeds must be >= 1")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("experiment.test_fraction must lie in (0, 1)")
        for f in self.fractions:
            if not 0 <= f <= 0.95:
                raise ConfigError(f"sweep fraction {f} outside [0, 0.95]")


@dataclass
class MUSpec:
    id: str
    position_km: list[float] | None = None
    security_level: str = "Medium"
    biometric_flips: int | None = None
    password_override: str | None = None
    # continuous windows from this index on come from the spoofer stream
    spoof_after: int | None = None


@dataclass
class AdversarySpec:
    kind: str
    target: str = "AuthRequest"
    occurrence: int = 0
    delay_ms: int = 0
    bit: int | None = None
    field: str = "payload"
    mu: str | None = None
    mode: str = "forge"  # Impersonate only: forge | duplicate


@dataclass
class SimulationConfig:
    n_mu: int = 1
    n_bs: int = 0  # extra grid BSs beyond those serving an MU
    continuous_windows: int = 0
    mus: list[MUSpec] = field(default_factory=list)
    adversaries: list[AdversarySpec] = field(default_factory=list)

    def validate(self) -> None:
        kinds = {"Replay", "Tamper", "Impersonate", "Eavesdrop"}
        for adv in self.adversaries:
            if adv.kind not in kinds:
                raise ConfigError(f"unknown adversary kind {adv.kind!r}")
            if adv.kind == "Impersonate" and adv.mode not in ("forge", "duplicate"):
                raise ConfigError(f"unknown impersonation mode {adv.mode!r}")
            if adv.occurrence < 0 or adv.delay_ms < 0:
                raise ConfigError("adversary occurrence and delay_ms must be >= 0")
        for mu in self.mus:
            if mu.security_level not in ("Low", "Medium", "High"):
                raise ConfigError(f"unknown security level {mu.security_level!r}")
            if mu.position_km is not None and len(mu.position_km) != 2:
                raise ConfigError(f"MU {mu.id}: position_km must be [x, y]")
        ids = [mu.id for mu in self.mus]
        if len(set(ids)) != len(ids):
            raise ConfigError("MU ids must be unique")
        if self.n_mu < 0 or self.continuous_windows < 0:
            raise ConfigError("simulation counts must be >= 0")


@dataclass
class ScenarioConfig:
    seed: int = 0
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    mobility: MobilityConfig = field(default_factory=MobilityConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    forest: ForestConfig = field(default_factory=ForestConfig)
    auth: AuthConfig = field(default_factory=AuthConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)

    def validate(self) -> "ScenarioConfig":
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        for f in dataclasses.fields(self):
            section = getattr(self, f.name)
            if hasattr(section, "validate"):
                section.validate()
        return self

    def replace(self, **sections) -> "ScenarioConfig":
        """Copy with top-level fields or ``section__key`` overrides."""
        cfg = _from_dict(ScenarioConfig, to_dict(self))
        for key, value in sections.items():
            if "__" in key:
                sec, name = key.split("__", 1)
                setattr(getattr(cfg, sec), name, value)
            else:
                setattr(cfg, key, value)
        return cfg.validate()

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        return _from_dict(cls, data).validate()

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioConfig":
        return cls.from_dict(load_toml(path))


def to_dict(obj) -> dict:
    return dataclasses.asdict(obj)


def _from_dict(cls, data: Any):
    if not isinstance(data, dict):
        raise ConfigError(f"expected a table for {cls.__name__}, got {type(data).__name__}")
    hints = get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown keys in {cls.__name__}: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        kwargs[name] = _coerce(hints[name], value, f"{cls.__name__}.{name}")
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _coerce(hint, value, where: str):
    if dataclasses.is_dataclass(hint):
        return _from_dict(hint, value)
    origin = getattr(hint, "__origin__", None)
    args = getattr(hint, "__args__", ())
    if origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be a list")
        (item,) = args
        return [_coerce(item, v, where) for v in value]
    if args and type(None) in args:  # Optional[X]
        if value is None:
            return None
        inner = next(a for a in args if a is not type(None))
        return _coerce(inner, value, where)
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        return float(value)
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer")
        return value
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
        return value
    return value
