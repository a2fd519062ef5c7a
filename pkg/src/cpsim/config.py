"""Experiment configuration: nested dataclasses with JSON round-tripping.

Every default lives here so that ``cpsim dump-defaults`` can print the full
parameter set and feed it back in unchanged.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

POLICIES = ("all", "closest", "coverage", "etc", "mass", "cmass")


class ConfigError(ValueError):
    """Invalid configuration. ``key`` names the offending dotted key."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class ScenarioConfig:
    blocks_x: int = 3
    blocks_y: int = 3
    block_size: float = 100.0
    lane_width: float = 3.5
    sidewalk_width: float = 2.0
    stub_length: float = 30.0
    vehicle_speed_min: float = 8.0
    vehicle_speed_max: float = 14.0
    pedestrian_speed_min: float = 1.0
    pedestrian_speed_max: float = 2.0
    vehicle_length: float = 4.5
    vehicle_width: float = 2.0
    pedestrian_size: float = 0.5
    n_vehicles: int = 80
    n_pedestrians: int = 120
    p_straight: float = 0.5
    pedestrian_p_turn: float = 0.3
    mpr: float = 0.7
    comm_range: float = 150.0
    dt: float = 0.1


@dataclass
class ChannelParams:
    carrier_freq_ghz: float = 5.9
    los_a: float = 38.77
    los_b: float = 16.7
    los_c: float = 18.2
    nlos_a: float = 36.85
    nlos_b: float = 30.0
    nlos_c: float = 18.9
    shadow_sigma_los: float = 3.0
    shadow_sigma_nlosv: float = 3.0
    shadow_sigma_nlos: float = 4.0
    shadow_corr_dist: float = 10.0
    blockage_loss_mean: float = 10.0
    blockage_loss_sigma: float = 4.5
    rician_k_db: float = 9.0
    tx_power_dbm: float = 23.0
    noise_psd_dbm_hz: float = -174.0
    noise_figure_db: float = 9.0
    spectral_efficiency_cap: float = 6.0


@dataclass
class PerceptionParams:
    sense_range: float = 80.0
    eval_range: float = 80.0
    p_near: float = 0.95
    d_near: float = 20.0
    p_far: float = 0.5
    importance_ref: float = 30.0
    s_rfm: float = 8000.0
    tx_budget: float = 0.05


@dataclass
class PolicyParams:
    name: str = "cmass"
    beta: float = 2.0
    sigma: float = 0.1
    etc_epoch: int = 100
    stale_frames: int = 50
    credit: str = "split"
    coverage_roi: float = 160.0
    coverage_cell: float = 4.0


@dataclass
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    channel: ChannelParams = field(default_factory=ChannelParams)
    perception: PerceptionParams = field(default_factory=PerceptionParams)
    policy: PolicyParams = field(default_factory=PolicyParams)
    total_bandwidth: float = 600000.0
    n_select: int = 4
    frames: int = 2000
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        cfg = cls()
        _merge(cfg, data, "")
        validate(cfg)
        return cfg

    def with_overrides(self, overrides: dict) -> "ExperimentConfig":
        """Return a copy with dotted-key overrides (``{"policy.name": "mass"}``) applied."""
        cfg = copy.deepcopy(self)
        for key, value in overrides.items():
            set_dotted(cfg, key, value)
        validate(cfg)
        return cfg


def _coerce(key: str, current, value):
    if isinstance(current, bool):
        if isinstance(value, str):
            if value.lower() in ("1", "true", "yes"):
                return True
            if value.lower() in ("0", "false", "no"):
                return False
            raise ConfigError(key, f"expected boolean, got {value!r}")
        return bool(value)
    try:
        if isinstance(current, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if isinstance(current, float):
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected {type(current).__name__}, got {value!r}") from None
    if not isinstance(value, str):
        raise ConfigError(key, f"expected string, got {value!r}")
    return value


def _merge(obj, data: dict, prefix: str) -> None:
    if not isinstance(data, dict):
        raise ConfigError(prefix.rstrip(".") or "<root>", "expected a JSON object")
    known = {f.name: f for f in fields(obj)}
    for key, value in data.items():
        dotted = prefix + key
        if key not in known:
            raise ConfigError(dotted, "unknown key")
        current = getattr(obj, key)
        if is_dataclass(current):
            _merge(current, value, dotted + ".")
        else:
            setattr(obj, key, _coerce(dotted, current, value))


def set_dotted(cfg, key: str, value) -> None:
    parts = key.split(".")
    obj = cfg
    for i, part in enumerate(parts):
        if not is_dataclass(obj) or part not in {f.name for f in fields(obj)}:
            raise ConfigError(key, "unknown key")
        if i == len(parts) - 1:
            current = getattr(obj, part)
            if is_dataclass(current):
                raise ConfigError(key, "cannot assign a whole section")
            if isinstance(value, str) and not isinstance(current, str):
                try:
                    value = json.loads(value)
                except json.JSONDecodeError:
                    pass
            setattr(obj, part, _coerce(key, current, value))
        else:
            obj = getattr(obj, part)


def _require(cond: bool, key: str, message: str) -> None:
    if not cond:
        raise ConfigError(key, message)


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    s = cfg.scenario
    for name in ("block_size", "lane_width", "sidewalk_width", "stub_length",
                 "vehicle_length", "vehicle_width", "pedestrian_size", "comm_range", "dt"):
        _require(getattr(s, name) > 0, f"scenario.{name}", "must be > 0")
    _require(s.blocks_x >= 1, "scenario.blocks_x", "must be >= 1")
    _require(s.blocks_y >= 1, "scenario.blocks_y", "must be >= 1")
    _require(s.n_vehicles >= 1, "scenario.n_vehicles", "need at least the ego vehicle")
    _require(s.n_pedestrians >= 0, "scenario.n_pedestrians", "must be >= 0")
    _require(0 < s.vehicle_speed_min <= s.vehicle_speed_max, "scenario.vehicle_speed_min",
             "need 0 < min <= max")
    _require(0 < s.pedestrian_speed_min <= s.pedestrian_speed_max, "scenario.pedestrian_speed_min",
             "need 0 < min <= max")
    _require(0.0 <= s.mpr <= 1.0, "scenario.mpr", "must lie in [0, 1]")
    _require(0.0 <= s.p_straight <= 1.0, "scenario.p_straight", "must lie in [0, 1]")
    _require(0.0 <= s.pedestrian_p_turn <= 1.0, "scenario.pedestrian_p_turn", "must lie in [0, 1]")
    _require(s.vehicle_width < s.lane_width, "scenario.vehicle_width", "must fit in a lane")
    _require(s.pedestrian_size < s.sidewalk_width, "scenario.pedestrian_size", "must fit on a sidewalk")

    c = cfg.channel
    _require(c.carrier_freq_ghz > 0, "channel.carrier_freq_ghz", "must be > 0")
    for name in ("los_b", "nlos_b"):
        _require(getattr(c, name) > 0, f"channel.{name}", "path loss must grow with distance")
    for name in ("shadow_sigma_los", "shadow_sigma_nlosv", "shadow_sigma_nlos", "blockage_loss_sigma"):
        _require(getattr(c, name) >= 0, f"channel.{name}", "must be >= 0")
    _require(c.shadow_corr_dist > 0, "channel.shadow_corr_dist", "must be > 0")
    _require(c.spectral_efficiency_cap > 0, "channel.spectral_efficiency_cap", "must be > 0")

    p = cfg.perception
    for name in ("sense_range", "eval_range", "d_near", "importance_ref", "s_rfm", "tx_budget"):
        _require(getattr(p, name) > 0, f"perception.{name}", "must be > 0")
    _require(p.d_near < p.sense_range, "perception.d_near", "must be below sense_range")
    for name in ("p_near", "p_far"):
        _require(0.0 <= getattr(p, name) <= 1.0, f"perception.{name}", "must lie in [0, 1]")

    q = cfg.policy
    _require(q.name in POLICIES, "policy.name", f"must be one of {', '.join(POLICIES)}")
    _require(q.beta >= 0, "policy.beta", "must be >= 0")
    _require(q.sigma >= 0, "policy.sigma", "must be >= 0")
    _require(q.etc_epoch >= 1, "policy.etc_epoch", "must be >= 1")
    _require(q.stale_frames >= 1, "policy.stale_frames", "must be >= 1")
    _require(q.credit in ("split", "full"), "policy.credit", "must be 'split' or 'full'")
    _require(q.coverage_roi > 0, "policy.coverage_roi", "must be > 0")
    _require(q.coverage_cell > 0, "policy.coverage_cell", "must be > 0")

    _require(cfg.total_bandwidth > 0, "total_bandwidth", "must be > 0")
    _require(cfg.n_select >= 0, "n_select", "must be >= 0")
    _require(cfg.frames >= 1, "frames", "must be >= 1")
    _require(cfg.seed >= 0, "seed", "must be >= 0")
    return cfg


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Load a JSON config file; dotted ``overrides`` win over file values."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON in {path}: {exc}") from None
    cfg = ExperimentConfig()
    _merge(cfg, data, "")
    return cfg.with_overrides(overrides or {})
