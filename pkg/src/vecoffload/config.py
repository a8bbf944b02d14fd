"""Environment configuration: defaults, validation, and the YAML file format.

Config files use the units a simulation table would (km/h, Mb, ms, GHz, MHz);
everything is converted to SI here and nowhere else.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from vecoffload.domain import KMH_TO_MPS, ComputeConfig, RadioConfig, TaskType, ThresholdModel


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TaskConfig:
    size_range_bits: tuple[float, float] = (0.2e6, 1.0e6)
    density_range: tuple[float, float] = (20.0, 50.0)
    output_ratio: float = 0.1
    energy_density_j_per_cycle: float = 1.25e-26
    # probabilities of CA, HPA, LPA
    mix: tuple[float, float, float] = (0.2, 0.4, 0.4)


@dataclass(frozen=True)
class RewardParams:
    l1: float = -0.4
    l2: float = -0.2
    l3: float = 0.5
    g1: float = 0.8
    g2: float = 0.5
    g3: float = 0.5
    g4: float = 0.5
    g5: float = 0.5
    energy_ref_j: float = 0.25
    literal_sign_mode: bool = False
    # keep a pending (held) task from out-earning a completed one
    cap_pending_slack: bool = True


@dataclass(frozen=True)
class EnvConfig:
    n_vehicles: int = 5
    queue_size: int = 10
    speed_range_mps: tuple[float, float] = (30.0 * KMH_TO_MPS, 80.0 * KMH_TO_MPS)
    segment_length_m: float = 500.0
    rsu_position_m: float = 250.0
    rsu_offset_m: float = 10.0
    steps_per_episode: int = 100
    energy_uses_rounded_times: bool = False
    radio: RadioConfig = field(default_factory=RadioConfig)
    compute: ComputeConfig = field(default_factory=ComputeConfig)
    thresholds: ThresholdModel = field(default_factory=ThresholdModel)
    tasks: TaskConfig = field(default_factory=TaskConfig)
    reward: RewardParams = field(default_factory=RewardParams)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.n_vehicles < 0:
            raise ConfigError("n_vehicles must be non-negative")
        if self.queue_size < 1:
            raise ConfigError("queue_size must be at least 1")
        lo, hi = self.speed_range_mps
        if not 0 <= lo <= hi:
            raise ConfigError(f"bad speed range {self.speed_range_mps}")
        if self.segment_length_m <= 0 or not 0 <= self.rsu_position_m <= self.segment_length_m:
            raise ConfigError("RSU must sit on a segment of positive length")
        if self.steps_per_episode < 1:
            raise ConfigError("steps_per_episode must be positive")
        t = self.tasks
        if not 0 < t.size_range_bits[0] <= t.size_range_bits[1]:
            raise ConfigError(f"bad task size range {t.size_range_bits}")
        if not 0 < t.density_range[0] <= t.density_range[1]:
            raise ConfigError(f"bad density range {t.density_range}")
        if len(t.mix) != 3 or min(t.mix) < 0 or abs(sum(t.mix) - 1.0) > 1e-9:
            raise ConfigError(f"task mix must be three probabilities summing to 1, got {t.mix}")
        offloadable = t.mix[1] + t.mix[2] > 0
        if offloadable and self.radio.n_uplink_channels == 0:
            raise ConfigError("offloadable tasks configured but no uplink channels")
        if t.mix[2] > 0 and self.radio.n_downlink_channels == 0:
            raise ConfigError("LPA tasks configured but no downlink channels")

    @property
    def offloadable_types(self) -> tuple[TaskType, ...]:
        return (TaskType.HPA, TaskType.LPA)

    def replace(self, **changes) -> "EnvConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# file key -> (section, field, converter)
_MB = 1e6
_GHZ = 1e9
_MHZ = 1e6
_MS = 1e-3

_REWARD_KEYS = {
    "l1": "l1", "l2": "l2", "l3": "l3",
    "gamma1": "g1", "gamma2": "g2", "gamma3": "g3", "gamma4": "g4", "gamma5": "g5",
    "energy_ref_j": "energy_ref_j",
    "literal_sign_mode": "literal_sign_mode",
    "cap_pending_slack": "cap_pending_slack",
}

ENV_KEYS = (
    "number_of_vehicles", "size_of_task_queue", "task_input_size_mb", "vehicle_speed_kmh",
    "max_road_speed_kmh", "rsu_coverage_m", "rsu_position_m", "rsu_offset_m",
    "rsu_bandwidth_mhz", "uplink_bandwidth_mhz", "downlink_bandwidth_mhz",
    "uplink_channels", "downlink_channels", "transmission_power_w", "noise_power_w",
    "interference_w", "pathloss_ref_db", "pathloss_exponent", "fading",
    "vec_capacity_ghz", "vehicle_capacity_ghz", "computation_density_cycles_per_bit",
    "hold_wait_ms", "delay_threshold_ms", "output_input_ratio", "energy_density_j_per_cycle",
    "task_mix", "tti_ms", "steps_per_episode", "energy_uses_rounded_times", "reward",
)


def _pair(value, name) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a [low, high] pair, got {value!r}") from None
    return lo, hi


def env_config_from_mapping(data: Mapping[str, Any] | None, base: EnvConfig | None = None) -> EnvConfig:
    """Build an EnvConfig from file-style keys, overriding ``base`` (defaults if None)."""
    data = dict(data or {})
    unknown = sorted(set(data) - set(ENV_KEYS))
    if unknown:
        raise ConfigError(f"unknown environment keys: {', '.join(unknown)}")
    base = base or EnvConfig()
    env: dict[str, Any] = {}
    radio: dict[str, Any] = {}
    compute: dict[str, Any] = {}
    thr: dict[str, Any] = {}
    tasks: dict[str, Any] = {}
    reward: dict[str, Any] = {}

    if "number_of_vehicles" in data:
        env["n_vehicles"] = int(data["number_of_vehicles"])
    if "size_of_task_queue" in data:
        env["queue_size"] = int(data["size_of_task_queue"])
    if "task_input_size_mb" in data:
        lo, hi = _pair(data["task_input_size_mb"], "task_input_size_mb")
        tasks["size_range_bits"] = (lo * _MB, hi * _MB)
    if "vehicle_speed_kmh" in data:
        lo, hi = _pair(data["vehicle_speed_kmh"], "vehicle_speed_kmh")
        env["speed_range_mps"] = (lo * KMH_TO_MPS, hi * KMH_TO_MPS)
    if "max_road_speed_kmh" in data:
        thr["v_max_mps"] = float(data["max_road_speed_kmh"]) * KMH_TO_MPS
    if "rsu_coverage_m" in data:
        env["segment_length_m"] = float(data["rsu_coverage_m"])
        env.setdefault("rsu_position_m", env["segment_length_m"] / 2.0)
    if "rsu_position_m" in data:
        env["rsu_position_m"] = float(data["rsu_position_m"])
    if "rsu_offset_m" in data:
        env["rsu_offset_m"] = float(data["rsu_offset_m"])
    if "rsu_bandwidth_mhz" in data:
        radio["uplink_bandwidth_hz"] = radio["downlink_bandwidth_hz"] = float(data["rsu_bandwidth_mhz"]) * _MHZ
    if "uplink_bandwidth_mhz" in data:
        radio["uplink_bandwidth_hz"] = float(data["uplink_bandwidth_mhz"]) * _MHZ
    if "downlink_bandwidth_mhz" in data:
        radio["downlink_bandwidth_hz"] = float(data["downlink_bandwidth_mhz"]) * _MHZ
    if "uplink_channels" in data:
        radio["n_uplink_channels"] = int(data["uplink_channels"])
    if "downlink_channels" in data:
        radio["n_downlink_channels"] = int(data["downlink_channels"])
    for key, fld in (
        ("transmission_power_w", "tx_power_w"),
        ("noise_power_w", "noise_power_w"),
        ("interference_w", "interference_w"),
        ("pathloss_ref_db", "pathloss_ref_db"),
        ("pathloss_exponent", "pathloss_exponent"),
    ):
        if key in data:
            radio[fld] = float(data[key])
    if "fading" in data:
        radio["fading_enabled"] = bool(data["fading"])
    if "vec_capacity_ghz" in data:
        compute["vec_cpu_hz"] = float(data["vec_capacity_ghz"]) * _GHZ
    if "vehicle_capacity_ghz" in data:
        compute["vehicle_cpu_hz"] = tuple(float(f) * _GHZ for f in data["vehicle_capacity_ghz"])
    if "computation_density_cycles_per_bit" in data:
        tasks["density_range"] = _pair(data["computation_density_cycles_per_bit"], "computation_density_cycles_per_bit")
    tti_s = float(data.get("tti_ms", base.compute.tti_seconds / _MS)) * _MS
    if "tti_ms" in data:
        compute["tti_seconds"] = tti_s
    if "hold_wait_ms" in data:
        ttis = float(data["hold_wait_ms"]) * _MS / tti_s
        if abs(ttis - round(ttis)) > 1e-9:
            raise ConfigError("hold_wait_ms must be a whole number of TTIs")
        compute["hold_wait_ttis"] = int(round(ttis))
    if "delay_threshold_ms" in data:
        values = [float(v) * _MS for v in data["delay_threshold_ms"]]
        if len(values) != 3:
            raise ConfigError("delay_threshold_ms needs three values (CA, HPA at v_max, LPA)")
        thr.update(thr1_s=values[0], thr2_s=values[1], thr3_s=values[2])
    if "output_input_ratio" in data:
        tasks["output_ratio"] = float(data["output_input_ratio"])
    if "energy_density_j_per_cycle" in data:
        tasks["energy_density_j_per_cycle"] = float(data["energy_density_j_per_cycle"])
    if "task_mix" in data:
        mix = data["task_mix"]
        try:
            tasks["mix"] = tuple(float(mix[name]) for name in ("CA", "HPA", "LPA"))
        except (KeyError, TypeError):
            raise ConfigError("task_mix must map CA, HPA and LPA to probabilities") from None
    if "steps_per_episode" in data:
        env["steps_per_episode"] = int(data["steps_per_episode"])
    if "energy_uses_rounded_times" in data:
        env["energy_uses_rounded_times"] = bool(data["energy_uses_rounded_times"])
    if "reward" in data:
        bad = sorted(set(data["reward"]) - set(_REWARD_KEYS))
        if bad:
            raise ConfigError(f"unknown reward keys: {', '.join(bad)}")
        for key, value in data["reward"].items():
            fld = _REWARD_KEYS[key]
            reward[fld] = value if isinstance(value, bool) else float(value)

    try:
        return dataclasses.replace(
            base,
            radio=dataclasses.replace(base.radio, **radio),
            compute=dataclasses.replace(base.compute, **compute),
            thresholds=dataclasses.replace(base.thresholds, **thr),
            tasks=dataclasses.replace(base.tasks, **tasks),
            reward=dataclasses.replace(base.reward, **reward),
            **env,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def env_config_to_mapping(cfg: EnvConfig) -> dict[str, Any]:
    """Inverse of :func:`env_config_from_mapping` (file units)."""
    r, c, t, th, rw = cfg.radio, cfg.compute, cfg.tasks, cfg.thresholds, cfg.reward
    inverse_reward = {v: k for k, v in _REWARD_KEYS.items()}
    return {
        "number_of_vehicles": cfg.n_vehicles,
        "size_of_task_queue": cfg.queue_size,
        "task_input_size_mb": [t.size_range_bits[0] / _MB, t.size_range_bits[1] / _MB],
        "vehicle_speed_kmh": [cfg.speed_range_mps[0] / KMH_TO_MPS, cfg.speed_range_mps[1] / KMH_TO_MPS],
        "max_road_speed_kmh": th.v_max_mps / KMH_TO_MPS,
        "rsu_coverage_m": cfg.segment_length_m,
        "rsu_position_m": cfg.rsu_position_m,
        "rsu_offset_m": cfg.rsu_offset_m,
        "uplink_bandwidth_mhz": r.uplink_bandwidth_hz / _MHZ,
        "downlink_bandwidth_mhz": r.downlink_bandwidth_hz / _MHZ,
        "uplink_channels": r.n_uplink_channels,
        "downlink_channels": r.n_downlink_channels,
        "transmission_power_w": r.tx_power_w,
        "noise_power_w": r.noise_power_w,
        "interference_w": r.interference_w,
        "pathloss_ref_db": r.pathloss_ref_db,
        "pathloss_exponent": r.pathloss_exponent,
        "fading": r.fading_enabled,
        "vec_capacity_ghz": c.vec_cpu_hz / _GHZ,
        "vehicle_capacity_ghz": [f / _GHZ for f in c.vehicle_cpu_hz],
        "computation_density_cycles_per_bit": list(t.density_range),
        "tti_ms": c.tti_seconds / _MS,
        "hold_wait_ms": c.hold_wait_ttis * c.tti_seconds / _MS,
        "delay_threshold_ms": [th.thr1_s / _MS, th.thr2_s / _MS, th.thr3_s / _MS],
        "output_input_ratio": t.output_ratio,
        "energy_density_j_per_cycle": t.energy_density_j_per_cycle,
        "task_mix": dict(zip(("CA", "HPA", "LPA"), t.mix)),
        "steps_per_episode": cfg.steps_per_episode,
        "energy_uses_rounded_times": cfg.energy_uses_rounded_times,
        "reward": {inverse_reward[f.name]: getattr(rw, f.name) for f in dataclasses.fields(rw)},
    }


def load_env_config(path: str | Path) -> EnvConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if "environment" in data:
        data = data["environment"]
    return env_config_from_mapping(data)
