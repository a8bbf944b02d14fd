"""Closed-form delay, energy, rate and threshold formulas for one VEC cell.

Everything here is a pure function of its arguments. Internal units are SI
(bits, Hz = cycles/s, seconds, Joules, m/s, W); durations the scheduler acts on
are whole TTIs.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

KMH_TO_MPS = 1.0 / 3.6

# Relative slack when snapping a TTI count that is an integer up to float noise.
_SNAP_RTOL = 1e-9


class TaskType(enum.Enum):
    """Application class of a task; CA, HPA, LPA are phi_1, phi_2, phi_3."""

    CA = 1
    HPA = 2
    LPA = 3


class Placement(enum.Enum):
    HOLD = "hold"
    VEC = "vec"
    LOCAL = "local"


class InfeasibleAction(ValueError):
    """A decision that cannot be executed (priced by the reward, never fatal)."""


class ZeroRate(InfeasibleAction):
    pass


class ZeroShare(InfeasibleAction):
    pass


@dataclass(frozen=True)
class Task:
    id: int
    task_type: TaskType
    size_bits: float
    density_cycles_per_bit: float
    output_ratio: float
    generated_at: int
    owner: int
    energy_density_j_per_cycle: float

    def __post_init__(self):
        if self.size_bits < 0 or self.density_cycles_per_bit <= 0:
            raise ValueError(f"task {self.id}: size and density must be positive")
        if not 0.0 < self.output_ratio <= 1.0:
            raise ValueError(f"task {self.id}: output_ratio must lie in (0, 1]")
        if self.energy_density_j_per_cycle <= 0:
            raise ValueError(f"task {self.id}: energy density must be positive")

    @property
    def cycles(self) -> float:
        return self.density_cycles_per_bit * self.size_bits


@dataclass(frozen=True)
class RadioConfig:
    uplink_bandwidth_hz: float = 100e6
    downlink_bandwidth_hz: float = 100e6
    n_uplink_channels: int = 5
    n_downlink_channels: int = 5
    tx_power_w: float = 0.5
    noise_power_w: float = 1e-13
    interference_w: float = 0.0
    pathloss_exponent: float = 3.0
    pathloss_ref_db: float = 47.0
    ref_distance_m: float = 1.0
    fading_enabled: bool = True

    def __post_init__(self):
        if self.n_uplink_channels < 0 or self.n_downlink_channels < 0:
            raise ValueError("channel counts must be non-negative")
        for name in ("uplink_bandwidth_hz", "downlink_bandwidth_hz", "tx_power_w", "noise_power_w"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.interference_w < 0:
            raise ValueError("interference_w must be non-negative")

    @property
    def uplink_channel_hz(self) -> float:
        return self.uplink_bandwidth_hz / self.n_uplink_channels

    @property
    def downlink_channel_hz(self) -> float:
        return self.downlink_bandwidth_hz / self.n_downlink_channels


@dataclass(frozen=True)
class ComputeConfig:
    vec_cpu_hz: float = 10e9
    vehicle_cpu_hz: tuple[float, ...] = (1.0e9, 1.2e9, 1.4e9, 1.6e9, 1.8e9)
    tti_seconds: float = 1e-3
    hold_wait_ttis: int = 20

    def __post_init__(self):
        if self.vec_cpu_hz <= 0 or self.tti_seconds <= 0:
            raise ValueError("VEC frequency and TTI length must be positive")
        if not self.vehicle_cpu_hz or min(self.vehicle_cpu_hz) <= 0:
            raise ValueError("vehicle CPU frequencies must be positive")
        if self.hold_wait_ttis < 1:
            raise ValueError("hold_wait_ttis must be at least one TTI")


@dataclass(frozen=True)
class ThresholdModel:
    thr1_s: float = 0.010
    thr2_s: float = 0.040
    thr3_s: float = 0.100
    v_max_mps: float = 80.0 * KMH_TO_MPS

    def __post_init__(self):
        if min(self.thr1_s, self.thr2_s, self.thr3_s) <= 0 or self.v_max_mps <= 0:
            raise ValueError("thresholds and v_max must be positive")

    @property
    def alpha_mps(self) -> float:
        # v_max sits at the 97.5th percentile of the one-tailed normal
        return self.v_max_mps / 1.96


def delay_threshold(task_type: TaskType, speed_mps: float, model: ThresholdModel) -> float:
    """Delay budget in seconds for a task of `task_type` on a vehicle at `speed_mps`.

    CA and LPA budgets are constant. The HPA budget follows a one-tailed normal
    curve in speed, normalised so that it equals ``thr2_s`` at ``v_max``.
    """
    if task_type is TaskType.CA:
        return model.thr1_s
    if task_type is TaskType.LPA:
        return model.thr3_s
    alpha = model.alpha_mps
    return model.thr2_s * math.exp(-(speed_mps**2 - model.v_max_mps**2) / (2.0 * alpha**2))


def channel_gain(distance_m: float, radio: RadioConfig, fading: float = 1.0) -> float:
    """Linear power gain from log-distance pathloss times a fading multiplier."""
    d = max(distance_m, radio.ref_distance_m)
    pl_db = radio.pathloss_ref_db + 10.0 * radio.pathloss_exponent * math.log10(d / radio.ref_distance_m)
    return 10.0 ** (-pl_db / 10.0) * fading


def channel_capacity(gain: float, cfg: RadioConfig, direction: str = "up", interference_w: float = 0.0) -> float:
    """Shannon rate (bit/s) of one channel of width B/N."""
    if gain < 0 or interference_w < 0:
        raise ValueError("gain and interference must be non-negative")
    if direction == "up":
        width = cfg.uplink_channel_hz
    elif direction == "down":
        width = cfg.downlink_channel_hz
    else:
        raise ValueError(f"direction must be 'up' or 'down', got {direction!r}")
    return width * math.log2(1.0 + cfg.tx_power_w * gain / (cfg.noise_power_w + interference_w))


def aggregate_rate(assignments: Sequence[int | bool], per_channel_rates: Sequence[float]) -> float:
    if len(assignments) != len(per_channel_rates):
        raise ValueError("assignment flags and rates must have the same length")
    return math.fsum(r for z, r in zip(assignments, per_channel_rates) if z)


def ceil_ttis(seconds: float, tti_seconds: float) -> int:
    """Round a duration up to whole TTIs, treating float-noise integers as exact."""
    x = seconds / tti_seconds
    n = round(x)
    if abs(x - n) <= _SNAP_RTOL * max(1.0, abs(x)):
        return int(n)
    return math.ceil(x)


def offload_time_terms_s(
    task: Task, uplink_bps: float, downlink_bps: float, cpu_share: float, vec_cpu_hz: float
) -> tuple[float, float, float]:
    """Un-rounded (upload, VEC compute, download) seconds for an offloaded task.

    The download term is exactly zero for HPA tasks.
    """
    if task.task_type is TaskType.CA:
        raise ValueError("CA tasks execute locally and cannot be offloaded")
    if uplink_bps <= 0:
        raise ZeroRate(f"task {task.id}: no uplink capacity")
    if cpu_share <= 0:
        raise ZeroShare(f"task {task.id}: zero VEC CPU share")
    upload = task.size_bits / uplink_bps
    compute = task.cycles / (cpu_share * vec_cpu_hz)
    download = 0.0
    if task.task_type is TaskType.LPA:
        if downlink_bps <= 0:
            raise ZeroRate(f"task {task.id}: no downlink capacity")
        download = task.output_ratio * task.size_bits / downlink_bps
    return upload, compute, download


def offload_delay_ttis(
    task: Task, uplink_bps: float, downlink_bps: float, cpu_share: float, cfg: ComputeConfig
) -> int:
    terms = offload_time_terms_s(task, uplink_bps, downlink_bps, cpu_share, cfg.vec_cpu_hz)
    upload, compute, download = terms
    total = ceil_ttis(upload, cfg.tti_seconds) + ceil_ttis(compute, cfg.tti_seconds)
    if task.task_type is TaskType.LPA:
        total += ceil_ttis(download, cfg.tti_seconds)
    return total


def local_delay_ttis(task: Task, vehicle_cpu_hz: float, cfg: ComputeConfig) -> int:
    if vehicle_cpu_hz <= 0:
        raise ValueError("vehicle CPU frequency must be positive")
    return ceil_ttis(task.cycles / vehicle_cpu_hz, cfg.tti_seconds)


def total_delay_ttis(
    task: Task,
    now: int,
    decision: Placement,
    *,
    hold_wait_ttis: int = 0,
    offload_ttis: int = 0,
    local_ttis: int = 0,
) -> int:
    """Delay from generation to completion: queueing age plus the chosen branch."""
    if now < task.generated_at:
        raise ValueError("decision time precedes task generation")
    age = now - task.generated_at
    if decision is Placement.HOLD:
        return age + hold_wait_ttis
    if decision is Placement.VEC:
        return age + offload_ttis
    return age + local_ttis


def offload_energy_j(task: Task, uplink_bps: float, downlink_bps: float, tx_power_w: float) -> float:
    """Transmission energy of an offloaded task, on un-rounded air time."""
    if task.task_type is TaskType.CA:
        raise ValueError("CA tasks execute locally and cannot be offloaded")
    if uplink_bps <= 0:
        raise ZeroRate(f"task {task.id}: no uplink capacity")
    airtime = task.size_bits / uplink_bps
    if task.task_type is TaskType.LPA:
        if downlink_bps <= 0:
            raise ZeroRate(f"task {task.id}: no downlink capacity")
        airtime += task.output_ratio * task.size_bits / downlink_bps
    return tx_power_w * airtime


def local_energy_j(task: Task, vehicle_cpu_hz: float) -> float:
    if vehicle_cpu_hz <= 0:
        raise ValueError("vehicle CPU frequency must be positive")
    return task.energy_density_j_per_cycle * task.cycles * vehicle_cpu_hz**2


def cell_energy_j(
    placements: Sequence[Placement],
    vec_energies: Sequence[float],
    local_energies: Sequence[float],
) -> float:
    """Energy drawn by all vehicles this step; held tasks draw nothing."""
    if not len(placements) == len(vec_energies) == len(local_energies):
        raise ValueError("one placement and one energy pair per vehicle")
    parts: Iterable[float] = (
        0.0 if p is Placement.HOLD else (er if p is Placement.VEC else el)
        for p, er, el in zip(placements, vec_energies, local_energies)
    )
    return math.fsum(parts)
