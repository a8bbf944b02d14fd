"""Single-cell VEC environment: mobility, task queues, constraints, reward, transitions.

One call to :meth:`VecEnv.step` is one TTI. Vehicles whose task is pending
decide; everyone else is busy (executing or holding) or idle (queue empty).
"""

from __future__ import annotations

import copy
import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from vecoffload.config import EnvConfig, RewardParams
from vecoffload.domain import (
    InfeasibleAction,
    Placement,
    Task,
    TaskType,
    aggregate_rate,
    ceil_ttis,
    channel_capacity,
    channel_gain,
    delay_threshold,
    local_delay_ttis,
    local_energy_j,
    offload_delay_ttis,
    offload_energy_j,
    offload_time_terms_s,
    total_delay_ttis,
)

METRICS_SCHEMA_VERSION = 1
METRICS_COLUMNS = (
    "schema_version", "episode", "tti", "vehicle", "task_type", "decision",
    "delay_ttis", "energy_j", "reward", "violated_constraints",
)

_SHARE_TOL = 1e-9


class Phase(Enum):
    IDLE = "idle"
    PENDING = "pending"
    HELD = "held"
    EXECUTING = "executing"


@dataclass
class VehicleState:
    index: int
    speed_mps: float
    position_m: float
    cpu_hz: float
    queue: list[Task] = field(default_factory=list)
    task: Task | None = None
    phase: Phase = Phase.IDLE
    busy_until: int = 0
    # current holdings, i.e. the s-tau / sb indicators of the observation
    placement: Placement | None = None
    share: float = 0.0
    uplink: tuple[int, ...] = ()
    downlink: tuple[int, ...] = ()


@dataclass(frozen=True)
class Grant:
    vehicle: int
    share: float
    uplink: tuple[int, ...]
    downlink: tuple[int, ...]
    start: int
    release_at: int


@dataclass
class CellState:
    now: int
    vehicles: list[VehicleState]
    grants: list[Grant]
    n_uplink: int
    n_downlink: int
    uplink_gain: tuple[tuple[float, ...], ...] = ()
    downlink_gain: tuple[tuple[float, ...], ...] = ()
    episode: int = 0

    @property
    def vec_residual_cpu_fraction(self) -> float:
        residual = 1.0 - math.fsum(g.share for g in self.grants)
        # shares that sum to one up to rounding leave nothing to hand out
        return residual if residual > _SHARE_TOL else 0.0

    def _holders(self, attr: str, n: int) -> list[int | None]:
        holders: list[int | None] = [None] * n
        for g in self.grants:
            for ch in getattr(g, attr):
                if holders[ch] is not None:
                    raise AssertionError(f"channel {ch} double-booked")
                holders[ch] = g.vehicle
        return holders

    def uplink_holders(self) -> list[int | None]:
        return self._holders("uplink", self.n_uplink)

    def downlink_holders(self) -> list[int | None]:
        return self._holders("downlink", self.n_downlink)

    @property
    def uplink_free(self) -> tuple[bool, ...]:
        return tuple(h is None for h in self.uplink_holders())

    @property
    def downlink_free(self) -> tuple[bool, ...]:
        return tuple(h is None for h in self.downlink_holders())

    def deciders(self) -> list[int]:
        return [v.index for v in self.vehicles if v.phase is Phase.PENDING]

    def copy(self) -> "CellState":
        return copy.deepcopy(self)


@dataclass(frozen=True)
class Decision:
    """Binary indicators plus resource requests for one vehicle.

    ``hold`` and ``vec`` mirror the hold / offload indicators; both set is a
    (c1) violation that the reward prices rather than forbids.
    """

    hold: bool = False
    vec: bool = False
    share: float = 0.0
    uplink: tuple[int, ...] = ()
    downlink: tuple[int, ...] = ()

    @classmethod
    def local(cls) -> "Decision":
        return cls()

    @classmethod
    def wait(cls) -> "Decision":
        return cls(hold=True)

    @classmethod
    def offload(cls, share: float, uplink: Sequence[int], downlink: Sequence[int] = ()) -> "Decision":
        return cls(vec=True, share=float(share), uplink=tuple(uplink), downlink=tuple(downlink))

    @property
    def placement(self) -> Placement | None:
        if self.hold and self.vec:
            return None
        if self.hold:
            return Placement.HOLD
        if self.vec:
            return Placement.VEC
        return Placement.LOCAL


def decode_action(raw: Sequence[float], task_type: TaskType | None, n_uplink: int, n_downlink: int) -> Decision:
    """Binarise a continuous actor output into a :class:`Decision`.

    Layout: ``[hold, vec, share, uplink_1..N_up, downlink_1..N_down]``, all in
    [0, 1]. Scores above 0.5 switch an indicator on. CA tasks are always local;
    HPA tasks drop downlink requests since they download nothing.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (3 + n_uplink + n_downlink,):
        raise ValueError(f"action has shape {raw.shape}, expected ({3 + n_uplink + n_downlink},)")
    if task_type is TaskType.CA:
        return Decision.local()
    hold = bool(raw[0] > 0.5)
    vec = bool(raw[1] > 0.5)
    share = float(min(1.0, max(0.0, raw[2])))
    up = tuple(int(i) for i in np.flatnonzero(raw[3 : 3 + n_uplink] > 0.5))
    down = tuple(int(i) for i in np.flatnonzero(raw[3 + n_uplink :] > 0.5))
    if task_type is TaskType.HPA:
        down = ()
    if not vec:
        return Decision(hold=hold)
    return Decision(hold=hold, vec=True, share=share, uplink=up, downlink=down)


# --------------------------------------------------------------------------- constraints


@dataclass
class VehicleViolations:
    c1: bool = False
    c2: bool = False
    c3: bool = False
    c4: bool = False
    # None until delays are known; a held or infeasible task never satisfies it
    c5: bool | None = None
    excess: dict[str, float] = field(default_factory=lambda: {"c1": 0.0, "c2": 0.0, "c3": 0.0, "c4": 0.0})

    @property
    def any_c1_c4(self) -> bool:
        return self.c1 or self.c2 or self.c3 or self.c4

    def names(self) -> tuple[str, ...]:
        out = [n for n in ("c1", "c2", "c3", "c4") if getattr(self, n)]
        if self.c5 is False:
            out.append("c5")
        return tuple(out)


@dataclass
class ConstraintReport:
    vehicles: dict[int, VehicleViolations]
    share_total: float
    uplink_load: list[int]
    downlink_load: list[int]

    @property
    def c1_c4_satisfied(self) -> bool:
        return not any(v.any_c1_c4 for v in self.vehicles.values())


def threshold_for(vehicle: VehicleState, config: EnvConfig) -> float:
    assert vehicle.task is not None
    return delay_threshold(vehicle.task.task_type, vehicle.speed_mps, config.thresholds)


def meets_deadline(delay_ttis: int, threshold_s: float, tti_seconds: float) -> bool:
    limit = threshold_s / tti_seconds
    return delay_ttis <= limit * (1.0 + 1e-12) + 1e-9


def check_constraints(
    state: CellState,
    decisions: Mapping[int, Decision],
    config: EnvConfig | None = None,
    delays: Mapping[int, int | None] | None = None,
) -> ConstraintReport:
    """Evaluate (c1)-(c4) for a joint decision, and (c5) when ``delays`` is given.

    Resource sums include what is already granted: a channel held by a busy
    vehicle counts once towards its load, and granted CPU shares count
    towards the (c2) total. Decisions that violate (c1) request nothing.
    """
    per = {k: VehicleViolations() for k in decisions}
    up_load = [0 if free else 1 for free in state.uplink_free]
    down_load = [0 if free else 1 for free in state.downlink_free]
    requesting = []
    share_total = 1.0 - state.vec_residual_cpu_fraction
    for k, d in decisions.items():
        if d.hold and d.vec:
            per[k].c1 = True
            per[k].excess["c1"] = 1.0
            continue
        if d.placement is not Placement.VEC:
            continue
        requesting.append(k)
        share_total += d.share
        for ch in d.uplink:
            up_load[ch] += 1
        for ch in d.downlink:
            down_load[ch] += 1

    for k in requesting:
        d = decisions[k]
        if share_total > 1.0 + _SHARE_TOL and d.share > 0:
            per[k].c2 = True
            per[k].excess["c2"] = share_total - 1.0
        over_up = [up_load[ch] - 1 for ch in d.uplink if up_load[ch] > 1]
        if over_up:
            per[k].c3 = True
            per[k].excess["c3"] = float(sum(over_up))
        over_down = [down_load[ch] - 1 for ch in d.downlink if down_load[ch] > 1]
        if over_down:
            per[k].c4 = True
            per[k].excess["c4"] = float(sum(over_down))

    if delays is not None:
        if config is None:
            raise ValueError("config is required to evaluate (c5)")
        for k, delay in delays.items():
            if k not in per:
                continue
            v = state.vehicles[k]
            per[k].c5 = delay is not None and meets_deadline(
                delay, threshold_for(v, config), config.compute.tti_seconds
            )
    return ConstraintReport(per, share_total, up_load, down_load)


# --------------------------------------------------------------------------- reward


def tiered_reward(
    violations: VehicleViolations,
    delay_s: float | None,
    threshold_s: float,
    energy_j: float,
    params: RewardParams,
    completed: bool = True,
) -> tuple[int, float]:
    """Return ``(tier, reward)`` for one vehicle.

    Tier 1 prices (c1)-(c4) violations, tier 2 a task that is pending, late or
    infeasible, tier 3 an on-time completion. ``delay_s`` is None when no delay
    could be computed (zero rate or share).
    """
    if violations.any_c1_c4:
        value = params.l1
        for name, gamma in (("c1", params.g1), ("c2", params.g2), ("c3", params.g3), ("c4", params.g4)):
            if getattr(violations, name):
                value += gamma * violations.excess[name] * -1.0
        return 1, value
    if not completed or not violations.c5:
        if delay_s is None:
            return 2, params.l2
        if params.literal_sign_mode:
            return 2, params.l2 + math.exp(delay_s - threshold_s)
        slack = (threshold_s - delay_s) / threshold_s
        if params.cap_pending_slack:
            slack = min(slack, 0.0)
        return 2, params.l2 + math.exp(slack)
    if params.literal_sign_mode:
        return 3, params.l3 + params.g5 * math.exp(energy_j)
    return 3, params.l3 + params.g5 * math.exp(-energy_j / params.energy_ref_j)


def reward(
    violations: VehicleViolations,
    delay_s: float | None,
    threshold_s: float,
    energy_j: float,
    params: RewardParams,
    completed: bool = True,
) -> float:
    return tiered_reward(violations, delay_s, threshold_s, energy_j, params, completed)[1]


# --------------------------------------------------------------------------- assessment


@dataclass(frozen=True)
class Outcome:
    vehicle: int
    task: Task
    decision: Decision
    violations: VehicleViolations
    threshold_s: float
    delay_ttis: int | None = None
    duration_ttis: int | None = None
    energy_j: float = 0.0
    tier: int = 1
    reward: float = 0.0
    committed: bool = False

    @property
    def completes(self) -> bool:
        """True when the task is executed (VEC or local), on time or late."""
        return self.committed and self.decision.placement in (Placement.VEC, Placement.LOCAL)

    @property
    def feasible(self) -> bool:
        """Executed and meets every constraint including the deadline."""
        return self.completes and not self.violations.any_c1_c4 and bool(self.violations.c5)


def link_rates(state: CellState, k: int, decision: Decision, config: EnvConfig) -> tuple[float, float]:
    radio = config.radio
    up_rates = [channel_capacity(g, radio, "up", radio.interference_w) for g in state.uplink_gain[k]]
    down_rates = [channel_capacity(g, radio, "down", radio.interference_w) for g in state.downlink_gain[k]]
    up_flags = [1 if n in decision.uplink else 0 for n in range(state.n_uplink)]
    down_flags = [1 if n in decision.downlink else 0 for n in range(state.n_downlink)]
    return aggregate_rate(up_flags, up_rates), aggregate_rate(down_flags, down_rates)


def offload_energy_for(task: Task, up: float, down: float, config: EnvConfig) -> float:
    if not config.energy_uses_rounded_times:
        return offload_energy_j(task, up, down, config.radio.tx_power_w)
    tti = config.compute.tti_seconds
    upload, _, download = offload_time_terms_s(task, up, down, 1.0, config.compute.vec_cpu_hz)
    airtime = ceil_ttis(upload, tti) * tti
    if task.task_type is TaskType.LPA:
        airtime += ceil_ttis(download, tti) * tti
    return config.radio.tx_power_w * airtime


def assess(state: CellState, decisions: Mapping[int, Decision], config: EnvConfig) -> dict[int, Outcome]:
    """Price a joint decision without mutating ``state``."""
    report = check_constraints(state, decisions)
    tti = config.compute.tti_seconds
    delays: dict[int, int | None] = {}
    pending: dict[int, tuple[int | None, int | None, float, bool]] = {}
    for k, d in decisions.items():
        v = state.vehicles[k]
        task = v.task
        if task is None:
            raise ValueError(f"vehicle {k} has no task to decide on")
        if report.vehicles[k].any_c1_c4:
            continue
        place = d.placement
        if place is Placement.HOLD:
            hold = config.compute.hold_wait_ttis
            # (c5) stays pending: a held task has not completed
            pending[k] = (total_delay_ttis(task, state.now, place, hold_wait_ttis=hold), hold, 0.0, True)
        elif place is Placement.LOCAL:
            tl = local_delay_ttis(task, v.cpu_hz, config.compute)
            dd = total_delay_ttis(task, state.now, place, local_ttis=tl)
            delays[k] = dd
            pending[k] = (dd, tl, local_energy_j(task, v.cpu_hz), True)
        else:
            up, down = link_rates(state, k, d, config)
            try:
                tr = offload_delay_ttis(task, up, down, d.share, config.compute)
                energy = offload_energy_for(task, up, down, config)
            except InfeasibleAction:
                delays[k] = None
                pending[k] = (None, None, 0.0, False)
                continue
            dd = total_delay_ttis(task, state.now, place, offload_ttis=tr)
            delays[k] = dd
            pending[k] = (dd, tr, energy, True)

    full = check_constraints(state, decisions, config, delays)
    outcomes = {}
    for k, d in decisions.items():
        v = state.vehicles[k]
        viol = full.vehicles[k]
        thr = threshold_for(v, config)
        if viol.any_c1_c4:
            tier, value = tiered_reward(viol, None, thr, 0.0, config.reward)
            outcomes[k] = Outcome(k, v.task, d, viol, thr, tier=tier, reward=value)
            continue
        delay, duration, energy, executable = pending[k]
        completed = executable and d.placement is not Placement.HOLD
        delay_s = None if delay is None else delay * tti
        tier, value = tiered_reward(viol, delay_s, thr, energy, config.reward, completed=completed)
        outcomes[k] = Outcome(
            k, v.task, d, viol, thr,
            delay_ttis=delay,
            duration_ttis=None if duration is None else max(1, duration),
            energy_j=energy if completed else 0.0,
            tier=tier,
            reward=value,
            committed=executable,
        )
    return outcomes


# --------------------------------------------------------------------------- environment


@dataclass(frozen=True)
class MetricRecord:
    episode: int
    tti: int
    vehicle: int
    task_type: str
    decision: str
    delay_ttis: int | None
    energy_j: float
    reward: float
    violated_constraints: str

    def to_row(self) -> list[str]:
        return [
            str(METRICS_SCHEMA_VERSION),
            str(self.episode),
            str(self.tti),
            str(self.vehicle),
            self.task_type,
            self.decision,
            "" if self.delay_ttis is None else str(self.delay_ttis),
            repr(float(self.energy_j)),
            repr(float(self.reward)),
            self.violated_constraints,
        ]


class StepResult(NamedTuple):
    state: CellState
    rewards: np.ndarray
    records: list[MetricRecord]
    outcomes: dict[int, Outcome]
    energy_j: float


class VecEnv:
    """Gym-style wrapper around :class:`CellState` for one RSU segment."""

    def __init__(self, config: EnvConfig):
        config.validate()
        self.config = config
        self.state: CellState | None = None
        self.rng: np.random.Generator | None = None
        self.ledger: list[Grant] = []
        self._episode = -1
        self._next_task_id = 0

    @property
    def n_agents(self) -> int:
        return self.config.n_vehicles

    @property
    def act_dim(self) -> int:
        r = self.config.radio
        return 3 + r.n_uplink_channels + r.n_downlink_channels

    @property
    def shared_obs_dim(self) -> int:
        """Width of the observation prefix that every agent sees identically."""
        r = self.config.radio
        return 3 * self.config.n_vehicles + 1 + r.n_uplink_channels + r.n_downlink_channels

    @property
    def obs_dim(self) -> int:
        return self.shared_obs_dim + OWN_OBS_DIM

    # -- lifecycle ---------------------------------------------------------

    def reset(self, seed: int | None = None, episode: int | None = None) -> CellState:
        cfg = self.config
        self.rng = np.random.default_rng(seed)
        self._episode = self._episode + 1 if episode is None else episode
        self._next_task_id = 0
        self.ledger = []
        lo, hi = cfg.speed_range_mps
        vehicles = []
        for k in range(cfg.n_vehicles):
            position = float(self.rng.uniform(0.0, cfg.segment_length_m))
            speed = float(self.rng.uniform(lo, hi))
            cpu = float(cfg.compute.vehicle_cpu_hz[self.rng.integers(len(cfg.compute.vehicle_cpu_hz))])
            queue = [self._draw_task(k) for _ in range(cfg.queue_size)]
            vehicles.append(VehicleState(k, speed, position, cpu, queue))
        self.state = CellState(
            now=0,
            vehicles=vehicles,
            grants=[],
            n_uplink=cfg.radio.n_uplink_channels,
            n_downlink=cfg.radio.n_downlink_channels,
            episode=self._episode,
        )
        for v in vehicles:
            self._pop_task(v, 0)
        self._sample_gains()
        return self.state

    def _draw_task(self, owner: int) -> Task:
        t = self.config.tasks
        kind = (TaskType.CA, TaskType.HPA, TaskType.LPA)[int(self.rng.choice(3, p=t.mix))]
        size = float(self.rng.uniform(*t.size_range_bits))
        density = float(self.rng.uniform(*t.density_range))
        task = Task(
            id=self._next_task_id,
            task_type=kind,
            size_bits=size,
            density_cycles_per_bit=density,
            output_ratio=t.output_ratio,
            generated_at=0,
            owner=owner,
            energy_density_j_per_cycle=t.energy_density_j_per_cycle,
        )
        self._next_task_id += 1
        return task

    @staticmethod
    def _pop_task(v: VehicleState, now: int) -> None:
        if v.queue:
            head = v.queue.pop(0)
            v.task = dataclasses.replace(head, generated_at=now)
            v.phase = Phase.PENDING
        else:
            v.task = None
            v.phase = Phase.IDLE

    def _distance(self, v: VehicleState) -> float:
        return math.hypot(v.position_m - self.config.rsu_position_m, self.config.rsu_offset_m)

    def _sample_gains(self) -> None:
        st, radio = self.state, self.config.radio
        k = len(st.vehicles)
        if radio.fading_enabled:
            fade_up = self.rng.exponential(1.0, size=(k, st.n_uplink))
            fade_down = self.rng.exponential(1.0, size=(k, st.n_downlink))
        else:
            fade_up = np.ones((k, st.n_uplink))
            fade_down = np.ones((k, st.n_downlink))
        up, down = [], []
        for i, v in enumerate(st.vehicles):
            base = channel_gain(self._distance(v), radio)
            up.append(tuple(base * float(f) for f in fade_up[i]))
            down.append(tuple(base * float(f) for f in fade_down[i]))
        st.uplink_gain = tuple(up)
        st.downlink_gain = tuple(down)

    # -- observation / action ---------------------------------------------

    def observe(self) -> np.ndarray:
        return observe(self.state, self.config)

    def decode(self, raw_actions: np.ndarray) -> dict[int, Decision]:
        raw_actions = np.asarray(raw_actions, dtype=float)
        if raw_actions.shape != (self.n_agents, self.act_dim):
            raise ValueError(f"joint action has shape {raw_actions.shape}, expected {(self.n_agents, self.act_dim)}")
        st = self.state
        return {
            k: decode_action(raw_actions[k], st.vehicles[k].task.task_type, st.n_uplink, st.n_downlink)
            for k in st.deciders()
        }

    # -- transition ----------------------------------------------------------

    def step(self, raw_actions: np.ndarray) -> StepResult:
        return self.step_decisions(self.decode(raw_actions))

    def step_decisions(self, decisions: Mapping[int, Decision]) -> StepResult:
        st = self.state
        if st is None:
            raise RuntimeError("reset() must be called before step()")
        deciders = st.deciders()
        missing = [k for k in deciders if k not in decisions]
        if missing:
            raise ValueError(f"no decision for deciding vehicles {missing}")
        joint = {}
        for k in deciders:
            d = decisions[k]
            if st.vehicles[k].task.task_type is TaskType.CA:
                d = Decision.local()
            joint[k] = d
        outcomes = assess(st, joint, self.config)

        rewards = np.zeros(len(st.vehicles))
        records = []
        energy = 0.0
        for k, out in outcomes.items():
            self._commit(st.vehicles[k], out)
            rewards[k] = out.reward
            energy += out.energy_j
            place = out.decision.placement
            label = place.value if (out.committed and place is not None) else "rejected"
            records.append(
                MetricRecord(
                    episode=st.episode,
                    tti=st.now,
                    vehicle=k,
                    task_type=out.task.task_type.name,
                    decision=label,
                    delay_ttis=out.delay_ttis if out.committed else None,
                    energy_j=out.energy_j,
                    reward=out.reward,
                    violated_constraints="|".join(out.violations.names()),
                )
            )
        self._advance()
        return StepResult(st, rewards, records, outcomes, energy)

    def _commit(self, v: VehicleState, out: Outcome) -> None:
        now = self.state.now
        if not out.committed:
            v.placement, v.share, v.uplink, v.downlink = None, 0.0, (), ()
            return
        d = out.decision
        v.busy_until = now + out.duration_ttis
        v.placement = d.placement
        if d.placement is Placement.HOLD:
            v.phase = Phase.HELD
            v.share, v.uplink, v.downlink = 0.0, (), ()
            return
        v.phase = Phase.EXECUTING
        if d.placement is Placement.VEC:
            g = Grant(v.index, d.share, tuple(d.uplink), tuple(d.downlink), now, v.busy_until)
            self.state.grants.append(g)
            self.ledger.append(g)
            v.share, v.uplink, v.downlink = d.share, g.uplink, g.downlink
        else:
            v.share, v.uplink, v.downlink = 0.0, (), ()

    def _advance(self) -> None:
        st, cfg = self.state, self.config
        st.now += 1
        tti = cfg.compute.tti_seconds
        for v in st.vehicles:
            v.position_m += v.speed_mps * tti
            if v.position_m > cfg.segment_length_m:
                v.position_m = 0.0
                v.speed_mps = float(self.rng.uniform(*cfg.speed_range_mps))
        st.grants = [g for g in st.grants if g.release_at > st.now]
        for v in st.vehicles:
            if v.phase in (Phase.EXECUTING, Phase.HELD) and v.busy_until <= st.now:
                if v.phase is Phase.EXECUTING:
                    self._pop_task(v, st.now)
                else:
                    v.phase = Phase.PENDING
                v.placement, v.share, v.uplink, v.downlink = None, 0.0, (), ()
        self._sample_gains()


# hold, vec, share, three class indicators, age, decide flag
OWN_OBS_DIM = 8


def observe(state: CellState, config: EnvConfig) -> np.ndarray:
    """Per-agent observation rows.

    Shared part (identical across agents, ``shared_obs_dim`` wide): speeds,
    positions and current task sizes of every vehicle, the VEC residual share
    and channel availability. Own part: hold / offload indicators and granted
    share, plus the own task's class, age and a flag telling whether the agent
    decides this TTI.
    """
    vmax = config.thresholds.v_max_mps
    cmax = config.tasks.size_range_bits[1]
    age_scale = config.thresholds.thr3_s / config.compute.tti_seconds
    speeds = [v.speed_mps / vmax for v in state.vehicles]
    positions = [v.position_m / config.segment_length_m for v in state.vehicles]
    sizes = [(v.task.size_bits / cmax) if v.task is not None else 0.0 for v in state.vehicles]
    up_free = [1.0 if f else 0.0 for f in state.uplink_free]
    down_free = [1.0 if f else 0.0 for f in state.downlink_free]
    shared = speeds + positions + sizes + [state.vec_residual_cpu_fraction] + up_free + down_free
    rows = []
    for v in state.vehicles:
        kind = [0.0, 0.0, 0.0]
        age = 0.0
        if v.task is not None:
            kind[v.task.task_type.value - 1] = 1.0
            age = (state.now - v.task.generated_at) / age_scale
        own = [
            1.0 if v.placement is Placement.HOLD else 0.0,
            1.0 if v.placement is Placement.VEC else 0.0,
            v.share,
        ]
        extra = kind + [age, 1.0 if v.phase is Phase.PENDING else 0.0]
        rows.append(shared + own + extra)
    return np.asarray(rows, dtype=float).reshape(len(state.vehicles), -1)
