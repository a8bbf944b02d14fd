"""Exhaustive minimum-energy joint decision on small cells.

Used as ground truth in tests. Held tasks have not completed and so never
satisfy the deadline constraint; every decider must run locally or on the
VEC server, on time, with disjoint free channels and CPU shares that fit in
the residual capacity.

Energy does not depend on the CPU share, only feasibility does. For each
(vehicle, channel subset) the search therefore keeps the smallest share that
meets the deadline, drawn from the share grid plus the exact minimal share.
This makes the optimum exact for continuous shares while still enumerating
every grid point.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from vecoffload.baselines import POLICY_NAMES, av_plan, make_policy
from vecoffload.config import EnvConfig
from vecoffload.domain import (
    InfeasibleAction,
    Placement,
    TaskType,
    ceil_ttis,
    offload_delay_ttis,
    total_delay_ttis,
)
from vecoffload.environment import (
    CellState,
    Decision,
    VecEnv,
    assess,
    check_constraints,
    link_rates,
    meets_deadline,
    threshold_for,
)

DEFAULT_SHARE_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)
MAX_VEHICLES = 3
MAX_CHANNELS = 2
_SHARE_TOL = 1e-9


class InstanceTooLarge(ValueError):
    pass


@dataclass
class OracleResult:
    decisions: dict[int, Decision]
    energy_j: float
    feasible: bool
    candidates: int = 0
    per_vehicle_energy: dict[int, float] = field(default_factory=dict)


@dataclass(frozen=True)
class _Option:
    decision: Decision
    energy: float


def _subsets(items: Sequence[int]) -> list[tuple[int, ...]]:
    return [c for r in range(1, len(items) + 1) for c in itertools.combinations(items, r)]


def _single(state: CellState, k: int, d: Decision, config: EnvConfig):
    return assess(state, {k: d}, config)[k]


def _offload_delay(state: CellState, k: int, share: float, uplink, downlink, config: EnvConfig) -> int | None:
    task = state.vehicles[k].task
    up, down = link_rates(state, k, Decision.offload(share, uplink, downlink), config)
    try:
        tr = offload_delay_ttis(task, up, down, share, config.compute)
    except InfeasibleAction:
        return None
    return total_delay_ttis(task, state.now, Placement.VEC, offload_ttis=tr)


def minimal_share(state: CellState, k: int, uplink, downlink, config: EnvConfig) -> float | None:
    """Smallest CPU share meeting the deadline on these channels, or None if none does.

    Only the deadline is considered here; whether the share fits in the
    residual capacity is left to the caller.
    """
    v = state.vehicles[k]
    thr, tti = threshold_for(v, config), config.compute.tti_seconds
    full = _offload_delay(state, k, 1.0, uplink, downlink, config)
    if full is None or not meets_deadline(full, thr, tti):
        return None
    limit = math.floor(thr / tti * (1.0 + 1e-12) + 1e-9)
    compute_at_full = ceil_ttis(v.task.cycles / config.compute.vec_cpu_hz, tti)
    budget = limit - (full - compute_at_full)
    share = v.task.cycles / (config.compute.vec_cpu_hz * budget * tti)
    for s in (share, share * (1.0 + 1e-12), share * (1.0 + 1e-9)):
        if s <= 1.0:
            d = _offload_delay(state, k, s, uplink, downlink, config)
            if d is not None and meets_deadline(d, thr, tti):
                return s
    return 1.0


def vehicle_options(
    state: CellState, k: int, config: EnvConfig, share_grid: Sequence[float] = DEFAULT_SHARE_GRID
) -> list[_Option]:
    """Individually feasible decisions of vehicle ``k``: local, plus the cheapest-share offload per channel set."""
    v = state.vehicles[k]
    options = []
    local = _single(state, k, Decision.local(), config)
    if local.feasible:
        options.append(_Option(Decision.local(), local.energy_j))
    if v.task.task_type is TaskType.CA:
        return options
    free_up = [n for n, f in enumerate(state.uplink_free) if f]
    free_down = [n for n, f in enumerate(state.downlink_free) if f]
    downs = _subsets(free_down) if v.task.task_type is TaskType.LPA else [()]
    residual = state.vec_residual_cpu_fraction
    for up in _subsets(free_up):
        for down in downs:
            exact = minimal_share(state, k, up, down, config)
            if exact is None:
                continue
            shares = sorted({float(s) for s in share_grid if s > 0} | {exact})
            for s in shares:
                if s > residual + _SHARE_TOL:
                    break
                out = _single(state, k, Decision.offload(s, up, down), config)
                if out.feasible:
                    options.append(_Option(out.decision, out.energy_j))
                    break
    return options


def brute_force_optimum(
    state: CellState, config: EnvConfig, share_grid: Sequence[float] = DEFAULT_SHARE_GRID
) -> OracleResult:
    """Minimum cell energy over all joint decisions meeting (c1)-(c5)."""
    if len(state.vehicles) > MAX_VEHICLES or state.n_uplink > MAX_CHANNELS or state.n_downlink > MAX_CHANNELS:
        raise InstanceTooLarge(
            f"oracle supports at most {MAX_VEHICLES} vehicles and {MAX_CHANNELS}+{MAX_CHANNELS} channels"
        )
    deciders = state.deciders()
    if not deciders:
        return OracleResult({}, 0.0, True)
    per = {k: vehicle_options(state, k, config, share_grid) for k in deciders}
    residual = state.vec_residual_cpu_fraction
    best: list = [math.inf, None]
    seen = 0

    def dfs(i: int, chosen: list[_Option], energy: float, used_up: set, used_down: set, share: float):
        nonlocal seen
        if energy >= best[0]:
            return
        if i == len(deciders):
            seen += 1
            best[0], best[1] = energy, list(chosen)
            return
        for opt in per[deciders[i]]:
            d = opt.decision
            if used_up.intersection(d.uplink) or used_down.intersection(d.downlink):
                continue
            if share + d.share > residual + _SHARE_TOL:
                continue
            chosen.append(opt)
            dfs(i + 1, chosen, energy + opt.energy, used_up | set(d.uplink), used_down | set(d.downlink), share + d.share)
            chosen.pop()

    dfs(0, [], 0.0, set(), set(), 0.0)
    if best[1] is None:
        return OracleResult({}, math.inf, False, seen)
    decisions = {k: opt.decision for k, opt in zip(deciders, best[1])}
    outcomes = assess(state, decisions, config)
    report = check_constraints(state, decisions)
    if not report.c1_c4_satisfied or not all(o.feasible for o in outcomes.values()):
        raise AssertionError("oracle optimum failed joint verification")
    energies = {k: o.energy_j for k, o in outcomes.items()}
    return OracleResult(decisions, math.fsum(energies.values()), True, seen, energies)


def exhaustive_optimum(
    state: CellState, config: EnvConfig, share_grid: Sequence[float] = DEFAULT_SHARE_GRID
) -> OracleResult:
    """Plain enumeration over the grid only, verifying every joint decision. For cross-checks."""
    deciders = state.deciders()
    if not deciders:
        return OracleResult({}, 0.0, True)
    ups = _subsets(range(state.n_uplink))
    downs_all = _subsets(range(state.n_downlink))
    choices = []
    for k in deciders:
        kind = state.vehicles[k].task.task_type
        opts = [Decision.local()]
        if kind is not TaskType.CA:
            for up in ups:
                for down in downs_all if kind is TaskType.LPA else [()]:
                    opts.extend(Decision.offload(s, up, down) for s in share_grid if s > 0)
        choices.append(opts)
    best_e, best_d, seen = math.inf, None, 0
    for combo in itertools.product(*choices):
        seen += 1
        decisions = dict(zip(deciders, combo))
        outcomes = assess(state, decisions, config)
        if not all(o.feasible for o in outcomes.values()):
            continue
        e = math.fsum(o.energy_j for o in outcomes.values())
        if e < best_e:
            best_e, best_d = e, decisions
    if best_d is None:
        return OracleResult({}, math.inf, False, seen)
    return OracleResult(best_d, best_e, True, seen)


def small_config(n_vehicles: int = 3, n_channels: int = 2, base: EnvConfig | None = None) -> EnvConfig:
    base = base or EnvConfig()
    radio = dataclasses.replace(base.radio, n_uplink_channels=n_channels, n_downlink_channels=n_channels)
    return base.replace(n_vehicles=n_vehicles, radio=radio)


def small_instance(seed: int, config: EnvConfig | None = None, max_warmup: int = 4) -> tuple[CellState, EnvConfig]:
    """A seeded small cell, advanced under AV so some resources are already granted.

    Stepping continues past the random warm-up until at least one vehicle decides.
    """
    rng = np.random.default_rng([seed, 7])
    if config is None:
        config = small_config(int(rng.integers(1, MAX_VEHICLES + 1)), int(rng.integers(1, MAX_CHANNELS + 1)))
    env = VecEnv(config)
    env.reset(seed=seed)
    for _ in range(int(rng.integers(0, max_warmup + 1))):
        env.step_decisions(av_plan(env.state))
    # keep going until someone has a decision to make
    for _ in range(10 * config.compute.hold_wait_ttis):
        if env.state.deciders():
            break
        env.step_decisions(av_plan(env.state))
    return env.state.copy(), config


@dataclass
class DominanceReport:
    instances: int
    compared: dict[str, int]
    violations: list[tuple[int, str, float, float]]
    edg_single: int = 0
    edg_single_mismatches: list[tuple[int, float, float]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations and not self.edg_single_mismatches


def dominance_check(
    instances: int = 200,
    first_seed: int = 0,
    share_grid: Sequence[float] = DEFAULT_SHARE_GRID,
    policies: Sequence[str] = POLICY_NAMES,
    rel_tol: float = 1e-12,
) -> DominanceReport:
    """Compare every baseline with the oracle on seeded small cells.

    A baseline whose joint decision is feasible must not use less energy than
    the optimum. On single-vehicle cells with a feasible optimum EDG must
    match it: the lone vehicle gets every free channel and the whole residual
    CPU, so weighing local against that offload is exact.
    """
    report = DominanceReport(instances, {name: 0 for name in policies}, [])
    for seed in range(first_seed, first_seed + instances):
        state, cfg = small_instance(seed)
        best = brute_force_optimum(state, cfg, share_grid)
        for name in policies:
            decisions = make_policy(name).decide(state, cfg, np.random.default_rng(seed))
            outcomes = assess(state, decisions, cfg)
            feasible = bool(decisions) and all(o.feasible for o in outcomes.values())
            energy = math.fsum(o.energy_j for o in outcomes.values()) if feasible else math.inf
            if name == "EDG" and len(state.vehicles) == 1 and best.feasible:
                report.edg_single += 1
                if not feasible or abs(energy - best.energy_j) > rel_tol * max(energy, best.energy_j):
                    report.edg_single_mismatches.append((seed, energy, best.energy_j))
            if not feasible:
                continue
            report.compared[name] += 1
            if not best.feasible or best.energy_j > energy * (1 + rel_tol):
                report.violations.append((seed, name, energy, best.energy_j))
    return report
