"""Heuristic comparison policies and a wrapper for trained actors.

Every policy plans jointly for the vehicles deciding in the current TTI,
because size-proportional shares and channel picks depend on who else
offloads. The per-vehicle ``*_decide`` functions return one entry of that
joint plan.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import numpy as np

from vecoffload.config import EnvConfig
from vecoffload.domain import InfeasibleAction, TaskType, local_delay_ttis, local_energy_j, offload_delay_ttis
from vecoffload.environment import (
    CellState,
    Decision,
    decode_action,
    link_rates,
    meets_deadline,
    observe,
    offload_energy_for,
    threshold_for,
)

POLICY_NAMES = ("AL", "AV", "RD", "EDG")


class Policy(Protocol):
    name: str

    def decide(self, state: CellState, config: EnvConfig, rng: np.random.Generator) -> dict[int, Decision]: ...


def _offloadable(state: CellState, k: int) -> bool:
    task = state.vehicles[k].task
    return task is not None and task.task_type is not TaskType.CA


def _by_size(state: CellState, ks: Sequence[int]) -> list[int]:
    """Descending task size, ties broken by vehicle index."""
    return sorted(ks, key=lambda k: (-state.vehicles[k].task.size_bits, k))


def proportional_shares(state: CellState, ks: Sequence[int]) -> dict[int, float]:
    """CPU shares proportional to task size, scaled to the residual VEC capacity."""
    total = math.fsum(state.vehicles[k].task.size_bits for k in ks)
    residual = state.vec_residual_cpu_fraction
    if total <= 0:
        return {k: residual / len(ks) for k in ks}
    return {k: residual * state.vehicles[k].task.size_bits / total for k in ks}


def size_proportional_plan(state: CellState, offloaders: Sequence[int]) -> dict[int, Decision]:
    """Resource sizing shared by AV and RD.

    Offloaders are served in descending size order, each taking the lowest
    indexed free uplink channel (plus a free downlink channel for LPA). A
    vehicle left without a channel, or facing a fully booked VEC CPU, holds.
    Shares are then split over the vehicles that actually offload.
    """
    free_up = [n for n, f in enumerate(state.uplink_free) if f]
    free_down = [n for n, f in enumerate(state.downlink_free) if f]
    plan: dict[int, Decision] = {}
    served: dict[int, tuple[tuple[int, ...], tuple[int, ...]]] = {}
    for k in _by_size(state, offloaders):
        needs_down = state.vehicles[k].task.task_type is TaskType.LPA
        if not free_up or (needs_down and not free_down) or state.vec_residual_cpu_fraction <= 0:
            plan[k] = Decision.wait()
            continue
        up = (free_up.pop(0),)
        down = (free_down.pop(0),) if needs_down else ()
        served[k] = (up, down)
    if served:
        shares = proportional_shares(state, list(served))
        for k, (up, down) in served.items():
            plan[k] = Decision.offload(shares[k], up, down)
    return plan


# --------------------------------------------------------------------------- AL / AV / RD


def al_plan(state: CellState) -> dict[int, Decision]:
    return {k: Decision.local() for k in state.deciders()}


def av_plan(state: CellState) -> dict[int, Decision]:
    deciders = state.deciders()
    plan = {k: Decision.local() for k in deciders if not _offloadable(state, k)}
    plan.update(size_proportional_plan(state, [k for k in deciders if _offloadable(state, k)]))
    return plan


def rd_plan(state: CellState, rng: np.random.Generator) -> dict[int, Decision]:
    """One fair coin per offloadable task, drawn in vehicle order."""
    plan, offloaders = {}, []
    for k in state.deciders():
        if _offloadable(state, k) and rng.random() < 0.5:
            offloaders.append(k)
        else:
            plan[k] = Decision.local()
    plan.update(size_proportional_plan(state, offloaders))
    return plan


def al_decide(state: CellState, k: int) -> Decision:
    return Decision.local()


def av_decide(state: CellState, k: int) -> Decision:
    return av_plan(state)[k]


def rd_decide(state: CellState, k: int, rng: np.random.Generator) -> Decision:
    return rd_plan(state, rng)[k]


# --------------------------------------------------------------------------- EDG


def _round_robin(state: CellState, ks: Sequence[int], gains, free: Sequence[bool]) -> dict[int, tuple[int, ...]]:
    """Deal free channels out one at a time, each vehicle taking its best remaining gain."""
    pool = [n for n, f in enumerate(free) if f]
    picks: dict[int, list[int]] = {k: [] for k in ks}
    while pool and ks:
        for k in ks:
            if not pool:
                break
            best = max(pool, key=lambda n: (gains[k][n], -n))
            pool.remove(best)
            picks[k].append(best)
    return {k: tuple(sorted(v)) for k, v in picks.items()}


def edg_candidates(state: CellState, config: EnvConfig) -> dict[int, Decision]:
    """The offload candidate EDG weighs against local execution, per offloadable decider."""
    ks = _by_size(state, [k for k in state.deciders() if _offloadable(state, k)])
    if not ks:
        return {}
    up = _round_robin(state, ks, state.uplink_gain, state.uplink_free)
    lpa = [k for k in ks if state.vehicles[k].task.task_type is TaskType.LPA]
    down = _round_robin(state, lpa, state.downlink_gain, state.downlink_free)
    shares = proportional_shares(state, ks)
    return {k: Decision.offload(shares[k], up[k], down.get(k, ())) for k in ks}


def edg_choose(state: CellState, k: int, candidate: Decision | None, config: EnvConfig) -> Decision:
    """Energy-first choice between local and ``candidate`` under the deadline filter."""
    v = state.vehicles[k]
    task = v.task
    age = state.now - task.generated_at
    thr = threshold_for(v, config)
    tti = config.compute.tti_seconds
    options = [(age + local_delay_ttis(task, v.cpu_hz, config.compute), local_energy_j(task, v.cpu_hz), 1, Decision.local())]
    if candidate is not None:
        up, down = link_rates(state, k, candidate, config)
        try:
            delay = age + offload_delay_ttis(task, up, down, candidate.share, config.compute)
            energy = offload_energy_for(task, up, down, config)
        except InfeasibleAction:
            pass
        else:
            options.append((delay, energy, 0, candidate))
    on_time = [o for o in options if meets_deadline(o[0], thr, tti)]
    if on_time:
        return min(on_time, key=lambda o: (o[1], o[2]))[3]
    return min(options, key=lambda o: (o[0], o[1], o[2]))[3]


def edg_plan(state: CellState, config: EnvConfig) -> dict[int, Decision]:
    candidates = edg_candidates(state, config)
    return {k: edg_choose(state, k, candidates.get(k), config) for k in state.deciders()}


def edg_decide(state: CellState, k: int, config: EnvConfig) -> Decision:
    return edg_plan(state, config)[k]


# --------------------------------------------------------------------------- policy objects


class AllLocal:
    name = "AL"

    def decide(self, state, config, rng):
        return al_plan(state)


class AllVec:
    name = "AV"

    def decide(self, state, config, rng):
        return av_plan(state)


class RandomOffload:
    name = "RD"

    def decide(self, state, config, rng):
        return rd_plan(state, rng)


class EnergyDelayGreedy:
    name = "EDG"

    def decide(self, state, config, rng):
        return edg_plan(state, config)


class Learned:
    """Deterministic actor outputs of a trained checkpoint, decoded per decider."""

    name = "LEARNED"

    def __init__(self, agent, source: str = ""):
        self.agent = agent
        self.source = source

    @classmethod
    def from_checkpoint(cls, path: str | Path) -> "Learned":
        from vecoffload.learner import MADDPG

        return cls(MADDPG.load(path), str(path))

    def decide(self, state: CellState, config: EnvConfig, rng) -> dict[int, Decision]:
        obs = observe(state, config)
        raw = self.agent.act(obs)
        return {
            k: decode_action(raw[k], state.vehicles[k].task.task_type, state.n_uplink, state.n_downlink)
            for k in state.deciders()
        }


def make_policy(name: str, checkpoint: str | Path | None = None) -> Policy:
    key = name.upper()
    table: Mapping[str, type] = {"AL": AllLocal, "AV": AllVec, "RD": RandomOffload, "EDG": EnergyDelayGreedy}
    if key in table:
        return table[key]()
    if key == "LEARNED":
        if checkpoint is None:
            raise ValueError("the learned policy needs a checkpoint")
        return Learned.from_checkpoint(checkpoint)
    raise ValueError(f"unknown policy {name!r}; expected one of {POLICY_NAMES + ('LEARNED',)}")
