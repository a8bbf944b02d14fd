import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cells import CONFIG, HPA, LPA, hand_cell
from vecoffload.baselines import edg_plan, make_policy
from vecoffload.config import EnvConfig
from vecoffload.environment import Decision, Grant, assess
from vecoffload.oracle import (
    InstanceTooLarge,
    brute_force_optimum,
    dominance_check,
    exhaustive_optimum,
    minimal_share,
    small_config,
    small_instance,
)

SMALL = small_config(3, 2)


def small_cell(tasks, **kwargs):
    state = hand_cell(tasks, **kwargs)
    state.n_uplink = state.n_downlink = 2
    state.uplink_gain = tuple(g[:2] for g in state.uplink_gain)
    state.downlink_gain = tuple(g[:2] for g in state.downlink_gain)
    return state


def test_single_hpa_offloads_on_both_channels():
    # two 50 MHz channels at 100 Mb/s each: 2 ms of upload at 0.5 W against 0.1 J locally
    best = brute_force_optimum(small_cell([HPA]), SMALL)
    assert best.feasible
    assert best.decisions[0].uplink == (0, 1)
    assert best.energy_j == pytest.approx(0.001, rel=1e-12)


def test_minimal_share_is_tight():
    state = small_cell([HPA])
    s = minimal_share(state, 0, (0,), (), SMALL)
    # 40 TTIs budget, 4 of them upload: 8e6 cycles in 36 ms
    assert s == pytest.approx(8e6 / (10e9 * 0.036), rel=1e-9)
    assert assess(state, {0: Decision.offload(s, (0,))}, SMALL)[0].feasible
    assert not assess(state, {0: Decision.offload(s * 0.99, (0,))}, SMALL)[0].feasible


def test_channel_contention_forces_local():
    busy = Grant(vehicle=9, share=0.0, uplink=(0, 1), downlink=(), start=0, release_at=50)
    best = brute_force_optimum(small_cell([HPA, LPA], grants=[busy]), SMALL)
    assert all(d == Decision.local() for d in best.decisions.values())
    assert best.energy_j == pytest.approx(0.2, rel=1e-12)


def test_infeasible_cell():
    late = brute_force_optimum(small_cell([HPA], now=39, generated_at=0), SMALL)
    assert not late.feasible and late.energy_j == math.inf


def test_no_deciders():
    best = brute_force_optimum(small_cell([None]), SMALL)
    assert best.feasible and best.energy_j == 0.0


def test_too_large_rejected():
    with pytest.raises(InstanceTooLarge):
        brute_force_optimum(hand_cell([HPA]), CONFIG)
    with pytest.raises(InstanceTooLarge):
        brute_force_optimum(small_cell([HPA] * 4), SMALL)


@pytest.mark.parametrize("seed", range(12))
def test_matches_plain_enumeration(seed):
    state, cfg = small_instance(seed)
    fast = brute_force_optimum(state, cfg)
    slow = exhaustive_optimum(state, cfg)
    # the exact minimal share can only help
    assert fast.energy_j <= slow.energy_j * (1 + 1e-12) or not slow.feasible
    if slow.feasible:
        assert fast.feasible
    # with the exact shares as the grid, plain enumeration reaches the same optimum
    if fast.feasible:
        grid = sorted({0.0, *(d.share for d in fast.decisions.values())})
        again = exhaustive_optimum(state, cfg, grid)
        assert again.energy_j == pytest.approx(fast.energy_j, rel=1e-12)


def test_instances_have_deciders():
    assert all(small_instance(s)[0].deciders() for s in range(50))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.sampled_from(["AL", "AV", "RD", "EDG"]))
def test_no_baseline_beats_the_oracle(seed, name):
    state, cfg = small_instance(seed)
    best = brute_force_optimum(state, cfg)
    decisions = make_policy(name).decide(state, cfg, np.random.default_rng(seed))
    outcomes = assess(state, decisions, cfg)
    if all(o.feasible for o in outcomes.values()):
        assert best.feasible
        assert best.energy_j <= math.fsum(o.energy_j for o in outcomes.values()) * (1 + 1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_edg_is_exact_for_one_vehicle(seed):
    cfg = small_config(1, 1 + seed % 2)
    state, cfg = small_instance(seed, cfg)
    best = brute_force_optimum(state, cfg)
    outcomes = assess(state, edg_plan(state, cfg), cfg)
    if best.feasible:
        assert outcomes[0].feasible
        assert outcomes[0].energy_j == pytest.approx(best.energy_j, rel=1e-12)


def test_dominance_report():
    report = dominance_check(30)
    assert report.ok
    assert sum(report.compared.values()) > 0


def test_small_config():
    cfg = small_config(2, 1, EnvConfig(n_vehicles=9))
    assert cfg.n_vehicles == 2
    assert cfg.radio.n_uplink_channels == cfg.radio.n_downlink_channels == 1
