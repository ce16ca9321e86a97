from types import SimpleNamespace

import numpy as np
import pytest

from coalition import (CoalitionEvaluator, GameConfig, PartitionStructure, UtilitySettings, check_d_stable,
                       evaluate_partition, random_partition, run_game, try_exchange, try_switch)
from deploy_opt import GuardError
from partition_opt import build_slot_context
from privacy import PrivacyQueue
from scenario import build_scenario, with_overrides
from topology import slot_gains


def make_evaluator(scenario, slot=0, settings=None, use_cache=True, weight=0.5):
    n = len(scenario.devices)
    if settings is None:
        settings = UtilitySettings(theta=PrivacyQueue.initial(scenario.budgets).theta)
    rng = np.random.default_rng([scenario.seed, slot])
    gains = slot_gains(scenario.channel, scenario.devices, scenario.servers, slot)
    ctx = build_slot_context(scenario, gains, slot,
                             d_items=rng.integers(10, 31, size=n),
                             request_service=rng.integers(len(scenario.services), size=n),
                             weights=np.full(n, weight), alpha=1.0,
                             prev_deployment=tuple(frozenset() for _ in scenario.servers))
    return CoalitionEvaluator(ctx, scenario.server_ids, scenario.service_ids, settings, use_cache)


def accepted_welfare(result):
    return [step.welfare for step in result.trace if step.accepted]


def test_game_config_validation():
    with pytest.raises(ValueError):
        GameConfig(exchange_period=0)
    with pytest.raises(ValueError):
        GameConfig(max_iterations=0)
    cfg = GameConfig.from_config({"game": {"exchange_period": 4}}, seed=9)
    assert cfg.exchange_period == 4 and cfg.seed == 9 and cfg.max_iterations == 10_000


def test_partition_structure():
    p = PartitionStructure.from_assignment([1, 0, 1], 3)
    assert p.coalitions == (frozenset({1}), frozenset({0, 2}), frozenset())
    assert list(p.assignment()) == [1, 0, 1]
    assert p.server_of(2) == 1
    assert p.is_valid(3) == (True, "OK")
    ok, reason = PartitionStructure((frozenset({0}), frozenset({0, 1})), (0.0, 0.0)).is_valid(2)
    assert not ok and "more than one" in reason
    ok, reason = PartitionStructure((frozenset({0}), frozenset()), (0.0, 0.0)).is_valid(2)
    assert not ok and "not associated" in reason


def test_empty_coalition_is_worth_zero(small_scenario):
    evaluator = make_evaluator(small_scenario)
    result = evaluator.evaluate(0, frozenset())
    assert result.utility == 0.0 and result.deployment is None


def test_utility_is_averaged_and_pays_theta(small_scenario):
    evaluator = make_evaluator(small_scenario)
    theta = evaluator.settings.theta
    assert theta > 0
    result = evaluator.evaluate(1, frozenset({0, 2, 3}))
    assert result.utility == pytest.approx((-sum(result.objectives.values()) - theta) / 3)
    summed = make_evaluator(small_scenario, settings=UtilitySettings(average=False, include_theta=False))
    assert summed.evaluate(1, frozenset({0, 2, 3})).utility == pytest.approx(-sum(result.objectives.values()))


def test_cache_hits(small_scenario):
    evaluator = make_evaluator(small_scenario)
    first = evaluator.evaluate(0, frozenset({1, 2}))
    second = evaluator.evaluate(0, {2, 1})
    assert first is second
    assert evaluator.evaluations == 1 and evaluator.cache_hits == 1
    uncached = make_evaluator(small_scenario, use_cache=False)
    uncached.evaluate(0, frozenset({1, 2}))
    uncached.evaluate(0, frozenset({1, 2}))
    assert uncached.evaluations == 2 and uncached.cache_hits == 0


def test_switch_and_exchange_only_accept_improvements(small_scenario):
    evaluator = make_evaluator(small_scenario)
    p = evaluate_partition(PartitionStructure.from_assignment([0, 0, 0, 1, 1, 1], 2), evaluator)
    accepted, moved = try_switch(p, 0, 0, 1, evaluator)
    assert moved.welfare > p.welfare if accepted else moved is p
    accepted, swapped = try_exchange(p, 0, 3, evaluator)
    assert swapped.welfare > p.welfare if accepted else swapped is p
    with pytest.raises(ValueError):
        try_switch(p, 0, 1, 0, evaluator)
    with pytest.raises(ValueError):
        try_exchange(p, 0, 1, evaluator)


def test_run_game_converges_and_is_stable(small_scenario):
    evaluator = make_evaluator(small_scenario)
    rng = np.random.default_rng(5)
    initial = random_partition(len(small_scenario.devices), len(small_scenario.servers), rng)
    result = run_game(initial, GameConfig(exchange_period=3), evaluator, rng)
    assert not result.capped
    assert result.partition.is_valid(len(small_scenario.devices))[0]
    welfare = accepted_welfare(result)
    assert all(b > a for a, b in zip(welfare, welfare[1:]))
    assert result.partition.welfare >= evaluate_partition(initial, evaluator).welfare
    assert check_d_stable(result.partition, evaluator).stable


def test_cap_is_reported(small_scenario):
    evaluator = make_evaluator(small_scenario)
    initial = random_partition(len(small_scenario.devices), 2, np.random.default_rng(0))
    result = run_game(initial, GameConfig(max_iterations=3), evaluator, np.random.default_rng(0))
    assert result.capped
    assert result.iterations == 3
    assert len(result.trace) == 3


def test_single_server_needs_no_moves(small_source, scenario_dir):
    scenario = build_scenario(with_overrides(small_source, "servers", 1), 0, scenario_dir)
    evaluator = make_evaluator(scenario)
    initial = PartitionStructure.from_assignment([0] * len(scenario.devices), 1)
    result = run_game(initial, GameConfig(), evaluator, np.random.default_rng(0))
    assert result.iterations == 0 and not result.capped


def test_game_is_deterministic(small_scenario):
    runs = []
    for _ in range(2):
        evaluator = make_evaluator(small_scenario)
        rng = np.random.default_rng(17)
        initial = random_partition(len(small_scenario.devices), 2, rng)
        runs.append(run_game(initial, GameConfig(), evaluator, rng))
    assert runs[0].trace == runs[1].trace
    assert runs[0].partition == runs[1].partition


def test_stability_check_guard(small_source, scenario_dir):
    scenario = build_scenario(with_overrides(small_source, "mds", 13), 0, scenario_dir)
    evaluator = make_evaluator(scenario)
    with pytest.raises(GuardError):
        check_d_stable(PartitionStructure.from_assignment([0] * 13, 2), evaluator)


def test_random_instances_converge_to_stable_partitions(small_source, scenario_dir):
    rng = np.random.default_rng(31)
    for k in range(30):
        source = with_overrides(small_source, "mds", int(rng.integers(2, 13)))
        source = with_overrides(source, "servers", int(rng.integers(2, 4)))
        scenario = build_scenario(source, k, scenario_dir)
        evaluator = make_evaluator(scenario, slot=k)
        initial = random_partition(len(scenario.devices), len(scenario.servers), rng)
        result = run_game(initial, GameConfig(exchange_period=int(rng.integers(1, 6))), evaluator, rng)
        assert not result.capped
        welfare = accepted_welfare(result)
        assert all(b > a for a, b in zip(welfare, welfare[1:]))
        assert check_d_stable(result.partition, evaluator).stable


class AffinityEvaluator:
    """Each MD earns 5 on its preferred server; coalitions of any size but 0 or 2 pay 100"""

    def __init__(self, preferred):
        self.preferred = preferred

    def evaluate(self, server, members):
        members = frozenset(members)
        value = sum(5.0 for md in members if self.preferred[md] == server)
        if len(members) not in (0, 2):
            value -= 100.0
        return SimpleNamespace(utility=value)


def test_exchange_escapes_switch_local_optimum():
    evaluator = AffinityEvaluator(preferred=[1, 1, 0, 0])
    stuck = evaluate_partition(PartitionStructure.from_assignment([0, 0, 1, 1], 2), evaluator)
    assert stuck.welfare == 0.0
    report = check_d_stable(stuck, evaluator)
    assert not report.stable
    assert {move for move, *_ in report.improving} == {"exchange"}
    result = run_game(stuck, GameConfig(exchange_period=1), evaluator, np.random.default_rng(0))
    assert result.partition.coalitions == (frozenset({2, 3}), frozenset({0, 1}))
    assert result.partition.welfare == 20.0
    assert check_d_stable(result.partition, evaluator).stable


def test_perturbed_stable_partition_has_improving_move(small_scenario):
    evaluator = make_evaluator(small_scenario)
    rng = np.random.default_rng(5)
    n_devices, n_servers = len(small_scenario.devices), len(small_scenario.servers)
    initial = random_partition(n_devices, n_servers, rng)
    stable = run_game(initial, GameConfig(exchange_period=3), evaluator, rng).partition
    perturbed = 0
    for md in range(n_devices):
        source = stable.server_of(md)
        for target in range(n_servers):
            if target == source:
                continue
            assignment = stable.assignment()
            assignment[md] = target
            moved = evaluate_partition(PartitionStructure.from_assignment(assignment, n_servers), evaluator)
            if moved.welfare < stable.welfare - 1e-6:
                perturbed += 1
                report = check_d_stable(moved, evaluator)
                assert ("switch", md, source) in [entry[:3] for entry in report.improving]
    assert perturbed > 0


def test_accepted_moves_never_repeat_a_partition(small_scenario):
    evaluator = make_evaluator(small_scenario)
    rng = np.random.default_rng(11)
    initial = random_partition(len(small_scenario.devices), len(small_scenario.servers), rng)
    result = run_game(initial, GameConfig(exchange_period=2), evaluator, rng)
    assignment = list(initial.assignment())
    seen = {tuple(assignment)}
    for step in result.trace:
        if not step.accepted:
            continue
        if step.move == "switch":
            assignment[step.md] = step.other
        else:
            assignment[step.md], assignment[step.other] = assignment[step.other], assignment[step.md]
        assert tuple(assignment) not in seen
        seen.add(tuple(assignment))
    assert assignment == list(result.partition.assignment())


def test_welfare_does_not_depend_on_caching(small_scenario):
    runs = []
    for use_cache in (True, False):
        evaluator = make_evaluator(small_scenario, use_cache=use_cache)
        rng = np.random.default_rng(23)
        initial = random_partition(len(small_scenario.devices), len(small_scenario.servers), rng)
        runs.append(run_game(initial, GameConfig(exchange_period=3), evaluator, rng))
    cached, uncached = runs
    assert cached.partition.coalitions == uncached.partition.coalitions
    assert cached.partition.welfare == pytest.approx(uncached.partition.welfare, rel=1e-12)
    assert [s.accepted for s in cached.trace] == [s.accepted for s in uncached.trace]
    fresh = evaluate_partition(cached.partition, make_evaluator(small_scenario, use_cache=False))
    assert fresh.welfare == pytest.approx(cached.partition.welfare, rel=1e-12)
