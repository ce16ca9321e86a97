"""Long-running experiments at desk scale: pytest -m slow"""
import math

import numpy as np
import pytest
from scipy.stats import spearmanr

from catalog import load_catalog, sigmoid_possibility
from coalition import GameConfig, check_d_stable, random_partition, run_game
from deploy_opt import brute_force_deploy, greedy_deploy
from scenario import build_scenario, load_scenario, load_scenario_source, with_overrides
from simulator import run_horizon, run_sweep
from test_coalition import accepted_welfare, make_evaluator
from test_deploy_opt import random_table

pytestmark = pytest.mark.slow

SEEDS = list(range(20))


@pytest.fixture(scope="module")
def desk_source(scenario_dir):
    return load_scenario_source(scenario_dir / "default_desk.json")


def _trend(table, metric):
    runs = table[table["row"] == "run"]
    return spearmanr(runs["value"].astype(float), runs[metric])


@pytest.mark.parametrize("policy", ["fl", "fe"])
def test_baseline_anchors_on_every_seed(scenario_dir, policy):
    expected = 0.0 if policy == "fl" else 100.0
    for seed in range(5):
        scenario = load_scenario(scenario_dir / "default_desk.json", seed)
        result = run_horizon(scenario, policy, 10)
        assert result.summary["privacy_loss_pct"] == expected
        assert result.violations == []


def test_queue_stability(scenario_dir):
    slots = 100
    for seed in range(10):
        scenario = load_scenario(scenario_dir / "default_desk.json", seed)
        result = run_horizon(scenario, "proposed", slots, {"optimizer": {"alpha": 1.0}})
        s = result.summary
        budget = s["total_budget"]
        assert s["time_avg_excess"] <= s["final_xi"] / slots + 1e-9
        assert s["time_avg_excess"] <= 0.05 * budget
        assert s["final_xi"] / slots < 0.05 * budget
        assert result.violations == []
        print(f"seed {seed}: excess {s['time_avg_excess']:.3f} | Ξ(T)/T {s['final_xi'] / slots:.3f} | "
              f"loss {s['privacy_loss_pct']:.1f}%")


def test_greedy_ratio_distribution():
    rng = np.random.default_rng(7)
    ratios = []
    for _ in range(200):
        table = random_table(rng)
        exact = brute_force_deploy(table).value
        if exact > 0:
            ratios.append(greedy_deploy(table).value / exact)
    ratios = np.array(ratios)
    assert ratios.min() >= 1 - 1 / math.e
    print(f"greedy/optimal: min {ratios.min():.4f} | mean {ratios.mean():.4f} | "
          f"optimal in {np.mean(ratios > 1 - 1e-9):.1%}")


def test_game_on_random_instances(small_source, scenario_dir):
    rng = np.random.default_rng(2025)
    for k in range(100):
        source = with_overrides(small_source, "mds", int(rng.integers(2, 13)))
        source = with_overrides(source, "servers", int(rng.integers(1, 4)))
        scenario = build_scenario(source, 100 + k, scenario_dir)
        evaluator = make_evaluator(scenario, slot=k, weight=float(rng.uniform(0, 3)))
        initial = random_partition(len(scenario.devices), len(scenario.servers), rng)
        result = run_game(initial, GameConfig(exchange_period=int(rng.integers(1, 11))), evaluator, rng)
        assert not result.capped
        welfare = accepted_welfare(result)
        assert all(b > a for a, b in zip(welfare, welfare[1:]))
        assert check_d_stable(result.partition, evaluator).stable


def test_delay_grows_with_devices(desk_source, scenario_dir):
    table = run_sweep(desk_source, "mds", [10, 20, 30], ["proposed"], SEEDS, slots=5,
                      base_dir=scenario_dir, workers=4)
    rho, p = _trend(table, "avg_system_delay_s")
    assert rho > 0 and p < 0.05


def test_delay_falls_with_servers(desk_source, scenario_dir):
    table = run_sweep(desk_source, "servers", [2, 4, 6], ["proposed"], SEEDS, slots=5,
                      base_dir=scenario_dir, workers=4)
    rho, p = _trend(table, "avg_md_delay_s")
    assert rho < 0 and p < 0.05


def test_privacy_loss_grows_with_storage(desk_source, scenario_dir):
    table = run_sweep(desk_source, "storage", ["0.3 GB", "1 GB", "3 GB"], ["proposed"], SEEDS, slots=5,
                      base_dir=scenario_dir, workers=4)
    runs = table[table["row"] == "run"]
    gb = runs["value"].str.split().str[0].astype(float)
    rho, p = spearmanr(gb, runs["privacy_loss_pct"])
    assert rho > 0 and p < 0.05


def test_relaxing_the_budget(desk_source, scenario_dir):
    table = run_sweep(desk_source, "privacy-budget", [0.2, 0.5, 0.9], ["proposed"], SEEDS, slots=10,
                      base_dir=scenario_dir, workers=4)
    rho_delay, p_delay = _trend(table, "avg_system_delay_s")
    rho_loss, p_loss = _trend(table, "privacy_loss_pct")
    assert rho_delay < 0 and p_delay < 0.05
    assert rho_loss > 0 and p_loss < 0.05
    means = table[table["row"] == "mean"].set_index("value")
    print(means[["avg_system_delay_s", "privacy_loss_pct"]])


def test_alpha_trades_privacy_for_delay(desk_source, scenario_dir):
    table = run_sweep(desk_source, "alpha", [0.1, 1.0, 10.0], ["proposed"], SEEDS, slots=10,
                      base_dir=scenario_dir, workers=4)
    rho_delay, p_delay = _trend(table, "avg_system_delay_s")
    rho_loss, p_loss = _trend(table, "privacy_loss_pct")
    assert rho_delay < 0 and p_delay < 0.05
    assert rho_loss > 0 and p_loss < 0.05


def test_sigmoid_midpoints(catalog_dir):
    lenet = load_catalog(catalog_dir / "lenet.json")[0]
    vgg19 = {m.model_id: m for m in load_catalog(catalog_dir / "vgg.json")}["vgg19"]
    for model, expected in ((lenet, 0.54985), (vgg19, 0.68495)):
        w1, _, w3, w4 = model.sigmoid_fit
        assert w1 / 2 + w4 == pytest.approx(expected, abs=1e-6)
        assert sigmoid_possibility(model.sigmoid_fit, w3) == pytest.approx(expected, abs=1e-6)
