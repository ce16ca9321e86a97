import copy

import numpy as np
import pytest

from scenario import (RequestModel, ScenarioError, build_scenario, describe, popularity_vector, scenario_hash,
                      validate_scenario, with_overrides)


def test_desk_defaults(desk_scenario):
    assert len(desk_scenario.devices) == 20
    assert len(desk_scenario.servers) == 4
    assert len(desk_scenario.services) == 9
    assert desk_scenario.service_ids[:3] == ("vgg19-s0", "vgg19-s1", "vgg19-s2")
    assert np.all((desk_scenario.budgets >= 8.0) & (desk_scenario.budgets <= 14.0))
    for server in desk_scenario.servers:
        assert 0.5 * 1024 ** 3 <= server.storage_bytes <= 1.5 * 1024 ** 3
        assert 500e9 <= server.compute_flops <= 2000e9
    for md in desk_scenario.devices:
        assert 100.0 <= md.distance_m <= 200.0


def test_same_seed_same_scenario(small_source, scenario_dir):
    a = build_scenario(small_source, 7, scenario_dir)
    b = build_scenario(small_source, 7, scenario_dir)
    c = build_scenario(small_source, 8, scenario_dir)
    assert a == b
    assert a.servers != c.servers


def test_hash_ignores_key_order(small_source):
    reordered = dict(reversed(list(small_source.items())))
    assert scenario_hash(reordered) == scenario_hash(small_source)
    assert scenario_hash(with_overrides(small_source, "mds", 7)) != scenario_hash(small_source)


def test_growing_the_population_keeps_existing_entities(small_source, scenario_dir):
    base = build_scenario(small_source, 4, scenario_dir)
    grown = build_scenario(with_overrides(small_source, "mds", 9), 4, scenario_dir)
    assert grown.devices[:6] == base.devices


@pytest.mark.parametrize("axis,value,check", [
    ("mds", 9, lambda s: len(s.devices) == 9),
    ("servers", 3, lambda s: len(s.servers) == 3),
    ("services", 4, lambda s: len(s.services) == 8),
    ("storage", "1 GB", lambda s: all(e.storage_bytes == 1024 ** 3 for e in s.servers)),
    ("privacy-budget", 0.5, lambda s: np.allclose(s.budgets, 10.0)),
])
def test_overrides(small_source, scenario_dir, axis, value, check):
    assert check(build_scenario(with_overrides(small_source, axis, value), 0, scenario_dir))


def test_overrides_do_not_mutate_source(small_source):
    before = copy.deepcopy(small_source)
    with_overrides(small_source, "storage", "3 GB")
    assert small_source == before


def test_bad_overrides(small_source):
    with pytest.raises(ScenarioError):
        with_overrides(small_source, "privacy-budget", 1.5)
    with pytest.raises(ScenarioError):
        with_overrides(small_source, "storage", "3 parsecs")
    with pytest.raises(ScenarioError):
        with_overrides(small_source, "latency", 1)


def test_missing_unit_is_rejected(small_source, scenario_dir):
    source = copy.deepcopy(small_source)
    source["servers"]["storage"] = "2"
    with pytest.raises(ScenarioError, match="storage"):
        build_scenario(source, 0, scenario_dir)


def test_missing_sections(small_source, scenario_dir):
    source = copy.deepcopy(small_source)
    del source["devices"]
    with pytest.raises(ScenarioError, match="devices"):
        build_scenario(source, 0, scenario_dir)
    with pytest.raises(ScenarioError):
        build_scenario([], 0, scenario_dir)


def test_unknown_model_and_missing_catalog(small_source, scenario_dir):
    source = copy.deepcopy(small_source)
    source["catalog"]["models"] = ["alexnet"]
    with pytest.raises(ScenarioError, match="alexnet"):
        build_scenario(source, 0, scenario_dir)
    source = copy.deepcopy(small_source)
    source["catalog"]["files"] = ["../catalogs/nowhere.json"]
    with pytest.raises(ScenarioError, match="not found"):
        build_scenario(source, 0, scenario_dir)


def test_bad_request_section(small_source, scenario_dir):
    source = copy.deepcopy(small_source)
    source["requests"] = {"distribution": "poisson"}
    with pytest.raises(ScenarioError):
        build_scenario(source, 0, scenario_dir)
    source["requests"] = {"items": {"min": 30, "max": 10}}
    with pytest.raises(ScenarioError):
        build_scenario(source, 0, scenario_dir)


def test_zipf_zero_is_uniform():
    assert np.allclose(popularity_vector(RequestModel("zipf", 0.0), 5), popularity_vector(RequestModel(), 5))


def test_zipf_is_decreasing():
    p = popularity_vector(RequestModel("zipf", 1.2), 6)
    assert p.sum() == pytest.approx(1.0)
    assert np.all(np.diff(p) < 0)


def test_zero_storage_warns(small_source, scenario_dir):
    scenario = build_scenario(with_overrides(small_source, "storage", "0 B"), 0, scenario_dir)
    warnings = validate_scenario(scenario)
    assert len(warnings) == 2
    assert all("fallback" in w for w in warnings)


def test_zero_budget_warns(small_source, scenario_dir):
    scenario = build_scenario(with_overrides(small_source, "privacy-budget", 0.0), 0, scenario_dir)
    assert sum("privacy budget is 0" in w for w in validate_scenario(scenario)) == 6


def test_describe(small_scenario):
    info = describe(small_scenario)
    assert info["servers"] == 2 and info["devices"] == 6 and info["services"] == 4
    assert info["families"] == ["vgg19", "resnet18"]
    assert len(info["hash"]) == 12
