import copy
import json

import numpy as np
import pytest

from catalog import (CatalogError, PossibilityModeError, expand_services, load_catalog, parse_model,
                     possibility_at, possibility_vector, save_catalog, sigmoid_possibility, split)
from units import parse_quantity


VGG_FIT = (0.6957, -0.6047, 6.7718, 0.3371)
LENET_FIT = (0.9031, -1.6683, 4.9119, 0.0983)


def test_vgg19_matches_table(vgg19):
    assert vgg19.num_layers == 19
    assert vgg19.total_bytes == pytest.approx(546812.7 * 1024)
    assert vgg19.total_flops_per_item == pytest.approx(19628.31e6)
    assert vgg19.has_table


def test_full_edge_split(vgg19):
    acct = split(vgg19, 0)
    assert acct.w_dev == 0 and acct.d_dev == 0
    assert acct.feature_bytes == parse_quantity("588 KB", "bytes")
    assert acct.possibility == 1.0
    assert acct.w_edge == pytest.approx(vgg19.total_flops_per_item)


def test_full_local_split(vgg19):
    acct = split(vgg19, vgg19.num_layers)
    assert acct.w_edge == 0 and acct.d_edge == 0
    assert acct.feature_bytes == 0
    assert acct.possibility == 0.0


def test_split_after_conv1_1(vgg19):
    acct = split(vgg19, 1)
    assert acct.w_dev == pytest.approx(86.7e6)
    assert acct.d_dev == pytest.approx(7 * 1024)
    assert acct.feature_bytes == pytest.approx(12544 * 1024)
    assert acct.possibility == pytest.approx(1.0)
    assert possibility_at(vgg19, 6) == pytest.approx(0.6128)


def test_split_out_of_range(vgg19):
    with pytest.raises(IndexError):
        split(vgg19, 20)
    with pytest.raises(IndexError):
        split(vgg19, -1)


@pytest.mark.parametrize("fit,expected", [(VGG_FIT, 0.68495), (LENET_FIT, 0.54985)])
def test_sigmoid_midpoint(fit, expected):
    assert sigmoid_possibility(fit, fit[2]) == pytest.approx(expected, abs=1e-6)


def test_sigmoid_is_clamped():
    assert sigmoid_possibility((2.0, -1.0, 0.0, 0.0), -50.0) == 1.0
    assert sigmoid_possibility((2.0, -1.0, 0.0, 0.0), -50.0, clamp=False) > 1.0


def test_sigmoid_mode_endpoints(vgg_models):
    vgg16 = vgg_models["vgg16"]
    phi = possibility_vector(vgg16, "sigmoid")
    assert phi[0] == 1.0
    assert possibility_at(vgg16, vgg16.num_layers, "sigmoid") == pytest.approx(0.33971, abs=1e-5)
    assert phi[-1] == pytest.approx(sigmoid_possibility(VGG_FIT, vgg16.num_layers))
    assert np.all(np.diff(phi) <= 0)


@pytest.mark.parametrize("fit", [VGG_FIT, LENET_FIT])
def test_sigmoid_is_symmetric_about_midpoint(fit, rng):
    w1, _, w3, w4 = fit
    for delta in rng.uniform(0.0, 20.0, 50):
        pair = sigmoid_possibility(fit, w3 + delta, clamp=False) + sigmoid_possibility(fit, w3 - delta, clamp=False)
        assert pair == pytest.approx(w1 + 2 * w4, abs=1e-9)


def test_auto_mode_falls_back_to_sigmoid(vgg_models):
    vgg16 = vgg_models["vgg16"]
    assert possibility_at(vgg16, 3, "auto") == pytest.approx(sigmoid_possibility(VGG_FIT, 3))
    with pytest.raises(PossibilityModeError):
        possibility_vector(vgg16, "table")


def test_resnet_table_is_not_monotone(resnet18):
    phi = possibility_vector(resnet18)
    assert np.any(np.diff(phi) > 0)
    assert phi[-1] == 0.0


def _raw_vgg19(catalog_dir):
    doc = json.loads((catalog_dir / "vgg.json").read_text())
    return copy.deepcopy(doc["models"][0])


def test_possibility_above_one_names_model_and_layer(catalog_dir):
    raw = _raw_vgg19(catalog_dir)
    raw["layers"][4]["possibility"] = 1.5
    with pytest.raises(CatalogError, match=r"vgg19.*layer 5 \(Conv3_1\)"):
        parse_model(raw)


def test_monotone_flag_is_enforced(catalog_dir):
    raw = _raw_vgg19(catalog_dir)
    raw["layers"][10]["possibility"] = 0.9
    with pytest.raises(CatalogError, match="monotone"):
        parse_model(raw)


def test_missing_unit_names_row(catalog_dir):
    raw = _raw_vgg19(catalog_dir)
    raw["layers"][0]["flops"] = "86.7"
    with pytest.raises(CatalogError, match="Conv1_1"):
        parse_model(raw)


def test_declared_total_must_match(catalog_dir):
    raw = _raw_vgg19(catalog_dir)
    raw["total_size"] = "1000 KB"
    with pytest.raises(CatalogError, match="total_size"):
        parse_model(raw)


def test_partial_possibility_column_rejected(catalog_dir):
    raw = _raw_vgg19(catalog_dir)
    del raw["layers"][3]["possibility"]
    with pytest.raises(CatalogError, match="every layer or for none"):
        parse_model(raw)


def test_dump_and_reload_is_exact(vgg19, tmp_path):
    path = tmp_path / "out" / "vgg19.json"
    save_catalog(path, [vgg19])
    assert json.loads(path.read_text())["schema_version"] == 1
    reloaded = load_catalog(path)[0]
    assert np.array_equal(reloaded.cum_bytes, vgg19.cum_bytes)
    assert np.array_equal(reloaded.cum_flops, vgg19.cum_flops)
    assert np.array_equal(reloaded.table_possibility, vgg19.table_possibility)


def test_expand_services(resnet18):
    services = expand_services(resnet18, 3)
    assert [s.model_id for s in services] == ["resnet18-s0", "resnet18-s1", "resnet18-s2"]
    assert all(s.total_bytes == resnet18.total_bytes for s in services)
    with pytest.raises(CatalogError):
        expand_services(resnet18, 0)
