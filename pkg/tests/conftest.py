import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from catalog import load_catalog  # noqa: E402
from scenario import build_scenario, load_scenario, load_scenario_source  # noqa: E402
from topology import EdgeServer, MobileDevice  # noqa: E402


CATALOGS = ROOT / "catalogs"
SCENARIOS = ROOT / "scenarios"


@pytest.fixture(scope="session")
def catalog_dir():
    return CATALOGS


@pytest.fixture(scope="session")
def scenario_dir():
    return SCENARIOS


@pytest.fixture(scope="session")
def vgg_models():
    return {m.model_id: m for m in load_catalog(CATALOGS / "vgg.json")}


@pytest.fixture(scope="session")
def vgg19(vgg_models):
    return vgg_models["vgg19"]


@pytest.fixture(scope="session")
def resnet18():
    return {m.model_id: m for m in load_catalog(CATALOGS / "resnet.json")}["resnet18"]


@pytest.fixture(scope="session")
def lenet7():
    return load_catalog(CATALOGS / "lenet.json")[0]


@pytest.fixture
def server():
    return EdgeServer(server_id="es0", index=0, compute_flops=1e12, storage_bytes=2 * 1024 ** 3,
                      bandwidth_hz=100e6, tx_power_dbm=43.0, backhaul_bps=600e6)


@pytest.fixture
def device():
    return MobileDevice(md_id="md0", index=0, compute_flops=50e9, tx_power_dbm=23.0,
                        distance_m=150.0, privacy_budget=10.0)


@pytest.fixture(scope="session")
def small_source():
    return load_scenario_source(SCENARIOS / "small_test.json")


@pytest.fixture(scope="session")
def small_scenario(small_source):
    return build_scenario(small_source, seed=3, base_dir=SCENARIOS)


@pytest.fixture(scope="session")
def desk_scenario():
    return load_scenario(SCENARIOS / "default_desk.json", seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
