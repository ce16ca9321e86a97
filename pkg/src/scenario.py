"""
Scenario - servers, devices, channel, service library and request model of a run

A scenario file either lists servers/devices explicitly or gives generator
ranges. Every generated entity draws from its own seeded stream, so growing the
MD or server count leaves the existing entities untouched.
"""
import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from catalog import ModelProfile, expand_services, load_catalog
from topology import ChannelModel, EdgeServer, MobileDevice, TopologyError
from units import UnitError, parse_quantity


SCENARIO_AXES = ('mds', 'servers', 'services', 'storage', 'privacy-budget')
REQUEST_DISTRIBUTIONS = ('uniform', 'zipf')

_SERVER_STREAM = 101
_DEVICE_STREAM = 102

# Evaluation-section defaults
SERVER_DEFAULTS = {
    'compute': {'min': '500 GFLOPS', 'max': '2000 GFLOPS'},
    'storage': {'min': '2 GB', 'max': '5 GB'},
    'bandwidth': '100 MHz',
    'tx_power': '43 dBm',
    'backhaul': {'min': '500 Mbps', 'max': '700 Mbps'},
}
DEVICE_DEFAULTS = {
    'compute': {'min': '10 GFLOPS', 'max': '100 GFLOPS'},
    'tx_power': '23 dBm',
    'distance': {'min': '100 m', 'max': '200 m'},
    'budget_fraction': {'min': 0.4, 'max': 0.7},
}
CHANNEL_DEFAULTS = {
    'path_loss_exponent': 3.5,
    'shadowing_sigma': '8 dB',
    'noise_psd': '-174 dBm/Hz',
}

_DIMENSIONS = {
    'compute': 'flops_rate',
    'storage': 'bytes',
    'bandwidth': 'hz',
    'tx_power': 'dbm',
    'backhaul': 'bps',
    'distance': 'meters',
}


class ScenarioError(ValueError):
    """Invalid scenario description (names the offending field)"""


@dataclass(frozen=True)
class RequestModel:
    distribution: str = 'uniform'
    zipf_s: float = 0.0
    d_min: int = 10
    d_max: int = 30


@dataclass(frozen=True)
class Scenario:
    name: str
    servers: Tuple[EdgeServer, ...]
    devices: Tuple[MobileDevice, ...]
    channel: ChannelModel
    families: Tuple[ModelProfile, ...]
    services: Tuple[ModelProfile, ...]
    service_family: Tuple[int, ...]
    requests: RequestModel
    popularity: np.ndarray = field(repr=False, compare=False)
    scenario_hash: str = ''
    seed: int = 0
    source: Dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def server_ids(self) -> Tuple[str, ...]:
        return tuple(s.server_id for s in self.servers)

    @property
    def md_ids(self) -> Tuple[str, ...]:
        return tuple(md.md_id for md in self.devices)

    @property
    def service_ids(self) -> Tuple[str, ...]:
        return tuple(svc.model_id for svc in self.services)

    @property
    def budgets(self) -> np.ndarray:
        return np.array([md.privacy_budget for md in self.devices])


def scenario_hash(source: Dict) -> str:
    canonical = json.dumps(source, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def popularity_vector(requests: RequestModel, n_services: int) -> np.ndarray:
    """Request probability per service; Zipf ranks follow library order, s=0 is uniform"""
    if requests.distribution == 'uniform':
        weights = np.ones(n_services)
    else:
        weights = np.arange(1, n_services + 1, dtype=float) ** (-requests.zipf_s)
    return weights / weights.sum()


# ═══════════════════════════════════════════════════════════
# FIELD PARSING
# ═══════════════════════════════════════════════════════════

def _quantity(value, dimension: str, where: str) -> float:
    try:
        return parse_quantity(value, dimension)
    except UnitError as e:
        raise ScenarioError(f"{where}: {e}")


def _draw(value, dimension: Optional[str], u: float, where: str) -> float:
    """Fixed value or uniform range; u is the entity's uniform draw for this field"""
    if isinstance(value, dict):
        if 'min' not in value or 'max' not in value:
            raise ScenarioError(f"{where}: range needs 'min' and 'max'")
        low = _draw(value['min'], dimension, 0.0, where)
        high = _draw(value['max'], dimension, 0.0, where)
        if high < low:
            raise ScenarioError(f"{where}: max {high} below min {low}")
        return low + u * (high - low)
    if dimension is None:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ScenarioError(f"{where}: expected a number (got {value!r})")
        return float(value)
    return _quantity(value, dimension, where)


def _build_servers(section: Dict, seed: int) -> Tuple[EdgeServer, ...]:
    if 'list' in section:
        entries = section['list']
        if not entries:
            raise ScenarioError("servers.list: empty")
        servers = []
        for i, raw in enumerate(entries):
            where = f"servers.list[{i}]"
            fields = {**SERVER_DEFAULTS, **raw}
            servers.append(_server(raw.get('server_id', f'es{i}'), i, fields, np.zeros(5), where))
        return tuple(servers)

    count = section.get('count')
    if not isinstance(count, int) or count < 1:
        raise ScenarioError(f"servers.count must be a positive integer (got {count!r})")
    fields = {**SERVER_DEFAULTS, **{k: v for k, v in section.items() if k != 'count'}}
    return tuple(
        _server(f'es{i}', i, fields, np.random.default_rng([seed, _SERVER_STREAM, i]).random(5), f"servers[{i}]")
        for i in range(count)
    )


def _server(server_id: str, index: int, fields: Dict, u: np.ndarray, where: str) -> EdgeServer:
    try:
        return EdgeServer(
            server_id=str(server_id),
            index=index,
            compute_flops=_draw(fields['compute'], 'flops_rate', u[0], f"{where}.compute"),
            storage_bytes=_draw(fields['storage'], 'bytes', u[1], f"{where}.storage"),
            bandwidth_hz=_draw(fields['bandwidth'], 'hz', u[2], f"{where}.bandwidth"),
            tx_power_dbm=_draw(fields['tx_power'], 'dbm', u[3], f"{where}.tx_power"),
            backhaul_bps=_draw(fields['backhaul'], 'bps', u[4], f"{where}.backhaul"),
        )
    except TopologyError as e:
        raise ScenarioError(f"{where}: {e}")


def _build_devices(section: Dict, requests: RequestModel, seed: int) -> Tuple[MobileDevice, ...]:
    mean_items = 0.5 * (requests.d_min + requests.d_max)
    if 'list' in section:
        entries = section['list']
        if not entries:
            raise ScenarioError("devices.list: empty")
        return tuple(_device(raw.get('md_id', f'md{i}'), i, {**DEVICE_DEFAULTS, **raw}, np.zeros(4),
                             mean_items, f"devices.list[{i}]")
                     for i, raw in enumerate(entries))

    count = section.get('count')
    if not isinstance(count, int) or count < 1:
        raise ScenarioError(f"devices.count must be a positive integer (got {count!r})")
    fields = {**DEVICE_DEFAULTS, **{k: v for k, v in section.items() if k != 'count'}}
    return tuple(
        _device(f'md{i}', i, fields, np.random.default_rng([seed, _DEVICE_STREAM, i]).random(4),
                mean_items, f"devices[{i}]")
        for i in range(count)
    )


def _device(md_id: str, index: int, fields: Dict, u: np.ndarray, mean_items: float, where: str) -> MobileDevice:
    if 'budget' in fields:
        budget = _draw(fields['budget'], None, u[3], f"{where}.budget")
    else:
        fraction = _draw(fields['budget_fraction'], None, u[3], f"{where}.budget_fraction")
        if not 0.0 <= fraction <= 1.0:
            raise ScenarioError(f"{where}.budget_fraction: {fraction} outside [0, 1]")
        budget = fraction * mean_items
    try:
        return MobileDevice(
            md_id=str(md_id),
            index=index,
            compute_flops=_draw(fields['compute'], 'flops_rate', u[0], f"{where}.compute"),
            tx_power_dbm=_draw(fields['tx_power'], 'dbm', u[1], f"{where}.tx_power"),
            distance_m=_draw(fields['distance'], 'meters', u[2], f"{where}.distance"),
            privacy_budget=budget,
        )
    except TopologyError as e:
        raise ScenarioError(f"{where}: {e}")


def _build_requests(section: Dict) -> RequestModel:
    distribution = section.get('distribution', 'uniform')
    if distribution not in REQUEST_DISTRIBUTIONS:
        raise ScenarioError(f"requests.distribution must be one of {REQUEST_DISTRIBUTIONS} (got {distribution!r})")
    zipf_s = float(section.get('zipf_s', 0.0))
    if zipf_s < 0:
        raise ScenarioError(f"requests.zipf_s must be >= 0 (got {zipf_s})")
    items = section.get('items', {})
    d_min, d_max = items.get('min', 10), items.get('max', 30)
    if not all(isinstance(v, int) and not isinstance(v, bool) for v in (d_min, d_max)):
        raise ScenarioError("requests.items min/max must be integers")
    if d_min < 1 or d_max < d_min:
        raise ScenarioError(f"requests.items must satisfy 1 <= min <= max (got {d_min}, {d_max})")
    return RequestModel(distribution=distribution, zipf_s=zipf_s, d_min=d_min, d_max=d_max)


def _build_channel(section: Dict, seed: int) -> ChannelModel:
    fields = {**CHANNEL_DEFAULTS, **section}
    try:
        return ChannelModel(
            path_loss_exponent=_draw(fields['path_loss_exponent'], None, 0.0, 'channel.path_loss_exponent'),
            shadowing_sigma_db=_quantity(fields['shadowing_sigma'], 'db', 'channel.shadowing_sigma'),
            noise_psd_dbm_hz=_quantity(fields['noise_psd'], 'dbm_hz', 'channel.noise_psd'),
            seed=seed,
        )
    except TopologyError as e:
        raise ScenarioError(f"channel: {e}")


def _build_library(section: Dict, base_dir: Path) -> Tuple[Tuple[ModelProfile, ...], Tuple[ModelProfile, ...], Tuple[int, ...]]:
    files = section.get('files')
    if not files:
        raise ScenarioError("catalog.files: at least one catalog file is required")
    available: Dict[str, ModelProfile] = {}
    for name in files:
        path = Path(name) if Path(name).is_absolute() else base_dir / name
        if not path.exists():
            raise ScenarioError(f"catalog.files: '{name}' not found (resolved to {path})")
        for model in load_catalog(path):
            if model.model_id in available:
                raise ScenarioError(f"catalog.files: model '{model.model_id}' declared twice")
            available[model.model_id] = model

    selected = section.get('models') or list(available)
    unknown = [m for m in selected if m not in available]
    if unknown:
        raise ScenarioError(f"catalog.models: unknown model(s) {unknown}")
    families = tuple(available[m] for m in selected)

    per_model = section.get('services_per_model', 1)
    if not isinstance(per_model, int) or per_model < 1:
        raise ScenarioError(f"catalog.services_per_model must be a positive integer (got {per_model!r})")
    services, service_family = [], []
    for p, model in enumerate(families):
        for svc in expand_services(model, per_model):
            services.append(svc)
            service_family.append(p)
    return families, tuple(services), tuple(service_family)


# ═══════════════════════════════════════════════════════════
# PUBLIC API
# ═══════════════════════════════════════════════════════════

def build_scenario(source: Dict, seed: int, base_dir='.') -> Scenario:
    """Materialise a scenario description for one run seed"""
    if not isinstance(source, dict):
        raise ScenarioError("scenario must be a JSON object")
    for key in ('catalog', 'servers', 'devices'):
        if key not in source:
            raise ScenarioError(f"missing '{key}' section")

    requests = _build_requests(source.get('requests', {}))
    families, services, service_family = _build_library(source['catalog'], Path(base_dir))
    return Scenario(
        name=source.get('name', 'scenario'),
        servers=_build_servers(source['servers'], seed),
        devices=_build_devices(source['devices'], requests, seed),
        channel=_build_channel(source.get('channel', {}), seed),
        families=families,
        services=services,
        service_family=service_family,
        requests=requests,
        popularity=popularity_vector(requests, len(services)),
        scenario_hash=scenario_hash(source),
        seed=int(seed),
        source=source,
    )


def load_scenario_source(path) -> Dict:
    path = Path(path)
    try:
        with open(path, 'r') as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"{path}: invalid JSON ({e})")


def load_scenario(path, seed: int) -> Scenario:
    """Catalog paths inside the file are relative to the file's directory"""
    path = Path(path)
    return build_scenario(load_scenario_source(path), seed, base_dir=path.parent)


def with_overrides(source: Dict, axis: str, value) -> Dict:
    """Copy of a scenario description with one sweep axis set to `value`"""
    out = copy.deepcopy(source)
    if axis == 'mds':
        if 'list' in out['devices']:
            raise ScenarioError("axis 'mds' needs a generated device section (devices.count)")
        out['devices']['count'] = int(value)
    elif axis == 'servers':
        if 'list' in out['servers']:
            raise ScenarioError("axis 'servers' needs a generated server section (servers.count)")
        out['servers']['count'] = int(value)
    elif axis == 'services':
        out['catalog']['services_per_model'] = int(value)
    elif axis == 'storage':
        _quantity(value, 'bytes', 'storage override')
        if 'list' in out['servers']:
            for entry in out['servers']['list']:
                entry['storage'] = value
        else:
            out['servers']['storage'] = value
    elif axis == 'privacy-budget':
        fraction = float(value)
        if not 0.0 <= fraction <= 1.0:
            raise ScenarioError(f"privacy-budget override {fraction} outside [0, 1]")
        if 'list' in out['devices']:
            for entry in out['devices']['list']:
                entry.pop('budget', None)
                entry['budget_fraction'] = fraction
        else:
            out['devices']['budget_fraction'] = fraction
    else:
        raise ScenarioError(f"unknown sweep axis '{axis}' (expected one of {SCENARIO_AXES} or 'alpha')")
    return out


def validate_scenario(scenario: Scenario) -> List[str]:
    """Non-fatal findings; fatal ones already raised while building"""
    warnings = []
    smallest = min(svc.total_bytes for svc in scenario.services)
    for server in scenario.servers:
        if server.storage_bytes == 0:
            warnings.append(f"server '{server.server_id}': storage is 0 B, every request will use the fallback path")
        elif server.storage_bytes < smallest:
            warnings.append(f"server '{server.server_id}': storage {server.storage_bytes:.0f} B "
                            f"cannot hold any service (smallest {smallest:.0f} B)")
    for md in scenario.devices:
        if md.privacy_budget == 0:
            warnings.append(f"device '{md.md_id}': privacy budget is 0, only zero-loss partitions satisfy it")
    return warnings


def describe(scenario: Scenario) -> Dict:
    """Short summary used by the validate command"""
    return {
        'name': scenario.name,
        'hash': scenario.scenario_hash[:12],
        'servers': len(scenario.servers),
        'devices': len(scenario.devices),
        'families': [m.model_id for m in scenario.families],
        'services': len(scenario.services),
        'requests': scenario.requests.distribution,
        'total_budget': float(scenario.budgets.sum()),
    }
