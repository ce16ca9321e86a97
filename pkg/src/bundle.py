"""
Bundle - run and sweep outputs on disk

<out>/<hash12>_<policy>_seed<seed>/     hash12 covers scenario and settings
    slots.csv       one row per MD per slot
    series.csv      one row per slot
    game_trace.csv  one row per game proposal
    summary.json    run summary, schema_version first-class

Every file is written to a temp file in the target directory and moved into
place with os.replace. Nothing time-dependent is written.
"""
import hashlib
import json
import os
import tempfile
from dataclasses import asdict
from pathlib import Path
from typing import Dict, List

import pandas as pd


SCHEMA_VERSION = 1
DEFAULT_FLOAT_FORMAT = '%.10g'

SLOT_COLUMNS = ['slot', 'md_id', 'server_id', 'model_id', 'd_items', 'path', 'z',
                'c2e_s', 'down_s', 'local_s', 'up_s', 'edge_s', 'total_s', 'loss', 'budget']
TRACE_COLUMNS = ['slot', 'iteration', 'phase', 'move', 'md', 'other', 'accepted', 'welfare']
BUNDLE_FILES = ('game_trace.csv', 'series.csv', 'slots.csv', 'summary.json')


class BundleError(OSError):
    """Output directory or file could not be written"""


def _atomic_write(path: Path, write):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix='.tmp', dir=path.parent)
    try:
        with os.fdopen(fd, 'w', newline='') as f:
            write(f)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, frame: pd.DataFrame, float_format: str = DEFAULT_FLOAT_FORMAT) -> Path:
    path = Path(path)
    _atomic_write(path, lambda f: frame.to_csv(f, index=False, float_format=float_format, lineterminator='\n'))
    return path


def write_json(path, payload: Dict) -> Path:
    path = Path(path)
    _atomic_write(path, lambda f: f.write(json.dumps(payload, indent=2, sort_keys=True) + '\n'))
    return path


def run_hash(scenario_hash: str, settings) -> str:
    """Scenario hash combined with the simulation settings, so runs differing only in config never collide"""
    canonical = json.dumps({'scenario': scenario_hash, 'settings': asdict(settings)},
                           sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def bundle_dir(out_dir, run_key: str, policy: str, seed: int) -> Path:
    return Path(out_dir) / f"{run_key[:12]}_{policy}_seed{seed}"


def slots_frame(metrics) -> pd.DataFrame:
    rows = []
    for m in metrics:
        for rec in m.records:
            row = {'slot': rec.slot, 'md_id': rec.md_id, 'server_id': rec.server_id, 'model_id': rec.model_id,
                   'd_items': rec.d_items, 'path': rec.path, 'z': rec.z,
                   'loss': rec.loss, 'budget': rec.budget}
            row.update(asdict(rec.delay))
            rows.append(row)
    return pd.DataFrame(rows, columns=SLOT_COLUMNS)


def _deployment_cell(deployments: Dict[str, tuple]) -> str:
    # S0:vgg19-s0+vgg19-s1;S1:
    return ';'.join(f"{server_id}:{'+'.join(models)}" for server_id, models in deployments.items())


def series_frame(metrics) -> pd.DataFrame:
    return pd.DataFrame([{
        'slot': m.slot,
        'system_delay_s': m.system_delay_s,
        'total_loss': m.total_loss,
        'total_items': m.total_items,
        'total_budget': m.total_budget,
        'xi_before': m.xi_before,
        'xi': m.xi,
        'objective': m.objective,
        'welfare': m.welfare,
        'game_welfare': m.game_welfare,
        'game_iterations': m.game_iterations,
        'game_accepted': m.game_accepted,
        'game_capped': m.game_capped,
        'coalition_evaluations': m.coalition_evaluations,
        'cache_hits': m.cache_hits,
        'objective_evaluations': m.objective_evaluations,
        'drift': m.drift.drift,
        'drift_exact_bound': m.drift.exact_bound,
        'drift_theta_bound': m.drift.theta_bound,
        'theta_bound_holds': m.drift.theta_bound_holds,
        'theta_warnings': m.theta_warnings,
        'streamed': m.streamed,
        'used_bytes': sum(m.used_bytes.values()),
        'deployments': _deployment_cell(m.deployments),
    } for m in metrics])


def trace_frame(trace) -> pd.DataFrame:
    return pd.DataFrame([asdict(step) for step in trace], columns=TRACE_COLUMNS)


def summary_payload(result, scenario, settings) -> Dict:
    return {
        'schema_version': SCHEMA_VERSION,
        'run_hash': run_hash(scenario.scenario_hash, settings),
        'scenario': {'name': scenario.name, 'hash': scenario.scenario_hash,
                     'devices': len(scenario.devices), 'servers': len(scenario.servers),
                     'services': len(scenario.services)},
        'policy': result.policy,
        'seed': result.seed,
        'settings': asdict(settings),
        'summary': result.summary,
        'violations': list(result.violations),
    }


def write_run_bundle(result, scenario, settings, out_dir, float_format: str = DEFAULT_FLOAT_FORMAT) -> Path:
    """Write one run's bundle; returns its directory"""
    target = bundle_dir(out_dir, run_hash(scenario.scenario_hash, settings), result.policy, result.seed)
    try:
        write_csv(target / 'slots.csv', slots_frame(result.metrics), float_format)
        write_csv(target / 'series.csv', series_frame(result.metrics), float_format)
        write_csv(target / 'game_trace.csv', trace_frame(result.trace), float_format)
        write_json(target / 'summary.json', summary_payload(result, scenario, settings))
    except OSError as e:
        raise BundleError(f"cannot write bundle {target}: {e}") from e
    return target


def write_sweep_table(table: pd.DataFrame, out_dir, run_key: str, axis: str,
                      float_format: str = DEFAULT_FLOAT_FORMAT) -> Path:
    path = Path(out_dir) / f"{run_key[:12]}_sweep_{axis}.csv"
    try:
        return write_csv(path, table, float_format)
    except OSError as e:
        raise BundleError(f"cannot write sweep table {path}: {e}") from e


def list_bundle(path) -> List[str]:
    return sorted(p.name for p in Path(path).iterdir() if p.is_file())


def check_bundle(path) -> Dict:
    """Confirm a run bundle is complete and readable; returns its summary.json payload"""
    path = Path(path)
    if not path.is_dir():
        raise BundleError(f"{path}: not a bundle directory")
    missing = sorted(set(BUNDLE_FILES) - set(list_bundle(path)))
    if missing:
        raise BundleError(f"{path}: missing {', '.join(missing)}")
    summary_path = path / 'summary.json'
    try:
        payload = json.loads(summary_path.read_text())
    except json.JSONDecodeError as e:
        raise BundleError(f"{summary_path}: invalid JSON ({e})") from e
    if payload.get('schema_version') != SCHEMA_VERSION:
        raise BundleError(f"{summary_path}: schema_version {payload.get('schema_version')!r}, "
                          f"expected {SCHEMA_VERSION}")
    return payload
