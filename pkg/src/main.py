#!/usr/bin/env python3
"""
Collaborative Edge Inference Simulator - command-line entry point

    python src/main.py validate --scenario scenarios/default_desk.json
    python src/main.py run      --scenario scenarios/default_desk.json --policy proposed --slots 100 --seed 42
    python src/main.py sweep    --scenario scenarios/default_desk.json --sweep-axis servers \
                                --sweep-values 2,4,6 --policy proposed,fl --repeats 5

Exit codes: 0 ok, 2 usage, 3 config, 4 validation, 5 runtime, 6 I/O.
"""
import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from bundle import DEFAULT_FLOAT_FORMAT, check_bundle, run_hash, write_run_bundle, write_sweep_table
from catalog import CatalogError
from constraint_guard import ConstraintGuard, ConstraintViolation
from delay import UnservedRequestError
from scenario import (ScenarioError, build_scenario, describe, load_scenario_source, validate_scenario,
                      scenario_hash)
from sim_logger import configure_logging, log_scenario_loaded
from simulator import (SWEEP_AXES, ConfigError, EdgeSimulator, Policy, SimulationSettings, run_sweep)
from units import UnitError


EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_VALIDATION = 4
EXIT_RUNTIME = 5
EXIT_IO = 6


def load_config(config_path: Optional[str] = None) -> dict:
    """Load configuration; without a path, config/config.json then config/config.example.json"""
    if config_path is None:
        config_dir = Path(__file__).parent.parent / "config"
        config_path = config_dir / "config.json"
        if not config_path.exists():
            config_path = config_dir / "config.example.json"
        if not config_path.exists():
            return {}
    try:
        with open(config_path, 'r') as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{config_path}: invalid JSON ({e})")


@dataclass
class RunConfig:
    """Flags merged over the config file; flags win"""
    scenario: str
    policies: Tuple[str, ...] = ('proposed',)
    slots: int = 100
    seed: int = 0
    alpha: float = 1.0
    g_period: int = 10
    out_dir: str = 'runs'
    per_md_queues: bool = False
    cold_start: bool = False
    sweep_axis: Optional[str] = None
    sweep_values: Tuple[str, ...] = ()
    repeats: int = 1
    workers: int = 1
    float_format: str = DEFAULT_FLOAT_FORMAT
    config: Dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be > 0 (got {self.alpha})")
        if self.slots < 1:
            raise ConfigError(f"slots must be >= 1 (got {self.slots})")
        if self.g_period < 1:
            raise ConfigError(f"g-period must be >= 1 (got {self.g_period})")
        if self.repeats < 1:
            raise ConfigError(f"repeats must be >= 1 (got {self.repeats})")
        self.policies = tuple(Policy.parse(p).value for p in self.policies)

    @property
    def seeds(self) -> List[int]:
        return [self.seed + k for k in range(self.repeats)]

    def merged_config(self) -> Dict:
        """Config dict with the flag values written into their sections"""
        config = json.loads(json.dumps(self.config))
        config.setdefault('optimizer', {})['alpha'] = self.alpha
        config['optimizer']['per_md_queues'] = self.per_md_queues
        config.setdefault('game', {})['exchange_period'] = self.g_period
        config['game']['warm_start'] = not self.cold_start
        return config

    @classmethod
    def from_args(cls, args: argparse.Namespace, config: Dict) -> 'RunConfig':
        simulation = config.get('simulation', {})
        optimizer = config.get('optimizer', {})
        game = config.get('game', {})
        output = config.get('output', {})
        sweep = config.get('sweep', {})

        def pick(flag, fallback):
            return fallback if flag is None else flag

        policies = pick(getattr(args, 'policy', None), simulation.get('policy', 'proposed'))
        values = getattr(args, 'sweep_values', None)
        return cls(
            scenario=args.scenario,
            policies=tuple(p.strip() for p in str(policies).split(',') if p.strip()),
            slots=int(pick(getattr(args, 'slots', None), simulation.get('slots', 100))),
            seed=int(pick(getattr(args, 'seed', None), simulation.get('seed', 0))),
            alpha=float(pick(getattr(args, 'alpha', None), optimizer.get('alpha', 1.0))),
            g_period=int(pick(getattr(args, 'g_period', None), game.get('exchange_period', 10))),
            out_dir=pick(getattr(args, 'out', None), output.get('directory', 'runs')),
            per_md_queues=bool(getattr(args, 'per_md_queues', False) or optimizer.get('per_md_queues', False)),
            cold_start=bool(getattr(args, 'cold_start', False) or not game.get('warm_start', True)),
            sweep_axis=getattr(args, 'sweep_axis', None),
            sweep_values=tuple(v.strip() for v in values.split(',') if v.strip()) if values else (),
            repeats=int(pick(getattr(args, 'repeats', None), 1)),
            workers=int(pick(getattr(args, 'workers', None), sweep.get('workers', 1))),
            float_format=output.get('float_format', DEFAULT_FLOAT_FORMAT),
            config=config,
        )


# ═══════════════════════════════════════════════════════════
# COMMANDS
# ═══════════════════════════════════════════════════════════

def _load_source(path: str) -> Tuple[Dict, Path]:
    path = Path(path)
    return load_scenario_source(path), path.parent


def cmd_validate(args: argparse.Namespace, config: Dict) -> int:
    """Build the scenario (catalog, topology, budgets) and report findings"""
    source, base_dir = _load_source(args.scenario)
    seed = int(args.seed if args.seed is not None else config.get('simulation', {}).get('seed', 0))
    scenario = build_scenario(source, seed, base_dir)
    info = describe(scenario)
    print(f"[VALIDATE] {args.scenario}: {info['name']} ({info['hash']})")
    print(f"           Servers: {info['servers']} | MDs: {info['devices']} | "
          f"Services: {info['services']} from {', '.join(info['families'])}")
    print(f"           Requests: {info['requests']} | Total budget: {info['total_budget']:.2f} items/slot")
    warnings = validate_scenario(scenario)
    for warning in warnings:
        print(f"[VALIDATE] ⚠️  {warning}")
    print(f"[VALIDATE] ✓ valid ({len(warnings)} warning(s))")
    return EXIT_OK


def cmd_run(run: RunConfig) -> int:
    source, base_dir = _load_source(run.scenario)
    config = run.merged_config()
    scenario = build_scenario(source, run.seed, base_dir)
    log_scenario_loaded(scenario.name, scenario.scenario_hash, len(scenario.devices),
                        len(scenario.servers), len(scenario.services))
    settings = SimulationSettings.from_config(config, run.seed)

    for policy in run.policies:
        print(f"[RUN] {policy} | {scenario.name} ({scenario.scenario_hash[:12]}) | "
              f"{run.slots} slots | seed {run.seed} | α={settings.alpha} | G={settings.game.exchange_period}")

        simulator = EdgeSimulator(scenario, settings, ConstraintGuard(config))
        result = simulator.run_horizon(Policy.parse(policy), run.slots)
        target = write_run_bundle(result, scenario, settings, run.out_dir, run.float_format)

        s = result.summary
        print(f"[RUN] avg delay {s['avg_system_delay_s']:.4f} s | privacy loss {s['privacy_loss_pct']:.1f}% | "
              f"final Ξ {s['final_xi']:.4f}")
        if result.violations:
            print(f"[GUARD] ❌ {len(result.violations)} constraint violation(s), first: {result.violations[0]}")
        payload = check_bundle(target)
        print(f"[RUN] bundle → {target} (run {payload['run_hash'][:12]})")
    return EXIT_OK


def cmd_sweep(run: RunConfig) -> int:
    if not run.sweep_axis:
        raise ConfigError("sweep needs --sweep-axis")
    if not run.sweep_values:
        raise ConfigError("sweep needs --sweep-values")
    source, base_dir = _load_source(run.scenario)
    config = run.merged_config()

    print(f"[SWEEP] axis {run.sweep_axis} = {', '.join(run.sweep_values)} | "
          f"policies {', '.join(run.policies)} | seeds {run.seeds[0]}..{run.seeds[-1]} | {run.slots} slots")
    table = run_sweep(source, run.sweep_axis, list(run.sweep_values), run.policies, run.seeds, run.slots,
                      config=config, base_dir=base_dir, workers=run.workers)
    settings = SimulationSettings.from_config(config, run.seed)
    path = write_sweep_table(table, run.out_dir, run_hash(scenario_hash(source), settings), run.sweep_axis,
                             run.float_format)

    means = table[table['row'] == 'mean']
    for _, row in means.iterrows():
        print(f"[SWEEP] {row['value']:>10s} | {row['policy']:<9s} | delay {row['avg_system_delay_s']:.4f} s | "
              f"privacy loss {row['privacy_loss_pct']:.1f}%")
    print(f"[SWEEP] table → {path}")
    return EXIT_OK


# ═══════════════════════════════════════════════════════════
# ARGUMENTS / ENTRY
# ═══════════════════════════════════════════════════════════

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='edge-inference-sim',
                                     description='Privacy-aware collaborative edge inference simulator')
    parser.add_argument('--config', default=None, help='config JSON (default config/config.json)')
    sub = parser.add_subparsers(dest='command', required=True)

    def common(p):
        p.add_argument('--scenario', required=True, help='scenario JSON file')
        p.add_argument('--seed', type=int, default=None)

    def run_flags(p):
        p.add_argument('--policy', default=None, help='proposed | fl | fe | matching (comma-separated)')
        p.add_argument('--slots', type=int, default=None)
        p.add_argument('--alpha', type=float, default=None, help='delay weight in the per-slot objective')
        p.add_argument('--g-period', type=int, default=None, help='random exchange after every G switches')
        p.add_argument('--out', default=None, help='output root (default runs/)')
        p.add_argument('--per-md-queues', action='store_true', help='one virtual queue per MD')
        p.add_argument('--cold-start', action='store_true', help='re-draw the partition every slot')

    common(sub.add_parser('validate', help='check a scenario and its catalogs'))

    run_parser = sub.add_parser('run', help='simulate a horizon and write a bundle')
    common(run_parser)
    run_flags(run_parser)

    sweep_parser = sub.add_parser('sweep', help='cross product of axis values, policies and seeds')
    common(sweep_parser)
    run_flags(sweep_parser)
    sweep_parser.add_argument('--sweep-axis', required=True, choices=SWEEP_AXES)
    sweep_parser.add_argument('--sweep-values', required=True, help='comma-separated values')
    sweep_parser.add_argument('--repeats', type=int, default=None, help='seeds seed..seed+repeats-1')
    sweep_parser.add_argument('--workers', type=int, default=None, help='parallel runs')
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        config = load_config(args.config)
        log_cfg = config.get('logging', {})
        configure_logging(log_cfg.get('log_file', 'logs/simulation.log'), log_cfg.get('level', 'INFO'))
        print(f"[CONFIG] {args.config or 'config/config.json'} | command: {args.command}")

        if args.command == 'validate':
            return cmd_validate(args, config)
        run = RunConfig.from_args(args, config)
        return cmd_run(run) if args.command == 'run' else cmd_sweep(run)

    except ConfigError as e:
        print(f"[CONFIG] ❌ {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (UnitError, CatalogError, ScenarioError) as e:
        print(f"[VALIDATE] ❌ {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (UnservedRequestError, ConstraintViolation) as e:
        print(f"[RUN] ❌ {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as e:
        print(f"[IO] ❌ {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"[CONFIG] ❌ {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == '__main__':
    sys.exit(main())
