"""
Simulator - time-slotted driver: requests -> association -> deployment -> partition -> metrics -> queue

Policies:
    proposed  - coalition game with greedy deployment and drift-plus-penalty partitioning
    fl        - full local: nothing cached, every MD fetches its model and runs it locally
    fe        - full edge: z = 0 for every MD, capacity-aware delay-greedy association
    matching  - delay-greedy association, queue weight 0, per-slot loss cap loss_n <= budget_n
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from catalog import POSSIBILITY_MODES, PossibilityModeError, possibility_at, resolve_mode
from coalition import (CoalitionEvaluator, GameConfig, GameStep, PartitionStructure, UtilitySettings,
                       evaluate_partition, random_partition, run_game)
from constraint_guard import ConstraintGuard
from delay import DelayBreakdown, delay_components, system_delay
from partition_opt import build_slot_context
from privacy import (DriftReport, PrivacyQueue, check_theta_normalisation, coalition_utility,
                     drift_report, queue_update, slot_objective)
from scenario import Scenario, build_scenario, with_overrides
from sim_logger import log_drift, log_game_finished, log_run_summary, log_slot_done, log_streamed_request, log_sweep_point
from topology import SlotGains, slot_gains


_REQUEST_STREAM = 201
_INIT_STREAM = 202
_GAME_STREAM = 203

DEPLOYMENT_MODES = ('expected', 'realized')
SWEEP_AXES = ('mds', 'servers', 'services', 'storage', 'privacy-budget', 'alpha')


class ConfigError(ValueError):
    """Invalid run configuration"""


class Policy(str, Enum):
    PROPOSED = 'proposed'
    FULL_LOCAL = 'fl'
    FULL_EDGE = 'fe'
    MATCHING = 'matching'

    @classmethod
    def parse(cls, name: str) -> 'Policy':
        aliases = {'full_local': 'fl', 'full-local': 'fl', 'full_edge': 'fe', 'full-edge': 'fe'}
        key = aliases.get(str(name).lower(), str(name).lower())
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(f"unknown policy '{name}' (expected one of {[p.value for p in cls]})")


@dataclass(frozen=True)
class Request:
    md_id: str
    model_id: str
    d_items: int
    md_index: int
    service_index: int


@dataclass(frozen=True)
class MDRecord:
    """One MD in one slot: the decision and what it cost"""
    slot: int
    md_id: str
    server_id: str
    model_id: str
    d_items: int
    path: str               # edge | fallback | streamed
    z: int                  # device layers; K for fallback
    delay: DelayBreakdown
    loss: float
    budget: float


@dataclass(frozen=True)
class SlotMetrics:
    slot: int
    policy: str
    records: Tuple[MDRecord, ...]
    system_delay_s: float
    total_loss: float
    total_items: int
    total_budget: float
    xi_before: float
    xi: float
    objective: float
    welfare: float
    deployments: Dict[str, Tuple[str, ...]]
    used_bytes: Dict[str, float]
    drift: DriftReport
    game_iterations: int = 0
    game_accepted: int = 0
    game_capped: bool = False
    game_welfare: float = 0.0
    coalition_evaluations: int = 0
    cache_hits: int = 0
    objective_evaluations: int = 0
    theta_warnings: int = 0
    streamed: int = 0


@dataclass
class SlotState:
    """What carries over between slots"""
    slot: int
    deployment: Tuple[FrozenSet[int], ...]
    queue: PrivacyQueue
    partition: Optional[PartitionStructure] = None


@dataclass(frozen=True)
class SimulationSettings:
    alpha: float = 1.0
    possibility_mode: str = 'auto'
    deployment_mode: str = 'expected'
    seed_size: int = 2
    average_utility: bool = True
    theta_in_utility: bool = True
    per_md_queues: bool = False
    warm_start: bool = True
    fallback_enabled: bool = True
    game: GameConfig = field(default_factory=GameConfig)

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError(f"optimizer.alpha must be > 0 (got {self.alpha})")
        if self.possibility_mode not in POSSIBILITY_MODES:
            raise ConfigError(f"optimizer.possibility_mode must be one of {POSSIBILITY_MODES}")
        if self.deployment_mode not in DEPLOYMENT_MODES:
            raise ConfigError(f"optimizer.deployment_mode must be one of {DEPLOYMENT_MODES}")
        if self.seed_size < 0:
            raise ConfigError(f"optimizer.seed_size must be >= 0 (got {self.seed_size})")

    @classmethod
    def from_config(cls, config: Dict, seed: int = 0) -> 'SimulationSettings':
        optimizer = config.get('optimizer', {})
        game = config.get('game', {})
        simulation = config.get('simulation', {})
        try:
            game_cfg = GameConfig.from_config(config, seed)
        except ValueError as e:
            raise ConfigError(f"game: {e}")
        return cls(
            alpha=float(optimizer.get('alpha', 1.0)),
            possibility_mode=optimizer.get('possibility_mode', 'auto'),
            deployment_mode=optimizer.get('deployment_mode', 'expected'),
            seed_size=int(optimizer.get('seed_size', 2)),
            average_utility=bool(optimizer.get('average_utility', True)),
            theta_in_utility=bool(optimizer.get('theta_in_utility', True)),
            per_md_queues=bool(optimizer.get('per_md_queues', False)),
            warm_start=bool(game.get('warm_start', True)),
            fallback_enabled=bool(simulation.get('fallback_enabled', True)),
            game=game_cfg,
        )


@dataclass
class HorizonResult:
    policy: str
    seed: int
    metrics: List[SlotMetrics]
    trace: List[GameStep]
    summary: Dict
    violations: List[str]


# ═══════════════════════════════════════════════════════════
# REQUESTS
# ═══════════════════════════════════════════════════════════

def draw_services(rng: np.random.Generator, popularity: np.ndarray, size: int) -> np.ndarray:
    """Inverse-CDF draw of service indices"""
    cdf = np.cumsum(popularity)
    cdf[-1] = 1.0
    return np.minimum(np.searchsorted(cdf, rng.random(size), side='right'), len(popularity) - 1)


def sample_requests(scenario: Scenario, slot: int) -> List[Request]:
    """One request per MD: service from the popularity vector, d_items uniform in [d_min, d_max]"""
    rng = np.random.default_rng([scenario.seed, _REQUEST_STREAM, int(slot)])
    n = len(scenario.devices)
    services = draw_services(rng, scenario.popularity, n)
    items = rng.integers(scenario.requests.d_min, scenario.requests.d_max + 1, size=n)
    return [
        Request(md_id=md.md_id, model_id=scenario.services[s].model_id, d_items=int(d),
                md_index=md.index, service_index=int(s))
        for md, s, d in zip(scenario.devices, services, items)
    ]


# ═══════════════════════════════════════════════════════════
# SIMULATOR
# ═══════════════════════════════════════════════════════════

class EdgeSimulator:
    """Runs one (scenario, settings) pair slot by slot"""

    def __init__(self, scenario: Scenario, settings: SimulationSettings = SimulationSettings(),
                 guard: Optional[ConstraintGuard] = None):
        self.scenario = scenario
        self.settings = settings
        self.guard = guard or ConstraintGuard()
        for model in scenario.families:
            try:
                resolve_mode(model, settings.possibility_mode)
            except PossibilityModeError as e:
                raise ConfigError(str(e))

    def initial_state(self) -> SlotState:
        return SlotState(
            slot=0,
            deployment=tuple(frozenset() for _ in self.scenario.servers),
            queue=PrivacyQueue.initial(self.scenario.budgets, self.settings.per_md_queues),
        )

    # ─── association / deployment / partition per policy ───

    def _context(self, state: SlotState, gains: SlotGains, requests: Sequence[Request],
                 weights: np.ndarray, loss_cap: bool):
        s = self.settings
        return build_slot_context(
            self.scenario, gains, state.slot,
            d_items=[r.d_items for r in requests],
            request_service=[r.service_index for r in requests],
            weights=weights, alpha=s.alpha, prev_deployment=state.deployment,
            loss_cap=loss_cap, mode=s.possibility_mode, deployment_mode=s.deployment_mode,
        )

    def _evaluator(self, ctx, theta: float) -> CoalitionEvaluator:
        s = self.settings
        return CoalitionEvaluator(
            ctx, self.scenario.server_ids, self.scenario.service_ids,
            UtilitySettings(average=s.average_utility, include_theta=s.theta_in_utility,
                            theta=theta, seed_size=s.seed_size),
        )

    def _decisions_from_partition(self, partition: PartitionStructure, evaluator: CoalitionEvaluator):
        n = len(self.scenario.devices)
        assignment = partition.assignment()
        deployment, z, paths = [], np.zeros(n, dtype=int), [''] * n
        for server, members in enumerate(partition.coalitions):
            result = evaluator.evaluate(server, members)
            deployment.append(frozenset(result.deployment.indices) if result.deployment else frozenset())
            for md in members:
                paths[md] = 'edge' if result.served[md] else 'fallback'
                z[md] = result.z[md]
        return assignment, deployment, z, paths

    def _greedy_assign(self, requests: Sequence[Request], cost) -> np.ndarray:
        """MDs by d_items descending (ties md index), each to its cheapest server given current loads"""
        n_srv = len(self.scenario.servers)
        load = np.zeros(n_srv, dtype=int)
        assignment = np.full(len(requests), -1, dtype=int)
        for r in sorted(requests, key=lambda r: (-r.d_items, r.md_index)):
            costs = [cost(r, m, load[m] + 1) for m in range(n_srv)]
            best = int(np.argmin(costs))
            assignment[r.md_index] = best
            load[best] += 1
        return assignment

    def _proposed(self, state, gains, requests):
        weights = state.queue.weights(len(self.scenario.devices))
        ctx = self._context(state, gains, requests, weights, loss_cap=False)
        evaluator = self._evaluator(ctx, state.queue.theta)
        n_dev, n_srv = len(self.scenario.devices), len(self.scenario.servers)
        if self.settings.warm_start and state.partition is not None:
            initial = PartitionStructure(state.partition.coalitions, (0.0,) * n_srv)
        else:
            initial = random_partition(n_dev, n_srv, np.random.default_rng([self.scenario.seed, _INIT_STREAM, state.slot]))
        game = run_game(initial, self.settings.game, evaluator,
                        np.random.default_rng([self.scenario.seed, _GAME_STREAM, state.slot]), slot=state.slot)
        assignment, deployment, z, paths = self._decisions_from_partition(game.partition, evaluator)
        log_game_finished(state.slot, game.iterations, game.accepted, game.capped,
                          evaluator.evaluations, evaluator.cache_hits)
        return assignment, deployment, z, paths, game, evaluator

    def _matching(self, state, gains, requests):
        ctx = self._context(state, gains, requests, np.zeros(len(self.scenario.devices)), loss_cap=True)
        fam = ctx.service_family

        def cost(r, m, n):
            s = r.service_index
            served = ctx.best[m, n - 1, r.md_index, fam[s]]
            fetch = 0.0 if s in ctx.prev_deployment[m] else ctx.alpha * ctx.fetch_s[m, s]
            return min(served + fetch, ctx.fallback[m, n - 1, r.md_index, fam[s]])

        assignment = self._greedy_assign(requests, cost)
        partition = PartitionStructure.from_assignment(assignment, len(self.scenario.servers))
        evaluator = self._evaluator(ctx, 0.0)
        partition = evaluate_partition(partition, evaluator)
        return self._decisions_from_partition(partition, evaluator) + (partition, evaluator)

    def _full_local(self, state, gains, requests):
        ctx = self._context(state, gains, requests, np.zeros(len(self.scenario.devices)), loss_cap=False)
        fam = ctx.service_family
        assignment = self._greedy_assign(
            requests, lambda r, m, n: ctx.fallback[m, n - 1, r.md_index, fam[r.service_index]])
        n = len(requests)
        z = np.array([self.scenario.services[r.service_index].num_layers for r in requests])
        deployment = [frozenset() for _ in self.scenario.servers]
        return assignment, deployment, z, ['fallback'] * n

    def _full_edge(self, state, gains, requests):
        sc = self.scenario
        n_srv = len(sc.servers)
        load = np.zeros(n_srv, dtype=int)
        used = np.zeros(n_srv)
        cached = [set() for _ in range(n_srv)]
        assignment = np.full(len(requests), -1, dtype=int)
        paths = [''] * len(requests)

        def z0_delay(r, m, n, prev):
            return delay_components(sc.devices[r.md_index], sc.servers[m], sc.services[r.service_index], 0,
                                    r.d_items, deployed_now=True, deployed_prev=prev, n_associated=n,
                                    gains=(gains.up[r.md_index, m], gains.down[r.md_index, m]),
                                    noise_psd_dbm_hz=sc.channel.noise_psd_dbm_hz,
                                    mode=self.settings.possibility_mode).total_s

        for r in sorted(requests, key=lambda r: (-r.d_items, r.md_index)):
            s = r.service_index
            size = sc.services[s].total_bytes
            hosts = [m for m in range(n_srv)
                     if s in cached[m] or used[m] + size <= sc.servers[m].storage_bytes]
            streamed = not hosts
            candidates = hosts or list(range(n_srv))
            costs = [z0_delay(r, m, load[m] + 1, (s in state.deployment[m]) and not streamed) for m in candidates]
            best = candidates[int(np.argmin(costs))]
            assignment[r.md_index] = best
            load[best] += 1
            if streamed:
                paths[r.md_index] = 'streamed'
                log_streamed_request(state.slot, r.md_id, r.model_id, sc.servers[best].server_id)
            else:
                paths[r.md_index] = 'edge'
                if s not in cached[best]:
                    cached[best].add(s)
                    used[best] += size
        z = np.zeros(len(requests), dtype=int)
        return assignment, [frozenset(c) for c in cached], z, paths

    # ─── measurement ───

    def measure(self, state: SlotState, gains: SlotGains, requests: Sequence[Request], assignment: np.ndarray,
                deployment: Sequence[FrozenSet[int]], z: np.ndarray, paths: Sequence[str]) -> List[MDRecord]:
        """Per-MD delays and losses of a slot's decisions, through the scalar delay path"""
        sc = self.scenario
        counts = np.bincount(assignment, minlength=len(sc.servers))
        records = []
        for r in requests:
            m = int(assignment[r.md_index])
            md, server, model = sc.devices[r.md_index], sc.servers[m], sc.services[r.service_index]
            path = paths[r.md_index]
            link = (gains.up[r.md_index, m], gains.down[r.md_index, m])
            if path == 'fallback':
                zz = model.num_layers
                delay = delay_components(md, server, model, zz, r.d_items, deployed_now=False, deployed_prev=False,
                                         n_associated=int(counts[m]), gains=link,
                                         noise_psd_dbm_hz=sc.channel.noise_psd_dbm_hz,
                                         fallback_enabled=self.settings.fallback_enabled,
                                         mode=self.settings.possibility_mode)
                loss = 0.0
            else:
                zz = int(z[r.md_index])
                prev = path == 'edge' and r.service_index in state.deployment[m]
                delay = delay_components(md, server, model, zz, r.d_items, deployed_now=True, deployed_prev=prev,
                                         n_associated=int(counts[m]), gains=link,
                                         noise_psd_dbm_hz=sc.channel.noise_psd_dbm_hz,
                                         mode=self.settings.possibility_mode)
                loss = r.d_items * possibility_at(model, zz, self.settings.possibility_mode)
            records.append(MDRecord(slot=state.slot, md_id=r.md_id, server_id=server.server_id,
                                    model_id=r.model_id, d_items=r.d_items, path=path, z=zz,
                                    delay=delay, loss=loss, budget=md.privacy_budget))
        return records

    def realized_welfare(self, records: Sequence[MDRecord], weights: np.ndarray, theta: float) -> float:
        """Sum of coalition utilities recomputed from measured delays and losses"""
        s = self.settings
        index = {md_id: i for i, md_id in enumerate(self.scenario.md_ids)}
        welfare = 0.0
        for server_id in self.scenario.server_ids:
            members = [rec for rec in records if rec.server_id == server_id]
            if not members:
                continue
            welfare += coalition_utility(
                [rec.delay.total_s for rec in members], [rec.loss for rec in members],
                [rec.budget for rec in members], weights[[index[rec.md_id] for rec in members]],
                s.alpha, theta if s.theta_in_utility else 0.0, average=s.average_utility)
        return welfare

    def run_slot(self, state: SlotState, requests: Sequence[Request],
                 policy: Policy) -> Tuple[SlotState, SlotMetrics, List[GameStep]]:
        sc = self.scenario
        gains = slot_gains(sc.channel, sc.devices, sc.servers, state.slot)
        weights = state.queue.weights(len(sc.devices))
        game, evaluator, partition = None, None, None

        if policy == Policy.PROPOSED:
            assignment, deployment, z, paths, game, evaluator = self._proposed(state, gains, requests)
            partition = game.partition
        elif policy == Policy.MATCHING:
            assignment, deployment, z, paths, partition, evaluator = self._matching(state, gains, requests)
        elif policy == Policy.FULL_LOCAL:
            assignment, deployment, z, paths = self._full_local(state, gains, requests)
        elif policy == Policy.FULL_EDGE:
            assignment, deployment, z, paths = self._full_edge(state, gains, requests)
        else:
            raise ConfigError(f"unsupported policy {policy!r}")

        records = self.measure(state, gains, requests, assignment, deployment, z, paths)
        losses = np.array([rec.loss for rec in records])
        budgets = sc.budgets
        tau = system_delay(rec.delay for rec in records)

        queue_after = queue_update(state.queue, losses, budgets)
        drift = drift_report(state.queue, queue_after, losses, budgets)
        log_drift(state.slot, drift.drift, drift.exact_bound, drift.theta_bound, drift.theta_bound_holds)
        theta_warnings = check_theta_normalisation(state.slot, sc.md_ids, losses, budgets)

        metrics = SlotMetrics(
            slot=state.slot,
            policy=policy.value,
            records=tuple(records),
            system_delay_s=tau,
            total_loss=float(losses.sum()),
            total_items=int(sum(r.d_items for r in requests)),
            total_budget=float(budgets.sum()),
            xi_before=state.queue.xi,
            xi=queue_after.xi,
            objective=slot_objective(tau, losses, budgets, weights, self.settings.alpha, state.queue.theta),
            welfare=self.realized_welfare(records, weights, state.queue.theta),
            deployments={sc.servers[m].server_id: tuple(sorted(sc.services[j].model_id for j in dep))
                         for m, dep in enumerate(deployment)},
            used_bytes={sc.servers[m].server_id: float(sum(sc.services[j].total_bytes for j in dep))
                        for m, dep in enumerate(deployment)},
            drift=drift,
            game_iterations=game.iterations if game else 0,
            game_accepted=game.accepted if game else 0,
            game_capped=game.capped if game else False,
            game_welfare=partition.welfare if partition is not None else 0.0,
            coalition_evaluations=evaluator.evaluations if evaluator else 0,
            cache_hits=evaluator.cache_hits if evaluator else 0,
            objective_evaluations=evaluator.objective_evaluations if evaluator else 0,
            theta_warnings=theta_warnings,
            streamed=sum(1 for p in paths if p == 'streamed'),
        )
        new_state = SlotState(slot=state.slot + 1, deployment=tuple(frozenset(d) for d in deployment),
                              queue=queue_after, partition=partition if policy == Policy.PROPOSED else None)
        return new_state, metrics, (game.trace if game else [])

    def run_horizon(self, policy: Policy, slots: int) -> HorizonResult:
        """Slots run strictly in order from xi(0) = 0"""
        if slots < 1:
            raise ConfigError(f"slots must be >= 1 (got {slots})")
        policy = Policy.parse(policy) if not isinstance(policy, Policy) else policy
        state = self.initial_state()
        metrics, trace = [], []
        for _ in range(slots):
            requests = sample_requests(self.scenario, state.slot)
            state, slot_metrics, slot_trace = self.run_slot(state, requests, policy)
            self.guard.check_slot(self.scenario, slot_metrics)
            log_slot_done(policy.value, slot_metrics.slot, slot_metrics.system_delay_s,
                          slot_metrics.total_loss, slot_metrics.xi, slot_metrics.welfare)
            metrics.append(slot_metrics)
            trace.extend(slot_trace)

        summary = summarize(metrics)
        summary['constraint_violations'] = len(self.guard.violations)
        self.guard.log_stats()
        log_run_summary(policy.value, self.scenario.seed, slots, summary['avg_system_delay_s'],
                        summary['privacy_loss_pct'], summary['final_xi'], summary['constraint_violations'])
        return HorizonResult(policy=policy.value, seed=self.scenario.seed, metrics=metrics, trace=trace,
                             summary=summary, violations=list(self.guard.violations))


def summarize(metrics: Sequence[SlotMetrics]) -> Dict:
    delays = np.array([m.system_delay_s for m in metrics])
    md_delays = np.array([rec.delay.total_s for m in metrics for rec in m.records])
    total_loss = float(sum(m.total_loss for m in metrics))
    total_items = int(sum(m.total_items for m in metrics))
    excess = np.array([m.total_loss - m.total_budget for m in metrics])
    iterations = np.array([m.game_iterations for m in metrics])
    return {
        'slots': len(metrics),
        'avg_system_delay_s': float(delays.mean()),
        'avg_md_delay_s': float(md_delays.mean()),
        'privacy_loss_pct': 100.0 * total_loss / total_items if total_items else 0.0,
        'total_loss': total_loss,
        'total_items': total_items,
        'final_xi': float(metrics[-1].xi),
        'time_avg_excess': float(excess.mean()),
        'total_budget': float(metrics[-1].total_budget),
        'mean_game_iterations': float(iterations.mean()),
        'max_game_iterations': int(iterations.max()),
        'capped_slots': int(sum(m.game_capped for m in metrics)),
        'coalition_evaluations': int(sum(m.coalition_evaluations for m in metrics)),
        'cache_hits': int(sum(m.cache_hits for m in metrics)),
        'objective_evaluations': int(sum(m.objective_evaluations for m in metrics)),
        'theta_warnings': int(sum(m.theta_warnings for m in metrics)),
        'theta_bound_exceeded': int(sum(not m.drift.theta_bound_holds for m in metrics)),
        'streamed_requests': int(sum(m.streamed for m in metrics)),
        'constraint_violations': 0,
    }


def replay_slot(sim: EdgeSimulator, state: SlotState, metrics: SlotMetrics) -> Dict[str, float]:
    """
    Recompute a slot's totals from its logged decisions alone

    state is the SlotState the slot started from (previous deployment, queue).
    """
    sc = sim.scenario
    index = {md_id: i for i, md_id in enumerate(sc.md_ids)}
    server_index = {server_id: m for m, server_id in enumerate(sc.server_ids)}
    service_index = {model_id: j for j, model_id in enumerate(sc.service_ids)}
    requests = [Request(md_id=rec.md_id, model_id=rec.model_id, d_items=rec.d_items,
                        md_index=index[rec.md_id], service_index=service_index[rec.model_id])
                for rec in metrics.records]
    assignment = np.array([server_index[rec.server_id] for rec in sorted(metrics.records, key=lambda r: index[r.md_id])])
    deployment = [frozenset(service_index[mid] for mid in metrics.deployments[sid]) for sid in sc.server_ids]
    z = np.array([rec.z for rec in sorted(metrics.records, key=lambda r: index[r.md_id])])
    paths = [rec.path for rec in sorted(metrics.records, key=lambda r: index[r.md_id])]
    gains = slot_gains(sc.channel, sc.devices, sc.servers, metrics.slot)
    records = sim.measure(state, gains, requests, assignment, deployment, z, paths)
    losses = np.array([rec.loss for rec in records])
    tau = system_delay(rec.delay for rec in records)
    weights = state.queue.weights(len(sc.devices))
    return {
        'system_delay_s': tau,
        'total_loss': float(losses.sum()),
        'objective': slot_objective(tau, losses, sc.budgets, weights, sim.settings.alpha, state.queue.theta),
        'xi': queue_update(state.queue, losses, sc.budgets).xi,
    }


# ═══════════════════════════════════════════════════════════
# HORIZON / SWEEP ENTRY POINTS
# ═══════════════════════════════════════════════════════════

def run_slot(state: SlotState, requests: Sequence[Request], policy: Policy,
             sim: EdgeSimulator) -> Tuple[SlotState, SlotMetrics]:
    new_state, metrics, _ = sim.run_slot(state, requests, policy)
    return new_state, metrics


def run_horizon(scenario: Scenario, policy, slots: int, config: Optional[Dict] = None) -> HorizonResult:
    settings = SimulationSettings.from_config(config or {}, scenario.seed)
    return EdgeSimulator(scenario, settings, ConstraintGuard(config or {})).run_horizon(Policy.parse(policy), slots)


SWEEP_METRICS = ['avg_system_delay_s', 'avg_md_delay_s', 'privacy_loss_pct', 'final_xi',
                 'time_avg_excess', 'mean_game_iterations']


def _sweep_point(template: Dict, base_dir: Path, axis: str, value, policy: str, seed: int,
                 slots: int, config: Dict) -> Dict:
    source = template if axis == 'alpha' else with_overrides(template, axis, value)
    run_config = config
    if axis == 'alpha':
        run_config = {**config, 'optimizer': {**config.get('optimizer', {}), 'alpha': float(value)}}
    scenario = build_scenario(source, seed, base_dir)
    result = run_horizon(scenario, policy, slots, run_config)
    log_sweep_point(axis, value, policy, seed, result.summary['avg_system_delay_s'],
                    result.summary['privacy_loss_pct'])
    row = {'row': 'run', 'axis': axis, 'value': str(value), 'policy': result.policy, 'seed': seed}
    row.update({k: result.summary[k] for k in SWEEP_METRICS})
    return row


def run_sweep(template: Dict, axis: str, values: Sequence, policies: Sequence[str], seeds: Sequence[int],
              slots: int, config: Optional[Dict] = None, base_dir='.', workers: int = 1) -> pd.DataFrame:
    """
    Cross product of (value, policy, seed) runs plus mean/std rows per (value, policy)

    Runs share no mutable state, so they fan out over a thread pool.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis '{axis}' (expected one of {SWEEP_AXES})")
    if not values:
        raise ConfigError("sweep needs at least one value")
    config = config or {}
    for policy in policies:
        Policy.parse(policy)
    points = [(v, p, s) for v in values for p in policies for s in seeds]

    with ThreadPoolExecutor(max_workers=max(1, int(workers)), thread_name_prefix="sweep") as pool:
        rows = list(pool.map(lambda pt: _sweep_point(template, Path(base_dir), axis, pt[0], pt[1], pt[2],
                                                     slots, config), points))

    runs = pd.DataFrame(rows)
    grouped = runs.groupby(['axis', 'value', 'policy'], sort=False)[SWEEP_METRICS]
    aggregates = []
    for stat in ('mean', 'std'):
        table = grouped.agg(stat).reset_index()
        table.insert(0, 'row', stat)
        table['seed'] = np.nan
        aggregates.append(table)
    return pd.concat([runs] + aggregates, ignore_index=True)[['row', 'axis', 'value', 'policy', 'seed'] + SWEEP_METRICS]
