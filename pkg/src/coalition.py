"""
Coalition Game - MD-to-server association by switch and exchange operations

One coalition per server. A move is accepted iff total welfare rises by more
than improvement_epsilon. Random proposals run until 2*N*M consecutive
rejections, then deterministic sweeps certify that no single switch or pairwise
exchange improves welfare.
"""
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from deploy_opt import DeploymentDecision, GuardError, greedy_deploy, service_table
from partition_opt import SlotContext
from privacy import utility_from_objectives


STABILITY_CHECK_LIMIT = 12


@dataclass(frozen=True)
class GameConfig:
    exchange_period: int = 10           # G: one exchange proposal every G switch proposals
    max_iterations: int = 10_000
    improvement_epsilon: float = 1e-9
    seed: int = 0

    def __post_init__(self):
        if self.exchange_period < 1:
            raise ValueError(f"exchange_period must be >= 1 (got {self.exchange_period})")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1 (got {self.max_iterations})")
        if not self.improvement_epsilon > 0:
            raise ValueError(f"improvement_epsilon must be > 0 (got {self.improvement_epsilon})")

    @classmethod
    def from_config(cls, config: Dict, seed: int = 0) -> 'GameConfig':
        game = config.get('game', {})
        return cls(
            exchange_period=int(game.get('exchange_period', 10)),
            max_iterations=int(game.get('max_iterations', 10_000)),
            improvement_epsilon=float(game.get('improvement_epsilon', 1e-9)),
            seed=int(seed),
        )


@dataclass(frozen=True)
class UtilitySettings:
    """How a coalition's per-member objectives fold into its utility"""
    average: bool = True            # divide by member count
    include_theta: bool = True
    theta: float = 0.0
    seed_size: int = 2


@dataclass(frozen=True)
class CoalitionResult:
    server_idx: int
    members: FrozenSet[int]
    utility: float
    deployment: Optional[DeploymentDecision]
    objectives: Dict[int, float] = field(default_factory=dict)
    z: Dict[int, int] = field(default_factory=dict)          # -1 marks the fallback path
    served: Dict[int, bool] = field(default_factory=dict)


@dataclass(frozen=True)
class PartitionStructure:
    coalitions: Tuple[FrozenSet[int], ...]
    utilities: Tuple[float, ...]

    @property
    def welfare(self) -> float:
        return float(sum(self.utilities))

    @property
    def n_devices(self) -> int:
        return sum(len(c) for c in self.coalitions)

    @classmethod
    def from_assignment(cls, assignment: Sequence[int], n_servers: int) -> 'PartitionStructure':
        groups = [set() for _ in range(n_servers)]
        for md, server in enumerate(assignment):
            groups[int(server)].add(md)
        return cls(coalitions=tuple(frozenset(g) for g in groups), utilities=(0.0,) * n_servers)

    def assignment(self) -> np.ndarray:
        out = np.full(self.n_devices, -1, dtype=int)
        for server, members in enumerate(self.coalitions):
            for md in members:
                out[md] = server
        return out

    def server_of(self, md: int) -> int:
        for server, members in enumerate(self.coalitions):
            if md in members:
                return server
        raise KeyError(f"MD {md} is not in any coalition")

    def is_valid(self, n_devices: int) -> Tuple[bool, str]:
        seen = set()
        for server, members in enumerate(self.coalitions):
            overlap = seen & members
            if overlap:
                return False, f"MDs {sorted(overlap)} in more than one coalition (server {server})"
            seen |= members
        if seen != set(range(n_devices)):
            return False, f"MDs {sorted(set(range(n_devices)) - seen)} not associated"
        return True, "OK"

    def replaced(self, updates: Dict[int, Tuple[FrozenSet[int], float]]) -> 'PartitionStructure':
        coalitions = list(self.coalitions)
        utilities = list(self.utilities)
        for server, (members, utility) in updates.items():
            coalitions[server] = members
            utilities[server] = utility
        return PartitionStructure(coalitions=tuple(coalitions), utilities=tuple(utilities))


@dataclass(frozen=True)
class GameStep:
    slot: int
    iteration: int
    phase: str          # random | sweep
    move: str           # switch | exchange
    md: int
    other: int          # target server (switch) or partner MD (exchange)
    accepted: bool
    welfare: float


@dataclass
class GameResult:
    partition: PartitionStructure
    trace: List[GameStep]
    iterations: int
    accepted: int
    capped: bool
    sweeps: int


@dataclass
class StabilityReport:
    switches_checked: int = 0
    exchanges_checked: int = 0
    improving: List[Tuple] = field(default_factory=list)

    @property
    def stable(self) -> bool:
        return not self.improving


class CoalitionEvaluator:
    """
    Utility of arbitrary (server, member set) pairs within one slot

    Runs the deployment greedy then reads each member's optimal partition from
    the slot tables. Results are cached per (server, members) unless use_cache
    is False.
    """

    def __init__(self, ctx: SlotContext, server_ids: Sequence[str], service_ids: Sequence[str],
                 settings: UtilitySettings = UtilitySettings(), use_cache: bool = True):
        self.ctx = ctx
        self.server_ids = tuple(server_ids)
        self.service_ids = tuple(service_ids)
        self.settings = settings
        self.use_cache = use_cache
        self._cache: Dict[Tuple[int, FrozenSet[int]], CoalitionResult] = {}
        self.evaluations = 0
        self.cache_hits = 0
        self.objective_evaluations = 0
        self._layers_per_service = int(ctx.family_layers[ctx.service_family].sum())

    def evaluate(self, server_idx: int, members: FrozenSet[int]) -> CoalitionResult:
        members = frozenset(members)
        key = (server_idx, members)
        if self.use_cache and key in self._cache:
            self.cache_hits += 1
            return self._cache[key]
        result = self._evaluate(server_idx, members)
        self.evaluations += 1
        if self.use_cache:
            self._cache[key] = result
        return result

    def _evaluate(self, server_idx: int, members: FrozenSet[int]) -> CoalitionResult:
        if not members:
            return CoalitionResult(server_idx=server_idx, members=members, utility=0.0, deployment=None)

        ctx = self.ctx
        rows = np.array(sorted(members), dtype=int)
        self.objective_evaluations += len(rows) * self._layers_per_service

        table = service_table(ctx, server_idx, self.server_ids[server_idx], rows, self.service_ids)
        decision = greedy_deploy(table, self.settings.seed_size)

        cached = np.zeros(len(self.service_ids), dtype=bool)
        cached[list(decision.indices)] = True
        requested = ctx.request_service[rows]
        served_obj = table.served[np.arange(len(rows)), requested]
        fallback_obj = table.fallback[np.arange(len(rows)), requested]
        served = cached[requested] & (served_obj <= fallback_obj)
        objective = np.where(served, served_obj, fallback_obj)
        z_points = ctx.partition_points(server_idx, rows)[np.arange(len(rows)), requested]

        theta = self.settings.theta if self.settings.include_theta else 0.0
        utility = utility_from_objectives(objective, theta, self.settings.average)

        return CoalitionResult(
            server_idx=server_idx,
            members=members,
            utility=utility,
            deployment=decision,
            objectives={int(md): float(o) for md, o in zip(rows, objective)},
            z={int(md): int(z) if ok else -1 for md, z, ok in zip(rows, z_points, served)},
            served={int(md): bool(ok) for md, ok in zip(rows, served)},
        )


def evaluate_partition(p: PartitionStructure, evaluator: CoalitionEvaluator) -> PartitionStructure:
    """Fill in every coalition utility; empty coalitions are worth 0"""
    utilities = tuple(evaluator.evaluate(server, members).utility
                      for server, members in enumerate(p.coalitions))
    return PartitionStructure(coalitions=p.coalitions, utilities=utilities)


def random_partition(n_devices: int, n_servers: int, rng: np.random.Generator) -> PartitionStructure:
    return PartitionStructure.from_assignment(rng.integers(n_servers, size=n_devices), n_servers)


def try_switch(p: PartitionStructure, md: int, from_idx: int, to_idx: int,
               evaluator: CoalitionEvaluator, epsilon: float = 1e-9) -> Tuple[bool, PartitionStructure]:
    """Move md from one coalition to another iff welfare rises by more than epsilon"""
    if md not in p.coalitions[from_idx]:
        raise ValueError(f"MD {md} is not in coalition {from_idx}")
    if from_idx == to_idx:
        raise ValueError("switch needs two different coalitions")
    new_from = p.coalitions[from_idx] - {md}
    new_to = p.coalitions[to_idx] | {md}
    u_from = evaluator.evaluate(from_idx, new_from).utility
    u_to = evaluator.evaluate(to_idx, new_to).utility
    gain = (u_from + u_to) - (p.utilities[from_idx] + p.utilities[to_idx])
    if gain > epsilon:
        return True, p.replaced({from_idx: (new_from, u_from), to_idx: (new_to, u_to)})
    return False, p


def try_exchange(p: PartitionStructure, md_a: int, md_b: int,
                 evaluator: CoalitionEvaluator, epsilon: float = 1e-9) -> Tuple[bool, PartitionStructure]:
    """Swap two MDs of different coalitions iff welfare rises by more than epsilon"""
    a_idx, b_idx = p.server_of(md_a), p.server_of(md_b)
    if a_idx == b_idx:
        raise ValueError(f"MDs {md_a} and {md_b} are in the same coalition")
    new_a = (p.coalitions[a_idx] - {md_a}) | {md_b}
    new_b = (p.coalitions[b_idx] - {md_b}) | {md_a}
    u_a = evaluator.evaluate(a_idx, new_a).utility
    u_b = evaluator.evaluate(b_idx, new_b).utility
    gain = (u_a + u_b) - (p.utilities[a_idx] + p.utilities[b_idx])
    if gain > epsilon:
        return True, p.replaced({a_idx: (new_a, u_a), b_idx: (new_b, u_b)})
    return False, p


def _random_exchange_pair(p: PartitionStructure, rng: np.random.Generator) -> Optional[Tuple[int, int]]:
    occupied = [s for s, members in enumerate(p.coalitions) if members]
    if len(occupied) < 2:
        return None
    first, second = rng.choice(len(occupied), size=2, replace=False)
    md_a = sorted(p.coalitions[occupied[first]])[rng.integers(len(p.coalitions[occupied[first]]))]
    md_b = sorted(p.coalitions[occupied[second]])[rng.integers(len(p.coalitions[occupied[second]]))]
    return int(md_a), int(md_b)


def run_game(initial: PartitionStructure, cfg: GameConfig, evaluator: CoalitionEvaluator,
             rng: np.random.Generator, slot: int = 0) -> GameResult:
    """
    Switch/exchange dynamics from `initial` until a full sweep accepts nothing

    max_iterations bounds the number of proposals; reaching it is reported
    through GameResult.capped, not raised.
    """
    p = evaluate_partition(initial, evaluator)
    n_devices, n_servers = p.n_devices, len(p.coalitions)
    eps = cfg.improvement_epsilon
    stall_limit = 2 * n_devices * n_servers

    trace: List[GameStep] = []
    iteration = 0
    accepted_total = 0
    sweeps = 0
    rejections = 0
    switches_since_exchange = 0

    def record(phase, move, md, other, accepted):
        trace.append(GameStep(slot=slot, iteration=iteration, phase=phase, move=move, md=md,
                              other=other, accepted=accepted, welfare=p.welfare))

    # Randomised phase
    while n_servers > 1 and n_devices > 0 and rejections < stall_limit and iteration < cfg.max_iterations:
        iteration += 1
        md = int(rng.integers(n_devices))
        source = p.server_of(md)
        target = int(rng.integers(n_servers - 1))
        target += target >= source
        accepted, p = try_switch(p, md, source, target, evaluator, eps)
        record('random', 'switch', md, target, accepted)
        accepted_total += accepted
        rejections = 0 if accepted else rejections + 1
        switches_since_exchange += 1

        if switches_since_exchange >= cfg.exchange_period and iteration < cfg.max_iterations:
            switches_since_exchange = 0
            pair = _random_exchange_pair(p, rng)
            if pair is not None:
                iteration += 1
                accepted, p = try_exchange(p, pair[0], pair[1], evaluator, eps)
                record('random', 'exchange', pair[0], pair[1], accepted)
                accepted_total += accepted
                rejections = 0 if accepted else rejections + 1

    # Deterministic sweeps: all switches, then all exchange pairs; a cap hit mid-sweep leaves stability uncertified
    switch_moves = [(md, target) for md in range(n_devices) for target in range(n_servers)]
    exchange_moves = [(a, b) for a in range(n_devices) for b in range(a + 1, n_devices)]
    capped = iteration >= cfg.max_iterations
    while not capped:
        sweeps += 1
        improved = False
        for md, target in switch_moves:
            source = p.server_of(md)
            if target == source:
                continue
            if iteration >= cfg.max_iterations:
                capped = True
                break
            iteration += 1
            accepted, p = try_switch(p, md, source, target, evaluator, eps)
            record('sweep', 'switch', md, target, accepted)
            accepted_total += accepted
            improved |= accepted
        for md_a, md_b in ([] if capped else exchange_moves):
            if p.server_of(md_a) == p.server_of(md_b):
                continue
            if iteration >= cfg.max_iterations:
                capped = True
                break
            iteration += 1
            accepted, p = try_exchange(p, md_a, md_b, evaluator, eps)
            record('sweep', 'exchange', md_a, md_b, accepted)
            accepted_total += accepted
            improved |= accepted
        if not improved:
            break

    return GameResult(partition=p, trace=trace, iterations=iteration, accepted=accepted_total,
                      capped=capped, sweeps=sweeps)


def check_d_stable(p: PartitionStructure, evaluator: CoalitionEvaluator,
                   epsilon: float = 1e-9) -> StabilityReport:
    """Enumerate every single switch and pairwise exchange; list the improving ones"""
    n_devices = p.n_devices
    if n_devices > STABILITY_CHECK_LIMIT:
        raise GuardError(f"stability check over {n_devices} MDs exceeds the limit of {STABILITY_CHECK_LIMIT}")
    p = evaluate_partition(p, evaluator)
    report = StabilityReport()
    n_servers = len(p.coalitions)

    for md in range(n_devices):
        source = p.server_of(md)
        for target in range(n_servers):
            if target == source:
                continue
            report.switches_checked += 1
            accepted, moved = try_switch(p, md, source, target, evaluator, epsilon)
            if accepted:
                report.improving.append(('switch', md, target, moved.welfare - p.welfare))

    for md_a in range(n_devices):
        for md_b in range(md_a + 1, n_devices):
            if p.server_of(md_a) == p.server_of(md_b):
                continue
            report.exchanges_checked += 1
            accepted, moved = try_exchange(p, md_a, md_b, evaluator, epsilon)
            if accepted:
                report.improving.append(('exchange', md_a, md_b, moved.welfare - p.welfare))
    return report
