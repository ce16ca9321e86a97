"""
Deployment Optimizer - which services a coalition's server caches (storage knapsack)

f(V) is the expected coalition utility: every member's request is served with its
optimal partition when the service is in V and that beats the fallback path,
through the fallback path otherwise.
Each member/service pair contributes independently, so f is additive over services
and the marginal gain of a service does not depend on V.
"""
from dataclasses import dataclass
from itertools import combinations
from typing import FrozenSet, Iterable, List, Sequence, Tuple

import numpy as np

from partition_opt import SlotContext


BRUTE_FORCE_LIMIT = 20


class GuardError(ValueError):
    """Exhaustive oracle called on an instance too large to enumerate"""


@dataclass(frozen=True)
class DeploymentDecision:
    server_id: str
    deployed: FrozenSet[str]
    used_bytes: float
    value: float            # f(V) - f(empty set)
    utility: float          # f(V)
    indices: Tuple[int, ...] = ()


@dataclass(frozen=True)
class ServiceTable:
    """Served and fallback objectives of one coalition, rows = members, columns = services"""
    server_id: str
    capacity: float
    model_ids: Tuple[str, ...]
    sizes: np.ndarray           # (L,) bytes
    served: np.ndarray          # (k, L), +inf where no partition point is admissible
    fallback: np.ndarray        # (k, L)
    probs: np.ndarray           # (k, L)

    def effective_served(self) -> np.ndarray:
        """Cached or not, a member falls back when no admissible partition point beats the fallback path"""
        return np.minimum(self.served, self.fallback)

    def gains(self) -> np.ndarray:
        """(L,) f({l}) - f(empty set): expected objective saved by caching l"""
        diff = self.fallback - self.effective_served()
        return np.where(self.probs > 0, self.probs * diff, 0.0).sum(axis=0)

    def base_utility(self) -> float:
        return -float(np.where(self.probs > 0, self.probs * self.fallback, 0.0).sum())


def service_table(ctx: SlotContext, server_idx: int, server_id: str, members: Sequence[int],
                  model_ids: Sequence[str]) -> ServiceTable:
    members = np.asarray(members, dtype=int)
    return ServiceTable(
        server_id=server_id,
        capacity=float(ctx.capacities[server_idx]),
        model_ids=tuple(model_ids),
        sizes=ctx.service_bytes,
        served=ctx.served_objective(server_idx, members),
        fallback=ctx.fallback_objective(server_idx, members),
        probs=ctx.request_probs[members],
    )


def deployment_value(table: ServiceTable, candidate: Iterable[int]) -> float:
    """f(V): expected coalition utility (negated objective) with V cached; feasibility not checked"""
    cached = np.zeros(len(table.model_ids), dtype=bool)
    cached[list(candidate)] = True
    objective = np.where(cached[None, :], table.effective_served(), table.fallback)
    return -float(np.where(table.probs > 0, table.probs * objective, 0.0).sum())


def _decision(table: ServiceTable, chosen: Iterable[int], gains: np.ndarray) -> DeploymentDecision:
    chosen = tuple(sorted(int(j) for j in chosen))
    value = float(sum(gains[j] for j in chosen))
    return DeploymentDecision(
        server_id=table.server_id,
        deployed=frozenset(table.model_ids[j] for j in chosen),
        used_bytes=float(sum(table.sizes[j] for j in chosen)),
        value=value,
        utility=table.base_utility() + value,
        indices=chosen,
    )


def _ratio_order(table: ServiceTable, gains: np.ndarray) -> List[int]:
    """Cost-effectiveness order, ties by model_id"""
    ratios = np.where(table.sizes > 0, gains / np.where(table.sizes > 0, table.sizes, 1.0),
                      np.where(gains > 0, np.inf, 0.0))
    return sorted(range(len(gains)), key=lambda j: (-ratios[j], table.model_ids[j]))


def _complete(order: List[int], gains: np.ndarray, sizes: np.ndarray, room: float,
              chosen: List[int], gain_ceiling: float) -> List[int]:
    # Iterative argmax over a fixed ratio order: an item that does not fit now never will
    picked = list(chosen)
    taken = set(chosen)
    for j in order:
        if gains[j] <= 0:
            break
        if j in taken or gains[j] > gain_ceiling:
            continue
        if sizes[j] <= room:
            picked.append(j)
            room -= sizes[j]
    return picked


def greedy_deploy(table: ServiceTable, seed_size: int = 2) -> DeploymentDecision:
    """
    Cost-effectiveness greedy under the storage constraint

    Repeatedly caches the feasible service with the largest gain / D_l until no
    feasible service has a positive gain. With seed_size > 0 the greedy is also
    started from every feasible seed set of up to seed_size services (completion
    limited to services worth no more than the cheapest seed item) and the best
    result is kept; seed_size=0 is the plain greedy.
    """
    if table.capacity < 0:
        raise ValueError(f"capacity must be >= 0 (got {table.capacity})")
    gains = table.gains()
    sizes = table.sizes
    order = _ratio_order(table, gains)

    best = _complete(order, gains, sizes, table.capacity, [], np.inf)
    best_value = float(sum(gains[j] for j in best))

    useful = [j for j in order if gains[j] > 0 and sizes[j] <= table.capacity]
    for k in range(1, seed_size + 1):
        for seed in combinations(sorted(useful, key=lambda j: table.model_ids[j]), k):
            used = float(sum(sizes[j] for j in seed))
            if used > table.capacity:
                continue
            picked = _complete(order, gains, sizes, table.capacity - used, list(seed),
                               min(gains[j] for j in seed))
            value = float(sum(gains[j] for j in picked))
            if value > best_value:
                best, best_value = picked, value

    return _decision(table, best, gains)


def brute_force_deploy(table: ServiceTable) -> DeploymentDecision:
    """Exact maximiser of f over all storage-feasible sets; ties to the lexicographically smallest id set"""
    n_models = len(table.model_ids)
    if n_models > BRUTE_FORCE_LIMIT:
        raise GuardError(f"brute force over {n_models} services exceeds the limit of {BRUTE_FORCE_LIMIT}")

    best: Tuple[int, ...] = ()
    best_value = deployment_value(table, ())
    best_key: Tuple[str, ...] = ()
    for k in range(1, n_models + 1):
        for subset in combinations(range(n_models), k):
            if float(sum(table.sizes[j] for j in subset)) > table.capacity:
                continue
            value = deployment_value(table, subset)
            key = tuple(sorted(table.model_ids[j] for j in subset))
            if value > best_value or (value == best_value and key < best_key):
                best, best_value, best_key = subset, value, key

    gains = table.gains()
    decision = _decision(table, best, gains)
    # Report the exactly evaluated utility rather than the gain sum
    base = deployment_value(table, ())
    return DeploymentDecision(server_id=decision.server_id, deployed=decision.deployed,
                              used_bytes=decision.used_bytes, value=best_value - base,
                              utility=best_value, indices=decision.indices)
