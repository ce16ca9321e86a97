"""
Privacy Accounting - privacy loss, Lyapunov virtual queue, drift-plus-penalty objective
"""
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from sim_logger import log_theta_warning


class QueueContractError(ValueError):
    """Per-MD loss and budget lists do not line up"""


@dataclass(frozen=True)
class PrivacyQueue:
    """
    Aggregate virtual queue xi (always >= 0) and the constant theta = 1/2 sum budget^2

    per_md holds one queue per MD when the per-MD variant is enabled.
    """
    xi: float
    theta: float
    per_md: Optional[np.ndarray] = None

    @classmethod
    def initial(cls, budgets: Sequence[float], per_md_queues: bool = False) -> 'PrivacyQueue':
        budgets = np.asarray(budgets, dtype=float)
        per_md = np.zeros(len(budgets)) if per_md_queues else None
        return cls(xi=0.0, theta=0.5 * float(np.sum(budgets ** 2)), per_md=per_md)

    def weights(self, n_devices: int) -> np.ndarray:
        """Queue weight applied to each MD's budget slack in the objective"""
        if self.per_md is not None:
            return np.array(self.per_md, dtype=float)
        return np.full(n_devices, self.xi)


@dataclass(frozen=True)
class DriftReport:
    """One slot of Lyapunov drift with L(xi) = xi^2 / 2 and S = sum(loss - budget)"""
    xi_before: float
    xi_after: float
    excess: float
    drift: float
    exact_bound: float      # xi S + S^2 / 2, always holds
    theta_bound: float      # xi S + theta
    theta_bound_holds: bool


def privacy_loss(d_items: float, possibility: float, associated: bool = True) -> float:
    """Possibility-weighted items exposed by one request"""
    if d_items < 0:
        raise ValueError(f"d_items must be >= 0 (got {d_items})")
    return d_items * possibility if associated else 0.0


def _check_lengths(losses, budgets):
    losses = np.asarray(losses, dtype=float)
    budgets = np.asarray(budgets, dtype=float)
    if losses.shape != budgets.shape:
        raise QueueContractError(f"{losses.size} losses for {budgets.size} budgets")
    return losses, budgets


def queue_update(q: PrivacyQueue, losses: Sequence[float], budgets: Sequence[float]) -> PrivacyQueue:
    """xi' = max(0, xi + sum(loss) - sum(budget)); per-MD queues updated alongside"""
    losses, budgets = _check_lengths(losses, budgets)
    xi = max(0.0, q.xi + float(np.sum(losses)) - float(np.sum(budgets)))
    per_md = None
    if q.per_md is not None:
        if q.per_md.shape != losses.shape:
            raise QueueContractError(f"{losses.size} losses for {q.per_md.size} per-MD queues")
        per_md = np.maximum(0.0, q.per_md + losses - budgets)
    return replace(q, xi=xi, per_md=per_md)


def slot_objective(total_delay_s: float, losses: Sequence[float], budgets: Sequence[float],
                   xi, alpha: float, theta: float = 0.0) -> float:
    """
    alpha * delay - xi * sum(budget - loss) + theta

    xi may be a per-MD weight vector (per-MD queue variant).
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be > 0 (got {alpha})")
    losses, budgets = _check_lengths(losses, budgets)
    slack = budgets - losses
    weight = np.broadcast_to(np.asarray(xi, dtype=float), slack.shape)
    return float(alpha * total_delay_s - np.dot(weight, slack) + theta)


def coalition_utility(delays: Sequence[float], losses: Sequence[float], budgets: Sequence[float],
                      xi, alpha: float, theta: float = 0.0, average: bool = True) -> float:
    """
    (-alpha sum delay + xi sum(budget - loss) - theta) / |F|

    average=False returns the numerator only. An empty coalition is worth 0.
    """
    losses, budgets = _check_lengths(losses, budgets)
    delays = np.asarray(delays, dtype=float)
    if delays.shape != losses.shape:
        raise QueueContractError(f"{delays.size} delays for {losses.size} losses")
    weight = np.broadcast_to(np.asarray(xi, dtype=float), losses.shape)
    objectives = alpha * delays - weight * (budgets - losses)
    return utility_from_objectives(objectives, theta, average)


def utility_from_objectives(objectives: Sequence[float], theta: float = 0.0, average: bool = True) -> float:
    """Same utility from per-member objectives alpha delay - xi (budget - loss)"""
    objectives = np.asarray(objectives, dtype=float)
    if objectives.size == 0:
        return 0.0
    numerator = -float(objectives.sum()) - theta
    return numerator / objectives.size if average else numerator


def drift_report(q_before: PrivacyQueue, q_after: PrivacyQueue,
                 losses: Sequence[float], budgets: Sequence[float]) -> DriftReport:
    losses, budgets = _check_lengths(losses, budgets)
    excess = float(np.sum(losses - budgets))
    drift = 0.5 * (q_after.xi ** 2 - q_before.xi ** 2)
    theta_bound = q_before.xi * excess + q_before.theta
    return DriftReport(
        xi_before=q_before.xi,
        xi_after=q_after.xi,
        excess=excess,
        drift=drift,
        exact_bound=q_before.xi * excess + 0.5 * excess ** 2,
        theta_bound=theta_bound,
        theta_bound_holds=drift <= theta_bound + 1e-9 * max(1.0, abs(theta_bound)),
    )


def check_theta_normalisation(slot: int, md_ids: Sequence[str], losses: Sequence[float],
                              budgets: Sequence[float]) -> int:
    """Warn for every MD whose loss exceeds its budget squared; returns the count"""
    losses, budgets = _check_lengths(losses, budgets)
    flagged = np.flatnonzero(losses > budgets ** 2)
    for i in flagged:
        log_theta_warning(slot, md_ids[i], float(losses[i]), float(budgets[i]))
    return int(flagged.size)
