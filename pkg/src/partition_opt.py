"""
Partition Optimizer - exhaustive partition-point search per MD

obj(z) = alpha * delay(z) - w * (budget - loss(z))

Resource shares come from the coalition size fixed at evaluation time.
SlotContext precomputes the optimum for every (server, coalition size, MD, model
family) of a slot so coalition evaluations become table lookups.
"""
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from catalog import ModelProfile, possibility_vector, split
from delay import BITS_PER_BYTE, cloud_fetch_s, delay_components, pipeline_delay_grid
from privacy import privacy_loss
from topology import (DEFAULT_NOISE_PSD_DBM_HZ, EdgeServer, MobileDevice, SlotGains,
                      link_rate, shared_bandwidth, shared_compute)


@dataclass(frozen=True)
class PartitionChoice:
    md_id: str
    model_id: str
    z_star: int
    objective_at_z: float


@dataclass(frozen=True)
class ObjectiveContext:
    """What a single MD's objective needs beyond the MD/server/model triple"""
    alpha: float
    weight: float                     # queue weight xi (or xi_n)
    n_associated: int
    gains: Tuple[float, float]        # (up, down)
    deployed_prev: bool = True
    loss_cap: bool = False            # enforce loss <= budget within the slot
    mode: str = 'auto'
    noise_psd_dbm_hz: float = DEFAULT_NOISE_PSD_DBM_HZ


@dataclass
class EvaluationCounter:
    objective_evaluations: int = 0


def per_md_objective(md: MobileDevice, server: EdgeServer, model: ModelProfile, z: int,
                     d_items: int, ctx: ObjectiveContext) -> float:
    """Scalar path: delay_components + privacy_loss at one z (theta excluded)"""
    delay = delay_components(md, server, model, z, d_items, deployed_now=True, deployed_prev=ctx.deployed_prev,
                             n_associated=ctx.n_associated, gains=ctx.gains,
                             noise_psd_dbm_hz=ctx.noise_psd_dbm_hz, mode=ctx.mode)
    loss = privacy_loss(d_items, split(model, z, ctx.mode).possibility)
    return ctx.alpha * delay.total_s - ctx.weight * (md.privacy_budget - loss)


def objective_vector(md: MobileDevice, server: EdgeServer, model: ModelProfile,
                     d_items: int, ctx: ObjectiveContext) -> np.ndarray:
    """obj(z) for z = 0..K; z values over the loss cap are +inf when the cap is on"""
    bandwidth = shared_bandwidth(server, ctx.n_associated)
    rate_up = link_rate(bandwidth, md.tx_power_dbm, ctx.gains[0], ctx.noise_psd_dbm_hz)
    rate_down = link_rate(bandwidth, server.tx_power_dbm, ctx.gains[1], ctx.noise_psd_dbm_hz)
    delay = pipeline_delay_grid(model, d_items, md.compute_flops, rate_up, rate_down,
                                shared_compute(server, ctx.n_associated))
    if not ctx.deployed_prev:
        delay = delay + cloud_fetch_s(model, server)
    loss = d_items * possibility_vector(model, ctx.mode)
    obj = ctx.alpha * delay - ctx.weight * (md.privacy_budget - loss)
    if ctx.loss_cap:
        obj = np.where(loss > md.privacy_budget, np.inf, obj)
    return obj


def optimal_partition(md: MobileDevice, server: EdgeServer, model: ModelProfile, d_items: int,
                      ctx: ObjectiveContext, counter: Optional[EvaluationCounter] = None) -> PartitionChoice:
    """
    Exact argmin over z in 0..K, ties toward the smaller z

    With the loss cap on and no feasible z, z_star is -1 and the objective +inf:
    the caller must use the fallback path.
    """
    obj = objective_vector(md, server, model, d_items, ctx)
    if counter is not None:
        counter.objective_evaluations += obj.size
    z_star = int(np.argmin(obj))
    if not np.isfinite(obj[z_star]):
        return PartitionChoice(md_id=md.md_id, model_id=model.model_id, z_star=-1, objective_at_z=float('inf'))
    return PartitionChoice(md_id=md.md_id, model_id=model.model_id, z_star=z_star,
                           objective_at_z=float(obj[z_star]))


# ═══════════════════════════════════════════════════════════
# SLOT TABLES
# ═══════════════════════════════════════════════════════════

@dataclass
class SlotContext:
    """
    Everything a coalition evaluation needs for one slot

    Table axes: [server, coalition size - 1, md, family]. Objectives exclude
    the cloud fetch of served models, which depends on the service (see
    served_objective).
    """
    slot: int
    alpha: float
    weights: np.ndarray               # (N,)
    budgets: np.ndarray               # (N,)
    d_items: np.ndarray               # (N,)
    request_service: np.ndarray       # (N,) service index
    request_probs: np.ndarray         # (N, L) p used by the deployment optimizer
    service_family: np.ndarray        # (L,)
    service_bytes: np.ndarray         # (L,)
    capacities: np.ndarray            # (M,)
    prev_deployment: Tuple[frozenset, ...]
    fetch_s: np.ndarray               # (M, L) cloud -> edge time of each service
    best: np.ndarray                  # (M, N, N, P) min_z obj, c2e excluded
    z_star: np.ndarray                # (M, N, N, P), -1 when nothing is feasible
    fallback: np.ndarray              # (M, N, N, P) objective of the fallback path
    family_layers: np.ndarray         # (P,) K + 1 per family
    loss_cap: bool = False
    grid_evaluations: int = field(default=0)

    @property
    def n_devices(self) -> int:
        return len(self.d_items)

    @property
    def n_servers(self) -> int:
        return len(self.capacities)

    def new_fetch(self, server_idx: int) -> np.ndarray:
        """(L,) cloud fetch charged when a service is deployed now but was not last slot"""
        fetch = self.fetch_s[server_idx].copy()
        prev = list(self.prev_deployment[server_idx])
        if prev:
            fetch[prev] = 0.0
        return fetch

    def served_objective(self, server_idx: int, members: np.ndarray) -> np.ndarray:
        """(|F|, L) objective of each member if each service were deployed"""
        n = len(members)
        core = self.best[server_idx, n - 1][members][:, self.service_family]
        return core + self.alpha * self.new_fetch(server_idx)[None, :]

    def fallback_objective(self, server_idx: int, members: np.ndarray) -> np.ndarray:
        n = len(members)
        return self.fallback[server_idx, n - 1][members][:, self.service_family]

    def partition_points(self, server_idx: int, members: np.ndarray) -> np.ndarray:
        """(|F|, L) optimal z of each member per service"""
        n = len(members)
        return self.z_star[server_idx, n - 1][members][:, self.service_family]


def build_slot_context(scenario, gains: SlotGains, slot: int, d_items: Sequence[int],
                       request_service: Sequence[int], weights: np.ndarray, alpha: float,
                       prev_deployment: Sequence[frozenset], loss_cap: bool = False,
                       mode: str = 'auto', deployment_mode: str = 'expected') -> SlotContext:
    """
    Precompute per-slot partition optima for every coalition size

    Args:
        scenario: provides servers, devices, services, families, service_family,
            popularity and channel
        weights: per-MD queue weight (0 for the delay-only baselines)
        deployment_mode: 'expected' weighs services by popularity,
            'realized' by this slot's actual requests
    """
    devices, servers = scenario.devices, scenario.servers
    n_dev, n_srv, n_fam = len(devices), len(servers), len(scenario.families)
    n_svc = len(scenario.services)
    noise = scenario.channel.noise_psd_dbm_hz

    d = np.asarray(d_items, dtype=float)
    weights = np.asarray(weights, dtype=float)
    budgets = np.array([md.privacy_budget for md in devices])
    md_flops = np.array([md.compute_flops for md in devices])
    md_power = np.array([md.tx_power_dbm for md in devices])
    sizes = np.arange(1, n_dev + 1, dtype=float)

    best = np.empty((n_srv, n_dev, n_dev, n_fam))
    z_star = np.empty((n_srv, n_dev, n_dev, n_fam), dtype=int)
    fallback = np.empty((n_srv, n_dev, n_dev, n_fam))
    evaluations = 0

    for server in servers:
        m = server.index
        bandwidth = server.bandwidth_hz / sizes
        rate_up = link_rate(bandwidth[:, None], md_power[None, :], gains.up[:, m][None, :], noise)
        rate_down = link_rate(bandwidth[:, None], server.tx_power_dbm, gains.down[:, m][None, :], noise)
        edge_flops = (server.compute_flops / sizes)[:, None]

        for p, model in enumerate(scenario.families):
            delay = pipeline_delay_grid(model, d, md_flops, rate_up, rate_down, edge_flops)
            loss = d[:, None] * possibility_vector(model, mode)[None, :]
            obj = alpha * delay - (weights * budgets)[None, :, None] + (weights[:, None] * loss)[None, :, :]
            if loss_cap:
                obj = np.where((loss > budgets[:, None])[None, :, :], np.inf, obj)
            z = np.argmin(obj, axis=-1)
            value = np.take_along_axis(obj, z[..., None], axis=-1)[..., 0]
            z_star[m, :, :, p] = np.where(np.isfinite(value), z, -1)
            best[m, :, :, p] = value
            evaluations += obj.size

            fetch = cloud_fetch_s(model, server)
            full_local = fetch + model.total_bytes * BITS_PER_BYTE / rate_down + d * model.total_flops_per_item / md_flops
            fallback[m, :, :, p] = alpha * full_local - weights * budgets

    fetch_s = np.array([[cloud_fetch_s(svc, server) for svc in scenario.services] for server in servers])

    request_service = np.asarray(request_service, dtype=int)
    if deployment_mode == 'expected':
        probs = np.broadcast_to(np.asarray(scenario.popularity, dtype=float), (n_dev, n_svc)).copy()
    elif deployment_mode == 'realized':
        probs = np.zeros((n_dev, n_svc))
        probs[np.arange(n_dev), request_service] = 1.0
    else:
        raise ValueError(f"unknown deployment mode '{deployment_mode}' (expected|realized)")

    return SlotContext(
        slot=int(slot),
        alpha=float(alpha),
        weights=weights,
        budgets=budgets,
        d_items=d,
        request_service=request_service,
        request_probs=probs,
        service_family=np.asarray(scenario.service_family, dtype=int),
        service_bytes=np.array([svc.total_bytes for svc in scenario.services]),
        capacities=np.array([server.storage_bytes for server in servers]),
        prev_deployment=tuple(frozenset(s) for s in prev_deployment),
        fetch_s=fetch_s,
        best=best,
        z_star=z_star,
        fallback=fallback,
        family_layers=np.array([model.num_layers + 1 for model in scenario.families]),
        loss_cap=loss_cap,
        grid_evaluations=evaluations,
    )
