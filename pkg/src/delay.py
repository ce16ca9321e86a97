"""
Delay Model - per-request pipeline delay

total = c2e + down + max(local, max(up, edge))

Sizes are bytes and rates bits/s, so every transfer term carries a factor 8.
"""
from dataclasses import dataclass
from typing import Iterable, Tuple

import numpy as np

from catalog import ModelProfile, split
from topology import (DEFAULT_NOISE_PSD_DBM_HZ, EdgeServer, MobileDevice,
                      link_rate, shared_bandwidth, shared_compute)


BITS_PER_BYTE = 8.0


class UnservedRequestError(RuntimeError):
    """Requested model is not deployed and the fallback path is disabled"""


@dataclass(frozen=True)
class DelayBreakdown:
    c2e_s: float
    down_s: float
    local_s: float
    up_s: float
    edge_s: float
    total_s: float

    @classmethod
    def from_components(cls, c2e_s: float, down_s: float, local_s: float,
                        up_s: float, edge_s: float) -> 'DelayBreakdown':
        total = c2e_s + down_s + max(local_s, max(up_s, edge_s))
        return cls(c2e_s=c2e_s, down_s=down_s, local_s=local_s, up_s=up_s, edge_s=edge_s, total_s=total)

    def serial_s(self) -> float:
        """Sum of all components (no pipelining)"""
        return self.c2e_s + self.down_s + self.local_s + self.up_s + self.edge_s


def cloud_fetch_s(model: ModelProfile, server: EdgeServer) -> float:
    """Cloud -> edge transfer of the whole model"""
    return model.total_bytes * BITS_PER_BYTE / server.backhaul_bps


def fallback_breakdown(md: MobileDevice, server: EdgeServer, model: ModelProfile, d_items: int,
                       n_associated: int, gain_down: float,
                       noise_psd_dbm_hz: float = DEFAULT_NOISE_PSD_DBM_HZ) -> DelayBreakdown:
    """
    Service for a model the server does not cache: full local inference after
    fetching the whole model cloud -> edge -> device. Nothing is uploaded.
    """
    rate_down = link_rate(shared_bandwidth(server, n_associated), server.tx_power_dbm, gain_down, noise_psd_dbm_hz)
    return DelayBreakdown.from_components(
        c2e_s=cloud_fetch_s(model, server),
        down_s=model.total_bytes * BITS_PER_BYTE / rate_down,
        local_s=d_items * model.total_flops_per_item / md.compute_flops,
        up_s=0.0,
        edge_s=0.0,
    )


def delay_components(md: MobileDevice, server: EdgeServer, model: ModelProfile, z: int, d_items: int,
                     deployed_now: bool, deployed_prev: bool, n_associated: int,
                     gains: Tuple[float, float],
                     noise_psd_dbm_hz: float = DEFAULT_NOISE_PSD_DBM_HZ,
                     fallback_enabled: bool = True,
                     mode: str = 'auto') -> DelayBreakdown:
    """
    Delay of one request served by `server` with partition point z

    Args:
        gains: (uplink gain, downlink gain) of the md <-> server link this slot
        deployed_now / deployed_prev: x_{m,l}(t) and x_{m,l}(t-1)

    Raises:
        UnservedRequestError: model not deployed and fallback disabled
    """
    if d_items < 1:
        raise ValueError(f"d_items must be >= 1 (got {d_items})")
    gain_up, gain_down = gains

    if not deployed_now:
        if not fallback_enabled:
            raise UnservedRequestError(
                f"model '{model.model_id}' requested by '{md.md_id}' is not deployed on '{server.server_id}'")
        return fallback_breakdown(md, server, model, d_items, n_associated, gain_down, noise_psd_dbm_hz)

    acct = split(model, z, mode)
    bandwidth = shared_bandwidth(server, n_associated)
    rate_up = link_rate(bandwidth, md.tx_power_dbm, gain_up, noise_psd_dbm_hz)
    rate_down = link_rate(bandwidth, server.tx_power_dbm, gain_down, noise_psd_dbm_hz)

    return DelayBreakdown.from_components(
        c2e_s=cloud_fetch_s(model, server) if not deployed_prev else 0.0,
        down_s=acct.d_dev * BITS_PER_BYTE / rate_down,
        local_s=d_items * acct.w_dev / md.compute_flops,
        up_s=d_items * acct.feature_bytes * BITS_PER_BYTE / rate_up,
        edge_s=d_items * acct.w_edge / shared_compute(server, n_associated),
    )


def system_delay(breakdowns: Iterable[DelayBreakdown]) -> float:
    """System delay of a slot: sum of per-MD totals"""
    return float(sum(b.total_s for b in breakdowns))


def pipeline_delay_grid(model: ModelProfile, d_items, md_flops, rate_up, rate_down, edge_flops):
    """
    Delay over every partition point, c2e excluded, vectorised

    All rate/compute arguments broadcast against each other; a trailing axis of
    length K+1 is appended for z. Equals delay_components(...).total_s - c2e_s.
    """
    d = np.asarray(d_items, dtype=float)[..., None]
    down = model.cum_bytes * BITS_PER_BYTE / np.asarray(rate_down, dtype=float)[..., None]
    local = d * model.cum_flops / np.asarray(md_flops, dtype=float)[..., None]
    up = d * model.feature_table * BITS_PER_BYTE / np.asarray(rate_up, dtype=float)[..., None]
    edge = d * (model.total_flops_per_item - model.cum_flops) / np.asarray(edge_flops, dtype=float)[..., None]
    return down + np.maximum(local, np.maximum(up, edge))
