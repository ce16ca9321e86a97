"""
Topology - edge servers, mobile devices and the wireless channel

Gains are slot-constant: one lognormal shadowing draw per (slot, md, server, direction),
keyed on the run seed so every link is reproducible on its own.
"""
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from units import dbm_to_watts


DIRECTIONS = ('up', 'down')
DEFAULT_NOISE_PSD_DBM_HZ = -174.0

# numpy SeedSequence stream tag for shadowing draws
_GAIN_STREAM = 11


class TopologyError(ValueError):
    """Invalid server/device description or invalid resource query"""


@dataclass(frozen=True)
class EdgeServer:
    server_id: str
    index: int
    compute_flops: float        # FLOP/s
    storage_bytes: float        # model cache capacity
    bandwidth_hz: float         # shared by associated MDs
    tx_power_dbm: float
    backhaul_bps: float         # cloud-to-edge link

    def __post_init__(self):
        for name in ('compute_flops', 'bandwidth_hz', 'backhaul_bps'):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise TopologyError(f"server '{self.server_id}': {name} must be positive (got {value})")
        # Zero storage is legal: every request then goes through the fallback path
        if not np.isfinite(self.storage_bytes) or self.storage_bytes < 0:
            raise TopologyError(f"server '{self.server_id}': storage must be >= 0 (got {self.storage_bytes})")


@dataclass(frozen=True)
class MobileDevice:
    md_id: str
    index: int
    compute_flops: float        # FLOP/s
    tx_power_dbm: float
    distance_m: float
    privacy_budget: float       # possibility-weighted items per slot

    def __post_init__(self):
        if not np.isfinite(self.compute_flops) or self.compute_flops <= 0:
            raise TopologyError(f"device '{self.md_id}': compute must be positive (got {self.compute_flops})")
        if not np.isfinite(self.distance_m) or self.distance_m <= 0:
            raise TopologyError(f"device '{self.md_id}': distance must be positive (got {self.distance_m})")
        if not np.isfinite(self.privacy_budget) or self.privacy_budget < 0:
            raise TopologyError(f"device '{self.md_id}': privacy budget must be >= 0 (got {self.privacy_budget})")


@dataclass(frozen=True)
class ChannelModel:
    path_loss_exponent: float = 3.5
    shadowing_sigma_db: float = 8.0
    noise_psd_dbm_hz: float = DEFAULT_NOISE_PSD_DBM_HZ
    seed: int = 0

    def __post_init__(self):
        if self.path_loss_exponent <= 0:
            raise TopologyError(f"path loss exponent must be > 0 (got {self.path_loss_exponent})")
        if self.shadowing_sigma_db < 0:
            raise TopologyError(f"shadowing sigma must be >= 0 (got {self.shadowing_sigma_db})")


@dataclass(frozen=True)
class SlotGains:
    """Linear gains for one slot, indexed [md.index, server.index]"""
    slot: int
    up: np.ndarray
    down: np.ndarray


def _shadowing_db(channel: ChannelModel, slot: int, md_index: int, server_index: int, direction: str) -> float:
    if direction not in DIRECTIONS:
        raise TopologyError(f"direction must be 'up' or 'down' (got {direction!r})")
    if channel.shadowing_sigma_db == 0:
        return 0.0
    key = [int(channel.seed), _GAIN_STREAM, int(slot), int(md_index), int(server_index), DIRECTIONS.index(direction)]
    return float(np.random.default_rng(key).normal(0.0, channel.shadowing_sigma_db))


def path_gain(channel: ChannelModel, distance_m: float, shadowing_db: float = 0.0) -> float:
    """distance^-theta * 10^(X/10)"""
    if distance_m <= 0:
        raise TopologyError(f"distance must be positive (got {distance_m})")
    return distance_m ** (-channel.path_loss_exponent) * 10.0 ** (shadowing_db / 10.0)


def channel_gain(channel: ChannelModel, md: MobileDevice, server: EdgeServer, slot: int, direction: str) -> float:
    """
    Linear channel gain of the md <-> server link in `slot`

    The MD distance is shared by every candidate server; servers differ only
    through their independent shadowing draws.
    """
    shadow = _shadowing_db(channel, slot, md.index, server.index, direction)
    return path_gain(channel, md.distance_m, shadow)


def slot_gains(channel: ChannelModel, devices: Sequence[MobileDevice],
               servers: Sequence[EdgeServer], slot: int) -> SlotGains:
    """Every uplink/downlink gain of a slot, same values as channel_gain()"""
    up = np.empty((len(devices), len(servers)))
    down = np.empty((len(devices), len(servers)))
    for md in devices:
        for server in servers:
            up[md.index, server.index] = channel_gain(channel, md, server, slot, 'up')
            down[md.index, server.index] = channel_gain(channel, md, server, slot, 'down')
    up.setflags(write=False)
    down.setflags(write=False)
    return SlotGains(slot=int(slot), up=up, down=down)


def shared_bandwidth(server: EdgeServer, n_associated: int) -> float:
    """b = B_m / N_m"""
    if n_associated < 1:
        raise TopologyError(f"server '{server.server_id}': bandwidth share requested for {n_associated} MDs")
    return server.bandwidth_hz / n_associated


def shared_compute(server: EdgeServer, n_associated: int) -> float:
    """f = F_m / N_m"""
    if n_associated < 1:
        raise TopologyError(f"server '{server.server_id}': compute share requested for {n_associated} MDs")
    return server.compute_flops / n_associated


def link_rate(bandwidth_hz, tx_power_dbm, gain, noise_psd_dbm_hz=DEFAULT_NOISE_PSD_DBM_HZ):
    """
    Shannon rate b * log2(1 + P h / (N0 b)) in bits/s

    Accepts numpy arrays for any argument (broadcast).
    """
    bandwidth_hz = np.asarray(bandwidth_hz, dtype=float)
    if np.any(bandwidth_hz <= 0):
        raise TopologyError("link bandwidth must be positive")
    power_w = 10.0 ** ((np.asarray(tx_power_dbm, dtype=float) - 30.0) / 10.0)
    noise_w = dbm_to_watts(noise_psd_dbm_hz) * bandwidth_hz
    rate = bandwidth_hz * np.log2(1.0 + power_w * np.asarray(gain, dtype=float) / noise_w)
    if np.ndim(rate) == 0:
        return float(rate)
    return rate
