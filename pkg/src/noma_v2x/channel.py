"""Link gains: log-distance path loss, per-period shadowing, per-slot fading.

The scheduler's view of the channel is the large-scale gain only (path loss
times shadowing, fixed within a scheduling period); fast fading is drawn per
slot and only enters the per-slot power control and decoding paths. All
internal quantities are linear; dB/dBm appear only in configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rngstreams import STREAM_FADING, STREAM_SHADOWING, substream
from .scenario import RoadConfig, Vehicle

THERMAL_NOISE_DBM_PER_HZ = -174.0


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    return 30.0 + 10.0 * math.log10(watts)


@dataclass(frozen=True)
class ChannelConfig:
    pathloss_exponent: float = 3.0
    reference_loss_db: float = 47.0
    reference_distance_m: float = 1.0
    shadowing_sigma_db: float = 3.0
    subchannel_bandwidth_hz: float = 180e3
    subchannel_count: int = 10
    # None: thermal noise integrated over one subchannel bandwidth
    noise_power_dbm_per_subchannel: float | None = None

    @property
    def noise_dbm(self) -> float:
        if self.noise_power_dbm_per_subchannel is not None:
            return self.noise_power_dbm_per_subchannel
        return THERMAL_NOISE_DBM_PER_HZ + 10.0 * math.log10(self.subchannel_bandwidth_hz)

    @property
    def noise_power_w(self) -> float:
        return dbm_to_watts(self.noise_dbm)


def path_loss_gain(distance_m: float, config: ChannelConfig) -> float:
    """Linear power gain of the log-distance model, strictly decreasing with
    distance; distances below the reference distance are clamped to it."""
    d = max(distance_m, config.reference_distance_m)
    loss_db = config.reference_loss_db + 10.0 * config.pathloss_exponent * math.log10(
        d / config.reference_distance_m
    )
    return 10.0 ** (-loss_db / 10.0)


class ShadowingSampler:
    """Zero-mean Gaussian shadowing in dB, constant within a period, symmetric
    per unordered link, resampled at period boundaries."""

    def __init__(self, seed: int, sigma_db: float, n_vehicles: int):
        self._seed = int(seed)
        self._sigma = float(sigma_db)
        self._n = int(n_vehicles)
        self._cache_period: int | None = None
        self._cache: np.ndarray | None = None

    def period_offsets_db(self, period: int) -> np.ndarray:
        if self._cache_period != period:
            rng = substream(self._seed, STREAM_SHADOWING, period)
            draw = rng.normal(0.0, self._sigma, size=(self._n, self._n))
            upper = np.triu(draw, 1)
            self._cache = upper + upper.T
            self._cache_period = period
        return self._cache

    def offset_db(self, a: int, b: int, period: int) -> float:
        return float(self.period_offsets_db(period)[a, b])


class FadingSampler:
    """Unit-mean exponential power gains (Rayleigh amplitude), independent per
    (ordered link, subchannel, slot), deterministic given (seed, slot)."""

    def __init__(self, seed: int, n_vehicles: int, n_subchannels: int):
        self._seed = int(seed)
        self._n = int(n_vehicles)
        self._k = int(n_subchannels)
        self._cache_slot: int | None = None
        self._cache: np.ndarray | None = None

    def slot_gains(self, slot: int) -> np.ndarray:
        """(n, n, k) array of fading power gains for one slot."""
        if self._cache_slot != slot:
            rng = substream(self._seed, STREAM_FADING, slot)
            g = rng.standard_exponential((self._n, self._n, self._k))
            np.maximum(g, 1e-300, out=g)  # keep support strictly positive
            self._cache = g
            self._cache_slot = slot
        return self._cache

    def gain(self, tx: int, rx: int, subchannel: int, slot: int) -> float:
        return float(self.slot_gains(slot)[tx, rx, subchannel])


class PeriodChannel:
    """Distances, large-scale gains, and interference-disk membership for the
    vehicle snapshot of one scheduling period."""

    def __init__(self, dist: np.ndarray, large_scale: np.ndarray, disk: np.ndarray):
        self.dist = dist                # (n, n) meters
        self.large_scale = large_scale  # (n, n) linear power gain, symmetric
        self.disk = disk                # (n, n) bool; [a, b]: b inside a's disk

    @classmethod
    def build(cls, vehicles: list[Vehicle], road: RoadConfig, comm_range_m: float,
              config: ChannelConfig, shadowing: ShadowingSampler, period: int
              ) -> "PeriodChannel":
        pos = np.array([v.position_m for v in vehicles], dtype=float)
        lane_y = np.array([(v.lane + 0.5) * road.lane_width_m for v in vehicles])
        dx = np.abs(pos[:, None] - pos[None, :])
        if road.wraparound:
            dx = np.minimum(dx, road.length_m - dx)
        dy = lane_y[:, None] - lane_y[None, :]
        dist = np.hypot(dx, dy)
        d = np.maximum(dist, config.reference_distance_m)
        loss_db = config.reference_loss_db + 10.0 * config.pathloss_exponent * np.log10(
            d / config.reference_distance_m
        )
        gain = 10.0 ** (-(loss_db - shadowing.period_offsets_db(period)) / 10.0)
        n = len(vehicles)
        disk = (dist <= comm_range_m) & ~np.eye(n, dtype=bool)
        return cls(dist, gain, disk)

    def slot_gains(self, fading: FadingSampler, slot: int) -> np.ndarray:
        """(n, n, k) composite gains: large-scale times per-slot fading."""
        return self.large_scale[:, :, None] * fading.slot_gains(slot)


def link_gain(tx: int, rx: int, subchannel: int, slot: int,
              period_channel: PeriodChannel, fading: FadingSampler) -> float:
    """Composite gain of one ordered link on one subchannel in one slot."""
    return float(period_channel.large_scale[tx, rx]) * fading.gain(tx, rx, subchannel, slot)
