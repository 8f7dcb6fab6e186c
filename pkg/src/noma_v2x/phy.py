"""Successive interference cancellation: ordering, SINR chains, decode rules.

Receivers peel co-channel signals strongest first. A signal is decodable only
if every stronger signal in the order was decoded before it; interference at
each step comes from the not-yet-cancelled (weaker) signals only. The smooth
success proxy used by the scheduler is a logistic function of the rate margin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .channel import dbm_to_watts


@dataclass(frozen=True)
class PhyConfig:
    rate_threshold_bps: float = 2.5e6
    logistic_slope_per_mbps: float = 5.0
    tx_power_max_dbm: float = 14.0
    interference_threshold_dbm: float = -90.0

    @property
    def logistic_slope_per_bps(self) -> float:
        return self.logistic_slope_per_mbps / 1e6

    @property
    def tx_power_max_w(self) -> float:
        return dbm_to_watts(self.tx_power_max_dbm)

    @property
    def interference_threshold_w(self) -> float:
        return dbm_to_watts(self.interference_threshold_dbm)


@dataclass(frozen=True)
class SicOrder:
    """Decode order at one receiver on one subchannel, strongest signal first."""

    rx_id: int
    subchannel: int
    tx_ids: tuple[int, ...]


def sic_order(rx_id: int, subchannel: int, gains: Mapping[int, float]) -> SicOrder:
    """Order co-channel transmitters by decreasing gain at the receiver;
    equal gains resolve to the lower transmitter id."""
    ordered = sorted(gains, key=lambda tx: (-gains[tx], tx))
    return SicOrder(rx_id=rx_id, subchannel=subchannel, tx_ids=tuple(ordered))


def sic_sinr_chain(order: SicOrder, powers: Mapping[int, float],
                   gains: Mapping[int, float], noise_w: float
                   ) -> list[tuple[int, float]]:
    """SINR of each active signal assuming all stronger ones were cancelled.

    Signals with zero power are skipped entirely: they are neither decoded nor
    counted as interference. Interference for position i is the received power
    of every active signal after i in the order.
    """
    active = [tx for tx in order.tx_ids if powers[tx] > 0.0]
    received = [powers[tx] * gains[tx] for tx in active]
    suffix = [0.0] * (len(active) + 1)
    for i in range(len(active) - 1, -1, -1):
        suffix[i] = suffix[i + 1] + received[i]
    return [
        (tx, received[i] / (noise_w + suffix[i + 1]))
        for i, tx in enumerate(active)
    ]


def rate(sinr: float, bandwidth_hz: float) -> float:
    """Shannon rate in bits/second."""
    return bandwidth_hz * math.log2(1.0 + sinr)


def decode_outcomes(order: SicOrder, powers: Mapping[int, float],
                    gains: Mapping[int, float], noise_w: float,
                    rate_threshold_bps: float, bandwidth_hz: float
                    ) -> list[tuple[int, float, bool]]:
    """Walk the order strongest first and return (tx, rate, decoded) triples.

    A signal decodes iff its rate meets the threshold and every stronger
    signal decoded; the first failure breaks the cancellation chain and every
    weaker signal fails with it. Zero-power signals are absent from the result.
    """
    out = []
    chain_alive = True
    for tx, sinr in sic_sinr_chain(order, powers, gains, noise_w):
        r = rate(sinr, bandwidth_hz)
        ok = chain_alive and r >= rate_threshold_bps
        out.append((tx, r, ok))
        chain_alive = ok
    return out


def logistic_success(rate_bps: float, rate_threshold_bps: float,
                     slope_per_bps: float) -> float:
    """Smooth decode-success proxy: 1 / (1 + exp(-slope * (rate - threshold))).

    Strictly increasing in rate, 0.5 exactly at the threshold. Evaluated in a
    numerically stable form for large rate margins of either sign.
    """
    z = slope_per_bps * (rate_bps - rate_threshold_bps)
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)
