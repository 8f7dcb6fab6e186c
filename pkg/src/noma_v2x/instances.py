"""Random small allocation instances for auditing the local search against
the exhaustive optimum.

Instances are drawn from the same physics the allocator faces in a run:
transmitters scattered on a road segment, each target receiver a short hop
away from its own transmitter, log-distance path loss with shadowing, and an
interference disk cutting off distant cross links.
"""

from __future__ import annotations

import numpy as np

from .allocator import AllocatorConfig, UtilityContext
from .channel import ChannelConfig, path_loss_gain


def random_instance(rng: np.random.Generator, max_tx: int = 4,
                    max_subchannels: int = 3, max_quota: int = 2):
    """One random feasible instance: transmitter ids, subchannel ids,
    allocator configuration, and the utility context."""
    while True:
        n_tx = int(rng.integers(1, max_tx + 1))
        n_sc = int(rng.integers(1, max_subchannels + 1))
        q_tx = int(rng.integers(1, max_quota + 1))
        q_sc = int(rng.integers(1, max_quota + 1))
        if n_sc * q_sc >= n_tx:
            break
    road_len = 1000.0
    comm_range = 150.0
    chan = ChannelConfig()
    tx_pos = rng.uniform(0.0, road_len, size=n_tx)
    hop = rng.uniform(5.0, 60.0, size=n_tx) * rng.choice([-1.0, 1.0], size=n_tx)
    rx_pos = (tx_pos + hop) % road_len
    gains: list[list[float]] = []
    for a in range(n_tx):
        row = []
        for b in range(n_tx):
            dx = abs(tx_pos[a] - rx_pos[b])
            d = min(dx, road_len - dx)
            if a != b and d > comm_range:
                row.append(0.0)
                continue
            shadow_db = float(rng.normal(0.0, chan.shadowing_sigma_db))
            row.append(path_loss_gain(d, chan) * 10.0 ** (shadow_db / 10.0))
        gains.append(row)
    ctx = UtilityContext(
        tx_ids=tuple(range(n_tx)),
        gains=gains,
        noise_w=chan.noise_power_w,
        nominal_power_w=10.0 ** rng.uniform(-2.3, -1.0),
        rate_threshold_bps=float(rng.uniform(1.5e6, 3.5e6)),
        logistic_slope_per_bps=5e-6,
        bandwidth_hz=chan.subchannel_bandwidth_hz,
    )
    config = AllocatorConfig(q_tx=q_tx, q_sc=q_sc, max_swap_iterations=1000)
    return tuple(range(n_tx)), tuple(range(n_sc)), config, ctx


def instance_to_dict(tx_ids, subchannel_ids, config: AllocatorConfig,
                     ctx: UtilityContext) -> dict:
    """Serializable snapshot that reproduces a failing instance exactly."""
    return {
        "tx_ids": list(tx_ids),
        "subchannel_ids": list(subchannel_ids),
        "q_tx": config.q_tx,
        "q_sc": config.q_sc,
        "gains": [list(map(float, row)) for row in ctx.gains],
        "noise_w": ctx.noise_w,
        "nominal_power_w": ctx.nominal_power_w,
        "rate_threshold_bps": ctx.rate_threshold_bps,
        "logistic_slope_per_bps": ctx.logistic_slope_per_bps,
        "bandwidth_hz": ctx.bandwidth_hz,
    }
