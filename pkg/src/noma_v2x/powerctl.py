"""Per-slot distributed power control via iterated reference/feedback rounds.

Each transmission slot opens with a fixed number of control rounds before the
data portion. A round has two blocks. In the transmitter block every active
transmitter picks its next power from the latest receiver feedback, all at
once (updates within a block never see each other). In the receiver block
every receiver measures the co-channel interference it currently observes and
the per-transmitter link gains, and feeds them back.

The unicast power rule is all-or-minimum: a transmitter whose aggregate
caused interference at other receivers exceeds the configured threshold stays
silent for the slot; otherwise it uses just enough power (plus a small margin)
to push its own link strictly above the decoding rate threshold, or abstains
when even the power cap cannot. In broadcast mode the rule instead picks the
smallest power on a logarithmic grid that covers the required fraction of
neighboring receivers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .phy import PhyConfig

POWER_MARGIN = 1.001  # keeps the achieved rate strictly above the threshold
BROADCAST_GRID_POINTS = 50
BROADCAST_GRID_FLOOR_FRACTION = 1e-8  # lowest grid point as a fraction of the cap

MODE_UNICAST = "unicast"
MODE_BROADCAST = "broadcast"


@dataclass(frozen=True)
class ControlConfig:
    tc_iterations: int = 4
    broadcast_coverage_fraction: float = 0.2
    convergence_epsilon_w: float = 1e-9


@dataclass(slots=True)
class FeedbackReport:
    """What one receiver sends back after a receiver block: per subchannel the
    aggregate interference it observes (excluding its own paired transmitter)
    plus the measured gain and power of every active in-range transmitter."""

    rx_id: int
    interference_w: dict[int, float]
    tx_gains: dict[int, dict[int, float]]   # subchannel -> {tx: gain}
    tx_powers: dict[int, dict[int, float]]  # subchannel -> {tx: power}


@dataclass
class SlotState:
    """Everything the control portion of one slot needs."""

    mode: str
    occupants: dict[int, tuple[int, ...]]     # subchannel -> tx ids
    assignment: dict[int, tuple[int, ...]]    # tx -> subchannels
    gains: np.ndarray                         # (n, n, k) true slot gains [tx, rx, k]
    disk: np.ndarray                          # (n, n) bool: rx inside tx's range
    rx_users: tuple[int, ...]                 # receivers that report and decode
    target_rx: dict[int, int]                 # unicast: tx -> its receiver
    neighbors: dict[int, tuple[int, ...]]     # broadcast: tx -> in-range receivers
    noise_w: float
    phy: PhyConfig
    bandwidth_hz: float
    coverage_fraction: float = 1.0


@dataclass
class ControlDiagnostics:
    iterations: int
    last_max_delta_w: float
    converged: bool
    power_trace: list[dict[tuple[int, int], float]] = field(default_factory=list)


def min_power_for_rate(gain: float, interference_w: float, noise_w: float,
                       rate_threshold_bps: float, bandwidth_hz: float) -> float:
    """Power at which the link rate exactly meets the threshold for fixed
    interference: (2^(threshold/bandwidth) - 1) * (I + N) / gain."""
    exponent = rate_threshold_bps / bandwidth_hz
    if exponent > 1023.0:  # 2**x overflows; no finite power reaches the rate
        return math.inf
    sinr_needed = 2.0 ** exponent - 1.0
    return sinr_needed * (interference_w + noise_w) / gain


def tx_power_update(gain_to_target: float, reported_interference_w: float,
                    caused_interference_w: float, noise_w: float,
                    phy: PhyConfig, bandwidth_hz: float) -> float:
    """All-or-minimum unicast rule for one (transmitter, subchannel).

    Returns 0 when the transmitter's current caused interference exceeds the
    threshold, or when even the margin-adjusted minimum power would exceed the
    cap; otherwise the margin-adjusted minimum power.
    """
    if caused_interference_w > phy.interference_threshold_w:
        return 0.0
    needed = min_power_for_rate(
        gain_to_target, reported_interference_w, noise_w,
        phy.rate_threshold_bps, bandwidth_hz,
    ) * POWER_MARGIN
    if needed > phy.tx_power_max_w:
        return 0.0
    return needed


def rx_feedback(rx: int, subchannels, occupants: dict[int, tuple[int, ...]],
                powers: dict[tuple[int, int], float], gains: np.ndarray,
                disk: np.ndarray, target_tx: int | None = None) -> FeedbackReport:
    """Build one receiver's report from the reference signals it can hear.

    Covers exactly the active (power > 0) transmitters whose range includes
    this receiver. The aggregate interference excludes the receiver's own
    paired transmitter when it has one.
    """
    interference: dict[int, float] = {}
    g_out: dict[int, dict[int, float]] = {}
    p_out: dict[int, dict[int, float]] = {}
    for k in subchannels:
        total = 0.0
        gk: dict[int, float] = {}
        pk: dict[int, float] = {}
        for tx in occupants.get(k, ()):
            if not disk[tx, rx]:
                continue
            p = powers.get((tx, k), 0.0)
            if p <= 0.0:
                continue
            g = float(gains[tx, rx, k])
            gk[tx] = g
            pk[tx] = p
            if tx != target_tx:
                total += p * g
        interference[k] = total
        g_out[k] = gk
        p_out[k] = pk
    return FeedbackReport(rx, interference, g_out, p_out)


def broadcast_power_grid(p_max: float) -> list[float]:
    """Ascending logarithmic power grid over (0, p_max]."""
    floor_p = p_max * BROADCAST_GRID_FLOOR_FRACTION
    steps = BROADCAST_GRID_POINTS - 1
    return [floor_p * (p_max / floor_p) ** (i / steps) for i in range(BROADCAST_GRID_POINTS)]


def _grid_ceil(p_req: float, p_max: float) -> float | None:
    """Smallest grid point >= p_req, or None when p_req exceeds the cap."""
    if p_req > p_max:
        return None
    floor_p = p_max * BROADCAST_GRID_FLOOR_FRACTION
    if p_req <= floor_p:
        return floor_p
    steps = BROADCAST_GRID_POINTS - 1
    span = math.log(p_max / floor_p)
    i = math.ceil(math.log(p_req / floor_p) / span * steps - 1e-12)
    p = floor_p * math.exp(span * i / steps)
    if p < p_req:  # guard against rounding just below the requirement
        i += 1
        p = floor_p * math.exp(span * i / steps)
    return min(p, p_max)


def broadcast_tx_power_update(tx: int, k: int, neighbor_rxs,
                              reports: dict[int, FeedbackReport] | None,
                              prev_powers: dict[tuple[int, int], float],
                              gains: np.ndarray, noise_w: float, phy: PhyConfig,
                              bandwidth_hz: float, coverage_fraction: float) -> float:
    """Smallest grid power at which the required count of neighbors reaches the
    rate threshold given the interference they reported; 0 when none qualifies.

    Equivalent to scanning the ascending grid and stopping at the first power
    whose covered count reaches ceil(coverage_fraction * |neighbors|): the
    covered count is nondecreasing in power, so the grid point directly above
    the m-th smallest per-neighbor power requirement is that first power.
    """
    neighbor_rxs = tuple(neighbor_rxs)
    if not neighbor_rxs:
        return 0.0
    needed_count = max(1, math.ceil(coverage_fraction * len(neighbor_rxs) - 1e-9))
    if needed_count > len(neighbor_rxs):
        return 0.0
    p_prev = prev_powers.get((tx, k), 0.0)
    requirements = []
    for r in neighbor_rxs:
        g = float(gains[tx, r, k])
        if reports is None:
            i_other = 0.0
        else:
            rep = reports[r]
            i_other = max(rep.interference_w.get(k, 0.0) - p_prev * g, 0.0)
        requirements.append(
            min_power_for_rate(g, i_other, noise_w, phy.rate_threshold_bps,
                               bandwidth_hz))
    requirements.sort()
    p = _grid_ceil(requirements[needed_count - 1], phy.tx_power_max_w)
    return 0.0 if p is None else p


def run_control_portion(state: SlotState, config: ControlConfig,
                        keep_power_trace: bool = False):
    """Run the control rounds of one slot.

    Returns (powers, rx_knowledge, diagnostics): the final per-(tx, subchannel)
    powers used for the data portion, and, per receiver, the co-channel prior
    knowledge learned from reference signals: for each subchannel the list of
    (tx, gain, power) triples of active in-range transmitters.
    """
    txs = sorted(tx for tx, ks in state.assignment.items() if ks)
    rx_target_of = {rx: tx for tx, rx in state.target_rx.items()}
    unicast = state.mode == MODE_UNICAST
    gains = state.gains
    noise = state.noise_w
    phy_cfg = state.phy
    bw = state.bandwidth_hz

    # per-(tx, k) sum of gains to every non-target in-range receiver: the
    # caused-interference sums are slot constants, power scales them
    caused_gain: dict[tuple[int, int], float] = {}
    if unicast:
        for tx in txs:
            mask = np.array(state.disk[tx], dtype=float)
            mask[state.target_rx[tx]] = 0.0
            for k in state.assignment[tx]:
                caused_gain[(tx, k)] = float(np.dot(gains[tx, :, k], mask))

    report_subchannels = tuple(k for k, occ in state.occupants.items() if occ)
    rx_report_ks: dict[int, tuple[int, ...]] = {}
    for rx in state.rx_users:
        if unicast and rx in rx_target_of:
            rx_report_ks[rx] = state.assignment.get(rx_target_of[rx], ())
        else:
            rx_report_ks[rx] = report_subchannels

    powers: dict[tuple[int, int], float] = {
        (tx, k): 0.0 for tx in txs for k in state.assignment[tx]
    }
    reports: dict[int, FeedbackReport] | None = None  # zero-interference prior
    last_delta = 0.0
    trace: list[dict[tuple[int, int], float]] = []
    for _ in range(config.tc_iterations):
        new_powers: dict[tuple[int, int], float] = {}
        for tx in txs:
            for k in state.assignment[tx]:
                if unicast:
                    rx = state.target_rx[tx]
                    reported = 0.0
                    if reports is not None:
                        reported = reports[rx].interference_w.get(k, 0.0)
                    caused = powers[(tx, k)] * caused_gain[(tx, k)]
                    p = tx_power_update(
                        float(gains[tx, rx, k]), reported, caused, noise,
                        phy_cfg, bw,
                    )
                else:
                    p = broadcast_tx_power_update(
                        tx, k, state.neighbors.get(tx, ()), reports, powers,
                        gains, noise, phy_cfg, bw, state.coverage_fraction,
                    )
                new_powers[(tx, k)] = p
        last_delta = max(
            (abs(new_powers[key] - powers[key]) for key in new_powers), default=0.0
        )
        powers = new_powers
        if keep_power_trace:
            trace.append(dict(powers))
        reports = {
            rx: rx_feedback(rx, rx_report_ks[rx], state.occupants, powers,
                            gains, state.disk, rx_target_of.get(rx))
            for rx in state.rx_users
        }

    knowledge: dict[int, dict[int, list[tuple[int, float, float]]]] = {}
    for rx in state.rx_users:
        per_k: dict[int, list[tuple[int, float, float]]] = {}
        for k, occ in state.occupants.items():
            entries = [
                (tx, float(gains[tx, rx, k]), powers[(tx, k)])
                for tx in occ
                if powers.get((tx, k), 0.0) > 0.0 and state.disk[tx, rx]
            ]
            if entries:
                per_k[k] = entries
        knowledge[rx] = per_k
    diag = ControlDiagnostics(
        iterations=config.tc_iterations,
        last_max_delta_w=last_delta,
        converged=last_delta < config.convergence_epsilon_w,
        power_trace=trace,
    )
    return powers, knowledge, diag
