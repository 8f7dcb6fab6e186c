"""End-to-end slotted simulation.

A run is a sequence of scheduling periods. At each period boundary vehicles
move, large-scale channel state is resampled, and subchannels are allocated
centrally (swap matching for the shared scheme, strict orthogonal round-robin
for the baseline). Every slot then runs the distributed control rounds, the
data transmission, and decode bookkeeping. One fixed-size packet per
transmitter (per broadcast link in broadcast mode) is generated at each period
start, may be retried in every slot of its period, and expires at period end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .allocator import (
    AllocatorConfig,
    Matching,
    UtilityContext,
    init_matching,
    oma_baseline_allocate,
    swap_matching,
)
from .channel import ChannelConfig, FadingSampler, PeriodChannel, ShadowingSampler
from .phy import PhyConfig, decode_outcomes, sic_order
from .powerctl import ControlConfig, SlotState, run_control_portion
from .rngstreams import STREAM_ALLOC, substream
from .scenario import (
    ROLE_TX,
    ScenarioConfig,
    V2VPair,
    Vehicle,
    advance_mobility,
    generate_scenario,
)

SCHEME_NOMA = "noma_mcd"
SCHEME_OMA = "oma_baseline"
MODE_UNICAST = "unicast"
MODE_BROADCAST = "broadcast"


@dataclass(frozen=True)
class TimeConfig:
    sps_period_slots: int = 10
    slot_duration_s: float = 1e-3
    periods_per_run: int = 100
    latency_deadline_s: float = 10e-3


@dataclass
class SlotOutcome:
    tx_id: int
    rx_id: int
    period: int
    slot_in_period: int
    subchannel: int | None
    rate_bps: float
    decoded: bool
    latency_s: float | None


@dataclass
class PacketRecord:
    tx_id: int
    rx_id: int
    period: int
    distance_m: float
    scheduled: bool = False        # held a subchannel in some slot of the period
    delivered_slot: int | None = None
    latency_s: float | None = None


@dataclass
class RunMetrics:
    scheme: str
    mode: str
    seed: int
    generated: int
    decoded: int
    failed: int
    deferred: int
    prp_overall: float
    prp_by_distance: dict[str, float]
    latency_satisfaction_ratio: float
    latency_zero_denominator: bool
    decoded_per_period: float
    utility_trace: list[float]
    allocator_moves_total: int
    allocator_converged_all: bool
    starved_vehicle_periods: int
    power_traces: list | None = None


def distance_bin_edges(comm_range_m: float, bin_m: float) -> list[float]:
    """Half-open bins of width bin_m covering [0, comm_range) plus a catch-all
    for links that drift beyond the communication range after pairing."""
    edges = [0.0]
    while edges[-1] < comm_range_m - 1e-9:
        edges.append(min(edges[-1] + bin_m, comm_range_m))
    edges.append(math.inf)
    return edges


def bin_label(lo: float, hi: float) -> str:
    if math.isinf(hi):
        return f"prp_{int(lo)}m_plus"
    return f"prp_{int(lo)}m_{int(hi)}m"


def aggregate_metrics(packets: list[PacketRecord], bin_edges: list[float],
                      deadline_s: float, periods: int) -> dict:
    """Reduce per-packet records to the run-level reliability and latency
    metrics. Latency counts only delivered packets; an empty denominator is
    reported as ratio 1.0 with an explicit flag."""
    generated = len(packets)
    decoded = sum(1 for p in packets if p.delivered_slot is not None)
    deferred = sum(1 for p in packets if p.delivered_slot is None and not p.scheduled)
    failed = generated - decoded - deferred
    prp = decoded / generated if generated else float("nan")
    by_bin: dict[str, float] = {}
    for lo, hi in zip(bin_edges[:-1], bin_edges[1:]):
        in_bin = [p for p in packets if lo <= p.distance_m < hi]
        label = bin_label(lo, hi)
        if in_bin:
            by_bin[label] = sum(
                1 for p in in_bin if p.delivered_slot is not None) / len(in_bin)
        else:
            by_bin[label] = float("nan")
    delivered = [p for p in packets if p.latency_s is not None]
    if delivered:
        ratio = sum(1 for p in delivered if p.latency_s <= deadline_s) / len(delivered)
        zero_denominator = False
    else:
        ratio = 1.0
        zero_denominator = True
    return {
        "generated": generated,
        "decoded": decoded,
        "failed": failed,
        "deferred": deferred,
        "prp_overall": prp,
        "prp_by_distance": by_bin,
        "latency_satisfaction_ratio": ratio,
        "latency_zero_denominator": zero_denominator,
        "decoded_per_period": decoded / periods if periods else 0.0,
    }


def broadcast_txrx_selection(ids_sorted: list[int], adjacency: dict[int, set[int]],
                             slot_index: int, already_served: set[int]
                             ) -> tuple[list[int], list[int]]:
    """Greedy maximal independent transmitter set for one slot.

    Vehicles that have not transmitted yet this period go first, in an order
    rotated by the slot index, so every vehicle gets a turn within a period
    whenever the period has enough slots; the complement listens (half-duplex).
    """
    n = len(ids_sorted)
    if n == 0:
        return [], []
    off = slot_index % n
    rotated = ids_sorted[off:] + ids_sorted[:off]
    order = [v for v in rotated if v not in already_served]
    order += [v for v in rotated if v in already_served]
    chosen: list[int] = []
    chosen_set: set[int] = set()
    for v in order:
        if adjacency[v] & chosen_set:
            continue
        chosen.append(v)
        chosen_set.add(v)
    rx = [v for v in ids_sorted if v not in chosen_set]
    return chosen, rx


def _capacity_aware_take(q_tx: int, avail: int, residual: int, remaining_after: int) -> int:
    if residual <= 0:
        return 0
    return min(q_tx, avail, max(1, residual - remaining_after))


def _broadcast_assign(tx_order: list[int], subchannel_ids: tuple[int, ...],
                      q_tx: int, q_sc: int) -> dict[int, tuple[int, ...]]:
    """Deterministic least-loaded-first subchannel assignment for one slot's
    transmitter set; transmitters past capacity get nothing this slot."""
    loads = {k: 0 for k in subchannel_ids}
    residual = len(subchannel_ids) * q_sc
    remaining = len(tx_order)
    assignment: dict[int, tuple[int, ...]] = {}
    for tx in tx_order:
        remaining -= 1
        avail = sorted(
            (k for k in subchannel_ids if loads[k] < q_sc),
            key=lambda k: (loads[k], k),
        )
        take = _capacity_aware_take(q_tx, len(avail), residual, remaining)
        ks = tuple(sorted(avail[:take]))
        assignment[tx] = ks
        for k in ks:
            loads[k] += 1
        residual -= take
    return assignment


class Simulation:
    """One seeded run of one scheme in one mode."""

    def __init__(self, cfg, seed: int | None = None,
                 scenario: tuple[list[Vehicle], list[V2VPair]] | None = None,
                 slot_hook=None, keep_power_traces: bool = False):
        self.cfg = cfg
        self.seed = cfg.seeds[0] if seed is None else int(seed)
        self.slot_hook = slot_hook
        self.keep_power_traces = keep_power_traces
        scen_cfg: ScenarioConfig = cfg.scenario
        if scen_cfg.rng_seed is None:
            scen_cfg = replace(scen_cfg, rng_seed=self.seed)
        if scenario is None:
            vehicles, pairs = generate_scenario(
                scen_cfg, pair=cfg.mode != MODE_BROADCAST)
        else:
            vehicles, pairs = scenario
        self.road = scen_cfg.road
        self.comm_range = scen_cfg.comm_range_m
        self.vehicles = list(vehicles)
        self.index_of = {v.id: i for i, v in enumerate(self.vehicles)}
        self.tx_indices = sorted(
            (self.index_of[v.id] for v in self.vehicles if v.role == ROLE_TX),
            key=lambda i: self.vehicles[i].id,
        )
        self.target_idx = {
            self.index_of[p.tx_id]: self.index_of[p.rx_id] for p in pairs
        }
        n = len(self.vehicles)
        chan: ChannelConfig = cfg.channel
        self.subchannel_ids = tuple(range(chan.subchannel_count))
        self.noise_w = chan.noise_power_w
        self.bandwidth = chan.subchannel_bandwidth_hz
        self.shadowing = ShadowingSampler(self.seed, chan.shadowing_sigma_db, n)
        self.fading = FadingSampler(self.seed, n, chan.subchannel_count)
        self.oma_offset = 0
        self.waits = {i: 0 for i in self.tx_indices}
        self.utility_trace: list[float] = []
        self.allocator_moves = 0
        self.allocator_converged = True
        self.starved_vehicle_periods = 0
        self.power_traces: list = []

    # ---- per-period scheduling -------------------------------------------

    def _priority_order(self) -> list[int]:
        cfg: AllocatorConfig = self.cfg.allocator
        if cfg.priority_rule == "by_wait_time":
            return sorted(self.tx_indices,
                          key=lambda i: (-self.waits[i], self.vehicles[i].id))
        return sorted(self.tx_indices, key=lambda i: self.vehicles[i].id)

    def _utility_context(self, chan: PeriodChannel) -> UtilityContext:
        txs = self.tx_indices
        gains: list[list[float]] = []
        for a in txs:
            row = []
            for b in txs:
                rx = self.target_idx[b]
                row.append(float(chan.large_scale[a, rx]) if chan.disk[a, rx] else 0.0)
            gains.append(row)
        phy_cfg: PhyConfig = self.cfg.phy
        return UtilityContext(
            tx_ids=tuple(txs),
            gains=gains,
            noise_w=self.noise_w,
            nominal_power_w=phy_cfg.tx_power_max_w,
            rate_threshold_bps=phy_cfg.rate_threshold_bps,
            logistic_slope_per_bps=phy_cfg.logistic_slope_per_bps,
            bandwidth_hz=self.bandwidth,
        )

    def _allocate(self, chan: PeriodChannel, period: int) -> Matching:
        order = self._priority_order()
        if self.cfg.scheme == SCHEME_OMA:
            n_tx = len(order)
            # under by_id the round-robin offset provides the deferral
            # rotation; under by_wait_time the wait ordering already does
            if n_tx and self.cfg.allocator.priority_rule == "by_id":
                off = self.oma_offset % n_tx
                order = order[off:] + order[:off]
            m = oma_baseline_allocate(order, self.subchannel_ids)
            self.oma_offset = (self.oma_offset + len(m.assignment)) % max(n_tx, 1)
            return m
        rng = substream(self.seed, STREAM_ALLOC, period)
        m = init_matching(order, self.subchannel_ids, self.cfg.allocator, rng)
        ctx = self._utility_context(chan)
        m, diag = swap_matching(m, ctx, self.cfg.allocator)
        self.utility_trace.append(diag.final_utility)
        self.allocator_moves += diag.moves
        self.allocator_converged &= diag.converged
        return m

    # ---- per-period execution --------------------------------------------

    def run_sps_period(self, period: int) -> tuple[list[SlotOutcome], list[PacketRecord]]:
        cfg = self.cfg
        time_cfg: TimeConfig = cfg.time
        if period > 0:
            dt = time_cfg.sps_period_slots * time_cfg.slot_duration_s
            self.vehicles = advance_mobility(self.vehicles, dt, self.road)
        chan = PeriodChannel.build(
            self.vehicles, self.road, self.comm_range, cfg.channel,
            self.shadowing, period,
        )
        if cfg.mode == MODE_BROADCAST:
            return self._run_broadcast_period(period, chan)
        return self._run_unicast_period(period, chan)

    def _run_unicast_period(self, period: int, chan: PeriodChannel):
        cfg = self.cfg
        time_cfg: TimeConfig = cfg.time
        matching = self._allocate(chan, period)
        occupants = {k: v for k, v in matching.occupants_map().items() if v}
        assignment = dict(matching.assignment)
        served = {tx for tx, ks in assignment.items() if ks}
        for tx in self.tx_indices:
            self.waits[tx] = 0 if tx in served else self.waits[tx] + 1

        packets = {
            tx: PacketRecord(
                tx_id=self.vehicles[tx].id,
                rx_id=self.vehicles[self.target_idx[tx]].id,
                period=period,
                distance_m=float(chan.dist[tx, self.target_idx[tx]]),
                scheduled=tx in served,
            )
            for tx in self.tx_indices
        }
        rx_users = tuple(sorted(self.target_idx[tx] for tx in served))
        targets = {tx: self.target_idx[tx] for tx in served}
        outcomes: list[SlotOutcome] = []
        state = SlotState(
            mode=MODE_UNICAST,
            occupants=occupants,
            assignment={tx: assignment[tx] for tx in served},
            gains=None,
            disk=chan.disk,
            rx_users=rx_users,
            target_rx=targets,
            neighbors={},
            noise_w=self.noise_w,
            phy=cfg.phy,
            bandwidth_hz=self.bandwidth,
        )
        for s in range(time_cfg.sps_period_slots):
            slot_global = period * time_cfg.sps_period_slots + s
            state.gains = chan.slot_gains(self.fading, slot_global)
            powers, knowledge, ctl = run_control_portion(
                state, cfg.control, keep_power_trace=self.keep_power_traces)
            if self.keep_power_traces:
                self.power_traces.append(
                    {"period": period, "slot": s, "powers": ctl.power_trace})
            slot_outcomes = []
            for tx in sorted(served):
                rx = targets[tx]
                best_rate = 0.0
                best_decoded = False
                best_k: int | None = None
                for k in assignment[tx]:
                    entries = knowledge[rx].get(k)
                    if not entries:
                        continue
                    gains_map = {t: g for t, g, _ in entries}
                    if tx not in gains_map:
                        continue
                    powers_map = {t: p for t, _, p in entries}
                    order = sic_order(rx, k, gains_map)
                    for t, r, ok in decode_outcomes(
                            order, powers_map, gains_map, self.noise_w,
                            cfg.phy.rate_threshold_bps, self.bandwidth):
                        if t != tx:
                            continue
                        if (ok and not best_decoded) or (
                                ok == best_decoded and r > best_rate):
                            best_rate = r
                            best_decoded = ok
                            best_k = k
                latency = None
                pkt = packets[tx]
                if best_decoded and pkt.delivered_slot is None:
                    latency = (s + 1) * time_cfg.slot_duration_s
                    pkt.delivered_slot = s
                    pkt.latency_s = latency
                slot_outcomes.append(SlotOutcome(
                    tx_id=self.vehicles[tx].id,
                    rx_id=self.vehicles[rx].id,
                    period=period,
                    slot_in_period=s,
                    subchannel=best_k,
                    rate_bps=best_rate,
                    decoded=best_decoded,
                    latency_s=latency,
                ))
            outcomes.extend(slot_outcomes)
            if self.slot_hook is not None:
                self.slot_hook({
                    "mode": MODE_UNICAST,
                    "period": period,
                    "slot": s,
                    "occupants": occupants,
                    "assignment": assignment,
                    "powers": powers,
                    "knowledge": knowledge,
                    "outcomes": slot_outcomes,
                })
        return outcomes, list(packets.values())

    def _run_broadcast_period(self, period: int, chan: PeriodChannel):
        cfg = self.cfg
        time_cfg: TimeConfig = cfg.time
        alloc_cfg: AllocatorConfig = cfg.allocator
        ids_sorted = sorted(range(len(self.vehicles)),
                            key=lambda i: self.vehicles[i].id)
        adjacency = {
            i: set(np.nonzero(chan.disk[i])[0].tolist()) for i in ids_sorted
        }
        packets: dict[tuple[int, int], PacketRecord] = {}
        for v in ids_sorted:
            for r in sorted(adjacency[v]):
                packets[(v, r)] = PacketRecord(
                    tx_id=self.vehicles[v].id,
                    rx_id=self.vehicles[r].id,
                    period=period,
                    distance_m=float(chan.dist[v, r]),
                )
        served: set[int] = set()
        q_sc = alloc_cfg.q_sc if cfg.scheme == SCHEME_NOMA else 1
        q_tx = alloc_cfg.q_tx if cfg.scheme == SCHEME_NOMA else 1
        outcomes: list[SlotOutcome] = []
        for s in range(time_cfg.sps_period_slots):
            slot_global = period * time_cfg.sps_period_slots + s
            tx_order, rx_list = broadcast_txrx_selection(
                ids_sorted, adjacency, s, served)
            assignment = _broadcast_assign(tx_order, self.subchannel_ids, q_tx, q_sc)
            active = {tx: ks for tx, ks in assignment.items() if ks}
            served |= set(active)
            occupants: dict[int, tuple[int, ...]] = {}
            for tx in sorted(active):
                for k in active[tx]:
                    occupants.setdefault(k, ())
                    occupants[k] = occupants[k] + (tx,)
            neighbors_map = {
                tx: tuple(sorted(adjacency[tx])) for tx in active
            }
            state = SlotState(
                mode=MODE_BROADCAST,
                occupants=occupants,
                assignment=active,
                gains=chan.slot_gains(self.fading, slot_global),
                disk=chan.disk,
                rx_users=tuple(rx_list),
                target_rx={},
                neighbors=neighbors_map,
                noise_w=self.noise_w,
                phy=cfg.phy,
                bandwidth_hz=self.bandwidth,
                coverage_fraction=cfg.control.broadcast_coverage_fraction,
            )
            powers, knowledge, _ = run_control_portion(
                state, cfg.control, keep_power_trace=self.keep_power_traces)
            for tx in active:
                for r in adjacency[tx]:
                    pkt = packets[(tx, r)]
                    pkt.scheduled = True
            slot_outcomes = []
            for rx in rx_list:
                for k, entries in knowledge[rx].items():
                    gains_map = {t: g for t, g, _ in entries}
                    powers_map = {t: p for t, _, p in entries}
                    order = sic_order(rx, k, gains_map)
                    for t, r, ok in decode_outcomes(
                            order, powers_map, gains_map, self.noise_w,
                            cfg.phy.rate_threshold_bps, self.bandwidth):
                        pkt = packets.get((t, rx))
                        if pkt is None:
                            continue
                        latency = None
                        if ok and pkt.delivered_slot is None:
                            latency = (s + 1) * time_cfg.slot_duration_s
                            pkt.delivered_slot = s
                            pkt.latency_s = latency
                        slot_outcomes.append(SlotOutcome(
                            tx_id=self.vehicles[t].id,
                            rx_id=self.vehicles[rx].id,
                            period=period,
                            slot_in_period=s,
                            subchannel=k,
                            rate_bps=r,
                            decoded=ok,
                            latency_s=latency,
                        ))
            outcomes.extend(slot_outcomes)
            if self.slot_hook is not None:
                self.slot_hook({
                    "mode": MODE_BROADCAST,
                    "period": period,
                    "slot": s,
                    "tx_set": list(active),
                    "rx_set": list(rx_list),
                    "adjacency": adjacency,
                    "occupants": occupants,
                    "assignment": active,
                    "powers": powers,
                    "knowledge": knowledge,
                    "outcomes": slot_outcomes,
                })
        never_served = set(ids_sorted) - served
        self.starved_vehicle_periods += len(never_served)
        return outcomes, list(packets.values())

    # ---- whole run ---------------------------------------------------------

    def run(self) -> RunMetrics:
        cfg = self.cfg
        all_packets: list[PacketRecord] = []
        for period in range(cfg.time.periods_per_run):
            _, packets = self.run_sps_period(period)
            all_packets.extend(packets)
        edges = distance_bin_edges(self.comm_range, cfg.distance_bin_m)
        agg = aggregate_metrics(
            all_packets, edges, cfg.time.latency_deadline_s,
            cfg.time.periods_per_run,
        )
        return RunMetrics(
            scheme=cfg.scheme,
            mode=cfg.mode,
            seed=self.seed,
            utility_trace=list(self.utility_trace),
            allocator_moves_total=self.allocator_moves,
            allocator_converged_all=self.allocator_converged,
            starved_vehicle_periods=self.starved_vehicle_periods,
            power_traces=self.power_traces if self.keep_power_traces else None,
            **agg,
        )


def run_simulation(cfg, seed: int | None = None, **kwargs) -> RunMetrics:
    """Run one seed of the configured scheme and mode and return its metrics."""
    return Simulation(cfg, seed=seed, **kwargs).run()
