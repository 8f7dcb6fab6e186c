"""Subchannel assignment for one scheduling period.

A matching assigns transmitters to subchannels under two-sided quotas (at most
q_tx subchannels per transmitter, at most q_sc transmitters per subchannel).
Its utility is the expected number of decodable co-channel signals under the
scheduler's large-scale channel knowledge: for every assigned (transmitter,
subchannel) pair, multiply the logistic success terms of that link and of all
stronger co-channel links at the same target receiver (a weaker signal is only
decodable after every stronger one has been peeled off), then sum the products
over assigned pairs.

The search starts from a seeded random matching built in priority order and
performs local improvement over pairwise exchanges and moves into free
capacity, stopping when no single move raises the utility. An exhaustive
enumerator provides the exact optimum on small instances for auditing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .phy import logistic_success


class AllocationError(Exception):
    """Infeasible or invalid allocation request."""


# smallest utility gain that counts as a strict improvement; without it the
# search walks huge plateaus of rounding-level deltas between near-identical
# matchings (utilities are O(1) per assignment)
IMPROVEMENT_EPS = 1e-9


@dataclass(frozen=True)
class AllocatorConfig:
    q_tx: int = 2
    q_sc: int = 2
    max_swap_iterations: int = 1000
    priority_rule: str = "by_id"  # or "by_wait_time"


@dataclass
class Matching:
    """Transmitter-to-subchannel assignment under quotas."""

    subchannel_ids: tuple[int, ...]
    q_tx: int
    q_sc: int
    assignment: dict[int, tuple[int, ...]]  # tx -> sorted subchannels

    def pairs(self):
        for tx in sorted(self.assignment):
            for k in self.assignment[tx]:
                yield tx, k

    def occupants_map(self) -> dict[int, tuple[int, ...]]:
        occ: dict[int, list[int]] = {k: [] for k in self.subchannel_ids}
        for tx in sorted(self.assignment):
            for k in self.assignment[tx]:
                occ[k].append(tx)
        return {k: tuple(v) for k, v in occ.items()}

    def check_quotas(self) -> None:
        for tx, ks in self.assignment.items():
            if len(set(ks)) != len(ks):
                raise AllocationError(f"tx {tx} assigned a subchannel twice")
            if len(ks) > self.q_tx:
                raise AllocationError(
                    f"tx {tx} holds {len(ks)} subchannels, quota is {self.q_tx}")
            for k in ks:
                if k not in self.subchannel_ids:
                    raise AllocationError(f"tx {tx} assigned unknown subchannel {k}")
        for k, txs in self.occupants_map().items():
            if len(txs) > self.q_sc:
                raise AllocationError(
                    f"subchannel {k} carries {len(txs)} tx users, quota is {self.q_sc}")


@dataclass
class UtilityContext:
    """Scheduler-side inputs for scoring matchings.

    ``gains[a][b]`` is the large-scale gain from transmitter ``a`` to the
    target receiver of transmitter ``b``, or 0.0 when that receiver lies
    outside ``a``'s interference range (such a transmitter neither appears in
    the decode order nor contributes interference there). Large-scale
    knowledge is frequency flat, so a subchannel's value depends only on which
    transmitters share it.
    """

    tx_ids: tuple[int, ...]
    gains: list[list[float]]
    noise_w: float
    nominal_power_w: float
    rate_threshold_bps: float
    logistic_slope_per_bps: float
    bandwidth_hz: float

    def __post_init__(self):
        self._index = {tx: i for i, tx in enumerate(self.tx_ids)}
        self._value_cache: dict[tuple[int, ...], float] = {(): 0.0}

    def subchannel_value(self, occupants: tuple[int, ...]) -> float:
        v = self._value_cache.get(occupants)
        if v is None:
            v = self._compute_value(occupants)
            self._value_cache[occupants] = v
        return v

    def _compute_value(self, occupants: tuple[int, ...]) -> float:
        idx = self._index
        gains = self.gains
        noise = self.noise_w
        p = self.nominal_power_w
        bw = self.bandwidth_hz
        th = self.rate_threshold_bps
        slope = self.logistic_slope_per_bps
        total = 0.0
        for b in occupants:
            bi = idx[b]
            # co-channel signals visible at b's target receiver, strongest first
            entries = []
            for a in occupants:
                g = gains[idx[a]][bi]
                if a == b or g > 0.0:
                    entries.append((-g, a, g))
            entries.sort()
            received = [p * g for _, _, g in entries]
            suffix = [0.0] * (len(received) + 1)
            for i in range(len(received) - 1, -1, -1):
                suffix[i] = suffix[i + 1] + received[i]
            prod = 1.0
            for i, (_, a, _) in enumerate(entries):
                r = bw * math.log2(1.0 + received[i] / (noise + suffix[i + 1]))
                prod *= logistic_success(r, th, slope)
                if a == b:
                    break
            total += prod
        return total


def matching_utility(matching: Matching, ctx: UtilityContext) -> float:
    """Total utility of a quota-feasible matching (0 for an empty one)."""
    matching.check_quotas()
    return math.fsum(
        ctx.subchannel_value(occ) for occ in matching.occupants_map().values()
    )


def init_matching(tx_priority: list[int], subchannel_ids: tuple[int, ...],
                  config: AllocatorConfig, rng: np.random.Generator) -> Matching:
    """Random initial matching.

    Transmitters pick uniformly among subchannels with residual capacity, in
    priority order, each taking as many as its quota allows while leaving at
    least one capacity unit for every transmitter behind it.
    """
    k_count = len(subchannel_ids)
    capacity = k_count * config.q_sc
    if capacity < len(tx_priority):
        raise AllocationError(
            f"{len(tx_priority)} tx users exceed subchannel capacity "
            f"{k_count} * {config.q_sc} = {capacity}"
        )
    loads = {k: 0 for k in subchannel_ids}
    residual = capacity
    remaining = len(tx_priority)
    assignment: dict[int, tuple[int, ...]] = {}
    for tx in tx_priority:
        remaining -= 1
        avail = [k for k in subchannel_ids if loads[k] < config.q_sc]
        take = min(config.q_tx, len(avail), residual - remaining)
        picked = rng.choice(len(avail), size=take, replace=False)
        ks = tuple(sorted(avail[i] for i in picked))
        assignment[tx] = ks
        for k in ks:
            loads[k] += 1
        residual -= take
    return Matching(tuple(subchannel_ids), config.q_tx, config.q_sc, assignment)


@dataclass
class SwapDiagnostics:
    moves: int = 0
    scans: int = 0
    converged: bool = False
    final_utility: float = 0.0
    utility_trace: list[float] = field(default_factory=list)


def _tuple_without(t: tuple[int, ...], x: int) -> tuple[int, ...]:
    return tuple(v for v in t if v != x)


def _tuple_with(t: tuple[int, ...], x: int) -> tuple[int, ...]:
    return tuple(sorted(t + (x,)))


def _tuple_replace(t: tuple[int, ...], old: int, new: int) -> tuple[int, ...]:
    return tuple(sorted(new if v == old else v for v in t))


def _find_improving_move(asg: dict[int, tuple[int, ...]],
                         occ: dict[int, tuple[int, ...]],
                         subchannel_ids: tuple[int, ...],
                         q_sc: int,
                         value) -> tuple | None:
    """First utility-improving move in a deterministic lexicographic scan:
    all pairwise exchanges of assignments, then all moves into free capacity."""
    assignments = [(tx, k) for tx in sorted(asg) for k in asg[tx]]
    for i, (j1, k1) in enumerate(assignments):
        a1 = asg[j1]
        o1 = occ[k1]
        v1 = value(o1)
        for j2, k2 in assignments[i + 1:]:
            if j1 == j2 or k1 == k2:
                continue
            if k2 in a1 or k1 in asg[j2]:
                continue
            o2 = occ[k2]
            n1 = _tuple_replace(o1, j1, j2)
            n2 = _tuple_replace(o2, j2, j1)
            delta = value(n1) + value(n2) - v1 - value(o2)
            if delta > IMPROVEMENT_EPS:
                return ("swap", j1, k1, j2, k2, n1, n2, delta)
    for j1, k1 in assignments:
        a1 = asg[j1]
        o1 = occ[k1]
        v1 = value(o1)
        n1 = _tuple_without(o1, j1)
        base = value(n1) - v1
        for k2 in subchannel_ids:
            if k2 == k1 or k2 in a1:
                continue
            o2 = occ[k2]
            if len(o2) >= q_sc:
                continue
            n2 = _tuple_with(o2, j1)
            delta = base + value(n2) - value(o2)
            if delta > IMPROVEMENT_EPS:
                return ("move", j1, k1, None, k2, n1, n2, delta)
    return None


def swap_matching(initial: Matching, ctx: UtilityContext,
                  config: AllocatorConfig) -> tuple[Matching, SwapDiagnostics]:
    """Improve a matching by local search until no exchange or vacancy move
    strictly increases the utility, or the move budget runs out.

    Each executed move strictly increases the total utility, so the search
    cannot cycle; quotas are preserved by construction at every step.
    """
    initial.check_quotas()
    asg = dict(initial.assignment)
    occ = initial.occupants_map()
    value = ctx.subchannel_value
    util = math.fsum(value(o) for o in occ.values())
    diag = SwapDiagnostics(utility_trace=[util])
    while diag.moves < config.max_swap_iterations:
        diag.scans += 1
        move = _find_improving_move(asg, occ, initial.subchannel_ids, config.q_sc, value)
        if move is None:
            diag.converged = True
            break
        kind, j1, k1, j2, k2, n1, n2, delta = move
        if kind == "swap":
            asg[j1] = _tuple_with(_tuple_without(asg[j1], k1), k2)
            asg[j2] = _tuple_with(_tuple_without(asg[j2], k2), k1)
        else:
            asg[j1] = _tuple_with(_tuple_without(asg[j1], k1), k2)
        occ[k1] = n1
        occ[k2] = n2
        assert len(occ[k2]) <= config.q_sc  # quotas hold at every intermediate step
        util += delta
        diag.moves += 1
        diag.utility_trace.append(util)
    diag.final_utility = util
    return Matching(initial.subchannel_ids, initial.q_tx, initial.q_sc, asg), diag


def feasible_enumeration_bound(n_tx: int, n_subchannels: int, q_tx: int) -> int:
    """Upper bound on the number of (possibly partial) assignments enumerated
    by the exhaustive search: per-transmitter subset count to the n_tx power."""
    options = sum(math.comb(n_subchannels, s) for s in range(min(q_tx, n_subchannels) + 1))
    return options ** n_tx


def brute_force_alloc(tx_ids: tuple[int, ...], subchannel_ids: tuple[int, ...],
                      config: AllocatorConfig, ctx: UtilityContext,
                      enumeration_limit: int = 1_000_000
                      ) -> tuple[Matching, float]:
    """Exact utility maximum by exhaustive enumeration of all quota-feasible
    assignments, including partial and empty ones. Utility ties resolve to the
    lexicographically smallest set of (tx, subchannel) pairs."""
    bound = feasible_enumeration_bound(len(tx_ids), len(subchannel_ids), config.q_tx)
    if bound > enumeration_limit:
        raise AllocationError(
            f"enumeration bound {bound} exceeds limit {enumeration_limit}")
    options = []
    for size in range(min(config.q_tx, len(subchannel_ids)) + 1):
        options.extend(tuple(c) for c in combinations(subchannel_ids, size))
    txs = sorted(tx_ids)
    best_util = -1.0
    best_key: tuple | None = None
    best_asg: dict[int, tuple[int, ...]] | None = None
    loads = {k: 0 for k in subchannel_ids}
    chosen: dict[int, tuple[int, ...]] = {}

    def recurse(i: int):
        nonlocal best_util, best_key, best_asg
        if i == len(txs):
            occ: dict[int, list[int]] = {}
            for tx in txs:
                for k in chosen[tx]:
                    occ.setdefault(k, []).append(tx)
            util = math.fsum(
                ctx.subchannel_value(tuple(v)) for v in occ.values()
            )
            key = tuple(sorted((tx, k) for tx in txs for k in chosen[tx]))
            if util > best_util or (util == best_util and (best_key is None or key < best_key)):
                best_util = util
                best_key = key
                best_asg = dict(chosen)
            return
        tx = txs[i]
        for ks in options:
            if any(loads[k] >= config.q_sc for k in ks):
                continue
            for k in ks:
                loads[k] += 1
            chosen[tx] = ks
            recurse(i + 1)
            for k in ks:
                loads[k] -= 1
        del chosen[tx]

    recurse(0)
    assert best_asg is not None
    matching = Matching(tuple(subchannel_ids), config.q_tx, config.q_sc, best_asg)
    return matching, best_util


def oma_baseline_allocate(tx_order: list[int], subchannel_ids: tuple[int, ...]) -> Matching:
    """Strictly orthogonal baseline: one subchannel per transmitter, one
    transmitter per subchannel. Transmitters past capacity get nothing; the
    caller rotates the order across periods so they are served round-robin."""
    assignment = {tx: (k,) for tx, k in zip(tx_order, subchannel_ids)}
    return Matching(tuple(subchannel_ids), 1, 1, assignment)
