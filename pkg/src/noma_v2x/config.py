"""Run configuration: YAML loading, strict validation, defaulting, round trip.

Unknown keys are rejected, every validation failure names the exact field
path, and physical quantities carry their unit in the key name. dB/dBm values
are converted to linear only where consumed; the serialized effective
configuration always spells out derived defaults (such as thermal noise).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import yaml

from .allocator import AllocatorConfig
from .channel import ChannelConfig
from .engine import (
    MODE_BROADCAST,
    MODE_UNICAST,
    SCHEME_NOMA,
    SCHEME_OMA,
    TimeConfig,
)
from .phy import PhyConfig
from .powerctl import ControlConfig
from .scenario import RoadConfig, ScenarioConfig

SCHEMES = (SCHEME_NOMA, SCHEME_OMA)
MODES = (MODE_UNICAST, MODE_BROADCAST)
PRIORITY_RULES = ("by_id", "by_wait_time")


class ConfigError(Exception):
    """Invalid run configuration; the message names the offending field path."""


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioConfig
    channel: ChannelConfig
    phy: PhyConfig
    allocator: AllocatorConfig
    control: ControlConfig
    time: TimeConfig
    scheme: str = SCHEME_NOMA
    mode: str = MODE_UNICAST
    seeds: tuple[int, ...] = (0,)
    distance_bin_m: float = 50.0
    output_path: str | None = None

    def to_dict(self) -> dict:
        """Effective configuration with all defaults spelled out; feeding the
        result back through from_dict yields an equal effective configuration."""
        s = self.scenario
        c = self.channel
        return {
            "scenario": {
                "road": {
                    "length_m": s.road.length_m,
                    "lane_count": s.road.lane_count,
                    "lane_width_m": s.road.lane_width_m,
                    "wraparound": s.road.wraparound,
                },
                "vehicle_count": s.vehicle_count,
                "tx_fraction": s.tx_fraction,
                "comm_range_m": s.comm_range_m,
                "speed_min_mps": s.speed_min_mps,
                "speed_max_mps": s.speed_max_mps,
                "rng_seed": s.rng_seed,
            },
            "channel": {
                "pathloss_exponent": c.pathloss_exponent,
                "reference_loss_db": c.reference_loss_db,
                "reference_distance_m": c.reference_distance_m,
                "shadowing_sigma_db": c.shadowing_sigma_db,
                "subchannel_bandwidth_hz": c.subchannel_bandwidth_hz,
                "subchannel_count": c.subchannel_count,
                "noise_power_dbm_per_subchannel": c.noise_dbm,
            },
            "phy": {
                "rate_threshold_bps": self.phy.rate_threshold_bps,
                "logistic_slope_per_mbps": self.phy.logistic_slope_per_mbps,
                "tx_power_max_dbm": self.phy.tx_power_max_dbm,
                "interference_threshold_dbm": self.phy.interference_threshold_dbm,
            },
            "allocator": {
                "q_tx": self.allocator.q_tx,
                "q_sc": self.allocator.q_sc,
                "max_swap_iterations": self.allocator.max_swap_iterations,
                "priority_rule": self.allocator.priority_rule,
            },
            "control": {
                "tc_iterations": self.control.tc_iterations,
                "broadcast_coverage_fraction": self.control.broadcast_coverage_fraction,
                "convergence_epsilon_w": self.control.convergence_epsilon_w,
            },
            "time": {
                "sps_period_slots": self.time.sps_period_slots,
                "slot_duration_s": self.time.slot_duration_s,
                "periods_per_run": self.time.periods_per_run,
                "latency_deadline_s": self.time.latency_deadline_s,
            },
            "scheme": self.scheme,
            "mode": self.mode,
            "seeds": list(self.seeds),
            "distance_bin_m": self.distance_bin_m,
            "output_path": self.output_path,
        }


@dataclass(frozen=True)
class SweepSpec:
    parameter: str            # dotted path into the run configuration
    values: tuple
    schemes: tuple[str, ...] = SCHEMES


class _Section:
    """Strict key-by-key reader over one mapping of the configuration file."""

    def __init__(self, data, path: str):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(f"{path or 'configuration'}: expected a mapping")
        self.data = dict(data)
        self.path = path

    def _p(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def take(self, key: str, default, kind, allow_none: bool = False):
        present = key in self.data
        value = self.data.pop(key, default)
        if value is None:
            if allow_none or not present:
                return default if not present else None
            raise ConfigError(f"{self._p(key)}: must not be null")
        if kind is bool:
            if not isinstance(value, bool):
                raise ConfigError(f"{self._p(key)}: expected a boolean")
            return value
        if kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{self._p(key)}: expected an integer")
            return value
        if kind is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{self._p(key)}: expected a number")
            return float(value)
        if kind is str:
            if not isinstance(value, str):
                raise ConfigError(f"{self._p(key)}: expected a string")
            return value
        raise AssertionError(kind)

    def section(self, key: str) -> "_Section":
        return _Section(self.data.pop(key, None), self._p(key))

    def finish(self):
        for key in self.data:
            raise ConfigError(f"unknown key {self._p(key)}")


def _check(cond: bool, path: str, message: str):
    if not cond:
        raise ConfigError(f"{path}: {message}")


def from_dict(data: dict | None) -> RunConfig:
    root = _Section(data, "")

    sc = root.section("scenario")
    road_sec = sc.section("road")
    road = RoadConfig(
        length_m=road_sec.take("length_m", 1000.0, float),
        lane_count=road_sec.take("lane_count", 4, int),
        lane_width_m=road_sec.take("lane_width_m", 4.0, float),
        wraparound=road_sec.take("wraparound", True, bool),
    )
    road_sec.finish()
    _check(road.length_m > 0, "scenario.road.length_m", "must be positive")
    _check(road.lane_count >= 1, "scenario.road.lane_count", "must be at least 1")
    _check(road.lane_width_m > 0, "scenario.road.lane_width_m", "must be positive")
    rng_seed = sc.take("rng_seed", None, int, allow_none=True)
    scenario = ScenarioConfig(
        road=road,
        vehicle_count=sc.take("vehicle_count", 40, int),
        tx_fraction=sc.take("tx_fraction", 0.2, float),
        comm_range_m=sc.take("comm_range_m", 150.0, float),
        speed_min_mps=sc.take("speed_min_mps", 15.0, float),
        speed_max_mps=sc.take("speed_max_mps", 30.0, float),
        rng_seed=rng_seed,
    )
    sc.finish()
    _check(scenario.vehicle_count >= 1, "scenario.vehicle_count", "must be at least 1")
    _check(0.0 < scenario.tx_fraction < 1.0, "scenario.tx_fraction",
           "must lie in (0, 1)")
    _check(scenario.tx_fraction * scenario.vehicle_count >= 1.0 - 1e-9,
           "scenario.tx_fraction", "tx_fraction * vehicle_count must be at least 1")
    _check(scenario.comm_range_m > 0, "scenario.comm_range_m", "must be positive")
    _check(scenario.speed_min_mps >= 0, "scenario.speed_min_mps", "must be >= 0")
    _check(scenario.speed_max_mps >= scenario.speed_min_mps,
           "scenario.speed_max_mps", "must be >= speed_min_mps")

    ch = root.section("channel")
    channel = ChannelConfig(
        pathloss_exponent=ch.take("pathloss_exponent", 3.0, float),
        reference_loss_db=ch.take("reference_loss_db", 47.0, float),
        reference_distance_m=ch.take("reference_distance_m", 1.0, float),
        shadowing_sigma_db=ch.take("shadowing_sigma_db", 3.0, float),
        subchannel_bandwidth_hz=ch.take("subchannel_bandwidth_hz", 180e3, float),
        subchannel_count=ch.take("subchannel_count", 10, int),
        noise_power_dbm_per_subchannel=ch.take(
            "noise_power_dbm_per_subchannel", None, float, allow_none=True),
    )
    ch.finish()
    _check(channel.pathloss_exponent > 0, "channel.pathloss_exponent",
           "must be positive")
    _check(channel.reference_distance_m > 0, "channel.reference_distance_m",
           "must be positive")
    _check(channel.shadowing_sigma_db >= 0, "channel.shadowing_sigma_db",
           "must be >= 0")
    _check(channel.subchannel_bandwidth_hz > 0, "channel.subchannel_bandwidth_hz",
           "must be positive")
    _check(channel.subchannel_count >= 1, "channel.subchannel_count",
           "must be at least 1")

    ph = root.section("phy")
    phy = PhyConfig(
        rate_threshold_bps=ph.take("rate_threshold_bps", 2.5e6, float),
        logistic_slope_per_mbps=ph.take("logistic_slope_per_mbps", 5.0, float),
        tx_power_max_dbm=ph.take("tx_power_max_dbm", 14.0, float),
        interference_threshold_dbm=ph.take("interference_threshold_dbm", -90.0, float),
    )
    ph.finish()
    _check(phy.rate_threshold_bps > 0, "phy.rate_threshold_bps", "must be positive")
    _check(phy.logistic_slope_per_mbps > 0, "phy.logistic_slope_per_mbps",
           "must be positive")

    al = root.section("allocator")
    allocator = AllocatorConfig(
        q_tx=al.take("q_tx", 2, int),
        q_sc=al.take("q_sc", 2, int),
        max_swap_iterations=al.take("max_swap_iterations", 1000, int),
        priority_rule=al.take("priority_rule", "by_id", str),
    )
    al.finish()
    _check(allocator.q_tx >= 1, "allocator.q_tx", "must be at least 1")
    _check(allocator.q_sc >= 1, "allocator.q_sc", "must be at least 1")
    _check(allocator.max_swap_iterations >= 1, "allocator.max_swap_iterations",
           "must be at least 1")
    _check(allocator.priority_rule in PRIORITY_RULES, "allocator.priority_rule",
           f"must be one of {PRIORITY_RULES}")

    co = root.section("control")
    control = ControlConfig(
        tc_iterations=co.take("tc_iterations", 4, int),
        broadcast_coverage_fraction=co.take("broadcast_coverage_fraction", 0.2, float),
        convergence_epsilon_w=co.take("convergence_epsilon_w", 1e-9, float),
    )
    co.finish()
    _check(control.tc_iterations >= 1, "control.tc_iterations", "must be at least 1")
    _check(0.0 < control.broadcast_coverage_fraction <= 1.0,
           "control.broadcast_coverage_fraction", "must lie in (0, 1]")
    _check(control.convergence_epsilon_w > 0, "control.convergence_epsilon_w",
           "must be positive")

    tm = root.section("time")
    time_cfg = TimeConfig(
        sps_period_slots=tm.take("sps_period_slots", 10, int),
        slot_duration_s=tm.take("slot_duration_s", 1e-3, float),
        periods_per_run=tm.take("periods_per_run", 100, int),
        latency_deadline_s=tm.take("latency_deadline_s", 10e-3, float),
    )
    tm.finish()
    _check(time_cfg.sps_period_slots >= 1, "time.sps_period_slots",
           "must be at least 1")
    _check(time_cfg.slot_duration_s > 0, "time.slot_duration_s", "must be positive")
    _check(time_cfg.periods_per_run >= 1, "time.periods_per_run",
           "must be at least 1")
    _check(time_cfg.latency_deadline_s >= time_cfg.slot_duration_s,
           "time.latency_deadline_s", "must be at least one slot duration")
    period_s = time_cfg.sps_period_slots * time_cfg.slot_duration_s
    ratio = period_s / time_cfg.latency_deadline_s
    _check(0.1 <= ratio <= 10.0, "time.sps_period_slots",
           "period length must stay within one order of magnitude of "
           "latency_deadline_s")

    scheme = root.take("scheme", SCHEME_NOMA, str)
    _check(scheme in SCHEMES, "scheme", f"must be one of {SCHEMES}")
    mode = root.take("mode", MODE_UNICAST, str)
    _check(mode in MODES, "mode", f"must be one of {MODES}")

    seeds_raw = root.data.pop("seeds", [0])
    _check(isinstance(seeds_raw, list) and len(seeds_raw) > 0, "seeds",
           "must be a non-empty list of integers")
    seeds = []
    for i, s in enumerate(seeds_raw):
        _check(isinstance(s, int) and not isinstance(s, bool) and s >= 0,
               f"seeds[{i}]", "must be a non-negative integer")
        seeds.append(s)

    distance_bin_m = root.take("distance_bin_m", 50.0, float)
    _check(distance_bin_m > 0, "distance_bin_m", "must be positive")
    output_path = root.take("output_path", None, str, allow_none=True)
    root.finish()

    return RunConfig(
        scenario=scenario,
        channel=channel,
        phy=phy,
        allocator=allocator,
        control=control,
        time=time_cfg,
        scheme=scheme,
        mode=mode,
        seeds=tuple(seeds),
        distance_bin_m=distance_bin_m,
        output_path=output_path,
    )


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    data = dict(data or {})
    data.pop("sweep", None)  # sweep section is read separately
    return from_dict(data)


def serialize_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)


def set_by_path(data: dict, dotted: str, value) -> dict:
    """Return a deep copy of the raw mapping with one dotted path replaced."""
    out = copy.deepcopy(data)
    parts = dotted.split(".")
    node = out
    for part in parts[:-1]:
        nxt = node.get(part)
        if nxt is None:
            nxt = {}
            node[part] = nxt
        if not isinstance(nxt, dict):
            raise ConfigError(f"sweep.parameter: {dotted} does not name a field")
        node = nxt
    node[parts[-1]] = value
    return out


def load_sweep(path) -> tuple[dict, SweepSpec]:
    """Read the raw run configuration plus its sweep section."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    sweep_raw = data.pop("sweep", None)
    if sweep_raw is None:
        raise ConfigError("sweep: section is required for the sweep command")
    sec = _Section(sweep_raw, "sweep")
    parameter = sec.take("parameter", None, str)
    if parameter is None:
        raise ConfigError("sweep.parameter: is required")
    values = sec.data.pop("values", None)
    if not isinstance(values, list) or not values:
        raise ConfigError("sweep.values: must be a non-empty list")
    schemes_raw = sec.data.pop("schemes", list(SCHEMES))
    if not isinstance(schemes_raw, list) or not schemes_raw:
        raise ConfigError("sweep.schemes: must be a non-empty list")
    for s in schemes_raw:
        if s not in SCHEMES:
            raise ConfigError(f"sweep.schemes: {s!r} must be one of {SCHEMES}")
    sec.finish()
    # validate the base configuration and every swept value up front
    from_dict(copy.deepcopy(data))
    for v in values:
        from_dict(set_by_path(data, parameter, v))
    spec = SweepSpec(parameter=parameter, values=tuple(values),
                     schemes=tuple(schemes_raw))
    return data, spec
