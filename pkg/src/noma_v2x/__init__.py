"""Slot-level simulator of non-orthogonal spectrum sharing for V2V sidelinks.

Subchannels are allocated centrally once per scheduling period from
large-scale channel knowledge; transmit powers are set distributedly every
slot from receiver feedback; receivers decode superposed co-channel signals
by successive cancellation. An orthogonal round-robin baseline and a
broadcast mode are included for comparison experiments.
"""

from .config import ConfigError, RunConfig, SweepSpec, from_dict, load_config
from .engine import (
    MODE_BROADCAST,
    MODE_UNICAST,
    SCHEME_NOMA,
    SCHEME_OMA,
    RunMetrics,
    Simulation,
    run_simulation,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "RunConfig",
    "SweepSpec",
    "from_dict",
    "load_config",
    "run_simulation",
    "Simulation",
    "RunMetrics",
    "SCHEME_NOMA",
    "SCHEME_OMA",
    "MODE_UNICAST",
    "MODE_BROADCAST",
]
