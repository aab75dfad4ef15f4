"""Dual-controller PLC cycle-time simulator and benchmark harness.

Simulates (and optionally runs live over real sockets) a two-CPU PLC design
where a dedicated IO controller keeps a fixed scan cycle behind a timeout-
guarded serial link, while the network-facing controller absorbs the traffic.
The single-CPU free-running design is included as the degradation reference.
"""

from __future__ import annotations

from .core import (ConfigError, DurationDistribution, NetCpuModel, Overrun,
                   PhaseBudget, SimConfig, TrafficProfile, default_config,
                   load_config)
from .engine import Trace, run, trace_hash
from .metrics import CycleRecord, JitterSummary, load_cycles, load_summary, summarize

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "CycleRecord",
    "DurationDistribution",
    "JitterSummary",
    "NetCpuModel",
    "Overrun",
    "PhaseBudget",
    "SimConfig",
    "Trace",
    "TrafficProfile",
    "default_config",
    "load_config",
    "load_cycles",
    "load_summary",
    "run",
    "summarize",
    "trace_hash",
    "__version__",
]
