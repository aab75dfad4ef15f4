"""Shared domain types for the cycle-time simulator.

Everything time-valued is an integer number of microseconds.  Plain ints keep
the whole simulation exact and reproducible: there is no floating-point time
anywhere, and Python ints comfortably cover multi-week horizons.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from random import Random
from typing import Any

from . import channel

US_PER_S = 1_000_000

#: SysTick-style resolution of every time-based timeout check, in microseconds.
DEFAULT_TICK_US = 100

# Type alias for readability: all durations and timestamps are integer us.
Duration = int


class ConfigError(ValueError):
    """A configuration value or document is invalid."""


class Overrun(Exception):
    """The measurable phases exceeded the cycle budget.

    Carries the overshoot so callers can account for how late the cycle ran.
    """

    def __init__(self, overshoot_us: int) -> None:
        super().__init__(f"cycle budget exceeded by {overshoot_us} us")
        self.overshoot_us = overshoot_us


def rng_stream(seed: int, name: str) -> Random:
    """Derive an independent, reproducible RNG stream from the master seed.

    Separate streams (phase sampling, traffic arrivals, link corruption)
    keep the controller-side draw sequence independent of everything the
    network side does; that independence is what makes the guarded cycle
    trace provably identical across traffic scenarios.
    """
    return Random(f"{seed}:{name}")


# ===================================================================
# Duration distributions
# ===================================================================

_DIST_KINDS = ("constant", "uniform", "triangular")


@dataclass(frozen=True, slots=True)
class DurationDistribution:
    """Bounded distribution over integer microsecond durations.

    ``constant`` requires min == max; ``triangular`` additionally carries the
    mode.  Bounded support is deliberate: phase budgets must have a hard
    worst case or no cycle-time guarantee can be stated at all.
    """

    kind: str
    min_us: int
    max_us: int
    mode_us: int | None = None

    def validate(self, ctx: str = "distribution") -> None:
        if self.kind not in _DIST_KINDS:
            raise ConfigError(f"{ctx}: unknown kind {self.kind!r}")
        if self.min_us < 0 or self.max_us < self.min_us:
            raise ConfigError(f"{ctx}: need 0 <= min <= max, got "
                              f"[{self.min_us}, {self.max_us}]")
        if self.kind == "constant" and self.min_us != self.max_us:
            raise ConfigError(f"{ctx}: constant requires min == max")
        if self.kind == "triangular":
            if self.mode_us is None:
                raise ConfigError(f"{ctx}: triangular requires a mode")
            if not (self.min_us <= self.mode_us <= self.max_us):
                raise ConfigError(f"{ctx}: mode outside [min, max]")
        elif self.mode_us is not None:
            raise ConfigError(f"{ctx}: mode only valid for triangular")

    def sample(self, rng: Random) -> Duration:
        """Draw one duration; always within [min_us, max_us]."""
        if self.kind == "constant":
            return self.min_us
        if self.kind == "uniform":
            return rng.randint(self.min_us, self.max_us)
        x = rng.triangular(self.min_us, self.max_us, self.mode_us)
        v = round(x)
        if v < self.min_us:
            v = self.min_us
        elif v > self.max_us:
            v = self.max_us
        return v

    @staticmethod
    def constant(value: int) -> "DurationDistribution":
        return DurationDistribution("constant", value, value)

    @staticmethod
    def uniform(lo: int, hi: int) -> "DurationDistribution":
        return DurationDistribution("uniform", lo, hi)

    @staticmethod
    def triangular(lo: int, mode: int, hi: int) -> "DurationDistribution":
        return DurationDistribution("triangular", lo, hi, mode)

    def to_json(self) -> dict[str, Any]:
        d: dict[str, Any] = {"kind": self.kind, "min": self.min_us, "max": self.max_us}
        if self.kind == "triangular":
            d["mode"] = self.mode_us
        return d

    @staticmethod
    def from_json(obj: Any, ctx: str = "distribution") -> "DurationDistribution":
        d = _as_object(obj, ctx)
        kind = _take_str(d, "kind", ctx)
        lo = _take_int(d, "min", ctx)
        hi = _take_int(d, "max", ctx)
        mode = _take_int(d, "mode", ctx) if "mode" in d else None
        _reject_unknown(d, ctx)
        dist = DurationDistribution(kind, lo, hi, mode)
        dist.validate(ctx)
        return dist


# ===================================================================
# Virtual clock
# ===================================================================


@dataclass(slots=True)
class VirtualClock:
    """Monotonic integer-microsecond clock with a fixed timeout tick.

    ``tick_us`` models the resolution of every time-based timeout check:
    requested timeouts only take effect in whole ticks.
    """

    now_us: int = 0
    tick_us: int = DEFAULT_TICK_US

    def advance(self, to_us: int) -> None:
        if to_us < self.now_us:
            raise ValueError(f"clock may not move backwards "
                             f"({self.now_us} -> {to_us})")
        self.now_us = to_us

    def quantize_timeout(self, timeout_us: int) -> int:
        """Smallest whole number of ticks covering ``timeout_us``."""
        if timeout_us < 0:
            raise ValueError("timeout must be >= 0")
        return -(-timeout_us // self.tick_us) * self.tick_us


def quantize_timeout(timeout_us: int, tick_us: int = DEFAULT_TICK_US) -> int:
    """Module-level convenience mirroring VirtualClock.quantize_timeout."""
    if timeout_us < 0:
        raise ValueError("timeout must be >= 0")
    return -(-timeout_us // tick_us) * tick_us


# ===================================================================
# Phase budget and delay compensation
# ===================================================================


@dataclass(frozen=True, slots=True)
class PhaseBudget:
    """Per-phase time budget for one controller cycle."""

    read_in: DurationDistribution
    comm_timeout: Duration
    calc: DurationDistribution
    write_out: DurationDistribution
    target_cycle: Duration

    def validate(self, *, enforce_feasibility: bool = True,
                 tick_us: int = DEFAULT_TICK_US) -> None:
        self.read_in.validate("budget.read_in")
        self.calc.validate("budget.calc")
        self.write_out.validate("budget.write_out")
        if self.comm_timeout < 0:
            raise ConfigError("budget.comm_timeout must be >= 0")
        if self.target_cycle <= 0:
            raise ConfigError("budget.target_cycle must be > 0")
        if enforce_feasibility:
            worst = (self.read_in.max_us
                     + quantize_timeout(self.comm_timeout, tick_us)
                     + self.calc.max_us
                     + self.write_out.max_us)
            if worst > self.target_cycle:
                raise ConfigError(
                    f"budget infeasible: worst-case phase sum {worst} us "
                    f"exceeds target cycle {self.target_cycle} us")

    def to_json(self) -> dict[str, Any]:
        return {
            "read_in": self.read_in.to_json(),
            "comm_timeout": self.comm_timeout,
            "calc": self.calc.to_json(),
            "write_out": self.write_out.to_json(),
            "target_cycle": self.target_cycle,
        }

    @staticmethod
    def from_json(obj: Any, ctx: str = "budget") -> "PhaseBudget":
        d = _as_object(obj, ctx)
        budget = PhaseBudget(
            read_in=DurationDistribution.from_json(_take(d, "read_in", ctx), f"{ctx}.read_in"),
            comm_timeout=_take_int(d, "comm_timeout", ctx),
            calc=DurationDistribution.from_json(_take(d, "calc", ctx), f"{ctx}.calc"),
            write_out=DurationDistribution.from_json(_take(d, "write_out", ctx), f"{ctx}.write_out"),
            target_cycle=_take_int(d, "target_cycle", ctx),
        )
        _reject_unknown(d, ctx)
        return budget


def default_budget() -> PhaseBudget:
    return PhaseBudget(
        read_in=DurationDistribution.constant(100),
        comm_timeout=500,
        calc=DurationDistribution.uniform(20, 80),
        write_out=DurationDistribution.constant(50),
        target_cycle=1000,
    )


def compute_delay(target_cycle: Duration, read_us: Duration, comm_us: Duration,
                  calc_us: Duration, write_us: Duration) -> Duration:
    """Wait time that pads the measured phases up to the cycle target.

    Raises Overrun (with the overshoot) when the phases already exceed the
    target; the caller decides how an overrunning cycle is handled.
    """
    spent = read_us + comm_us + calc_us + write_us
    delay = target_cycle - spent
    if delay < 0:
        raise Overrun(-delay)
    return delay


# ===================================================================
# Traffic profile
# ===================================================================


@dataclass(frozen=True, slots=True)
class Arrival:
    """Packet arrival process for one traffic segment."""

    kind: str  # "poisson" | "constant_interval" | "none"
    rate_per_s: float = 0.0   # poisson only
    gap_us: int = 0           # constant_interval only

    def validate(self, ctx: str) -> None:
        if self.kind == "poisson":
            if not (self.rate_per_s > 0.0):
                raise ConfigError(f"{ctx}: poisson rate must be > 0")
        elif self.kind == "constant_interval":
            if self.gap_us <= 0:
                raise ConfigError(f"{ctx}: constant_interval gap must be > 0")
        elif self.kind != "none":
            raise ConfigError(f"{ctx}: unknown arrival kind {self.kind!r}")

    def to_json(self) -> dict[str, Any]:
        if self.kind == "poisson":
            return {"kind": "poisson", "rate": self.rate_per_s}
        if self.kind == "constant_interval":
            return {"kind": "constant_interval", "gap": self.gap_us}
        return {"kind": "none"}

    @staticmethod
    def from_json(obj: Any, ctx: str) -> "Arrival":
        d = _as_object(obj, ctx)
        kind = _take_str(d, "kind", ctx)
        arr = Arrival("none")
        if kind == "poisson":
            rate = _take(d, "rate", ctx)
            if not isinstance(rate, (int, float)) or isinstance(rate, bool):
                raise ConfigError(f"{ctx}: rate must be a number")
            arr = Arrival("poisson", rate_per_s=float(rate))
        elif kind == "constant_interval":
            arr = Arrival("constant_interval", gap_us=_take_int(d, "gap", ctx))
        elif kind != "none":
            raise ConfigError(f"{ctx}: unknown arrival kind {kind!r}")
        _reject_unknown(d, ctx)
        arr.validate(ctx)
        return arr


@dataclass(frozen=True, slots=True)
class TrafficSegment:
    label: str
    duration_us: int
    arrival: Arrival

    def to_json(self) -> dict[str, Any]:
        return {"label": self.label, "duration": self.duration_us,
                "arrival": self.arrival.to_json()}

    @staticmethod
    def from_json(obj: Any, ctx: str) -> "TrafficSegment":
        d = _as_object(obj, ctx)
        seg = TrafficSegment(
            label=_take_str(d, "label", ctx),
            duration_us=_take_int(d, "duration", ctx),
            arrival=Arrival.from_json(_take(d, "arrival", ctx), f"{ctx}.arrival"),
        )
        _reject_unknown(d, ctx)
        return seg


@dataclass(frozen=True, slots=True)
class TrafficProfile:
    segments: tuple[TrafficSegment, ...]

    def validate(self) -> None:
        if not self.segments:
            raise ConfigError("traffic: at least one segment required")
        labels = [s.label for s in self.segments]
        if len(set(labels)) != len(labels):
            raise ConfigError("traffic: segment labels must be unique")
        for i, seg in enumerate(self.segments):
            if seg.duration_us <= 0:
                raise ConfigError(f"traffic.segments[{i}]: duration must be > 0")
            seg.arrival.validate(f"traffic.segments[{i}].arrival")

    @property
    def total_duration_us(self) -> int:
        return sum(s.duration_us for s in self.segments)

    def boundaries(self) -> list[tuple[int, str]]:
        """(start_us, label) for each segment, in order."""
        out, t = [], 0
        for seg in self.segments:
            out.append((t, seg.label))
            t += seg.duration_us
        return out

    def to_json(self) -> dict[str, Any]:
        return {"segments": [s.to_json() for s in self.segments]}

    @staticmethod
    def from_json(obj: Any, ctx: str = "traffic") -> "TrafficProfile":
        d = _as_object(obj, ctx)
        raw = _take(d, "segments", ctx)
        if not isinstance(raw, list):
            raise ConfigError(f"{ctx}.segments must be a list")
        segs = tuple(TrafficSegment.from_json(s, f"{ctx}.segments[{i}]")
                     for i, s in enumerate(raw))
        _reject_unknown(d, ctx)
        prof = TrafficProfile(segs)
        prof.validate()
        return prof


def default_traffic(attack_rate_per_s: float = 100_000.0,
                    idle_rate_per_s: float = 10.0,
                    segment_s: int = 60) -> TrafficProfile:
    dur = segment_s * US_PER_S
    return TrafficProfile((
        TrafficSegment("pre_idle", dur, Arrival("poisson", rate_per_s=idle_rate_per_s)),
        TrafficSegment("attack", dur, Arrival("poisson", rate_per_s=attack_rate_per_s)),
        TrafficSegment("post_idle", dur, Arrival("poisson", rate_per_s=idle_rate_per_s)),
    ))


# ===================================================================
# Network CPU model
# ===================================================================


@dataclass(frozen=True, slots=True)
class NetCpuModel:
    """Cost model for the packet-facing CPU (one shared core, FIFO)."""

    per_packet_cost_us: int = 20
    queue_capacity: int = 256
    poll_interval_us: int = 1000
    drop_policy: str = "tail_drop"
    # Optional fairness cap: at most this many packets drained per controller
    # cycle in single-controller mode.  None means drain everything pending.
    per_cycle_packet_cap: int | None = None

    def validate(self) -> None:
        if self.per_packet_cost_us <= 0:
            raise ConfigError("net_cpu.per_packet_cost must be > 0")
        if self.queue_capacity <= 0:
            raise ConfigError("net_cpu.queue_capacity must be > 0")
        if self.poll_interval_us <= 0:
            raise ConfigError("net_cpu.poll_interval must be > 0")
        if self.drop_policy != "tail_drop":
            raise ConfigError(f"net_cpu.drop_policy: unsupported {self.drop_policy!r}")
        if self.per_cycle_packet_cap is not None and self.per_cycle_packet_cap <= 0:
            raise ConfigError("net_cpu.per_cycle_packet_cap must be > 0 when set")

    def to_json(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "per_packet_cost": self.per_packet_cost_us,
            "queue_capacity": self.queue_capacity,
            "poll_interval": self.poll_interval_us,
            "drop_policy": self.drop_policy,
        }
        if self.per_cycle_packet_cap is not None:
            d["per_cycle_packet_cap"] = self.per_cycle_packet_cap
        return d

    @staticmethod
    def from_json(obj: Any, ctx: str = "net_cpu") -> "NetCpuModel":
        d = _as_object(obj, ctx)
        model = NetCpuModel(
            per_packet_cost_us=_take_int(d, "per_packet_cost", ctx),
            queue_capacity=_take_int(d, "queue_capacity", ctx),
            poll_interval_us=_take_int(d, "poll_interval", ctx),
            drop_policy=_take_str(d, "drop_policy", ctx),
            per_cycle_packet_cap=(_take_int(d, "per_cycle_packet_cap", ctx)
                                  if "per_cycle_packet_cap" in d else None),
        )
        _reject_unknown(d, ctx)
        model.validate()
        return model


# ===================================================================
# Top-level simulation config
# ===================================================================

_MODES = ("dual", "baseline")


@dataclass(frozen=True, slots=True)
class SimConfig:
    """Complete, self-contained description of one simulation run."""

    budget: PhaseBudget
    channel: channel.ChannelConfig
    traffic: TrafficProfile
    net_cpu: NetCpuModel
    seed: int = 42
    toggle_period_cycles: int = 10
    mode: str = "dual"
    # Optional bounded uniform +/- jitter on output-update scheduling, in us.
    # Off by default; used by the jitter-reproduction scenario.
    write_jitter_us: int = 0

    def validate(self) -> None:
        if self.mode not in _MODES:
            raise ConfigError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if not (0 <= self.seed < 2 ** 64):
            raise ConfigError("seed must fit in 64 bits")
        if self.toggle_period_cycles < 1:
            raise ConfigError("toggle_period_cycles must be >= 1")
        if self.write_jitter_us < 0:
            raise ConfigError("write_jitter must be >= 0")
        # The guarded mode pads every cycle to the target, so the worst-case
        # phase sum must fit; the free-running mode has no wait phase and no
        # such requirement.
        self.budget.validate(enforce_feasibility=(self.mode == "dual"))
        if self.mode == "dual" and self.write_jitter_us > 0:
            worst = (self.budget.read_in.max_us
                     + quantize_timeout(self.budget.comm_timeout)
                     + self.budget.calc.max_us
                     + self.budget.write_out.max_us)
            if worst + self.write_jitter_us > self.budget.target_cycle:
                raise ConfigError("write_jitter exceeds the worst-case slack")
        self.channel.validate()
        self.traffic.validate()
        self.net_cpu.validate()

    # ---- JSON codec -------------------------------------------------

    def to_json(self) -> dict[str, Any]:
        return {
            "mode": self.mode,
            "seed": self.seed,
            "budget": self.budget.to_json(),
            "channel": self.channel.to_json(),
            "traffic": self.traffic.to_json(),
            "net_cpu": self.net_cpu.to_json(),
            "toggle_period_cycles": self.toggle_period_cycles,
            "write_jitter": self.write_jitter_us,
        }

    @staticmethod
    def from_json(obj: Any) -> "SimConfig":
        d = _as_object(obj, "config")
        cfg = SimConfig(
            mode=_take_str(d, "mode", "config"),
            seed=_take_int(d, "seed", "config"),
            budget=PhaseBudget.from_json(_take(d, "budget", "config")),
            channel=channel.ChannelConfig.from_json(_take(d, "channel", "config")),
            traffic=TrafficProfile.from_json(_take(d, "traffic", "config")),
            net_cpu=NetCpuModel.from_json(_take(d, "net_cpu", "config")),
            toggle_period_cycles=_take_int(d, "toggle_period_cycles", "config"),
            write_jitter_us=(_take_int(d, "write_jitter", "config")
                             if "write_jitter" in d else 0),
        )
        _reject_unknown(d, "config")
        cfg.validate()
        return cfg

    def canonical_json(self) -> bytes:
        return json.dumps(self.to_json(), sort_keys=True,
                          separators=(",", ":")).encode("ascii")

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json()).hexdigest()

    def with_seed(self, seed: int) -> "SimConfig":
        return replace(self, seed=seed)


def default_config(mode: str = "dual", seed: int = 42) -> SimConfig:
    cfg = SimConfig(
        budget=default_budget(),
        channel=channel.ChannelConfig(),
        traffic=default_traffic(),
        net_cpu=NetCpuModel(),
        seed=seed,
        mode=mode,
    )
    cfg.validate()
    return cfg


def load_config(path: str) -> SimConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return SimConfig.from_json(doc)


# ===================================================================
# Strict JSON helpers (unknown keys are errors, fail closed)
# ===================================================================


def _as_object(obj: Any, ctx: str) -> dict[str, Any]:
    if not isinstance(obj, dict):
        raise ConfigError(f"{ctx} must be a JSON object")
    return dict(obj)


def _take(d: dict[str, Any], key: str, ctx: str) -> Any:
    if key not in d:
        raise ConfigError(f"{ctx}: missing required key {key!r}")
    return d.pop(key)


def _take_int(d: dict[str, Any], key: str, ctx: str) -> int:
    v = _take(d, key, ctx)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{ctx}.{key} must be an integer")
    return v


def _take_str(d: dict[str, Any], key: str, ctx: str) -> str:
    v = _take(d, key, ctx)
    if not isinstance(v, str):
        raise ConfigError(f"{ctx}.{key} must be a string")
    return v


def _reject_unknown(d: dict[str, Any], ctx: str) -> None:
    if d:
        raise ConfigError(f"{ctx}: unknown key(s) {sorted(d)}")
