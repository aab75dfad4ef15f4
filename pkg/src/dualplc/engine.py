"""Deterministic discrete-event simulation engine.

Events execute in (time, kind priority, insertion order); the kind priority
is fixed (segment boundaries before controller cycle steps before poll work
before packet arrivals), so every run of a given configuration and seed
replays the exact same event sequence.

Packet arrivals are not individually queued as events: the packet CPU pulls
them lazily, always strictly before the instant any other event observes its
state.  Consuming them strictly-before matches the arrival kind having the
lowest same-instant priority, and keeps a multi-million-packet flood cheap.

The guarded controller's cycle is driven by its own boundary events (cycle
start, window open, window close); the master's poll attempts rendezvous with
the communication window through a small link mediator.  The controller's
random draws live on their own stream, so its cycle-duration series is a pure
function of budget and seed, independent of traffic and of master behaviour.
"""

from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass
from random import Random
from typing import Any, Iterator

from . import channel
from .baseline import BaselinePlc
from .core import (DEFAULT_TICK_US, SimConfig, TrafficProfile, US_PER_S,
                   VirtualClock, quantize_timeout, rng_stream)
from .io_controller import IoController
from .metrics import CycleRecord
from .network import AccumulatingQueue, NetCounters, PacketCpu

EVENT_KINDS = ("segment_boundary", "io_cycle_boundary", "poll_timer",
               "packet_arrival")

_KIND_PRIORITY = {kind: i for i, kind in enumerate(EVENT_KINDS)}


@dataclass(slots=True)
class Event:
    time_us: int
    kind: str
    payload: Any = None


class EventQueue:
    """Priority queue over Events with the deterministic tie-break."""

    def __init__(self) -> None:
        self._heap: list[tuple[int, int, int, Event]] = []
        self._seq = 0

    def schedule(self, ev: Event) -> None:
        heapq.heappush(self._heap, (ev.time_us, _KIND_PRIORITY[ev.kind],
                                    self._seq, ev))
        self._seq += 1

    def pop(self) -> Event:
        return heapq.heappop(self._heap)[3]

    def __len__(self) -> int:
        return len(self._heap)


def arrival_times(profile: TrafficProfile, rng: Random) -> Iterator[int]:
    """Generate packet arrival timestamps (integer us, non-decreasing).

    Each segment draws independently; an inter-arrival gap that crosses the
    segment end is discarded, so a rate change takes effect at the boundary.
    """
    seg_start = 0
    for seg in profile.segments:
        seg_end = seg_start + seg.duration_us
        kind = seg.arrival.kind
        if kind == "poisson":
            rate_per_us = seg.arrival.rate_per_s / US_PER_S
            expovariate = rng.expovariate
            t = seg_start
            while True:
                t += round(expovariate(rate_per_us))
                if t >= seg_end:
                    break
                yield t
        elif kind == "constant_interval":
            gap = seg.arrival.gap_us
            t = seg_start + gap
            while t < seg_end:
                yield t
                t += gap
        seg_start = seg_end


@dataclass(slots=True)
class SegmentStats:
    """Network-side counters accumulated within one traffic segment."""

    packets_arrived: int = 0
    packets_processed: int = 0
    packets_dropped: int = 0
    queue_depth_end: int = 0
    exchange_attempts: int = 0
    exchange_ok: int = 0
    exchange_timeouts: int = 0
    exchange_rejected: int = 0


@dataclass(slots=True)
class Trace:
    """Everything one run produced."""

    cycles: list[CycleRecord]
    net_segments: dict[str, SegmentStats]
    config_hash: str
    seed: int
    mode: str
    nominal_us: int
    overrun_count: int = 0

    def totals(self) -> list[int]:
        return [r.total_us for r in self.cycles]

    def segment_totals(self, label: str) -> list[int]:
        return [r.total_us for r in self.cycles if r.segment == label]


def trace_hash(trace: Trace) -> str:
    """Digest over every cycle record; equal runs hash equal, full stop."""
    h = hashlib.sha256()
    for r in trace.cycles:
        h.update(f"{r.index},{r.segment},{r.start_us},{r.read_us},{r.comm_us},"
                 f"{r.calc_us},{r.delay_us},{r.write_us},{r.total_us},"
                 f"{r.comm_result},{int(r.overrun)};".encode("ascii"))
    return h.hexdigest()


@dataclass(slots=True)
class _Attempt:
    """One master exchange attempt (a poll or one of its retries).

    ``start_us`` is the attempt's FIFO turn on the shared CPU: the moment
    every packet already queued ahead of it has been dealt with.  Before
    that instant the master cannot touch the link.
    """

    fire_us: int
    start_us: int
    deadline_us: int
    raw: bytes
    resolved: bool = False
    corrupt: bool = False
    up_raw: bytes = b""


class Engine:
    """Owns one run: wires the models together and dispatches events."""

    def __init__(self, cfg: SimConfig) -> None:
        cfg.validate()
        self.cfg = cfg
        self.clock = VirtualClock(0, DEFAULT_TICK_US)
        self.queue = EventQueue()
        self.t_end = cfg.traffic.total_duration_us
        self.records: list[CycleRecord] = []
        self.boundaries = cfg.traffic.boundaries()
        self.current_label = self.boundaries[0][1]
        self.segment_stats: dict[str, SegmentStats] = {}
        self._snap: dict[str, int] = {}

        traffic_rng = rng_stream(cfg.seed, "traffic")
        io_rng = rng_stream(cfg.seed, "io")
        self.corruption_rng = rng_stream(cfg.seed, "channel")

        arrivals = arrival_times(cfg.traffic, traffic_rng)
        if cfg.mode == "dual":
            self.net = PacketCpu(cfg.net_cpu, arrivals)
            self.io = IoController(cfg.budget, io_rng,
                                   tick_us=DEFAULT_TICK_US,
                                   toggle_period=cfg.toggle_period_cycles,
                                   write_jitter_us=cfg.write_jitter_us)
            self.counters = NetCounters()
            self.transfer_us = channel.transfer_time_us(cfg.channel)
            self.master_deadline_budget = quantize_timeout(
                cfg.channel.slave_timeout_us, DEFAULT_TICK_US)
            # Link mediator state
            self.window_open_us = 0
            self.window_close_us = 0
            self.window_state = "closed"   # closed | open | transfer
            self.window_token = 0
            self.window_up_raw = b""
            self.pending_attempt: _Attempt | None = None
            self.active_attempt: _Attempt | None = None
            self.master_busy = False
            self.master_seq = 0
            self._cycle_label = self.current_label
        else:
            self.baseline_queue = AccumulatingQueue(cfg.net_cpu, arrivals)
            self.plc = BaselinePlc(cfg.budget, cfg.net_cpu, io_rng,
                                   self.baseline_queue,
                                   toggle_period=cfg.toggle_period_cycles)

    # ---- run loop ----------------------------------------------------

    def run(self) -> Trace:
        for idx in range(len(self.boundaries)):
            self.queue.schedule(Event(self.boundaries[idx][0],
                                      "segment_boundary", idx))
        self.queue.schedule(Event(self.t_end, "segment_boundary", None))
        if self.cfg.mode == "dual":
            self.queue.schedule(Event(0, "io_cycle_boundary", ("cycle_start",)))
            self.queue.schedule(Event(0, "poll_timer", ("tick",)))
        else:
            self.queue.schedule(Event(0, "io_cycle_boundary", ("baseline_cycle",)))

        while len(self.queue):
            ev = self.queue.pop()
            self.clock.advance(ev.time_us)
            self._dispatch(ev)

        overruns = self.io.overrun_count if self.cfg.mode == "dual" else 0
        return Trace(
            cycles=self.records,
            net_segments=self.segment_stats,
            config_hash=self.cfg.config_hash(),
            seed=self.cfg.seed,
            mode=self.cfg.mode,
            nominal_us=self.cfg.budget.target_cycle,
            overrun_count=overruns,
        )

    def _dispatch(self, ev: Event) -> None:
        if ev.kind == "segment_boundary":
            self._on_segment_boundary(ev.time_us, ev.payload)
            return
        tag = ev.payload[0]
        if ev.kind == "io_cycle_boundary":
            if tag == "cycle_start":
                self._on_cycle_start(ev.time_us)
            elif tag == "window_open":
                self._on_window_open(ev.time_us)
            elif tag == "window_timeout":
                self._on_window_timeout(ev.time_us, ev.payload[1])
            elif tag == "comm_complete":
                self._on_comm_complete(ev.time_us)
            elif tag == "baseline_cycle":
                self._on_baseline_cycle(ev.time_us)
        elif ev.kind == "poll_timer":
            if tag == "tick":
                self._on_poll_tick(ev.time_us)
            elif tag == "attempt":
                self._on_attempt(ev.time_us)
            elif tag == "master_ready":
                self._on_master_ready(ev.time_us, ev.payload[1])
            elif tag == "attempt_deadline":
                self._on_attempt_deadline(ev.time_us, ev.payload[1])
            elif tag == "resolve":
                self._on_resolve(ev.time_us, ev.payload[1])

    # ---- segment accounting ------------------------------------------

    def _net_observe(self, t_us: int) -> None:
        if self.cfg.mode == "dual":
            self.net.advance(t_us)
        else:
            self.baseline_queue.consume(t_us)

    def _on_segment_boundary(self, t_us: int, idx: int | None) -> None:
        self._net_observe(t_us)
        if idx != 0:
            self._snapshot_segment()
        if idx is not None:
            self.current_label = self.boundaries[idx][1]
            self._snap = self._totals_now()

    def _totals_now(self) -> dict[str, int]:
        if self.cfg.mode == "dual":
            src = self.net
            c = self.counters
            return {"arrived": src.arrived, "processed": src.processed,
                    "dropped": src.dropped, "depth": src.queue_depth,
                    "attempts": c.exchange_attempts, "ok": c.exchange_ok,
                    "timeouts": c.exchange_timeouts,
                    "rejected": c.exchange_rejected}
        src = self.baseline_queue
        return {"arrived": src.arrived, "processed": src.processed,
                "dropped": src.dropped, "depth": src.queue_depth,
                "attempts": 0, "ok": 0, "timeouts": 0, "rejected": 0}

    def _snapshot_segment(self) -> None:
        now = self._totals_now()
        was = self._snap
        self.segment_stats[self.current_label] = SegmentStats(
            packets_arrived=now["arrived"] - was["arrived"],
            packets_processed=now["processed"] - was["processed"],
            packets_dropped=now["dropped"] - was["dropped"],
            queue_depth_end=now["depth"],
            exchange_attempts=now["attempts"] - was["attempts"],
            exchange_ok=now["ok"] - was["ok"],
            exchange_timeouts=now["timeouts"] - was["timeouts"],
            exchange_rejected=now["rejected"] - was["rejected"],
        )

    # ---- guarded-controller cycle ------------------------------------

    def _on_cycle_start(self, t_us: int) -> None:
        if t_us >= self.t_end:
            return
        self._cycle_label = self.current_label
        read_us = self.io.begin_cycle(t_us)
        self.queue.schedule(Event(t_us + read_us, "io_cycle_boundary",
                                  ("window_open",)))

    def _on_window_open(self, t_us: int) -> None:
        window = self.io.comm_window_us()
        self.window_open_us = t_us
        self.window_close_us = t_us + window
        self.window_up_raw = self.io.upstream_frame().encode()
        tt = self.transfer_us

        a = self.pending_attempt
        if (a is not None and a.start_us <= t_us
                and t_us + tt <= self.window_close_us
                and t_us + tt <= a.deadline_us):
            self.pending_attempt = None
            self._begin_transfer(a, t_us)
            return
        self.window_state = "open"
        self.window_token += 1
        self.queue.schedule(Event(self.window_close_us, "io_cycle_boundary",
                                  ("window_timeout", self.window_token)))

    def _begin_transfer(self, attempt: _Attempt, start_us: int) -> None:
        self.window_state = "transfer"
        self.active_attempt = attempt
        end = start_us + self.transfer_us
        # The master holds the shared CPU until the transfer resolves;
        # anything queued behind it resumes afterwards.
        self.net.reschedule_block(end)
        self.queue.schedule(Event(end, "io_cycle_boundary", ("comm_complete",)))
        self.queue.schedule(Event(end, "poll_timer", ("resolve", attempt)))

    def _on_window_timeout(self, t_us: int, token: int) -> None:
        if token != self.window_token or self.window_state != "open":
            return
        self.window_state = "closed"
        self._finish_io_cycle(t_us, "timeout")

    def _on_comm_complete(self, t_us: int) -> None:
        attempt = self.active_attempt
        p = self.cfg.channel.corruption_probability
        if p > 0.0 and self.corruption_rng.random() < p:
            attempt.corrupt = True
            down_raw = _flip_bit(attempt.raw, self.corruption_rng.randrange(128))
            attempt.up_raw = _flip_bit(self.window_up_raw,
                                       self.corruption_rng.randrange(128))
        else:
            down_raw = attempt.raw
            attempt.up_raw = self.window_up_raw
        result = self.io.offer_frame(down_raw)
        self.window_state = "closed"
        self._finish_io_cycle(t_us, result)

    def _finish_io_cycle(self, t_us: int, comm_result: str) -> None:
        comm_us = t_us - self.window_open_us
        rec, next_start = self.io.finish_cycle(comm_us, comm_result)
        rec.segment = self._cycle_label
        self.records.append(rec)
        self.queue.schedule(Event(next_start, "io_cycle_boundary",
                                  ("cycle_start",)))

    # ---- master poll side --------------------------------------------

    def _on_poll_tick(self, t_us: int) -> None:
        if t_us >= self.t_end:
            return
        self.queue.schedule(Event(t_us + self.cfg.net_cpu.poll_interval_us,
                                  "poll_timer", ("tick",)))
        if self.master_busy:
            return
        self._start_attempt(t_us)

    def _on_attempt(self, t_us: int) -> None:
        # Retry after a timeout.  The master stays busy across the whole
        # retry chain, so poll ticks keep skipping until it resolves.
        if t_us >= self.t_end:
            self.master_busy = False
            return
        self._start_attempt(t_us)

    def _start_attempt(self, t_us: int) -> None:
        self.master_busy = True
        self.counters.exchange_attempts += 1
        frame = channel.CommandFrame(self.master_seq, channel.MSG_IO_UPDATE, 0, 0)
        self.master_seq = (self.master_seq + 1) & 0xFF
        deadline = t_us + self.master_deadline_budget

        self.net.advance(t_us)
        start = self.net.queue_clear_time(t_us)
        if start >= deadline:
            # The packet backlog holds the CPU past the whole timeout
            # window; the link is never even touched.
            self.counters.exchange_timeouts += 1
            self.queue.schedule(Event(
                deadline + self.cfg.channel.master_retry_delay_us,
                "poll_timer", ("attempt",)))
            return
        self.net.force_service_to(start)
        self.net.block(deadline)
        attempt = _Attempt(fire_us=t_us, start_us=start, deadline_us=deadline,
                           raw=frame.encode())

        tt = self.transfer_us
        if self.window_state == "open":
            s = max(start, t_us)
            if s + tt <= self.window_close_us and s + tt <= deadline:
                self.window_token += 1   # cancel the pending window timeout
                self._begin_transfer(attempt, s)
                return
        self.pending_attempt = attempt
        if start > t_us:
            self.queue.schedule(Event(start, "poll_timer",
                                      ("master_ready", attempt)))
        self.queue.schedule(Event(deadline, "poll_timer",
                                  ("attempt_deadline", attempt)))

    def _on_master_ready(self, t_us: int, attempt: _Attempt) -> None:
        # The attempt's FIFO turn arrived mid-wait; if a window is open right
        # now with room before both close and deadline, go immediately.
        if self.pending_attempt is not attempt:
            return
        tt = self.transfer_us
        if (self.window_state == "open"
                and t_us + tt <= self.window_close_us
                and t_us + tt <= attempt.deadline_us):
            self.pending_attempt = None
            self.window_token += 1   # cancel the pending window timeout
            self._begin_transfer(attempt, t_us)

    def _on_attempt_deadline(self, t_us: int, attempt: _Attempt) -> None:
        if attempt.resolved or self.pending_attempt is not attempt:
            return
        self.pending_attempt = None
        self.counters.exchange_timeouts += 1
        self.queue.schedule(Event(t_us + self.cfg.channel.master_retry_delay_us,
                                  "poll_timer", ("attempt",)))

    def _on_resolve(self, t_us: int, attempt: _Attempt) -> None:
        attempt.resolved = True
        self.active_attempt = None
        try:
            channel.decode_status(attempt.up_raw)
            self.counters.exchange_ok += 1
        except channel.FrameError:
            self.counters.exchange_rejected += 1
        self.master_busy = False

    # ---- single-controller cycle -------------------------------------

    def _on_baseline_cycle(self, t_us: int) -> None:
        if t_us >= self.t_end:
            return
        label = self.current_label
        rec, next_start = self.plc.run_cycle(t_us)
        rec.segment = label
        self.records.append(rec)
        self.queue.schedule(Event(next_start, "io_cycle_boundary",
                                  ("baseline_cycle",)))


def _flip_bit(raw: bytes, bit: int) -> bytes:
    buf = bytearray(raw)
    buf[bit >> 3] ^= 1 << (bit & 7)
    return bytes(buf)


def run(cfg: SimConfig) -> Trace:
    """Run one configuration to completion and return its trace."""
    return Engine(cfg).run()
