"""Packet-facing CPU models: a FIFO single-server queue under flood load.

Two consumers share this module.  In dual-controller mode the network CPU
autonomously services packets (fixed cost each) and the periodic link poll has
to wait for its FIFO turn; under flood the polls starve, which is precisely
the effect the guarded architecture is built to contain.  In single-controller
mode the queue only accumulates, because the one CPU drains it inside its own
scan cycle.

Packet arrivals are consumed lazily from an iterator of arrival times, always
strictly before the observation instant.  That keeps the simulation free of
per-packet events while preserving exact FIFO/tail-drop semantics.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

from .core import NetCpuModel


@dataclass(slots=True)
class NetCounters:
    """Cumulative link-poll bookkeeping on the network controller."""

    exchange_attempts: int = 0
    exchange_ok: int = 0
    exchange_timeouts: int = 0
    exchange_rejected: int = 0


class PacketCpu:
    """M/D/1/K-style CPU: Poisson-or-whatever arrivals, fixed service cost,
    finite system capacity with tail drop, plus blocking link exchanges.

    ``advance(t)`` consumes all arrivals strictly before ``t`` and completes
    any services due by then.  ``queue_clear_time(t)`` answers when a newly
    arrived FIFO job (the link poll) could start.  ``block(until)`` marks the
    CPU busy with a link exchange; packets queued behind it resume afterwards.
    """

    def __init__(self, model: NetCpuModel, arrivals: Iterator[int]) -> None:
        self.cost = model.per_packet_cost_us
        self.capacity = model.queue_capacity
        self.queue_depth = 0
        self.head_done_us = 0
        self.blocked_until_us = 0
        self.arrived = 0
        self.processed = 0
        self.dropped = 0
        self._arrivals = arrivals
        self._next: int | None = next(arrivals, None)

    def advance(self, t_us: int) -> None:
        nxt = self._next
        while nxt is not None and nxt < t_us:
            self._service_to(nxt)
            self.arrived += 1
            if self.queue_depth >= self.capacity:
                self.dropped += 1
            else:
                self.queue_depth += 1
                if self.queue_depth == 1:
                    start = nxt if nxt >= self.blocked_until_us else self.blocked_until_us
                    self.head_done_us = start + self.cost
            nxt = next(self._arrivals, None)
        self._next = nxt
        self._service_to(t_us)

    def _service_to(self, t_us: int) -> None:
        while self.queue_depth > 0 and self.head_done_us <= t_us:
            self.queue_depth -= 1
            self.processed += 1
            if self.queue_depth > 0:
                start = (self.head_done_us
                         if self.head_done_us >= self.blocked_until_us
                         else self.blocked_until_us)
                self.head_done_us = start + self.cost
        # When the queue is empty head_done_us is stale; queue_depth gates it.

    def queue_clear_time(self, t_us: int) -> int:
        """When all packets currently in the system will be done (FIFO)."""
        if self.queue_depth == 0:
            return t_us
        return self.head_done_us + (self.queue_depth - 1) * self.cost

    def force_service_to(self, t_us: int) -> None:
        """Complete everything known to finish by ``t_us`` without consuming
        new arrivals; used when a poll claims the CPU at its FIFO turn."""
        self._service_to(t_us)

    def block(self, until_us: int) -> None:
        self.blocked_until_us = until_us

    def reschedule_block(self, until_us: int) -> None:
        """Move the end of an announced busy period before it has begun.

        While the CPU is held (blocked_until in the future), any queued head
        arrived during the hold and has a provisional completion computed
        against the old hold end; re-anchor it to the new one.
        """
        if (self.queue_depth > 0
                and self.head_done_us == self.blocked_until_us + self.cost):
            self.head_done_us = until_us + self.cost
        self.blocked_until_us = until_us

    def conservation_ok(self) -> bool:
        return self.arrived == self.processed + self.dropped + self.queue_depth


class AccumulatingQueue:
    """Arrival queue for the single-controller mode: nothing drains it except
    the controller's own comm phase."""

    def __init__(self, model: NetCpuModel, arrivals: Iterator[int]) -> None:
        self.capacity = model.queue_capacity
        self.queue_depth = 0
        self.arrived = 0
        self.processed = 0
        self.dropped = 0
        self._arrivals = arrivals
        self._next: int | None = next(arrivals, None)

    def consume(self, t_us: int) -> None:
        """Queue all arrivals strictly before ``t_us`` (tail drop when full)."""
        nxt = self._next
        while nxt is not None and nxt < t_us:
            self.arrived += 1
            if self.queue_depth >= self.capacity:
                self.dropped += 1
            else:
                self.queue_depth += 1
            nxt = next(self._arrivals, None)
        self._next = nxt

    def take(self, cap: int | None) -> int:
        """Remove up to ``cap`` packets (all of them when cap is None)."""
        n = self.queue_depth if cap is None else min(self.queue_depth, cap)
        self.queue_depth -= n
        self.processed += n
        return n

    def conservation_ok(self) -> bool:
        return self.arrived == self.processed + self.dropped + self.queue_depth
