"""Free-running single-controller PLC: the unguarded reference behaviour.

One CPU does everything, so the scan cycle is simply the sum of its phases
and the communication phase drains whatever packet backlog has piled up
since the last cycle.  There is no wait state, no timeout and no upper bound:
cycle time degrades with load, which is the behaviour the guarded design is
measured against.
"""

from __future__ import annotations

from random import Random

from .core import NetCpuModel, PhaseBudget
from .metrics import CycleRecord
from .network import AccumulatingQueue


class BaselinePlc:
    """Cycle arithmetic for the single-controller PLC."""

    def __init__(self, budget: PhaseBudget, model: NetCpuModel, rng: Random,
                 queue: AccumulatingQueue, *, toggle_period: int = 10) -> None:
        self.budget = budget
        self.rng = rng
        self.queue = queue
        self.per_packet_cost = model.per_packet_cost_us
        self.per_cycle_cap = model.per_cycle_packet_cap
        self.toggle_period = toggle_period
        self.cycle_index = 0
        self.outputs = 0
        self._toggle_bit = 0

    def run_cycle(self, t_us: int) -> tuple[CycleRecord, int]:
        """Run one cycle starting at ``t_us``; returns (record, next start).

        The comm phase processes every packet queued at cycle start (or up to
        the configured per-cycle cap), at a fixed cost per packet.
        """
        self.queue.consume(t_us)
        backlog = self.queue.take(self.per_cycle_cap)

        read_us = self.budget.read_in.sample(self.rng)
        comm_us = backlog * self.per_packet_cost
        calc_us = self.budget.calc.sample(self.rng)

        if self.cycle_index % self.toggle_period == 0:
            self._toggle_bit ^= 1
        self.outputs = (self.outputs & 0xFFFE) | self._toggle_bit

        write_us = self.budget.write_out.sample(self.rng)
        total = read_us + comm_us + calc_us + write_us

        rec = CycleRecord(
            index=self.cycle_index,
            segment="",
            start_us=t_us,
            read_us=read_us,
            comm_us=comm_us,
            calc_us=calc_us,
            delay_us=0,
            write_us=write_us,
            total_us=total,
            comm_result="ok",
            overrun=False,
        )
        self.cycle_index += 1
        return rec, t_us + total
