"""Guarded IO controller: fixed-length scan cycles with delay compensation.

The controller runs read -> communication -> calculation -> wait -> update
outputs.  Every phase that can block is bounded (the communication window by a
tick-quantized timeout), and the wait phase pads the cycle to its target
length, so the cycle time is constant no matter what arrives on the link.
A cycle only ever stretches if the budget itself is infeasible; that case is
recorded as an overrun and the next cycle starts immediately.

Nothing the link peer does can influence when this controller's phases start
or end; peer input can only change *data* (output bits, toggle period), and
only via frames that pass validation.
"""

from __future__ import annotations

from random import Random

from . import channel
from .core import Overrun, PhaseBudget, compute_delay, quantize_timeout
from .metrics import CycleRecord


class IoController:
    """State machine for the guarded controller, advanced one phase at a time.

    The embedding (simulator event loop, synchronous test driver, or the
    wall-clock live loop) decides when phases happen; this class owns the
    draw order, the data handling rules and the cycle arithmetic.  Random
    draws occur in a fixed per-cycle order (read, calc, write, then the
    optional jitter), so the duration series depends only on budget and seed.
    """

    def __init__(self, budget: PhaseBudget, rng: Random, *,
                 tick_us: int = 100, toggle_period: int = 10,
                 write_jitter_us: int = 0) -> None:
        self.budget = budget
        self.rng = rng
        self.tick_us = tick_us
        self.write_jitter_us = write_jitter_us

        self.phase = "initialize"
        self.cycle_start_us = 0
        self.cycle_index = 0
        self.outputs = 0
        self.pending_outputs = 0
        self.last_good_command: channel.CommandFrame | None = None
        self.toggle_period = toggle_period
        self.overrun_count = 0
        self.overrun_seen = False
        self.last_accepted_seq = 0
        self.input_state = 0

        self._toggle_bit = 0
        self._staged_period: int | None = None
        self._read_us = 0

    # ---- phase drivers ----------------------------------------------

    def begin_cycle(self, t_us: int) -> int:
        """Reset the cycle timer at ``t_us`` and run the input scan.

        Returns the read phase cost; the communication window opens when it
        is over.
        """
        self.cycle_start_us = t_us
        self.phase = "read_inputs"
        self._read_us = self.budget.read_in.sample(self.rng)
        return self._read_us

    def comm_window_us(self) -> int:
        """Length of the communication window: the quantized timeout."""
        return quantize_timeout(self.budget.comm_timeout, self.tick_us)

    def upstream_frame(self) -> channel.StatusFrame:
        """Status frame preloaded into the transmit buffer for this window."""
        return channel.StatusFrame(
            seq=self.last_accepted_seq,
            status=(channel.STATUS_OVERRUN_SEEN if self.overrun_seen
                    else channel.STATUS_OK),
            input_state=self.input_state,
            output_state=self.outputs,
            cycle_counter=self.cycle_index,
        )

    def offer_frame(self, raw: bytes) -> str:
        """Validate one received frame; returns "ok" or "rejected".

        A rejected frame changes nothing: the last good command and the
        toggle period are simply held.
        """
        self.phase = "communication"
        try:
            frame = channel.decode_command(raw)
        except channel.FrameError:
            return "rejected"
        self.last_accepted_seq = frame.seq
        if frame.msg_type == channel.MSG_CONFIG:
            self.apply_config(frame)
        else:
            self.last_good_command = frame
        return "ok"

    def apply_config(self, frame: channel.CommandFrame) -> None:
        """Stage a commanded toggle period; takes effect next calculation.

        A period of 0 is invalid and rejected (the current period is kept);
        re-sending the current period is accepted and changes nothing.
        """
        self._staged_period = frame.cycle_config

    def finish_cycle(self, comm_us: int, comm_result: str) -> tuple[CycleRecord, int]:
        """Run calculation, wait and output update; returns (record, next start).

        ``comm_us`` is the realized communication phase cost (bounded by the
        quantized window).  On overrun the wait phase is skipped, the overrun
        is counted, and the next cycle starts as soon as the outputs are out.
        """
        self.phase = "calculation"
        calc_us = self.budget.calc.sample(self.rng)

        if self._staged_period is not None:
            if self._staged_period >= 1:
                self.toggle_period = self._staged_period
            self._staged_period = None

        if self.cycle_index % self.toggle_period == 0:
            self._toggle_bit ^= 1
        commanded = (self.last_good_command.output_command
                     if self.last_good_command is not None else 0)
        self.pending_outputs = (commanded & 0xFFFE) | self._toggle_bit

        write_us = self.budget.write_out.sample(self.rng)
        jitter = (self.rng.randint(-self.write_jitter_us, self.write_jitter_us)
                  if self.write_jitter_us else 0)

        overran = False
        try:
            delay_us = compute_delay(self.budget.target_cycle, self._read_us,
                                     comm_us, calc_us, write_us)
            delay_us += jitter
            self.phase = "wait"
        except Overrun:
            overran = True
            delay_us = 0
            self.overrun_count += 1
            self.overrun_seen = True

        self.phase = "update_outputs"
        self.outputs = self.pending_outputs
        total = self._read_us + comm_us + calc_us + delay_us + write_us

        rec = CycleRecord(
            index=self.cycle_index,
            segment="",
            start_us=self.cycle_start_us,
            read_us=self._read_us,
            comm_us=comm_us,
            calc_us=calc_us,
            delay_us=delay_us,
            write_us=write_us,
            total_us=total,
            comm_result=comm_result,
            overrun=overran,
        )
        self.cycle_index += 1
        self.phase = "read_inputs"
        return rec, self.cycle_start_us + total


def run_cycle(ctrl: IoController, clock, endpoint) -> CycleRecord:
    """Drive one full cycle synchronously against a link endpoint.

    ``endpoint(window_open_us, window_us, upstream_raw)`` models the peer: it
    returns None for a silent window, or ``(complete_at_us, raw_frame)`` for
    a transfer that finishes inside the window.  Used by unit tests and by
    any embedding that can answer the window question directly.
    """
    t0 = clock.now_us
    read_us = ctrl.begin_cycle(t0)
    w0 = t0 + read_us
    window = ctrl.comm_window_us()
    up_raw = ctrl.upstream_frame().encode()
    resp = endpoint(w0, window, up_raw)
    if resp is None:
        comm_us, result = window, "timeout"
    else:
        complete_at, raw = resp
        if not (w0 <= complete_at <= w0 + window):
            raise ValueError("endpoint completed a transfer outside the window")
        comm_us = complete_at - w0
        result = ctrl.offer_frame(raw)
    rec, next_start = ctrl.finish_cycle(comm_us, result)
    clock.advance(next_start)
    return rec
