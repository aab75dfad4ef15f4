"""Real-socket deployment of the dual-controller design.

Two processes stand in for the two controllers.  Process B (the IO side) is a
strictly single-threaded wall-clock loop: it paces itself on absolute cycle
boundaries, answers at most one link exchange per cycle inside a bounded
receive window, and holds its last outputs whenever the link is silent or the
frame is bad.  Process A (the network side) runs a minimal Modbus/TCP server,
a datagram ingest sink that soaks up flood traffic, and a poller that speaks
the same 16-byte frame protocol as the simulator — the wire bytes are exactly
``channel.encode`` output.

A local UDP socket pair replaces the serial link.  It preserves what matters
for the argument: master/slave direction, bounded waits, and whole-frame
validation.  Electrical properties are out of scope.

All figures measured here are qualitative.  A desktop OS schedules in
millisecond quanta; the exact 1 % numbers belong to the simulator.
"""

from __future__ import annotations

import json
import socket
import struct
import threading
import time
from dataclasses import dataclass, field
from typing import Any

from . import channel
from .core import (ConfigError, _as_object, _reject_unknown, _take, _take_int,
                   _take_str)
from .metrics import CycleRecord, JitterSummary, summarize_values

MBAP = struct.Struct(">HHHB")

FC_READ_HOLDING = 0x03
FC_WRITE_SINGLE = 0x06
EXC_ILLEGAL_FUNCTION = 0x01
EXC_ILLEGAL_ADDRESS = 0x02

REG_OUTPUT_STATE = 0    # read-only
REG_CYCLE_COUNTER = 1   # read-only, low 16 bits
REG_TOGGLE_PERIOD = 2   # read/write

_RECV_POLL_S = 0.2      # accept/recv poll granularity for clean shutdown


# ===================================================================
# Configuration
# ===================================================================


def _parse_addr(text: str, ctx: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise ConfigError(f"{ctx}: expected host:port, got {text!r}")
    try:
        return host, int(port)
    except ValueError as exc:
        raise ConfigError(f"{ctx}: bad port in {text!r}") from exc


@dataclass(frozen=True, slots=True)
class FloodSpec:
    target: str
    rate_per_s: float
    payload_size: int = 64
    duration_s: float = 30.0

    def validate(self) -> None:
        if self.rate_per_s < 0:
            raise ConfigError("flood.rate must be >= 0")
        if not (1 <= self.payload_size <= 1400):
            raise ConfigError("flood.payload_size must be in [1, 1400]")
        if self.duration_s <= 0:
            raise ConfigError("flood.duration must be > 0")


@dataclass(frozen=True, slots=True)
class LiveConfig:
    """Addresses and timing for the two-process deployment.

    ``listen_address`` serves Modbus/TCP and, on the same port number over
    UDP, the flood ingest sink.  ``io_link_address`` is where process B
    listens for link frames.
    """

    listen_address: str = "127.0.0.1:15020"
    io_link_address: str = "127.0.0.1:15021"
    target_cycle_us: int = 10_000
    comm_timeout_us: int = 5_000
    toggle_period: int = 10
    poll_interval_us: int = 10_000
    slave_timeout_us: int = 5_000
    retry_delay_us: int = 2_000
    io_duration_s: float = 10.0
    flood: FloodSpec = field(default_factory=lambda: FloodSpec("127.0.0.1:15020", 1000.0))

    def validate(self) -> None:
        _parse_addr(self.listen_address, "live.listen_address")
        _parse_addr(self.io_link_address, "live.io_link_address")
        if self.target_cycle_us <= 0:
            raise ConfigError("live.target_cycle must be > 0")
        if not (0 < self.comm_timeout_us < self.target_cycle_us):
            raise ConfigError("live.comm_timeout must be in (0, target_cycle)")
        if self.toggle_period < 1:
            raise ConfigError("live.toggle_period must be >= 1")
        if self.poll_interval_us <= 0 or self.slave_timeout_us <= 0:
            raise ConfigError("live poll/slave timing must be > 0")
        if self.retry_delay_us < 0:
            raise ConfigError("live.retry_delay must be >= 0")
        if self.io_duration_s <= 0:
            raise ConfigError("live.io_duration must be > 0")
        self.flood.validate()
        _parse_addr(self.flood.target, "live.flood.target")

    def to_json(self) -> dict[str, Any]:
        return {
            "listen_address": self.listen_address,
            "io_link_address": self.io_link_address,
            "target_cycle": self.target_cycle_us,
            "comm_timeout": self.comm_timeout_us,
            "toggle_period": self.toggle_period,
            "poll_interval": self.poll_interval_us,
            "slave_timeout": self.slave_timeout_us,
            "retry_delay": self.retry_delay_us,
            "io_duration": self.io_duration_s,
            "flood": {
                "target": self.flood.target,
                "rate": self.flood.rate_per_s,
                "payload_size": self.flood.payload_size,
                "duration": self.flood.duration_s,
            },
        }

    @staticmethod
    def from_json(obj: Any) -> "LiveConfig":
        d = _as_object(obj, "live")
        f = _as_object(_take(d, "flood", "live"), "live.flood")
        rate = _take(f, "rate", "live.flood")
        if isinstance(rate, bool) or not isinstance(rate, (int, float)):
            raise ConfigError("live.flood.rate must be a number")
        dur = _take(f, "duration", "live.flood")
        if isinstance(dur, bool) or not isinstance(dur, (int, float)):
            raise ConfigError("live.flood.duration must be a number")
        flood = FloodSpec(
            target=_take_str(f, "target", "live.flood"),
            rate_per_s=float(rate),
            payload_size=_take_int(f, "payload_size", "live.flood"),
            duration_s=float(dur),
        )
        _reject_unknown(f, "live.flood")
        io_dur = _take(d, "io_duration", "live")
        if isinstance(io_dur, bool) or not isinstance(io_dur, (int, float)):
            raise ConfigError("live.io_duration must be a number")
        cfg = LiveConfig(
            listen_address=_take_str(d, "listen_address", "live"),
            io_link_address=_take_str(d, "io_link_address", "live"),
            target_cycle_us=_take_int(d, "target_cycle", "live"),
            comm_timeout_us=_take_int(d, "comm_timeout", "live"),
            toggle_period=_take_int(d, "toggle_period", "live"),
            poll_interval_us=_take_int(d, "poll_interval", "live"),
            slave_timeout_us=_take_int(d, "slave_timeout", "live"),
            retry_delay_us=_take_int(d, "retry_delay", "live"),
            io_duration_s=float(io_dur),
            flood=flood,
        )
        _reject_unknown(d, "live")
        cfg.validate()
        return cfg


def load_live_config(path: str) -> LiveConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return LiveConfig.from_json(doc)


# ===================================================================
# Modbus/TCP codec (MBAP + the two supported PDUs)
# ===================================================================


def mbap_pack(transaction_id: int, unit_id: int, pdu: bytes) -> bytes:
    return MBAP.pack(transaction_id, 0, len(pdu) + 1, unit_id) + pdu


def mbap_unpack(data: bytes) -> tuple[int, int, bytes]:
    """Split one ADU into (transaction_id, unit_id, pdu); raises ValueError."""
    if len(data) < MBAP.size + 1:
        raise ValueError("short ADU")
    tid, proto, length, unit = MBAP.unpack_from(data)
    if proto != 0:
        raise ValueError("protocol_id must be 0")
    if length != len(data) - 6:
        raise ValueError("length field mismatch")
    return tid, unit, data[MBAP.size:]


def exception_pdu(function: int, code: int) -> bytes:
    return bytes([function | 0x80, code])


# ===================================================================
# Process B: the IO loop
# ===================================================================


@dataclass(slots=True)
class IoLoopResult:
    records: list[CycleRecord]
    summary: JitterSummary
    exchanges_ok: int
    exchanges_timeout: int
    exchanges_rejected: int
    final_outputs: int


class LiveIoLoop:
    """Wall-clock scan loop for process B.

    Single-threaded by design.  Each cycle: drain stale datagrams, wait up to
    the communication timeout for one frame, validate it whole, reply with a
    status frame, run the toggle logic, then sleep (with a short busy-wait
    tail) until the next absolute cycle boundary.
    """

    def __init__(self, cfg: LiveConfig) -> None:
        cfg.validate()
        self.cfg = cfg
        self.toggle_period = cfg.toggle_period
        self.outputs = 0
        self.cycle_index = 0
        self.last_good_command: channel.CommandFrame | None = None
        self.last_accepted_seq = 0
        self._toggle_bit = 0
        self._staged_period: int | None = None
        self.stop = threading.Event()

    # -- link handling -------------------------------------------------

    def _handle_frame(self, raw: bytes) -> str:
        try:
            frame = channel.decode_command(raw)
        except channel.FrameError:
            return "rejected"
        self.last_accepted_seq = frame.seq
        if frame.msg_type == channel.MSG_CONFIG:
            self._staged_period = frame.cycle_config
        else:
            self.last_good_command = frame
        return "ok"

    def _status_raw(self) -> bytes:
        return channel.StatusFrame(
            seq=self.last_accepted_seq,
            status=channel.STATUS_OK,
            input_state=0,
            output_state=self.outputs,
            cycle_counter=self.cycle_index,
        ).encode()

    def _comm_phase(self, sock: socket.socket, deadline: float) -> str:
        """One bounded receive window; returns the comm result."""
        result = "timeout"
        # Stale datagrams from earlier windows: take the newest, drop the rest.
        pending: tuple[bytes, Any] | None = None
        sock.setblocking(False)
        while True:
            try:
                raw, peer = sock.recvfrom(2048)
            except BlockingIOError:
                break
            pending = (raw, peer)
        if pending is None:
            remaining = deadline - time.monotonic()
            if remaining > 0:
                sock.settimeout(remaining)
                try:
                    pending = sock.recvfrom(2048)
                except (socket.timeout, OSError):
                    pending = None
        if pending is not None:
            raw, peer = pending
            result = self._handle_frame(raw)
            try:
                sock.sendto(self._status_raw(), peer)
            except OSError:
                pass
        return result

    # -- the loop ------------------------------------------------------

    def run(self) -> IoLoopResult:
        cfg = self.cfg
        host, port = _parse_addr(cfg.io_link_address, "live.io_link_address")
        target_s = cfg.target_cycle_us / 1e6
        counts = {"ok": 0, "timeout": 0, "rejected": 0}
        records: list[CycleRecord] = []

        with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as sock:
            sock.bind((host, port))
            t0 = time.monotonic()
            n_cycles = max(1, int(cfg.io_duration_s / target_s))
            prev_boundary = t0
            for k in range(n_cycles):
                if self.stop.is_set():
                    break
                comm_deadline = prev_boundary + cfg.comm_timeout_us / 1e6
                c_start = time.monotonic()
                result = self._comm_phase(sock, comm_deadline)
                c_end = time.monotonic()
                counts[result] += 1

                if self._staged_period is not None:
                    if self._staged_period >= 1:
                        self.toggle_period = self._staged_period
                    self._staged_period = None
                if self.cycle_index % self.toggle_period == 0:
                    self._toggle_bit ^= 1
                commanded = (self.last_good_command.output_command
                             if self.last_good_command is not None else 0)
                self.outputs = (commanded & 0xFFFE) | self._toggle_bit
                calc_end = time.monotonic()

                next_boundary = t0 + (k + 1) * target_s
                _sleep_until(next_boundary)
                now = time.monotonic()

                total = max(1, round((now - prev_boundary) * 1e6))
                comm_us = min(total, max(0, round((c_end - c_start) * 1e6)))
                calc_us = max(0, round((calc_end - c_end) * 1e6))
                if comm_us + calc_us > total:
                    calc_us = total - comm_us
                rec = CycleRecord(
                    index=self.cycle_index, segment="live",
                    start_us=round((prev_boundary - t0) * 1e6),
                    read_us=0, comm_us=comm_us, calc_us=calc_us,
                    delay_us=total - comm_us - calc_us, write_us=0,
                    total_us=total, comm_result=result, overrun=False,
                )
                records.append(rec)
                self.cycle_index += 1
                prev_boundary = now

        summary = summarize_values("live", [r.total_us for r in records],
                                   cfg.target_cycle_us)
        return IoLoopResult(
            records=records,
            summary=summary,
            exchanges_ok=counts["ok"],
            exchanges_timeout=counts["timeout"],
            exchanges_rejected=counts["rejected"],
            final_outputs=self.outputs,
        )


def _sleep_until(deadline: float) -> None:
    """Sleep to an absolute monotonic deadline, busy-waiting the last 2 ms."""
    while True:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            return
        if remaining > 0.002:
            time.sleep(remaining - 0.002)
        else:
            # Short spin: OS sleep granularity is coarser than our tail.
            while time.monotonic() < deadline:
                pass
            return


# ===================================================================
# Process A: Modbus server + link poller + flood sink
# ===================================================================


class LiveMaster:
    """The network-side process: Modbus/TCP front, frame-link poller, and a
    datagram sink that absorbs flood traffic on the listen port.

    Shared state between threads is limited to small attribute swaps (the
    latest upstream frame, the pending configuration write); readers never
    block the poller.
    """

    def __init__(self, cfg: LiveConfig) -> None:
        cfg.validate()
        self.cfg = cfg
        self.latest_status: channel.StatusFrame | None = None
        self.toggle_period = cfg.toggle_period
        self.pending_config: int | None = None
        self._pending_seq: int | None = None
        self.output_command = 0
        self.poll_ok = 0
        self.poll_timeout = 0
        self.poll_rejected = 0
        self.sink_packets = 0
        self._seq = 0
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._tcp: socket.socket | None = None
        self.bound_port: int | None = None

    # -- lifecycle -----------------------------------------------------

    def start(self) -> None:
        host, port = _parse_addr(self.cfg.listen_address, "live.listen_address")
        tcp = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        tcp.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        tcp.bind((host, port))
        tcp.listen(8)
        tcp.settimeout(_RECV_POLL_S)
        self._tcp = tcp
        self.bound_port = tcp.getsockname()[1]

        sink = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        sink.bind((host, self.bound_port))
        sink.settimeout(_RECV_POLL_S)

        for name, fn, args in (("modbus-accept", self._accept_loop, (tcp,)),
                               ("link-poller", self._poll_loop, ()),
                               ("flood-sink", self._sink_loop, (sink,))):
            t = threading.Thread(target=fn, args=args, name=name, daemon=True)
            t.start()
            self._threads.append(t)

    def stop(self) -> None:
        self._stop.set()
        for t in self._threads:
            t.join(timeout=2.0)
        if self._tcp is not None:
            self._tcp.close()

    def run_forever(self) -> None:
        self.start()
        try:
            while True:
                time.sleep(0.5)
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    # -- flood sink ----------------------------------------------------

    def _sink_loop(self, sink: socket.socket) -> None:
        with sink:
            while not self._stop.is_set():
                try:
                    sink.recvfrom(2048)
                    self.sink_packets += 1
                except socket.timeout:
                    continue
                except OSError:
                    return

    # -- link poller ---------------------------------------------------

    def _poll_loop(self) -> None:
        cfg = self.cfg
        peer = _parse_addr(cfg.io_link_address, "live.io_link_address")
        interval_s = cfg.poll_interval_us / 1e6
        with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as sock:
            sock.settimeout(cfg.slave_timeout_us / 1e6)
            next_poll = time.monotonic()
            while not self._stop.is_set():
                delay = next_poll - time.monotonic()
                if delay > 0:
                    time.sleep(min(delay, _RECV_POLL_S))
                    if time.monotonic() < next_poll:
                        continue
                next_poll += interval_s
                self._poll_once(sock, peer)

    def _poll_once(self, sock: socket.socket, peer: tuple[str, int]) -> None:
        seq = self._seq = (self._seq + 1) & 0xFF
        if self.pending_config is not None:
            frame = channel.CommandFrame(seq, channel.MSG_CONFIG,
                                         self.output_command,
                                         self.pending_config)
            self._pending_seq = seq
        else:
            frame = channel.CommandFrame(seq, channel.MSG_IO_UPDATE,
                                         self.output_command, 0)
        try:
            sock.sendto(frame.encode(), peer)
            raw, _ = sock.recvfrom(2048)
        except (socket.timeout, OSError):
            self.poll_timeout += 1
            if self.cfg.retry_delay_us:
                time.sleep(self.cfg.retry_delay_us / 1e6)
            return
        try:
            status = channel.decode_status(raw)
        except channel.FrameError:
            self.poll_rejected += 1
            return
        self.poll_ok += 1
        self.latest_status = status
        if (self.pending_config is not None
                and self._pending_seq is not None
                and status.seq == self._pending_seq):
            # The IO side echoed the config frame's sequence: applied.
            if self.pending_config >= 1:
                self.toggle_period = self.pending_config
            self.pending_config = None
            self._pending_seq = None

    # -- Modbus server -------------------------------------------------

    def _accept_loop(self, tcp: socket.socket) -> None:
        while not self._stop.is_set():
            try:
                conn, _ = tcp.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            t = threading.Thread(target=self._serve_connection, args=(conn,),
                                 daemon=True)
            t.start()

    def _serve_connection(self, conn: socket.socket) -> None:
        with conn:
            conn.settimeout(_RECV_POLL_S)
            buf = b""
            while not self._stop.is_set():
                try:
                    data = conn.recv(4096)
                except socket.timeout:
                    continue
                except OSError:
                    return
                if not data:
                    return
                buf += data
                while len(buf) >= MBAP.size:
                    _, proto, length, _ = MBAP.unpack_from(buf)
                    if proto != 0 or length < 2 or length > 260:
                        return  # malformed framing: drop the connection
                    adu_len = 6 + length
                    if len(buf) < adu_len:
                        break
                    adu, buf = buf[:adu_len], buf[adu_len:]
                    try:
                        tid, unit, pdu = mbap_unpack(adu)
                        reply = self._handle_pdu(pdu)
                    except ValueError:
                        return
                    try:
                        conn.sendall(mbap_pack(tid, unit, reply))
                    except OSError:
                        return

    def _register_value(self, addr: int) -> int:
        status = self.latest_status
        if addr == REG_OUTPUT_STATE:
            return status.output_state if status else 0
        if addr == REG_CYCLE_COUNTER:
            return (status.cycle_counter & 0xFFFF) if status else 0
        return self.toggle_period & 0xFFFF

    def _handle_pdu(self, pdu: bytes) -> bytes:
        if not pdu:
            raise ValueError("empty PDU")
        function = pdu[0]
        if function == FC_READ_HOLDING:
            if len(pdu) != 5:
                raise ValueError("bad read PDU length")
            addr, count = struct.unpack_from(">HH", pdu, 1)
            if count < 1 or addr + count > 3:
                return exception_pdu(function, EXC_ILLEGAL_ADDRESS)
            words = b"".join(struct.pack(">H", self._register_value(a))
                             for a in range(addr, addr + count))
            return bytes([function, len(words)]) + words
        if function == FC_WRITE_SINGLE:
            if len(pdu) != 5:
                raise ValueError("bad write PDU length")
            addr, value = struct.unpack_from(">HH", pdu, 1)
            if addr != REG_TOGGLE_PERIOD:
                return exception_pdu(function, EXC_ILLEGAL_ADDRESS)
            self.pending_config = value
            return pdu  # 0x06 echoes the request on success
        return exception_pdu(function, EXC_ILLEGAL_FUNCTION)


def serve_modbus(cfg: LiveConfig) -> None:
    """Run process A until interrupted."""
    LiveMaster(cfg).run_forever()


# ===================================================================
# Flood generator
# ===================================================================


@dataclass(slots=True)
class FloodReport:
    packets_sent: int
    duration_s: float
    achieved_rate_per_s: float
    send_errors: int = 0

    def to_json(self) -> dict[str, Any]:
        return {"packets_sent": self.packets_sent,
                "duration_s": round(self.duration_s, 6),
                "achieved_rate_per_s": round(self.achieved_rate_per_s, 3),
                "send_errors": self.send_errors}


def flood(target: str, rate_per_s: float, duration_s: float,
          payload_size: int = 64) -> FloodReport:
    """Blast datagrams at ``target`` for ``duration_s`` seconds.

    rate > 0 paces against the monotonic clock in 1 ms slices; rate 0 sends
    nothing (useful as a control run).  A rate of float('inf') or anything
    unreachably high degrades to best-effort maximum throughput.
    """
    host, port = _parse_addr(target, "flood.target")
    payload = b"\x00" * payload_size
    sent = 0
    errors = 0
    t0 = time.monotonic()
    if rate_per_s <= 0:
        return FloodReport(0, 0.0, 0.0)
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as sock:
        sock.connect((host, port))
        end = t0 + duration_s
        while True:
            now = time.monotonic()
            if now >= end:
                break
            due = rate_per_s * (now - t0)
            burst = 0
            # Re-check the clock at least every few thousand sends so an
            # unbounded rate still honours the duration.
            while sent + errors < due and burst < 5000:
                try:
                    sock.send(payload)
                    sent += 1
                except OSError:
                    errors += 1
                burst += 1
            if burst < 5000:
                time.sleep(0.001)
    elapsed = time.monotonic() - t0
    return FloodReport(sent, elapsed, sent / elapsed if elapsed > 0 else 0.0,
                       errors)


# ===================================================================
# Two-process convenience wiring (used by tests and demos)
# ===================================================================


def run_dual_live(cfg: LiveConfig) -> tuple[LiveMaster, LiveIoLoop, threading.Thread,
                                            "list[IoLoopResult]"]:
    """Start both sides in this process (master threads + IO loop thread).

    Returns (master, io_loop, io_thread, result_box); the IO result lands in
    ``result_box[0]`` when its thread finishes.  Callers own shutdown:
    ``io_loop.stop.set(); io_thread.join(); master.stop()``.
    """
    master = LiveMaster(cfg)
    io_loop = LiveIoLoop(cfg)
    box: list[IoLoopResult] = []

    def _run() -> None:
        box.append(io_loop.run())

    io_thread = threading.Thread(target=_run, name="live-io", daemon=True)
    io_thread.start()
    time.sleep(0.05)   # let B bind its socket before the first poll
    master.start()
    return master, io_loop, io_thread, box
