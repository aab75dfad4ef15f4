"""Inter-controller link: fixed 16-byte frames, CRC-8 integrity, exchange timing.

The two controllers talk over a full-duplex serial link.  Every transfer moves
exactly one 16-byte frame in each direction.  Both ends treat the link as
untrusted: a frame is either fully valid (sync byte, CRC, known type) or it is
discarded whole; there is no partial acceptance and no retransmission protocol
on the guarded side.  Timeliness, not delivery, is the guarantee.

Wire layout (big-endian multi-byte fields):

  command frame (master -> io):   sync 0xA5 | seq | msg_type | output_command:2
                                  | cycle_config:4 | reserved:6 | crc8
  status frame  (io -> master):   sync 0x5A | seq_echo | status | input_state:2
                                  | output_state:2 | cycle_counter:4
                                  | reserved:4 | crc8

CRC-8 uses polynomial 0x07 with init 0x00 over the first 15 bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Any

FRAME_SIZE = 16

SYNC_DOWN = 0xA5
SYNC_UP = 0x5A

MSG_IO_UPDATE = 0x01
MSG_CONFIG = 0x02

STATUS_OK = 0x00
STATUS_OVERRUN_SEEN = 0x01

_DOWN_STRUCT = struct.Struct(">BBBHI6sB")
_UP_STRUCT = struct.Struct(">BBBHHI4sB")

_RESERVED_DOWN = b"\x00" * 6
_RESERVED_UP = b"\x00" * 4


# ===================================================================
# CRC-8 (poly 0x07, init 0x00), table driven
# ===================================================================

def _build_crc_table() -> bytes:
    table = bytearray(256)
    for byte in range(256):
        crc = byte
        for _ in range(8):
            if crc & 0x80:
                crc = ((crc << 1) ^ 0x07) & 0xFF
            else:
                crc = (crc << 1) & 0xFF
        table[byte] = crc
    return bytes(table)


_CRC_TABLE = _build_crc_table()


def crc8(data: bytes) -> int:
    """CRC-8 over ``data`` with polynomial 0x07 and initial value 0x00."""
    crc = 0x00
    for b in data:
        crc = _CRC_TABLE[crc ^ b]
    return crc


# ===================================================================
# Frames
# ===================================================================


class FrameError(ValueError):
    """A received frame failed validation.

    ``reason`` names the first failed check: bad_sync, bad_crc or bad_type.
    """

    def __init__(self, reason: str) -> None:
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True, slots=True)
class CommandFrame:
    """Master -> IO frame carrying output overrides and cycle configuration."""

    seq: int
    msg_type: int = MSG_IO_UPDATE
    output_command: int = 0
    cycle_config: int = 0

    def encode(self) -> bytes:
        body = _DOWN_STRUCT.pack(SYNC_DOWN, self.seq & 0xFF, self.msg_type,
                                 self.output_command & 0xFFFF,
                                 self.cycle_config & 0xFFFFFFFF,
                                 _RESERVED_DOWN, 0)
        return body[:15] + bytes([crc8(body[:15])])


@dataclass(frozen=True, slots=True)
class StatusFrame:
    """IO -> master frame mirroring the controller state."""

    seq: int
    status: int = STATUS_OK
    input_state: int = 0
    output_state: int = 0
    cycle_counter: int = 0

    def encode(self) -> bytes:
        body = _UP_STRUCT.pack(SYNC_UP, self.seq & 0xFF, self.status,
                               self.input_state & 0xFFFF,
                               self.output_state & 0xFFFF,
                               self.cycle_counter & 0xFFFFFFFF,
                               _RESERVED_UP, 0)
        return body[:15] + bytes([crc8(body[:15])])


def decode_command(raw: bytes) -> CommandFrame:
    """Decode a master -> IO frame, rejecting on the first failed check."""
    _check_common(raw, SYNC_DOWN)
    sync, seq, msg_type, out_cmd, cyc_cfg, res, _crc = _DOWN_STRUCT.unpack(raw)
    if msg_type not in (MSG_IO_UPDATE, MSG_CONFIG):
        raise FrameError("bad_type")
    if res != _RESERVED_DOWN:
        # Out-of-domain field value, same class as an unknown msg_type.
        # Accepting it would let a frame decode and re-encode differently.
        raise FrameError("bad_type")
    return CommandFrame(seq, msg_type, out_cmd, cyc_cfg)


def decode_status(raw: bytes) -> StatusFrame:
    """Decode an IO -> master frame, rejecting on the first failed check."""
    _check_common(raw, SYNC_UP)
    sync, seq, status, in_state, out_state, counter, res, _crc = _UP_STRUCT.unpack(raw)
    if status not in (STATUS_OK, STATUS_OVERRUN_SEEN):
        raise FrameError("bad_type")
    if res != _RESERVED_UP:
        raise FrameError("bad_type")
    return StatusFrame(seq, status, in_state, out_state, counter)


def _check_common(raw: bytes, expected_sync: int) -> None:
    if len(raw) != FRAME_SIZE:
        raise FrameError("bad_sync" if not raw or raw[0] != expected_sync else "bad_crc")
    if raw[0] != expected_sync:
        raise FrameError("bad_sync")
    if crc8(raw[:15]) != raw[15]:
        raise FrameError("bad_crc")


# ===================================================================
# Link configuration and exchange timing
# ===================================================================


class ChannelConfigError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class ChannelConfig:
    bitrate_bps: int = 13_500_000
    frame_size: int = FRAME_SIZE
    slave_timeout_us: int = 500
    master_retry_delay_us: int = 200
    corruption_probability: float = 0.0

    def validate(self) -> None:
        if self.bitrate_bps <= 0:
            raise ChannelConfigError("channel.bitrate must be > 0")
        if self.frame_size < 8:
            raise ChannelConfigError("channel.frame_size must be >= 8")
        if self.slave_timeout_us <= 0:
            raise ChannelConfigError("channel.slave_timeout must be > 0")
        if self.master_retry_delay_us < 0:
            raise ChannelConfigError("channel.master_retry_delay must be >= 0")
        if not (0.0 <= self.corruption_probability <= 1.0):
            raise ChannelConfigError("channel.corruption_probability must be in [0, 1]")
        if transfer_time_us(self) >= self.slave_timeout_us:
            raise ChannelConfigError(
                "channel: one frame transfer must finish within slave_timeout")

    def to_json(self) -> dict[str, Any]:
        return {
            "bitrate": self.bitrate_bps,
            "frame_size": self.frame_size,
            "slave_timeout": self.slave_timeout_us,
            "master_retry_delay": self.master_retry_delay_us,
            "corruption_probability": self.corruption_probability,
        }

    @staticmethod
    def from_json(obj: Any, ctx: str = "channel") -> "ChannelConfig":
        # Local import keeps this module independent of core's types while
        # reusing its strict-JSON helpers.
        from .core import ConfigError, _as_object, _take, _take_int, _reject_unknown

        d = _as_object(obj, ctx)
        prob = _take(d, "corruption_probability", ctx)
        if isinstance(prob, bool) or not isinstance(prob, (int, float)):
            raise ConfigError(f"{ctx}.corruption_probability must be a number")
        cfg = ChannelConfig(
            bitrate_bps=_take_int(d, "bitrate", ctx),
            frame_size=_take_int(d, "frame_size", ctx),
            slave_timeout_us=_take_int(d, "slave_timeout", ctx),
            master_retry_delay_us=_take_int(d, "master_retry_delay", ctx),
            corruption_probability=float(prob),
        )
        _reject_unknown(d, ctx)
        try:
            cfg.validate()
        except ChannelConfigError as exc:
            raise ConfigError(str(exc)) from exc
        return cfg


def transfer_time_us(cfg: ChannelConfig) -> int:
    """Whole-microsecond time to clock one frame across the link (round up)."""
    bits = cfg.frame_size * 8
    return -(-bits * 1_000_000 // cfg.bitrate_bps)


@dataclass(frozen=True, slots=True)
class ExchangeOutcome:
    """Master-side result of one attempted frame exchange.

    ``elapsed_us`` never exceeds the tick-quantized slave timeout: the master
    gives up rather than wait longer, which is exactly what keeps a stalled
    peer from stretching anyone's cycle.
    """

    result: str  # "ok" | "timeout" | "rejected"
    elapsed_us: int
    status: StatusFrame | None = None


def master_exchange(now_us: int, cfg: ChannelConfig, slave_ready_at_us: int,
                    upstream_raw: bytes | None = None, *,
                    tick_us: int = 100, corrupt: bool = False) -> ExchangeOutcome:
    """Attempt one exchange starting at ``now_us``.

    ``slave_ready_at_us`` is when the peer will next listen on the link.  The
    master waits at most the quantized slave timeout for the peer, then either
    clocks the transfer or reports a timeout (the caller schedules the retry).
    """
    budget = -(-cfg.slave_timeout_us // tick_us) * tick_us
    wait = max(0, slave_ready_at_us - now_us)
    tt = transfer_time_us(cfg)
    if wait + tt > budget:
        return ExchangeOutcome("timeout", budget)
    elapsed = wait + tt
    if corrupt:
        return ExchangeOutcome("rejected", elapsed)
    if upstream_raw is None:
        return ExchangeOutcome("ok", elapsed)
    try:
        status = decode_status(upstream_raw)
    except FrameError:
        return ExchangeOutcome("rejected", elapsed)
    return ExchangeOutcome("ok", elapsed, status)
