"""Wire protocol between sequencing clients and the control service.

Everything is little-endian.  A stream message is a 12-byte header
followed by the payload:

    offset  size  field
    0       4     magic ``SQW1``
    4       2     protocol version (1)
    6       2     command id
    8       4     payload length
    12      n     payload

Discovery uses a single UDP datagram from client to service:
``SQWD`` + u16 version + u16 client TCP port.  The service then opens a
TCP connection back to the sender's address on that port; all further
traffic runs on that stream.

Payloads:

    SET_DIGITAL_STATE   f64 time_s, u32 connector, u32 channel_mask,
                        u32 output_enable_state, u32 output_state
    SET_ANALOG_STATE    u32 board, u32 channel, u32 count,
                        count * (f64 time_s, f64 volts)
    ERROR               u16 code, u16 reserved, u32 length, utf-8 text
    RUN_RESULT /        u32 element_count, u32 reserved, f64 total_seconds
    RUN_COMPLETE

Commands with no payload carry length 0.  Unknown command ids are
answered with ERROR code UNKNOWN_COMMAND; the session stays usable.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

MAGIC = b"SQW1"
DISCOVERY_MAGIC = b"SQWD"
PROTOCOL_VERSION = 1
HEADER = struct.Struct("<4sHHI")
DEFAULT_DISCOVERY_PORT = 8282


class Command(IntEnum):
    BUILD_SEQUENCE = 0x0001
    CLEAR_SEQUENCE = 0x0002
    RUN_SEQUENCE = 0x0003
    RUN_SEQUENCE_CHAIN = 0x0004
    RERUN_LAST_SEQUENCE = 0x0005
    DISCONNECT = 0x0006
    SET_DIGITAL_STATE = 0x0010
    SET_ANALOG_STATE = 0x0011
    OK = 0x0100
    ERROR = 0x0101
    RUN_RESULT = 0x0102
    RUN_COMPLETE = 0x0103


class ErrorCode(IntEnum):
    PROTOCOL_STATE = 1
    ADDRESS_RANGE = 2
    VOLTAGE_RANGE = 3
    LIST_MISMATCH = 4
    CONFLICT = 5
    BUSY = 6
    EMPTY_QUEUE = 7
    INTERNAL = 8
    UNKNOWN_COMMAND = 9
    MALFORMED = 10


@dataclass(frozen=True, slots=True)
class WireMessage:
    command: int
    payload: bytes = b""

    def encode(self) -> bytes:
        return HEADER.pack(MAGIC, PROTOCOL_VERSION, self.command, len(self.payload)) \
            + self.payload


def encode_message(command, payload: bytes = b"") -> bytes:
    return WireMessage(int(command), payload).encode()


def recv_exact(sock, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = sock.recv(remaining)
        if not chunk:
            raise ConnectionError("peer closed the stream mid-message")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_message(sock) -> WireMessage:
    """Read one length-prefixed message from a connected socket."""
    header = recv_exact(sock, HEADER.size)
    magic, version, command, length = HEADER.unpack(header)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != PROTOCOL_VERSION:
        raise ValueError(f"unsupported protocol version {version}")
    payload = recv_exact(sock, length) if length else b""
    return WireMessage(command, payload)


# --- payload codecs ---------------------------------------------------------

_DIGITAL = struct.Struct("<dIIII")
_ANALOG_HEAD = struct.Struct("<III")
_ANALOG_PAIR = struct.Struct("<dd")
_ERROR_HEAD = struct.Struct("<HHI")
_RUN_RESULT = struct.Struct("<IId")
_DISCOVERY = struct.Struct("<4sHH")


def encode_set_digital_state(time, connector, channel_mask, output_enable_state,
                             output_state) -> bytes:
    return encode_message(
        Command.SET_DIGITAL_STATE,
        _DIGITAL.pack(time, connector, channel_mask, output_enable_state, output_state),
    )


def parse_set_digital_state(payload: bytes):
    return _DIGITAL.unpack(payload)


def encode_set_analog_state(board, channel, times, volts) -> bytes:
    parts = [_ANALOG_HEAD.pack(board, channel, len(times))]
    for t, v in zip(times, volts):
        parts.append(_ANALOG_PAIR.pack(t, v))
    return encode_message(Command.SET_ANALOG_STATE, b"".join(parts))


def parse_set_analog_state(payload: bytes):
    board, channel, count = _ANALOG_HEAD.unpack_from(payload, 0)
    expected = _ANALOG_HEAD.size + count * _ANALOG_PAIR.size
    if len(payload) != expected:
        raise ValueError(f"analog payload length {len(payload)}, expected {expected}")
    pairs = [
        _ANALOG_PAIR.unpack_from(payload, _ANALOG_HEAD.size + i * _ANALOG_PAIR.size)
        for i in range(count)
    ]
    return board, channel, pairs


def encode_error(code, message: str) -> bytes:
    text = message.encode("utf-8")
    return encode_message(Command.ERROR,
                          _ERROR_HEAD.pack(int(code), 0, len(text)) + text)


def parse_error(payload: bytes):
    code, _, length = _ERROR_HEAD.unpack_from(payload, 0)
    text = payload[_ERROR_HEAD.size:_ERROR_HEAD.size + length].decode("utf-8")
    return ErrorCode(code), text


def encode_run_result(command, element_count: int, total_seconds: float) -> bytes:
    return encode_message(command, _RUN_RESULT.pack(element_count, 0, total_seconds))


def parse_run_result(payload: bytes):
    count, _, total = _RUN_RESULT.unpack(payload)
    return count, total


def encode_discovery(tcp_port: int) -> bytes:
    return _DISCOVERY.pack(DISCOVERY_MAGIC, PROTOCOL_VERSION, tcp_port)


def parse_discovery(datagram: bytes) -> int:
    magic, version, port = _DISCOVERY.unpack(datagram)
    if magic != DISCOVERY_MAGIC:
        raise ValueError(f"bad discovery magic {magic!r}")
    if version != PROTOCOL_VERSION:
        raise ValueError(f"unsupported discovery version {version}")
    return port
