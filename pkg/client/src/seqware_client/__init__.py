"""Scripting client for the seqware control service.

Implements the wire protocol (docs/protocol.md in the service
repository): UDP discovery with a connect-back TCP stream, then
length-prefixed commands.  All sequencing logic lives server-side; this
package only queues primitive output commands and provides the timing
helpers used to compose sequences.

Typical run script:

    import seqware_client as ew

    ew.connect(1.0)
    ew.digital_out(0.00, 2, 16, 0)      # immediate: pre-trigger default
    ew.build_sequence()
    MySequence().seq(0.00)              # queues deterministic commands
    count, seconds = ew.run_sequence()  # blocks until the shot completes
    ew.disconnect()
"""

from __future__ import annotations

import socket
import struct
from collections import deque

MAGIC = b"SQW1"
DISCOVERY_MAGIC = b"SQWD"
PROTOCOL_VERSION = 1
DEFAULT_DISCOVERY_PORT = 8282

_HEADER = struct.Struct("<4sHHI")
_DIGITAL = struct.Struct("<dIIII")
_ANALOG_HEAD = struct.Struct("<III")
_ANALOG_PAIR = struct.Struct("<dd")
_ERROR_HEAD = struct.Struct("<HHI")
_RUN_RESULT = struct.Struct("<IId")
_DISCOVERY = struct.Struct("<4sHH")

CMD_BUILD_SEQUENCE = 0x0001
CMD_CLEAR_SEQUENCE = 0x0002
CMD_RUN_SEQUENCE = 0x0003
CMD_RUN_SEQUENCE_CHAIN = 0x0004
CMD_RERUN_LAST_SEQUENCE = 0x0005
CMD_DISCONNECT = 0x0006
CMD_SET_DIGITAL_STATE = 0x0010
CMD_SET_ANALOG_STATE = 0x0011
REPLY_OK = 0x0100
REPLY_ERROR = 0x0101
REPLY_RUN_RESULT = 0x0102
REPLY_RUN_COMPLETE = 0x0103


class ClientError(Exception):
    """Error reply from the service; .code carries the protocol code."""

    def __init__(self, code, message):
        super().__init__(f"[{code}] {message}")
        self.code = code
        self.text = message


class DiscoveryTimeout(ClientError):
    def __init__(self, message):
        Exception.__init__(self, message)
        self.code = None
        self.text = message


class NotConnectedError(ClientError):
    def __init__(self):
        Exception.__init__(self, "not connected; call connect() first")
        self.code = None
        self.text = "not connected"


def _recv_exact(sock, n):
    chunks = []
    while n:
        chunk = sock.recv(n)
        if not chunk:
            raise ConnectionError("service closed the stream")
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


class Connection:
    """One session with the control service."""

    def __init__(self):
        self._sock = None
        self._pushed = deque()

    @property
    def connected(self):
        return self._sock is not None

    # --- session management ------------------------------------------------

    def connect(self, timeout_sec, discovery_port=DEFAULT_DISCOVERY_PORT,
                host="127.0.0.1"):
        """Discover the service and establish the session.

        Hosts a short-lived TCP server, announces its port over UDP,
        and waits up to timeout_sec for the service to connect back.
        """
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        udp = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        try:
            listener.bind(("127.0.0.1", 0))
            listener.listen(1)
            listener.settimeout(timeout_sec)
            udp.sendto(
                _DISCOVERY.pack(DISCOVERY_MAGIC, PROTOCOL_VERSION,
                                listener.getsockname()[1]),
                (host, discovery_port),
            )
            try:
                self._sock, _ = listener.accept()
            except socket.timeout:
                raise DiscoveryTimeout(
                    f"no service answered on {host}:{discovery_port} "
                    f"within {timeout_sec} s") from None
        finally:
            udp.close()
            listener.close()
        self._sock.settimeout(30.0)
        return self

    def disconnect(self):
        """Tear the session down; call after the last sequence completes."""
        if self._sock is None:
            return
        try:
            self._transact(CMD_DISCONNECT, expect=REPLY_OK)
        finally:
            self._sock.close()
            self._sock = None
            self._pushed.clear()

    # --- wire plumbing -------------------------------------------------------

    def _send(self, command, payload=b""):
        if self._sock is None:
            raise NotConnectedError()
        self._sock.sendall(
            _HEADER.pack(MAGIC, PROTOCOL_VERSION, command, len(payload)) + payload
        )

    def _read_message(self):
        header = _recv_exact(self._sock, _HEADER.size)
        magic, version, command, length = _HEADER.unpack(header)
        if magic != MAGIC or version != PROTOCOL_VERSION:
            raise ConnectionError("malformed reply from service")
        payload = _recv_exact(self._sock, length) if length else b""
        return command, payload

    def _read_reply(self):
        while True:
            command, payload = self._read_message()
            if command == REPLY_RUN_COMPLETE:
                count, _, total = _RUN_RESULT.unpack(payload)
                self._pushed.append((count, total))
                continue
            return command, payload

    def _transact(self, command, payload=b"", expect=REPLY_OK, timeout=None):
        if self._sock is None:
            raise NotConnectedError()
        if timeout is not None:
            self._sock.settimeout(timeout)
        try:
            self._send(command, payload)
            reply, reply_payload = self._read_reply()
        finally:
            if timeout is not None:
                self._sock.settimeout(30.0)
        if reply == REPLY_ERROR:
            code, _, length = _ERROR_HEAD.unpack_from(reply_payload, 0)
            text = reply_payload[_ERROR_HEAD.size:_ERROR_HEAD.size + length]
            raise ClientError(code, text.decode("utf-8"))
        if reply != expect:
            raise ConnectionError(f"unexpected reply {reply:#06x}")
        return reply_payload

    # --- sequencing commands --------------------------------------------------

    def build_sequence(self):
        """Start queueing deterministic commands for the next shot."""
        self._transact(CMD_BUILD_SEQUENCE)

    def clear_sequence(self):
        self._transact(CMD_CLEAR_SEQUENCE)

    def run_sequence(self, timeout=600.0):
        """Send the queued sequence and run it; blocks until the shot
        completes.  Returns (element_count, total_seconds)."""
        payload = self._transact(CMD_RUN_SEQUENCE, expect=REPLY_RUN_RESULT,
                                 timeout=timeout)
        count, _, total = _RUN_RESULT.unpack(payload)
        return count, total

    def run_sequence_chain(self):
        """Like run_sequence but returns immediately; one next sequence
        may be queued while the current one runs.  The completion
        notification is retrieved with wait_chain_complete()."""
        payload = self._transact(CMD_RUN_SEQUENCE_CHAIN, expect=REPLY_RUN_RESULT)
        count, _, total = _RUN_RESULT.unpack(payload)
        return count, total

    def rerun_last_sequence(self, timeout=600.0):
        """Re-run the previously executed sequence without retransmitting
        it; blocks like run_sequence."""
        payload = self._transact(CMD_RERUN_LAST_SEQUENCE, expect=REPLY_RUN_RESULT,
                                 timeout=timeout)
        count, _, total = _RUN_RESULT.unpack(payload)
        return count, total

    def wait_chain_complete(self, timeout=600.0):
        if self._pushed:
            return self._pushed.popleft()
        self._sock.settimeout(timeout)
        try:
            command, payload = self._read_message()
        finally:
            self._sock.settimeout(30.0)
        if command != REPLY_RUN_COMPLETE:
            raise ConnectionError(f"unexpected message {command:#06x}")
        count, _, total = _RUN_RESULT.unpack(payload)
        return count, total

    # --- output commands ---------------------------------------------------------

    def set_digital_state(self, time, connector, channel_mask,
                          output_enable_state, output_state):
        """Full masked write of a connector's lines.  Queued while
        building; otherwise applied immediately (time ignored) and
        recorded as the pre-trigger default."""
        self._transact(CMD_SET_DIGITAL_STATE,
                       _DIGITAL.pack(time, connector, channel_mask,
                                     output_enable_state, output_state))
        return 0.0

    def set_analog_state(self, time, board, channel, value):
        """Set one analog channel; time and value may be equal-length
        lists, queued with a single message."""
        if isinstance(time, (list, tuple)) or isinstance(value, (list, tuple)):
            if not (isinstance(time, (list, tuple))
                    and isinstance(value, (list, tuple))):
                raise ValueError("time and value must both be lists")
            if len(time) != len(value):
                raise ValueError("time and value lists differ in length")
            times, values = list(time), list(value)
        else:
            times, values = [time], [value]
        parts = [_ANALOG_HEAD.pack(board, channel, len(times))]
        for t, v in zip(times, values):
            parts.append(_ANALOG_PAIR.pack(t, v))
        self._transact(CMD_SET_ANALOG_STATE, b"".join(parts))
        return 0.0

    def digital_out(self, time, connector, channel, state):
        """Change one digital line at `time`; the primitive behind every
        digital step.  Returns 0 elapsed."""
        bit = 1 << channel
        return self.set_digital_state(time, connector, bit, bit, state << channel)

    def analog_out(self, time, board, channel, value):
        """Change one analog output to `value` volts at `time`."""
        return self.set_analog_state(time, board, channel, value)


# --- timing helpers ------------------------------------------------------------

def null_step(t):
    return 0.0


class Sequence:
    """Base timing context for composing sequences.

    start_time anchors the sequence; current_time advances with each
    step.  abs() runs a step at a fixed offset from start_time, rel()
    runs it after the previous step finishes.  Steps are callables
    taking an absolute time and returning their elapsed duration;
    decorate a (self, t) method with ``Sequence._update_time`` to turn
    it into a step with its own local origin.
    """

    def __init__(self):
        self.start_time = 0
        self.current_time = self.start_time

    def abs(self, t_step, step=null_step):
        self.current_time = t_step + self.start_time
        step_time = step(self.current_time)
        self.current_time += step_time
        return step_time

    def rel(self, delay_time, step=null_step):
        self.current_time += delay_time
        if isinstance(step, list):
            if not step:
                raise ValueError("rel() called with an empty step list")
            for seq in step:
                step_time = seq(self.current_time)
            self.current_time += step_time
            return step_time
        step_time = step(self.current_time)
        self.current_time += step_time
        return step_time

    def _update_time(func):
        def time_wrapper(self, t):
            self.start_time = t
            self.current_time = t
            func(self, t)
            return self.current_time - self.start_time
        time_wrapper.__name__ = func.__name__
        time_wrapper.__doc__ = func.__doc__
        return time_wrapper


# --- module-level default connection --------------------------------------------

_default = Connection()


def connect(timeout_sec, discovery_port=DEFAULT_DISCOVERY_PORT, host="127.0.0.1"):
    return _default.connect(timeout_sec, discovery_port, host)


def disconnect():
    return _default.disconnect()


def build_sequence():
    return _default.build_sequence()


def clear_sequence():
    return _default.clear_sequence()


def run_sequence(timeout=600.0):
    return _default.run_sequence(timeout)


def run_sequence_chain():
    return _default.run_sequence_chain()


def rerun_last_sequence(timeout=600.0):
    return _default.rerun_last_sequence(timeout)


def wait_chain_complete(timeout=600.0):
    return _default.wait_chain_complete(timeout)


def set_digital_state(time, connector, channel_mask, output_enable_state,
                      output_state):
    return _default.set_digital_state(time, connector, channel_mask,
                                      output_enable_state, output_state)


def set_analog_state(time, board, channel, value):
    return _default.set_analog_state(time, board, channel, value)


def digital_out(time, connector, channel, state):
    return _default.digital_out(time, connector, channel, state)


def analog_out(time, board, channel, value):
    return _default.analog_out(time, board, channel, value)


__all__ = [
    "ClientError", "Connection", "DiscoveryTimeout", "NotConnectedError",
    "Sequence", "analog_out", "build_sequence", "clear_sequence", "connect",
    "digital_out", "disconnect", "null_step", "rerun_last_sequence",
    "run_sequence", "run_sequence_chain", "set_analog_state",
    "set_digital_state", "wait_chain_complete",
]
