"""Minimal scripted client for exercising the control service in tests.

Speaks the documented wire protocol directly (discovery datagram, TCP
listen + connect-back, length-prefixed messages); deliberately shares
no code with any client library.
"""

import socket
from collections import deque

from seqware.protocol import (
    Command,
    encode_discovery,
    encode_message,
    encode_set_analog_state,
    encode_set_digital_state,
    parse_error,
    parse_run_result,
    read_message,
)


class ServiceError(Exception):
    def __init__(self, code, message):
        super().__init__(f"[{code.name}] {message}")
        self.code = code
        self.text = message


class WireClient:
    def __init__(self, discovery_port, host="127.0.0.1", timeout=5.0):
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.bind(("127.0.0.1", 0))
        listener.listen(1)
        listener.settimeout(timeout)
        udp = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        try:
            udp.sendto(encode_discovery(listener.getsockname()[1]), (host, discovery_port))
            self.sock, _ = listener.accept()
        finally:
            udp.close()
            listener.close()
        self.sock.settimeout(timeout)
        self.pushed = deque()

    def close(self):
        self.sock.close()

    def _send(self, data):
        self.sock.sendall(data)

    def _recv_reply(self):
        while True:
            message = read_message(self.sock)
            if message.command == Command.RUN_COMPLETE:
                self.pushed.append(parse_run_result(message.payload))
                continue
            return message

    def _expect_ok(self):
        message = self._recv_reply()
        if message.command == Command.ERROR:
            raise ServiceError(*parse_error(message.payload))
        assert message.command == Command.OK, message
        return True

    def _expect_run_result(self):
        message = self._recv_reply()
        if message.command == Command.ERROR:
            raise ServiceError(*parse_error(message.payload))
        assert message.command == Command.RUN_RESULT, message
        return parse_run_result(message.payload)

    # --- commands ---------------------------------------------------------

    def build_sequence(self):
        self._send(encode_message(Command.BUILD_SEQUENCE))
        return self._expect_ok()

    def clear_sequence(self):
        self._send(encode_message(Command.CLEAR_SEQUENCE))
        return self._expect_ok()

    def run_sequence(self, timeout=60.0):
        self.sock.settimeout(timeout)
        try:
            self._send(encode_message(Command.RUN_SEQUENCE))
            return self._expect_run_result()
        finally:
            self.sock.settimeout(5.0)

    def run_sequence_chain(self):
        self._send(encode_message(Command.RUN_SEQUENCE_CHAIN))
        return self._expect_run_result()

    def rerun_last_sequence(self, timeout=60.0):
        self.sock.settimeout(timeout)
        try:
            self._send(encode_message(Command.RERUN_LAST_SEQUENCE))
            return self._expect_run_result()
        finally:
            self.sock.settimeout(5.0)

    def disconnect(self):
        self._send(encode_message(Command.DISCONNECT))
        ok = self._expect_ok()
        self.close()
        return ok

    def set_digital_state(self, time, connector, channel_mask,
                          output_enable_state, output_state):
        self._send(encode_set_digital_state(time, connector, channel_mask,
                                            output_enable_state, output_state))
        return self._expect_ok()

    def set_analog_state(self, time, board, channel, value):
        if isinstance(time, (list, tuple)):
            times, values = list(time), list(value)
        else:
            times, values = [time], [value]
        self._send(encode_set_analog_state(board, channel, times, values))
        return self._expect_ok()

    def digital_out(self, time, connector, channel, state):
        bit = 1 << channel
        return self.set_digital_state(time, connector, bit, bit, state << channel)

    def analog_out(self, time, board, channel, value):
        return self.set_analog_state(time, board, channel, value)

    def send_raw(self, command, payload=b""):
        self._send(encode_message(command, payload))
        return self._recv_reply()

    def wait_chain_complete(self, timeout=60.0):
        if self.pushed:
            return self.pushed.popleft()
        self.sock.settimeout(timeout)
        try:
            message = read_message(self.sock)
        finally:
            self.sock.settimeout(5.0)
        assert message.command == Command.RUN_COMPLETE, message
        return parse_run_result(message.payload)
