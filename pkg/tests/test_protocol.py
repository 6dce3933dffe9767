import socket

import pytest
from hypothesis import given, strategies as st

from seqware.protocol import (
    Command,
    ErrorCode,
    HEADER,
    MAGIC,
    WireMessage,
    encode_discovery,
    encode_error,
    encode_message,
    encode_run_result,
    encode_set_analog_state,
    encode_set_digital_state,
    parse_discovery,
    parse_error,
    parse_run_result,
    parse_set_analog_state,
    parse_set_digital_state,
    read_message,
)


def loop_through_socket(data: bytes) -> WireMessage:
    a, b = socket.socketpair()
    try:
        a.sendall(data)
        return read_message(b)
    finally:
        a.close()
        b.close()


class TestFraming:
    def test_header_layout(self):
        blob = encode_message(Command.BUILD_SEQUENCE)
        assert blob[:4] == MAGIC
        assert len(blob) == HEADER.size

    def test_socket_round_trip(self):
        message = loop_through_socket(encode_message(Command.OK))
        assert message.command == Command.OK
        assert message.payload == b""

    def test_bad_magic_rejected(self):
        data = b"XXXX" + encode_message(Command.OK)[4:]
        with pytest.raises(ValueError, match="magic"):
            loop_through_socket(data)

    def test_bad_version_rejected(self):
        good = encode_message(Command.OK)
        data = good[:4] + b"\x63\x00" + good[6:]
        with pytest.raises(ValueError, match="version"):
            loop_through_socket(data)

    def test_truncated_stream(self):
        a, b = socket.socketpair()
        try:
            a.sendall(encode_message(Command.ERROR, b"\x00" * 4)[:10])
            a.close()
            with pytest.raises(ConnectionError):
                read_message(b)
        finally:
            b.close()


class TestPayloadRoundTrips:
    @given(st.floats(allow_nan=False, allow_infinity=False),
           st.integers(0, 4), st.integers(0, 2**32 - 1),
           st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1))
    def test_digital(self, t, connector, mask, enable, state):
        blob = encode_set_digital_state(t, connector, mask, enable, state)
        message = loop_through_socket(blob)
        assert message.command == Command.SET_DIGITAL_STATE
        assert parse_set_digital_state(message.payload) == \
            (t, connector, mask, enable, state)

    @given(st.integers(0, 1), st.integers(0, 7),
           st.lists(st.tuples(
               st.floats(allow_nan=False, allow_infinity=False),
               st.floats(min_value=-10, max_value=10)), max_size=20))
    def test_analog(self, board, channel, pairs):
        times = [p[0] for p in pairs]
        volts = [p[1] for p in pairs]
        blob = encode_set_analog_state(board, channel, times, volts)
        message = loop_through_socket(blob)
        got_board, got_channel, got_pairs = parse_set_analog_state(message.payload)
        assert (got_board, got_channel) == (board, channel)
        assert got_pairs == pairs

    def test_analog_length_validation(self):
        blob = encode_set_analog_state(0, 0, [0.0], [1.0])
        payload = loop_through_socket(blob).payload
        with pytest.raises(ValueError):
            parse_set_analog_state(payload + b"\x00")

    @given(st.sampled_from(sorted(ErrorCode)), st.text(max_size=200))
    def test_error(self, code, text):
        message = loop_through_socket(encode_error(code, text))
        assert parse_error(message.payload) == (code, text)

    @given(st.integers(0, 2**32 - 1),
           st.floats(min_value=0, max_value=1e6, allow_nan=False))
    def test_run_result(self, count, total):
        blob = encode_run_result(Command.RUN_RESULT, count, total)
        message = loop_through_socket(blob)
        assert parse_run_result(message.payload) == (count, total)

    @given(st.integers(1, 65535))
    def test_discovery(self, port):
        assert parse_discovery(encode_discovery(port)) == port

    def test_discovery_rejects_noise(self):
        with pytest.raises(Exception):
            parse_discovery(b"garbage!")
