import random
import socket
import time

import pytest

from seqware.protocol import Command, ErrorCode
from seqware.service import BUILDING, ControlService, IDLE, RUNNING
from seqware.timeline import TICK_SECONDS
from seqware.trace_io import read_trace_csv
from wire_client import ServiceError, WireClient


@pytest.fixture()
def service(tmp_path):
    svc = ControlService(discovery_port=0, trace_dir=str(tmp_path / "shots"))
    svc.start()
    yield svc
    svc.stop()


@pytest.fixture()
def client(service):
    c = WireClient(service.discovery_port)
    yield c
    c.close()


def queue_small_shot(client, n=3):
    client.build_sequence()
    for i in range(n):
        client.digital_out(i * 1e-6, 0, 1, (i + 1) % 2)
    return n


class TestDiscovery:
    def test_connect_on_loopback(self, service):
        client = WireClient(service.discovery_port)
        client.build_sequence()
        client.disconnect()

    def test_no_service_times_out(self):
        # nothing listens on this port; accept() must time out
        with pytest.raises(socket.timeout):
            WireClient(discovery_port=1, timeout=0.3)

    def test_two_sequential_clients(self, service):
        for _ in range(2):
            client = WireClient(service.discovery_port)
            client.build_sequence()
            client.disconnect()

    def test_malformed_datagram_ignored(self, service):
        udp = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        udp.sendto(b"junk", ("127.0.0.1", service.discovery_port))
        udp.close()
        client = WireClient(service.discovery_port)
        client.disconnect()


class TestStateMachine:
    def test_run_reports_count_and_total(self, service, client):
        n = queue_small_shot(client)
        count, total = client.run_sequence()
        assert count == n
        trace = service.last_trace
        assert total == trace.end_tick * TICK_SECONDS

    def test_run_without_build(self, client):
        with pytest.raises(ServiceError) as err:
            client.run_sequence()
        assert err.value.code == ErrorCode.PROTOCOL_STATE

    def test_run_with_empty_queue(self, client):
        client.build_sequence()
        with pytest.raises(ServiceError) as err:
            client.run_sequence()
        assert err.value.code == ErrorCode.EMPTY_QUEUE

    def test_double_build_rejected(self, client):
        client.build_sequence()
        with pytest.raises(ServiceError) as err:
            client.build_sequence()
        assert err.value.code == ErrorCode.PROTOCOL_STATE

    def test_clear_requires_building(self, client):
        with pytest.raises(ServiceError):
            client.clear_sequence()

    def test_clear_then_run_is_empty(self, client):
        queue_small_shot(client)
        client.clear_sequence()
        with pytest.raises(ServiceError) as err:
            client.run_sequence()
        assert err.value.code == ErrorCode.EMPTY_QUEUE

    def test_rerun_without_history(self, client):
        with pytest.raises(ServiceError):
            client.rerun_last_sequence()

    def test_rerun_reexecutes_retained(self, service, client):
        n = queue_small_shot(client)
        first = client.run_sequence()
        trace_after_run = service.last_trace
        second = client.rerun_last_sequence()
        assert first == second
        assert service.last_trace == trace_after_run  # deterministic rerun

    def test_conflict_reported(self, client):
        client.build_sequence()
        client.digital_out(0.0, 0, 1, 1)
        client.digital_out(0.0, 0, 1, 0)
        with pytest.raises(ServiceError) as err:
            client.run_sequence()
        assert err.value.code == ErrorCode.CONFLICT

    def test_unknown_command_rejected_session_survives(self, client):
        reply = client.send_raw(0x7777)
        assert reply.command == Command.ERROR
        client.build_sequence()   # still usable

    def test_malformed_payload(self, client):
        reply = client.send_raw(Command.SET_DIGITAL_STATE, b"\x01")
        assert reply.command == Command.ERROR

    def test_address_error_over_wire(self, client):
        client.build_sequence()
        with pytest.raises(ServiceError) as err:
            client.set_digital_state(0.0, 9, 1, 1, 1)
        assert err.value.code == ErrorCode.ADDRESS_RANGE

    def test_voltage_error_over_wire(self, client):
        client.build_sequence()
        with pytest.raises(ServiceError) as err:
            client.analog_out(0.0, 0, 0, 42.0)
        assert err.value.code == ErrorCode.VOLTAGE_RANGE


class TestImmediateMode:
    def test_outside_build_updates_defaults(self, service, client):
        client.digital_out(123.0, 2, 16, 1)   # time ignored
        client.analog_out(0.0, 1, 3, 5.0)
        assert service.hardware_defaults.digital_latch(2).line_value(16) == 1
        assert service.hardware_defaults.analog_code(1, 3) == 16384

    def test_defaults_become_pretrigger_state(self, service, client):
        client.digital_out(0.0, 2, 16, 1)
        client.build_sequence()
        client.digital_out(1e-6, 0, 0, 1)
        client.run_sequence()
        trace = service.last_trace
        assert trace.initial_latches[2].line_value(16) == 1

    def test_analog_list_form_single_message(self, service, client):
        client.build_sequence()
        client.set_analog_state([0.0, 1e-6, 2e-6], 1, 2, [1.0, 2.0, 3.0])
        client.digital_out(0.0, 0, 0, 1)
        count, _ = client.run_sequence()
        assert count == 4


class TestTraceDir:
    def test_one_trace_per_shot(self, service, client, tmp_path):
        queue_small_shot(client)
        client.run_sequence()
        client.build_sequence()
        client.digital_out(0.0, 0, 1, 1)
        client.run_sequence()
        shots = sorted((tmp_path / "shots").iterdir())
        assert [p.name for p in shots] == ["shot_0001.csv", "shot_0002.csv"]
        assert read_trace_csv(shots[0]).events   # parses back

    def test_rerun_writes_identical_trace(self, service, client, tmp_path):
        queue_small_shot(client)
        client.run_sequence()
        client.rerun_last_sequence()
        shots = sorted((tmp_path / "shots").iterdir())
        assert shots[0].read_bytes() == shots[1].read_bytes()


class TestChaining:
    def test_chain_returns_immediately_and_pushes_completion(self, service, client):
        queue_small_shot(client)
        count, total = client.run_sequence_chain()
        assert count == 3
        done_count, done_total = client.wait_chain_complete()
        assert (done_count, done_total) == (count, total)

    def test_chain_depth_capped_at_one(self, service, client):
        service.shot_settle_seconds = 0.3
        for _ in range(2):
            queue_small_shot(client)
            client.run_sequence_chain()
        queue_small_shot(client)
        with pytest.raises(ServiceError) as err:
            client.run_sequence_chain()
        assert err.value.code == ErrorCode.BUSY
        client.wait_chain_complete()
        client.wait_chain_complete()
        service.shot_settle_seconds = 0.0
        # after draining, chaining works again
        count, _ = client.run_sequence_chain()
        assert count == 3
        client.wait_chain_complete()

    def test_chained_shots_do_not_overlap(self, service, client):
        service.shot_settle_seconds = 0.05
        queue_small_shot(client)
        client.run_sequence_chain()
        queue_small_shot(client)
        client.run_sequence_chain()
        client.wait_chain_complete()
        client.wait_chain_complete()
        log = service.shot_log
        assert len(log) == 2
        assert log[0][2] <= log[1][1]   # first ends before second starts

    def test_chain_reduces_dead_time(self, service):
        """Start-to-start dead time between chained shots beats the
        blocking build/send/run cycle for the same sequence."""
        service.shot_settle_seconds = 0.05

        def queue_large(client):
            client.build_sequence()
            times = [i * 1e-5 for i in range(4000)]
            volts = [float(i % 7) for i in range(4000)]
            client.set_analog_state(times, 0, 0, volts)
            client.digital_out(0.0, 0, 1, 1)

        blocking = WireClient(service.discovery_port)
        for _ in range(3):
            queue_large(blocking)
            blocking.run_sequence()
        blocking.disconnect()
        blocking_log = list(service.shot_log)

        service.shot_log.clear()
        chained = WireClient(service.discovery_port)
        queue_large(chained)
        chained.run_sequence_chain()
        for _ in range(2):
            queue_large(chained)
            chained.run_sequence_chain()
            chained.wait_chain_complete()
        chained.wait_chain_complete()
        chained.disconnect()
        chained_log = list(service.shot_log)

        def dead_times(log):
            return [log[i + 1][1] - log[i][2] for i in range(len(log) - 1)]

        assert max(dead_times(chained_log)) < max(dead_times(blocking_log))


class TestOwnership:
    def test_second_session_gets_busy(self, service):
        a = WireClient(service.discovery_port)
        b = WireClient(service.discovery_port)
        service.shot_settle_seconds = 0.3
        queue_small_shot(a)
        a.run_sequence_chain()
        queue_small_shot(b)
        with pytest.raises(ServiceError) as err:
            b.run_sequence_chain()
        assert err.value.code == ErrorCode.BUSY
        a.wait_chain_complete()
        service.shot_settle_seconds = 0.0
        count, _ = b.run_sequence_chain()   # owner released
        assert count == 3
        b.wait_chain_complete()
        a.disconnect()
        b.disconnect()


class TestModeProperty:
    def test_modes_follow_protocol(self, service):
        client = WireClient(service.discovery_port)
        deadline = time.monotonic() + 2
        while not service.sessions and time.monotonic() < deadline:
            time.sleep(0.01)
        session = service.sessions[0]
        assert session.mode == IDLE
        client.build_sequence()
        assert session.mode == BUILDING
        client.digital_out(0.0, 0, 1, 1)
        service.shot_settle_seconds = 0.2
        client.run_sequence_chain()
        assert session.mode == RUNNING
        client.wait_chain_complete()
        deadline = time.monotonic() + 2
        while session.mode != IDLE and time.monotonic() < deadline:
            time.sleep(0.01)
        assert session.mode == IDLE
        client.disconnect()


class LegalityModel:
    """Mirror of the documented per-session command legality."""

    def __init__(self):
        self.building = False
        self.queue = 0
        self.retained = False

    def legal(self, command):
        if command == "build":
            return not self.building
        if command == "clear":
            return self.building
        if command == "set":
            return True
        if command in ("run", "chain"):
            return self.building and self.queue > 0
        if command == "rerun":
            return not self.building and self.retained
        raise AssertionError(command)

    def apply(self, command):
        if command == "build":
            self.building = True
            self.queue = 0
        elif command == "clear":
            self.queue = 0
        elif command == "set":
            if self.building:
                self.queue += 1
        elif command in ("run", "chain"):
            self.building = False
            self.retained = True
        elif command == "rerun":
            pass


class TestFuzzStateMachine:
    def test_random_command_streams_follow_model(self, service):
        rng = random.Random(2024)
        client = WireClient(service.discovery_port)
        model = LegalityModel()
        commands = ["build", "clear", "set", "run", "chain", "rerun"]
        line = 0
        for _ in range(250):
            command = rng.choice(commands)
            legal = model.legal(command)
            try:
                if command == "build":
                    client.build_sequence()
                elif command == "clear":
                    client.clear_sequence()
                elif command == "set":
                    line = (line + 1) % 30
                    client.digital_out(line * 1e-6, 0, 1, line % 2)
                elif command == "run":
                    client.run_sequence()
                elif command == "chain":
                    client.run_sequence_chain()
                    client.wait_chain_complete()
                elif command == "rerun":
                    client.rerun_last_sequence()
                accepted = True
            except ServiceError as err:
                accepted = False
                assert err.code in (ErrorCode.PROTOCOL_STATE, ErrorCode.EMPTY_QUEUE,
                                    ErrorCode.BUSY), err
            assert accepted == legal, f"{command}: accepted={accepted} legal={legal}"
            if accepted:
                model.apply(command)
        client.disconnect()
