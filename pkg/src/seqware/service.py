"""Network control service: discovery, sessions, and shot execution.

The service listens for UDP discovery datagrams on a known port.  A
client sends the port of a TCP server it is hosting; the service
connects back, and that stream carries the command set.  One session at
a time owns the simulated output hardware: a second client may connect
and build, but its run commands are answered with BUSY until the owner
drains.

Per session the legal command flow is a small state machine:

    Idle      --build_sequence-->  Building
    Building  --set_* (queued)-->  Building
    Building  --run_sequence----->  blocks, replies RUN_RESULT on completion
    Building  --run_sequence_chain--> returns at once; up to one next
                                      sequence may be queued while one runs
    Idle      --rerun_last_sequence--> re-executes the retained compilation

set_digital_state / set_analog_state outside Building ignore the time
parameter, update the idle outputs immediately, and become the
pre-trigger defaults of subsequent shots.

Shots execute on a single runner thread in submission order; completed
chained shots push RUN_COMPLETE on the originating session's stream.
The dispatch of commands is serialized service-wide, but a blocking run
only ever blocks its own session.
"""

from __future__ import annotations

import logging
import os
import socket
import threading
import time
from dataclasses import dataclass, field

from .compiler import ConflictPolicy, compile_queue
from .engine import run
from .errors import (
    AddressOutOfRangeError,
    BusyError,
    ConflictError,
    EmptyQueueError,
    ListLengthMismatchError,
    ProtocolStateError,
    SeqwareError,
    VoltageOutOfRangeError,
)
from .protocol import (
    Command,
    DEFAULT_DISCOVERY_PORT,
    ErrorCode,
    encode_error,
    encode_message,
    encode_run_result,
    parse_discovery,
    parse_set_analog_state,
    parse_set_digital_state,
    read_message,
)
from .sequence import DefaultStates, SequenceBuilder
from .timeline import channel_mask_limit, volts_to_code
from .trace_io import write_trace_csv

log = logging.getLogger("seqware.service")

IDLE = "Idle"
BUILDING = "Building"
RUNNING = "Running"
RUNNING_QUEUED = "RunningWithQueuedNext"


@dataclass
class _Job:
    session: "Session"
    compiled: object
    push: bool
    done: threading.Event = field(default_factory=threading.Event)
    error: Exception | None = None


class Session:
    """One connected client and its sequence-building state."""

    _ids = iter(range(1, 1 << 31))

    def __init__(self, service, sock, peer):
        self.service = service
        self.sock = sock
        self.peer = peer
        self.id = next(Session._ids)
        self.builder: SequenceBuilder | None = None
        self.retained = None
        self.jobs_outstanding = 0
        self._send_lock = threading.Lock()
        self._thread = threading.Thread(
            target=self._loop, name=f"seqware-session-{self.id}", daemon=True
        )

    @property
    def building(self) -> bool:
        return self.builder is not None

    @property
    def mode(self) -> str:
        with self.service._lock:
            if self.jobs_outstanding >= 2:
                return RUNNING_QUEUED
            if self.jobs_outstanding == 1:
                return RUNNING
        return BUILDING if self.building else IDLE

    def start(self):
        self._thread.start()

    def send(self, data: bytes):
        with self._send_lock:
            self.sock.sendall(data)

    def close(self):
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()

    # --- command loop ------------------------------------------------------

    def _loop(self):
        log.info("session %d connected from %s:%d", self.id, *self.peer)
        try:
            while True:
                try:
                    message = read_message(self.sock)
                except (ConnectionError, OSError, ValueError):
                    break
                if not self._dispatch(message):
                    break
        finally:
            self.service._drop_session(self)
            log.info("session %d closed", self.id)

    def _dispatch(self, message) -> bool:
        try:
            return self._handle(message)
        except ProtocolStateError as exc:
            self.send(encode_error(ErrorCode.PROTOCOL_STATE, str(exc)))
        except BusyError as exc:
            self.send(encode_error(ErrorCode.BUSY, str(exc)))
        except EmptyQueueError as exc:
            self.send(encode_error(ErrorCode.EMPTY_QUEUE, str(exc)))
        except ConflictError as exc:
            self.send(encode_error(ErrorCode.CONFLICT, str(exc)))
        except AddressOutOfRangeError as exc:
            self.send(encode_error(ErrorCode.ADDRESS_RANGE, str(exc)))
        except VoltageOutOfRangeError as exc:
            self.send(encode_error(ErrorCode.VOLTAGE_RANGE, str(exc)))
        except ListLengthMismatchError as exc:
            self.send(encode_error(ErrorCode.LIST_MISMATCH, str(exc)))
        except (ValueError, KeyError, IndexError, SeqwareError) as exc:
            self.send(encode_error(ErrorCode.MALFORMED, str(exc)))
        except Exception as exc:   # keep the session alive, report inward
            log.exception("session %d: internal error", self.id)
            self.send(encode_error(ErrorCode.INTERNAL, str(exc)))
        return True

    def _handle(self, message) -> bool:
        service = self.service
        command = message.command
        if command == Command.BUILD_SEQUENCE:
            with service._dispatch_lock:
                if self.building:
                    raise ProtocolStateError("already building a sequence")
                self.builder = SequenceBuilder()
            self.send(encode_message(Command.OK))
        elif command == Command.CLEAR_SEQUENCE:
            with service._dispatch_lock:
                if not self.building:
                    raise ProtocolStateError("no sequence is being built")
                self.builder.transitions.clear()
            self.send(encode_message(Command.OK))
        elif command == Command.SET_DIGITAL_STATE:
            t, connector, mask, enable, state = parse_set_digital_state(message.payload)
            with service._dispatch_lock:
                if self.building:
                    self.builder.set_digital_state(t, connector, mask, enable, state)
                else:
                    service.apply_immediate_digital(connector, mask, enable, state)
            self.send(encode_message(Command.OK))
        elif command == Command.SET_ANALOG_STATE:
            board, channel, pairs = parse_set_analog_state(message.payload)
            with service._dispatch_lock:
                if self.building:
                    for t, volts in pairs:
                        self.builder.analog_out(t, board, channel, volts)
                else:
                    for _, volts in pairs:
                        service.apply_immediate_analog(board, channel, volts)
            self.send(encode_message(Command.OK))
        elif command == Command.RUN_SEQUENCE:
            job = self._start_run(chain=False)
            job.done.wait()
            self._finish_blocking(job, Command.RUN_RESULT)
        elif command == Command.RUN_SEQUENCE_CHAIN:
            job = self._start_run(chain=True)
            self.send(encode_run_result(Command.RUN_RESULT,
                                        job.compiled.transition_count,
                                        job.compiled.total_time_seconds))
        elif command == Command.RERUN_LAST_SEQUENCE:
            with self.service._dispatch_lock:
                if self.building:
                    raise ProtocolStateError("cannot rerun while building")
                if self.retained is None:
                    raise ProtocolStateError("no previously executed sequence")
                job = self.service.submit(self, self.retained, push=False)
            job.done.wait()
            self._finish_blocking(job, Command.RUN_RESULT)
        elif command == Command.DISCONNECT:
            self.send(encode_message(Command.OK))
            return False
        else:
            self.send(encode_error(ErrorCode.UNKNOWN_COMMAND,
                                   f"unknown command id {command:#06x}"))
        return True

    def _start_run(self, chain: bool) -> _Job:
        with self.service._dispatch_lock:
            if not self.building:
                raise ProtocolStateError("no sequence is being built")
            if not self.builder.transitions:
                raise EmptyQueueError("the queued sequence is empty")
            compiled = compile_queue(
                self.builder.transitions,
                policy=self.service.conflict_policy,
                defaults=self.service.hardware_defaults.copy(),
            )
            # a Busy rejection must leave the built sequence intact
            job = self.service.submit(self, compiled, push=chain)
            self.retained = compiled
            self.builder = None
            return job

    def _finish_blocking(self, job, reply_command):
        if job.error is not None:
            self.send(encode_error(ErrorCode.INTERNAL, str(job.error)))
        else:
            self.send(encode_run_result(reply_command,
                                        job.compiled.transition_count,
                                        job.compiled.total_time_seconds))


class ControlService:
    """Discovery listener, session registry and single-shot runner."""

    def __init__(self, discovery_port=DEFAULT_DISCOVERY_PORT, host="127.0.0.1",
                 trace_dir=None, conflict_policy=ConflictPolicy.REJECT,
                 shot_settle_seconds=0.0, run_kwargs=None):
        self.host = host
        self.requested_port = discovery_port
        self.discovery_port = None
        self.trace_dir = trace_dir
        self.conflict_policy = conflict_policy
        self.shot_settle_seconds = shot_settle_seconds
        self.run_kwargs = dict(run_kwargs or {})
        self.hardware_defaults = DefaultStates()
        self.on_trace = None        # optional hook: (trace, shot_index) after each shot
        self.last_trace = None
        self.shot_log = []          # (session_id, start_monotonic, end_monotonic)
        self.sessions = []
        self._lock = threading.RLock()
        self._dispatch_lock = threading.RLock()
        self._owner = None
        self._jobs = []
        self._job_ready = threading.Condition(self._lock)
        self._stop = threading.Event()
        self._udp = None
        self._threads = []
        self._shot_index = 0

    # --- lifecycle ---------------------------------------------------------

    def start(self):
        self._udp = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        try:
            self._udp.bind((self.host, self.requested_port))
        except OSError:
            self._udp.close()
            raise
        self.discovery_port = self._udp.getsockname()[1]
        self._udp.settimeout(0.1)
        if self.trace_dir:
            os.makedirs(self.trace_dir, exist_ok=True)
        for target, name in ((self._discovery_loop, "seqware-discovery"),
                             (self._run_loop, "seqware-runner")):
            thread = threading.Thread(target=target, name=name, daemon=True)
            thread.start()
            self._threads.append(thread)
        log.info("discovery listening on %s:%d", self.host, self.discovery_port)
        return self

    def stop(self):
        self._stop.set()
        with self._job_ready:
            self._job_ready.notify_all()
        for session in list(self.sessions):
            session.close()
        for thread in self._threads:
            thread.join(timeout=5)
        if self._udp is not None:
            self._udp.close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    # --- discovery ---------------------------------------------------------

    def _discovery_loop(self):
        while not self._stop.is_set():
            try:
                datagram, addr = self._udp.recvfrom(64)
            except socket.timeout:
                continue
            except OSError:
                break
            try:
                port = parse_discovery(datagram)
            except Exception as exc:
                log.warning("ignoring malformed discovery datagram from %s: %s",
                            addr, exc)
                continue
            try:
                sock = socket.create_connection((addr[0], port), timeout=5)
            except OSError as exc:
                log.warning("connect-back to %s:%d failed: %s", addr[0], port, exc)
                continue
            session = Session(self, sock, (addr[0], port))
            with self._lock:
                self.sessions.append(session)
            session.start()

    def _drop_session(self, session):
        with self._lock:
            if session in self.sessions:
                self.sessions.remove(session)
        session.close()

    # --- immediate mode ------------------------------------------------------

    def apply_immediate_digital(self, connector, channel_mask, enable, state):
        limit = channel_mask_limit(connector)
        if channel_mask & ~limit:
            raise AddressOutOfRangeError(
                f"channel mask {channel_mask:#x} exceeds connector {connector} width"
            )
        self.hardware_defaults.set_digital(connector, channel_mask, enable, state)

    def apply_immediate_analog(self, board, channel, volts):
        self.hardware_defaults.set_analog(board, channel, volts_to_code(volts))

    # --- shot execution -------------------------------------------------------

    def submit(self, session, compiled, push: bool) -> _Job:
        with self._lock:
            if self._owner is not None and self._owner is not session:
                raise BusyError("another session owns the output hardware")
            if push and session.jobs_outstanding >= 2:
                raise BusyError("chain depth 1 exceeded: a next sequence is "
                                "already queued")
            job = _Job(session, compiled, push)
            self._owner = session
            session.jobs_outstanding += 1
            self._jobs.append(job)
            self._job_ready.notify_all()
            return job

    def _next_job(self):
        with self._job_ready:
            while not self._jobs and not self._stop.is_set():
                self._job_ready.wait(timeout=0.2)
            if self._jobs:
                return self._jobs.pop(0)
            return None

    def _run_loop(self):
        while True:
            job = self._next_job()
            if job is None:
                return
            start = time.monotonic()
            trace = None
            try:
                trace = run(job.compiled, **self.run_kwargs)
                if self.shot_settle_seconds:
                    time.sleep(self.shot_settle_seconds)
            except Exception as exc:
                job.error = exc
            end = time.monotonic()
            with self._lock:
                if trace is not None:
                    self.last_trace = trace
                    self._shot_index += 1
                    if self.trace_dir:
                        path = os.path.join(self.trace_dir,
                                            f"shot_{self._shot_index:04d}.csv")
                        try:
                            write_trace_csv(trace, path)
                        except OSError as exc:
                            job.error = job.error or exc
                    if self.on_trace is not None:
                        try:
                            self.on_trace(trace, self._shot_index)
                        except Exception:
                            log.exception("on_trace hook failed")
                self.shot_log.append((job.session.id, start, end))
                job.session.jobs_outstanding -= 1
                if job.session.jobs_outstanding == 0 and self._owner is job.session:
                    self._owner = None
            job.done.set()
            if job.push:
                try:
                    if job.error is not None:
                        job.session.send(encode_error(ErrorCode.INTERNAL,
                                                      str(job.error)))
                    else:
                        job.session.send(encode_run_result(
                            Command.RUN_COMPLETE,
                            job.compiled.transition_count,
                            job.compiled.total_time_seconds,
                        ))
                except OSError:
                    pass
