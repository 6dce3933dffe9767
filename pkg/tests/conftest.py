import random

import pytest

from seqware.compiler import compile_queue
from seqware.engine import run
from seqware.sequence import SequenceBuilder
from seqware.timeline import TICK_SECONDS


def simulate(builder, **run_kwargs):
    seq = compile_queue(builder.transitions, defaults=builder.defaults)
    return seq, run(seq, **run_kwargs)


def random_builder(rng: random.Random, max_span_ticks=20_000, n_channels=6,
                   n_analog=4, events_per_channel=(1, 12)):
    """Random but conflict-free mixed digital/analog queue.

    Each digital line gets its own sorted set of distinct ticks with
    alternating states; each analog channel its own distinct grid-ish
    times, so the queue compiles under any conflict policy.
    """
    out = SequenceBuilder()
    lines = [(rng.randrange(5), None) for _ in range(n_channels)]
    lines = [(c, rng.randrange(8 if c == 4 else 32)) for c, _ in lines]
    for connector, channel in set(lines):
        n = rng.randint(*events_per_channel)
        ticks = rng.sample(range(max_span_ticks), n)
        state = rng.randint(0, 1)
        for tick in sorted(ticks):
            out.digital_out(tick * TICK_SECONDS, connector, channel, state)
            state ^= 1
    analog = {(rng.randrange(2), rng.randrange(8)) for _ in range(n_analog)}
    for board, channel in analog:
        n = rng.randint(*events_per_channel)
        times = rng.sample(range(max_span_ticks), n)
        for tick in sorted(times):
            volts = rng.uniform(-10, 10)
            out.analog_out(tick * TICK_SECONDS, board, channel, volts)
    if not out.transitions:
        out.digital_out(0.0, 0, 0, 1)
    return out


@pytest.fixture(scope="session")
def demo_builder():
    from seqware.demo import build_demo_queue

    return build_demo_queue()


@pytest.fixture(scope="session")
def demo_compiled(demo_builder):
    return compile_queue(demo_builder.transitions, defaults=demo_builder.defaults)


@pytest.fixture(scope="session")
def demo_trace(demo_compiled):
    return run(demo_compiled)
