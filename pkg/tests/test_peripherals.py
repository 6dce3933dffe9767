import pytest
from hypothesis import given, settings, strategies as st

from conftest import simulate
from seqware.errors import (
    AddressOutOfRangeError,
    FramingError,
    FrequencyOutOfRangeError,
    LineNotFoundError,
    ListLengthMismatchError,
    UnknownRegisterError,
)
from seqware.peripherals import (
    AD5372,
    AD9854,
    AD9854_FTW_WIDTH,
    AD9854_REG_FTW1,
    AD9959,
    DeviceRegisterModel,
    FrequencyTuningWord,
    SpiFrame,
    SpiPins,
    decode_device,
    encode_frame,
    frequency_for_ftw,
    ftw_for_frequency,
    power_to_amplitude_code,
    pulse_transitions,
    pulse_update,
)
from seqware.sequence import SequenceBuilder
from seqware.timeline import DigitalAddress, TICK_SECONDS
from seqware.units import MHz, ms, us

PINS = SpiPins(
    DigitalAddress(1, 29),
    DigitalAddress(1, 25),
    DigitalAddress(1, 31),
    DigitalAddress(1, 27),
)


def make_ad9854(out, **kwargs):
    args = dict(connector=1, io_pin=29, sclk_pin=25, reset_pin=27, update_pin=31,
                refclock=50e6, multiplier=6, f_ini=80 * MHz)
    args.update(kwargs)
    return AD9854(out, **args)


def make_ad9959(out, **kwargs):
    args = dict(connector=1, io_pin=29, sclk_pin=25, reset_pin=27, update_pin=31,
                refclock=50e6, multiplier=10, f_ini=10 * MHz)
    args.update(kwargs)
    return AD9959(out, **args)


def make_ad5372(out, **kwargs):
    args = dict(connector=3, io_pin=1, sclk_pin=2, reset_pin=3, update_pin=4)
    args.update(kwargs)
    return AD5372(out, **args)


class TestFtw:
    def test_quarter_scale(self):
        assert ftw_for_frequency(125e6, 500e6, 32) == 2**30

    def test_zero(self):
        assert ftw_for_frequency(0.0, 500e6, 32) == 0

    def test_48_bit(self):
        assert ftw_for_frequency(300e6 / 4, 300e6, 48) == 2**46

    def test_nyquist_rejected(self):
        with pytest.raises(FrequencyOutOfRangeError):
            ftw_for_frequency(250e6, 500e6, 32)

    @settings(max_examples=200)
    @given(st.floats(min_value=0, max_value=249e6, allow_nan=False))
    def test_quantization_bound_32(self, f):
        ftw = ftw_for_frequency(f, 500e6, 32)
        assert abs(frequency_for_ftw(ftw, 500e6, 32) - f) <= 500e6 / 2**32

    @settings(max_examples=200)
    @given(st.floats(min_value=0, max_value=149e6, allow_nan=False))
    def test_quantization_bound_48(self, f):
        ftw = ftw_for_frequency(f, 300e6, 48)
        assert abs(frequency_for_ftw(ftw, 300e6, 48) - f) <= 300e6 / 2**48

    def test_tuning_word_type(self):
        word = FrequencyTuningWord.for_frequency(125e6, 500e6, 32)
        assert word.ftw == 2**30
        assert word.frequency(500e6) == 125e6
        with pytest.raises(FrequencyOutOfRangeError):
            FrequencyTuningWord(2**32, 32)


class TestAmplitude:
    def test_off(self):
        assert power_to_amplitude_code(float("-inf"), 4095) == 0

    def test_full_scale(self):
        assert power_to_amplitude_code(0.0, 1023) == 1023

    def test_minus_18_dbm(self):
        assert power_to_amplitude_code(-18.0, 4095) == round(4095 * 10 ** (-0.9))

    def test_clips_above_full_scale(self):
        assert power_to_amplitude_code(3.0, 1023) == 1023


class TestFraming:
    def test_one_payload_byte_16_clocks(self):
        transitions, elapsed = encode_frame(PINS, SpiFrame(0x04, b"\xAB"), 0.0, 4)
        rises = [tr for tr in transitions
                 if tr.payload.channel_mask == 1 << 25 and tr.payload.output_state]
        assert len(rises) == 16
        assert elapsed == 16 * 4 * TICK_SECONDS

    def test_io_stable_at_rising_edges(self):
        transitions, _ = encode_frame(PINS, SpiFrame(0x5A, b"\xC3"), 0.0, 4)
        io_ticks = {round(tr.time / TICK_SECONDS)
                    for tr in transitions if tr.payload.channel_mask == 1 << 29}
        rise_ticks = [round(tr.time / TICK_SECONDS) for tr in transitions
                      if tr.payload.channel_mask == 1 << 25 and tr.payload.output_state]
        assert all(t not in io_ticks for t in rise_ticks)

    def test_short_period_rejected(self):
        with pytest.raises(ValueError):
            encode_frame(PINS, SpiFrame(0x04, b"\x00"), 0.0, 1)

    def test_empty_payload_rejected(self):
        with pytest.raises(ValueError):
            SpiFrame(0x04, b"")

    def test_update_pulse(self):
        up, down = pulse_update(PINS, 1e-6, 4)
        assert round(down.time / TICK_SECONDS) - round(up.time / TICK_SECONDS) == 4

    def test_distinct_pins_required(self):
        with pytest.raises(AddressOutOfRangeError):
            SpiPins(DigitalAddress(1, 1), DigitalAddress(1, 1),
                    DigitalAddress(1, 2), DigitalAddress(1, 3))


def decode_with(builder, device, **kwargs):
    _, trace = simulate(builder)
    return decode_device(trace, device.pins, device.kind, device.sysclk, **kwargs)


class TestAd9854RoundTrip:
    def test_ini_then_single_commit(self):
        out = SequenceBuilder()
        out.digital_out(0.0, 2, 0, 1)   # unrelated anchor line
        dds = make_ad9854(out)
        dds.ini(10 * us)
        dds.arb(200 * us, False, [80 * MHz], [-18.0], 1, 1 * ms)
        timeline = decode_with(out, dds)
        commits = [row for row in timeline if row.kind == "commit"]
        assert len(commits) == 2
        ini_row, arb_row = commits
        assert ini_row.amplitude == 0.0
        assert ini_row.frequency == pytest.approx(80 * MHz, abs=300e6 / 2**48)
        assert arb_row.amplitude == power_to_amplitude_code(-18.0, 4095) / 4095
        assert arb_row.frequency == pytest.approx(80 * MHz, abs=300e6 / 2**48)
        assert arb_row.mode == "single-tone"

    def test_commit_ticks_match_schedule(self):
        out = SequenceBuilder()
        dds = make_ad9854(out)
        dds.ini(0.0)
        dds.arb(500 * us, False, [10 * MHz, 20 * MHz, 30 * MHz], [0.0] * 3, 2, 100 * us)
        timeline = decode_with(out, dds)
        commit_ticks = [row.tick for row in timeline if row.kind == "commit"]
        # origin normalization shifts everything by the first frame tick
        shift = commit_ticks[-3] - dds.last_commit_ticks[0]
        assert commit_ticks[-3:] == [t + shift for t in dds.last_commit_ticks]

    def test_sweep_staircase(self):
        out = SequenceBuilder()
        out.digital_out(0.0, 2, 0, 1)
        dds = make_ad9854(out)
        dds.ini(10 * us)
        freqs = [80 * MHz + (5 * MHz - 80 * MHz) / 25 * n for n in range(26)]
        dds.arb(250 * us, False, freqs, [-18.0] * 26, 25, 1 * ms)
        assert [b - a for a, b in zip(dds.last_commit_ticks,
                                      dds.last_commit_ticks[1:])] == [2000] * 25
        timeline = decode_with(out, dds)
        sweep_rows = [row for row in timeline if row.kind == "commit"][1:]
        assert len(sweep_rows) == 26
        ticks = [row.tick for row in sweep_rows]
        assert [b - a for a, b in zip(ticks, ticks[1:])] == [2000] * 25
        for row, f in zip(sweep_rows, freqs):
            assert abs(row.frequency - f) <= 300e6 / 2**48

    def test_chirp_flag_round_trip(self):
        out = SequenceBuilder()
        dds = make_ad9854(out)
        dds.ini(0.0)
        dds.arb(100 * us, True, [10 * MHz], [0.0], 1, 1 * ms)
        timeline = decode_with(out, dds)
        assert timeline[-1].mode == "chirp"

    def test_power_off_frame(self):
        out = SequenceBuilder()
        dds = make_ad9854(out)
        dds.ini(0.0)
        dds.arb(100 * us, False, [0.0], [float("-inf")], 1, 1 * ms)
        timeline = decode_with(out, dds)
        assert timeline[-1].amplitude == 0.0
        assert timeline[-1].frequency == 0.0

    def test_arb_list_validation(self):
        out = SequenceBuilder()
        dds = make_ad9854(out)
        with pytest.raises(ListLengthMismatchError):
            dds.arb(0.0, False, [1e6, 2e6], [0.0], 1, 1 * ms)
        with pytest.raises(ListLengthMismatchError):
            dds.arb(0.0, False, [1e6, 2e6, 3e6], [0.0] * 3, 1, 1 * ms)
        with pytest.raises(FrequencyOutOfRangeError):
            dds.arb(0.0, False, [200e6], [0.0], 1, 1 * ms)

    def test_coincident_commits_slide_later(self):
        out = SequenceBuilder()
        dds = make_ad9854(out)
        dds.ini(0.0)
        dds.arb(100 * us, False, [10 * MHz], [0.0], 1, 1 * ms)
        first = dds.last_commit_ticks[0]
        dds.arb(100 * us, False, [20 * MHz], [0.0], 1, 1 * ms)
        second = dds.last_commit_ticks[0]
        assert second > first

    def test_phase_continuity(self):
        out = SequenceBuilder()
        dds = make_ad9854(out)
        dds.ini(0.0)
        freqs = [40 * MHz, 20 * MHz]
        dds.arb(100 * us, False, freqs, [0.0, 0.0], 1, 100 * us)
        timeline = decode_with(out, dds)
        assert all(row.phase_continuous for row in timeline)
        # accumulated phase grows by f * dt across each segment, no resets
        commits = [row for row in timeline if row.kind == "commit"]
        for earlier, later in zip(commits, commits[1:]):
            dt = (later.tick - earlier.tick) * TICK_SECONDS
            assert later.phase_turns == pytest.approx(
                earlier.phase_turns + earlier.frequency * dt)


class TestAd9959:
    def test_arb_commits_on_channel(self):
        out = SequenceBuilder()
        dds = make_ad9959(out)
        dds.ini(0.0)
        dds.arb(100 * us, 2, [50 * MHz, 60 * MHz], [0.0, 0.0], 1, 40 * us)
        timeline = decode_with(out, dds)
        commits = [row for row in timeline if row.kind == "commit"]
        final = commits[-1]
        assert final.frequency[2] == pytest.approx(60 * MHz, abs=500e6 / 2**32)
        # untouched channels keep the ini tuning word
        assert final.frequency[0] == pytest.approx(10 * MHz, abs=500e6 / 2**32)

    def test_channel_validation(self):
        out = SequenceBuilder()
        dds = make_ad9959(out)
        with pytest.raises(AddressOutOfRangeError):
            dds.arb(0.0, 4, [1e6], [0.0], 1, 1 * ms)

    def test_amplitude_mod_constant_when_endpoints_equal(self):
        out = SequenceBuilder()
        dds = make_ad9959(out)
        dds.ini(0.0)
        dds.amplitude_mod(100 * us, 0, 0.5, 0.5)
        pin_events = [(dds.last_commit_ticks[0] + 500, 1),
                      (dds.last_commit_ticks[0] + 1000, 0)]
        _, trace = simulate(out)
        shift = 0   # ini reset pulse starts at tick 0 already
        timeline = decode_device(trace, dds.pins, dds.kind, dds.sysclk,
                                 profile_pin=pin_events)
        amps = [row.amplitude[0] for row in timeline if row.kind in ("commit", "pin")]
        mod_amps = [a for a in amps[1:]]
        assert all(a == pytest.approx(512 / 1023) for a in mod_amps)

    def test_amplitude_mod_pin_selects_endpoint(self):
        out = SequenceBuilder()
        dds = make_ad9959(out)
        dds.ini(0.0)
        dds.amplitude_mod(100 * us, 0, 0.25, 0.75)
        commit = dds.last_commit_ticks[0]
        _, trace = simulate(out)
        timeline = decode_device(trace, dds.pins, dds.kind, dds.sysclk,
                                 profile_pin=[(commit + 500, 1), (commit + 900, 0)])
        pin_rows = [row for row in timeline if row.kind == "pin"]
        assert len(pin_rows) == 2
        assert pin_rows[0].amplitude[0] == pytest.approx(round(0.75 * 1023) / 1023)
        assert pin_rows[1].amplitude[0] == pytest.approx(round(0.25 * 1023) / 1023)

    def test_freq_mod_steps_through_ramp(self):
        out = SequenceBuilder()
        dds = make_ad9959(out)
        dds.ini(0.0)
        sysclk = dds.sysclk
        rampstep = 4
        f0 = frequency_for_ftw(0x10000000, sysclk, 32)
        f1 = frequency_for_ftw(0x10000000 + 4096 * rampstep, sysclk, 32)
        dds.freq_mod(100 * us, 1, f0, f1, 64 * us, rampstep)
        commit = dds.last_commit_ticks[0]
        _, trace = simulate(out)
        timeline = decode_device(trace, dds.pins, dds.kind, dds.sysclk,
                                 profile_pin=[(commit + 100, 1)])
        steps = [row for row in timeline if row.kind == "sweep-step"]
        assert len(steps) == rampstep
        freqs = [row.frequency[1] for row in steps]
        assert freqs == sorted(freqs)
        assert freqs[-1] == pytest.approx(f1, abs=sysclk / 2**32)

    def test_freq_mod_single_step_hops(self):
        out = SequenceBuilder()
        dds = make_ad9959(out)
        dds.ini(0.0)
        dds.freq_mod(100 * us, 0, 10 * MHz, 20 * MHz, 10 * us, 1)
        commit = dds.last_commit_ticks[0]
        _, trace = simulate(out)
        timeline = decode_device(trace, dds.pins, dds.kind, dds.sysclk,
                                 profile_pin=[(commit + 100, 1)])
        steps = [row for row in timeline if row.kind == "sweep-step"]
        assert len(steps) == 1
        assert steps[0].frequency[0] == pytest.approx(20 * MHz, abs=dds.sysclk / 2**32)


class TestAd5372:
    def test_set_and_decode(self):
        out = SequenceBuilder()
        dac = make_ad5372(out)
        dac.set(50 * us, 3, 2.5)
        timeline = decode_with(out, dac)
        assert timeline[-1].voltages[3] == pytest.approx(2.5, abs=20 / 2**16)

    def test_mid_scale_is_zero_volts(self):
        out = SequenceBuilder()
        dac = make_ad5372(out)
        dac.set(50 * us, 0, 0.0)
        timeline = decode_with(out, dac)
        assert timeline[-1].voltages[0] == 0.0

    def test_channel_out_of_range(self):
        out = SequenceBuilder()
        dac = make_ad5372(out)
        with pytest.raises(AddressOutOfRangeError):
            dac.set(0.0, 32, 1.0)

    def test_reset_to_set_same_value_is_noop(self):
        out = SequenceBuilder()
        dac = make_ad5372(out)
        dac.set(50 * us, 5, 1.25)
        dac.set(150 * us, 5, 1.25)
        timeline = decode_with(out, dac)
        commits = [row for row in timeline if row.kind == "commit"]
        assert len(commits) == 2
        assert commits[0].voltages == commits[1].voltages


class TestDecodeEdgeCases:
    def test_two_frames_back_to_back_two_shadow_writes(self):
        out = SequenceBuilder()
        dds = make_ad9854(out)
        dds.ini(0.0)   # several back-to-back frames, one commit
        timeline = decode_with(out, dds)
        row = timeline[-1]
        assert row.registers[("g", AD9854_REG_FTW1)] == \
            ftw_for_frequency(80 * MHz, dds.sysclk, AD9854_FTW_WIDTH).to_bytes(6, "big")

    def test_update_with_empty_shadow_is_noop(self):
        out = SequenceBuilder()
        out.digital_out(0.0, 2, 0, 1)
        out.transitions.extend(pulse_update(PINS, 10 * us, 4))
        _, trace = simulate(out)
        timeline = decode_device(trace, PINS, "ad9854", 300e6)
        assert len(timeline) == 1
        assert timeline[0].registers == DeviceRegisterModel("ad9854", 300e6).active

    def test_second_commit_without_new_frames_is_noop(self):
        out = SequenceBuilder()
        dds = make_ad9854(out)
        dds.ini(0.0)
        out.transitions.extend(
            pulse_update(dds.pins, (dds._spi.busy_until + 50) * TICK_SECONDS, 4))
        timeline = decode_with(out, dds)
        assert timeline[-1].registers == timeline[-2].registers

    def test_reset_restores_defaults(self):
        out = SequenceBuilder()
        dds = make_ad9854(out)
        dds.ini(0.0)
        dds.arb(100 * us, False, [10 * MHz], [0.0], 1, 1 * ms)
        out.transitions.extend(
            pulse_transitions(dds.pins.reset, dds._spi.busy_until + 100, 4))
        timeline = decode_with(out, dds)
        last = timeline[-1]
        assert last.kind == "reset"
        assert last.frequency == 0.0
        assert last.amplitude == 0.0

    def test_framing_error_update_mid_frame(self):
        out = SequenceBuilder()
        transitions, _ = encode_frame(PINS, SpiFrame(0x02, bytes(6)), 0.0, 4)
        out.transitions.extend(transitions)
        out.transitions.extend(pulse_update(PINS, 10 * TICK_SECONDS, 4))
        _, trace = simulate(out)
        with pytest.raises(FramingError):
            decode_device(trace, PINS, "ad9854", 300e6)

    def test_unknown_register(self):
        out = SequenceBuilder()
        transitions, _ = encode_frame(PINS, SpiFrame(0x7F, b"\x00"), 0.0, 4)
        out.transitions.extend(transitions)
        _, trace = simulate(out)
        with pytest.raises(UnknownRegisterError):
            decode_device(trace, PINS, "ad9854", 300e6)

    def test_trace_without_pin_activity(self):
        out = SequenceBuilder()
        out.digital_out(0.0, 2, 0, 1)
        _, trace = simulate(out)
        with pytest.raises(LineNotFoundError):
            decode_device(trace, PINS, "ad9854", 300e6)
