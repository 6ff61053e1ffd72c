"""BER sweeps, throughput arithmetic, and trace-vs-truth scoring."""

import pytest

from cancovert.auth import EcuIdentity
from cancovert.bus import CarrierSetup, run_simulation
from cancovert.evaluate import (ErrorCounts, alternating_bits,
                                ber_against_truth, score_symbols,
                                sweep_ber, sweep_frame_symbols, throughput)
from cancovert.lsb_channel import CarrierSpec
from cancovert.profiles import get_profile


class TestScoring:
    def test_exact_match(self):
        counts = score_symbols("__0101__", "__0101__")
        assert counts == ErrorCounts(bits=4, bit_errors=0, erasures=0, frames=1)

    def test_flip_vs_erasure(self):
        counts = score_symbols("__0101__", "__1_01__")
        assert counts.bit_errors == 1 and counts.erasures == 1
        assert counts.symbol_errors == 2
        assert counts.ber == pytest.approx(0.25)

    def test_silence_positions_ignored(self):
        # Junk decoded where the sender was quiet is not an error; only the
        # two data positions count, and one of them flipped.
        counts = score_symbols("__01__", "010000")
        assert counts.bits == 2 and counts.bit_errors == 1

    def test_length_mismatch_erases_frame(self):
        counts = score_symbols("__0101__", "__0101")
        assert counts == ErrorCounts(bits=4, bit_errors=0, erasures=4, frames=1)

    def test_merge_accumulates(self):
        a = ErrorCounts(10, 1, 2, 1)
        b = ErrorCounts(20, 0, 1, 2)
        assert a.merge(b) == ErrorCounts(30, 1, 3, 3)

    def test_empty_rates(self):
        assert ErrorCounts().ber == 0.0
        assert ErrorCounts().erasure_rate == 0.0


class TestSweepFrame:
    def test_alternating_pattern(self):
        assert alternating_bits(5) == "01010"
        assert sweep_frame_symbols(36, 4) == "__" + "01" * 18 + "__"
        assert len(sweep_frame_symbols(36, 4)) == 40

    def test_custom_data(self):
        assert sweep_frame_symbols(4, 2, data_bits="1100") == "_1100_"

    def test_validation(self):
        with pytest.raises(ValueError):
            sweep_frame_symbols(4, 3)
        with pytest.raises(ValueError):
            sweep_frame_symbols(4, 2, data_bits="110")
        with pytest.raises(ValueError):
            sweep_frame_symbols(4, 2, data_bits="11x0")


class TestSweepBer:
    def test_deterministic_per_seed(self):
        prof = get_profile("0x0D1")
        a = sweep_ber("iat", prof, 2, frames=20, seed=4)
        b = sweep_ber("iat", prof, 2, frames=20, seed=4)
        assert a == b

    def test_counts_cover_all_frames(self):
        prof = get_profile("0x020")
        point = sweep_ber("iat", prof, 2, frames=25)
        assert point.counts.frames == 25
        assert point.counts.bits == 25 * 36

    def test_noisiest_profile_improves_with_averaging(self):
        prof = get_profile("0x0D1")
        narrow = sweep_ber("iat", prof, 1, frames=40, seed=1)
        wide = sweep_ber("iat", prof, 6, frames=40, seed=1)
        assert narrow.counts.symbol_errors > wide.counts.symbol_errors

    def test_larger_deviation_helps(self):
        prof = get_profile("0x0D1")
        small = sweep_ber("offset", prof, 2, frames=30, seed=2,
                          deviation_fraction=0.01)
        large = sweep_ber("offset", prof, 2, frames=30, seed=2,
                          deviation_fraction=0.05)
        assert small.counts.symbol_errors >= large.counts.symbol_errors

    def test_zero_noise_profile_is_error_free(self):
        prof = get_profile("0x224")
        quiet = type(prof)(prof.name, prof.period, 0.0, 0.0, prof.source)
        point = sweep_ber("iat", quiet, 1, frames=5)
        assert point.counts.symbol_errors == 0

    def test_rejects_lsb(self):
        with pytest.raises(ValueError):
            sweep_ber("lsb", get_profile("0x020"), 1)


class TestThroughput:
    def test_timing_channel_reference_point(self):
        t = throughput("iat", 0.01, message_bits=36, overhead_bits=4, window=4)
        assert t.frame_time == pytest.approx(1.6)
        assert t.message_rate == pytest.approx(22.5)
        assert t.frame_rate == pytest.approx(25.0)

    def test_lsb_reference_point(self):
        t = throughput("lsb", 0.01, message_bits=36, overhead_bits=4,
                       lsb_count=2)
        assert t.frame_time == pytest.approx(0.2)
        assert t.frame_rate == pytest.approx(200.0)
        assert t.message_rate == pytest.approx(180.0)

    def test_rate_scales_inversely_with_window(self):
        one = throughput("offset", 0.01, window=2)
        two = throughput("offset", 0.01, window=4)
        assert one.message_rate == pytest.approx(2 * two.message_rate)

    def test_rate_scales_inversely_with_period(self):
        slow = throughput("iat", 0.02, window=1)
        fast = throughput("iat", 0.01, window=1)
        assert fast.message_rate == pytest.approx(2 * slow.message_rate)

    def test_validation(self):
        with pytest.raises(ValueError):
            throughput("iat", 0.0)
        with pytest.raises(ValueError):
            throughput("iat", 0.01, window=0)
        with pytest.raises(ValueError):
            throughput("lsb", 0.01, lsb_count=0)
        with pytest.raises(ValueError):
            throughput("pwm", 0.01)


class TestTraceScoring:
    KEY = bytes(range(16, 32))

    def test_timing_trace_matches_truth(self):
        setup = CarrierSetup(EcuIdentity(0x180, self.KEY), 0x180, "iat", 0.01,
                             deviation=2e-4)
        result = run_simulation([setup], duration=3.0)
        counts = ber_against_truth(result.trace, result.truth[0x180])
        assert counts.frames >= 5
        assert counts.symbol_errors == 0

    def test_lsb_trace_matches_truth(self):
        carrier = CarrierSpec(byte_offset=0, byte_length=2, scale=0.01)
        setup = CarrierSetup(EcuIdentity(0x0B4, self.KEY), 0x0B4, "lsb", 0.01,
                             carrier=carrier, lsb_count=2)
        result = run_simulation([setup], duration=2.0)
        counts = ber_against_truth(result.trace, result.truth[0x0B4],
                                   carrier=carrier)
        assert counts.frames >= 8
        assert counts.bit_errors == 0

    def test_lsb_requires_carrier(self):
        carrier = CarrierSpec(byte_offset=0, byte_length=2, scale=0.01)
        setup = CarrierSetup(EcuIdentity(0x0B4, self.KEY), 0x0B4, "lsb", 0.01,
                             carrier=carrier)
        result = run_simulation([setup], duration=1.0)
        with pytest.raises(ValueError):
            ber_against_truth(result.trace, result.truth[0x0B4])

    def test_corrupted_trace_counts_errors(self):
        setup = CarrierSetup(EcuIdentity(0x180, self.KEY), 0x180, "iat", 0.01,
                             deviation=2e-4)
        result = run_simulation([setup], duration=3.0)
        # Pull one mid-frame arrival early by half a deviation step: that
        # flips the sign of two adjacent IAT deviations.
        recs = list(result.trace)
        k = len(recs) // 2
        recs[k] = type(recs[k])(recs[k].timestamp - 3e-4, recs[k].can_id,
                                recs[k].data)
        counts = ber_against_truth(recs, result.truth[0x180])
        assert counts.symbol_errors > 0

    def test_truncated_trace_skips_partial_frames(self):
        setup = CarrierSetup(EcuIdentity(0x180, self.KEY), 0x180, "iat", 0.01,
                             deviation=2e-4)
        result = run_simulation([setup], duration=3.0)
        half = result.trace[:len(result.trace) // 2]
        counts = ber_against_truth(half, result.truth[0x180])
        assert 0 < counts.frames < len(result.truth[0x180].frames)
