"""Payload low-bit channel: embedding, lockstep extraction, accuracy loss."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cancovert.errors import ConfigError, PartialFrameError
from cancovert.lsb_channel import (ALERT, COMPLETE, OK_PARTIAL, CanFrame,
                                   CarrierSpec, LsbChannelConfig, LsbEmbedder,
                                   LsbExtractor, accuracy_loss,
                                   corrupt_lsb_bits, embed_lsb, extract_lsb)

SPEED = CarrierSpec(byte_offset=2, byte_length=2, endianness="little",
                    scale=0.01, unit="km/h")
COOLANT = CarrierSpec(byte_offset=0, byte_length=1, scale=1.0, offset=-40.0,
                      unit="degC")


def speed_frame(raw: int) -> CanFrame:
    data = bytearray(8)
    data[2:4] = raw.to_bytes(2, "little")
    return CanFrame(0x0B4, bytes(data))


class TestCanFrame:
    def test_id_range(self):
        with pytest.raises(ValueError):
            CanFrame(1 << 29, b"")
        assert not CanFrame(0x7FF, b"").is_extended
        assert CanFrame(0x800, b"").is_extended

    def test_payload_limit(self):
        with pytest.raises(ValueError):
            CanFrame(1, bytes(9))
        assert CanFrame(1, bytes(5)).dlc == 5


class TestCarrierSpec:
    def test_decode_scale_offset(self):
        frame = CanFrame(0x3D0, bytes([100]))
        assert COOLANT.decode(frame) == pytest.approx(60.0)

    def test_with_value_round_trip(self):
        frame = speed_frame(0)
        out = SPEED.with_value(frame, 123.45)
        assert SPEED.raw(out) == 12345
        assert SPEED.decode(out) == pytest.approx(123.45)

    def test_value_clipped_to_raw_range(self):
        frame = speed_frame(0)
        assert SPEED.raw(SPEED.with_value(frame, -5.0)) == 0
        assert SPEED.raw(SPEED.with_value(frame, 1e9)) == 0xFFFF

    def test_range_outside_payload(self):
        with pytest.raises(ValueError):
            SPEED.raw(CanFrame(1, bytes(2)))

    def test_validation(self):
        with pytest.raises(ValueError):
            CarrierSpec(0, 0)
        with pytest.raises(ValueError):
            CarrierSpec(0, 1, endianness="middle")
        with pytest.raises(ValueError):
            CarrierSpec(0, 1, scale=0.0)


class TestEmbed:
    def test_worked_example(self):
        cfg = LsbChannelConfig(CarrierSpec(0, 1), lsb_count=1)
        frames = [CanFrame(1, b"\x00"), CanFrame(1, b"\x00")]
        out = embed_lsb(frames, "10", cfg)
        assert [f.data[0] for f in out] == [0x01, 0x00]

    def test_noop_when_bits_already_match(self):
        cfg = LsbChannelConfig(CarrierSpec(0, 1), lsb_count=1)
        frame = CanFrame(1, b"\x01")
        out = embed_lsb([frame], "1", cfg)
        assert out[0] is frame

    def test_two_bit_chunks_msb_first(self):
        # The chunk's first bit lands in the higher of the two low positions.
        cfg = LsbChannelConfig(CarrierSpec(0, 1), lsb_count=2)
        out = embed_lsb([CanFrame(1, b"\x00")], "10", cfg)
        assert out[0].data[0] == 0b10

    @given(st.integers(min_value=0, max_value=0xFFFF),
           st.text(alphabet="01", min_size=2, max_size=16).filter(lambda s: len(s) % 2 == 0))
    @settings(max_examples=50)
    def test_bit_containment(self, raw, bits):
        cfg = LsbChannelConfig(SPEED, lsb_count=2)
        frames = [speed_frame(raw) for _ in range(len(bits) // 2)]
        out = embed_lsb(frames, bits, cfg)
        for before, after in zip(frames, out):
            assert SPEED.raw(before) & ~cfg.mask == SPEED.raw(after) & ~cfg.mask
            assert before.data[:2] == after.data[:2]
            assert before.data[4:] == after.data[4:]

    def test_surplus_frames_pass_through(self):
        cfg = LsbChannelConfig(CarrierSpec(0, 1), lsb_count=1)
        frames = [CanFrame(1, bytes([7])) for _ in range(4)]
        out = embed_lsb(frames, "01", cfg)
        assert out[2:] == frames[2:]

    def test_exhausted_stream_reports_position(self):
        cfg = LsbChannelConfig(CarrierSpec(0, 1), lsb_count=1)
        with pytest.raises(PartialFrameError) as exc:
            embed_lsb([CanFrame(1, b"\x00")] * 3, "01011", cfg)
        assert exc.value.position == 3

    def test_indivisible_frame_length(self):
        cfg = LsbChannelConfig(CarrierSpec(0, 1), lsb_count=2)
        with pytest.raises(ConfigError):
            embed_lsb([CanFrame(1, b"\x00")] * 2, "011", cfg)

    def test_lsb_count_limit(self):
        with pytest.raises(ValueError):
            LsbChannelConfig(SPEED, lsb_count=3)


class TestExtract:
    def test_round_trip_completes_without_alerts(self):
        cfg = LsbChannelConfig(SPEED, lsb_count=2)
        bits = "0111111001011010"
        frames = [speed_frame(40_000 + 8 * i) for i in range(len(bits) // 2)]
        verdicts = extract_lsb(embed_lsb(frames, bits, cfg), bits, cfg)
        assert verdicts == [OK_PARTIAL] * 7 + [COMPLETE]

    def test_alert_at_exact_corruption_index(self):
        cfg = LsbChannelConfig(SPEED, lsb_count=1)
        bits = "01111110"
        frames = [speed_frame(4 * i) for i in range(8)]
        sent = embed_lsb(frames, bits, cfg)
        sent[5] = SPEED.with_raw(sent[5], SPEED.raw(sent[5]) ^ 0x01)
        verdicts = extract_lsb(sent, bits, cfg)
        assert verdicts.index(ALERT) == 5
        assert verdicts[:5] == [OK_PARTIAL] * 5

    def test_restarts_after_complete(self):
        cfg = LsbChannelConfig(CarrierSpec(0, 1), lsb_count=1)
        bits = "10"
        stream = embed_lsb([CanFrame(1, b"\x00")] * 4, bits + bits, cfg)
        extractor = LsbExtractor(cfg, lambda: bits)
        verdicts = [extractor.push(f) for f in stream]
        assert verdicts == [OK_PARTIAL, COMPLETE, OK_PARTIAL, COMPLETE]

    def test_streaming_embedder_feeds_extractor_lockstep(self):
        cfg = LsbChannelConfig(SPEED, lsb_count=2)
        sent = iter(["01111110", "10100101", "01011010"])
        got = iter(["01111110", "10100101", "01011010"])
        embedder = LsbEmbedder(cfg, lambda: next(sent))
        extractor = LsbExtractor(cfg, lambda: next(got))
        verdicts = [extractor.push(embedder.apply(speed_frame(100 + i)))
                    for i in range(12)]
        assert verdicts.count(COMPLETE) == 3
        assert ALERT not in verdicts

    def test_consumes_ceil_frames_per_auth_frame(self):
        cfg = LsbChannelConfig(SPEED, lsb_count=2)
        bits = "0110"
        verdicts = extract_lsb(embed_lsb([speed_frame(0)] * 2, bits, cfg), bits, cfg)
        assert len(verdicts) == 2 and verdicts[-1] == COMPLETE


class TestAccuracyLoss:
    def test_identical_streams(self):
        frames = [speed_frame(i) for i in range(10)]
        loss = accuracy_loss(frames, frames, SPEED)
        assert loss.max_error == 0.0 and loss.rmse == 0.0

    def test_speed_bounds_per_lsb_count(self):
        # Raw values divisible by 4 have zero low bits, so all-ones payloads
        # realize the worst case exactly: 0.01 km/h at one bit, 0.03 at two.
        frames = [speed_frame(4 * i) for i in range(16)]
        one = embed_lsb(frames, "1" * 16, LsbChannelConfig(SPEED, 1))
        two = embed_lsb(frames, "11" * 16, LsbChannelConfig(SPEED, 2))
        assert accuracy_loss(frames, one, SPEED).max_error == pytest.approx(0.01)
        assert accuracy_loss(frames, two, SPEED).max_error == pytest.approx(0.03)

    def test_coolant_bounds_per_lsb_count(self):
        frames = [CanFrame(0x3D0, bytes([4 * i, 0])) for i in range(16)]
        one = embed_lsb(frames, "1" * 16, LsbChannelConfig(COOLANT, 1))
        two = embed_lsb(frames, "11" * 16, LsbChannelConfig(COOLANT, 2))
        assert accuracy_loss(frames, one, COOLANT).max_error == 1.0
        assert accuracy_loss(frames, two, COOLANT).max_error == 3.0

    @given(st.lists(st.integers(min_value=0, max_value=0xFFFF), min_size=1, max_size=32),
           st.sampled_from([1, 2]))
    @settings(max_examples=50)
    def test_error_never_exceeds_mask_times_resolution(self, raws, lsb_count):
        rng = np.random.default_rng(sum(raws) % 1000)
        bits = "".join(rng.choice(["0", "1"], size=len(raws) * lsb_count))
        cfg = LsbChannelConfig(SPEED, lsb_count)
        frames = [speed_frame(r) for r in raws]
        loss = accuracy_loss(frames, embed_lsb(frames, bits, cfg), SPEED)
        assert loss.max_error <= (2**lsb_count - 1) * SPEED.resolution + 1e-12
        assert loss.rmse <= loss.max_error + 1e-15

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            accuracy_loss([speed_frame(0)], [], SPEED)


class TestCorruption:
    def test_flip_count_matches_payload_diff(self):
        rng = np.random.default_rng(9)
        cfg = LsbChannelConfig(SPEED, lsb_count=2)
        frames = [speed_frame(int(r)) for r in rng.integers(0, 0xFFFF, 500)]
        out, flips = corrupt_lsb_bits(frames, cfg, 0.05, rng)
        observed = sum(bin((SPEED.raw(a) ^ SPEED.raw(b)) & cfg.mask).count("1")
                       for a, b in zip(frames, out))
        assert observed == flips

    def test_flip_rate_binomially_consistent(self):
        rng = np.random.default_rng(2)
        cfg = LsbChannelConfig(SPEED, lsb_count=2)
        frames = [speed_frame(0)] * 50_000
        _, flips = corrupt_lsb_bits(frames, cfg, 1e-3, rng)
        n, p = 100_000, 1e-3
        assert abs(flips - n * p) <= 3 * np.sqrt(n * p * (1 - p))
