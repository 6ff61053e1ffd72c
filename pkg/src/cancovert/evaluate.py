"""Channel evaluation: BER sweeps, throughput math, trace-vs-truth scoring.

Sweeps use the direct-IAT shortcut: the modulated ITTs get per-timestamp
Gaussian noise differences added straight onto them (skew-free), and each
frame is demodulated on its exact span since the ground truth is known. The
full clock/arbitration path lives in bus.run_simulation.

Error accounting: a transmitted data bit decoded as the opposite bit is a bit
error; a data bit decoded as silence is an erasure (a frame error at the
protocol level, not a bit error). BER = bit_errors / bits.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import iat_channel, offset_channel
from .auth import SILENCE
from .bus import (CHANNEL_IAT, CHANNEL_LSB, CHANNEL_OFFSET, CarrierTruth,
                  TraceRecord)
from .profiles import MessageProfile


@dataclass(frozen=True)
class ErrorCounts:
    bits: int = 0
    bit_errors: int = 0
    erasures: int = 0
    frames: int = 0

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits if self.bits else 0.0

    @property
    def erasure_rate(self) -> float:
        return self.erasures / self.bits if self.bits else 0.0

    @property
    def symbol_errors(self) -> int:
        return self.bit_errors + self.erasures

    def merge(self, other: "ErrorCounts") -> "ErrorCounts":
        return ErrorCounts(self.bits + other.bits,
                           self.bit_errors + other.bit_errors,
                           self.erasures + other.erasures,
                           self.frames + other.frames)


def score_symbols(truth: str, decoded: str) -> ErrorCounts:
    """Compare one frame's decode against truth at the data positions."""
    bits = sum(1 for c in truth if c != SILENCE)
    if len(decoded) != len(truth):
        # Misaligned decode: write the whole frame off as erased.
        return ErrorCounts(bits, 0, bits, 1)
    errors = 0
    erasures = 0
    for t, d in zip(truth, decoded):
        if t == SILENCE:
            continue
        if d == SILENCE:
            erasures += 1
        elif d != t:
            errors += 1
    return ErrorCounts(bits, errors, erasures, 1)


@dataclass(frozen=True)
class SweepPoint:
    message: str
    channel: str
    window: int
    deviation_fraction: float
    counts: ErrorCounts

    @property
    def ber(self) -> float:
        return self.counts.ber


def alternating_bits(length: int) -> str:
    return ("01" * ((length + 1) // 2))[:length]


def sweep_frame_symbols(message_bits: int = 36, silence_bits: int = 4,
                        data_bits: str | None = None) -> str:
    """One evaluation frame: silence-padded data, alternating bits by default.

    The exact payload does not matter for the bit error ratio, so the sweeps
    use a fixed synthetic pattern rather than protocol messages.
    """
    if silence_bits < 0 or silence_bits % 2:
        raise ValueError("silence_bits must be even and >= 0")
    data = alternating_bits(message_bits) if data_bits is None else data_bits
    if len(data) != message_bits or any(c not in "01" for c in data):
        raise ValueError("data_bits must be message_bits of 0/1")
    pad = SILENCE * (silence_bits // 2)
    return pad + data + pad


def sweep_ber(channel: str, profile: MessageProfile, window: int,
              frames: int = 100, deviation_fraction: float = 0.02,
              seed: int = 0, message_bits: int = 36, silence_bits: int = 4,
              data_bits: str | None = None) -> SweepPoint:
    """Noise-calibrated BER for one (channel, profile, window) point."""
    if channel not in (CHANNEL_IAT, CHANNEL_OFFSET):
        raise ValueError("sweep_ber covers the timing channels")
    T = profile.period
    delta = deviation_fraction * T
    rng = np.random.default_rng(seed)
    sigma = profile.timestamp_noise_std
    symbols = sweep_frame_symbols(message_bits, silence_bits, data_bits)
    if channel == CHANNEL_IAT:
        cfg = iat_channel.IatChannelConfig(T, delta, window)
        itts = iat_channel.modulate_itts(symbols, cfg)
    else:
        cfg = offset_channel.OffsetChannelConfig(T, delta, window, len(symbols))
        itts = offset_channel.modulate_itts(symbols, cfg)
    total = ErrorCounts()
    for _ in range(frames):
        if sigma > 0:
            eta = rng.normal(0.0, sigma, len(itts) + 1)
            iats = itts + np.diff(eta)
        else:
            iats = itts
        if channel == CHANNEL_IAT:
            decoded = iat_channel.demodulate_iats(iats, cfg)
        else:
            decoded = offset_channel.demodulate_offsets(iats, cfg).symbols
        total = total.merge(score_symbols(symbols, decoded))
    return SweepPoint(profile.name, channel, window, deviation_fraction, total)


@dataclass(frozen=True)
class Throughput:
    frame_time: float      # seconds per auth frame
    frame_rate: float      # frame bits per second
    message_rate: float    # auth-message (goodput) bits per second


def throughput(channel: str, period: float, message_bits: int = 36,
               overhead_bits: int = 4, window: int = 1,
               lsb_count: int = 1) -> Throughput:
    """Covert-channel rates.

    Timing channels: overhead_bits is the silence padding n_s, each of the
    n_f = n_m + n_s symbols takes window*period. LSB: overhead_bits is the
    preamble length and every carrier message moves lsb_count bits.
    """
    if period <= 0 or message_bits < 1 or overhead_bits < 0:
        raise ValueError("bad throughput parameters")
    n_f = message_bits + overhead_bits
    if channel in (CHANNEL_IAT, CHANNEL_OFFSET):
        if window < 1:
            raise ValueError("window must be >= 1")
        frame_time = n_f * window * period
    elif channel == CHANNEL_LSB:
        if lsb_count < 1:
            raise ValueError("lsb_count must be >= 1")
        frame_time = n_f * period / lsb_count
    else:
        raise ValueError(f"unknown channel {channel!r}")
    return Throughput(frame_time, n_f / frame_time, message_bits / frame_time)


def ber_against_truth(records: Sequence[TraceRecord], truth: CarrierTruth,
                      carrier=None) -> ErrorCounts:
    """Score a logged trace against the transmitter's ground truth.

    Timing channels: each truth frame's IAT span is demodulated in place.
    LSB: the embedded bits are re-extracted per carrier message, which needs
    the CarrierSpec payload layout. Frames not fully contained in the trace
    are skipped.
    """
    recs = sorted(records, key=lambda r: r.timestamp)
    total = ErrorCounts()
    if truth.channel == CHANNEL_LSB:
        if carrier is None:
            raise ValueError("LSB scoring needs the carrier spec")
        if not truth.frames:
            return total
        per_frame = len(truth.frames[0].symbols) // truth.lsb_count
        mask = (1 << truth.lsb_count) - 1
        skip = len(truth.preamble)
        for frame in truth.frames:
            start, end = frame.start_index, frame.start_index + per_frame
            if end > len(recs):
                continue
            received = "".join(
                format(carrier.raw(r.to_frame()) & mask, f"0{truth.lsb_count}b")
                for r in recs[start:end])
            bits = len(frame.symbols) - skip
            errors = sum(1 for i in range(skip, len(frame.symbols))
                         if received[i] != frame.symbols[i])
            total = total.merge(ErrorCounts(bits, errors, 0, 1))
        return total
    iats = np.diff([r.timestamp for r in recs]) if len(recs) > 1 else np.array([])
    window = truth.window
    frame_bits = len(truth.frames[0].symbols) if truth.frames else 0
    span = frame_bits * window
    if truth.channel == CHANNEL_IAT:
        cfg = iat_channel.IatChannelConfig(truth.period, truth.deviation, window)
    else:
        cfg = offset_channel.OffsetChannelConfig(truth.period, truth.deviation,
                                                 window, frame_bits)
    for frame in truth.frames:
        start = frame.start_index
        if start + span > len(iats):
            continue
        batch = iats[start:start + span]
        if truth.channel == CHANNEL_IAT:
            decoded = iat_channel.demodulate_iats(batch, cfg)
        else:
            decoded = offset_channel.demodulate_offsets(batch, cfg).symbols
        total = total.merge(score_symbols(frame.symbols, decoded))
    return total
