"""Covert channel in payload least-significant bits.

Auth frames ride in the L lowest bits of a designated sensor signal inside the
carrier message's payload (L <= 2 keeps the physical-value distortion below
sensor noise). The embedder replaces the signal's low bits with the next L
bits of the frame, most-significant payload bit in the higher LSB position,
consuming ceil(n_f / L) carrier messages per auth frame. The extractor knows
the preamble and the expected auth message, compares incrementally, and raises
an alert at the exact carrier message where a mismatch appears.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Union

import numpy as np

from .auth import AuthFrame
from .errors import ConfigError, PartialFrameError

EXTENDED_ID_BITS = 29
STANDARD_ID_BITS = 11

OK_PARTIAL = "ok-partial"
COMPLETE = "complete"
ALERT = "alert"


@dataclass(frozen=True)
class CanFrame:
    """One CAN data frame: identifier plus up to 8 payload bytes."""

    can_id: int
    data: bytes

    def __post_init__(self):
        if not 0 <= self.can_id < (1 << EXTENDED_ID_BITS):
            raise ValueError(f"CAN id {self.can_id:#x} out of range")
        if len(self.data) > 8:
            raise ValueError("CAN payload is at most 8 bytes")
        object.__setattr__(self, "data", bytes(self.data))

    @property
    def dlc(self) -> int:
        return len(self.data)

    @property
    def is_extended(self) -> bool:
        return self.can_id >= (1 << STANDARD_ID_BITS)


@dataclass(frozen=True)
class CarrierSpec:
    """Where the carrier signal lives in the payload and how to decode it.

    physical value = raw * scale + offset, raw read from
    data[byte_offset : byte_offset+byte_length] with the given endianness.
    """

    byte_offset: int
    byte_length: int
    endianness: str = "little"
    scale: float = 1.0
    offset: float = 0.0
    unit: str = ""

    def __post_init__(self):
        if self.byte_offset < 0 or not 1 <= self.byte_length <= 8:
            raise ValueError("bad carrier byte range")
        if self.endianness not in ("little", "big"):
            raise ValueError("endianness must be 'little' or 'big'")
        if self.scale <= 0:
            raise ValueError("scale must be > 0")

    @property
    def resolution(self) -> float:
        return self.scale

    @property
    def raw_bits(self) -> int:
        return 8 * self.byte_length

    def raw(self, frame: CanFrame) -> int:
        end = self.byte_offset + self.byte_length
        if end > frame.dlc:
            raise ValueError("carrier range outside frame payload")
        return int.from_bytes(frame.data[self.byte_offset:end], self.endianness)

    def decode(self, frame: CanFrame) -> float:
        return self.raw(frame) * self.scale + self.offset

    def with_raw(self, frame: CanFrame, raw: int) -> CanFrame:
        if not 0 <= raw < (1 << self.raw_bits):
            raise ValueError("raw value out of carrier range")
        end = self.byte_offset + self.byte_length
        if end > frame.dlc:
            raise ValueError("carrier range outside frame payload")
        data = bytearray(frame.data)
        data[self.byte_offset:end] = raw.to_bytes(self.byte_length, self.endianness)
        return CanFrame(frame.can_id, bytes(data))

    def raw_from_value(self, value: float) -> int:
        raw = int(round((value - self.offset) / self.scale))
        return min(max(raw, 0), (1 << self.raw_bits) - 1)

    def with_value(self, frame: CanFrame, value: float) -> CanFrame:
        return self.with_raw(frame, self.raw_from_value(value))


@dataclass(frozen=True)
class LsbChannelConfig:
    """lsb_count = L, the number of low signal bits given to the channel."""

    carrier: CarrierSpec
    lsb_count: int = 1

    def __post_init__(self):
        if self.lsb_count not in (1, 2):
            raise ValueError("lsb_count must be 1 or 2")

    @property
    def mask(self) -> int:
        return (1 << self.lsb_count) - 1


def _frame_bits(frame: Union[AuthFrame, str]) -> str:
    bits = frame.symbols if isinstance(frame, AuthFrame) else frame
    if not bits or any(c not in "01" for c in bits):
        raise ValueError("LSB frames carry plain bits, no silence symbols")
    return bits


def embed_lsb(frames: Iterable[CanFrame], auth_frame: Union[AuthFrame, str],
              cfg: LsbChannelConfig) -> list[CanFrame]:
    """Embed one auth frame; surplus carrier frames pass through untouched.

    Raises PartialFrameError (with the bit position reached) if the carrier
    stream runs out mid-frame, and ConfigError when the frame length is not a
    multiple of lsb_count.
    """
    bits = _frame_bits(auth_frame)
    L = cfg.lsb_count
    if len(bits) % L:
        raise ConfigError(f"frame length {len(bits)} not divisible by lsb_count {L}")
    out = []
    pos = 0
    for frame in frames:
        if pos < len(bits):
            chunk = bits[pos:pos + L]
            raw = cfg.carrier.raw(frame)
            new_raw = (raw & ~cfg.mask) | int(chunk, 2)
            out.append(frame if new_raw == raw else cfg.carrier.with_raw(frame, new_raw))
            pos += L
        else:
            out.append(frame)
    if pos < len(bits):
        raise PartialFrameError(pos)
    return out


class LsbEmbedder:
    """Streaming embedder: back-to-back auth frames over a carrier stream.

    next_frame_bits is called whenever the previous auth frame completes and
    must return the next frame's bit string.
    """

    def __init__(self, cfg: LsbChannelConfig, next_frame_bits: Callable[[], str]):
        self.cfg = cfg
        self.next_frame_bits = next_frame_bits
        self._bits = ""
        self._pos = 0

    def apply(self, frame: CanFrame) -> CanFrame:
        if self._pos >= len(self._bits):
            self._bits = _frame_bits(self.next_frame_bits())
            if len(self._bits) % self.cfg.lsb_count:
                raise ConfigError("frame length not divisible by lsb_count")
            self._pos = 0
        chunk = self._bits[self._pos:self._pos + self.cfg.lsb_count]
        self._pos += self.cfg.lsb_count
        raw = self.cfg.carrier.raw(frame)
        new_raw = (raw & ~self.cfg.mask) | int(chunk, 2)
        return frame if new_raw == raw else self.cfg.carrier.with_raw(frame, new_raw)


class LsbExtractor:
    """Monitor-side incremental extractor.

    expected_bits is called at the start of each auth frame and must return
    the full frame the monitor predicts (preamble plus auth message). Each
    push() returns ok-partial, alert (first mismatching carrier message) or
    complete; the extractor restarts after complete or alert.
    """

    def __init__(self, cfg: LsbChannelConfig, expected_bits: Callable[[], str]):
        self.cfg = cfg
        self.expected_bits = expected_bits
        self._expected = ""
        self._received = []
        self._pos = 0

    @property
    def received(self) -> str:
        return "".join(self._received)

    def _restart(self):
        self._expected = ""
        self._received = []
        self._pos = 0

    def push(self, frame: CanFrame) -> str:
        if not self._expected:
            self._expected = _frame_bits(self.expected_bits())
            if len(self._expected) % self.cfg.lsb_count:
                raise ConfigError("frame length not divisible by lsb_count")
        L = self.cfg.lsb_count
        chunk_value = self.cfg.carrier.raw(frame) & self.cfg.mask
        chunk = format(chunk_value, f"0{L}b")
        self._received.append(chunk)
        want = self._expected[self._pos:self._pos + L]
        self._pos += L
        if chunk != want:
            self._restart()
            return ALERT
        if self._pos >= len(self._expected):
            self._restart()
            return COMPLETE
        return OK_PARTIAL


def extract_lsb(frames: Iterable[CanFrame], expected: Union[AuthFrame, str],
                cfg: LsbChannelConfig) -> list[str]:
    """Verdict per carrier frame against one fixed expected auth frame."""
    bits = _frame_bits(expected)
    extractor = LsbExtractor(cfg, lambda: bits)
    return [extractor.push(f) for f in frames]


@dataclass(frozen=True)
class AccuracyLoss:
    max_error: float
    rmse: float


def accuracy_loss(original: Iterable[CanFrame], embedded: Iterable[CanFrame],
                  carrier: CarrierSpec) -> AccuracyLoss:
    """Physical-value distortion introduced by embedding.

    The worst case is bounded by (2^L - 1) * resolution since only the L low
    bits of the raw signal can change.
    """
    original = list(original)
    embedded = list(embedded)
    if len(original) != len(embedded):
        raise ValueError("streams differ in length")
    if not original:
        return AccuracyLoss(0.0, 0.0)
    a = np.array([carrier.decode(f) for f in original])
    b = np.array([carrier.decode(f) for f in embedded])
    err = np.abs(a - b)
    return AccuracyLoss(float(err.max()), float(np.sqrt(np.mean(err**2))))


def corrupt_lsb_bits(frames: Iterable[CanFrame], cfg: LsbChannelConfig,
                     flip_probability: float, rng: np.random.Generator) -> tuple[list[CanFrame], int]:
    """Flip each carried channel bit independently; returns (frames, flips).

    Models physical-layer bit errors hitting the embedded stream.
    """
    out = []
    flips = 0
    for frame in frames:
        raw = cfg.carrier.raw(frame)
        flip_mask = 0
        for bit in range(cfg.lsb_count):
            if rng.random() < flip_probability:
                flip_mask |= 1 << bit
        if flip_mask:
            flips += bin(flip_mask).count("1")
            frame = cfg.carrier.with_raw(frame, raw ^ flip_mask)
        out.append(frame)
    return out, flips
