"""Covert channel in accumulated clock offset.

Symbols again span L ITTs, but the deviation pattern is balanced: bit 0 takes
-delta for the first L/2 ITTs and +delta for the second half, bit 1 is
mirrored, silence stays at T. The net period deviation per symbol is zero; the
accumulated offset O[i] = i*T - sum(IATs) ramps to -+(L/2)*delta at mid-symbol
and returns to baseline, so the per-sample amplitude grows with L instead of
the noise shrinking.

The receiver works on whole batches of N = n_f * L IATs (one frame), centers
the decision midpoint at (max+min)/2 of the batch offsets and slices at
+-delta*L/4 around it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .auth import SILENCE, AuthFrame
from .errors import FramingError
from .iat_channel import best_sampling_offset
from .timing import observed_offsets


@dataclass(frozen=True)
class OffsetChannelConfig:
    """Period T, deviation delta, window L (even), frame length n_f."""

    period: float
    deviation: float
    window: int
    frame_bits: int

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError("period must be > 0")
        if not 0 < self.deviation < self.period:
            raise ValueError("deviation must be in (0, period)")
        if self.window < 2 or self.window % 2:
            raise ValueError("window must be even and >= 2")
        if self.frame_bits < 1:
            raise ValueError("frame_bits must be >= 1")

    @property
    def batch_size(self) -> int:
        return self.frame_bits * self.window

    @property
    def threshold_margin(self) -> float:
        """Half distance between the midpoint and each slicing threshold."""
        return self.deviation * self.window / 4.0

    @property
    def peak_amplitude(self) -> float:
        """Noiseless offset extremum at mid-symbol."""
        return self.deviation * self.window / 2.0


def modulate_itts(frame: Union[AuthFrame, str], cfg: OffsetChannelConfig) -> np.ndarray:
    """ITT sequence for one frame; batch length is frame_bits * window.

    The frame must carry both bit values, otherwise the receiver's midpoint
    rule has nothing to center on; counters >= 1 guarantee this for real auth
    messages.
    """
    symbols = frame.symbols if isinstance(frame, AuthFrame) else frame
    if any(c not in "01_" for c in symbols):
        raise ValueError("symbols must be over {0, 1, _}")
    if len(symbols) != cfg.frame_bits:
        raise ValueError(f"frame has {len(symbols)} symbols, config says {cfg.frame_bits}")
    data = set(symbols) - {SILENCE}
    if data != {"0", "1"}:
        raise ValueError("offset frames need both bit values for midpoint recovery")
    half = cfg.window // 2
    t, d = cfg.period, cfg.deviation
    pattern = {"0": [t - d] * half + [t + d] * half,
               "1": [t + d] * half + [t - d] * half,
               SILENCE: [t] * cfg.window}
    return np.concatenate([np.array(pattern[c], dtype=float) for c in symbols])


@dataclass(frozen=True)
class OffsetBatchDecode:
    """One decoded batch. degenerate means the batch was too flat to slice."""

    symbols: str
    degenerate: bool
    reference: float
    sampling_offset: int


def demodulate_offsets(iats, cfg: OffsetChannelConfig) -> OffsetBatchDecode:
    """Decode one frame batch of exactly batch_size IATs."""
    iats = np.asarray(iats, dtype=float)
    if len(iats) != cfg.batch_size:
        raise FramingError(
            f"offset batch needs {cfg.batch_size} IATs, got {len(iats)}")
    offsets = observed_offsets(iats, cfg.period)
    lo, hi = float(offsets.min()), float(offsets.max())
    # Accumulation rounding leaves ~n*eps*T of wobble even on a perfectly
    # flat batch, so "flat" must be judged against that, not exact equality.
    if hi - lo <= len(iats) * cfg.period * 1e-12:
        return OffsetBatchDecode(SILENCE * cfg.frame_bits, True, lo, 0)
    kappa = (hi + lo) / 2.0
    tau = best_sampling_offset(offsets, cfg.window, kappa)
    samples = offsets[tau::cfg.window][:cfg.frame_bits]
    upper = kappa + cfg.threshold_margin
    lower = kappa - cfg.threshold_margin
    out = np.full(len(samples), SILENCE, dtype="<U1")
    out[samples > upper] = "0"
    out[samples < lower] = "1"
    return OffsetBatchDecode("".join(out), False, kappa, tau)
