"""Covert channel in inter-arrival times.

One frame symbol spans L consecutive inter-transmission times. Bit 0 stretches
them all to T + delta, bit 1 shrinks them to T - delta, silence leaves them at
T. The receiver averages IATs over sliding windows of L, which telescopes to
(a_{i+L} - a_i)/L and cuts the noise variance by L^2, then samples every L-th
window at the phase that maximizes total distance from the reference kappa and
slices the samples against kappa +- delta/2.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from .auth import SILENCE, AuthFrame
from .errors import FramingError


@dataclass(frozen=True)
class IatChannelConfig:
    """Timing parameters: nominal period T, deviation delta, window L.

    reference overrides the decision midpoint kappa (defaults to T); feed it
    from calibrate_reference() when the observed mean IAT drifts, e.g. under
    clock skew.
    """

    period: float
    deviation: float
    window: int = 1
    reference: float | None = None

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError("period must be > 0")
        if not 0 < self.deviation < self.period:
            raise ValueError("deviation must be in (0, period)")
        if self.window < 1:
            raise ValueError("window must be >= 1")

    @property
    def kappa(self) -> float:
        return self.period if self.reference is None else self.reference

    @property
    def lower_threshold(self) -> float:
        return self.kappa - self.deviation / 2.0

    @property
    def upper_threshold(self) -> float:
        return self.kappa + self.deviation / 2.0

    def with_reference(self, reference: float) -> "IatChannelConfig":
        return replace(self, reference=reference)


def _frame_symbols(frame: Union[AuthFrame, str]) -> str:
    symbols = frame.symbols if isinstance(frame, AuthFrame) else frame
    if any(c not in "01_" for c in symbols):
        raise ValueError("symbols must be over {0, 1, _}")
    return symbols


def modulate_itts(frame: Union[AuthFrame, str], cfg: IatChannelConfig) -> np.ndarray:
    """ITT sequence for a frame: L values of T+delta / T-delta / T per symbol."""
    symbols = _frame_symbols(frame)
    value = {"0": cfg.period + cfg.deviation,
             "1": cfg.period - cfg.deviation,
             SILENCE: cfg.period}
    per_symbol = np.array([value[c] for c in symbols], dtype=float)
    return np.repeat(per_symbol, cfg.window)


def running_average(iats, window: int) -> np.ndarray:
    """Sliding mean over `window` IATs; output length is len(iats)-window+1."""
    iats = np.asarray(iats, dtype=float)
    if window < 1:
        raise ValueError("window must be >= 1")
    if iats.ndim != 1 or len(iats) < window:
        raise ValueError("window longer than input")
    return np.lib.stride_tricks.sliding_window_view(iats, window).mean(axis=1)


def best_sampling_offset(series, stride: int, reference: float) -> int:
    """Phase tau in [0, stride) maximizing sum |series[j*stride+tau] - reference|.

    Ties break toward the smallest tau. Aligned samples sit at full modulation
    depth, so the true phase wins whenever the channel is active. Phases past
    the end of a short series simply score zero.
    """
    series = np.asarray(series, dtype=float)
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if len(series) == 0:
        raise ValueError("series must not be empty")
    scores = np.array([np.abs(series[tau::stride] - reference).sum()
                       for tau in range(stride)])
    # Exact ties (constant-bit payloads) land on fp rounding noise, so treat
    # near-equal scores as ties and let the smallest tau win.
    best = scores.max()
    return int(np.flatnonzero(scores >= best - 1e-9 * best)[0])


def find_sampling_offset(averages, cfg: IatChannelConfig) -> int:
    return best_sampling_offset(averages, cfg.window, cfg.kappa)


def classify_samples(samples, cfg: IatChannelConfig) -> str:
    """Threshold rule: above kappa+delta/2 is 0, below kappa-delta/2 is 1.

    A sample exactly on a threshold stays silence (no evidence either way).
    """
    samples = np.asarray(samples, dtype=float)
    out = np.full(len(samples), SILENCE, dtype="<U1")
    out[samples > cfg.upper_threshold] = "0"
    out[samples < cfg.lower_threshold] = "1"
    return "".join(out)


def demodulate_iats(iats, cfg: IatChannelConfig) -> str:
    """Decode an IAT stream to frame symbols.

    Runs the running average, locks the sampling phase, then thresholds one
    sample per symbol. Raises ValueError when the stream is shorter than one
    window.
    """
    averages = running_average(iats, cfg.window)
    tau = find_sampling_offset(averages, cfg)
    samples = averages[tau::cfg.window]
    return classify_samples(samples, cfg)


def calibrate_reference(iats) -> float:
    """Empirical kappa: the mean observed IAT (silence-dominated streams)."""
    iats = np.asarray(iats, dtype=float)
    if len(iats) == 0:
        raise ValueError("need at least one IAT")
    return float(iats.mean())


@dataclass(frozen=True)
class RecoveredMessages:
    """Framing result: clean payloads, error count, discarded edge fragments."""

    messages: tuple[str, ...]
    frame_errors: int
    discarded_edges: int


def recover_messages(symbols: str, silence_bits: int, message_bits: int) -> RecoveredMessages:
    """Split a symbol stream at silence runs and pull out auth payloads.

    A delimiter is a run of at least silence_bits/2 consecutive silence
    symbols (one frame contributes that much on each side). Segments between
    delimiters must be exactly message_bits of clean data; anything else
    (embedded silence, wrong length) counts as one frame error. Partial
    segments touching a stream edge are discarded, not counted.
    """
    if message_bits < 1:
        raise ValueError("message_bits must be >= 1")
    min_run = max(1, silence_bits // 2)
    runs = []  # (start, end) of silence runs of delimiter grade
    i = 0
    while i < len(symbols):
        if symbols[i] == SILENCE:
            j = i
            while j < len(symbols) and symbols[j] == SILENCE:
                j += 1
            if j - i >= min_run:
                runs.append((i, j))
            i = j
        else:
            i += 1
    if not runs:
        raise FramingError("no silence delimiters in symbol stream")

    messages = []
    errors = 0
    edges = 0
    segments = [(runs[k][1], runs[k + 1][0]) for k in range(len(runs) - 1)]
    # Edge fragments: data before the first delimiter or after the last one.
    if runs[0][0] > 0:
        edges += 1
    if runs[-1][1] < len(symbols):
        edges += 1
    for start, end in segments:
        seg = symbols[start:end]
        if not seg:
            continue  # adjacent delimiter runs, nothing between
        if SILENCE in seg or len(seg) != message_bits:
            errors += 1
        else:
            messages.append(seg)
    return RecoveredMessages(tuple(messages), errors, edges)
