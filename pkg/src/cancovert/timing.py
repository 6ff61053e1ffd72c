"""Message timing model for a periodic CAN transmitter.

A transmitter queues message i at local clock time t_i (t_0 = 0). A receiver
with a reference clock timestamps the arrival at

    a_i = t_i / (1 + S) + eta_i,        eta_i = -eps_i + d_i + n_i

where S is the relative clock skew of the sender, eps_i the sender's offset
jitter, d_i the network/arbitration delay and n_i the receiver quantization
noise. All three noise terms are modeled Gaussian and i.i.d., so eta_i is
Gaussian with mean d and variance sigma_eta^2. Inter-arrival times then satisfy

    E[delta a] = T / (1 + S),   Var(delta a) = 2 * sigma_eta^2

because consecutive arrivals share no noise terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_SKEW_PPM = 10_000.0  # |S| < 1% keeps 1/(1+S) well conditioned


@dataclass(frozen=True)
class ClockModel:
    """Sender clock: skew in ppm, offset jitter std (seconds), RNG seed."""

    skew_ppm: float = 0.0
    jitter_std: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if abs(self.skew_ppm) >= MAX_SKEW_PPM:
            raise ValueError(f"clock skew {self.skew_ppm} ppm out of range")
        if self.jitter_std < 0:
            raise ValueError("jitter_std must be >= 0")

    @property
    def skew(self) -> float:
        return self.skew_ppm * 1e-6


@dataclass(frozen=True)
class NoiseModel:
    """Path noise: delay mean/std plus receiver quantization std (seconds)."""

    delay_mean: float = 0.0
    delay_std: float = 0.0
    quant_std: float = 0.0

    def __post_init__(self):
        if self.delay_std < 0 or self.quant_std < 0:
            raise ValueError("noise stds must be >= 0")

    def eta_std(self, jitter_std: float = 0.0) -> float:
        """Std of the combined per-timestamp noise eta."""
        return float(np.sqrt(jitter_std**2 + self.delay_std**2 + self.quant_std**2))


ZERO_NOISE = NoiseModel()


@dataclass(frozen=True)
class Timeline:
    """Paired transmit times (sender clock) and arrival timestamps (receiver)."""

    transmit_times: np.ndarray
    arrival_times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.transmit_times, dtype=float)
        a = np.asarray(self.arrival_times, dtype=float)
        object.__setattr__(self, "transmit_times", t)
        object.__setattr__(self, "arrival_times", a)
        if t.shape != a.shape or t.ndim != 1:
            raise ValueError("transmit and arrival times must be 1-D and equal length")
        _check_transmit_times(t)

    def __len__(self):
        return len(self.transmit_times)

    @property
    def itts(self) -> np.ndarray:
        """Inter-transmission times on the sender clock."""
        return np.diff(self.transmit_times)

    @property
    def iats(self) -> np.ndarray:
        """Inter-arrival times on the receiver clock."""
        return np.diff(self.arrival_times)


def _check_transmit_times(t: np.ndarray):
    if len(t) == 0:
        raise ValueError("empty transmit schedule")
    if t[0] != 0.0:
        raise ValueError("transmit times must start at 0")
    if len(t) > 1 and not np.all(np.diff(t) > 0):
        raise ValueError("transmit times must be strictly increasing")


def synthesize_arrivals(transmit_times, clock: ClockModel = ClockModel(),
                        noise: NoiseModel = ZERO_NOISE,
                        rng: np.random.Generator | None = None) -> Timeline:
    """Generate receiver timestamps for a transmit schedule.

    Draw order is fixed (offset jitter, delay, quantization) so a given seed
    always produces the identical timeline.
    """
    t = np.asarray(transmit_times, dtype=float)
    _check_transmit_times(t)
    if rng is None:
        rng = np.random.default_rng(clock.rng_seed)
    n = len(t)
    eps = rng.normal(0.0, clock.jitter_std, n) if clock.jitter_std else np.zeros(n)
    d = rng.normal(noise.delay_mean, noise.delay_std, n) if (noise.delay_mean or noise.delay_std) else np.zeros(n)
    q = rng.normal(0.0, noise.quant_std, n) if noise.quant_std else np.zeros(n)
    eta = -eps + d + q
    a = t / (1.0 + clock.skew) + eta
    return Timeline(t, a)


def inter_arrival_times(timeline) -> np.ndarray:
    """IATs from a Timeline or a plain arrival-time sequence."""
    a = timeline.arrival_times if isinstance(timeline, Timeline) else np.asarray(timeline, dtype=float)
    if len(a) < 2:
        raise ValueError("need at least two arrivals")
    return np.diff(a)


def observed_offsets(iats, period: float) -> np.ndarray:
    """Accumulated offset O[i] = i*T - sum of the first i IATs, i = 1..N.

    Telescopes to i*T - (a_i - a_0): per-IAT noise cancels except at the
    endpoints, which is what the offset channel exploits.
    """
    if period <= 0:
        raise ValueError("period must be > 0")
    iats = np.asarray(iats, dtype=float)
    if iats.ndim != 1 or len(iats) == 0:
        raise ValueError("need a non-empty 1-D IAT sequence")
    i = np.arange(1, len(iats) + 1)
    return i * period - np.cumsum(iats)


def repair_missing_messages(iats, period: float, gap_factor: float = 1.5) -> np.ndarray:
    """Split oversized IATs caused by dropped messages.

    Any IAT > gap_factor*T is replaced by round(IAT/T) equal synthetic IATs,
    preserving the total elapsed time.
    """
    if period <= 0:
        raise ValueError("period must be > 0")
    iats = np.asarray(iats, dtype=float)
    out = []
    for v in iats:
        if v > gap_factor * period:
            k = max(1, int(round(v / period)))
            out.extend([v / k] * k)
        else:
            out.append(v)
    return np.asarray(out, dtype=float)
