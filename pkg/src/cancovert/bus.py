"""CAN bus simulation, candump traces, and the monitor node.

The simulator is schedule-based: every ECU pre-generates its local transmit
schedule (for protected ECUs the covert modulator drives the spacing and/or
payload bits), attack scenarios are transforms over those schedules, then a
nonpreemptive fixed-priority arbitration pass turns queue times into arrival
timestamps and the monitor consumes the arrivals in order. One seed drives
every random stream, so identical inputs give identical traces.

Trace I/O uses the classic candump log line format:

    (1546300800.000100) can0 180#1122334455667788
"""

from __future__ import annotations

import heapq
import math
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import iat_channel, offset_channel
from .auth import (AuthMessage, AuthMonitor, DEFAULT_PREAMBLE, EcuIdentity,
                   SILENCE, STYLE_PREAMBLE, STYLE_SILENCE, AuthFrame,
                   frame_auth_message, next_auth_message)
from .errors import ConfigError, TraceParseError
from .lsb_channel import (ALERT, COMPLETE, CanFrame, CarrierSpec,
                          LsbChannelConfig, LsbExtractor)
from .timing import ClockModel, NoiseModel, ZERO_NOISE

CONTROL_BITS = 80   # arbitration, control, CRC, ACK, EOF, worst-case stuffing
BITS_PER_BYTE = 10  # 8 data bits plus worst-case stuff bits

CHANNEL_IAT = "iat"
CHANNEL_OFFSET = "offset"
CHANNEL_LSB = "lsb"
CHANNELS = (CHANNEL_IAT, CHANNEL_OFFSET, CHANNEL_LSB)

EV_ACCEPT = "accept"
EV_REJECT_DIGEST = "reject-digest"
EV_REJECT_COUNTER = "reject-counter"
EV_FRAMING_ERROR = "framing-error"
EV_CARRIER_LOST = "carrier-lost"
EV_DEGENERATE = "degenerate-batch"
EV_ALERT = "alert"

ATTACK_SUSPENSION = "suspension"
ATTACK_INJECTION = "injection"
ATTACK_REPLAY = "replay"
ATTACK_MASQUERADE = "masquerade"
ATTACK_FORGERY = "forgery"
ATTACK_DOS = "dos"
ATTACK_KINDS = (ATTACK_SUSPENSION, ATTACK_INJECTION, ATTACK_REPLAY,
                ATTACK_MASQUERADE, ATTACK_FORGERY, ATTACK_DOS)


def transmission_time(payload_bytes: int, bitrate: int = 500_000) -> float:
    """Worst-case frame time on the wire: (80 + 10*bytes) bit times."""
    if not 0 <= payload_bytes <= 8:
        raise ValueError("payload_bytes must be 0..8")
    if bitrate <= 0:
        raise ValueError("bitrate must be > 0")
    return (CONTROL_BITS + BITS_PER_BYTE * payload_bytes) / bitrate


@dataclass(frozen=True)
class TraceRecord:
    """One logged frame arrival."""

    timestamp: float
    can_id: int
    data: bytes

    def to_frame(self) -> CanFrame:
        return CanFrame(self.can_id, self.data)


_CANDUMP_RE = re.compile(
    r"^\((\d+(?:\.\d+)?)\)\s+(\S+)\s+([0-9A-Fa-f]{3}|[0-9A-Fa-f]{8})#([0-9A-Fa-f]*)$")


def parse_candump_line(line: str) -> TraceRecord | None:
    """One log line to a TraceRecord, or None when malformed."""
    m = _CANDUMP_RE.match(line.strip())
    if not m:
        return None
    ts, _iface, can_id, data = m.groups()
    if len(data) % 2 or len(data) > 16:
        return None
    return TraceRecord(float(ts), int(can_id, 16), bytes.fromhex(data))


def format_candump_line(record: TraceRecord, iface: str = "can0") -> str:
    ident = f"{record.can_id:08X}" if record.can_id > 0x7FF else f"{record.can_id:03X}"
    return f"({record.timestamp:.6f}) {iface} {ident}#{record.data.hex().upper()}"


@dataclass
class IngestResult:
    """Parsed trace grouped by CAN id, plus malformed-line bookkeeping."""

    by_id: dict[int, list[TraceRecord]]
    malformed: list[tuple[int, str]]
    total_lines: int

    @property
    def record_count(self) -> int:
        return sum(len(v) for v in self.by_id.values())


def ingest_candump(lines: Iterable[str], malformed_limit: float = 0.01) -> IngestResult:
    """Parse candump lines into per-id records.

    Malformed lines are skipped and reported with their 1-based positions;
    more than malformed_limit of non-blank lines malformed raises
    TraceParseError.
    """
    by_id: dict[int, list[TraceRecord]] = {}
    malformed: list[tuple[int, str]] = []
    total = 0
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        total += 1
        rec = parse_candump_line(line)
        if rec is None:
            malformed.append((lineno, line.rstrip("\n")))
        else:
            by_id.setdefault(rec.can_id, []).append(rec)
    if total and len(malformed) / total > malformed_limit:
        where = ", ".join(str(n) for n, _ in malformed[:10])
        raise TraceParseError(
            f"{len(malformed)}/{total} lines malformed (limit {malformed_limit:.0%}); "
            f"first at lines {where}")
    return IngestResult(by_id, malformed, total)


def ingest_candump_file(path, malformed_limit: float = 0.01) -> IngestResult:
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        return ingest_candump(fh, malformed_limit)


def emit_candump(records: Iterable[TraceRecord], iface: str = "can0") -> list[str]:
    return [format_candump_line(r, iface) for r in records]


@dataclass(frozen=True)
class CharacterizedProfile:
    """Timing statistics of one message id, after missing-message repair."""

    period: float
    normalized_std: float
    normalized_range: float
    records: int


def characterize_trace(records: Sequence[TraceRecord], min_records: int = 100) -> CharacterizedProfile:
    """Estimate period and normalized IAT statistics for one id's records."""
    if len(records) < min_records:
        raise ValueError(f"need at least {min_records} records, got {len(records)}")
    times = np.sort(np.array([r.timestamp for r in records], dtype=float))
    iats = np.diff(times)
    from .timing import repair_missing_messages
    rough = float(np.median(iats))
    if rough <= 0:
        raise ValueError("trace has duplicate or non-increasing timestamps")
    repaired = repair_missing_messages(iats, rough)
    period = float(np.median(repaired))
    return CharacterizedProfile(
        period=period,
        normalized_std=float(np.std(repaired) / period),
        normalized_range=float((repaired.max() - repaired.min()) / period),
        records=len(records),
    )


@dataclass(frozen=True)
class BusMessageSpec:
    """Static description of one periodic message for simulation/analysis."""

    can_id: int
    period: float
    payload_bytes: int = 8
    jitter: float = 0.0
    deadline: float | None = None

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError("period must be > 0")
        if not 0 <= self.payload_bytes <= 8:
            raise ValueError("payload_bytes must be 0..8")
        if self.jitter < 0:
            raise ValueError("jitter must be >= 0")
        if self.deadline is not None and self.deadline <= 0:
            raise ValueError("deadline must be > 0")

    @property
    def effective_deadline(self) -> float:
        return self.period if self.deadline is None else self.deadline


@dataclass
class CarrierSetup:
    """One protected ECU: keys, channel choice, timing and payload layout."""

    identity: EcuIdentity
    can_id: int
    channel: str
    period: float
    deviation: float = 0.0
    window: int = 1
    silence_bits: int = 4
    digest_bits: int = 8
    digest_mode: str = "lsb"
    preamble: str = DEFAULT_PREAMBLE
    payload_bytes: int = 8
    clock: ClockModel = field(default_factory=ClockModel)
    noise: NoiseModel = field(default_factory=NoiseModel)
    carrier: CarrierSpec | None = None
    lsb_count: int = 1
    signal_base: float = 60.0
    signal_amplitude: float = 25.0
    signal_period: float = 8.0

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise ConfigError(f"unknown channel {self.channel!r}")
        if self.period <= 0:
            raise ConfigError("period must be > 0")
        if self.channel in (CHANNEL_IAT, CHANNEL_OFFSET):
            if not 0 < self.deviation < self.period:
                raise ConfigError("timing channels need deviation in (0, period)")
            if self.silence_bits < 2 or self.silence_bits % 2:
                raise ConfigError("silence_bits must be even and >= 2")
        if self.channel == CHANNEL_OFFSET and (self.window < 2 or self.window % 2):
            raise ConfigError("offset channel needs an even window >= 2")
        if self.channel == CHANNEL_LSB and self.carrier is None:
            raise ConfigError("lsb channel needs a carrier spec")
        if not 1 <= self.payload_bytes <= 8:
            raise ConfigError("payload_bytes must be 1..8")

    @property
    def message_bits(self) -> int:
        return 24 + self.digest_bits

    @property
    def frame_style(self) -> str:
        return STYLE_PREAMBLE if self.channel == CHANNEL_LSB else STYLE_SILENCE

    @property
    def frame_bits(self) -> int:
        if self.channel == CHANNEL_LSB:
            return self.message_bits + len(self.preamble)
        return self.message_bits + self.silence_bits

    @property
    def frame_duration(self) -> float:
        if self.channel == CHANNEL_LSB:
            return self.frame_bits * self.period / self.lsb_count
        return self.frame_bits * self.window * self.period

    def iat_config(self) -> iat_channel.IatChannelConfig:
        return iat_channel.IatChannelConfig(self.period, self.deviation, self.window)

    def offset_config(self) -> offset_channel.OffsetChannelConfig:
        return offset_channel.OffsetChannelConfig(self.period, self.deviation,
                                                  self.window, self.frame_bits)

    def lsb_config(self) -> LsbChannelConfig:
        return LsbChannelConfig(self.carrier, self.lsb_count)

    def monitor_identity(self) -> EcuIdentity:
        """Monitor-side copy sharing the key material, fresh counters."""
        return EcuIdentity(self.identity.ecu_id, self.identity.master_key,
                           self.identity.global_counter, 0,
                           self.identity.mac_algorithm)

    def signal_value(self, t: float) -> float:
        return self.signal_base + self.signal_amplitude * math.sin(
            2.0 * math.pi * t / self.signal_period)

    def payload_at(self, index: int, t_local: float) -> bytes:
        data = bytes(self.payload_bytes)
        if self.carrier is not None:
            frame = self.carrier.with_value(CanFrame(self.can_id, data),
                                            self.signal_value(t_local))
            return frame.data
        return (index % (1 << 64)).to_bytes(8, "little")[:self.payload_bytes]


@dataclass(frozen=True)
class AttackScenario:
    """One attack applied to the simulated bus.

    kinds: suspension (target silent in [start, stop)), injection (extra
    target-id frames at `period`), replay (re-emit captured target traffic
    from `start` while the target is silenced), masquerade (silence target,
    attacker transmits in its place, optionally mimicking the covert timing
    with forged digests), forgery (target ECU itself sends forged digests
    from `start`), dos (priority flood in [start, stop)).
    """

    kind: str
    target_id: int | None = None
    start: float = 0.0
    stop: float | None = None
    period: float | None = None
    payload: bytes | None = None
    capture_start: float = 0.0
    capture_stop: float | None = None
    mimic_timing: bool = False
    digest_policy: str = "random"
    flood_id: int = 0

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ConfigError(f"unknown attack kind {self.kind!r}")
        if self.kind != ATTACK_DOS and self.target_id is None:
            raise ConfigError(f"{self.kind} attack needs a target_id")
        if self.digest_policy not in ("random", "zero"):
            raise ConfigError("digest_policy must be 'random' or 'zero'")
        if self.stop is not None and self.stop <= self.start:
            raise ConfigError("stop must be after start")

    def window_end(self, duration: float) -> float:
        return duration if self.stop is None else self.stop


@dataclass(frozen=True)
class TruthFrame:
    """Ground truth for one transmitted auth frame."""

    counter: int
    symbols: str
    start_index: int  # first ITT index (timing) or carrier message index (lsb)
    forged: bool = False


@dataclass
class CarrierTruth:
    """What one protected ECU actually put on the wire."""

    can_id: int
    channel: str
    period: float
    deviation: float
    window: int
    silence_bits: int
    digest_bits: int
    preamble: str
    lsb_count: int
    frames: list[TruthFrame] = field(default_factory=list)
    message_count: int = 0

    def to_dict(self) -> dict:
        return {
            "can_id": self.can_id, "channel": self.channel,
            "period": self.period, "deviation": self.deviation,
            "window": self.window, "silence_bits": self.silence_bits,
            "digest_bits": self.digest_bits, "preamble": self.preamble,
            "lsb_count": self.lsb_count, "message_count": self.message_count,
            "frames": [{"counter": f.counter, "symbols": f.symbols,
                        "start_index": f.start_index, "forged": f.forged}
                       for f in self.frames],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CarrierTruth":
        frames = [TruthFrame(f["counter"], f["symbols"], f["start_index"],
                             f.get("forged", False)) for f in d.get("frames", [])]
        return cls(d["can_id"], d["channel"], d["period"], d["deviation"],
                   d["window"], d["silence_bits"], d["digest_bits"],
                   d["preamble"], d.get("lsb_count", 1), frames,
                   d.get("message_count", 0))


@dataclass(frozen=True)
class MonitorEvent:
    time: float
    can_id: int
    kind: str
    detail: dict = field(default_factory=dict, compare=False)


@dataclass
class SimulationResult:
    trace: list[TraceRecord]
    events: list[MonitorEvent]
    truth: dict[int, CarrierTruth]
    duration: float
    seed: int
    bitrate: int

    def events_for(self, can_id: int, kind: str | None = None,
                   start: float = 0.0, stop: float | None = None) -> list[MonitorEvent]:
        stop = self.duration + 1.0 if stop is None else stop
        return [e for e in self.events
                if e.can_id == can_id and start <= e.time < stop
                and (kind is None or e.kind == kind)]

    def verdict_counts(self, can_id: int, start: float = 0.0,
                       stop: float | None = None) -> Counter:
        return Counter(e.kind for e in self.events_for(can_id, None, start, stop))


# internal schedule entry: (reference queue time, can_id, payload, seq)
@dataclass(frozen=True)
class _Entry:
    queue_time: float
    can_id: int
    payload: bytes


def _forged_digest(policy: str, digest_bits: int, rng: np.random.Generator) -> int:
    if policy == "zero":
        return 0
    return int(rng.integers(0, 1 << digest_bits))


class _AuthSource:
    """Produces framed auth messages; digests can be forged from a cutoff."""

    def __init__(self, setup: CarrierSetup, identity: EcuIdentity,
                 forge_rng: np.random.Generator | None = None,
                 forge_policy: str = "random"):
        self.setup = setup
        self.identity = identity
        self.forge_rng = forge_rng
        self.forge_policy = forge_policy

    def next_frame(self, forged: bool) -> tuple[AuthFrame, TruthFrame]:
        msg = next_auth_message(self.identity, self.setup.digest_bits,
                                self.setup.digest_mode)
        if forged:
            msg = AuthMessage(msg.counter,
                              _forged_digest(self.forge_policy,
                                             self.setup.digest_bits,
                                             self.forge_rng),
                              self.setup.digest_bits)
        frame = frame_auth_message(msg, self.setup.silence_bits,
                                   self.setup.frame_style, self.setup.preamble)
        return frame, TruthFrame(msg.counter, frame.symbols, 0, forged)


def _timing_schedule(setup: CarrierSetup, source: _AuthSource, horizon: float,
                     forge_after_local: float | None = None):
    """Local transmit times + payloads + truth for a timing-channel ECU."""
    cfg = setup.iat_config() if setup.channel == CHANNEL_IAT else setup.offset_config()
    modulate = (iat_channel.modulate_itts if setup.channel == CHANNEL_IAT
                else offset_channel.modulate_itts)
    times = [0.0]
    frames: list[TruthFrame] = []
    t = 0.0
    itt_index = 0
    while t < horizon:
        forged = forge_after_local is not None and t >= forge_after_local
        frame, truth = source.next_frame(forged)
        frames.append(replace(truth, start_index=itt_index))
        for dt in modulate(frame, cfg):
            t += dt
            times.append(t)
            itt_index += 1
    payloads = [setup.payload_at(i, ti) for i, ti in enumerate(times)]
    return np.asarray(times), payloads, frames


def _lsb_schedule(setup: CarrierSetup, source: _AuthSource, horizon: float,
                  forge_after_local: float | None = None):
    """Constant-period schedule with auth bits embedded in payload LSBs."""
    cfg = setup.lsb_config()
    count = int(math.floor(horizon / setup.period)) + 1
    times = np.arange(count) * setup.period
    if setup.frame_bits % setup.lsb_count:
        raise ConfigError("frame length not divisible by lsb_count")
    payloads = []
    frames: list[TruthFrame] = []
    bits = ""
    pos = 0
    for i in range(count):
        t = float(times[i])
        if pos >= len(bits):
            forged = forge_after_local is not None and t >= forge_after_local
            frame, truth = source.next_frame(forged)
            frames.append(replace(truth, start_index=i))
            bits, pos = frame.symbols, 0
        chunk = bits[pos:pos + setup.lsb_count]
        pos += setup.lsb_count
        base = CanFrame(setup.can_id, setup.payload_at(i, t))
        raw = cfg.carrier.raw(base)
        new_raw = (raw & ~cfg.mask) | int(chunk, 2)
        payloads.append(cfg.carrier.with_raw(base, new_raw).data)
    return times, payloads, frames


def _to_reference(times: np.ndarray, clock: ClockModel,
                  rng: np.random.Generator) -> np.ndarray:
    ref = times / (1.0 + clock.skew)
    if clock.jitter_std:
        ref = ref + rng.normal(0.0, clock.jitter_std, len(ref))
    return ref


def _arbitrate(entries: list[_Entry], bitrate: int) -> list[tuple[float, _Entry]]:
    """Nonpreemptive highest-priority-first arbitration.

    Returns (completion_time, entry) in transmission order. Lower CAN id wins;
    equal ids go in queue order.
    """
    order = sorted(range(len(entries)), key=lambda i: (entries[i].queue_time, entries[i].can_id, i))
    completions = []
    pending: list[tuple[int, int]] = []  # (can_id, order position)
    i = 0
    t = 0.0
    n = len(order)
    while i < n or pending:
        if not pending:
            t = max(t, entries[order[i]].queue_time)
        while i < n and entries[order[i]].queue_time <= t:
            heapq.heappush(pending, (entries[order[i]].can_id, i))
            i += 1
        if not pending:
            continue
        _, pos = heapq.heappop(pending)
        entry = entries[order[pos]]
        start = max(t, entry.queue_time)
        done = start + transmission_time(len(entry.payload), bitrate)
        completions.append((done, entry))
        t = done
    return completions


class _TimingChannelMonitor:
    """Per-id monitor for the IAT and offset channels.

    Buffers repaired IATs, acquires frame alignment on silence runs, then
    demodulates whole frame batches and verifies the recovered auth messages.

    Acquisition classifies silence on window-averaged IATs for the IAT
    channel (the signal lives in the window mean, so averaging buys the same
    L-fold noise reduction the demodulator gets) and pins the exact frame
    boundary from the sampling phase. The offset channel's window mean is
    flat by construction, so it classifies raw IATs and acquires reliably
    only while the silence gaps stand out of the noise.
    """

    def __init__(self, setup: CarrierSetup, events: list[MonitorEvent],
                 watchdog_gap: float, resync_after: int = 2):
        self.setup = setup
        self.events = events
        self.watchdog_gap = watchdog_gap
        self.resync_after = resync_after
        self.auth = AuthMonitor(setup.monitor_identity(), setup.digest_bits,
                                setup.digest_mode)
        self.iat_cfg = setup.iat_config() if setup.channel == CHANNEL_IAT else None
        self.off_cfg = setup.offset_config() if setup.channel == CHANNEL_OFFSET else None
        self.batch = setup.frame_bits * setup.window
        self.lead = (setup.silence_bits // 2) * setup.window
        self.acq_window = setup.window if setup.channel == CHANNEL_IAT else 1
        self.pending: list[tuple[float, float]] = []  # (iat, end timestamp)
        self.locked = False
        self.last_time: float | None = None
        self.fail_streak = 0

    def _emit(self, time: float, kind: str, **detail):
        self.events.append(MonitorEvent(time, self.setup.can_id, kind, detail))

    def on_arrival(self, ts: float, payload: bytes):
        if self.last_time is None:
            self.last_time = ts
            return
        gap = ts - self.last_time
        T = self.setup.period
        if gap > self.watchdog_gap:
            self._emit(self.last_time + self.watchdog_gap, EV_CARRIER_LOST, gap=gap)
            self.pending.clear()
            self.locked = False
            self.last_time = ts
            return
        self.last_time = ts
        if gap > 1.5 * T:
            k = max(1, int(round(gap / T)))
            for _ in range(k):
                self._feed(gap / k, ts)
        else:
            self._feed(gap, ts)

    def _feed(self, iat: float, ts: float):
        self.pending.append((iat, ts))
        if not self.locked:
            self._try_lock()
        while self.locked and len(self.pending) >= self.batch:
            self._demod_batch()

    def _acq_series(self) -> np.ndarray:
        vals = np.array([v for v, _ in self.pending])
        if self.acq_window > 1:
            return iat_channel.running_average(vals, self.acq_window)
        return vals

    def _try_lock(self):
        """Align on a complete silence run followed by a data onset.

        Silence is classified on the acquisition series; the run must span
        a frame's leading quiet zone before the onset counts.
        """
        W = self.acq_window
        if len(self.pending) < max(self.lead, W):
            return
        series = self._acq_series()
        silent = np.abs(series - self.setup.period) <= self.setup.deviation / 2.0
        need = max(1, self.lead - W + 1)
        run = 0
        for idx in range(len(series)):
            if silent[idx]:
                run += 1
                continue
            if run >= need:
                del self.pending[:self._locate_start(series, idx)]
                self.locked = True
                self.fail_streak = 0
                return
            run = 0
        # No usable boundary yet; trim unframeable backlog, keep the tail run.
        if len(self.pending) > 2 * self.batch:
            keep = min(run + W, self.batch)
            self._emit(self.pending[-1][1], EV_FRAMING_ERROR, reason="no-alignment")
            del self.pending[:len(self.pending) - keep]

    def _locate_start(self, series: np.ndarray, onset: int) -> int:
        """Turn the first non-silent acquisition index into a frame start."""
        W = self.acq_window
        # An averaged onset fires once data dominates the window, which puts
        # the first data IAT about (W + 1) // 2 - 1 positions past the onset.
        # Residual off-by-one error is absorbed by the demodulator's silence
        # margins, so no finer alignment is attempted here.
        data_start = onset + (W + 1) // 2 - 1
        return max(0, data_start - self.lead)

    def _demod_batch(self):
        batch = self.pending[:self.batch]
        del self.pending[:self.batch]
        iats = np.array([v for v, _ in batch])
        end_time = batch[-1][1]
        if self.setup.channel == CHANNEL_IAT:
            symbols = iat_channel.demodulate_iats(iats, self.iat_cfg)
        else:
            decode = offset_channel.demodulate_offsets(iats, self.off_cfg)
            if decode.degenerate:
                self._emit(end_time, EV_DEGENERATE)
                self._fail()
                return
            symbols = decode.symbols
        # A batch cut within the silence margins still contains the whole
        # message, so strip the quiet edges and demand a clean body of the
        # right width instead of exact margin counts.
        body = symbols.strip(SILENCE)
        framed = (symbols[:1] == SILENCE and symbols[-1:] == SILENCE
                  and len(body) == self.setup.frame_bits - self.setup.silence_bits
                  and SILENCE not in body)
        if framed:
            verdict = self.auth.verify_bits(body)
            self._emit(end_time, verdict, counter=int(body[:24], 2))
            self.fail_streak = 0
        else:
            self._emit(end_time, EV_FRAMING_ERROR, reason="structure",
                       symbols=symbols)
            self._fail()

    def _fail(self):
        self.fail_streak += 1
        if self.fail_streak >= self.resync_after:
            self.locked = False
            self.fail_streak = 0
            self._try_lock()

    def finish(self, end_time: float):
        if self.last_time is not None and end_time - self.last_time > self.watchdog_gap:
            self._emit(self.last_time + self.watchdog_gap, EV_CARRIER_LOST,
                       gap=end_time - self.last_time)


class _LsbChannelMonitor:
    """Per-id monitor for the LSB channel: lockstep extract and verify."""

    def __init__(self, setup: CarrierSetup, events: list[MonitorEvent],
                 watchdog_gap: float):
        self.setup = setup
        self.events = events
        self.watchdog_gap = watchdog_gap
        self.auth = AuthMonitor(setup.monitor_identity(), setup.digest_bits,
                                setup.digest_mode)
        self.extractor = LsbExtractor(setup.lsb_config(), self._expected)
        self.last_time: float | None = None

    def _expected(self) -> str:
        return self.setup.preamble + self.auth.predict_message().bits

    def _emit(self, time: float, kind: str, **detail):
        self.events.append(MonitorEvent(time, self.setup.can_id, kind, detail))

    def on_arrival(self, ts: float, payload: bytes):
        if self.last_time is not None and ts - self.last_time > self.watchdog_gap:
            self._emit(self.last_time + self.watchdog_gap, EV_CARRIER_LOST,
                       gap=ts - self.last_time)
        self.last_time = ts
        consumed = len(self.extractor.received)
        verdict = self.extractor.push(CanFrame(self.setup.can_id, payload))
        if verdict == ALERT:
            self._emit(ts, EV_ALERT, position=consumed + self.setup.lsb_count)
        elif verdict == COMPLETE:
            # A complete frame matched the prediction bit for bit, so the
            # accepted message is exactly the predicted one.
            msg = self.auth.predict_message()
            self.auth.last_accepted = msg.counter
            self._emit(ts, EV_ACCEPT, counter=msg.counter)

    def finish(self, end_time: float):
        if self.last_time is not None and end_time - self.last_time > self.watchdog_gap:
            self._emit(self.last_time + self.watchdog_gap, EV_CARRIER_LOST,
                       gap=end_time - self.last_time)


def _make_monitor(setup: CarrierSetup, events: list[MonitorEvent],
                  gap_factor: float):
    gap = gap_factor * setup.period
    if setup.channel == CHANNEL_LSB:
        return _LsbChannelMonitor(setup, events, gap)
    return _TimingChannelMonitor(setup, events, gap)


def monitor_records(setups: Sequence[CarrierSetup],
                    by_id: dict[int, list[TraceRecord]],
                    end_time: float | None = None,
                    gap_factor: float = 5.0) -> list[MonitorEvent]:
    """Run the monitor offline over ingested trace records."""
    events: list[MonitorEvent] = []
    last = 0.0
    for setup in setups:
        mon = _make_monitor(setup, events, gap_factor)
        for rec in sorted(by_id.get(setup.can_id, []), key=lambda r: r.timestamp):
            mon.on_arrival(rec.timestamp, rec.data)
            last = max(last, rec.timestamp)
        mon.finish(end_time if end_time is not None else last)
    events.sort(key=lambda e: (e.time, e.can_id, e.kind))
    return events


def run_simulation(carriers: Sequence[CarrierSetup],
                   background: Sequence[BusMessageSpec] = (),
                   duration: float = 10.0,
                   scenario: AttackScenario | None = None,
                   seed: int = 0,
                   bitrate: int = 500_000,
                   gap_factor: float = 5.0) -> SimulationResult:
    """Simulate the bus and run the monitor over the resulting arrivals."""
    ids = [c.can_id for c in carriers] + [b.can_id for b in background]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate CAN ids across carriers/background")
    if duration <= 0:
        raise ValueError("duration must be > 0")

    seq = np.random.SeedSequence(seed)
    children = seq.spawn(len(carriers) + len(background) + 2)
    carrier_rngs = [np.random.default_rng(s) for s in children[:len(carriers)]]
    bg_rngs = [np.random.default_rng(s)
               for s in children[len(carriers):len(carriers) + len(background)]]
    attack_rng = np.random.default_rng(children[-2])
    noise_rng = np.random.default_rng(children[-1])

    truth: dict[int, CarrierTruth] = {}
    entries: list[_Entry] = []
    victim_entries: dict[int, list[_Entry]] = {}

    for setup, rng in zip(carriers, carrier_rngs):
        identity = EcuIdentity(setup.identity.ecu_id, setup.identity.master_key,
                               setup.identity.global_counter, 0,
                               setup.identity.mac_algorithm)
        forge_after = None
        if scenario and scenario.kind == ATTACK_FORGERY and scenario.target_id == setup.can_id:
            forge_after = scenario.start * (1.0 + setup.clock.skew)
        source = _AuthSource(setup, identity, attack_rng, scenario.digest_policy
                             if scenario else "random")
        horizon = duration * (1.0 + abs(setup.clock.skew)) + setup.period
        if setup.channel == CHANNEL_LSB:
            times, payloads, frames = _lsb_schedule(setup, source, horizon, forge_after)
        else:
            times, payloads, frames = _timing_schedule(setup, source, horizon, forge_after)
        ref = _to_reference(times, setup.clock, rng)
        ecu_entries = [_Entry(float(q), setup.can_id, p)
                       for q, p in zip(ref, payloads) if q < duration]
        victim_entries[setup.can_id] = ecu_entries
        ct = CarrierTruth(setup.can_id, setup.channel, setup.period,
                          setup.deviation, setup.window, setup.silence_bits,
                          setup.digest_bits, setup.preamble, setup.lsb_count,
                          frames, len(ecu_entries))
        truth[setup.can_id] = ct

    for spec, rng in zip(background, bg_rngs):
        count = int(math.floor(duration / spec.period)) + 1
        times = np.arange(count) * spec.period
        if spec.jitter:
            times = times + rng.uniform(0.0, spec.jitter, count)
        payload = bytes(spec.payload_bytes)
        entries.extend(_Entry(float(q), spec.can_id, payload)
                       for q in times if q < duration)

    # Apply the scenario as schedule transforms.
    attack_entries: list[_Entry] = []
    if scenario is None:
        for ecu_entries in victim_entries.values():
            entries.extend(ecu_entries)
    else:
        stop = scenario.window_end(duration)
        for can_id, ecu_entries in victim_entries.items():
            if scenario.kind in (ATTACK_SUSPENSION, ATTACK_REPLAY, ATTACK_MASQUERADE) \
                    and scenario.target_id == can_id:
                entries.extend(e for e in ecu_entries
                               if not scenario.start <= e.queue_time < stop)
            else:
                entries.extend(ecu_entries)

        if scenario.kind == ATTACK_REPLAY:
            src = victim_entries.get(scenario.target_id, [])
            ce = scenario.capture_stop if scenario.capture_stop is not None else scenario.start
            cs = scenario.capture_start
            block = [e for e in src if cs <= e.queue_time < ce]
            if block:
                span = ce - cs
                k = 0
                while True:
                    shift = scenario.start - cs + k * span
                    if scenario.start + k * span >= stop:
                        break
                    for e in block:
                        q = e.queue_time + shift
                        if q >= stop:
                            break
                        attack_entries.append(_Entry(q, e.can_id, e.payload))
                    k += 1
        elif scenario.kind == ATTACK_MASQUERADE:
            target = next(c for c in carriers if c.can_id == scenario.target_id)
            observed = sum(1 for f in truth[target.can_id].frames
                           if _frame_end_ref(target, f) <= scenario.start)
            if scenario.mimic_timing:
                fake_id = EcuIdentity(target.identity.ecu_id, b"\xa5" * 16,
                                      target.identity.global_counter,
                                      observed, target.identity.mac_algorithm)
                fake_setup = replace(target, clock=ClockModel(),
                                     noise=ZERO_NOISE)
                src = _AuthSource(fake_setup, fake_id, attack_rng,
                                  scenario.digest_policy)
                if target.channel == CHANNEL_LSB:
                    times, payloads, _ = _lsb_schedule(fake_setup, src,
                                                       stop - scenario.start, 0.0)
                else:
                    times, payloads, _ = _timing_schedule(fake_setup, src,
                                                          stop - scenario.start, 0.0)
                attack_entries.extend(
                    _Entry(float(t) + scenario.start, target.can_id, p)
                    for t, p in zip(times, payloads)
                    if t + scenario.start < stop)
            else:
                count = int(math.floor((stop - scenario.start) / target.period)) + 1
                payload = scenario.payload or bytes(target.payload_bytes)
                attack_entries.extend(
                    _Entry(scenario.start + k * target.period, target.can_id, payload)
                    for k in range(count)
                    if scenario.start + k * target.period < stop)
        elif scenario.kind == ATTACK_INJECTION:
            period = scenario.period
            if period is None:
                period = next((c.period for c in carriers
                               if c.can_id == scenario.target_id), 0.01) / 2.0
            payload = scenario.payload or bytes(8)
            count = int(math.floor((stop - scenario.start) / period)) + 1
            attack_entries.extend(
                _Entry(scenario.start + k * period, scenario.target_id, payload)
                for k in range(count)
                if scenario.start + k * period < stop)
        elif scenario.kind == ATTACK_DOS:
            period = scenario.period or transmission_time(8, bitrate) * 0.8
            payload = scenario.payload or bytes(8)
            count = int(math.floor((stop - scenario.start) / period)) + 1
            attack_entries.extend(
                _Entry(scenario.start + k * period, scenario.flood_id, payload)
                for k in range(count)
                if scenario.start + k * period < stop)

    entries.extend(attack_entries)

    completions = _arbitrate(entries, bitrate)

    # Receiver timestamps: completion plus per-id measurement noise.
    noise_by_id = {c.can_id: c.noise for c in carriers}
    trace: list[TraceRecord] = []
    arrivals: list[tuple[float, int, bytes]] = []
    for done, entry in completions:
        nm = noise_by_id.get(entry.can_id)
        ts = done
        if nm is not None and (nm.delay_mean or nm.delay_std or nm.quant_std):
            ts = done + nm.delay_mean
            if nm.delay_std:
                ts += noise_rng.normal(0.0, nm.delay_std)
            if nm.quant_std:
                ts += noise_rng.normal(0.0, nm.quant_std)
        trace.append(TraceRecord(ts, entry.can_id, entry.payload))
        arrivals.append((ts, entry.can_id, entry.payload))

    events: list[MonitorEvent] = []
    monitors = {c.can_id: _make_monitor(c, events, gap_factor) for c in carriers}
    for ts, can_id, payload in arrivals:
        mon = monitors.get(can_id)
        if mon is not None:
            mon.on_arrival(ts, payload)
    end_time = max([duration] + [ts for ts, _, _ in arrivals])
    for mon in monitors.values():
        mon.finish(end_time)
    events.sort(key=lambda e: (e.time, e.can_id, e.kind))
    trace.sort(key=lambda r: (r.timestamp, r.can_id))
    return SimulationResult(trace, events, truth, duration, seed, bitrate)


def _frame_end_ref(setup: CarrierSetup, frame: TruthFrame) -> float:
    """Approximate reference-clock end time of a truth frame."""
    if setup.channel == CHANNEL_LSB:
        per_frame = setup.frame_bits // setup.lsb_count
        end_local = (frame.start_index + per_frame) * setup.period
    else:
        end_local = (frame.start_index + setup.frame_bits * setup.window) * setup.period
    return end_local / (1.0 + setup.clock.skew)
