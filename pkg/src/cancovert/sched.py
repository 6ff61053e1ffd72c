"""Worst-case response-time analysis for periodic CAN messages.

Nonpreemptive fixed-priority analysis: a message's response time is

    R_m = J_m + w_m + C_m

where C_m = (80 + 10*s_m) bit times, blocking B_m is the longest
lower-priority frame, and the queuing delay w_m solves

    w = B_m + sum over hp(m) of ceil((w + J_k + tau_bit) / T_k) * C_k

iterated from w = B_m to a fixpoint. Lower CAN id means higher priority.

Timing-channel overhead: a transmitter that shrinks ITTs by up to a fraction
f = delta/T behaves like a message with period (1-f)*T_k and jitter
J_k + f*T_k. The exact method reruns the recurrence with those primed values;
the approximation folds the effect into blocking, adding f/(1-f)*C_k per
higher-priority message.

All internal arithmetic is integer nanoseconds so ceil() at quotient
boundaries is exact; the public API uses float seconds.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

from .bus import BusMessageSpec, transmission_time
from .errors import ConfigError, SchedConvergenceError

ITERATION_CAP = 10_000
_NS = 1_000_000_000


def _ns(seconds: float) -> int:
    return round(seconds * _NS)


def bit_time(bitrate: int) -> float:
    if bitrate <= 0:
        raise ValueError("bitrate must be > 0")
    return 1.0 / bitrate


def channel_transmission_overhead(payload_bytes: int, bitrate: int,
                                  deviation_fraction: float) -> float:
    """Effective extra transmission time f/(1-f) * C for one message."""
    if not 0 <= deviation_fraction < 1:
        raise ValueError("deviation_fraction must be in [0, 1)")
    c = transmission_time(payload_bytes, bitrate)
    return c * deviation_fraction / (1.0 - deviation_fraction)


@dataclass(frozen=True)
class SchedProblem:
    """A message set plus optional covert-channel overhead parameters.

    enabled_ids limits which messages run the timing channel; None means all
    of them once deviation_fraction > 0.
    """

    specs: tuple[BusMessageSpec, ...]
    bitrate: int = 500_000
    deviation_fraction: float = 0.0
    enabled_ids: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "specs", tuple(self.specs))
        ids = [s.can_id for s in self.specs]
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate CAN ids in message set")
        if not self.specs:
            raise ConfigError("empty message set")
        if self.bitrate <= 0:
            raise ConfigError("bitrate must be > 0")
        if not 0 <= self.deviation_fraction < 1:
            raise ConfigError("deviation_fraction must be in [0, 1)")
        if self.enabled_ids is not None:
            object.__setattr__(self, "enabled_ids", tuple(self.enabled_ids))
            unknown = set(self.enabled_ids) - set(ids)
            if unknown:
                raise ConfigError(f"enabled_ids not in message set: {sorted(unknown)}")

    def spec(self, can_id: int) -> BusMessageSpec:
        for s in self.specs:
            if s.can_id == can_id:
                return s
        raise KeyError(f"no message {can_id:#x} in set")

    def enabled(self, can_id: int) -> bool:
        if self.deviation_fraction == 0:
            return False
        return self.enabled_ids is None or can_id in self.enabled_ids

    def utilization(self) -> float:
        return sum(transmission_time(s.payload_bytes, self.bitrate) / s.period
                   for s in self.specs)


@dataclass(frozen=True)
class ResponseAnalysis:
    can_id: int
    response: float
    queuing_delay: float
    blocking: float
    transmission: float
    jitter: float
    iterations: int
    schedulable: bool


@dataclass(frozen=True)
class AdjustedAnalysis:
    can_id: int
    response: float
    baseline_response: float
    blocking_increase: float
    method: str
    iterations: int
    schedulable: bool


def _fixpoint(blocking_ns: int, hp: list[tuple[int, int, int]], tau_ns: int,
              own_ns: tuple[int, int, int]) -> tuple[int, int, bool]:
    """Solve the queuing recurrence; hp entries are (T, J, C) in ns.

    Returns (w, iterations, schedulable). own_ns is (J_m, C_m, D_m).
    """
    j_m, c_m, d_m = own_ns
    w = blocking_ns
    for it in range(1, ITERATION_CAP + 1):
        nxt = blocking_ns
        for t_k, j_k, c_k in hp:
            nxt += -(-(w + j_k + tau_ns) // t_k) * c_k
        if j_m + nxt + c_m > d_m:
            return nxt, it, False
        if nxt == w:
            return w, it, True
        w = nxt
    raise SchedConvergenceError(
        f"no fixpoint after {ITERATION_CAP} iterations (bus overloaded?)")


def _problem_ns(problem: SchedProblem, can_id: int, adjusted: bool,
                method: str = "exact"):
    """ns-domain blocking, hp list and own parameters for one message."""
    tau_ns = _ns(bit_time(problem.bitrate))
    target = problem.spec(can_id)
    f = problem.deviation_fraction if adjusted else 0.0

    def c_ns(s: BusMessageSpec) -> int:
        return _ns(transmission_time(s.payload_bytes, problem.bitrate))

    blocking_ns = max((c_ns(s) for s in problem.specs if s.can_id > can_id),
                      default=0)
    hp = []
    for s in problem.specs:
        if s.can_id >= can_id:
            continue
        t_k, j_k = _ns(s.period), _ns(s.jitter)
        if adjusted and method == "exact" and problem.enabled(s.can_id):
            j_k += round(f * t_k)
            t_k = round((1.0 - f) * t_k)
        hp.append((t_k, j_k, c_ns(s)))
    if adjusted and method == "approx":
        blocking_ns += sum(round(c * f / (1.0 - f)) for _, _, c in hp)
    j_m = _ns(target.jitter)
    if adjusted and problem.enabled(can_id):
        j_m += round(f * _ns(target.period))
    own = (j_m, c_ns(target), _ns(target.effective_deadline))
    return tau_ns, blocking_ns, hp, own


def worst_case_response(problem: SchedProblem, can_id: int) -> ResponseAnalysis:
    """Baseline response time of one message, channel overhead excluded."""
    tau_ns, blocking_ns, hp, own = _problem_ns(problem, can_id, adjusted=False)
    j_m, c_m, _ = own
    w, iterations, ok = _fixpoint(blocking_ns, hp, tau_ns, own)
    response = (j_m + w + c_m) / _NS
    spec = problem.spec(can_id)
    if ok and response > spec.period:
        warnings.warn(
            f"message {can_id:#x}: response {response:.6f}s exceeds its period; "
            "single-instance analysis is optimistic here", stacklevel=2)
    return ResponseAnalysis(can_id, response, w / _NS, blocking_ns / _NS,
                            c_m / _NS, j_m / _NS, iterations, ok)


def adjusted_worst_case_response(problem: SchedProblem, can_id: int,
                                 method: str = "exact") -> AdjustedAnalysis:
    """Response time with the timing channel active on enabled messages.

    method "exact" reruns the recurrence with shortened periods and inflated
    jitter; "approx" adds f/(1-f)*C_k per higher-priority message as extra
    blocking. blocking_increase always reports the approximation's closed
    form, which is the number the overhead discussion quotes.
    """
    if method not in ("exact", "approx"):
        raise ValueError("method must be 'exact' or 'approx'")
    base = worst_case_response(problem, can_id)
    f = problem.deviation_fraction
    blocking_increase = sum(
        channel_transmission_overhead(s.payload_bytes, problem.bitrate, f)
        for s in problem.specs
        if s.can_id < can_id and problem.enabled(s.can_id))
    if f == 0:
        return AdjustedAnalysis(can_id, base.response, base.response, 0.0,
                                method, base.iterations, base.schedulable)
    tau_ns, blocking_ns, hp, own = _problem_ns(problem, can_id, adjusted=True,
                                               method=method)
    j_m, c_m, _ = own
    w, iterations, ok = _fixpoint(blocking_ns, hp, tau_ns, own)
    response = (j_m + w + c_m) / _NS
    return AdjustedAnalysis(can_id, response, base.response, blocking_increase,
                            method, iterations, ok)


def analyze_message_set(problem: SchedProblem) -> list[ResponseAnalysis]:
    return [worst_case_response(problem, s.can_id) for s in problem.specs]
