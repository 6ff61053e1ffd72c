"""Acceptance gate: the nine headline claims, one test per criterion.

Each test prints a single `criterion N PASS/FAIL: ...` line (visible with
pytest -s) and asserts the stated tolerance. Everything runs from fixed seeds.
"""

import math
import warnings

import numpy as np

from cancovert import evaluate, iat_channel, offset_channel
from cancovert.auth import (ACCEPT, DEFAULT_PREAMBLE, AuthMessage, AuthMonitor,
                            EcuIdentity)
from cancovert.bus import (ATTACK_MASQUERADE, ATTACK_REPLAY, ATTACK_SUSPENSION,
                           EV_ACCEPT, EV_CARRIER_LOST, EV_REJECT_COUNTER,
                           AttackScenario, BusMessageSpec, CanFrame,
                           CarrierSetup, run_simulation, transmission_time)
from cancovert.errors import SchedConvergenceError
from cancovert.lsb_channel import (CarrierSpec, LsbChannelConfig, accuracy_loss,
                                   embed_lsb)
from cancovert.profiles import PROFILES
from cancovert.sched import (SchedProblem, adjusted_worst_case_response,
                             channel_transmission_overhead,
                             worst_case_response)

from oracles import OracleMessage, critical_instant_response_ns

KEY = bytes.fromhex("00112233445566778899aabbccddeeff")
VERDICTS = (EV_ACCEPT, "reject-digest", EV_REJECT_COUNTER)
NS = 1_000_000_000


def report(n: int, ok: bool, detail: str):
    line = f"criterion {n} {'PASS' if ok else 'FAIL'}: {detail}"
    print(line)
    assert ok, line


def pooled_ber(channel: str, window: int, seeds=range(5)) -> dict[str, float]:
    out = {}
    for name, prof in sorted(PROFILES.items()):
        total = evaluate.ErrorCounts()
        for seed in seeds:
            point = evaluate.sweep_ber(channel, prof, window, frames=100,
                                       deviation_fraction=0.02, seed=seed)
            total = total.merge(point.counts)
        out[name] = total.ber
    return out


def test_criterion_1_iat_ber_below_tolerance():
    bers = pooled_ber("iat", window=6)
    worst = max(bers.values())
    report(1, worst <= 0.002,
           f"iat L=6, 500 frames x 36 bits per profile, "
           f"max BER {worst:.2e} (limit 2.0e-03)")


def test_criterion_2_offset_ber_below_tolerance():
    bers = pooled_ber("offset", window=8)
    worst = max(bers.values())
    report(2, worst <= 0.008,
           f"offset L=8, 500 frames x 36 bits per profile, "
           f"max BER {worst:.2e} (limit 8.0e-03)")


def test_criterion_3_zero_noise_round_trip():
    rng = np.random.default_rng(1234)

    def random_frame() -> str:
        while True:
            bits = "".join(rng.choice(["0", "1"], size=32))
            if "0" in bits and "1" in bits:
                return "__" + bits + "__"

    exact = 0
    total = 0
    for _ in range(334):
        symbols = random_frame()
        cfg = iat_channel.IatChannelConfig(0.01, 2e-4, 2)
        decoded = iat_channel.demodulate_iats(
            iat_channel.modulate_itts(symbols, cfg), cfg)
        exact += decoded == symbols
        total += 1
    for _ in range(333):
        symbols = random_frame()
        cfg = offset_channel.OffsetChannelConfig(0.01, 2e-4, 2, len(symbols))
        decoded = offset_channel.demodulate_offsets(
            offset_channel.modulate_itts(symbols, cfg), cfg).symbols
        exact += decoded == symbols
        total += 1
    carrier = CarrierSpec(byte_offset=0, byte_length=2, scale=0.01)
    cfg = LsbChannelConfig(carrier, lsb_count=2)
    for _ in range(333):
        bits = DEFAULT_PREAMBLE + "".join(rng.choice(["0", "1"], size=32))
        frames = [CanFrame(1, bytes([int(r) & 0xFF, int(r) >> 8]))
                  for r in rng.integers(0, 0xFFFF, len(bits) // 2)]
        sent = embed_lsb(frames, bits, cfg)
        back = "".join(format(carrier.raw(f) & cfg.mask, "02b") for f in sent)
        exact += back == bits
        total += 1
    report(3, exact == total == 1000,
           f"{exact}/{total} randomized frames round-tripped exactly "
           f"across iat/offset/lsb")


def test_criterion_4_throughput_reference_points():
    timing = evaluate.throughput("iat", 0.01, message_bits=36,
                                 overhead_bits=4, window=4)
    lsb = evaluate.throughput("lsb", 0.01, message_bits=36, overhead_bits=4,
                              lsb_count=2)
    ok = (math.isclose(timing.frame_time, 1.6, abs_tol=1e-9)
          and math.isclose(timing.message_rate, 22.5, abs_tol=1e-9)
          and math.isclose(lsb.frame_rate, 200.0, abs_tol=1e-9)
          and math.isclose(lsb.message_rate, 180.0, abs_tol=1e-9))
    report(4, ok,
           f"timing 36/(40*4*0.01) = {timing.message_rate:g} bps; "
           f"lsb rates {lsb.frame_rate:g}/{lsb.message_rate:g} bps")


def test_criterion_5_forgery_acceptance_probability():
    monitor = AuthMonitor(EcuIdentity(1, KEY), digest_bits=8)
    rng = np.random.default_rng(99)
    trials = 100_000
    digests = rng.integers(0, 256, trials)
    accepts = sum(
        monitor.verify(AuthMessage(i + 1, int(d), 8)) == ACCEPT
        for i, d in enumerate(digests))
    expected = trials / 256
    bound = 3 * math.sqrt(trials * (1 / 256) * (255 / 256))
    report(5, abs(accepts - expected) <= bound,
           f"{accepts} random digests accepted of {trials} "
           f"(expected {expected:.1f} +- {bound:.1f})")


def test_criterion_6_channel_overhead_numbers():
    c_m = transmission_time(8, 500_000)
    specs = [BusMessageSpec(i, 0.1) for i in range(1, 46)]
    specs.append(BusMessageSpec(100, 1.0))
    problem = SchedProblem(tuple(specs), deviation_fraction=0.02,
                           enabled_ids=tuple(range(1, 46)))
    adj = adjusted_worst_case_response(problem, 100)
    per_message = channel_transmission_overhead(8, 500_000, 0.02)
    ok = (abs(c_m - 320e-6) < 1e-9
          and abs(adj.blocking_increase - 294e-6) <= 1e-6
          and abs(per_message - 6.5e-6) <= 1e-6)
    report(6, ok,
           f"C_m {c_m * 1e6:.1f} us; 45-message blocking delta "
           f"{adj.blocking_increase * 1e6:.1f} us; per-message "
           f"{per_message * 1e6:.2f} us (targets 320 / 294 / 6.5, +-1 us)")


def test_criterion_7_analysis_matches_event_oracle():
    rng = np.random.default_rng(20260814)
    sets_checked = 0
    comparisons = 0
    while sets_checked < 50:
        n = int(rng.integers(1, 5))
        ids = sorted(int(x) for x in rng.choice(2048, size=n, replace=False))
        specs = []
        for cid in ids:
            period_us = int(rng.integers(2000, 20001))
            specs.append(BusMessageSpec(
                cid, period_us * 1e-6, int(rng.integers(0, 9)),
                int(rng.integers(0, period_us // 4 + 1)) * 1e-6))
        problem = SchedProblem(tuple(specs))
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                analyses = [worst_case_response(problem, s.can_id)
                            for s in specs]
        except SchedConvergenceError:
            continue
        if not all(a.schedulable and a.response <= problem.spec(a.can_id).period
                   for a in analyses):
            continue
        messages = [OracleMessage(s.can_id, round(s.period * NS),
                                  round(transmission_time(s.payload_bytes) * NS),
                                  round(s.jitter * NS)) for s in specs]
        for analysis in analyses:
            want = critical_instant_response_ns(messages, analysis.can_id,
                                                tau_ns=2000, horizon_ns=10 * NS)
            assert round(analysis.response * NS) == want, \
                f"criterion 7 FAIL: set {specs} target {analysis.can_id:#x}: " \
                f"analytic {round(analysis.response * NS)} ns, oracle {want} ns"
            comparisons += 1
        sets_checked += 1
    report(7, sets_checked >= 50,
           f"{comparisons} responses across {sets_checked} random message "
           f"sets match the discrete-event oracle exactly")


def test_criterion_8_lsb_accuracy_loss():
    speed = CarrierSpec(byte_offset=2, byte_length=2, scale=0.01, unit="km/h")
    coolant = CarrierSpec(byte_offset=0, byte_length=1, scale=1.0,
                          offset=-40.0, unit="degC")

    def speed_frames(raws):
        out = []
        for r in raws:
            data = bytearray(8)
            data[2:4] = int(r).to_bytes(2, "little")
            out.append(CanFrame(0x0B4, bytes(data)))
        return out

    worst_raws = [4 * i for i in range(64)]
    frames = speed_frames(worst_raws)
    speed_1 = accuracy_loss(frames, embed_lsb(frames, "1" * 64,
                                              LsbChannelConfig(speed, 1)), speed)
    speed_2 = accuracy_loss(frames, embed_lsb(frames, "11" * 64,
                                              LsbChannelConfig(speed, 2)), speed)
    cframes = [CanFrame(0x3D0, bytes([4 * i, 0])) for i in range(32)]
    cool_1 = accuracy_loss(cframes, embed_lsb(cframes, "1" * 32,
                                              LsbChannelConfig(coolant, 1)), coolant)
    cool_2 = accuracy_loss(cframes, embed_lsb(cframes, "11" * 32,
                                              LsbChannelConfig(coolant, 2)), coolant)

    rng = np.random.default_rng(5)
    synth = speed_frames(np.round(
        (60 + 25 * np.sin(np.linspace(0, 6 * math.pi, 500))) / speed.scale))
    bounded = True
    for lsb_count in (1, 2):
        bits = "".join(rng.choice(["0", "1"], size=500 * lsb_count))
        loss = accuracy_loss(
            synth, embed_lsb(synth, bits, LsbChannelConfig(speed, lsb_count)),
            speed)
        bounded &= loss.max_error <= (2**lsb_count - 1) * speed.resolution + 1e-12

    ok = (bounded
          and math.isclose(speed_1.max_error, 0.01, rel_tol=1e-9)
          and math.isclose(speed_2.max_error, 0.03, rel_tol=1e-9)
          and cool_1.max_error == 1.0 and cool_2.max_error == 3.0)
    report(8, ok,
           f"speed max errors {speed_1.max_error:g}/{speed_2.max_error:g} km/h, "
           f"coolant {cool_1.max_error:g}/{cool_2.max_error:g} degC, "
           f"synthesized streams within (2^L - 1) * resolution")


def attack_setup(period=0.01) -> CarrierSetup:
    return CarrierSetup(EcuIdentity(0x180, KEY), 0x180, "iat", period,
                        deviation=0.02 * period, window=2)


def test_criterion_9a_suspension_detected_within_one_frame():
    setup = attack_setup()
    frame_time = setup.frame_duration
    scenario = AttackScenario(ATTACK_SUSPENSION, target_id=0x180,
                              start=4.0, stop=6.5)
    result = run_simulation([setup], duration=8.0, scenario=scenario)
    lost = result.events_for(0x180, EV_CARRIER_LOST, start=4.0, stop=6.5)
    latency = lost[0].time - 4.0 if lost else math.inf
    report(9, bool(lost) and latency <= frame_time,
           f"suspension flagged {latency * 1e3:.0f} ms after onset "
           f"(one frame is {frame_time * 1e3:.0f} ms)")


def test_criterion_9b_replay_never_accepted():
    setup = attack_setup()
    scenario = AttackScenario(ATTACK_REPLAY, target_id=0x180, start=4.0,
                              capture_start=0.0, capture_stop=4.0)
    result = run_simulation([setup], duration=8.0, scenario=scenario)
    window = [e for e in result.events_for(0x180, start=4.1)
              if e.kind in VERDICTS]
    accepts = sum(e.kind == EV_ACCEPT for e in window)
    stale = sum(e.kind == EV_REJECT_COUNTER for e in window)
    report(9, len(window) >= 3 and accepts == 0 and stale >= 1,
           f"replayed traffic: {len(window)} frames decoded, {accepts} "
           f"accepted, {stale} rejected as stale counters")


def test_criterion_9c_masquerade_rejected_per_frame():
    setup = attack_setup(period=0.001)
    start = 0.5
    scenario = AttackScenario(ATTACK_MASQUERADE, target_id=0x180, start=start,
                              mimic_timing=True)
    result = run_simulation([setup], duration=74.0, scenario=scenario)
    window = [e for e in result.events_for(
        0x180, start=start + 2 * setup.frame_duration)
        if e.kind in VERDICTS]
    accepts = sum(e.kind == EV_ACCEPT for e in window)
    rate = accepts / len(window) if window else 1.0
    p = 2**-8
    bound = p + 3 * math.sqrt(p * (1 - p) / max(len(window), 1))
    report(9, len(window) >= 900 and rate <= bound,
           f"masquerade with mimicked timing: {accepts}/{len(window)} forged "
           f"frames accepted (rate {rate:.4f}, bound {bound:.4f})")
