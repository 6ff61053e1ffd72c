"""Command line interface.

Subcommands: simulate (full bus simulation with optional attack), replay
(monitor a recorded trace), ber-sweep (noise-calibrated BER tables), throughput
(channel rate math), sched (response-time analysis), ingest (trace statistics).
Report-style commands write schema-stable CSV; a PNG figure is rendered next
to the CSV unless --no-figures is given.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import bus, evaluate, report
from .bus import (ATTACK_KINDS, AttackScenario, CHANNEL_IAT, CHANNEL_LSB,
                  CHANNEL_OFFSET, CarrierTruth)
from .config import load_message_set, load_system_config
from .errors import ConfigError, FramingError, SchedConvergenceError, TraceParseError
from .profiles import PROFILES, get_profile
from .sched import SchedProblem, adjusted_worst_case_response, worst_case_response
from .timing import observed_offsets


def _int_arg(text: str) -> int:
    return int(text, 0)


def _fmt(value: float) -> str:
    return f"{value:.10g}"


def _write_csv(path, fieldnames, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


def _figure_path(out) -> Path:
    return Path(out).with_suffix(".png")


def _scenario_from_args(args) -> AttackScenario | None:
    if not args.attack:
        return None
    payload = bytes.fromhex(args.attack_payload) if args.attack_payload else None
    return AttackScenario(
        kind=args.attack, target_id=args.target, start=args.attack_start,
        stop=args.attack_stop, period=args.attack_period, payload=payload,
        capture_start=args.capture_start, capture_stop=args.capture_stop,
        mimic_timing=args.mimic_timing, digest_policy=args.digest_policy,
        flood_id=args.flood_id)


def _print_verdicts(result_counts, can_id, channel):
    parts = " ".join(f"{kind}={n}" for kind, n in sorted(result_counts.items()))
    print(f"0x{can_id:03X} [{channel}] {parts or 'no events'}")


def cmd_simulate(args) -> int:
    cfg = load_system_config(args.config)
    scenario = _scenario_from_args(args)
    result = bus.run_simulation(cfg.carriers, cfg.background,
                                duration=args.duration, scenario=scenario,
                                seed=args.seed, bitrate=cfg.bitrate)
    for setup in cfg.carriers:
        _print_verdicts(result.verdict_counts(setup.can_id), setup.can_id,
                        setup.channel)
    print(f"trace: {len(result.trace)} frames over {result.duration:g}s "
          f"(seed {result.seed})")
    if args.out:
        out = Path(args.out)
        out.write_text("\n".join(bus.emit_candump(result.trace)) + "\n",
                       encoding="ascii")
        meta = {
            "duration": result.duration, "seed": result.seed,
            "bitrate": result.bitrate,
            "scenario": scenario.kind if scenario else None,
            "ids": {f"0x{cid:03X}": truth.to_dict()
                    for cid, truth in sorted(result.truth.items())},
        }
        meta_path = Path(str(out) + ".meta.json")
        meta_path.write_text(json.dumps(meta, indent=1), encoding="utf-8")
        print(f"wrote {out} and {meta_path}")
        if not args.no_figures and cfg.carriers:
            setup = cfg.carriers[0]
            times = [r.timestamp for r in result.trace if r.can_id == setup.can_id]
            if len(times) > 2:
                iats = np.diff(times)
                fig = _figure_path(out)
                if setup.channel == CHANNEL_OFFSET:
                    margin = setup.deviation * setup.window / 4.0
                    report.offset_trace_figure(
                        observed_offsets(iats, setup.period), margin, fig)
                else:
                    report.iat_trace_figure(iats, setup.period,
                                            setup.deviation or setup.period / 50,
                                            fig)
                print(f"wrote {fig}")
    return 0


def cmd_replay(args) -> int:
    cfg = load_system_config(args.config)
    ingest = bus.ingest_candump_file(args.trace)
    meta_path = Path(args.meta) if args.meta else Path(str(args.trace) + ".meta.json")
    meta = None
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    present = [c for c in cfg.carriers if c.can_id in ingest.by_id]
    if ingest.malformed:
        print(f"{len(ingest.malformed)} malformed lines skipped "
              f"(first at line {ingest.malformed[0][0]})")
    if not present:
        print("error: none of the configured CAN ids appear in the trace",
              file=sys.stderr)
        return 1
    events = bus.monitor_records(cfg.carriers, ingest.by_id)
    rows = []
    for setup in cfg.carriers:
        records = ingest.by_id.get(setup.can_id, [])
        counts = {}
        for e in events:
            if e.can_id == setup.can_id:
                counts[e.kind] = counts.get(e.kind, 0) + 1
        _print_verdicts(counts, setup.can_id, setup.channel)
        row = {"can_id": f"0x{setup.can_id:03X}", "channel": setup.channel,
               "records": len(records),
               "accepts": counts.get(bus.EV_ACCEPT, 0),
               "reject_digest": counts.get(bus.EV_REJECT_DIGEST, 0),
               "reject_counter": counts.get(bus.EV_REJECT_COUNTER, 0),
               "framing_errors": counts.get(bus.EV_FRAMING_ERROR, 0),
               "carrier_lost": counts.get(bus.EV_CARRIER_LOST, 0),
               "alerts": counts.get(bus.EV_ALERT, 0),
               "bits": "", "bit_errors": "", "erasures": "", "ber": ""}
        if meta and f"0x{setup.can_id:03X}" in meta.get("ids", {}):
            truth = CarrierTruth.from_dict(meta["ids"][f"0x{setup.can_id:03X}"])
            scored = evaluate.ber_against_truth(records, truth, setup.carrier)
            if scored.bits:
                row.update(bits=scored.bits, bit_errors=scored.bit_errors,
                           erasures=scored.erasures, ber=_fmt(scored.ber))
                print(f"0x{setup.can_id:03X} ground truth: "
                      f"{scored.bit_errors}/{scored.bits} bit errors "
                      f"(BER {_fmt(scored.ber)}), {scored.erasures} erasures")
        rows.append(row)
    if args.out:
        _write_csv(args.out, list(rows[0].keys()), rows)
        print(f"wrote {args.out}")
    return 0


def cmd_ber_sweep(args) -> int:
    if args.channel not in (CHANNEL_IAT, CHANNEL_OFFSET):
        raise ConfigError("ber-sweep covers the iat and offset channels")
    names = sorted(PROFILES) if args.profile == "all" else [args.profile]
    profiles = [get_profile(n) for n in names]
    windows = [int(w) for w in args.windows.split(",") if w.strip()]
    if not windows:
        raise ConfigError("no window lengths given")
    if args.channel == CHANNEL_OFFSET and any(w % 2 for w in windows):
        raise ConfigError("offset channel needs even window lengths")
    rows = []
    for prof in profiles:
        for window in windows:
            total = evaluate.ErrorCounts()
            for s in range(args.seeds):
                point = evaluate.sweep_ber(
                    args.channel, prof, window, frames=args.frames,
                    deviation_fraction=args.deviation_fraction,
                    seed=args.seed + s, message_bits=args.message_bits,
                    silence_bits=args.silence_bits)
                total = total.merge(point.counts)
            rows.append({
                "message": prof.name, "channel": args.channel,
                "window": window, "frames": total.frames,
                "bits": total.bits, "bit_errors": total.bit_errors,
                "erasures": total.erasures, "ber": _fmt(total.ber),
            })
    rows.sort(key=lambda r: (r["message"], r["window"]))
    for r in rows:
        print(f"{r['message']} L={r['window']}: "
              f"{r['bit_errors']}/{r['bits']} bit errors (BER {r['ber']}), "
              f"{r['erasures']} erasures")
    if args.out:
        _write_csv(args.out, ["message", "channel", "window", "frames", "bits",
                              "bit_errors", "erasures", "ber"], rows)
        print(f"wrote {args.out}")
        if not args.no_figures:
            fig = report.ber_figure(rows, _figure_path(args.out))
            print(f"wrote {fig}")
    return 0


def cmd_throughput(args) -> int:
    result = evaluate.throughput(args.channel, args.period,
                                 message_bits=args.message_bits,
                                 overhead_bits=args.overhead_bits,
                                 window=args.window, lsb_count=args.lsb_count)
    print(f"channel={args.channel} frame_time={_fmt(result.frame_time)} "
          f"frame_rate={_fmt(result.frame_rate)} "
          f"message_rate={_fmt(result.message_rate)}")
    if args.out:
        _write_csv(args.out,
                   ["channel", "period", "message_bits", "overhead_bits",
                    "window", "lsb_count", "frame_time", "frame_rate",
                    "message_rate"],
                   [{"channel": args.channel, "period": _fmt(args.period),
                     "message_bits": args.message_bits,
                     "overhead_bits": args.overhead_bits,
                     "window": args.window, "lsb_count": args.lsb_count,
                     "frame_time": _fmt(result.frame_time),
                     "frame_rate": _fmt(result.frame_rate),
                     "message_rate": _fmt(result.message_rate)}])
        print(f"wrote {args.out}")
    return 0


def cmd_sched(args) -> int:
    specs, enabled = load_message_set(args.message_set)
    problem = SchedProblem(tuple(specs), bitrate=args.bitrate,
                           deviation_fraction=args.deviation_fraction,
                           enabled_ids=tuple(enabled))
    rows = []
    for spec in sorted(specs, key=lambda s: s.can_id):
        base = worst_case_response(problem, spec.can_id)
        adj = adjusted_worst_case_response(problem, spec.can_id,
                                           method=args.method)
        rows.append({
            "can_id": f"0x{spec.can_id:03X}", "period": _fmt(spec.period),
            "payload_bytes": spec.payload_bytes,
            "baseline_response": _fmt(base.response),
            "adjusted_response": _fmt(adj.response),
            "blocking_increase": _fmt(adj.blocking_increase),
            "schedulable": int(base.schedulable and adj.schedulable),
            "iterations": base.iterations,
        })
        flag = "" if base.schedulable and adj.schedulable else "  UNSCHEDULABLE"
        print(f"0x{spec.can_id:03X}: R={_fmt(base.response)}s "
              f"R'={_fmt(adj.response)}s "
              f"dB={_fmt(adj.blocking_increase)}s{flag}")
    print(f"utilization={_fmt(problem.utilization())} method={args.method} "
          f"f={_fmt(args.deviation_fraction)}")
    if args.out:
        _write_csv(args.out, ["can_id", "period", "payload_bytes",
                              "baseline_response", "adjusted_response",
                              "blocking_increase", "schedulable", "iterations"],
                   rows)
        print(f"wrote {args.out}")
        if not args.no_figures:
            fig = report.sched_figure(rows, _figure_path(args.out))
            print(f"wrote {fig}")
    return 0


def cmd_ingest(args) -> int:
    result = bus.ingest_candump_file(args.trace)
    rows = []
    for can_id in sorted(result.by_id):
        records = result.by_id[can_id]
        row = {"can_id": f"0x{can_id:03X}", "records": len(records),
               "period": "", "normalized_std": "", "normalized_range": ""}
        if len(records) >= args.min_records:
            prof = bus.characterize_trace(records, args.min_records)
            row.update(period=_fmt(prof.period),
                       normalized_std=_fmt(prof.normalized_std),
                       normalized_range=_fmt(prof.normalized_range))
            print(f"0x{can_id:03X}: {len(records)} records, "
                  f"T={_fmt(prof.period)}s std={prof.normalized_std:.2%} "
                  f"range={prof.normalized_range:.2%}")
        else:
            print(f"0x{can_id:03X}: {len(records)} records "
                  f"(need {args.min_records} to characterize)")
        rows.append(row)
    if result.malformed:
        where = ", ".join(str(n) for n, _ in result.malformed[:10])
        print(f"{len(result.malformed)}/{result.total_lines} malformed lines "
              f"skipped (lines {where})")
    if args.out:
        _write_csv(args.out, ["can_id", "records", "period", "normalized_std",
                              "normalized_range"], rows)
        print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="cancovert",
        description="Covert-channel transmitter authentication toolkit for CAN")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate a bus and run the monitor")
    sim.add_argument("--config", required=True, help="system config YAML")
    sim.add_argument("--duration", type=float, default=10.0)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", help="write a candump trace (plus .meta.json)")
    sim.add_argument("--no-figures", action="store_true")
    sim.add_argument("--attack", choices=ATTACK_KINDS)
    sim.add_argument("--target", type=_int_arg, help="attacked CAN id")
    sim.add_argument("--attack-start", type=float, default=0.0)
    sim.add_argument("--attack-stop", type=float, default=None)
    sim.add_argument("--attack-period", type=float, default=None)
    sim.add_argument("--attack-payload", help="hex payload for injected frames")
    sim.add_argument("--capture-start", type=float, default=0.0)
    sim.add_argument("--capture-stop", type=float, default=None)
    sim.add_argument("--mimic-timing", action="store_true")
    sim.add_argument("--digest-policy", choices=("random", "zero"),
                     default="random")
    sim.add_argument("--flood-id", type=_int_arg, default=0)
    sim.set_defaults(func=cmd_simulate)

    rep = sub.add_parser("replay", help="run the monitor over a recorded trace")
    rep.add_argument("--config", required=True)
    rep.add_argument("--trace", required=True)
    rep.add_argument("--meta", help="ground-truth sidecar (default TRACE.meta.json)")
    rep.add_argument("--out", help="write a verdict summary CSV")
    rep.set_defaults(func=cmd_replay)

    sweep = sub.add_parser("ber-sweep", help="BER vs window length tables")
    sweep.add_argument("--channel", choices=(CHANNEL_IAT, CHANNEL_OFFSET),
                       required=True)
    sweep.add_argument("--profile", default="all",
                       help="message profile name or 'all'")
    sweep.add_argument("--windows", default="1,2,4,6,8",
                       help="comma-separated window lengths")
    sweep.add_argument("--frames", type=int, default=100)
    sweep.add_argument("--deviation-fraction", type=float, default=0.02)
    sweep.add_argument("--message-bits", type=int, default=36)
    sweep.add_argument("--silence-bits", type=int, default=4)
    sweep.add_argument("--seed", type=int, default=0)
    sweep.add_argument("--seeds", type=int, default=1,
                       help="number of consecutive seeds to aggregate")
    sweep.add_argument("--out", help="write the sweep CSV")
    sweep.add_argument("--no-figures", action="store_true")
    sweep.set_defaults(func=cmd_ber_sweep)

    thr = sub.add_parser("throughput", help="channel rate math")
    thr.add_argument("--channel", choices=(CHANNEL_IAT, CHANNEL_OFFSET,
                                           CHANNEL_LSB), required=True)
    thr.add_argument("--period", type=float, default=0.01)
    thr.add_argument("--message-bits", type=int, default=36)
    thr.add_argument("--overhead-bits", type=int, default=4,
                     help="silence bits (timing) or preamble bits (lsb)")
    thr.add_argument("--window", type=int, default=1)
    thr.add_argument("--lsb-count", type=int, default=1)
    thr.add_argument("--out")
    thr.set_defaults(func=cmd_throughput)

    sch = sub.add_parser("sched", help="worst-case response-time analysis")
    sch.add_argument("--message-set", required=True, help="message-set CSV")
    sch.add_argument("--bitrate", type=int, default=500_000)
    sch.add_argument("--deviation-fraction", type=float, default=0.0)
    sch.add_argument("--method", choices=("exact", "approx"), default="exact")
    sch.add_argument("--out")
    sch.add_argument("--no-figures", action="store_true")
    sch.set_defaults(func=cmd_sched)

    ing = sub.add_parser("ingest", help="parse and characterize a trace")
    ing.add_argument("--trace", required=True)
    ing.add_argument("--min-records", type=int, default=100)
    ing.add_argument("--out")
    ing.set_defaults(func=cmd_ingest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, TraceParseError, FramingError,
            SchedConvergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
