"""Config file handling: YAML system descriptions and message-set CSVs.

A system config lists the protected ECUs (keys, channel parameters, clock and
noise models) plus optional unprotected background traffic. Example:

    bitrate: 500000
    ecus:
      - ecu_id: 1
        can_id: 0x180
        master_key: 8f3a9c11d2e4b7668f3a9c11d2e4b766
        global_counter: 1
        channel: iat
        period: 0.01
        deviation_fraction: 0.02
        window: 6
        silence_bits: 4
        digest_bits: 8
    background:
      - {can_id: 0x0AA, period: 0.005, payload_bytes: 8}

Message sets for schedulability analysis are CSV with a header:

    can_id,period,payload_bytes,jitter,deadline,enabled
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import yaml

from .auth import DEFAULT_PREAMBLE, EcuIdentity
from .bus import BusMessageSpec, CarrierSetup
from .errors import ConfigError
from .lsb_channel import CarrierSpec
from .timing import ClockModel, NoiseModel


def _to_int(value, what: str) -> int:
    if isinstance(value, bool):
        raise ConfigError(f"{what} must be an integer")
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        try:
            return int(value, 0)
        except ValueError:
            raise ConfigError(f"bad {what}: {value!r}") from None
    raise ConfigError(f"bad {what}: {value!r}")


def _clock_from(d: dict | None) -> ClockModel:
    d = d or {}
    return ClockModel(skew_ppm=float(d.get("skew_ppm", 0.0)),
                      jitter_std=float(d.get("jitter_std", 0.0)),
                      rng_seed=int(d.get("rng_seed", 0)))


def _noise_from(d: dict | None) -> NoiseModel:
    d = d or {}
    return NoiseModel(delay_mean=float(d.get("delay_mean", 0.0)),
                      delay_std=float(d.get("delay_std", 0.0)),
                      quant_std=float(d.get("quant_std", 0.0)))


def _carrier_spec_from(d: dict | None) -> CarrierSpec | None:
    if d is None:
        return None
    try:
        return CarrierSpec(byte_offset=int(d["byte_offset"]),
                           byte_length=int(d["byte_length"]),
                           endianness=d.get("endianness", "little"),
                           scale=float(d.get("scale", 1.0)),
                           offset=float(d.get("offset", 0.0)),
                           unit=d.get("unit", ""))
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad carrier spec: {exc}") from None


def carrier_setup_from_dict(d: dict) -> CarrierSetup:
    try:
        master_key = bytes.fromhex(str(d["master_key"]))
    except (KeyError, ValueError):
        raise ConfigError("ecu entry needs a hex master_key") from None
    if "can_id" not in d or "channel" not in d or "period" not in d:
        raise ConfigError("ecu entry needs can_id, channel and period")
    period = float(d["period"])
    if "deviation" in d:
        deviation = float(d["deviation"])
    elif "deviation_fraction" in d:
        deviation = float(d["deviation_fraction"]) * period
    else:
        deviation = 0.02 * period if d["channel"] in ("iat", "offset") else 0.0
    identity = EcuIdentity(
        ecu_id=_to_int(d.get("ecu_id", d["can_id"]), "ecu_id"),
        master_key=master_key,
        global_counter=_to_int(d.get("global_counter", 0), "global_counter"))
    return CarrierSetup(
        identity=identity,
        can_id=_to_int(d["can_id"], "can_id"),
        channel=str(d["channel"]),
        period=period,
        deviation=deviation,
        window=_to_int(d.get("window", 1), "window"),
        silence_bits=_to_int(d.get("silence_bits", 4), "silence_bits"),
        digest_bits=_to_int(d.get("digest_bits", 8), "digest_bits"),
        digest_mode=str(d.get("digest_mode", "lsb")),
        preamble=str(d.get("preamble", DEFAULT_PREAMBLE)),
        payload_bytes=_to_int(d.get("payload_bytes", 8), "payload_bytes"),
        clock=_clock_from(d.get("clock")),
        noise=_noise_from(d.get("noise")),
        carrier=_carrier_spec_from(d.get("carrier")),
        lsb_count=_to_int(d.get("lsb_count", 1), "lsb_count"),
        signal_base=float(d.get("signal_base", 60.0)),
        signal_amplitude=float(d.get("signal_amplitude", 25.0)),
        signal_period=float(d.get("signal_period", 8.0)),
    )


@dataclass
class SystemConfig:
    carriers: list[CarrierSetup]
    background: list[BusMessageSpec] = field(default_factory=list)
    bitrate: int = 500_000

    def __post_init__(self):
        ids = [c.can_id for c in self.carriers] + [b.can_id for b in self.background]
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate CAN ids in system config")

    def carrier_for(self, can_id: int) -> CarrierSetup:
        for c in self.carriers:
            if c.can_id == can_id:
                return c
        raise KeyError(f"no carrier with id {can_id:#x}")


def system_config_from_dict(d: dict) -> SystemConfig:
    if not isinstance(d, dict) or "ecus" not in d:
        raise ConfigError("config needs a top-level 'ecus' list")
    carriers = [carrier_setup_from_dict(e) for e in d["ecus"]]
    background = [
        BusMessageSpec(can_id=_to_int(b["can_id"], "can_id"),
                       period=float(b["period"]),
                       payload_bytes=_to_int(b.get("payload_bytes", 8), "payload_bytes"),
                       jitter=float(b.get("jitter", 0.0)))
        for b in d.get("background", [])
    ]
    return SystemConfig(carriers, background, _to_int(d.get("bitrate", 500_000), "bitrate"))


def load_system_config(path) -> SystemConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
    return system_config_from_dict(data)


MESSAGE_SET_FIELDS = ("can_id", "period", "payload_bytes", "jitter", "deadline", "enabled")


def load_message_set(path) -> tuple[list[BusMessageSpec], list[int]]:
    """Read a message-set CSV; returns (specs, channel-enabled ids)."""
    specs = []
    enabled = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "can_id" not in reader.fieldnames \
                or "period" not in reader.fieldnames:
            raise ConfigError("message set needs at least can_id and period columns")
        for row in reader:
            can_id = _to_int(row["can_id"], "can_id")
            deadline = row.get("deadline")
            try:
                spec = BusMessageSpec(
                    can_id=can_id,
                    period=float(row["period"]),
                    payload_bytes=int(row.get("payload_bytes") or 8),
                    jitter=float(row.get("jitter") or 0.0),
                    deadline=float(deadline) if deadline else None)
            except ValueError as exc:
                raise ConfigError(f"bad message-set row {row}: {exc}") from None
            specs.append(spec)
            flag = (row.get("enabled") or "1").strip().lower()
            if flag in ("1", "true", "yes"):
                enabled.append(can_id)
    if not specs:
        raise ConfigError("empty message set")
    return specs, enabled


def write_message_set(path, specs, enabled_ids=None):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MESSAGE_SET_FIELDS)
        for s in specs:
            flag = 1 if enabled_ids is None or s.can_id in enabled_ids else 0
            writer.writerow([f"0x{s.can_id:03X}", repr(s.period), s.payload_bytes,
                             repr(s.jitter), "" if s.deadline is None else repr(s.deadline),
                             flag])
