"""Covert-channel transmitter authentication for CAN buses.

Protected ECUs continuously prove their identity to a monitor node over
covert channels that cost no extra bus bandwidth: deviations of message
inter-arrival times, balanced accumulated-offset patterns, or the least
significant bits of a sensor signal. The payload is a keyed counter-plus-MAC
authentication stream, so suspension, replay, and masquerade attempts surface
as missing or failed verifications.

Library layout: timing (clock/noise model), auth (keys, counters, framing),
iat_channel / offset_channel / lsb_channel (modulators and demodulators), bus
(simulator, monitor, candump traces), sched (response-time analysis),
profiles (measured message timing profiles), evaluate (BER and throughput),
config (YAML/CSV loading), cli (command line).
"""

from . import (auth, bus, config, evaluate, iat_channel, lsb_channel,
               offset_channel, profiles, sched, timing)
from .auth import (AuthFrame, AuthMessage, AuthMonitor, EcuIdentity,
                   derive_session_key, frame_auth_message, next_auth_message)
from .bus import (AttackScenario, BusMessageSpec, CarrierSetup, MonitorEvent,
                  SimulationResult, TraceRecord, characterize_trace,
                  emit_candump, ingest_candump, run_simulation,
                  transmission_time)
from .errors import (ConfigError, CounterOverflowError, FramingError,
                     PartialFrameError, SchedConvergenceError, TraceParseError)
from .lsb_channel import (AccuracyLoss, CanFrame, CarrierSpec,
                          LsbChannelConfig, accuracy_loss, embed_lsb,
                          extract_lsb)
from .sched import SchedProblem, adjusted_worst_case_response, worst_case_response
from .timing import ClockModel, NoiseModel, Timeline, synthesize_arrivals

__version__ = "0.1.0"

__all__ = [
    "AccuracyLoss", "AttackScenario", "AuthFrame", "AuthMessage",
    "AuthMonitor", "BusMessageSpec", "CanFrame", "CarrierSetup", "CarrierSpec",
    "ClockModel", "ConfigError", "CounterOverflowError", "EcuIdentity",
    "FramingError", "LsbChannelConfig", "MonitorEvent", "NoiseModel",
    "PartialFrameError", "SchedConvergenceError", "SchedProblem",
    "SimulationResult", "Timeline", "TraceParseError", "TraceRecord",
    "accuracy_loss", "adjusted_worst_case_response", "auth", "bus",
    "characterize_trace", "config", "derive_session_key", "emit_candump",
    "embed_lsb", "evaluate", "extract_lsb", "frame_auth_message",
    "iat_channel", "ingest_candump", "lsb_channel", "next_auth_message",
    "offset_channel", "profiles", "run_simulation", "sched",
    "synthesize_arrivals", "timing", "transmission_time",
    "worst_case_response",
]
