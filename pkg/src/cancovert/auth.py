"""Keyed transmitter-authentication protocol.

Each protected ECU shares a master key MK with the monitor and keeps two
counters: a global counter g (persisted across sessions) and a 24-bit local
message counter l. A session key is derived as

    SK = HMAC(MK, g)

and every authentication message is the incremented counter plus a truncated
MAC over it:

    A = l || trunc_M(HMAC(SK, l))

M is 8, 16 or 32 bits, so a message is n_m = 24 + M bits. The monitor accepts
a message only if its counter is strictly greater than the last accepted one
and the digest matches; replays fail the counter check, forgeries pass it with
probability 2^-M.

Auth messages are wrapped into frames for transmission: the timing channels
pad with n_s silence symbols (half before, half after), the LSB channel
prepends a fixed preamble byte instead.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass, field

from .errors import ConfigError, CounterOverflowError

SILENCE = "_"

COUNTER_BITS = 24
COUNTER_MAX = (1 << COUNTER_BITS) - 1
DIGEST_SIZES = (8, 16, 32)

STYLE_SILENCE = "silence"
STYLE_PREAMBLE = "preamble"
DEFAULT_PREAMBLE = "01111110"  # 0x7e flag byte

ACCEPT = "accept"
REJECT_DIGEST = "reject-digest"
REJECT_COUNTER = "reject-counter"


def int_to_bits(value: int, width: int) -> str:
    """MSB-first bit string of fixed width."""
    if value < 0 or value >= (1 << width):
        raise ValueError(f"{value} does not fit in {width} bits")
    return format(value, f"0{width}b")


def bits_to_int(bits: str) -> int:
    if not bits or any(c not in "01" for c in bits):
        raise ValueError("bit string must be non-empty and contain only 0/1")
    return int(bits, 2)


@dataclass
class EcuIdentity:
    """Per-ECU keying state. The master key never appears in reprs or logs."""

    ecu_id: int
    master_key: bytes = field(repr=False)
    global_counter: int = 0
    local_counter: int = 0
    mac_algorithm: str = "sha256"

    def __post_init__(self):
        if not self.master_key:
            raise ConfigError("empty master key")
        if self.mac_algorithm not in hashlib.algorithms_available:
            raise ConfigError(f"unknown MAC hash {self.mac_algorithm!r}")
        if not 0 <= self.local_counter <= COUNTER_MAX:
            raise ConfigError("local counter out of 24-bit range")
        if self.global_counter < 0:
            raise ConfigError("global counter must be >= 0")
        self._session_key = None
        self._session_counter = None

    def _mac(self, key: bytes, payload: bytes) -> bytes:
        return hmac.new(key, payload, self.mac_algorithm).digest()

    def session_key(self) -> bytes:
        """Current session key, derived on first use after a rotation."""
        if self._session_key is None or self._session_counter != self.global_counter:
            self._session_key = self._mac(self.master_key, encode_global_counter(self.global_counter))
            self._session_counter = self.global_counter
        return self._session_key

    def rotate_session(self):
        """Advance the global counter and start a fresh session (l = 0)."""
        self.global_counter += 1
        self.local_counter = 0
        self._session_key = None


def encode_global_counter(g: int) -> bytes:
    """Global counter as 8 big-endian bytes (key-derivation input)."""
    return g.to_bytes(8, "big")


def encode_local_counter(l: int) -> bytes:
    """24-bit counter zero-padded to 4 big-endian bytes (MAC input)."""
    return l.to_bytes(4, "big")


def derive_session_key(identity: EcuIdentity) -> bytes:
    """Derive SK = HMAC(MK, g) and reset the local counter for a new session."""
    identity.local_counter = 0
    identity._session_key = None
    return identity.session_key()


@dataclass(frozen=True)
class AuthMessage:
    """Counter plus truncated digest; n_m = 24 + digest_bits."""

    counter: int
    digest: int
    digest_bits: int = 8

    def __post_init__(self):
        if self.digest_bits not in DIGEST_SIZES:
            raise ValueError(f"digest_bits must be one of {DIGEST_SIZES}")
        if not 0 <= self.counter <= COUNTER_MAX:
            raise ValueError("counter out of 24-bit range")
        if not 0 <= self.digest < (1 << self.digest_bits):
            raise ValueError("digest out of range")

    @property
    def message_bits(self) -> int:
        return COUNTER_BITS + self.digest_bits

    @property
    def bits(self) -> str:
        return int_to_bits(self.counter, COUNTER_BITS) + int_to_bits(self.digest, self.digest_bits)

    @classmethod
    def from_bits(cls, bits: str, digest_bits: int = 8) -> "AuthMessage":
        if len(bits) != COUNTER_BITS + digest_bits:
            raise ValueError(f"expected {COUNTER_BITS + digest_bits} bits, got {len(bits)}")
        return cls(bits_to_int(bits[:COUNTER_BITS]),
                   bits_to_int(bits[COUNTER_BITS:]) if digest_bits else 0,
                   digest_bits)


def truncate_digest(mac: bytes, digest_bits: int, mode: str = "lsb") -> int:
    """Condense a full MAC to digest_bits.

    "lsb" keeps the least-significant bits; "xor" (8-bit only) folds the MAC
    by XORing all bytes together.
    """
    if digest_bits not in DIGEST_SIZES:
        raise ValueError(f"digest_bits must be one of {DIGEST_SIZES}")
    if mode == "lsb":
        return int.from_bytes(mac, "big") & ((1 << digest_bits) - 1)
    if mode == "xor":
        if digest_bits != 8:
            raise ValueError("xor condensation is defined for 8-bit digests only")
        out = 0
        for b in mac:
            out ^= b
        return out
    raise ValueError(f"unknown digest mode {mode!r}")


def compute_digest(session_key: bytes, counter: int, digest_bits: int = 8,
                   mode: str = "lsb", mac_algorithm: str = "sha256") -> int:
    mac = hmac.new(session_key, encode_local_counter(counter), mac_algorithm).digest()
    return truncate_digest(mac, digest_bits, mode)


def next_auth_message(identity: EcuIdentity, digest_bits: int = 8,
                      mode: str = "lsb") -> AuthMessage:
    """Increment the local counter and build the next auth message.

    Raises CounterOverflowError when the 24-bit counter is exhausted; the
    caller must rotate the session key.
    """
    if identity.local_counter + 1 > COUNTER_MAX:
        raise CounterOverflowError(
            "24-bit message counter exhausted; rotate the session key")
    identity.local_counter += 1
    digest = compute_digest(identity.session_key(), identity.local_counter,
                            digest_bits, mode, identity.mac_algorithm)
    return AuthMessage(identity.local_counter, digest, digest_bits)


@dataclass(frozen=True)
class AuthFrame:
    """Auth message wrapped for transmission.

    symbols is a string over {'0', '1', '_'}: silence-style frames carry
    overhead/2 silence symbols on each side, preamble-style frames carry the
    preamble bits up front. frame_bits is n_f = n_m + n_s.
    """

    symbols: str
    style: str = STYLE_SILENCE
    overhead: int = 0

    def __post_init__(self):
        if self.style not in (STYLE_SILENCE, STYLE_PREAMBLE):
            raise ValueError(f"unknown frame style {self.style!r}")
        allowed = "01_" if self.style == STYLE_SILENCE else "01"
        if any(c not in allowed for c in self.symbols):
            raise ValueError("frame contains invalid symbols")

    @property
    def frame_bits(self) -> int:
        return len(self.symbols)

    @property
    def message_symbols(self) -> str:
        if self.style == STYLE_SILENCE:
            lead = self.overhead // 2
            return self.symbols[lead:len(self.symbols) - (self.overhead - lead)]
        return self.symbols[self.overhead:]

    @property
    def overhead_positions(self) -> tuple[int, ...]:
        if self.style == STYLE_SILENCE:
            lead = self.overhead // 2
            n = len(self.symbols)
            return tuple(range(lead)) + tuple(range(n - (self.overhead - lead), n))
        return tuple(range(self.overhead))


def frame_auth_message(msg: AuthMessage, silence_bits: int = 4,
                       style: str = STYLE_SILENCE,
                       preamble: str = DEFAULT_PREAMBLE) -> AuthFrame:
    """Wrap an auth message for the chosen channel style."""
    if style == STYLE_SILENCE:
        if silence_bits < 0 or silence_bits % 2:
            raise ValueError("silence_bits must be even and >= 0")
        pad = SILENCE * (silence_bits // 2)
        return AuthFrame(pad + msg.bits + pad, STYLE_SILENCE, silence_bits)
    if style == STYLE_PREAMBLE:
        if not preamble or any(c not in "01" for c in preamble):
            raise ValueError("preamble must be a non-empty bit string")
        return AuthFrame(preamble + msg.bits, STYLE_PREAMBLE, len(preamble))
    raise ValueError(f"unknown frame style {style!r}")


class AuthMonitor:
    """Monitor-side verifier holding the last accepted counter per ECU."""

    def __init__(self, identity: EcuIdentity, digest_bits: int = 8,
                 mode: str = "lsb", last_accepted: int = 0):
        self.identity = identity
        self.digest_bits = digest_bits
        self.mode = mode
        self.last_accepted = last_accepted

    def expected_digest(self, counter: int) -> int:
        return compute_digest(self.identity.session_key(), counter,
                              self.digest_bits, self.mode,
                              self.identity.mac_algorithm)

    def verify(self, msg: AuthMessage) -> str:
        """Counter freshness first, then the digest; accept advances state."""
        if msg.counter <= self.last_accepted:
            return REJECT_COUNTER
        if msg.digest != self.expected_digest(msg.counter):
            return REJECT_DIGEST
        self.last_accepted = msg.counter
        return ACCEPT

    def verify_bits(self, bits: str) -> str:
        try:
            msg = AuthMessage.from_bits(bits, self.digest_bits)
        except ValueError:
            return REJECT_DIGEST
        return self.verify(msg)

    def predict_message(self) -> AuthMessage:
        """Auth message the transmitter should send next (no state change)."""
        counter = self.last_accepted + 1
        if counter > COUNTER_MAX:
            raise CounterOverflowError(
                "24-bit message counter exhausted; rotate the session key")
        return AuthMessage(counter, self.expected_digest(counter), self.digest_bits)
