"""Keyed MAC hashing with periodic key destruction.

Raw MACs are hashed with HMAC-SHA256 under a 12-octet random session key. Keys
live only in memory; on rotation the old key's bytes are overwritten, so
digests from different sessions cannot be linked afterwards.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import re
import secrets
import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, TextIO

from .errors import KeyLengthError, MalformedMac, ParseError, RandomnessUnavailable, RangeError

KEY_LENGTH = 12
DEFAULT_PERIOD_S = 86_400

_MAC_RE = re.compile(r"^([0-9a-fA-F]{2})([:-])([0-9a-fA-F]{2})(\2[0-9a-fA-F]{2}){4}$")


@dataclass(eq=False)
class SessionKey:
    key_bytes: bytearray
    session_index: int
    valid_from: int
    valid_until: int

    def __post_init__(self):
        self.key_bytes = bytearray(self.key_bytes)
        if len(self.key_bytes) != KEY_LENGTH:
            raise KeyLengthError(f"session key must be {KEY_LENGTH} octets, got {len(self.key_bytes)}")
        self.erased = False

    def zeroize(self) -> None:
        for i in range(len(self.key_bytes)):
            self.key_bytes[i] = 0
        self.erased = True

    def covers(self, t: float) -> bool:
        return self.valid_from <= t < self.valid_until

    def __repr__(self) -> str:
        # never print key material
        return (
            f"SessionKey(session_index={self.session_index}, valid_from={self.valid_from}, "
            f"valid_until={self.valid_until}, erased={self.erased})"
        )


def parse_mac(mac: str) -> bytes:
    """Canonical 6-octet encoding of ``aa:bb:cc:dd:ee:ff`` (``-`` also accepted)."""
    if not isinstance(mac, str) or not _MAC_RE.match(mac.strip()):
        raise MalformedMac(f"not a MAC address: {mac!r}")
    return bytes.fromhex(re.sub(r"[:-]", "", mac.strip()))


def format_mac(octets: bytes) -> str:
    return ":".join(f"{b:02x}" for b in octets)


def derive_anon_id(mac: str | bytes, key: SessionKey) -> str:
    """HMAC-SHA256 of the raw MAC octets, as 64 lowercase hex characters."""
    if len(key.key_bytes) != KEY_LENGTH:
        raise KeyLengthError(f"session key must be {KEY_LENGTH} octets")
    if key.erased:
        raise KeyLengthError("session key has been destroyed")
    octets = mac if isinstance(mac, (bytes, bytearray)) else parse_mac(mac)
    if len(octets) != 6:
        raise MalformedMac(f"MAC must be 6 octets, got {len(octets)}")
    return hmac.new(bytes(key.key_bytes), bytes(octets), hashlib.sha256).hexdigest()


def rotate_key(
    now: int,
    period_s: int = DEFAULT_PERIOD_S,
    previous: SessionKey | None = None,
    randbytes: Callable[[int], bytes] = secrets.token_bytes,
) -> SessionKey:
    """Fresh key valid for ``[now, now + period_s)``; ``previous`` is zeroized."""
    if period_s <= 0:
        raise ValueError("period_s must be positive")
    try:
        material = randbytes(KEY_LENGTH)
    except (NotImplementedError, OSError) as exc:
        raise RandomnessUnavailable(str(exc)) from exc
    index = 0
    if previous is not None:
        index = previous.session_index + 1
        previous.zeroize()
    return SessionKey(bytearray(material), index, int(now), int(now) + int(period_s))


class KeyStore:
    """One global session key per deployment, rotated on period boundaries.

    Sessions are aligned to multiples of ``period_s`` in event time. Digests are
    cached per session; the cache is dropped together with the key.
    """

    def __init__(self, period_s: int = DEFAULT_PERIOD_S,
                 randbytes: Callable[[int], bytes] = secrets.token_bytes):
        if period_s <= 0:
            raise ValueError("period_s must be positive")
        self.period_s = int(period_s)
        self._randbytes = randbytes
        self._lock = threading.Lock()
        self._key: SessionKey | None = None
        self._cache: dict[bytes, str] = {}

    @property
    def current(self) -> SessionKey | None:
        return self._key

    def key_for(self, t: float) -> SessionKey:
        key = self._key
        if key is not None and key.covers(t):
            return key
        with self._lock:
            key = self._key
            if key is None or not key.covers(t):
                start = int(t) - int(t) % self.period_s
                if key is not None and start < key.valid_from:
                    raise ValueError(f"event at {t} belongs to a destroyed session")
                self._key = rotate_key(start, self.period_s, key, self._randbytes)
                self._cache = {}
            return self._key

    def digest(self, mac: str | bytes, t: float) -> str:
        key = self.key_for(t)
        octets = mac if isinstance(mac, (bytes, bytearray)) else parse_mac(mac)
        cache = self._cache
        d = cache.get(octets)
        if d is None:
            d = derive_anon_id(octets, key)
            cache[octets] = d
        return d


@dataclass(frozen=True)
class RawProbe:
    sensor_id: str
    mac: str
    t: int
    rssi: int
    seq: int


def parse_raw_probe(line: str) -> RawProbe:
    """Parse ``{"s":..,"mac":..,"t":..,"rssi":..,"seq":..}``."""
    try:
        rec = json.loads(line)
        sensor, mac, t, rssi, seq = rec["s"], rec["mac"], rec["t"], rec["rssi"], rec["seq"]
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"malformed raw probe: {line.strip()!r}") from exc
    for name, v in (("t", t), ("rssi", rssi), ("seq", seq)):
        if not isinstance(v, int) or isinstance(v, bool):
            raise ParseError(f"{name} must be an integer")
    if not isinstance(sensor, str):
        raise ParseError("s must be a string")
    parse_mac(mac)
    if not -100 <= rssi <= 0:
        raise RangeError(f"rssi {rssi} outside [-100, 0]")
    if not 0 <= seq <= 4095:
        raise RangeError(f"seq {seq} outside [0, 4095]")
    return RawProbe(sensor, mac, t, rssi, seq)


def format_raw_probe(p: RawProbe) -> str:
    return json.dumps(
        {"s": p.sensor_id, "mac": p.mac, "t": p.t, "rssi": p.rssi, "seq": p.seq},
        separators=(",", ":"),
    )


def anonymize_lines(lines: Iterable[str], store: KeyStore) -> Iterator[str]:
    """Turn raw probe lines into ingest-format lines. Blank lines are skipped."""
    from .ingest import ProbeEvent, format_probe

    for line in lines:
        if not line.strip():
            continue
        raw = parse_raw_probe(line)
        ev = ProbeEvent(raw.sensor_id, store.digest(raw.mac, raw.t), raw.t, raw.rssi, raw.seq)
        yield format_probe(ev)


def anonymize_stream(src: TextIO, dst: TextIO, period_s: int = DEFAULT_PERIOD_S) -> int:
    store = KeyStore(period_s)
    n = 0
    for out in anonymize_lines(src, store):
        dst.write(out + "\n")
        n += 1
    return n
