"""Probe and camera record parsing, and time-ordered merging of streams.

Records are newline-delimited JSON objects::

    {"s":"gc-07","id":"<64 hex>","t":1521763200,"rssi":-62,"seq":811}
    {"c":"gc-cam-1","start":1521763200,"len":300,"in":14,"out":9}
"""

from __future__ import annotations

import gzip
import heapq
import io
import json
import re
import sys
from dataclasses import dataclass
from operator import attrgetter
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .errors import ParseError, RangeError, UnknownSensor
from .model import Deployment, Interval, NodeKind

_HEX64 = re.compile(r"^[0-9a-f]{64}$")

DEFAULT_WINDOW_S = 60


@dataclass(frozen=True)
class ProbeEvent:
    sensor_id: str
    anon_id: str
    t: int
    rssi: int
    seq: int


@dataclass(frozen=True)
class CameraTick:
    camera_id: str
    interval: Interval
    count_in: int
    count_out: int

    @property
    def t(self) -> int:
        return self.interval.start

    @property
    def total(self) -> int:
        return self.count_in + self.count_out


def _int_field(rec: dict, name: str) -> int:
    try:
        v = rec[name]
    except KeyError:
        raise ParseError(f"missing field {name!r}") from None
    if not isinstance(v, int) or isinstance(v, bool):
        raise ParseError(f"field {name!r} must be an integer, got {v!r}")
    return v


def _load(line: str) -> dict:
    try:
        rec = json.loads(line)
    except ValueError as exc:
        raise ParseError(f"not a JSON record: {line.strip()[:80]!r}") from exc
    if not isinstance(rec, dict):
        raise ParseError("record must be a JSON object")
    return rec


def parse_probe(line: str, deployment: Deployment | None = None) -> ProbeEvent:
    rec = _load(line)
    sensor = rec.get("s")
    anon = rec.get("id")
    if not isinstance(sensor, str) or not sensor:
        raise ParseError("field 's' must be a non-empty string")
    if not isinstance(anon, str) or not _HEX64.match(anon):
        raise ParseError("field 'id' must be 64 lowercase hex characters")
    t = _int_field(rec, "t")
    rssi = _int_field(rec, "rssi")
    seq = _int_field(rec, "seq")
    if not -100 <= rssi <= 0:
        raise RangeError(f"rssi {rssi} outside [-100, 0]")
    if not 0 <= seq <= 4095:
        raise RangeError(f"seq {seq} outside [0, 4095]")
    if deployment is not None:
        node = deployment.nodes.get(sensor)
        if node is None or node.kind is not NodeKind.WIFI_SNIFFER:
            raise UnknownSensor(sensor)
    return ProbeEvent(sensor, anon, t, rssi, seq)


def format_probe(e: ProbeEvent) -> str:
    return json.dumps(
        {"s": e.sensor_id, "id": e.anon_id, "t": e.t, "rssi": e.rssi, "seq": e.seq},
        separators=(",", ":"),
    )


def parse_camera(line: str, deployment: Deployment | None = None) -> CameraTick:
    rec = _load(line)
    cam = rec.get("c")
    if not isinstance(cam, str) or not cam:
        raise ParseError("field 'c' must be a non-empty string")
    start = _int_field(rec, "start")
    length = _int_field(rec, "len")
    cin = _int_field(rec, "in")
    cout = _int_field(rec, "out")
    if cin < 0 or cout < 0:
        raise RangeError(f"camera counts must be non-negative, got in={cin} out={cout}")
    try:
        interval = Interval(start, length)
    except ValueError as exc:
        raise RangeError(str(exc)) from exc
    if deployment is not None:
        node = deployment.nodes.get(cam)
        if node is None or node.kind not in (NodeKind.STEREO_CAMERA, NodeKind.CHOKE_POINT):
            raise UnknownSensor(cam)
    return CameraTick(cam, interval, cin, cout)


def format_camera(c: CameraTick) -> str:
    return json.dumps(
        {"c": c.camera_id, "start": c.interval.start, "len": c.interval.length_s,
         "in": c.count_in, "out": c.count_out},
        separators=(",", ":"),
    )


def open_text(path) -> io.TextIOBase:
    """Open a record file for reading; gzip is detected by magic bytes."""
    if str(path) == "-":
        return sys.stdin
    fh = open(path, "rb")
    magic = fh.peek(2)[:2] if hasattr(fh, "peek") else b""
    if magic == b"\x1f\x8b":
        return io.TextIOWrapper(gzip.GzipFile(fileobj=fh), encoding="utf-8")
    return io.TextIOWrapper(fh, encoding="utf-8")


def iter_records(path, parser: Callable[[str], object]) -> Iterator:
    fh = open_text(path)
    try:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield parser(line)
            except (ParseError, RangeError, UnknownSensor) as exc:
                exc.args = (f"{path}:{lineno}: {exc.args[0] if exc.args else exc}",)
                raise
    finally:
        if fh is not sys.stdin:
            fh.close()


def read_probes(path, deployment: Deployment | None = None) -> Iterator[ProbeEvent]:
    return iter_records(path, lambda line: parse_probe(line, deployment))


def read_cameras(path, deployment: Deployment | None = None) -> Iterator[CameraTick]:
    return iter_records(path, lambda line: parse_camera(line, deployment))


def merge_sorted(
    *streams: Iterable,
    window_s: float = DEFAULT_WINDOW_S,
    dead_letter: Callable[[object], None] | None = None,
    key: Callable[[object], float] = attrgetter("t"),
) -> Iterator:
    """K-way merge of individually time-ordered streams.

    Each stream may be out of order by up to ``window_s``. Events are held back
    until every live stream has advanced past them by the window, then released
    in ``(time, stream index, position)`` order, which is what a stable global
    sort would give. An event that arrives after its slot was already released
    goes to ``dead_letter`` (dropped only when no sink is given).
    """
    iters = [iter(s) for s in streams]
    heads: list = []  # (t, stream, pos, event) of the next unread item per stream
    pos = [0] * len(iters)
    high = [float("-inf")] * len(iters)

    def advance(i: int) -> None:
        for ev in iters[i]:
            heapq.heappush(heads, (key(ev), i, pos[i], ev))
            pos[i] += 1
            return
        high[i] = float("inf")

    for i in range(len(iters)):
        advance(i)

    buffer: list = []
    watermark = float("-inf")
    while heads:
        t, i, p, ev = heapq.heappop(heads)
        advance(i)
        if t < watermark:
            if dead_letter is not None:
                dead_letter(ev)
            continue
        if t > high[i]:
            high[i] = t
        heapq.heappush(buffer, (t, i, p, ev))
        # streams still with a pending head bound the watermark
        live = [high[j] for j in {h[1] for h in heads}]
        wm = min(live) - window_s if live else float("inf")
        if wm > watermark:
            watermark = wm
        while buffer and buffer[0][0] < watermark:
            yield heapq.heappop(buffer)[3]
    while buffer:
        yield heapq.heappop(buffer)[3]


@dataclass
class ProbeTable:
    """Columnar probe batch: index arrays into ``sensors`` and ``ids``."""

    sensors: tuple[str, ...]
    ids: tuple[str, ...]
    sensor_idx: np.ndarray
    device_idx: np.ndarray
    t: np.ndarray
    rssi: np.ndarray
    seq: np.ndarray

    def __len__(self) -> int:
        return int(self.t.size)

    @classmethod
    def empty(cls) -> "ProbeTable":
        z = np.empty(0, dtype=np.int64)
        return cls((), (), z, z.copy(), z.copy(), z.copy(), z.copy())

    @classmethod
    def from_events(cls, events: Iterable[ProbeEvent]) -> "ProbeTable":
        s_index: dict[str, int] = {}
        d_index: dict[str, int] = {}
        si, di, ts, rs, qs = [], [], [], [], []
        for e in events:
            si.append(s_index.setdefault(e.sensor_id, len(s_index)))
            di.append(d_index.setdefault(e.anon_id, len(d_index)))
            ts.append(e.t)
            rs.append(e.rssi)
            qs.append(e.seq)
        arr = lambda v: np.asarray(v, dtype=np.int64)  # noqa: E731
        return cls(tuple(s_index), tuple(d_index), arr(si), arr(di), arr(ts), arr(rs), arr(qs))

    def events(self) -> Iterator[ProbeEvent]:
        s, d = self.sensors, self.ids
        for a, b, t, r, q in zip(self.sensor_idx.tolist(), self.device_idx.tolist(),
                                 self.t.tolist(), self.rssi.tolist(), self.seq.tolist()):
            yield ProbeEvent(s[a], d[b], t, r, q)

    def take(self, mask) -> "ProbeTable":
        return ProbeTable(self.sensors, self.ids, self.sensor_idx[mask], self.device_idx[mask],
                          self.t[mask], self.rssi[mask], self.seq[mask])

    def select_sensors(self, sensor_ids: Sequence[str]) -> "ProbeTable":
        wanted = set(sensor_ids)
        codes = np.array([i for i, s in enumerate(self.sensors) if s in wanted], dtype=np.int64)
        return self.take(np.isin(self.sensor_idx, codes))

    def select_time(self, t0: float, t1: float) -> "ProbeTable":
        return self.take((self.t >= t0) & (self.t < t1))
