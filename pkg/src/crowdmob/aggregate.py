"""Per-sensor unique-device counts per interval, and hourly rollups."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import kernels
from .errors import EmptyHour
from .ingest import ProbeEvent, ProbeTable
from .model import Interval, bucket_of


@dataclass(frozen=True)
class IntervalCount:
    sensor_id: str
    interval: Interval
    unique_devices: int

    def __post_init__(self):
        if self.unique_devices < 0:
            raise ValueError("unique_devices must be non-negative")


@dataclass(frozen=True)
class HourlyCount:
    sensor_id: str
    hour_start: int
    mean_unique: float
    intervals_present: int


def count_unique(events: Iterable[ProbeEvent], sensor_id: str, interval: Interval) -> IntervalCount:
    ids = {e.anon_id for e in events if e.sensor_id == sensor_id and interval.contains(e.t)}
    return IntervalCount(sensor_id, interval, len(ids))


def hourly_rollup(counts: Sequence[IntervalCount]) -> HourlyCount:
    """Mean unique devices over the intervals present in one sensor-hour."""
    if not counts:
        raise EmptyHour("no intervals present")
    sensor = counts[0].sensor_id
    hour = counts[0].interval.hour_start
    seen = set()
    for c in counts:
        if c.sensor_id != sensor or c.interval.hour_start != hour:
            raise ValueError("counts span more than one sensor-hour")
        if c.interval.start in seen:
            raise ValueError(f"duplicate interval {c.interval.start}")
        seen.add(c.interval.start)
    mean = sum(c.unique_devices for c in counts) / len(counts)
    return HourlyCount(sensor, hour, mean, len(counts))


def rollup_all(counts: Iterable[IntervalCount]) -> list[HourlyCount]:
    groups: dict[tuple[str, int], list[IntervalCount]] = defaultdict(list)
    for c in counts:
        groups[(c.sensor_id, c.interval.hour_start)].append(c)
    return [hourly_rollup(groups[k]) for k in sorted(groups)]


class IntervalAggregator:
    """Streaming counter for time-ordered probes.

    Distinct-id sets are kept only for open intervals; an interval is flushed
    once an event at or beyond its end arrives.
    """

    def __init__(self, length_s: int = 300, rssi_floor: int | None = None):
        self.length_s = length_s
        self.rssi_floor = rssi_floor
        self._open: dict[int, dict[str, set[str]]] = {}

    def add(self, e: ProbeEvent) -> list[IntervalCount]:
        start = e.t - e.t % self.length_s
        done = self._flush_before(start)
        if self.rssi_floor is None or e.rssi >= self.rssi_floor:
            self._open.setdefault(start, defaultdict(set))[e.sensor_id].add(e.anon_id)
        return done

    def _flush_before(self, start: int) -> list[IntervalCount]:
        out = []
        for s in sorted(k for k in self._open if k < start):
            for sensor, ids in sorted(self._open.pop(s).items()):
                out.append(IntervalCount(sensor, Interval(s, self.length_s), len(ids)))
        return out

    def close(self) -> list[IntervalCount]:
        return self._flush_before(2**62)


def aggregate_events(events: Iterable[ProbeEvent], length_s: int = 300,
                     rssi_floor: int | None = None) -> Iterator[IntervalCount]:
    agg = IntervalAggregator(length_s, rssi_floor)
    for e in events:
        yield from agg.add(e)
    yield from agg.close()


def count_table(
    table: ProbeTable,
    length_s: int = 300,
    sensors: Sequence[str] | None = None,
    span: tuple[int, int] | None = None,
    rssi_floor: int | None = None,
) -> list[IntervalCount]:
    """Unique-device counts for every (sensor, interval) in a columnar batch.

    With ``sensors`` and ``span`` given, the output is zero-filled: one record
    per listed sensor for every interval whose start lies in ``[span[0],
    span[1])``. Otherwise only non-empty cells are returned.
    """
    mask = np.ones(len(table), dtype=bool)
    if rssi_floor is not None:
        mask &= table.rssi >= rssi_floor
    t = table.t[mask]
    sidx = table.sensor_idx[mask]
    didx = table.device_idx[mask]
    if span is not None:
        t0 = span[0] - span[0] % length_s
    elif t.size:
        t0 = int(t.min()) - int(t.min()) % length_s
    else:
        t0 = 0
    bucket = (t - t0) // length_s
    n_buckets = int(bucket.max()) + 1 if bucket.size else 0
    if span is not None:
        n_buckets = max(0, -(-(span[1] - t0) // length_s))
        keep = (bucket >= 0) & (bucket < n_buckets)
        bucket, sidx, didx = bucket[keep], sidx[keep], didx[keep]
    groups = sidx * max(n_buckets, 1) + bucket
    keys, counts = kernels.unique_pair_counts(groups, didx)
    found = {}
    for k, c in zip(keys.tolist(), counts.tolist()):
        s, b = divmod(k, max(n_buckets, 1))
        found[(table.sensors[s], b)] = c
    if sensors is None or span is None:
        out = [IntervalCount(s, Interval(t0 + b * length_s, length_s), c) for (s, b), c in found.items()]
        return sorted(out, key=lambda r: (r.interval.start, r.sensor_id))
    out = []
    for b in range(n_buckets):
        iv = Interval(t0 + b * length_s, length_s)
        for s in sorted(sensors):
            out.append(IntervalCount(s, iv, found.get((s, b), 0)))
    return out


def hour_unique(events: Iterable[ProbeEvent], sensor_id: str, hour_start: int) -> int:
    """Distinct devices at a sensor over a whole hour (used by partition checks)."""
    return count_unique(events, sensor_id, Interval(hour_start, 3600)).unique_devices


__all__ = [
    "HourlyCount",
    "IntervalAggregator",
    "IntervalCount",
    "aggregate_events",
    "bucket_of",
    "count_table",
    "count_unique",
    "hour_unique",
    "hourly_rollup",
    "rollup_all",
]
