"""People flows between sensing areas and stay-duration statistics."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .ingest import ProbeEvent
from .model import Interval, Point, azimuth, bucket_of

DEFAULT_MAX_GAP_S = 300
DEFAULT_GAP_TOLERANCE_S = 120
DEFAULT_WAITING_THRESHOLD_S = 300


@dataclass(frozen=True)
class FlowRecord:
    from_sensor: str
    to_sensor: str
    interval: Interval
    devices: int
    direction_azimuth: float

    def __post_init__(self):
        if self.from_sensor == self.to_sensor:
            raise ValueError("flow endpoints must differ")
        if self.devices < 0:
            raise ValueError("devices must be non-negative")


@dataclass(frozen=True)
class StayStats:
    area_id: str
    interval: Interval
    mean_dwell_s: float
    waiting_devices: int


@dataclass(frozen=True)
class Visit:
    anon_id: str
    area_id: str
    first: int
    last: int

    @property
    def dwell(self) -> int:
        return self.last - self.first


def _by_device(events: Iterable[ProbeEvent]) -> dict[str, list[ProbeEvent]]:
    out: dict[str, list[ProbeEvent]] = defaultdict(list)
    for e in events:
        out[e.anon_id].append(e)
    for evs in out.values():
        evs.sort(key=lambda e: e.t)
    return out


def resolve_simultaneous(events: Sequence[ProbeEvent]) -> list[ProbeEvent]:
    """Keep one sighting per second: strongest RSSI, then lowest sensor id."""
    best: dict[int, ProbeEvent] = {}
    for e in events:
        cur = best.get(e.t)
        if cur is None or (e.rssi, cur.sensor_id) > (cur.rssi, e.sensor_id):
            best[e.t] = e
    return [best[t] for t in sorted(best)]


def device_transitions(events: Sequence[ProbeEvent], max_gap_s: float) -> list[tuple[str, str, int]]:
    """(from, to, arrival time) for one device's time-ordered sightings."""
    seq = resolve_simultaneous(events)
    out = []
    for a, b in zip(seq, seq[1:]):
        if a.sensor_id != b.sensor_id and b.t - a.t <= max_gap_s:
            out.append((a.sensor_id, b.sensor_id, b.t))
    return out


def infer_flows(
    events: Iterable[ProbeEvent],
    positions: Mapping[str, Point],
    max_gap_s: float = DEFAULT_MAX_GAP_S,
    interval_s: int = 300,
) -> list[FlowRecord]:
    """Count device transitions between sensors, per arrival interval.

    A transition is a pair of consecutive sightings of the same device at two
    different sensors no more than ``max_gap_s`` apart.
    """
    if max_gap_s <= 0:
        raise ValueError("max_gap_s must be positive")
    cells: dict[tuple[str, str, int], int] = defaultdict(int)
    for evs in _by_device(events).values():
        for src, dst, t in device_transitions(evs, max_gap_s):
            cells[(src, dst, bucket_of(t, interval_s).start)] += 1
    out = []
    for (src, dst, start), n in sorted(cells.items(), key=lambda kv: (kv[0][2], kv[0][0], kv[0][1])):
        out.append(FlowRecord(src, dst, Interval(start, interval_s), n, azimuth(positions[src], positions[dst])))
    return out


def find_visits(events: Iterable[ProbeEvent], area_id: str, gap_tolerance_s: float = DEFAULT_GAP_TOLERANCE_S) -> list[Visit]:
    """Split each device's sightings in one area into gap-separated visits."""
    visits = []
    for dev, evs in sorted(_by_device(e for e in events if e.sensor_id == area_id).items()):
        first = last = evs[0].t
        for e in evs[1:]:
            if e.t - last > gap_tolerance_s:
                visits.append(Visit(dev, area_id, first, last))
                first = e.t
            last = e.t
        visits.append(Visit(dev, area_id, first, last))
    return visits


def stats_from_visits(visits: Iterable[Visit], area_id: str, interval: Interval,
                      waiting_threshold_s: float = DEFAULT_WAITING_THRESHOLD_S) -> StayStats:
    hit = [v for v in visits if v.first < interval.end and v.last >= interval.start]
    if not hit:
        return StayStats(area_id, interval, 0.0, 0)
    mean = sum(v.dwell for v in hit) / len(hit)
    waiting = len({v.anon_id for v in hit if v.dwell >= waiting_threshold_s})
    return StayStats(area_id, interval, mean, waiting)


def stay_stats(
    events: Iterable[ProbeEvent],
    area_id: str,
    interval: Interval,
    gap_tolerance_s: float = DEFAULT_GAP_TOLERANCE_S,
    waiting_threshold_s: float = DEFAULT_WAITING_THRESHOLD_S,
) -> StayStats:
    """Mean dwell of visits overlapping ``interval`` and devices waiting long.

    A visit is a maximal run of one device's sightings with gaps of at most
    ``gap_tolerance_s``; its dwell is last minus first sighting. A device is
    waiting when one of its overlapping visits lasts ``waiting_threshold_s``.
    """
    if gap_tolerance_s <= 0 or waiting_threshold_s <= 0:
        raise ValueError("thresholds must be positive")
    visits = find_visits(events, area_id, gap_tolerance_s)
    return stats_from_visits(visits, area_id, interval, waiting_threshold_s)


def stay_series(
    events: Iterable[ProbeEvent],
    area_ids: Sequence[str],
    intervals: Sequence[Interval],
    gap_tolerance_s: float = DEFAULT_GAP_TOLERANCE_S,
    waiting_threshold_s: float = DEFAULT_WAITING_THRESHOLD_S,
) -> list[StayStats]:
    """``stay_stats`` for every area and interval, visits computed once."""
    if not intervals:
        return []
    length = intervals[0].length_s
    wanted = {iv.start for iv in intervals}
    per_area: dict[str, list[ProbeEvent]] = defaultdict(list)
    for e in events:
        per_area[e.sensor_id].append(e)
    out = []
    for area in sorted(area_ids):
        dwell_sum: dict[int, float] = defaultdict(float)
        n_visits: dict[int, int] = defaultdict(int)
        waiting: dict[int, set[str]] = defaultdict(set)
        for v in find_visits(per_area.get(area, ()), area, gap_tolerance_s):
            for start in range(v.first - v.first % length, v.last + 1, length):
                if start not in wanted:
                    continue
                dwell_sum[start] += v.dwell
                n_visits[start] += 1
                if v.dwell >= waiting_threshold_s:
                    waiting[start].add(v.anon_id)
        for iv in intervals:
            n = n_visits.get(iv.start, 0)
            mean = dwell_sum[iv.start] / n if n else 0.0
            out.append(StayStats(area, iv, mean, len(waiting.get(iv.start, ()))))
    return out
