"""JSON-lines form of analytics records.

Every record carries a ``type`` tag so mixed streams can be read back (the
``annotate`` verb relies on this).
"""

from __future__ import annotations

import json
from typing import Iterable, TextIO

from .aggregate import HourlyCount, IntervalCount
from .analytics import FlowRecord, StayStats
from .calibrate import CalibrationRatio, CrowdEstimate, Method
from .errors import ParseError
from .locate import PositionFix, PresenceVerdict
from .model import Interval, Point


def to_record(obj) -> dict:
    if isinstance(obj, IntervalCount):
        return {"type": "interval_count", "sensor": obj.sensor_id, "start": obj.interval.start,
                "len": obj.interval.length_s, "unique": obj.unique_devices}
    if isinstance(obj, HourlyCount):
        return {"type": "hourly_count", "sensor": obj.sensor_id, "hour": obj.hour_start,
                "mean": obj.mean_unique, "present": obj.intervals_present}
    if isinstance(obj, CalibrationRatio):
        return {"type": "ratio", "choke": obj.choke_point_id, "start": obj.interval.start,
                "len": obj.interval.length_s, "ratio": obj.ratio}
    if isinstance(obj, CrowdEstimate):
        return {"type": "estimate", "area": obj.area_id, "start": obj.interval.start,
                "len": obj.interval.length_s, "people": obj.people, "method": obj.method.value}
    if isinstance(obj, FlowRecord):
        return {"type": "flow", "from": obj.from_sensor, "to": obj.to_sensor,
                "start": obj.interval.start, "len": obj.interval.length_s,
                "devices": obj.devices, "azimuth": obj.direction_azimuth}
    if isinstance(obj, StayStats):
        return {"type": "stay", "area": obj.area_id, "start": obj.interval.start,
                "len": obj.interval.length_s, "mean_dwell_s": obj.mean_dwell_s,
                "waiting": obj.waiting_devices}
    if isinstance(obj, PresenceVerdict):
        return {"type": "presence", "id": obj.anon_id, "start": obj.epoch.start,
                "len": obj.epoch.length_s, "inside": obj.inside, "support": obj.supporting_nodes}
    if isinstance(obj, PositionFix):
        return {"type": "fix", "id": obj.anon_id, "t": obj.t, "x": obj.point.x,
                "y": obj.point.y, "nodes": obj.n_nodes_used}
    raise TypeError(f"no record form for {type(obj).__name__}")


def from_record(rec: dict):
    try:
        kind = rec["type"]
        if kind == "interval_count":
            return IntervalCount(rec["sensor"], Interval(rec["start"], rec["len"]), rec["unique"])
        if kind == "hourly_count":
            return HourlyCount(rec["sensor"], rec["hour"], float(rec["mean"]), rec["present"])
        if kind == "ratio":
            return CalibrationRatio(rec["choke"], Interval(rec["start"], rec["len"]), float(rec["ratio"]))
        if kind == "estimate":
            return CrowdEstimate(rec["area"], Interval(rec["start"], rec["len"]),
                                 float(rec["people"]), Method(rec["method"]))
        if kind == "flow":
            return FlowRecord(rec["from"], rec["to"], Interval(rec["start"], rec["len"]),
                              rec["devices"], float(rec["azimuth"]))
        if kind == "stay":
            return StayStats(rec["area"], Interval(rec["start"], rec["len"]),
                             float(rec["mean_dwell_s"]), rec["waiting"])
        if kind == "presence":
            return PresenceVerdict(rec["id"], Interval(rec["start"], rec["len"]),
                                   bool(rec["inside"]), rec["support"])
        if kind == "fix":
            return PositionFix(rec["id"], float(rec["t"]), Point(float(rec["x"]), float(rec["y"])), rec["nodes"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed {rec.get('type')} record: {exc}") from exc
    raise ParseError(f"unknown record type {kind!r}")


def dumps(obj) -> str:
    return json.dumps(to_record(obj), sort_keys=True, separators=(",", ":"))


def loads(line: str):
    try:
        rec = json.loads(line)
    except ValueError as exc:
        raise ParseError(f"not a JSON record: {line.strip()[:80]!r}") from exc
    if not isinstance(rec, dict):
        raise ParseError("record must be a JSON object")
    return from_record(rec)


def write_records(fh: TextIO, objs: Iterable) -> int:
    n = 0
    for o in objs:
        fh.write(dumps(o) + "\n")
        n += 1
    return n
