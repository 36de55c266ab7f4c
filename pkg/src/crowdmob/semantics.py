"""Ontology-annotated observations for analytics results.

An observation carries its sensing-device class, quantity kind and unit using
M3-lite names, plus the coverage and platform location of the sensor. The
class/kind/unit combination is checked when the object is built, so an
invalid observation cannot exist. See ``docs/observation_schema.md`` for the
document layout and its mapping to RDF triples.
"""

from __future__ import annotations

import calendar
import enum
import json
import math
import time
from dataclasses import dataclass
from typing import Any, Mapping

from .analytics import FlowRecord, StayStats
from .calibrate import CrowdEstimate
from .errors import DeploymentError, SchemaError, UnknownArea
from .model import Circle, Coverage, Deployment, Point, Polygon, Rectangle

PREFIX = "m3-lite:"


class SensorClass(str, enum.Enum):
    PEOPLE_COUNT = "PeopleCountSensor"
    PEOPLE_FLOW_COUNT = "PeopleFlowCountSensor"
    STAYING_PEOPLE_COUNT = "StayingPeopleCountSensor"
    PEOPLE_STAY_DURATION = "PeopleStayDurationSensor"


class QuantityKind(str, enum.Enum):
    COUNT_PEOPLE = "CountPeople"
    COUNT_PEOPLE_MOVING = "CountPeopleMoving"
    COUNT_PEOPLE_STAYING = "CountPeopleStaying"
    PEOPLE_STAY_DURATION_AVERAGE = "PeopleStayDurationAverage"


class Unit(str, enum.Enum):
    ITEM = "Item"
    SECOND_TIME = "SecondTime"


COMPATIBILITY: dict[SensorClass, tuple[QuantityKind, Unit]] = {
    SensorClass.PEOPLE_COUNT: (QuantityKind.COUNT_PEOPLE, Unit.ITEM),
    SensorClass.PEOPLE_FLOW_COUNT: (QuantityKind.COUNT_PEOPLE_MOVING, Unit.ITEM),
    SensorClass.STAYING_PEOPLE_COUNT: (QuantityKind.COUNT_PEOPLE_STAYING, Unit.ITEM),
    SensorClass.PEOPLE_STAY_DURATION: (QuantityKind.PEOPLE_STAY_DURATION_AVERAGE, Unit.SECOND_TIME),
}


@dataclass(frozen=True)
class Direction:
    """Either a geodetic azimuth in degrees or a free-text heading label."""

    azimuth: float | None = None
    heading: str | None = None

    def __post_init__(self):
        if (self.azimuth is None) == (self.heading is None):
            raise ValueError("direction needs exactly one of azimuth or heading")
        if self.azimuth is not None:
            az = float(self.azimuth)
            if not (math.isfinite(az) and 0 <= az < 360):
                raise ValueError(f"azimuth {az} outside [0, 360)")
            object.__setattr__(self, "azimuth", az)


@dataclass(frozen=True)
class SemanticObservation:
    device_id: str
    sensor_class: SensorClass
    quantity_kind: QuantityKind
    unit: Unit
    value: float
    instant: int
    coverage: Coverage
    platform_location: Point
    direction: Direction | None = None

    def __post_init__(self):
        sc = SensorClass(self.sensor_class)
        qk = QuantityKind(self.quantity_kind)
        un = Unit(self.unit)
        object.__setattr__(self, "sensor_class", sc)
        object.__setattr__(self, "quantity_kind", qk)
        object.__setattr__(self, "unit", un)
        want = COMPATIBILITY[sc]
        if (qk, un) != want:
            raise ValueError(f"{sc.value} requires {want[0].value} in {want[1].value}, got {qk.value} in {un.value}")
        if sc is SensorClass.PEOPLE_FLOW_COUNT and self.direction is None:
            raise ValueError("PeopleFlowCountSensor observations need a direction")
        v = float(self.value)
        if not (math.isfinite(v) and v >= 0):
            raise ValueError(f"value {self.value} must be a non-negative real")
        object.__setattr__(self, "value", v)
        if isinstance(self.instant, bool) or not isinstance(self.instant, int):
            raise ValueError("instant must be whole UTC seconds")


def observation(device_id: str, sensor_class: SensorClass, value: float, instant: int,
                coverage: Coverage, platform_location: Point,
                direction: Direction | None = None) -> SemanticObservation:
    kind, unit = COMPATIBILITY[SensorClass(sensor_class)]
    return SemanticObservation(device_id, sensor_class, kind, unit, value, instant,
                               coverage, platform_location, direction)


def format_instant(t: int) -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def parse_instant(s: str) -> int:
    return calendar.timegm(time.strptime(s, "%Y-%m-%dT%H:%M:%SZ"))


def _point_doc(p: Point) -> dict:
    return {"@type": "geo:Point", "x": p.x, "y": p.y}


def _coverage_doc(c: Coverage) -> dict:
    if isinstance(c, Point):
        return _point_doc(c)
    if isinstance(c, Circle):
        return {"@type": "iot-lite:Circle", "center": _point_doc(c.center), "radius": c.radius}
    if isinstance(c, Rectangle):
        return {"@type": "iot-lite:Rectangle", "lower": _point_doc(c.lower), "upper": _point_doc(c.upper)}
    if isinstance(c, Polygon):
        return {"@type": "iot-lite:Polygon", "vertices": [_point_doc(v) for v in c.vertices]}
    raise TypeError(f"not a coverage: {c!r}")


def encode_dict(o: SemanticObservation) -> dict:
    doc: dict[str, Any] = {
        "@type": "ssn:Observation",
        "sensingDevice": o.device_id,
        "sensorClass": PREFIX + o.sensor_class.value,
        "quantityKind": PREFIX + o.quantity_kind.value,
        "unit": PREFIX + o.unit.value,
        "value": o.value,
        "instant": format_instant(o.instant),
        "coverage": _coverage_doc(o.coverage),
        "platformLocation": _point_doc(o.platform_location),
    }
    if o.direction is not None:
        if o.direction.azimuth is not None:
            doc["direction"] = {"@type": PREFIX + "DirectionAzimuth", "value": o.direction.azimuth}
        else:
            doc["direction"] = {"@type": PREFIX + "DirectionHeading", "value": o.direction.heading}
    return doc


def encode(o: SemanticObservation) -> str:
    """Canonical one-line JSON document (sorted keys, no spaces)."""
    return json.dumps(encode_dict(o), sort_keys=True, separators=(",", ":"))


def _get(doc: Mapping, key: str, path: str):
    if not isinstance(doc, Mapping):
        raise SchemaError(path or "$", "expected an object")
    if key not in doc:
        raise SchemaError(f"{path}.{key}" if path else key, "missing")
    return doc[key]


def _num(doc: Mapping, key: str, path: str) -> float:
    v = _get(doc, key, path)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError(f"{path}.{key}" if path else key, f"expected a number, got {v!r}")
    return float(v)


def _decode_point(doc: Mapping, path: str) -> Point:
    if _get(doc, "@type", path) != "geo:Point":
        raise SchemaError(f"{path}.@type", "expected geo:Point")
    return Point(_num(doc, "x", path), _num(doc, "y", path))


def _decode_coverage(doc: Mapping, path: str) -> Coverage:
    kind = _get(doc, "@type", path)
    try:
        if kind == "geo:Point":
            return _decode_point(doc, path)
        if kind == "iot-lite:Circle":
            return Circle(_decode_point(_get(doc, "center", path), path + ".center"), _num(doc, "radius", path))
        if kind == "iot-lite:Rectangle":
            return Rectangle(_decode_point(_get(doc, "lower", path), path + ".lower"),
                             _decode_point(_get(doc, "upper", path), path + ".upper"))
        if kind == "iot-lite:Polygon":
            verts = _get(doc, "vertices", path)
            if not isinstance(verts, list):
                raise SchemaError(path + ".vertices", "expected a list")
            return Polygon(tuple(_decode_point(v, f"{path}.vertices[{i}]") for i, v in enumerate(verts)))
    except ValueError as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(path, str(exc)) from exc
    raise SchemaError(path + ".@type", f"unknown coverage type {kind!r}")


def _enum(doc: Mapping, key: str, enum_cls):
    raw = _get(doc, key, "")
    if not isinstance(raw, str) or not raw.startswith(PREFIX):
        raise SchemaError(key, f"expected an {PREFIX} name, got {raw!r}")
    try:
        return enum_cls(raw[len(PREFIX):])
    except ValueError:
        raise SchemaError(key, f"unknown name {raw!r}") from None


def decode_dict(doc: Mapping) -> SemanticObservation:
    if not isinstance(doc, Mapping):
        raise SchemaError("$", "expected an object")
    if _get(doc, "@type", "") != "ssn:Observation":
        raise SchemaError("@type", "expected ssn:Observation")
    device = _get(doc, "sensingDevice", "")
    if not isinstance(device, str) or not device:
        raise SchemaError("sensingDevice", "expected a non-empty string")
    sc = _enum(doc, "sensorClass", SensorClass)
    qk = _enum(doc, "quantityKind", QuantityKind)
    un = _enum(doc, "unit", Unit)
    if (qk, un) != COMPATIBILITY[sc]:
        bad = "quantityKind" if qk != COMPATIBILITY[sc][0] else "unit"
        raise SchemaError(bad, f"{qk.value}/{un.value} not allowed for {sc.value}")
    value = _num(doc, "value", "")
    raw_instant = _get(doc, "instant", "")
    try:
        instant = parse_instant(raw_instant)
    except (TypeError, ValueError):
        raise SchemaError("instant", f"expected YYYY-MM-DDTHH:MM:SSZ, got {raw_instant!r}") from None
    coverage = _decode_coverage(_get(doc, "coverage", ""), "coverage")
    location = _decode_point(_get(doc, "platformLocation", ""), "platformLocation")
    direction = None
    if "direction" in doc:
        d = doc["direction"]
        dtype = _get(d, "@type", "direction")
        if dtype == PREFIX + "DirectionAzimuth":
            try:
                direction = Direction(azimuth=_num(d, "value", "direction"))
            except ValueError as exc:
                if isinstance(exc, SchemaError):
                    raise
                raise SchemaError("direction.value", str(exc)) from None
        elif dtype == PREFIX + "DirectionHeading":
            label = _get(d, "value", "direction")
            if not isinstance(label, str):
                raise SchemaError("direction.value", "heading must be a string")
            direction = Direction(heading=label)
        else:
            raise SchemaError("direction.@type", f"unknown direction type {dtype!r}")
    try:
        return SemanticObservation(device, sc, qk, un, value, instant, coverage, location, direction)
    except ValueError as exc:
        path = "direction" if "direction" in str(exc) else "value"
        raise SchemaError(path, str(exc)) from None


def decode(document: str | Mapping) -> SemanticObservation:
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except ValueError as exc:
            raise SchemaError("$", f"not JSON: {exc}") from None
    return decode_dict(document)


def _resolve(area_id: str, deployment: Deployment) -> tuple[Coverage, Point]:
    try:
        return deployment.area(area_id)
    except DeploymentError as exc:
        raise UnknownArea(area_id) from exc


def annotate_estimate(e: CrowdEstimate, deployment: Deployment, staying: bool = False) -> SemanticObservation:
    cov, loc = _resolve(e.area_id, deployment)
    if staying:
        return observation(f"{e.area_id}#staying", SensorClass.STAYING_PEOPLE_COUNT,
                           e.people, e.interval.start, cov, loc)
    return observation(f"{e.area_id}#count", SensorClass.PEOPLE_COUNT, e.people, e.interval.start, cov, loc)


def annotate_flow(f: FlowRecord, deployment: Deployment) -> SemanticObservation:
    cov, loc = _resolve(f.from_sensor, deployment)
    _resolve(f.to_sensor, deployment)
    return observation(f"{f.from_sensor}#flow:{f.to_sensor}", SensorClass.PEOPLE_FLOW_COUNT,
                       f.devices, f.interval.start, cov, loc, Direction(azimuth=f.direction_azimuth))


def annotate_stay(s: StayStats, deployment: Deployment) -> tuple[SemanticObservation, SemanticObservation]:
    """Average stay duration plus the count of waiting devices."""
    cov, loc = _resolve(s.area_id, deployment)
    duration = observation(f"{s.area_id}#stay", SensorClass.PEOPLE_STAY_DURATION,
                           s.mean_dwell_s, s.interval.start, cov, loc)
    waiting = observation(f"{s.area_id}#staying", SensorClass.STAYING_PEOPLE_COUNT,
                          s.waiting_devices, s.interval.start, cov, loc)
    return duration, waiting
