"""Shared domain types: planar geometry, coverage shapes, time buckets and the
deployment description.

All coordinates are local planar meters (x east, y north). Deployments given in
WGS84 are projected once, at load time, with an equirectangular approximation
around the declared origin.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Union

import numpy as np

from .errors import DeploymentError, UnknownArea, UnknownSensor, ZeroLengthVector

EARTH_RADIUS_M = 6_371_008.8


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))

    def contains(self, p: "Point") -> bool:
        return self.x == p.x and self.y == p.y

    def contains_many(self, xs, ys) -> np.ndarray:
        return (np.asarray(xs) == self.x) & (np.asarray(ys) == self.y)

    def centroid(self) -> "Point":
        return self

    def distance(self, other: "Point") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class Circle:
    center: Point
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "radius", float(self.radius))
        if not self.radius > 0:
            raise ValueError("circle radius must be positive")

    def contains(self, p: Point) -> bool:
        return math.hypot(p.x - self.center.x, p.y - self.center.y) <= self.radius

    def contains_many(self, xs, ys) -> np.ndarray:
        dx = np.asarray(xs, dtype=float) - self.center.x
        dy = np.asarray(ys, dtype=float) - self.center.y
        return dx * dx + dy * dy <= self.radius * self.radius

    def centroid(self) -> Point:
        return self.center


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned rectangle, bounds inclusive."""

    lower: Point
    upper: Point

    def __post_init__(self):
        if not (self.upper.x > self.lower.x and self.upper.y > self.lower.y):
            raise ValueError("rectangle upper corner must be north-east of lower corner")

    @property
    def width(self) -> float:
        return self.upper.x - self.lower.x

    @property
    def height(self) -> float:
        return self.upper.y - self.lower.y

    def contains(self, p: Point) -> bool:
        return self.lower.x <= p.x <= self.upper.x and self.lower.y <= p.y <= self.upper.y

    def contains_many(self, xs, ys) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        return (
            (xs >= self.lower.x) & (xs <= self.upper.x)
            & (ys >= self.lower.y) & (ys <= self.upper.y)
        )

    def centroid(self) -> Point:
        return Point((self.lower.x + self.upper.x) / 2, (self.lower.y + self.upper.y) / 2)


def _segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool:
    def orient(p, q, r):
        v = (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x)
        return (v > 0) - (v < 0)

    def on_segment(p, q, r):
        return min(p.x, r.x) <= q.x <= max(p.x, r.x) and min(p.y, r.y) <= q.y <= max(p.y, r.y)

    o1, o2, o3, o4 = orient(a, b, c), orient(a, b, d), orient(c, d, a), orient(c, d, b)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and on_segment(a, c, b):
        return True
    if o2 == 0 and on_segment(a, d, b):
        return True
    if o3 == 0 and on_segment(c, a, d):
        return True
    if o4 == 0 and on_segment(c, b, d):
        return True
    return False


@dataclass(frozen=True)
class Polygon:
    vertices: tuple[Point, ...]

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(self.vertices))
        n = len(self.vertices)
        if n < 3:
            raise ValueError("polygon needs at least 3 vertices")
        # non-adjacent edges must not touch
        for i in range(n):
            a, b = self.vertices[i], self.vertices[(i + 1) % n]
            if a == b:
                raise ValueError("polygon has a zero-length edge")
            for j in range(i + 2, n):
                if i == 0 and j == n - 1:
                    continue
                c, d = self.vertices[j], self.vertices[(j + 1) % n]
                if _segments_cross(a, b, c, d):
                    raise ValueError("polygon is self-intersecting")

    def contains(self, p: Point) -> bool:
        return bool(self.contains_many([p.x], [p.y])[0])

    def contains_many(self, xs, ys) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        inside = np.zeros(xs.shape, dtype=bool)
        vs = self.vertices
        for i in range(len(vs)):
            a, b = vs[i], vs[i - 1]
            crosses = (a.y > ys) != (b.y > ys)
            with np.errstate(divide="ignore", invalid="ignore"):
                x_at = a.x + (ys - a.y) * (b.x - a.x) / (b.y - a.y)
            inside ^= crosses & (xs < x_at)
        return inside

    def centroid(self) -> Point:
        a = cx = cy = 0.0
        vs = self.vertices
        for i in range(len(vs)):
            p, q = vs[i], vs[(i + 1) % len(vs)]
            cross = p.x * q.y - q.x * p.y
            a += cross
            cx += (p.x + q.x) * cross
            cy += (p.y + q.y) * cross
        a /= 2
        return Point(cx / (6 * a), cy / (6 * a))


Coverage = Union[Point, Circle, Rectangle, Polygon]


def bounding_box(cov: Coverage) -> Rectangle:
    if isinstance(cov, Point):
        raise DeploymentError("a point coverage has no extent")
    if isinstance(cov, Rectangle):
        return cov
    if isinstance(cov, Circle):
        c, r = cov.center, cov.radius
        return Rectangle(Point(c.x - r, c.y - r), Point(c.x + r, c.y + r))
    xs = [v.x for v in cov.vertices]
    ys = [v.y for v in cov.vertices]
    return Rectangle(Point(min(xs), min(ys)), Point(max(xs), max(ys)))


def azimuth(origin: Point, target: Point) -> float:
    """Bearing from ``origin`` to ``target`` in degrees clockwise from north."""
    dx = target.x - origin.x
    dy = target.y - origin.y
    if dx == 0 and dy == 0:
        raise ZeroLengthVector("azimuth undefined for coincident points")
    deg = math.degrees(math.atan2(dx, dy)) % 360.0
    return 0.0 if deg >= 360.0 else deg


@dataclass(frozen=True, order=True)
class Interval:
    """Aligned time bucket ``[start, start + length_s)`` in UTC seconds."""

    start: int
    length_s: int = 300

    def __post_init__(self):
        if self.length_s <= 0 or 3600 % self.length_s:
            raise ValueError(f"interval length {self.length_s} must divide 3600")
        if self.start % self.length_s:
            raise ValueError(f"interval start {self.start} not aligned to {self.length_s}")

    @property
    def end(self) -> int:
        return self.start + self.length_s

    @property
    def hour_start(self) -> int:
        return self.start - self.start % 3600

    @property
    def hour_of_day(self) -> int:
        return (self.start % 86400) // 3600

    def contains(self, t: float) -> bool:
        return self.start <= t < self.end


def bucket_of(t: float, length_s: int = 300) -> Interval:
    if length_s <= 0:
        raise ValueError("length_s must be positive")
    return Interval(int(math.floor(t / length_s)) * length_s, length_s)


class NodeKind(str, enum.Enum):
    WIFI_SNIFFER = "WifiSniffer"
    STEREO_CAMERA = "StereoCamera"
    CHOKE_POINT = "CalibrationChokePoint"


class TrafficClass(str, enum.Enum):
    HEAVY = "Heavy"
    LIGHT = "Light"


class SystemKind(str, enum.Enum):
    CMAS = "cmas"
    CCLS = "ccls"


@dataclass(frozen=True)
class SensorNode:
    id: str
    kind: NodeKind
    position: Point
    coverage: Coverage
    cluster_id: str
    camera_id: str | None = None
    sniffer_id: str | None = None


@dataclass(frozen=True)
class ClusterSpec:
    cluster_id: str
    traffic_class: TrafficClass
    members: tuple[str, ...]
    system: SystemKind = SystemKind.CMAS
    site: Coverage | None = None

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if not self.members:
            raise DeploymentError(f"cluster {self.cluster_id} has no members")


@dataclass(frozen=True)
class Frame:
    """Coordinate frame of a deployment document."""

    kind: str = "local"
    origin_lat: float = 0.0
    origin_lon: float = 0.0

    def project(self, raw: Mapping) -> Point:
        if "x" in raw and "y" in raw:
            return Point(float(raw["x"]), float(raw["y"]))
        if self.kind != "wgs84":
            raise DeploymentError(f"point {dict(raw)} needs x/y in a local frame")
        lat, lon = float(raw["lat"]), float(raw["lon"])
        x = math.radians(lon - self.origin_lon) * EARTH_RADIUS_M * math.cos(math.radians(self.origin_lat))
        y = math.radians(lat - self.origin_lat) * EARTH_RADIUS_M
        return Point(x, y)

    def unproject(self, p: Point) -> dict:
        if self.kind != "wgs84":
            return {"x": p.x, "y": p.y}
        lat = self.origin_lat + math.degrees(p.y / EARTH_RADIUS_M)
        lon = self.origin_lon + math.degrees(
            p.x / (EARTH_RADIUS_M * math.cos(math.radians(self.origin_lat)))
        )
        return {"lat": lat, "lon": lon}


def coverage_from_dict(raw: Mapping, frame: Frame = Frame()) -> Coverage:
    kind = raw.get("type")
    try:
        if kind == "Point":
            return frame.project(raw)
        if kind == "Circle":
            return Circle(frame.project(raw["center"]), float(raw["radius"]))
        if kind == "Rectangle":
            return Rectangle(frame.project(raw["min"]), frame.project(raw["max"]))
        if kind == "Polygon":
            return Polygon(tuple(frame.project(v) for v in raw["vertices"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise DeploymentError(f"bad {kind} coverage: {exc}") from exc
    raise DeploymentError(f"unknown coverage type {kind!r}")


def coverage_to_dict(cov: Coverage, frame: Frame = Frame()) -> dict:
    if isinstance(cov, Point):
        return {"type": "Point", **frame.unproject(cov)}
    if isinstance(cov, Circle):
        return {"type": "Circle", "center": frame.unproject(cov.center), "radius": cov.radius}
    if isinstance(cov, Rectangle):
        return {"type": "Rectangle", "min": frame.unproject(cov.lower), "max": frame.unproject(cov.upper)}
    if isinstance(cov, Polygon):
        return {"type": "Polygon", "vertices": [frame.unproject(v) for v in cov.vertices]}
    raise TypeError(f"not a coverage: {cov!r}")


@dataclass(frozen=True)
class Deployment:
    nodes: Mapping[str, SensorNode]
    clusters: Mapping[str, ClusterSpec]
    frame: Frame = field(default_factory=Frame)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        owner: dict[str, str] = {}
        for c in self.clusters.values():
            for m in c.members:
                if m not in self.nodes:
                    raise DeploymentError(f"cluster {c.cluster_id} lists unknown node {m}")
                if m in owner:
                    raise DeploymentError(f"node {m} in clusters {owner[m]} and {c.cluster_id}")
                owner[m] = c.cluster_id
        for node in self.nodes.values():
            if owner.get(node.id) != node.cluster_id:
                raise DeploymentError(f"node {node.id} not a member of cluster {node.cluster_id}")
            if node.kind is NodeKind.CHOKE_POINT:
                cam = self.nodes.get(node.camera_id or "")
                snf = self.nodes.get(node.sniffer_id or "")
                if cam is None or cam.kind is not NodeKind.STEREO_CAMERA:
                    raise DeploymentError(f"choke point {node.id} needs a StereoCamera")
                if snf is None or snf.kind is not NodeKind.WIFI_SNIFFER:
                    raise DeploymentError(f"choke point {node.id} needs a WifiSniffer")
        for c in self.clusters.values():
            if c.system is SystemKind.CMAS and not self.choke_points(c.cluster_id):
                raise DeploymentError(f"CMAS cluster {c.cluster_id} has no calibration choke point")
            if c.system is SystemKind.CCLS and c.site is None:
                raise DeploymentError(f"CCLS cluster {c.cluster_id} needs a site coverage")

    def node(self, node_id: str) -> SensorNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownSensor(node_id) from None

    def cluster_of(self, node_id: str) -> str:
        return self.node(node_id).cluster_id

    def members(self, cluster_id: str, kind: NodeKind | None = None) -> list[SensorNode]:
        nodes = [self.nodes[m] for m in self.clusters[cluster_id].members]
        if kind is not None:
            nodes = [n for n in nodes if n.kind is kind]
        return sorted(nodes, key=lambda n: n.id)

    def sniffers(self, cluster_id: str | None = None) -> list[SensorNode]:
        if cluster_id is None:
            return sorted(
                (n for n in self.nodes.values() if n.kind is NodeKind.WIFI_SNIFFER),
                key=lambda n: n.id,
            )
        return self.members(cluster_id, NodeKind.WIFI_SNIFFER)

    def choke_points(self, cluster_id: str) -> list[SensorNode]:
        return self.members(cluster_id, NodeKind.CHOKE_POINT)

    def choke_for_camera(self, camera_id: str) -> SensorNode:
        node = self.node(camera_id)
        if node.kind is NodeKind.CHOKE_POINT:
            return node
        for cp in self.nodes.values():
            if cp.kind is NodeKind.CHOKE_POINT and cp.camera_id == camera_id:
                return cp
        raise UnknownSensor(f"camera {camera_id} is not part of a choke point")

    def area(self, area_id: str) -> tuple[Coverage, Point]:
        """Coverage and platform location of a sensing area (node or cluster)."""
        if area_id in self.nodes:
            n = self.nodes[area_id]
            return n.coverage, n.position
        if area_id in self.clusters:
            c = self.clusters[area_id]
            if c.site is None:
                raise UnknownArea(f"cluster {area_id} has no site coverage")
            return c.site, c.site.centroid()
        raise UnknownArea(area_id)

    def subset(self, cluster_ids: Iterable[str]) -> "Deployment":
        keep = set(cluster_ids)
        clusters = {k: v for k, v in self.clusters.items() if k in keep}
        nodes = {k: v for k, v in self.nodes.items() if v.cluster_id in keep}
        return Deployment(nodes, clusters, self.frame)

    def to_dict(self) -> dict:
        f = self.frame
        frame = {"type": f.kind}
        if f.kind == "wgs84":
            frame["origin"] = {"lat": f.origin_lat, "lon": f.origin_lon}
        nodes = []
        for n in sorted(self.nodes.values(), key=lambda n: n.id):
            d = {
                "id": n.id,
                "kind": n.kind.value,
                "position": f.unproject(n.position),
                "coverage": coverage_to_dict(n.coverage, f),
                "cluster": n.cluster_id,
            }
            if n.camera_id is not None:
                d["camera"] = n.camera_id
            if n.sniffer_id is not None:
                d["sniffer"] = n.sniffer_id
            nodes.append(d)
        clusters = []
        for c in sorted(self.clusters.values(), key=lambda c: c.cluster_id):
            d = {
                "id": c.cluster_id,
                "traffic": c.traffic_class.value,
                "system": c.system.value,
                "members": list(c.members),
            }
            if c.site is not None:
                d["site"] = coverage_to_dict(c.site, f)
            clusters.append(d)
        return {"frame": frame, "nodes": nodes, "clusters": clusters}

    @classmethod
    def from_dict(cls, raw: Mapping) -> "Deployment":
        fr = raw.get("frame", {"type": "local"})
        if fr.get("type", "local") == "wgs84":
            frame = Frame("wgs84", float(fr["origin"]["lat"]), float(fr["origin"]["lon"]))
        else:
            frame = Frame()
        nodes: dict[str, SensorNode] = {}
        try:
            for n in raw["nodes"]:
                if n["id"] in nodes:
                    raise DeploymentError(f"duplicate node id {n['id']}")
                pos = frame.project(n["position"])
                cov = coverage_from_dict(n["coverage"], frame) if "coverage" in n else pos
                nodes[n["id"]] = SensorNode(
                    id=n["id"],
                    kind=NodeKind(n["kind"]),
                    position=pos,
                    coverage=cov,
                    cluster_id=n["cluster"],
                    camera_id=n.get("camera"),
                    sniffer_id=n.get("sniffer"),
                )
            clusters: dict[str, ClusterSpec] = {}
            for c in raw["clusters"]:
                if c["id"] in clusters:
                    raise DeploymentError(f"duplicate cluster id {c['id']}")
                clusters[c["id"]] = ClusterSpec(
                    cluster_id=c["id"],
                    traffic_class=TrafficClass(c.get("traffic", "Heavy")),
                    members=tuple(c["members"]),
                    system=SystemKind(c.get("system", "cmas")),
                    site=coverage_from_dict(c["site"], frame) if "site" in c else None,
                )
        except (KeyError, ValueError) as exc:
            if isinstance(exc, DeploymentError):
                raise
            raise DeploymentError(f"malformed deployment: {exc!r}") from exc
        return cls(nodes, clusters, frame)


def load_deployment(path) -> Deployment:
    with open(path, encoding="utf-8") as fh:
        return Deployment.from_dict(json.load(fh))


def dump_deployment(dep: Deployment, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dep.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
