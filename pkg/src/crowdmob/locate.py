"""Indoor presence, RSSI positioning and occupancy heatmaps.

Distances come from the log-distance path-loss model
``d = 10 ** ((p0 - rssi) / (10 n))`` and a fix is the centroid of the detecting
nodes weighted by ``1 / d ** g``.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from . import kernels
from .errors import NoSightings
from .ingest import ProbeEvent
from .model import Deployment, Interval, Point, Rectangle, bucket_of

DEFAULT_MIN_NODES = 6
DEFAULT_RSSI_MIN = -75
DEFAULT_EPOCH_S = 60
DEFAULT_WINDOW_S = 10


@dataclass(frozen=True)
class PathLossParams:
    p0: float = -40.0
    n: float = 2.0
    g: float = 1.0

    def __post_init__(self):
        if not (self.n > 0 and self.g > 0):
            raise ValueError("path-loss exponent and weight exponent must be positive")


@dataclass(frozen=True)
class Sighting:
    node_id: str
    position: Point
    rssi: float
    t: float
    anon_id: str


@dataclass(frozen=True)
class PresenceVerdict:
    anon_id: str
    epoch: Interval
    inside: bool
    supporting_nodes: int


@dataclass(frozen=True)
class PositionFix:
    anon_id: str
    t: float
    point: Point
    n_nodes_used: int


@dataclass(frozen=True)
class GridSpec:
    origin: Point
    cell_size_m: float
    rows: int
    cols: int

    def __post_init__(self):
        if not self.cell_size_m > 0:
            raise ValueError("cell_size_m must be positive")
        if self.rows <= 0 or self.cols <= 0:
            raise ValueError("grid needs at least one row and column")

    @classmethod
    def covering(cls, rect: Rectangle, cell_size_m: float) -> "GridSpec":
        return cls(rect.lower, cell_size_m,
                   max(1, math.ceil(rect.height / cell_size_m)),
                   max(1, math.ceil(rect.width / cell_size_m)))


@dataclass(frozen=True)
class HeatGrid:
    spec: GridSpec
    counts: np.ndarray
    overflow: int = 0

    @property
    def total(self) -> int:
        return int(self.counts.sum()) + self.overflow

    def merge(self, other: "HeatGrid") -> "HeatGrid":
        if other.spec != self.spec:
            raise ValueError("cannot merge grids with different specs")
        return HeatGrid(self.spec, self.counts + other.counts, self.overflow + other.overflow)

    def to_csv(self) -> str:
        # north row first, as the grid would be drawn
        return "".join(",".join(str(int(v)) for v in row) + "\n" for row in self.counts[::-1])

    def to_pgm(self) -> bytes:
        peak = int(self.counts.max()) if self.counts.size else 0
        scaled = np.zeros_like(self.counts) if peak == 0 else (self.counts * 255) // peak
        body = "\n".join(" ".join(str(int(v)) for v in row) for row in scaled[::-1])
        return f"P2\n{self.spec.cols} {self.spec.rows}\n255\n{body}\n".encode("ascii")

    def to_svg(self, px: int = 20) -> str:
        s = self.spec
        peak = int(self.counts.max()) if self.counts.size else 0
        parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{s.cols * px}" height="{s.rows * px}">'
        ]
        for r in range(s.rows):
            for c in range(s.cols):
                v = int(self.counts[r, c])
                shade = 0 if peak == 0 else round(255 * v / peak)
                y = (s.rows - 1 - r) * px
                parts.append(
                    f'<rect x="{c * px}" y="{y}" width="{px}" height="{px}" '
                    f'fill="rgb(255,{255 - shade},{255 - shade})"><title>{v}</title></rect>'
                )
        parts.append("</svg>\n")
        return "\n".join(parts)


def detect_presence(
    anon_id: str,
    epoch: Interval,
    sightings: Iterable[Sighting],
    min_nodes: int = DEFAULT_MIN_NODES,
    rssi_min: float = DEFAULT_RSSI_MIN,
) -> PresenceVerdict:
    """Inside when at least ``min_nodes`` distinct nodes hear the device at
    ``rssi_min`` or stronger (strongest reading per node in the epoch)."""
    best: dict[str, float] = {}
    for s in sightings:
        if s.anon_id == anon_id and epoch.contains(s.t):
            best[s.node_id] = max(best.get(s.node_id, -math.inf), s.rssi)
    support = sum(1 for r in best.values() if r >= rssi_min)
    return PresenceVerdict(anon_id, epoch, support >= min_nodes, support)


def rssi_to_distance(rssi: float, params: PathLossParams = PathLossParams()) -> float:
    return 10.0 ** ((params.p0 - rssi) / (10.0 * params.n))


def weighted_centroid(sightings: Sequence[Sighting], params: PathLossParams = PathLossParams()) -> PositionFix:
    if not sightings:
        raise NoSightings("no sightings to locate")
    best: dict[str, Sighting] = {}
    for s in sightings:
        cur = best.get(s.node_id)
        if cur is None or s.rssi > cur.rssi:
            best[s.node_id] = s
    t = sum(s.t for s in sightings) / len(sightings)
    if len(best) == 1:
        (only,) = best.values()
        return PositionFix(sightings[0].anon_id, t, only.position, 1)
    sw = sx = sy = 0.0
    for node in sorted(best):
        s = best[node]
        w = rssi_to_distance(s.rssi, params) ** -params.g
        sw += w
        sx += w * s.position.x
        sy += w * s.position.y
    return PositionFix(sightings[0].anon_id, t, Point(sx / sw, sy / sw), len(best))


def sightings_from_probes(events: Iterable[ProbeEvent], deployment: Deployment) -> list[Sighting]:
    pos = {n.id: n.position for n in deployment.nodes.values()}
    return [Sighting(e.sensor_id, pos[e.sensor_id], e.rssi, e.t, e.anon_id) for e in events]


def _grouped(sightings: Sequence[Sighting], length_s: int):
    groups: dict[tuple[str, int], list[Sighting]] = defaultdict(list)
    for s in sightings:
        groups[(s.anon_id, bucket_of(s.t, length_s).start)].append(s)
    return sorted(groups.items(), key=lambda kv: (kv[0][1], kv[0][0]))


def presence_all(
    sightings: Sequence[Sighting],
    epoch_s: int = DEFAULT_EPOCH_S,
    min_nodes: int = DEFAULT_MIN_NODES,
    rssi_min: float = DEFAULT_RSSI_MIN,
) -> list[PresenceVerdict]:
    """Verdicts for every (device, epoch) with at least one sighting."""
    out = []
    for (dev, start), group in _grouped(sightings, epoch_s):
        out.append(detect_presence(dev, Interval(start, epoch_s), group, min_nodes, rssi_min))
    return out


def locate_all(
    sightings: Sequence[Sighting],
    params: PathLossParams = PathLossParams(),
    window_s: int = DEFAULT_WINDOW_S,
) -> list[PositionFix]:
    """One fix per device per aligned ``window_s`` window, via the batch kernel."""
    groups = _grouped(sightings, window_s)
    if not groups:
        return []
    node_ids = sorted({s.node_id for s in sightings})
    index = {n: i for i, n in enumerate(node_ids)}
    positions = {s.node_id: s.position for s in sightings}
    node_x = np.array([positions[n].x for n in node_ids])
    node_y = np.array([positions[n].y for n in node_ids])
    starts = [0]
    nodes, rssi, tmean = [], [], []
    for _, group in groups:
        nodes.extend(index[s.node_id] for s in group)
        rssi.extend(s.rssi for s in group)
        starts.append(len(nodes))
        tmean.append(sum(s.t for s in group) / len(group))
    xs, ys, used = kernels.centroid_groups(
        np.array(starts), np.array(nodes), np.array(rssi, dtype=float),
        node_x, node_y, params.p0, params.n, params.g,
    )
    return [
        PositionFix(dev, t, Point(float(x), float(y)), int(u))
        for ((dev, _), _g), t, x, y, u in zip(groups, tmean, xs, ys, used)
    ]


def heatmap(fixes: Iterable[PositionFix], spec: GridSpec) -> HeatGrid:
    pts = [f.point for f in fixes]
    xs = np.array([p.x for p in pts], dtype=float)
    ys = np.array([p.y for p in pts], dtype=float)
    counts, overflow = kernels.bin_points(xs, ys, spec.origin.x, spec.origin.y,
                                          spec.cell_size_m, spec.rows, spec.cols)
    return HeatGrid(spec, counts, overflow)


def fit_path_loss(distances: Sequence[float], rssi: Sequence[float]) -> tuple[float, float]:
    """Least-squares (p0, n) from labelled (distance, rssi) samples."""
    d = np.maximum(np.asarray(distances, dtype=float), 1e-3)
    r = np.asarray(rssi, dtype=float)
    if d.size < 2:
        raise ValueError("need at least two samples")
    slope, intercept = np.polyfit(np.log10(d), r, 1)
    return float(intercept), float(-slope / 10.0)


def fit_weight_exponent(
    sightings: Sequence[Sighting],
    truth: Callable[[str, float], Point | None],
    params: PathLossParams,
    candidates: Sequence[float] = tuple(np.round(np.arange(0.5, 6.01, 0.25), 2)),
    window_s: int = DEFAULT_WINDOW_S,
) -> float:
    """Pick the weight exponent with the lowest median error on labelled fixes.

    ``truth(anon_id, t)`` returns the true position, or None when unknown.
    """
    best_g, best_err = params.g, math.inf
    for g in candidates:
        fixes = locate_all(sightings, PathLossParams(params.p0, params.n, float(g)), window_s)
        errs = []
        for f in fixes:
            p = truth(f.anon_id, f.t)
            if p is not None:
                errs.append(f.point.distance(p))
        if not errs:
            continue
        err = float(np.median(errs))
        if err < best_err:
            best_g, best_err = float(g), err
    return best_g
