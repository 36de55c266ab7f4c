"""Synthetic crowd scenarios with ground truth.

Pedestrians arrive at route gates (Poisson, hour-of-day rates), walk between
stops drawn inside the route's areas, dwell, and leave. A share of them carry a
phone that sends probes with exponential gaps; every sniffer in range logs the
probe with log-distance RSSI plus Gaussian shadowing. Cameras count each pass
through their choke-point region, missing passes with probability
``1 - accuracy``.

Randomness: pedestrian ``k`` of route ``r`` draws everything it needs from
``default_rng([seed, 2, r, k])``; arrivals of route ``r`` from
``default_rng([seed, 1, r])``; camera ``c`` (sorted id order) from
``default_rng([seed, 3, c])``; session key ``s`` from ``default_rng([seed, 4,
s])``. Any pedestrian can be regenerated alone, in any order.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .anonymize import SessionKey, derive_anon_id, format_mac
from .errors import ConfigError, UnknownPreset
from .ingest import CameraTick, ProbeTable, format_camera, format_probe
from .model import (
    Circle, ClusterSpec, Coverage, Deployment, Interval, NodeKind, Point, Polygon,
    Rectangle, SensorNode, SystemKind, TrafficClass, dump_deployment,
)

DEFAULT_START = 1_521_676_800  # 2018-03-22 00:00:00 UTC
_BIG = float(2**23)  # per-pedestrian key offset for batched interpolation


@dataclass(frozen=True)
class AreaSpec:
    """Where a route can stop. ``Point`` shapes are pass-through stops."""

    area_id: str
    cluster_id: str
    shape: Coverage
    dwell_mean_s: float = 300.0
    stops: int = 1


@dataclass(frozen=True)
class RouteSpec:
    cluster_id: str
    rate_per_hour: tuple[float, ...]
    gates: tuple[tuple[Point, Point], ...]
    sequence: tuple[str, ...] = ()
    pool: tuple[str, ...] = ()
    pool_weights: tuple[float, ...] = ()
    extra_stops: tuple[int, int] = (0, 0)


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    duration_s: int
    deployment: Deployment
    areas: tuple[AreaSpec, ...]
    routes: tuple[RouteSpec, ...]
    start: int = DEFAULT_START
    device_ownership_prob: float = 0.7
    probe_interval_mean_s: float = 10.0
    p0: float = -40.0
    n: float = 2.0
    sigma_db: float = 3.0
    detection_range_m: float = 50.0
    camera_accuracy: Mapping[str, float] | float = 0.93
    double_count_rate: float = 0.0
    walking_speed_mps: float = 1.3
    wall_loss_db: float = 0.0
    key_period_s: int = 86_400
    interval_s: int = 300
    epoch_s: int = 60
    truth_step_s: int = 1

    def __post_init__(self):
        probs = [self.device_ownership_prob, self.double_count_rate]
        acc = self.camera_accuracy
        probs += list(acc.values()) if isinstance(acc, Mapping) else [acc]
        if any(not 0 <= p <= 1 for p in probs):
            raise ConfigError("probabilities must lie in [0, 1]")
        if self.duration_s <= 0:
            raise ConfigError("duration_s must be positive")
        if self.probe_interval_mean_s <= 0 or self.walking_speed_mps <= 0:
            raise ConfigError("probe interval and walking speed must be positive")
        if self.n <= 0 or self.sigma_db < 0 or self.detection_range_m <= 0:
            raise ConfigError("bad path-loss parameters")
        for name in ("interval_s", "epoch_s", "truth_step_s"):
            v = getattr(self, name)
            if v <= 0 or 3600 % v:
                raise ConfigError(f"{name} must divide 3600")
        if self.start % self.interval_s or self.start % self.epoch_s:
            raise ConfigError("start must be aligned to interval_s and epoch_s")
        if self.key_period_s <= 0:
            raise ConfigError("key_period_s must be positive")
        ids = {a.area_id for a in self.areas}
        if len(ids) != len(self.areas):
            raise ConfigError("duplicate area id")
        for a in self.areas:
            if a.cluster_id not in self.deployment.clusters:
                raise ConfigError(f"area {a.area_id} in unknown cluster {a.cluster_id}")
            if a.stops < 1 or a.dwell_mean_s < 0:
                raise ConfigError(f"area {a.area_id} needs stops >= 1 and dwell >= 0")
        for r in self.routes:
            if r.cluster_id not in self.deployment.clusters:
                raise ConfigError(f"route in unknown cluster {r.cluster_id}")
            if len(r.rate_per_hour) != 24 or any(x < 0 for x in r.rate_per_hour):
                raise ConfigError("rate_per_hour needs 24 non-negative values")
            if not r.gates:
                raise ConfigError("route needs at least one gate pair")
            for a in r.sequence + r.pool:
                if a not in ids:
                    raise ConfigError(f"route references unknown area {a}")
            if r.pool_weights and len(r.pool_weights) != len(r.pool):
                raise ConfigError("pool_weights must match pool")
            lo, hi = r.extra_stops
            if not 0 <= lo <= hi:
                raise ConfigError("extra_stops must be 0 <= lo <= hi")

    def accuracy_of(self, camera_id: str) -> float:
        acc = self.camera_accuracy
        return float(acc[camera_id]) if isinstance(acc, Mapping) else float(acc)


@dataclass(frozen=True)
class Transit:
    pedestrian: int
    from_area: str
    to_area: str
    t_depart: float
    t_arrive: float


@dataclass(frozen=True)
class Crossing:
    camera_id: str
    pedestrian: int
    t: float
    inbound: bool
    recorded: int


@dataclass
class Trajectory:
    pedestrian: int
    route: int
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    mac: bytes | None
    anon_ids: dict[int, str] = field(default_factory=dict)

    def position(self, t: float) -> Point:
        return Point(float(np.interp(t, self.t, self.x)), float(np.interp(t, self.t, self.y)))


@dataclass
class GroundTruth:
    start: int
    duration_s: int
    interval_s: int
    epoch_s: int
    present: dict[tuple[str, int], int]
    spans: dict[str, np.ndarray]
    transits: list[Transit]
    presence: dict[tuple[str, int], bool]
    crossings: list[Crossing]
    trajectories: list[Trajectory]
    device_of: dict[str, int]

    def people(self, area_id: str, interval: Interval) -> int:
        return self.present.get((area_id, interval.start), 0)

    def position(self, anon_id: str, t: float) -> Point | None:
        ped = self.device_of.get(anon_id)
        if ped is None:
            return None
        tr = self.trajectories[ped]
        if not tr.t[0] <= t <= tr.t[-1]:
            return None
        return tr.position(t)

    def occupancy(self, area_id: str, t: float) -> int:
        s = self.spans.get(area_id)
        if s is None or not len(s):
            return 0
        return int(np.count_nonzero((s[:, 1] <= t) & (s[:, 2] > t)))


@dataclass
class Scenario:
    config: ScenarioConfig
    probes: ProbeTable
    cameras: list[CameraTick]
    truth: GroundTruth

    def probe_lines(self) -> list[str]:
        return [format_probe(e) for e in self.probes.events()]

    def raw_probe_lines(self) -> list[str]:
        mac_of = {}
        for tr in self.truth.trajectories:
            for d in tr.anon_ids.values():
                mac_of[d] = format_mac(tr.mac)
        out = []
        for e in self.probes.events():
            out.append(json.dumps({"s": e.sensor_id, "mac": mac_of[e.anon_id], "t": e.t,
                                   "rssi": e.rssi, "seq": e.seq}, separators=(",", ":")))
        return out

    def camera_lines(self) -> list[str]:
        return [format_camera(c) for c in self.cameras]


def _sample_in(shape: Coverage, rng: np.random.Generator) -> Point:
    if isinstance(shape, Point):
        return shape
    if isinstance(shape, Circle):
        r = shape.radius * math.sqrt(rng.random())
        a = 2 * math.pi * rng.random()
        return Point(shape.center.x + r * math.cos(a), shape.center.y + r * math.sin(a))
    if isinstance(shape, Rectangle):
        return Point(rng.uniform(shape.lower.x, shape.upper.x), rng.uniform(shape.lower.y, shape.upper.y))
    if isinstance(shape, Polygon):
        xs = [v.x for v in shape.vertices]
        ys = [v.y for v in shape.vertices]
        for _ in range(10_000):
            p = Point(rng.uniform(min(xs), max(xs)), rng.uniform(min(ys), max(ys)))
            if shape.contains(p):
                return p
    raise ConfigError(f"cannot sample inside {shape!r}")


@dataclass
class _ClusterCtx:
    cluster_id: str
    sniffer_ids: list[str]
    sniffer_xy: np.ndarray
    sniffer_cov: list[Coverage | None]
    site: Coverage | None
    regions: list[tuple[str, Coverage]]
    cameras: list[tuple[str, Coverage]]


def _cluster_ctx(dep: Deployment, cluster_id: str) -> _ClusterCtx:
    sn = dep.sniffers(cluster_id)
    cov = [None if isinstance(n.coverage, Point) else n.coverage for n in sn]
    regions = [(n.id, n.coverage) for n in sn if not isinstance(n.coverage, Point)]
    c = dep.clusters[cluster_id]
    if c.site is not None:
        regions.append((cluster_id, c.site))
    cams = []
    for cp in dep.choke_points(cluster_id):
        if not isinstance(cp.coverage, Point):
            cams.append((cp.camera_id, cp.coverage))
    return _ClusterCtx(cluster_id, [n.id for n in sn],
                       np.array([[n.position.x, n.position.y] for n in sn], dtype=float).reshape(-1, 2),
                       cov, c.site, regions, cams)


@dataclass
class _Ped:
    index: int
    route: int
    cluster_id: str
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    mac: bytes | None
    probe_t: np.ndarray
    probe_node: np.ndarray
    probe_rssi: np.ndarray
    probe_seq: np.ndarray


def _session_key(seed: int, session: int, period: int) -> SessionKey:
    material = np.random.default_rng([seed, 4, session]).bytes(12)
    return SessionKey(bytearray(material), session, session * period, (session + 1) * period)


def _arrivals(cfg: ScenarioConfig, r_idx: int, route: RouteSpec) -> np.ndarray:
    rng = np.random.default_rng([cfg.seed, 1, r_idx])
    out = []
    t_end = cfg.start + cfg.duration_s
    h0 = cfg.start - cfg.start % 3600
    for h in range(h0, t_end, 3600):
        rate = route.rate_per_hour[(h % 86400) // 3600]
        k = rng.poisson(rate)
        ts = np.sort(rng.uniform(h, h + 3600, size=k))
        out.append(ts[(ts >= cfg.start) & (ts < t_end)])
    return np.concatenate(out) if out else np.empty(0)


def _build_ped(cfg: ScenarioConfig, idx: int, r_idx: int, route: RouteSpec, k: int, t_arr: float,
               areas: Mapping[str, AreaSpec], ctx: _ClusterCtx) -> _Ped:
    rng = np.random.default_rng([cfg.seed, 2, r_idx, k])
    speed = cfg.walking_speed_mps * rng.uniform(0.8, 1.2)
    entry, exit_ = route.gates[int(rng.integers(len(route.gates)))]
    stops = list(route.sequence)
    lo, hi = route.extra_stops
    n_extra = int(rng.integers(lo, hi + 1)) if hi > 0 else 0
    if n_extra and route.pool:
        w = np.asarray(route.pool_weights or [1.0] * len(route.pool), dtype=float)
        pick = rng.choice(len(route.pool), size=min(n_extra, len(route.pool)), replace=False, p=w / w.sum())
        stops += [route.pool[i] for i in pick]
    T, X, Y = [t_arr], [entry.x], [entry.y]

    def walk(p: Point) -> None:
        d = math.hypot(p.x - X[-1], p.y - Y[-1])
        if d > 0:
            T.append(T[-1] + d / speed)
            X.append(p.x)
            Y.append(p.y)

    for a in stops:
        spec = areas[a]
        for _ in range(spec.stops):
            walk(_sample_in(spec.shape, rng))
            if spec.dwell_mean_s > 0:
                T.append(T[-1] + rng.exponential(spec.dwell_mean_s / spec.stops))
                X.append(X[-1])
                Y.append(Y[-1])
    walk(exit_)
    t = np.asarray(T)
    x = np.asarray(X)
    y = np.asarray(Y)

    owner = rng.random() < cfg.device_ownership_prob
    empty_i = np.empty(0, dtype=np.int64)
    if not owner:
        return _Ped(idx, r_idx, ctx.cluster_id, t, x, y, None, np.empty(0), empty_i, empty_i, empty_i)
    mac = bytearray(rng.bytes(6))
    mac[0] &= 0xFE
    seq0 = int(rng.integers(4096))
    span = t[-1] - t[0]
    mean = cfg.probe_interval_mean_s
    gaps = rng.exponential(mean, size=int(span / mean * 1.3) + 16)
    while gaps.sum() < span:
        gaps = np.concatenate([gaps, rng.exponential(mean, size=int(span / mean) + 16)])
    pt = t[0] + np.cumsum(gaps)
    pt = pt[pt < t[-1]]
    n_nodes = len(ctx.sniffer_ids)
    noise = rng.normal(0.0, cfg.sigma_db, size=(pt.size, n_nodes)) if cfg.sigma_db > 0 else np.zeros((pt.size, n_nodes))
    if pt.size == 0 or n_nodes == 0:
        return _Ped(idx, r_idx, ctx.cluster_id, t, x, y, bytes(mac), np.empty(0), empty_i, empty_i, empty_i)
    px = np.interp(pt, t, x)
    py = np.interp(pt, t, y)
    dx = px[:, None] - ctx.sniffer_xy[None, :, 0]
    dy = py[:, None] - ctx.sniffer_xy[None, :, 1]
    d = np.hypot(dx, dy)
    heard = d <= cfg.detection_range_m
    for j, cov in enumerate(ctx.sniffer_cov):
        if cov is not None:
            heard[:, j] &= cov.contains_many(px, py)
    rssi = cfg.p0 - 10.0 * cfg.n * np.log10(np.maximum(d, 1.0)) + noise
    if cfg.wall_loss_db and ctx.site is not None:
        rssi -= np.where(ctx.site.contains_many(px, py), 0.0, cfg.wall_loss_db)[:, None]
    rssi = np.minimum(np.rint(rssi), 0)
    heard &= rssi >= -100
    keep = pt < cfg.start + cfg.duration_s
    heard &= keep[:, None]
    pi, nj = np.nonzero(heard)
    seq = (seq0 + pi) % 4096
    return _Ped(idx, r_idx, ctx.cluster_id, t, x, y, bytes(mac),
                pt[pi], nj.astype(np.int64), rssi[pi, nj].astype(np.int64), seq.astype(np.int64))


def _sample_batch(peds: Sequence[_Ped], step: int):
    """1-step samples of many trajectories: (ped position in batch, t, x, y)."""
    t0 = np.array([math.ceil(p.t[0] / step) * step for p in peds], dtype=float)
    t1 = np.array([math.floor(p.t[-1] / step) * step for p in peds], dtype=float)
    n = np.maximum(((t1 - t0) // step).astype(np.int64) + 1, 0)
    owner = np.repeat(np.arange(len(peds)), n)
    offs = np.repeat(np.cumsum(n) - n, n)
    ts = np.repeat(t0, n) + (np.arange(owner.size) - offs) * step
    base = min(float(p.t[0]) for p in peds)
    wk = np.concatenate([i * _BIG + (p.t - base) for i, p in enumerate(peds)])
    wx = np.concatenate([p.x for p in peds])
    wy = np.concatenate([p.y for p in peds])
    wt = np.concatenate([p.t for p in peds])
    sk = owner * _BIG + (ts - base)
    j = np.searchsorted(wk, sk, side="right") - 1
    j_next = np.minimum(j + 1, wk.size - 1)
    same = np.concatenate([np.full(p.t.size, i) for i, p in enumerate(peds)])
    has_next = (same[j_next] == owner) & (j_next != j)
    dt = np.where(has_next, wt[j_next] - wt[j], 1.0)
    f = np.where(has_next, (ts - wt[j]) / dt, 0.0)
    xs = wx[j] + f * (wx[j_next] - wx[j]) * has_next
    ys = wy[j] + f * (wy[j_next] - wy[j]) * has_next
    return owner, ts, xs, ys


def _truth_for_cluster(cfg: ScenarioConfig, peds: Sequence[_Ped], ctx: _ClusterCtx, acc):
    """Spans, per-interval presence and site presence labels for one cluster."""
    step = cfg.truth_step_s
    spans: dict[str, list] = defaultdict(list)
    inside_votes: dict[tuple[int, int], list] = {}
    chunk = 800
    for c0 in range(0, len(peds), chunk):
        batch = peds[c0:c0 + chunk]
        owner, ts, xs, ys = _sample_batch(batch, step)
        if owner.size == 0:
            continue
        bits = np.zeros(owner.size, dtype=np.int64)
        for j, (_, cov) in enumerate(ctx.regions):
            bits |= cov.contains_many(xs, ys).astype(np.int64) << j
        change = np.ones(owner.size, dtype=bool)
        change[1:] = (owner[1:] != owner[:-1]) | (bits[1:] != bits[:-1])
        starts = np.flatnonzero(change)
        ends = np.append(starts[1:], owner.size) - 1
        r_owner = owner[starts]
        r_bits = bits[starts]
        r_t0 = ts[starts]
        r_t1 = ts[ends] + step
        # merge consecutive runs per region into spans
        for j, (rid, _) in enumerate(ctx.regions):
            m = ((r_bits >> j) & 1).astype(bool)
            if not m.any():
                continue
            idx = np.flatnonzero(m)
            o = r_owner[idx]
            a = r_t0[idx]
            b = r_t1[idx]
            new = np.ones(idx.size, dtype=bool)
            new[1:] = (o[1:] != o[:-1]) | (a[1:] != b[:-1])
            s_idx = np.flatnonzero(new)
            e_idx = np.append(s_idx[1:], idx.size) - 1
            glob = np.array([batch[i].index for i in o[s_idx]], dtype=np.int64)
            spans[rid].append(np.stack([glob.astype(float), a[s_idx], b[e_idx]], axis=1))
        if ctx.site is not None:
            site_in = ctx.site.contains_many(xs, ys)
            ep = (ts // cfg.epoch_s).astype(np.int64)
            key = owner.astype(np.int64) * (1 << 32) + ep
            uk, inv = np.unique(key, return_inverse=True)
            frac = np.bincount(inv, weights=site_in.astype(float)) / np.bincount(inv)
            for kk, fr in zip(uk.tolist(), frac.tolist()):
                o, e = divmod(kk, 1 << 32)
                inside_votes[(batch[o].index, e * cfg.epoch_s)] = fr >= 0.5
    return {k: np.concatenate(v) for k, v in spans.items()}, inside_votes


def generate(config: ScenarioConfig) -> Scenario:
    cfg = config
    dep = cfg.deployment
    areas = {a.area_id: a for a in cfg.areas}
    ctxs = {cid: _cluster_ctx(dep, cid) for cid in sorted(dep.clusters)}

    peds: list[_Ped] = []
    for r_idx, route in enumerate(cfg.routes):
        for k, t_arr in enumerate(_arrivals(cfg, r_idx, route).tolist()):
            peds.append(_build_ped(cfg, 0, r_idx, route, k, t_arr, areas, ctxs[route.cluster_id]))
    peds.sort(key=lambda p: (p.t[0], p.route))
    for i, p in enumerate(peds):
        p.index = i

    t_end = cfg.start + cfg.duration_s
    n_int = -(-cfg.duration_s // cfg.interval_s)

    # --- ground truth per cluster
    spans: dict[str, np.ndarray] = {}
    inside: dict[tuple[int, int], bool] = {}
    for cid, ctx in ctxs.items():
        cp = [p for p in peds if p.cluster_id == cid]
        if not cp:
            continue
        s, iv = _truth_for_cluster(cfg, cp, ctx, None)
        spans.update(s)
        inside.update(iv)
    for cid, ctx in ctxs.items():
        for rid, _ in ctx.regions:
            spans.setdefault(rid, np.empty((0, 3)))

    present: dict[tuple[str, int], int] = {}
    for rid, s in spans.items():
        counts = defaultdict(set)
        for ped, a, b in s.tolist():
            lo = max(a, cfg.start)
            hi = min(b, t_end)
            if hi <= lo:
                continue
            k0 = int((lo - cfg.start) // cfg.interval_s)
            k1 = int(math.ceil((hi - cfg.start) / cfg.interval_s)) - 1
            for k in range(k0, min(k1, n_int - 1) + 1):
                counts[k].add(int(ped))
        for k in range(n_int):
            present[(rid, cfg.start + k * cfg.interval_s)] = len(counts.get(k, ()))

    # transits between sensing areas (sites excluded)
    sensing = {rid for ctx in ctxs.values() for rid, _ in ctx.regions if rid not in dep.clusters}
    per_ped: dict[int, list] = defaultdict(list)
    for rid in sorted(sensing):
        for ped, a, b in spans[rid].tolist():
            per_ped[int(ped)].append((a, b, rid))
    transits = []
    for ped in sorted(per_ped):
        seq = sorted(per_ped[ped])
        for (a0, b0, r0), (a1, b1, r1) in zip(seq, seq[1:]):
            if r0 != r1:
                transits.append(Transit(ped, r0, r1, b0, a1))

    # --- cameras
    crossings: list[Crossing] = []
    cam_counts: dict[tuple[str, int], list[int]] = defaultdict(lambda: [0, 0])
    cam_ids = sorted(n.id for n in dep.nodes.values() if n.kind is NodeKind.STEREO_CAMERA)
    cam_region = {}
    for ctx in ctxs.values():
        for cam, cov in ctx.cameras:
            cam_region[cam] = cov
    for ci, cam in enumerate(cam_ids):
        cov = cam_region.get(cam)
        if cov is None:
            continue
        rng = np.random.default_rng([cfg.seed, 3, ci])
        cp = dep.choke_for_camera(cam)
        s = spans.get(cp.sniffer_id) if cp.coverage == dep.nodes[cp.sniffer_id].coverage else None
        if s is None:
            s = _spans_in(cfg, peds, cov)
        rows = sorted(s.tolist(), key=lambda r: ((r[1] + r[2]) / 2, r[0]))
        acc = cfg.accuracy_of(cam)
        for ped, a, b in rows:
            tm = (a + b) / 2
            if not cfg.start <= tm < t_end:
                continue
            tr = peds[int(ped)]
            y_in = np.interp(a, tr.t, tr.y)
            y_out = np.interp(min(b, tr.t[-1]), tr.t, tr.y)
            inbound = bool(y_out >= y_in)
            seen = int(rng.random() < acc)
            if seen and cfg.double_count_rate and rng.random() < cfg.double_count_rate:
                seen = 2
            crossings.append(Crossing(cam, int(ped), tm, inbound, seen))
            if seen:
                k = int((tm - cfg.start) // cfg.interval_s)
                cam_counts[(cam, k)][0 if inbound else 1] += seen
    cameras = []
    for k in range(n_int):
        for cam in cam_ids:
            if cam not in cam_region:
                continue
            cin, cout = cam_counts.get((cam, k), (0, 0))
            cameras.append(CameraTick(cam, Interval(cfg.start + k * cfg.interval_s, cfg.interval_s), cin, cout))

    # --- probes and device identities
    period = cfg.key_period_s
    keys: dict[int, SessionKey] = {}
    ids: list[str] = []
    id_index: dict[str, int] = {}
    device_of: dict[str, int] = {}
    trajectories = []
    sensors = tuple(n.id for n in dep.sniffers())
    s_index = {s: i for i, s in enumerate(sensors)}
    cols = defaultdict(list)
    for p in peds:
        tr = Trajectory(p.index, p.route, p.t, p.x, p.y, p.mac)
        trajectories.append(tr)
        if p.mac is None or p.probe_t.size == 0:
            continue
        ctx = ctxs[p.cluster_id]
        tint = np.floor(p.probe_t).astype(np.int64)
        sess = tint // period
        dev_codes = np.empty(tint.size, dtype=np.int64)
        for s in np.unique(sess).tolist():
            if s not in keys:
                keys[s] = _session_key(cfg.seed, s, period)
            digest = derive_anon_id(p.mac, keys[s])
            tr.anon_ids[s] = digest
            device_of[digest] = p.index
            code = id_index.setdefault(digest, len(ids))
            if code == len(ids):
                ids.append(digest)
            dev_codes[sess == s] = code
        node_map = np.array([s_index[sid] for sid in ctx.sniffer_ids], dtype=np.int64)
        cols["t"].append(tint)
        cols["s"].append(node_map[p.probe_node])
        cols["d"].append(dev_codes)
        cols["r"].append(p.probe_rssi)
        cols["q"].append(p.probe_seq)
        cols["ped"].append(np.full(tint.size, p.index, dtype=np.int64))
        cols["ft"].append(p.probe_t)
    if cols:
        cat = {k: np.concatenate(v) for k, v in cols.items()}
        order = np.lexsort((cat["s"], cat["ft"], cat["ped"], cat["t"]))
        probes = ProbeTable(sensors, tuple(ids), cat["s"][order], cat["d"][order], cat["t"][order],
                            cat["r"][order], cat["q"][order])
    else:
        probes = ProbeTable(sensors, (), *(np.empty(0, dtype=np.int64) for _ in range(5)))

    presence = {}
    for (ped, ep), val in inside.items():
        tr = trajectories[ped]
        if tr.mac is None or not cfg.start <= ep < t_end:
            continue
        s = ep // period
        if s not in tr.anon_ids:
            if s not in keys:
                keys[s] = _session_key(cfg.seed, s, period)
            tr.anon_ids[s] = derive_anon_id(tr.mac, keys[s])
            device_of[tr.anon_ids[s]] = ped
        presence[(tr.anon_ids[s], ep)] = val

    truth = GroundTruth(cfg.start, cfg.duration_s, cfg.interval_s, cfg.epoch_s, present, spans,
                        transits, presence, crossings, trajectories, device_of)
    for k in keys.values():
        k.zeroize()
    return Scenario(cfg, probes, cameras, truth)


def _spans_in(cfg: ScenarioConfig, peds: Sequence[_Ped], cov: Coverage) -> np.ndarray:
    ctx = _ClusterCtx("", [], np.empty((0, 2)), [], None, [("_", cov)], [])
    s, _ = _truth_for_cluster(cfg, list(peds), ctx, None)
    return s.get("_", np.empty((0, 3)))


# ---------------------------------------------------------------- presets


def _diurnal(base: float, peak: float) -> tuple[float, ...]:
    # quiet around 04:00, busiest mid-afternoon
    return tuple(round(base + peak * (0.5 - 0.5 * math.cos(2 * math.pi * (h - 4) / 24)) ** 1.5, 3)
                 for h in range(24))


def goldcoast_deployment() -> Deployment:
    nodes: dict[str, SensorNode] = {}
    clusters = {}

    def add_cluster(cid, traffic, origin, regular, choke_xy, first_id, cam_no):
        members = []
        num = first_id
        sniffers = []
        for (x, y) in regular:
            sid = f"gc-{num:02d}"
            num += 1
            p = Point(origin[0] + x, origin[1] + y)
            nodes[sid] = SensorNode(sid, NodeKind.WIFI_SNIFFER, p, Circle(p, 40.0), cid)
            sniffers.append(sid)
        sid = f"gc-{num:02d}"
        num += 1
        pc = Point(origin[0] + choke_xy[0], origin[1] + choke_xy[1])
        region = Circle(pc, 15.0)
        nodes[sid] = SensorNode(sid, NodeKind.WIFI_SNIFFER, pc, region, cid)
        cam = f"gc-cam-{cam_no}"
        nodes[cam] = SensorNode(cam, NodeKind.STEREO_CAMERA, pc, region, cid)
        cp = f"gc-cp-{cam_no}"
        nodes[cp] = SensorNode(cp, NodeKind.CHOKE_POINT, pc, region, cid, camera_id=cam, sniffer_id=sid)
        members = sniffers + [sid, cam, cp]
        clusters[cid] = ClusterSpec(cid, traffic, tuple(members))
        return num

    grid9 = [(x, y) for y in (0, 150, 300) for x in (0, 150, 300) if (x, y) != (150, 150)]
    nxt = add_cluster("gc-c1", TrafficClass.HEAVY, (0.0, 0.0), grid9, (150, 150), 1, 1)
    grid7 = [(0, 0), (150, 0), (300, 0), (0, 200), (150, 200), (300, 200), (450, 100)]
    add_cluster("gc-c2", TrafficClass.LIGHT, (2000.0, 0.0), grid7, (225, 100), nxt, 2)
    return Deployment(nodes, clusters)


def _goldcoast(seed: int) -> ScenarioConfig:
    dep = goldcoast_deployment()
    areas = []
    routes = []
    rates = {"gc-c1": _diurnal(160, 640), "gc-c2": _diurnal(110, 290)}
    for cid in sorted(dep.clusters):
        sn = dep.sniffers(cid)
        choke = dep.choke_points(cid)[0].sniffer_id
        pool, weights = [], []
        for n in sn:
            if n.id == choke:
                areas.append(AreaSpec(n.id, cid, n.position, dwell_mean_s=0.0))
                weights.append(10.0)
            else:
                areas.append(AreaSpec(n.id, cid, Circle(n.position, 25.0), dwell_mean_s=360.0, stops=2))
                weights.append(1.0)
            pool.append(n.id)
        xs = [n.position.x for n in sn]
        ys = [n.position.y for n in sn]
        cx, cy = (min(xs) + max(xs)) / 2, (min(ys) + max(ys)) / 2
        gates = [Point(min(xs) - 80, cy), Point(max(xs) + 80, cy), Point(cx, min(ys) - 80), Point(cx, max(ys) + 80)]
        pairs = tuple((a, b) for a in gates for b in gates)
        routes.append(RouteSpec(cid, rates[cid], pairs, (), tuple(pool), tuple(weights), (1, 3)))
    cams = sorted(n.id for n in dep.nodes.values() if n.kind is NodeKind.STEREO_CAMERA)
    acc = np.random.default_rng([seed, 5]).uniform(0.88, 0.98, size=len(cams))
    return ScenarioConfig(
        seed=seed, duration_s=86_400, deployment=dep, areas=tuple(areas), routes=tuple(routes),
        device_ownership_prob=0.72, probe_interval_mean_s=10.0, p0=-40.0, n=2.2, sigma_db=4.0,
        detection_range_m=60.0, camera_accuracy={c: round(float(a), 4) for c, a in zip(cams, acc)},
        walking_speed_mps=1.3,
    )


SANTANDER_WIDTH = 40.0
SANTANDER_DEPTH = 20.0


def santander_deployment() -> Deployment:
    w, h = SANTANDER_WIDTH, SANTANDER_DEPTH
    per = 2 * (w + h)
    nodes = {}
    for i in range(8):
        s = i * per / 8 + per / 16
        if s < w:
            p = Point(s, 0.0)
        elif s < w + h:
            p = Point(w, s - w)
        elif s < 2 * w + h:
            p = Point(w - (s - w - h), h)
        else:
            p = Point(0.0, h - (s - 2 * w - h))
        nid = f"sm-{i + 1:02d}"
        nodes[nid] = SensorNode(nid, NodeKind.WIFI_SNIFFER, p, p, "sm-market")
    site = Rectangle(Point(0.0, 0.0), Point(w, h))
    clusters = {"sm-market": ClusterSpec("sm-market", TrafficClass.LIGHT, tuple(sorted(nodes)),
                                         SystemKind.CCLS, site)}
    return Deployment(nodes, clusters)


def _santander(seed: int) -> ScenarioConfig:
    dep = santander_deployment()
    w, h = SANTANDER_WIDTH, SANTANDER_DEPTH
    areas = (
        AreaSpec("market", "sm-market", Rectangle(Point(2.0, 2.0), Point(w - 2, h - 2)), dwell_mean_s=900.0, stops=4),
        AreaSpec("door-s", "sm-market", Point(w / 2, 0.0), dwell_mean_s=0.0),
        AreaSpec("door-n", "sm-market", Point(w / 2, h), dwell_mean_s=0.0),
    )
    south = ((Point(-60.0, -8.0), Point(w + 60, -8.0)), (Point(w + 60, -8.0), Point(-60.0, -8.0)))
    north = ((Point(-60.0, h + 8), Point(w + 60, h + 8)), (Point(w + 60, h + 8), Point(-60.0, h + 8)))
    visit_s = ((Point(-60.0, -8.0), Point(-60.0, -8.0)), (Point(w + 60, -8.0), Point(w + 60, -8.0))) + south
    visit_n = ((Point(-60.0, h + 8), Point(-60.0, h + 8)), (Point(w + 60, h + 8), Point(w + 60, h + 8))) + north
    flat = lambda r: (float(r),) * 24  # noqa: E731
    routes = (
        RouteSpec("sm-market", flat(40), visit_s, ("door-s", "market", "door-s")),
        RouteSpec("sm-market", flat(40), visit_n, ("door-n", "market", "door-n")),
        RouteSpec("sm-market", flat(60), south),
        RouteSpec("sm-market", flat(60), north),
    )
    return ScenarioConfig(
        seed=seed, duration_s=7200, deployment=dep, areas=areas, routes=routes,
        device_ownership_prob=0.8, probe_interval_mean_s=5.0, p0=-35.0, n=2.5, sigma_db=3.0,
        detection_range_m=80.0, camera_accuracy=1.0, walking_speed_mps=0.8, wall_loss_db=10.0,
    )


PRESETS = {"goldcoast": _goldcoast, "santander": _santander}


def preset(name: str, seed: int = 7, **overrides) -> ScenarioConfig:
    try:
        make = PRESETS[name]
    except KeyError:
        raise UnknownPreset(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    cfg = make(seed)
    return replace(cfg, **overrides) if overrides else cfg


def without_cameras(scn: Scenario, t0: int, t1: int) -> list[CameraTick]:
    """Camera stream with every tick in ``[t0, t1)`` removed (camera switched off)."""
    return [c for c in scn.cameras if not t0 <= c.interval.start < t1]


def write_scenario(scn: Scenario, out_dir, raw: bool = False) -> dict[str, Path]:
    """Write deployment, probe, camera and ground-truth files into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "deployment": out / "deployment.json",
        "probes": out / "probes.jsonl",
        "cameras": out / "cameras.jsonl",
        "truth": out / "truth.jsonl",
    }
    dump_deployment(scn.config.deployment, paths["deployment"])
    with open(paths["probes"], "w", encoding="utf-8") as fh:
        for line in scn.probe_lines():
            fh.write(line + "\n")
    if raw:
        paths["raw_probes"] = out / "probes.raw.jsonl"
        with open(paths["raw_probes"], "w", encoding="utf-8") as fh:
            for line in scn.raw_probe_lines():
                fh.write(line + "\n")
    with open(paths["cameras"], "w", encoding="utf-8") as fh:
        for line in scn.camera_lines():
            fh.write(line + "\n")
    with open(paths["truth"], "w", encoding="utf-8") as fh:
        for line in truth_lines(scn.truth):
            fh.write(line + "\n")
    return paths


def truth_lines(truth: GroundTruth) -> list[str]:
    dump = lambda d: json.dumps(d, separators=(",", ":"), sort_keys=True)  # noqa: E731
    out = []
    for (area, start), n in sorted(truth.present.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        out.append(dump({"type": "area_count", "area": area, "start": start, "len": truth.interval_s, "people": n}))
    for tr in truth.transits:
        out.append(dump({"type": "transit", "ped": tr.pedestrian, "from": tr.from_area, "to": tr.to_area,
                         "t_depart": tr.t_depart, "t_arrive": tr.t_arrive}))
    for (dev, ep), inside in sorted(truth.presence.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        out.append(dump({"type": "presence", "id": dev, "start": ep, "len": truth.epoch_s, "inside": inside}))
    for c in truth.crossings:
        out.append(dump({"type": "crossing", "camera": c.camera_id, "ped": c.pedestrian, "t": c.t,
                         "inbound": c.inbound, "recorded": c.recorded}))
    for tr in truth.trajectories:
        out.append(dump({"type": "trajectory", "ped": tr.pedestrian, "route": tr.route,
                         "ids": [tr.anon_ids[s] for s in sorted(tr.anon_ids)],
                         "t": tr.t.tolist(), "x": tr.x.tolist(), "y": tr.y.tolist()}))
    return out
