"""Per-cluster batch runs and the report bundle.

A run reads the probe and camera files named in a manifest, splits them by
cluster, and hands each cluster to its worker. Clusters share no state, so the
files written under ``clusters/<id>/`` depend only on that cluster's inputs.

Bundle layout (``output`` directory)::

    manifest.json            resolved manifest with input checksums and digest
    summary.json             stage status and record counts per cluster
    report/                  hourly_devices.csv|svg, hourly_ratio.csv|svg
    clusters/<id>/           per-stage records, per-cluster charts
"""

from __future__ import annotations

import hashlib
import json
import logging
import statistics
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Mapping, Sequence

from . import records, report
from .aggregate import count_table, rollup_all
from .analytics import infer_flows, stay_series
from .anonymize import KeyStore, RawProbe, parse_raw_probe
from .calibrate import (
    CrowdEstimate, Method, calibrate_cluster, hourly_ratio_series, learn_profile,
)
from .errors import ConfigError, CrowdMobError, InsufficientData, StageError
from .ingest import ProbeEvent, ProbeTable, merge_sorted, open_text, parse_camera, parse_probe
from .locate import (
    GridSpec, PathLossParams, heatmap, locate_all, presence_all, sightings_from_probes,
)
from .model import Deployment, Interval, SystemKind, bounding_box, load_deployment
from .semantics import annotate_estimate, annotate_flow, annotate_stay, encode

log = logging.getLogger(__name__)

STAGES = ("ingest", "anonymize", "aggregate", "calibrate", "estimate", "flows", "stay",
          "presence", "locate", "heatmap", "annotate")
CMAS_ONLY = {"calibrate", "estimate"}
CCLS_ONLY = {"presence", "locate", "heatmap"}
NEEDS = {
    "anonymize": ("ingest",),
    "aggregate": ("anonymize",),
    "calibrate": ("aggregate",),
    "estimate": ("calibrate",),
    "flows": ("anonymize",),
    "stay": ("anonymize",),
    "presence": ("anonymize",),
    "locate": ("presence",),
    "heatmap": ("locate",),
    "annotate": (),
}


@dataclass(frozen=True)
class Settings:
    interval_s: int = 300
    window_s: int = 60
    alpha: float = 0.3
    profile_days: int | None = None
    max_gap_s: int = 300
    gap_tolerance_s: int = 120
    waiting_threshold_s: int = 300
    epoch_s: int = 60
    min_nodes: int = 6
    rssi_min: int = -75
    p0: float = -40.0
    n: float = 2.0
    g: float = 1.0
    fix_window_s: int = 10
    cell_m: float = 2.0
    key_period_s: int = 86_400

    def __post_init__(self):
        for name in ("interval_s", "epoch_s", "fix_window_s"):
            v = getattr(self, name)
            if v <= 0 or 3600 % v:
                raise ConfigError(f"{name} must divide 3600")
        if not 0 < self.alpha <= 1:
            raise ConfigError("alpha must be in (0, 1]")
        if self.profile_days is not None and self.profile_days < 1:
            raise ConfigError("profile_days must be at least 1")
        if min(self.window_s, self.max_gap_s, self.gap_tolerance_s, self.waiting_threshold_s,
               self.key_period_s, self.min_nodes) <= 0 or self.cell_m <= 0:
            raise ConfigError("windows, gaps, thresholds and cell size must be positive")
        if self.n <= 0 or self.g <= 0:
            raise ConfigError("n and g must be positive")

    @classmethod
    def from_dict(cls, raw: Mapping) -> "Settings":
        known = {f.name for f in fields(cls)}
        extra = set(raw) - known
        if extra:
            raise ConfigError(f"unknown settings: {sorted(extra)}")
        return cls(**raw)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass(frozen=True)
class RunManifest:
    deployment: Path
    probes: tuple[Path, ...]
    cameras: tuple[Path, ...]
    output: Path
    stages: tuple[str, ...] = STAGES
    workers: Mapping[str, int] | None = None
    span: tuple[int, int] | None = None
    settings: Settings = Settings()

    def __post_init__(self):
        bad = [s for s in self.stages if s not in STAGES]
        if bad:
            raise ConfigError(f"unknown stages: {bad}")
        if self.span is not None and not self.span[0] < self.span[1]:
            raise ConfigError("span must satisfy start < end")

    @classmethod
    def from_dict(cls, raw: Mapping, base_dir: Path | str = ".") -> "RunManifest":
        base = Path(base_dir)

        def p(v) -> Path:
            q = Path(v)
            return q if q.is_absolute() else base / q

        try:
            inputs = raw.get("inputs", {})
            span = raw.get("span")
            return cls(
                deployment=p(raw["deployment"]),
                probes=tuple(p(v) for v in inputs.get("probes", ())),
                cameras=tuple(p(v) for v in inputs.get("cameras", ())),
                output=p(raw.get("output", "out")),
                stages=tuple(raw.get("stages", STAGES)),
                workers=dict(raw["workers"]) if raw.get("workers") is not None else None,
                span=(int(span["start"]), int(span["end"])) if span else None,
                settings=Settings.from_dict(raw.get("settings", {})),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad manifest: {exc!r}") from exc

    def assignments(self, deployment: Deployment) -> dict[str, int]:
        """Worker per cluster; by default every cluster gets its own."""
        clusters = sorted(deployment.clusters)
        if self.workers is None:
            return {c: i for i, c in enumerate(clusters)}
        missing = [c for c in clusters if c not in self.workers]
        unknown = [c for c in self.workers if c not in deployment.clusters]
        if missing or unknown:
            raise ConfigError(f"worker map must cover exactly the clusters (missing {missing}, unknown {unknown})")
        return {c: int(self.workers[c]) for c in clusters}

    def pinned(self) -> dict:
        """Everything that determines the bundle, with inputs by checksum."""
        return {
            "deployment": {"name": self.deployment.name, "sha256": _sha256(self.deployment)},
            "probes": [{"name": q.name, "sha256": _sha256(q)} for q in self.probes],
            "cameras": [{"name": q.name, "sha256": _sha256(q)} for q in self.cameras],
            "stages": list(self.stages),
            "workers": dict(sorted(self.workers.items())) if self.workers else None,
            "span": {"start": self.span[0], "end": self.span[1]} if self.span else None,
            "settings": asdict(self.settings),
        }

    def digest(self) -> str:
        blob = json.dumps(self.pinned(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def load_manifest(path) -> RunManifest:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except ValueError as exc:
            raise ConfigError(f"{path}: not JSON: {exc}") from exc
    return RunManifest.from_dict(raw, path.parent)


@dataclass
class ClusterResult:
    cluster_id: str
    status: dict[str, str] = field(default_factory=dict)
    errors: list[StageError] = field(default_factory=list)
    counts: dict[str, int] = field(default_factory=dict)
    devices: dict[int, float] = field(default_factory=dict)
    ratios: dict[int, float] = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "stages": dict(self.status),
            "records": dict(sorted(self.counts.items())),
            "errors": [{"stage": e.stage, "cause": repr(e.cause)} for e in self.errors],
        }


@dataclass
class RunResult:
    output: Path
    digest: str
    clusters: dict[str, ClusterResult]
    errors: list[StageError] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


@dataclass
class _Inputs:
    probes: list[list]
    cameras: list[list]


def _is_raw(path: Path) -> bool:
    with open_text(path) as fh:
        for line in fh:
            if line.strip():
                try:
                    return "mac" in json.loads(line)
                except (ValueError, TypeError):
                    return False
    return False


def _read_inputs(m: RunManifest, dep: Deployment) -> dict[str, _Inputs]:
    """Parse every input once and split records by cluster, keeping file order."""
    cluster_of = {nid: dep.cluster_of(nid) for nid in dep.nodes}
    out = {c: _Inputs([[] for _ in m.probes], [[] for _ in m.cameras]) for c in dep.clusters}
    for fi, path in enumerate(m.probes):
        raw = _is_raw(path)
        with open_text(path) as fh:
            for no, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    if raw:
                        rec = parse_raw_probe(line)
                        dep.node(rec.sensor_id)
                    else:
                        rec = parse_probe(line, dep)
                except CrowdMobError as exc:
                    exc.args = (f"{path.name}:{no}: {exc.args[0] if exc.args else exc}",)
                    raise
                out[cluster_of[rec.sensor_id]].probes[fi].append(rec)
    for fi, path in enumerate(m.cameras):
        with open_text(path) as fh:
            for no, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    tick = parse_camera(line, dep)
                except CrowdMobError as exc:
                    exc.args = (f"{path.name}:{no}: {exc.args[0] if exc.args else exc}",)
                    raise
                out[cluster_of[tick.camera_id]].cameras[fi].append(tick)
    return out


def _write_lines(path: Path, lines) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")
            n += 1
    return n


def _span_of(m: RunManifest, probes: Sequence, ticks: Sequence, length: int) -> tuple[int, int] | None:
    if m.span is not None:
        return m.span
    ts = [e.t for e in probes] + [c.t for c in ticks]
    if not ts:
        return None
    t0, t1 = min(ts), max(ts)
    return t0 - t0 % length, t1 - t1 % length + length


class _ClusterRun:
    def __init__(self, m: RunManifest, dep: Deployment, cluster_id: str, inputs: _Inputs, out_dir: Path):
        self.m = m
        self.s = m.settings
        self.dep = dep
        self.cid = cluster_id
        self.inputs = inputs
        self.dir = out_dir
        self.res = ClusterResult(cluster_id)
        self.spec = dep.clusters[cluster_id]

    def _applies(self, stage: str) -> bool:
        if stage in CMAS_ONLY and self.spec.system is not SystemKind.CMAS:
            return False
        if stage in CCLS_ONLY and self.spec.system is not SystemKind.CCLS:
            return False
        return True

    def _stage(self, name: str, fn) -> bool:
        st = self.res.status
        if not self._applies(name):
            st[name] = "n/a"
            return False
        if name not in self.m.stages and name not in ("ingest", "anonymize"):
            st[name] = "disabled"
            return False
        if any(st.get(d) in ("failed", "skipped") for d in NEEDS.get(name, ())):
            st[name] = "skipped"
            return False
        try:
            fn()
        except Exception as exc:  # recorded, later stages see the failure
            err = StageError(name, exc, self.cid)
            log.error("%s", err)
            self.res.errors.append(err)
            st[name] = "failed"
            return False
        st[name] = "ok"
        return True

    def _out(self, name: str, lines) -> None:
        self.res.counts[name] = _write_lines(self.dir / name, lines)

    # ---------------------------------------------------------------- stages

    def ingest(self) -> None:
        dead = []
        w = self.s.window_s
        self.raw_events = list(merge_sorted(*self.inputs.probes, window_s=w, dead_letter=dead.append))
        self.ticks = list(merge_sorted(*self.inputs.cameras, window_s=w, dead_letter=dead.append))
        if dead:
            self._out("dead_letter.jsonl", (json.dumps({"t": e.t, "record": repr(e)}) for e in dead))

    def anonymize(self) -> None:
        raw = [e for e in self.raw_events if isinstance(e, RawProbe)]
        if raw and "anonymize" not in self.m.stages:
            raise ConfigError("raw MAC input requires the anonymize stage")
        if not raw:
            self.events = self.raw_events
            return
        store = KeyStore(self.s.key_period_s)
        self.events = [
            e if isinstance(e, ProbeEvent) else ProbeEvent(e.sensor_id, store.digest(e.mac, e.t), e.t, e.rssi, e.seq)
            for e in self.raw_events
        ]
        key = store.current
        if key is not None:
            key.zeroize()
        self.raw_events = []

    def aggregate(self) -> None:
        s = self.s
        self.span = _span_of(self.m, self.events, self.ticks, s.interval_s)
        sniffers = [n.id for n in self.dep.sniffers(self.cid)]
        table = ProbeTable.from_events(self.events) if self.events else ProbeTable.empty()
        self.counts = count_table(table, s.interval_s, sniffers, self.span) if self.span else []
        hourly = rollup_all(self.counts)
        self._out("interval_counts.jsonl", map(records.dumps, self.counts))
        self._out("hourly_counts.jsonl", map(records.dumps, hourly))
        total: dict[int, float] = defaultdict(float)
        for h in hourly:
            total[h.hour_start] += h.mean_unique
        self.res.devices = dict(sorted(total.items()))
        self.hourly = hourly

    def calibrate(self) -> None:
        s = self.s
        self.cal = calibrate_cluster(self.dep, self.cid, self.counts, self.ticks, s.alpha)
        ratios = self.cal.ratios
        if s.profile_days is not None and ratios:
            cut = ratios[0].interval.start - ratios[0].interval.start % 86400 + s.profile_days * 86400
            ratios = [r for r in ratios if r.interval.start < cut]
        try:
            self.profile = learn_profile(ratios, self.cid)
        except InsufficientData:
            self.profile = None
        if self.profile is not None:
            # re-run so camera-less intervals can fall back to the learned profile
            self.cal = calibrate_cluster(self.dep, self.cid, self.counts, self.ticks, s.alpha, self.profile)
        self._out("ratios.jsonl", map(records.dumps, self.cal.ratios))
        prof = {} if self.profile is None else {
            str(k): {"ratio": v.profile_ratio, "support": v.support} for k, v in sorted(self.profile.hours.items())
        }
        (self.dir / "profile.json").write_text(json.dumps({"cluster": self.cid, "hours": prof}, sort_keys=True,
                                                          indent=1) + "\n")
        self.res.ratios = dict(sorted({h: v for (_, h), v in hourly_ratio_series(self.cal.ratios).items()}.items()))

    def estimate(self) -> None:
        self.estimates = list(self.cal.estimates)
        self._out("estimates.jsonl", map(records.dumps, self.estimates))

    def flows(self) -> None:
        pos = {n.id: n.position for n in self.dep.sniffers(self.cid)}
        self.flow_records = infer_flows(self.events, pos, self.s.max_gap_s, self.s.interval_s)
        self._out("flows.jsonl", map(records.dumps, self.flow_records))

    def stay(self) -> None:
        s = self.s
        span = getattr(self, "span", None) or _span_of(self.m, self.events, self.ticks, s.interval_s)
        ivs = [] if span is None else [Interval(t, s.interval_s) for t in range(span[0], span[1], s.interval_s)]
        areas = [n.id for n in self.dep.sniffers(self.cid)
                 if self.spec.system is SystemKind.CMAS]
        self.stays = stay_series(self.events, areas, ivs, s.gap_tolerance_s, s.waiting_threshold_s)
        self._out("stay.jsonl", map(records.dumps, self.stays))

    def presence(self) -> None:
        s = self.s
        self.sightings = sightings_from_probes(self.events, self.dep)
        self.verdicts = presence_all(self.sightings, s.epoch_s, s.min_nodes, s.rssi_min)
        self._out("presence.jsonl", map(records.dumps, self.verdicts))
        inside_per_epoch: dict[int, int] = defaultdict(int)
        for v in self.verdicts:
            if v.inside:
                inside_per_epoch[v.epoch.start] += 1
        span = getattr(self, "span", None) or _span_of(self.m, self.events, self.ticks, s.interval_s)
        self.estimates = []
        if span is not None:
            per = s.interval_s // s.epoch_s if s.interval_s >= s.epoch_s else 1
            for t in range(span[0], span[1], s.interval_s):
                occ = [inside_per_epoch.get(e, 0) for e in range(t, t + s.interval_s, s.epoch_s)]
                self.estimates.append(CrowdEstimate(self.cid, Interval(t, s.interval_s),
                                                    sum(occ) / per, Method.PRESENCE_COUNT))
        self._out("estimates.jsonl", map(records.dumps, self.estimates))

    def locate(self) -> None:
        s = self.s
        inside = {(v.anon_id, v.epoch.start) for v in self.verdicts if v.inside}
        sel = [x for x in self.sightings if (x.anon_id, x.t - x.t % s.epoch_s) in inside]
        self.fixes = locate_all(sel, PathLossParams(s.p0, s.n, s.g), s.fix_window_s)
        self._out("fixes.jsonl", map(records.dumps, self.fixes))

    def heatmap(self) -> None:
        spec = GridSpec.covering(bounding_box(self.spec.site), self.s.cell_m)
        grid = heatmap(self.fixes, spec)
        (self.dir / "heatmap.csv").write_text(grid.to_csv())
        (self.dir / "heatmap.pgm").write_bytes(grid.to_pgm())
        (self.dir / "heatmap.svg").write_text(grid.to_svg())
        self.res.counts["heatmap_overflow"] = grid.overflow

    def annotate(self) -> None:
        docs = []
        for e in getattr(self, "estimates", ()):
            docs.append(encode(annotate_estimate(e, self.dep)))
        for f in getattr(self, "flow_records", ()):
            docs.append(encode(annotate_flow(f, self.dep)))
        for st in getattr(self, "stays", ()):
            docs.extend(encode(o) for o in annotate_stay(st, self.dep))
        self._out("observations.jsonl", docs)

    def charts(self) -> None:
        d = self.dir
        per_sensor: dict[str, dict[int, float]] = defaultdict(dict)
        for h in getattr(self, "hourly", ()):
            per_sensor[h.sensor_id][h.hour_start] = h.mean_unique
        (d / "hourly_devices.csv").write_text(report.series_csv(per_sensor, "mean_unique_devices"))
        (d / "hourly_devices.svg").write_text(
            report.line_chart(per_sensor, f"{self.cid}: unique Wi-Fi devices (hourly mean of 5-min counts)", "devices"))
        if self.spec.system is SystemKind.CMAS:
            series = {self.cid: self.res.ratios}
            (d / "hourly_ratio.csv").write_text(report.series_csv(series, "ratio"))
            (d / "hourly_ratio.svg").write_text(
                report.line_chart(series, f"{self.cid}: camera/Wi-Fi ratio (hourly median)", "ratio", bands=(0.2, 2.0)))

    def run(self) -> ClusterResult:
        self.dir.mkdir(parents=True, exist_ok=True)
        self.raw_events, self.ticks, self.events = [], [], []
        for name in STAGES:
            self._stage(name, getattr(self, name))
        self._stage_charts()
        (self.dir / "summary.json").write_text(json.dumps(self.res.summary(), sort_keys=True, indent=1) + "\n")
        return self.res

    def _stage_charts(self) -> None:
        try:
            self.charts()
        except Exception as exc:
            err = StageError("report", exc, self.cid)
            self.res.errors.append(err)
            self.res.status["report"] = "failed"


def run(manifest: RunManifest) -> RunResult:
    m = manifest
    out = Path(m.output)
    out.mkdir(parents=True, exist_ok=True)
    dep = load_deployment(m.deployment)
    workers = m.assignments(dep)
    digest = m.digest()
    pinned = m.pinned()
    pinned["digest"] = digest
    (out / "manifest.json").write_text(json.dumps(pinned, sort_keys=True, indent=1) + "\n")

    results: dict[str, ClusterResult] = {}
    try:
        inputs = _read_inputs(m, dep)
    except Exception as exc:
        for cid in sorted(dep.clusters):
            r = ClusterResult(cid, {"ingest": "failed"})
            r.errors.append(StageError("ingest", exc, cid))
            results[cid] = r
    else:
        by_worker: dict[int, list[str]] = defaultdict(list)
        for cid, w in workers.items():
            by_worker[w].append(cid)

        def work(cids: list[str]) -> list[ClusterResult]:
            return [_ClusterRun(m, dep, c, inputs[c], out / "clusters" / c).run() for c in sorted(cids)]

        with ThreadPoolExecutor(max_workers=max(1, len(by_worker))) as pool:
            futures = [pool.submit(work, by_worker[w]) for w in sorted(by_worker)]
            for f in futures:
                for r in f.result():
                    results[r.cluster_id] = r

    _write_report(out, dep, results)
    errors = [e for cid in sorted(results) for e in results[cid].errors]
    summary = {
        "digest": digest,
        "ok": not errors,
        "clusters": {cid: results[cid].summary() for cid in sorted(results)},
    }
    (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n")
    return RunResult(out, digest, dict(sorted(results.items())), errors)


def _write_report(out: Path, dep: Deployment, results: Mapping[str, ClusterResult]) -> None:
    d = out / "report"
    d.mkdir(parents=True, exist_ok=True)
    devices = {cid: r.devices for cid, r in sorted(results.items())}
    ratios = {cid: r.ratios for cid, r in sorted(results.items())
              if dep.clusters[cid].system is SystemKind.CMAS}
    (d / "hourly_devices.csv").write_text(report.series_csv(devices, "unique_devices"))
    (d / "hourly_ratio.csv").write_text(report.series_csv(ratios, "ratio"))
    (d / "hourly_devices.svg").write_text(
        report.line_chart(devices, "Unique Wi-Fi devices per cluster (hourly)", "devices"))
    (d / "hourly_ratio.svg").write_text(
        report.line_chart(ratios, "Camera/Wi-Fi ratio per cluster (hourly)", "ratio", bands=(0.2, 2.0)))
    envelope = {}
    for cid, series in ratios.items():
        v = list(series.values())
        envelope[cid] = {
            "hours": len(v),
            "in_0.2_2.0": sum(1 for x in v if 0.2 <= x <= 2.0),
            "max": max(v) if v else None,
            "median": statistics.median(v) if v else None,
        }
    (d / "ratio_envelope.json").write_text(json.dumps(envelope, sort_keys=True, indent=1) + "\n")
