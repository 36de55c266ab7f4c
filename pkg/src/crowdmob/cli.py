"""``crowdmob`` command line.

Record-producing verbs write JSON lines to ``--out`` (default stdout). Probe
inputs may be several files; they are merged in time order with a watermark
window and late records go to ``--dead-letter`` when given.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from contextlib import contextmanager
from pathlib import Path

from . import __version__, records
from .aggregate import count_table, rollup_all
from .analytics import infer_flows, stay_series
from .anonymize import anonymize_stream
from .calibrate import calibrate_cluster, learn_profile
from .errors import CrowdMobError, InsufficientData
from .ingest import ProbeTable, format_camera, format_probe, merge_sorted, open_text, read_cameras, read_probes
from .locate import (
    GridSpec, PathLossParams, heatmap, locate_all, presence_all, sightings_from_probes,
)
from .model import Interval, SystemKind, bounding_box, load_deployment
from .pipeline import load_manifest, run
from .semantics import annotate_estimate, annotate_flow, annotate_stay, encode
from .simulate import generate, preset, write_scenario


@contextmanager
def _output(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8") as fh:
            yield fh


def _merged(paths, parse, window_s, dead_letter_path, fmt):
    dead = []
    items = list(merge_sorted(*(parse(p) for p in paths), window_s=window_s, dead_letter=dead.append))
    if dead_letter_path:
        with open(dead_letter_path, "w", encoding="utf-8") as fh:
            for d in dead:
                fh.write(fmt(d) + "\n")
    elif dead:
        logging.getLogger("crowdmob").warning("%d late records dropped", len(dead))
    return items


def _probes(args, dep):
    return _merged(args.probes, lambda p: read_probes(p, dep), args.window_s, args.dead_letter, format_probe)


def _cameras(args, dep):
    return _merged(args.cameras, lambda p: read_cameras(p, dep), args.window_s, None, format_camera)


def _span(events, length):
    if not events:
        return None
    t0 = min(e.t for e in events)
    t1 = max(e.t for e in events)
    return t0 - t0 % length, t1 - t1 % length + length


def cmd_simulate(args) -> int:
    overrides = {}
    if args.duration_s is not None:
        overrides["duration_s"] = args.duration_s
    if args.sigma_db is not None:
        overrides["sigma_db"] = args.sigma_db
    if args.ownership is not None:
        overrides["device_ownership_prob"] = args.ownership
    scn = generate(preset(args.preset, seed=args.seed, **overrides))
    paths = write_scenario(scn, args.out, raw=args.raw)
    for name, p in sorted(paths.items()):
        print(f"{name}\t{p}")
    return 0


def cmd_anonymize(args) -> int:
    with open_text(args.input) as src, _output(args.out) as dst:
        n = anonymize_stream(src, dst, args.period_s)
    print(f"anonymized {n} probes", file=sys.stderr)
    return 0


def cmd_aggregate(args) -> int:
    dep = load_deployment(args.deployment)
    events = _probes(args, dep)
    table = ProbeTable.from_events(events) if events else ProbeTable.empty()
    sensors = [n.id for n in dep.sniffers()]
    counts = count_table(table, args.interval_s, sensors, _span(events, args.interval_s)) if events else []
    with _output(args.out) as fh:
        records.write_records(fh, rollup_all(counts) if args.hourly else counts)
    return 0


def _calibrations(args, dep, with_profile: bool):
    events = _probes(args, dep)
    ticks = _cameras(args, dep)
    span = _span(list(events) + list(ticks), args.interval_s)
    table = ProbeTable.from_events(events) if events else ProbeTable.empty()
    counts = count_table(table, args.interval_s, [n.id for n in dep.sniffers()], span) if span else []
    out = []
    for cid in sorted(dep.clusters):
        if dep.clusters[cid].system is not SystemKind.CMAS:
            continue
        cal = calibrate_cluster(dep, cid, counts, ticks, args.alpha)
        if with_profile:
            ratios = cal.ratios
            if args.profile_days and ratios:
                day0 = ratios[0].interval.start - ratios[0].interval.start % 86400
                ratios = [r for r in ratios if r.interval.start < day0 + args.profile_days * 86400]
                # camera treated as inactive after the learning window
                ticks_c = [t for t in ticks if t.interval.start < day0 + args.profile_days * 86400]
            else:
                ticks_c = ticks
            try:
                prof = learn_profile(ratios, cid)
            except InsufficientData:
                prof = None
            cal = calibrate_cluster(dep, cid, counts, ticks_c, args.alpha, prof)
        out.append(cal)
    return out


def cmd_calibrate(args) -> int:
    dep = load_deployment(args.deployment)
    with _output(args.out) as fh:
        for cal in _calibrations(args, dep, with_profile=False):
            records.write_records(fh, cal.ratios)
    return 0


def cmd_estimate(args) -> int:
    dep = load_deployment(args.deployment)
    with _output(args.out) as fh:
        for cal in _calibrations(args, dep, with_profile=True):
            records.write_records(fh, cal.estimates)
    return 0


def cmd_flows(args) -> int:
    dep = load_deployment(args.deployment)
    pos = {n.id: n.position for n in dep.sniffers()}
    flows = infer_flows(_probes(args, dep), pos, args.max_gap_s, args.interval_s)
    with _output(args.out) as fh:
        records.write_records(fh, flows)
    return 0


def cmd_stay(args) -> int:
    dep = load_deployment(args.deployment)
    events = _probes(args, dep)
    span = _span(events, args.interval_s)
    ivs = [] if span is None else [Interval(t, args.interval_s) for t in range(span[0], span[1], args.interval_s)]
    stays = stay_series(events, [n.id for n in dep.sniffers()], ivs, args.gap_s, args.waiting_s)
    with _output(args.out) as fh:
        records.write_records(fh, stays)
    return 0


def cmd_presence(args) -> int:
    dep = load_deployment(args.deployment)
    sightings = sightings_from_probes(_probes(args, dep), dep)
    with _output(args.out) as fh:
        records.write_records(fh, presence_all(sightings, args.epoch_s, args.min_nodes, args.rssi_min))
    return 0


def cmd_locate(args) -> int:
    dep = load_deployment(args.deployment)
    sightings = sightings_from_probes(_probes(args, dep), dep)
    if args.inside_only:
        inside = {(v.anon_id, v.epoch.start)
                  for v in presence_all(sightings, args.epoch_s, args.min_nodes, args.rssi_min) if v.inside}
        sightings = [s for s in sightings if (s.anon_id, s.t - s.t % args.epoch_s) in inside]
    fixes = locate_all(sightings, PathLossParams(args.p0, args.n, args.g), args.fix_window_s)
    with _output(args.out) as fh:
        records.write_records(fh, fixes)
    return 0


def cmd_heatmap(args) -> int:
    dep = load_deployment(args.deployment)
    site = dep.clusters[args.cluster].site if args.cluster else next(
        (c.site for _, c in sorted(dep.clusters.items()) if c.site is not None), None)
    if site is None:
        raise CrowdMobError("deployment has no cluster site to grid")
    with open_text(args.fixes) as fh:
        fixes = [records.loads(line) for line in fh if line.strip()]
    grid = heatmap(fixes, GridSpec.covering(bounding_box(site), args.cell_m))
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    Path(f"{prefix}.csv").write_text(grid.to_csv())
    Path(f"{prefix}.pgm").write_bytes(grid.to_pgm())
    Path(f"{prefix}.svg").write_text(grid.to_svg())
    print(f"{grid.total - grid.overflow} fixes binned, {grid.overflow} outside the grid", file=sys.stderr)
    return 0


def cmd_annotate(args) -> int:
    from .analytics import FlowRecord, StayStats
    from .calibrate import CrowdEstimate

    dep = load_deployment(args.deployment)
    with open_text(args.records) as src, _output(args.out) as dst:
        for line in src:
            if not line.strip():
                continue
            rec = records.loads(line)
            if isinstance(rec, CrowdEstimate):
                docs = [annotate_estimate(rec, dep)]
            elif isinstance(rec, FlowRecord):
                docs = [annotate_flow(rec, dep)]
            elif isinstance(rec, StayStats):
                docs = list(annotate_stay(rec, dep))
            else:
                continue
            for d in docs:
                dst.write(encode(d) + "\n")
    return 0


def cmd_run(args) -> int:
    m = load_manifest(args.manifest)
    result = run(m)
    for cid, r in result.clusters.items():
        failed = [s for s, st in r.status.items() if st == "failed"]
        print(f"{cid}\t{'FAILED ' + ','.join(failed) if failed else 'ok'}")
    print(f"report\t{result.output}")
    return 0 if result.ok else 1


def _probe_args(p, cameras=False):
    p.add_argument("--deployment", required=True)
    p.add_argument("--probes", nargs="*", default=[], help="probe NDJSON files (gzip ok, '-' for stdin)")
    if cameras:
        p.add_argument("--cameras", nargs="*", default=[])
    p.add_argument("--window-s", type=float, default=60.0, help="merge watermark tolerance")
    p.add_argument("--dead-letter", help="write late probe records here")
    p.add_argument("--interval-s", type=int, default=300)
    p.add_argument("--out", help="output file (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="crowdmob", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("simulate", help="generate a labelled synthetic scenario")
    p.add_argument("--preset", default="goldcoast")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.add_argument("--duration-s", type=int)
    p.add_argument("--sigma-db", type=float)
    p.add_argument("--ownership", type=float, help="device ownership probability")
    p.add_argument("--raw", action="store_true", help="also write raw-MAC probes")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("anonymize", help="replace MACs by session-keyed HMAC digests")
    p.add_argument("input")
    p.add_argument("--out")
    p.add_argument("--period-s", type=int, default=86_400, help="key rotation period")
    p.set_defaults(fn=cmd_anonymize)

    p = sub.add_parser("aggregate", help="unique devices per sensor and interval")
    _probe_args(p)
    p.add_argument("--hourly", action="store_true", help="emit hourly means instead")
    p.set_defaults(fn=cmd_aggregate)

    for name, fn, hlp in (("calibrate", cmd_calibrate, "camera/Wi-Fi ratios at choke points"),
                          ("estimate", cmd_estimate, "crowd estimates for every sniffer")):
        p = sub.add_parser(name, help=hlp)
        _probe_args(p, cameras=True)
        p.add_argument("--alpha", type=float, default=0.3)
        p.add_argument("--profile-days", type=int,
                       help="learn the hourly profile on the first N days; cameras count as off afterwards")
        p.set_defaults(fn=fn)

    p = sub.add_parser("flows", help="device transitions between sensors")
    _probe_args(p)
    p.add_argument("--max-gap-s", type=float, default=300)
    p.set_defaults(fn=cmd_flows)

    p = sub.add_parser("stay", help="mean dwell and waiting devices per area")
    _probe_args(p)
    p.add_argument("--gap-s", type=float, default=120)
    p.add_argument("--waiting-s", type=float, default=300)
    p.set_defaults(fn=cmd_stay)

    for name, fn, hlp in (("presence", cmd_presence, "inside/outside verdict per device and epoch"),
                          ("locate", cmd_locate, "weighted-centroid position fixes")):
        p = sub.add_parser(name, help=hlp)
        _probe_args(p)
        p.add_argument("--epoch-s", type=int, default=60)
        p.add_argument("--rssi-min", type=float, default=-75)
        p.add_argument("--min-nodes", type=int, default=6)
        if name == "locate":
            p.add_argument("--p0", type=float, default=-40.0)
            p.add_argument("--n", type=float, default=2.0)
            p.add_argument("--g", type=float, default=1.0)
            p.add_argument("--fix-window-s", type=int, default=10)
            p.add_argument("--inside-only", action="store_true")
        p.set_defaults(fn=fn)

    p = sub.add_parser("heatmap", help="bin fixes into a grid over a cluster site")
    p.add_argument("--deployment", required=True)
    p.add_argument("--fixes", required=True)
    p.add_argument("--cluster")
    p.add_argument("--cell-m", type=float, default=2.0)
    p.add_argument("--out", required=True, help="output prefix; writes .csv, .pgm and .svg")
    p.set_defaults(fn=cmd_heatmap)

    p = sub.add_parser("annotate", help="semantic observations for estimate/flow/stay records")
    p.add_argument("--deployment", required=True)
    p.add_argument("--records", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_annotate)

    p = sub.add_parser("run", help="full per-cluster pipeline from a manifest")
    p.add_argument("--manifest", required=True)
    p.set_defaults(fn=cmd_run)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except BrokenPipeError:
        # reader went away (`| head`); keep the interpreter's final flush quiet
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 1
    except (CrowdMobError, OSError, ValueError) as exc:
        print(f"crowdmob: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
