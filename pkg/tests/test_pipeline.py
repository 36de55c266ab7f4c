import json
from pathlib import Path

import pytest

from crowdmob.cli import main
from crowdmob.errors import ConfigError
from crowdmob.pipeline import RunManifest, Settings, load_manifest, run
from crowdmob.simulate import write_scenario


def tree(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def manifest(tmp, scn_dir, out, **extra):
    raw = {"deployment": str(scn_dir / "deployment.json"),
           "inputs": {"probes": [str(scn_dir / "probes.jsonl")], "cameras": [str(scn_dir / "cameras.jsonl")]},
           "output": str(out)}
    raw.update(extra)
    path = tmp / f"manifest-{out.name}.json"
    path.write_text(json.dumps(raw))
    return path


@pytest.fixture(scope="module")
def gc_dir(tmp_path_factory, gc_small):
    d = tmp_path_factory.mktemp("gc")
    write_scenario(gc_small, d, raw=True)
    return d


@pytest.fixture(scope="module")
def sm_dir(tmp_path_factory, sm_small):
    d = tmp_path_factory.mktemp("sm")
    write_scenario(sm_small, d)
    return d


def test_same_manifest_same_bundle(tmp_path, gc_dir):
    a = run(load_manifest(manifest(tmp_path, gc_dir, tmp_path / "a")))
    b = run(load_manifest(manifest(tmp_path, gc_dir, tmp_path / "b")))
    assert a.ok and b.ok and a.digest == b.digest
    ta, tb = tree(tmp_path / "a"), tree(tmp_path / "b")
    assert ta == tb
    for cid in ("gc-c1", "gc-c2"):
        for name in ("interval_counts.jsonl", "ratios.jsonl", "estimates.jsonl", "flows.jsonl", "stay.jsonl",
                     "observations.jsonl", "hourly_ratio.svg", "summary.json"):
            assert f"clusters/{cid}/{name}" in ta
    for name in ("manifest.json", "summary.json", "report/hourly_devices.csv", "report/hourly_ratio.svg",
                 "report/ratio_envelope.json"):
        assert name in ta


def test_worker_layout_does_not_change_outputs(tmp_path, gc_dir):
    run(load_manifest(manifest(tmp_path, gc_dir, tmp_path / "a")))
    run(load_manifest(manifest(tmp_path, gc_dir, tmp_path / "b", workers={"gc-c1": 0, "gc-c2": 0})))
    for cid in ("gc-c1", "gc-c2"):
        assert tree(tmp_path / "a" / "clusters" / cid) == tree(tmp_path / "b" / "clusters" / cid)


def test_removing_other_cluster_inputs_leaves_cluster_untouched(tmp_path, gc_dir):
    only = tmp_path / "only"
    only.mkdir()
    (only / "deployment.json").write_bytes((gc_dir / "deployment.json").read_bytes())
    keep = {f"gc-{i:02d}" for i in range(1, 10)} | {"gc-cam-1"}
    for name, key in (("probes.jsonl", "s"), ("cameras.jsonl", "c")):
        lines = (gc_dir / name).read_text().splitlines()
        (only / name).write_text("".join(l + "\n" for l in lines if json.loads(l)[key] in keep))
    full = run(load_manifest(manifest(tmp_path, gc_dir, tmp_path / "full")))
    part = run(load_manifest(manifest(tmp_path, only, tmp_path / "part")))
    assert full.digest != part.digest
    assert tree(tmp_path / "full/clusters/gc-c1") == tree(tmp_path / "part/clusters/gc-c1")
    assert part.clusters["gc-c2"].counts.get("interval_counts.jsonl", 0) == 0


def test_ccls_cluster_outputs(tmp_path, sm_dir):
    res = run(load_manifest(manifest(tmp_path, sm_dir, tmp_path / "o")))
    assert res.ok
    c = tmp_path / "o/clusters/sm-market"
    st = res.clusters["sm-market"].status
    assert st["presence"] == st["locate"] == st["heatmap"] == "ok"
    assert st["calibrate"] == "n/a"
    est = [json.loads(l) for l in (c / "estimates.jsonl").read_text().splitlines()]
    assert est and {e["method"] for e in est} == {"PresenceCount"}
    assert (c / "fixes.jsonl").stat().st_size > 0
    assert (c / "heatmap.pgm").read_bytes().startswith(b"P2")
    assert not (c / "stay.jsonl").read_text()
    obs = (c / "observations.jsonl").read_text()
    assert "m3-lite:PeopleCountSensor" in obs


def test_raw_input_needs_anonymize(tmp_path, gc_dir, capsys):
    raw_in = {"probes": [str(gc_dir / "probes.raw.jsonl")], "cameras": [str(gc_dir / "cameras.jsonl")]}
    stages = ["ingest", "aggregate", "calibrate", "estimate"]
    m = manifest(tmp_path, gc_dir, tmp_path / "bad", inputs=raw_in, stages=stages)
    res = run(load_manifest(m))
    assert not res.ok
    st = res.clusters["gc-c1"].status
    assert st["anonymize"] == "failed" and st["aggregate"] == "skipped" and st["estimate"] == "skipped"
    assert main(["run", "--manifest", str(m)]) == 1
    assert "FAILED anonymize" in capsys.readouterr().out


def test_raw_input_counts_match_anonymized(tmp_path, gc_dir):
    raw_in = {"probes": [str(gc_dir / "probes.raw.jsonl")], "cameras": [str(gc_dir / "cameras.jsonl")]}
    res = run(load_manifest(manifest(tmp_path, gc_dir, tmp_path / "raw", inputs=raw_in)))
    assert res.ok
    run(load_manifest(manifest(tmp_path, gc_dir, tmp_path / "anon")))
    for cid in ("gc-c1", "gc-c2"):
        for name in ("interval_counts.jsonl", "ratios.jsonl", "estimates.jsonl"):
            assert (tmp_path / "raw/clusters" / cid / name).read_bytes() == \
                (tmp_path / "anon/clusters" / cid / name).read_bytes()
    assert "mac" not in (tmp_path / "raw/clusters/gc-c1/flows.jsonl").read_text()


def test_empty_inputs(tmp_path, gc_dir):
    (tmp_path / "p.jsonl").write_text("")
    (tmp_path / "c.jsonl").write_text("")
    m = tmp_path / "m.json"
    m.write_text(json.dumps({"deployment": str(gc_dir / "deployment.json"),
                             "inputs": {"probes": ["p.jsonl"], "cameras": ["c.jsonl"]}, "output": "out"}))
    res = run(load_manifest(m))
    assert res.ok
    assert (tmp_path / "out/clusters/gc-c1/interval_counts.jsonl").read_text() == ""
    assert b"no data" in (tmp_path / "out/report/hourly_ratio.svg").read_bytes()


def test_fixed_span_zero_fills(tmp_path, gc_dir, gc_small):
    start = gc_small.config.start
    res = run(load_manifest(manifest(tmp_path, gc_dir, tmp_path / "o", span={"start": start, "end": start + 3600},
                                     stages=["ingest", "aggregate"])))
    lines = (tmp_path / "o/clusters/gc-c2/interval_counts.jsonl").read_text().splitlines()
    assert len(lines) == 12 * 8
    assert res.clusters["gc-c1"].status["flows"] == "disabled"


def test_malformed_input_fails_ingest(tmp_path, gc_dir):
    bad = tmp_path / "bad.jsonl"
    bad.write_text((gc_dir / "probes.jsonl").read_text().splitlines()[0] + "\n{nope\n")
    m = manifest(tmp_path, gc_dir, tmp_path / "o", inputs={"probes": [str(bad)], "cameras": []})
    res = run(load_manifest(m))
    assert not res.ok
    assert all(r.status["ingest"] == "failed" for r in res.clusters.values())
    summary = json.loads((tmp_path / "o/summary.json").read_text())
    assert "bad.jsonl:2" in summary["clusters"]["gc-c1"]["errors"][0]["cause"]


@pytest.mark.parametrize("raw,match", [
    ({"stages": ["ingest", "teleport"]}, "unknown stages"),
    ({"settings": {"alpha": 0.3, "colour": "red"}}, "unknown settings"),
    ({"settings": {"interval_s": 7}}, "divide 3600"),
    ({"settings": {"alpha": 1.5}}, "alpha"),
    ({"span": {"start": 10, "end": 5}}, "span"),
])
def test_manifest_validation(raw, match):
    base = {"deployment": "d.json", "inputs": {"probes": [], "cameras": []}}
    with pytest.raises(ConfigError, match=match):
        RunManifest.from_dict({**base, **raw})


def test_manifest_requires_deployment_and_exact_workers(tmp_path, gc_dir):
    with pytest.raises(ConfigError):
        RunManifest.from_dict({"inputs": {}})
    m = load_manifest(manifest(tmp_path, gc_dir, tmp_path / "o", workers={"gc-c1": 0}))
    from crowdmob.model import load_deployment
    with pytest.raises(ConfigError, match="missing"):
        m.assignments(load_deployment(gc_dir / "deployment.json"))
    bad = tmp_path / "broken.json"
    bad.write_text("{")
    with pytest.raises(ConfigError):
        load_manifest(bad)


def test_manifest_relative_paths_and_digest(tmp_path, gc_dir):
    m = load_manifest(manifest(tmp_path, gc_dir, tmp_path / "o"))
    assert m.settings == Settings()
    pinned = m.pinned()
    assert pinned["probes"][0]["name"] == "probes.jsonl" and len(pinned["probes"][0]["sha256"]) == 64
    other = RunManifest(m.deployment, m.probes, m.cameras, m.output, settings=Settings(alpha=0.5))
    assert other.digest() != m.digest()
