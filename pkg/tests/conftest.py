import pytest

from crowdmob.model import (
    Circle, ClusterSpec, Deployment, NodeKind, Point, Rectangle, SensorNode, SystemKind, TrafficClass,
)
from crowdmob.simulate import generate, preset

HEX = "0123456789abcdef"


def anon(i: int) -> str:
    """Deterministic fake 64-hex digest for hand-built events."""
    return f"{i:064x}"


def two_cluster_deployment() -> Deployment:
    nodes = {}

    def add(nid, kind, x, y, cluster, cov=None, **kw):
        p = Point(x, y)
        nodes[nid] = SensorNode(nid, kind, p, cov or Circle(p, 20.0), cluster, **kw)

    add("a-1", NodeKind.WIFI_SNIFFER, 0, 0, "A")
    add("a-2", NodeKind.WIFI_SNIFFER, 100, 0, "A")
    add("a-3", NodeKind.WIFI_SNIFFER, 0, 100, "A")
    add("a-cam", NodeKind.STEREO_CAMERA, 0, 0, "A")
    add("a-cp", NodeKind.CHOKE_POINT, 0, 0, "A", camera_id="a-cam", sniffer_id="a-1")
    add("b-1", NodeKind.WIFI_SNIFFER, 1000, 0, "B")
    add("b-2", NodeKind.WIFI_SNIFFER, 1100, 0, "B")
    add("b-cam", NodeKind.STEREO_CAMERA, 1000, 0, "B")
    add("b-cp", NodeKind.CHOKE_POINT, 1000, 0, "B", camera_id="b-cam", sniffer_id="b-1")
    clusters = {
        "A": ClusterSpec("A", TrafficClass.HEAVY, ("a-1", "a-2", "a-3", "a-cam", "a-cp")),
        "B": ClusterSpec("B", TrafficClass.LIGHT, ("b-1", "b-2", "b-cam", "b-cp")),
    }
    return Deployment(nodes, clusters)


def ccls_deployment() -> Deployment:
    nodes = {}
    for i, (x, y) in enumerate([(0, 0), (10, 0), (20, 0), (20, 10), (10, 10), (0, 10), (0, 5), (20, 5)]):
        nid = f"m-{i + 1}"
        nodes[nid] = SensorNode(nid, NodeKind.WIFI_SNIFFER, Point(x, y), Point(x, y), "M")
    site = Rectangle(Point(0, 0), Point(20, 10))
    return Deployment(nodes, {"M": ClusterSpec("M", TrafficClass.LIGHT, tuple(sorted(nodes)),
                                               SystemKind.CCLS, site)})


@pytest.fixture
def dep2():
    return two_cluster_deployment()


@pytest.fixture
def dep_ccls():
    return ccls_deployment()


@pytest.fixture(scope="session")
def gc_small():
    """Three busy afternoon hours of the goldcoast preset."""
    cfg = preset("goldcoast", seed=11, duration_s=3 * 3600, start=1_521_676_800 + 12 * 3600)
    return generate(cfg)


@pytest.fixture(scope="session")
def sm_small():
    return generate(preset("santander", seed=11, duration_s=1800))


# acceptance verdict lines, printed at the end of the session
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
