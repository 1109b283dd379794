from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lifecycle_sim.discovery import (
    DiscoveryRouter,
    LatencyModel,
    acquire,
    discover,
    select_node,
)
from lifecycle_sim.fsm import ServiceState
from lifecycle_sim.topology import GeoIndex, Layer, build_topology

S = ServiceState
ZERO = LatencyModel(
    jitter_ms={Layer.EDGE: 0.0, Layer.FOG: 0.0, Layer.CLOUD: 0.0}, lookup_jitter_ms=0.0
)


def inst(node, state):
    return SimpleNamespace(node_id=node, state=state)


@pytest.fixture
def geo():
    return GeoIndex(build_topology())


def test_edge_preferred(geo):
    rec = discover((0, 0), geo, [inst("edge-0", S.DISCOVERABLE), inst("fog-0", S.DISCOVERABLE)], ZERO,
                   np.random.default_rng(0))
    assert rec.node_id == "edge-0" and rec.layer is Layer.EDGE


def test_fog_fallback(geo):
    rec = discover((0, 0), geo, [inst("edge-0", S.UNDISCOVERABLE), inst("fog-0", S.DISCOVERABLE)], ZERO,
                   np.random.default_rng(0))
    assert rec.node_id == "fog-0"


def test_all_final_rejects(geo):
    rec = discover((0, 0), geo, [inst("edge-0", S.FINAL), inst("cloud-0", S.FINAL)], ZERO, np.random.default_rng(0))
    assert rec.node_id is None
    assert acquire(rec, ZERO, np.random.default_rng(0)) is None


def test_zero_jitter_exact(geo):
    rng = np.random.default_rng(1)
    rec = discover((0, 0), geo, [inst("edge-0", S.DISCOVERABLE)], ZERO, rng)
    assert rec.discovery_time_ms == 50.0
    assert acquire(rec, ZERO, rng) == 70.0
    rec.cached = True
    assert acquire(rec, ZERO, rng) == 20.0


def test_cloud_slower_than_edge(geo):
    m = LatencyModel()
    e = discover((0, 0), geo, [inst("edge-0", S.DISCOVERABLE)], m, np.random.default_rng(5))
    c = discover((0, 0), geo, [inst("cloud-0", S.DISCOVERABLE)], m, np.random.default_rng(5))
    assert acquire(c, m, np.random.default_rng(9)) > acquire(e, m, np.random.default_rng(9))


def test_latency_violations():
    bad = LatencyModel(base_ms={Layer.EDGE: 100.0, Layer.FOG: 60.0, Layer.CLOUD: 120.0})
    assert any("edge < fog < cloud" in v for v in bad.violations())
    assert LatencyModel().violations() == []


@given(st.sets(st.sampled_from([f"edge-{i}" for i in range(8)] + ["fog-0", "fog-1", "cloud-0"])),
       st.integers(0, 7))
def test_in_zone_edge_always_wins(disc, zi):
    geo = GeoIndex(build_topology())
    zone = geo.topology.zones[zi]
    chosen = select_node(zone, geo, disc)
    if zone.node_ids[0] in disc:
        assert chosen == zone.node_ids[0]
    elif disc & {"fog-0", "fog-1", "cloud-0"}:
        assert geo.topology.nodes[chosen].layer is not Layer.EDGE
    else:
        assert chosen is None


def test_router_cache_and_invalidation(geo):
    router = DiscoveryRouter(geo, ZERO, 3, np.random.default_rng(0))
    users = np.array([0, 1, 2])
    zones = np.array([0, 0, -1])
    n1 = router.route(0.0, users, zones, {"fog-0"}, "p")
    assert [router.node_ids[i] for i in n1] == ["fog-0"] * 3
    # edge comes up: cached users keep fog until the entry expires
    n2 = router.route(5.0, users, zones, {"fog-0", "edge-0"}, "p")
    assert [router.node_ids[i] for i in n2] == ["fog-0"] * 3
    n3 = router.route(601.0, users, zones, {"fog-0", "edge-0"}, "p")
    assert [router.node_ids[i] for i in n3] == ["edge-0", "edge-0", "fog-0"]
    # node leaves discoverable: entry dropped immediately
    n4 = router.route(610.0, users, zones, {"fog-1"}, "p")
    assert [router.node_ids[i] for i in n4] == ["fog-1"] * 3
    summary = router.timing_summary()
    assert summary["discovery"]["overall"]["count"] == 3 + 0 + 3 + 3
    assert summary["acquisition"]["overall"]["count"] == 12


def test_router_rejects_only_when_nothing_discoverable(geo):
    router = DiscoveryRouter(geo, ZERO, 2, np.random.default_rng(0))
    out = router.route(0.0, np.array([0, 1]), np.array([0, 3]), set(), "p")
    assert (out == -1).all()


def test_router_zero_jitter_layer_times(geo):
    router = DiscoveryRouter(geo, ZERO, 3, np.random.default_rng(0))
    router.route(0.0, np.array([0]), np.array([0]), {"edge-0"}, "p")
    router.route(0.0, np.array([1]), np.array([-1]), {"fog-0"}, "p")
    router.route(0.0, np.array([2]), np.array([-1]), {"cloud-0"}, "p")
    rtt = router.timing_summary()["rtt"]["by_layer"]
    assert (rtt["edge"]["mean"], rtt["fog"]["mean"], rtt["cloud"]["mean"]) == (20.0, 60.0, 120.0)
