import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lifecycle_sim.control import (
    DeploymentPlan,
    Finalize,
    Fleet,
    Spawn,
    apply_plan,
    inject_failure,
    place_spawn,
    provision_request,
    schedule_tick,
)
from lifecycle_sim.fsm import Constraint, Outcome, ServiceState
from lifecycle_sim.scaler import ScalerConfig
from lifecycle_sim.topology import build_topology

S = ServiceState
DEPLOY = Outcome(Constraint.MIN, True)


def fleet(cap=2):
    return Fleet(build_topology(), ScalerConfig(), instance_cap=cap)


def test_provision_reasons():
    f = fleet()
    assert provision_request("nowhere", f.geo, f).reason == "unknown"
    assert provision_request(None, f.geo, f).reason == "unknown"
    assert provision_request("edge-0", f.geo, f).reason == "no-discoverable-instance"
    f.create("edge-0", 0, state=S.DISCOVERABLE)
    assert provision_request("edge-0", f.geo, f).routed
    f.set_available("edge-0", False, 1)
    assert provision_request("edge-0", f.geo, f).reason == "unavailable"


def test_create_discoverable_logs_deploy():
    f = fleet()
    inst = f.create("edge-1", 3.0, state=S.DISCOVERABLE)
    assert inst.state is S.DISCOVERABLE and inst.activated_at == 3.0
    assert [e.kind for e in f.events] == ["spawn", "transition"]
    assert "trigger=deploy" in f.events[1].line()


def test_max_demand_spawns_on_origin():
    f = fleet()
    inst = f.create("edge-0", 0, state=S.DISCOVERABLE)
    plan = schedule_tick(f, {inst.id: 200}, 5.0)
    assert plan.spawns() == [Spawn("edge-0", plan.spawns()[0].reason, inst.id)]
    assert inst.state is S.DISCOVERABLE


def test_zero_demand_finalizes_everything():
    f = fleet()
    ids = [f.create(n, 0, state=S.DISCOVERABLE).id for n in ("edge-0", "edge-1", "edge-2")]
    plan = schedule_tick(f, {i: 0 for i in ids}, 5.0)
    assert sorted(a.instance_id for a in plan.finalizes()) == ids
    apply_plan(plan, f, 5.0)
    for i in ids:
        assert f.instances[i].state is S.FINAL and f.instances[i].finalized_at == 5.0
    assert f.violations() == []


def test_mid_band_empty_plan():
    f = fleet()
    inst = f.create("edge-0", 0, state=S.DISCOVERABLE)
    plan = schedule_tick(f, {inst.id: 10}, 5.0)   # U = 2, inside the dead band
    assert len(plan) == 0 and inst.state is S.DISCOVERABLE


def test_pinned_instances_are_not_scaled():
    f = fleet()
    inst = f.create("fog-0", 0, state=S.DISCOVERABLE, pinned=True)
    assert len(schedule_tick(f, {inst.id: 0}, 5.0)) == 0
    assert inst.state is S.DISCOVERABLE


def test_place_spawn_order():
    f = fleet(cap=1)
    topo = f.topology
    origin = f.create("edge-0", 0, state=S.DISCOVERABLE)
    sibling = [n for n in topo.zone(topo.nodes["edge-0"].zone_id).node_ids if n != "edge-0"]
    expected = sibling[0] if sibling else "fog-0"
    assert place_spawn(origin, topo, f) == expected
    for n in sibling:
        f.create(n, 0)
    assert place_spawn(origin, topo, f) == "fog-0"
    f.create("fog-0", 0)
    f.create("fog-1", 0)
    assert place_spawn(origin, topo, f) == "cloud-0"
    f.create("cloud-0", 0)
    assert place_spawn(origin, topo, f) is None


def test_saturation_logged():
    f = fleet(cap=1)
    for n in f.topology.nodes:
        f.create(n, 0, state=S.DISCOVERABLE)
    plan = schedule_tick(f, {0: 500}, 5.0)
    assert plan.spawns() == [] and f.counts["saturation"] == 1


def test_apply_spawn_creates_stored():
    f = fleet()
    events = apply_plan(DeploymentPlan([Spawn("edge-3")]), f, 10.0)
    (inst,) = f.on_node("edge-3")
    assert inst.state is S.STORED and inst.created_at == 10.0
    assert events[0].kind == "spawn"


def test_spawn_on_failed_node_is_constraint():
    f = fleet()
    f.set_available("edge-3", False, 0)
    events = apply_plan(DeploymentPlan([Spawn("edge-3")]), f, 10.0)
    assert events[-1].kind == "constraint" and f.on_node("edge-3") == []
    assert f.counts["constraint"] == 1


def test_spawn_over_cap_is_constraint():
    f = fleet(cap=1)
    f.create("edge-3", 0)
    apply_plan(DeploymentPlan([Spawn("edge-3")]), f, 10.0)
    assert f.live_count("edge-3") == 1 and f.counts["constraint"] == 1


def _states(f, iid):
    return [(e.old, e.new) for e in f.events if e.instance_id == iid and e.kind == "transition"]


def test_maintenance_trace():
    f = fleet()
    inst = f.create("edge-0", 0, state=S.DISCOVERABLE)
    inject_failure(f, "edge-0", "maintenance", start=100, duration=50)
    for t in (100, 150):
        f.process_injections(t)
    assert inst.state is S.DISCOVERABLE
    d, u, i = S.DISCOVERABLE.value, S.UNDISCOVERABLE.value, S.INACTIVE.value
    assert _states(f, inst.id)[1:] == [(d, u), (u, i), (i, d)]
    assert f.geo.is_available("edge-0")


def test_hardware_failure_finalizes():
    f = fleet()
    inst = f.create("edge-0", 0, state=S.DISCOVERABLE)
    inject_failure(f, "edge-0", "hardware", start=10, duration=20)
    f.process_injections(10)
    assert inst.state is S.FINAL and inst.finalized_at == 10
    assert not f.geo.is_available("edge-0")
    f.process_injections(30)
    assert f.geo.is_available("edge-0") and inst.state is S.FINAL


def test_overlapping_injections_merge():
    f = fleet()
    inject_failure(f, "fog-0", "maintenance", 100, 100)
    merged = inject_failure(f, "fog-0", "maintenance", 150, 100)
    assert (merged.start, merged.end) == (100, 250) and len(f.injections) == 1
    inject_failure(f, "fog-0", "hardware", 120, 10)
    assert len(f.injections) == 2


def test_injection_argument_checks():
    f = fleet()
    with pytest.raises(KeyError):
        inject_failure(f, "nope", "hardware", 0, 1)
    with pytest.raises(ValueError):
        inject_failure(f, "fog-0", "flood", 0, 1)
    with pytest.raises(ValueError):
        inject_failure(f, "fog-0", "hardware", 0, 0)


def test_finalize_sets_timestamp():
    f = fleet()
    inst = f.create("edge-0", 0, state=S.DISCOVERABLE)
    apply_plan(DeploymentPlan([Finalize(inst.id, "manual")]), f, 42.0)
    assert inst.finalized_at == 42.0 and f.violations() == []


def test_powered_mask_tracks_states():
    f = fleet()
    inst = f.create("edge-0", 0)
    assert not f.powered_mask().any()     # Stored is not billed
    f.apply(inst, DEPLOY, 1.0)
    assert f.powered_mask().sum() == 1


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(st.integers(0, 400), min_size=1, max_size=6), min_size=1, max_size=12))
def test_cap_never_exceeded_and_plans_deterministic(rounds):
    def play():
        f = fleet()
        f.create("edge-0", 0, state=S.DISCOVERABLE)
        trace = []
        for k, rr in enumerate(rounds):
            now = 5.0 * (k + 1)
            live = sorted(i.id for i in f.instances.values() if i.live)
            samples = {iid: rr[j % len(rr)] for j, iid in enumerate(live)}
            plan = schedule_tick(f, samples, now)
            trace.append(plan.actions)
            apply_plan(plan, f, now)
            assert f.violations() == []
            for inst in f.instances.values():
                if inst.state is S.STORED and inst.live:
                    f.apply(inst, DEPLOY, now)
        return trace

    assert play() == play()
