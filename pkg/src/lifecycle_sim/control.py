"""Provisioner, dynamic scheduler and deployment manager over a simulated fleet."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .fsm import (
    Constraint,
    Directive,
    MaintenanceEvent,
    Outcome,
    ServiceState,
    apply_transition,
    trigger_name,
)
from .metrics import UsageInterval, UsageLedger
from .scaler import ScalerConfig, StabilityWindow, scale_service_step
from .topology import GeoIndex, Layer, Topology

log = logging.getLogger(__name__)

_S = ServiceState
POWERED_STATES = (_S.DISCOVERABLE, _S.UNDISCOVERABLE, _S.INACTIVE)
ACTIVE_STATES = (_S.DISCOVERABLE, _S.UNDISCOVERABLE)

HARDWARE = "hardware"
MAINTENANCE = "maintenance"


@dataclass
class ServiceInstance:
    id: int
    node_id: str
    state: ServiceState
    window: StabilityWindow
    created_at: float
    finalized_at: Optional[float] = None
    pinned: bool = False                 # static instance, never scaled
    activated_at: Optional[float] = None
    last_trigger: object = None
    open_since: Optional[float] = None   # start of the current active interval
    u_sum: float = 0.0
    u_n: int = 0

    @property
    def live(self) -> bool:
        return self.state is not _S.FINAL


@dataclass(frozen=True)
class Spawn:
    node_id: str
    reason: str = "scale-up"
    origin: Optional[int] = None


@dataclass(frozen=True)
class Finalize:
    instance_id: int
    reason: str = "scale-down"


@dataclass(frozen=True)
class SetAvailability:
    node_id: str
    available: bool


Action = Union[Spawn, Finalize, SetAvailability]


@dataclass
class DeploymentPlan:
    actions: list = field(default_factory=list)

    def __len__(self):
        return len(self.actions)

    def spawns(self) -> list[Spawn]:
        return [a for a in self.actions if isinstance(a, Spawn)]

    def finalizes(self) -> list[Finalize]:
        return [a for a in self.actions if isinstance(a, Finalize)]


@dataclass(frozen=True)
class DeploymentEvent:
    time: float
    kind: str                 # transition, spawn, register, finalize, availability, constraint, saturation
    instance_id: Optional[int] = None
    node_id: Optional[str] = None
    old: Optional[str] = None
    new: Optional[str] = None
    detail: str = ""

    def line(self) -> str:
        parts = [f"tick={int(self.time)}", f"event={self.kind}"]
        if self.instance_id is not None:
            parts.append(f"instance={self.instance_id}")
        if self.node_id is not None:
            parts.append(f"node={self.node_id}")
        if self.old is not None or self.new is not None:
            parts.append(f"{self.old}->{self.new}")
        if self.detail:
            parts.append(f"trigger={self.detail}" if self.kind == "transition" else f"detail={self.detail}")
        return " ".join(parts)


@dataclass(frozen=True)
class Injection:
    node_id: str
    kind: str
    start: float
    end: float


@dataclass(frozen=True)
class ProvisionResult:
    routed: bool
    node_id: Optional[str] = None
    reason: str = ""


class Fleet:
    """Instance registry plus node availability and usage tracking.

    A node is powered (and billed) while it hosts a pinned instance or any
    instance in Discoverable, Undiscoverable or Inactive.
    """

    def __init__(self, topology: Topology, params: ScalerConfig, instance_cap: int = 2, geo: Optional[GeoIndex] = None):
        if instance_cap < 1:
            raise ValueError("instance_cap must be >= 1")
        self.topology = topology
        self.geo = geo or GeoIndex(topology)
        self.params = params
        self.cap = instance_cap
        self.instances: dict[int, ServiceInstance] = {}
        self.events: list[DeploymentEvent] = []
        self.injections: list[Injection] = []
        self._next_id = 0
        self.node_ids = list(topology.nodes)
        self._node_pos = {n: i for i, n in enumerate(self.node_ids)}
        n = len(self.node_ids)
        self._on_since = np.full(n, np.nan)
        self._load_int = np.zeros(n)      # integral of load% over the open interval
        self._load = np.zeros(n)
        self._powered = np.zeros(n, dtype=bool)
        self._dirty = True
        self.node_intervals: list[UsageInterval] = []
        self.instance_intervals: list[UsageInterval] = []
        self.counts = {"spawned": 0, "registered": 0, "finalized": 0, "saturation": 0, "constraint": 0}

    # -- registry ------------------------------------------------------------

    def on_node(self, node_id: str, live_only: bool = True) -> list[ServiceInstance]:
        return [i for i in self.instances.values() if i.node_id == node_id and (i.live or not live_only)]

    def live_count(self, node_id: str) -> int:
        return sum(1 for i in self.instances.values() if i.node_id == node_id and i.live)

    def discoverable_nodes(self) -> set[str]:
        return {i.node_id for i in self.instances.values() if i.state is _S.DISCOVERABLE}

    def create(self, node_id: str, now: float, state=_S.STORED, pinned=False, kind="spawn", detail="") -> ServiceInstance:
        inst = ServiceInstance(self._next_id, node_id, _S.STORED, self.params.new_window(), float(now), pinned=pinned)
        self._next_id += 1
        self.instances[inst.id] = inst
        self.events.append(DeploymentEvent(now, kind, inst.id, node_id, None, _S.STORED.value, detail))
        if state is _S.DISCOVERABLE:
            self.apply(inst, Outcome(Constraint.MIN, True), now, "deploy")
        self._dirty = True
        return inst

    def _on_state_change(self, inst: ServiceInstance, old: ServiceState, now: float, trigger: str):
        new = inst.state
        self.events.append(DeploymentEvent(now, "transition", inst.id, inst.node_id, old.value, new.value, trigger))
        if new is _S.DISCOVERABLE and inst.activated_at is None:
            inst.activated_at = float(now)
        if new in ACTIVE_STATES and inst.open_since is None:
            inst.open_since = float(now)
            inst.u_sum, inst.u_n = 0.0, 0
        if new not in ACTIVE_STATES and inst.open_since is not None:
            self._close_instance(inst, now)
        if new is _S.FINAL:
            inst.finalized_at = float(now)
            self.counts["finalized"] += 1
        self._dirty = True

    def _close_instance(self, inst: ServiceInstance, now: float):
        load = inst.u_sum / inst.u_n if inst.u_n > 0 else self._load[self._node_pos[inst.node_id]]
        self.instance_intervals.append(UsageInterval(inst.node_id, inst.open_since, float(now), float(load), inst.id))
        inst.open_since = None

    def apply(self, inst: ServiceInstance, trigger, now: float, label: Optional[str] = None) -> bool:
        old = inst.state
        new, changed = apply_transition(old, trigger, self.params.fsm_mode)
        if changed:
            inst.state = new
            self._on_state_change(inst, old, now, label or trigger_name(trigger))
        return changed

    # -- availability and injections -------------------------------------------

    def set_available(self, node_id: str, flag: bool, now: float):
        if self.geo.available.get(node_id) != flag:
            self.geo.available[node_id] = flag
            self.events.append(DeploymentEvent(now, "availability", node_id=node_id, detail="up" if flag else "down"))
            self._dirty = True

    def process_injections(self, now: float):
        for inj in self.injections:
            if inj.start == now:
                self._begin_injection(inj, now)
        for inj in self.injections:
            if inj.end == now:
                self._end_injection(inj, now)

    def _begin_injection(self, inj: Injection, now: float):
        self.set_available(inj.node_id, False, now)
        for inst in self.on_node(inj.node_id):
            if inj.kind == HARDWARE:
                self.apply(inst, Directive.FINALIZE, now, "hardware-failure")
                continue
            if inst.state is _S.DISCOVERABLE:
                # drain first: the operator takes the instance out of discovery
                self.apply(inst, Outcome(Constraint.LOW, True), now, "maintenance-drain")
            self.apply(inst, MaintenanceEvent.INACTIVATE, now)

    def _end_injection(self, inj: Injection, now: float):
        if any(o.node_id == inj.node_id and o.start <= now < o.end for o in self.injections if o is not inj):
            return
        self.set_available(inj.node_id, True, now)
        if inj.kind == MAINTENANCE:
            for inst in self.on_node(inj.node_id):
                if inst.state is _S.INACTIVE:
                    self.apply(inst, MaintenanceEvent.REACTIVATE, now)

    # -- usage accounting ---------------------------------------------------

    def powered_mask(self) -> np.ndarray:
        if self._dirty:
            mask = np.zeros(len(self.node_ids), dtype=bool)
            for inst in self.instances.values():
                if inst.state in POWERED_STATES or (inst.pinned and inst.live):
                    mask[self._node_pos[inst.node_id]] = True
            self._powered_next = mask
            self._dirty = False
        return self._powered_next

    def set_loads(self, loads: np.ndarray):
        self._load = np.clip(np.asarray(loads, dtype=float), 0.0, 100.0)

    def accrue(self, now: float, dt: float):
        """Account node usage over ``[now, now + dt)``."""
        mask = self.powered_mask()
        if not np.array_equal(mask, self._powered):
            for idx in np.nonzero(mask & ~self._powered)[0]:
                self._on_since[idx] = now
                self._load_int[idx] = 0.0
            for idx in np.nonzero(~mask & self._powered)[0]:
                self._close_node(idx, now)
            self._powered = mask.copy()
        self._load_int += np.where(mask, self._load * dt, 0.0)
        for inst in self.instances.values():
            if inst.open_since is not None:
                inst.u_sum += self._load[self._node_pos[inst.node_id]] * dt
                inst.u_n += dt

    def _close_node(self, idx: int, now: float):
        start = self._on_since[idx]
        dur = now - start
        mean = self._load_int[idx] / dur if dur > 0 else 0.0
        self.node_intervals.append(UsageInterval(self.node_ids[idx], float(start), float(now), float(mean)))
        self._on_since[idx] = np.nan

    def close(self, now: float):
        """Close every open interval at the end of the run."""
        for idx in np.nonzero(self._powered)[0]:
            self._close_node(idx, now)
        self._powered[:] = False
        for inst in self.instances.values():
            if inst.open_since is not None:
                self._close_instance(inst, now)

    def ledger(self, repeat: float = 1.0) -> UsageLedger:
        return UsageLedger(sorted(self.node_intervals, key=lambda iv: (iv.node_id, iv.start_s)), repeat)

    # -- invariants ---------------------------------------------------------

    def violations(self) -> list[str]:
        out = []
        per_node: dict[str, int] = {}
        for inst in self.instances.values():
            if inst.live:
                per_node[inst.node_id] = per_node.get(inst.node_id, 0) + 1
            if (inst.finalized_at is not None) != (inst.state is _S.FINAL):
                out.append(f"instance {inst.id}: finalized_at set iff final")
        for nid, c in per_node.items():
            if c > self.cap:
                out.append(f"node {nid}: {c} live instances exceeds cap {self.cap}")
        return out


# --- provisioner -------------------------------------------------------------

def provision_request(node_id: Optional[str], geo: GeoIndex, fleet: Fleet) -> ProvisionResult:
    """Validate a routed request against node availability."""
    if node_id is None or node_id not in geo.topology.nodes:
        return ProvisionResult(False, node_id, "unknown")
    if not geo.is_available(node_id):
        return ProvisionResult(False, node_id, "unavailable")
    if not any(i.state is _S.DISCOVERABLE for i in fleet.on_node(node_id)):
        return ProvisionResult(False, node_id, "no-discoverable-instance")
    return ProvisionResult(True, node_id)


# --- scheduler -----------------------------------------------------------------

def place_spawn(origin: ServiceInstance, topology: Topology, fleet: Fleet, pending: Optional[dict] = None) -> Optional[str]:
    """Origin node if below cap, then a same-zone edge sibling, then fog, then cloud."""
    pending = pending or {}

    def free(nid):
        return fleet.geo.is_available(nid) and fleet.live_count(nid) + pending.get(nid, 0) < fleet.cap

    if free(origin.node_id):
        return origin.node_id
    spec = topology.nodes[origin.node_id]
    if spec.zone_id is not None:
        for nid in topology.zone(spec.zone_id).node_ids:
            if nid != origin.node_id and free(nid):
                return nid
    for layer in (Layer.FOG, Layer.CLOUD):
        for nid in topology.layer_nodes(layer):
            if free(nid):
                return nid
    return None


def schedule_tick(fleet: Fleet, samples: dict, now: float, params: Optional[ScalerConfig] = None) -> DeploymentPlan:
    """Run one scaling step per sampled instance and collect the resulting plan.

    ``samples`` maps instance id to r_req.  Transitions are applied here; the
    plan carries the spawns and the bookkeeping for finalized instances.
    """
    params = params or fleet.params
    plan = DeploymentPlan()
    pending: dict[str, int] = {}
    for iid in sorted(samples):
        inst = fleet.instances[iid]
        if not inst.live or inst.pinned:
            continue
        old = inst.state
        decision = scale_service_step(inst, samples[iid], now, params)
        if inst.state is not old:
            fleet._on_state_change(inst, old, now, trigger_name(inst.last_trigger))
        if inst.state is _S.FINAL:
            plan.actions.append(Finalize(iid, decision.label))
        elif decision.spawn:
            target = place_spawn(inst, fleet.topology, fleet, pending)
            if target is None:
                fleet.counts["saturation"] += 1
                fleet.events.append(DeploymentEvent(now, "saturation", iid, inst.node_id, detail="fleet at capacity"))
                log.info("saturation at t=%s: no node can host a spawn from %s", now, inst.node_id)
            else:
                pending[target] = pending.get(target, 0) + 1
                plan.actions.append(Spawn(target, decision.label, iid))
    return plan


def apply_plan(plan: DeploymentPlan, fleet: Fleet, now: float) -> list[DeploymentEvent]:
    start = len(fleet.events)
    for action in plan.actions:
        if isinstance(action, Spawn):
            nid = action.node_id
            if nid not in fleet.topology.nodes or not fleet.geo.is_available(nid):
                fleet.counts["constraint"] += 1
                fleet.events.append(DeploymentEvent(now, "constraint", action.origin, nid, detail="node unavailable"))
                continue
            if fleet.live_count(nid) >= fleet.cap:
                fleet.counts["constraint"] += 1
                fleet.events.append(DeploymentEvent(now, "constraint", action.origin, nid, detail="node at cap"))
                continue
            fleet.create(nid, now, detail=f"origin={action.origin}")
            fleet.counts["spawned"] += 1
        elif isinstance(action, Finalize):
            inst = fleet.instances.get(action.instance_id)
            if inst is None:
                fleet.events.append(DeploymentEvent(now, "constraint", action.instance_id, detail="vanished instance"))
                continue
            if inst.live:
                fleet.apply(inst, Directive.FINALIZE, now, action.reason)
            fleet.events.append(DeploymentEvent(now, "finalize", inst.id, inst.node_id, detail=action.reason))
        elif isinstance(action, SetAvailability):
            fleet.set_available(action.node_id, action.available, now)
    return fleet.events[start:]


def inject_failure(fleet: Fleet, node_id: str, kind: str, start: float, duration: float) -> Injection:
    """Schedule an outage; overlapping injections of the same kind merge."""
    if node_id not in fleet.topology.nodes:
        raise KeyError(f"unknown node {node_id}")
    if kind not in (HARDWARE, MAINTENANCE):
        raise ValueError(f"failure kind must be '{HARDWARE}' or '{MAINTENANCE}'")
    if duration <= 0:
        raise ValueError("failure duration must be > 0")
    inj = Injection(node_id, kind, float(start), float(start + duration))
    keep = []
    for other in fleet.injections:
        if other.node_id == node_id and other.kind == kind and other.start <= inj.end and inj.start <= other.end:
            inj = Injection(node_id, kind, min(inj.start, other.start), max(inj.end, other.end))
        else:
            keep.append(other)
    keep.append(inj)
    fleet.injections = sorted(keep, key=lambda i: (i.start, i.node_id, i.kind))
    return inj

