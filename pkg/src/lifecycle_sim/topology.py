"""Continuum fleet, geographic zones and the zone/node lookup."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

CURVE_LOADS = (0.0, 10.0, 50.0, 100.0)


class Layer(str, Enum):
    EDGE = "edge"
    FOG = "fog"
    CLOUD = "cloud"


LAYER_ORDER = (Layer.EDGE, Layer.FOG, Layer.CLOUD)


@dataclass(frozen=True)
class HardwareProfile:
    model: str
    cost_per_hour: float
    power_w: tuple[float, float, float, float]        # idle, 10%, 50%, 100%
    co2_g_per_hour: tuple[float, float, float, float]


# Testbed hardware: hourly price, wall power and CO2 at idle/10/50/100% CPU.
HARDWARE = {
    "jetson-nano": HardwareProfile("jetson-nano", 0.0614, (2.4, 4.1, 6.8, 8.8), (1.0, 1.7, 2.9, 3.7)),
    "t2.small": HardwareProfile("t2.small", 0.023, (2.0, 3.3, 5.3, 7.0), (0.8, 1.4, 2.2, 2.9)),
    "t2.xlarge": HardwareProfile("t2.xlarge", 0.185, (9.6, 15.7, 24.6, 33.0), (4.0, 6.6, 10.4, 13.9)),
    "t4g.2xlarge": HardwareProfile("t4g.2xlarge", 0.2688, (12.3, 19.3, 30.7, 42.0), (5.2, 8.1, 12.9, 17.7)),
}


@dataclass(frozen=True)
class NodeSpec:
    id: str
    layer: Layer
    model: str
    cost_per_hour: float
    power_curve: tuple[tuple[float, float], ...]
    co2_curve: tuple[tuple[float, float], ...]
    capacity_u_max: float
    zone_id: Optional[int] = None

    @classmethod
    def from_profile(cls, node_id, layer, profile: HardwareProfile, capacity_u_max, zone_id=None):
        return cls(
            id=node_id,
            layer=Layer(layer),
            model=profile.model,
            cost_per_hour=profile.cost_per_hour,
            power_curve=tuple(zip(CURVE_LOADS, profile.power_w)),
            co2_curve=tuple(zip(CURVE_LOADS, profile.co2_g_per_hour)),
            capacity_u_max=capacity_u_max,
            zone_id=zone_id,
        )

    def violations(self) -> list[str]:
        out = []
        if self.cost_per_hour <= 0:
            out.append(f"node {self.id}: cost_per_hour must be > 0")
        for name, curve in (("power_curve", self.power_curve), ("co2_curve", self.co2_curve)):
            loads = [p[0] for p in curve]
            vals = [p[1] for p in curve]
            if len(curve) != 4 or tuple(loads) != CURVE_LOADS:
                out.append(f"node {self.id}: {name} needs points at loads {CURVE_LOADS}")
            elif any(b <= a for a, b in zip(vals, vals[1:])):
                out.append(f"node {self.id}: {name} must be strictly increasing in load")
        if self.layer is Layer.EDGE and self.zone_id is None:
            out.append(f"edge node {self.id} is not assigned to a zone")
        if self.layer is not Layer.EDGE and self.zone_id is not None:
            out.append(f"{self.layer.value} node {self.id} must not belong to a zone")
        return out


@dataclass(frozen=True)
class Zone:
    id: int
    name: str
    rect: tuple[float, float, float, float]   # x0, y0, x1, y1 (closed)
    window_start: float                       # hours, [start, end) wrapping midnight
    window_end: float
    category: str
    node_ids: tuple[str, ...] = ()

    def contains(self, x: float, y: float) -> bool:
        x0, y0, x1, y1 = self.rect
        return x0 <= x <= x1 and y0 <= y <= y1

    @property
    def center(self) -> tuple[float, float]:
        x0, y0, x1, y1 = self.rect
        return ((x0 + x1) / 2.0, (y0 + y1) / 2.0)

    @property
    def window_hours(self) -> float:
        length = (self.window_end - self.window_start) % 24.0
        return 24.0 if length == 0 else length


def zone_active(zone: Zone, time_of_day: float) -> bool:
    """True iff ``time_of_day`` (hours) falls in the zone's half-open window."""
    h = time_of_day % 24.0
    start, end = zone.window_start % 24.0, zone.window_end % 24.0
    if start == end:
        return True
    if start < end:
        return start <= h < end
    return h >= start or h < end


def resolve_zone(location: Sequence[float], zones: Iterable[Zone]) -> Optional[Zone]:
    """Zone containing ``location``; lowest zone id wins on shared boundaries."""
    x, y = location
    hits = [z for z in zones if z.contains(x, y)]
    return min(hits, key=lambda z: z.id) if hits else None


@dataclass
class Topology:
    zones: list[Zone]
    nodes: dict[str, NodeSpec]

    def __post_init__(self):
        self.zones = sorted(self.zones, key=lambda z: z.id)
        self._rects = np.array([z.rect for z in self.zones], dtype=float).reshape(-1, 4)

    def zone(self, zone_id: int) -> Zone:
        for z in self.zones:
            if z.id == zone_id:
                return z
        raise KeyError(zone_id)

    def zone_index(self, zone_id: int) -> int:
        return [z.id for z in self.zones].index(zone_id)

    def layer_nodes(self, layer: Layer) -> list[str]:
        return [n.id for n in self.nodes.values() if n.layer is layer]

    def resolve_zone_indices(self, xy: np.ndarray) -> np.ndarray:
        """Vectorized :func:`resolve_zone`: index into ``self.zones``, -1 if outside."""
        out = np.full(len(xy), -1, dtype=np.int64)
        # reverse order so the lowest id is written last and wins
        for idx in range(len(self.zones) - 1, -1, -1):
            x0, y0, x1, y1 = self._rects[idx]
            inside = (xy[:, 0] >= x0) & (xy[:, 0] <= x1) & (xy[:, 1] >= y0) & (xy[:, 1] <= y1)
            out[inside] = idx
        return out

    def violations(self) -> list[str]:
        out = []
        for n in self.nodes.values():
            out.extend(n.violations())
        ids = [z.id for z in self.zones]
        if len(set(ids)) != len(ids):
            out.append("zone ids must be unique")
        seen: dict[str, int] = {}
        for z in self.zones:
            x0, y0, x1, y1 = z.rect
            if not (x0 < x1 and y0 < y1):
                out.append(f"zone {z.name}: rect must have x0 < x1 and y0 < y1")
            for nid in z.node_ids:
                node = self.nodes.get(nid)
                if node is None:
                    out.append(f"zone {z.name}: unknown node {nid}")
                elif node.layer is not Layer.EDGE:
                    out.append(f"zone {z.name}: only edge nodes may belong to zones ({nid})")
                if nid in seen:
                    out.append(f"node {nid} belongs to more than one zone")
                seen[nid] = z.id
        for n in self.nodes.values():
            if n.layer is Layer.EDGE and n.id not in seen:
                out.append(f"edge node {n.id} belongs to no zone")
            if n.layer is Layer.EDGE and n.id in seen and n.zone_id != seen[n.id]:
                out.append(f"edge node {n.id} zone mismatch")
        return out


@dataclass
class GeoIndex:
    """Zone lookup plus node availability, maintained by the control plane."""

    topology: Topology
    available: dict[str, bool] = field(default_factory=dict)

    def __post_init__(self):
        for nid in self.topology.nodes:
            self.available.setdefault(nid, True)

    def resolve(self, location) -> Optional[Zone]:
        return resolve_zone(location, self.topology.zones)

    def is_available(self, node_id: str) -> bool:
        return self.available.get(node_id, False)


def candidate_nodes(zone: Optional[Zone], geo: GeoIndex) -> list[str]:
    """Available nodes in preference order: in-zone edge, then fog, then cloud."""
    topo = geo.topology
    order: list[str] = []
    if zone is not None:
        order.extend(n for n in zone.node_ids if geo.is_available(n))
    for layer in (Layer.FOG, Layer.CLOUD):
        order.extend(n for n in topo.layer_nodes(layer) if geo.is_available(n))
    return order


def effective_daily_hours(zones: Iterable[Zone]) -> dict[str, float]:
    """Hours per day each edge node must be powered to cover its zone window."""
    return {nid: z.window_hours for z in zones for nid in z.node_ids}


# --- default eight-zone city ------------------------------------------------

# (name, rect in metres, window start, window end, category)
DEFAULT_ZONES = (
    ("city-center", (-500.0, -500.0, 500.0, 500.0), 19.0, 7.0, "residential"),
    ("commercial-north", (-500.0, 2000.0, 500.0, 3000.0), 8.0, 18.0, "working"),
    ("commercial-south", (-500.0, -3000.0, 500.0, -2000.0), 8.0, 18.0, "working"),
    ("commercial-east", (2000.0, -500.0, 3000.0, 500.0), 8.0, 18.0, "working"),
    ("commercial-west", (-3000.0, -500.0, -2000.0, 500.0), 8.0, 18.0, "working"),
    ("university", (2000.0, 2000.0, 3000.0, 3000.0), 8.0, 20.0, "working"),
    ("stadium", (-2000.0, -2000.0, -1200.0, -1200.0), 18.0, 22.0, "leisure"),
    ("beach", (2000.0, -3000.0, 3000.0, -2000.0), 9.0, 19.0, "leisure"),
)


def build_topology(
    zones=DEFAULT_ZONES,
    edge_model: str = "jetson-nano",
    fog_model: str = "t2.small",
    fog_count: int = 2,
    cloud_model: str = "t2.xlarge",
    cloud_count: int = 1,
    capacity_u_max: float = 25.0,
    hardware: Optional[dict[str, HardwareProfile]] = None,
) -> Topology:
    """One edge node per zone, ``fog_count`` fog nodes and ``cloud_count`` cloud nodes."""
    hw = dict(HARDWARE)
    if hardware:
        hw.update(hardware)
    nodes: dict[str, NodeSpec] = {}
    zone_objs = []
    for zid, (name, rect, start, end, category) in enumerate(zones):
        nid = f"edge-{zid}"
        nodes[nid] = NodeSpec.from_profile(nid, Layer.EDGE, hw[edge_model], capacity_u_max, zid)
        zone_objs.append(Zone(zid, name, tuple(rect), start, end, category, (nid,)))
    for i in range(fog_count):
        nid = f"fog-{i}"
        nodes[nid] = NodeSpec.from_profile(nid, Layer.FOG, hw[fog_model], capacity_u_max)
    for i in range(cloud_count):
        nid = f"cloud-{i}"
        nodes[nid] = NodeSpec.from_profile(nid, Layer.CLOUD, hw[cloud_model], capacity_u_max)
    return Topology(zone_objs, nodes)
