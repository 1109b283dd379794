"""Scenario population schedules, user mobility and request emission."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .topology import Topology, zone_active

DAY_S = 86400.0

CLOCK = 0   # depart at a time of day (hours), optionally staggered per agent
FIXED = 1   # depart after a residence duration (hours)


class ScenarioKind(str, Enum):
    SCALE_UP = "scale-up"
    SCALE_DOWN = "scale-down"
    UNDERPROVISION = "underprovision"
    ANNUAL = "annual"


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    kind: ScenarioKind
    initial_requests: int = 0
    active_users_start: int = 0
    user_increment: int = 5            # users per minute, signed
    peak_load: int = 200
    hold_peak_s: float = 600.0
    duration_s: int = 3000
    seed: int = 0
    start_hour: float = 19.0
    request_interval_s: int = 5
    discovery_interval_s: float = 600.0
    double_requests_at_s: Optional[float] = None
    zone_deactivation_every_s: Optional[float] = None
    window_gated: bool = True
    residence: str = "fixed"           # "fixed" durations or "window"-bound departures
    edge_initial: str = "none"         # "none" or "discoverable"
    departure_stagger_per_min: int = 0  # users leaving home per minute (0 = all at once)
    repeat_days: float = 1.0

    def violations(self) -> list[str]:
        out = []
        if self.duration_s <= 0:
            out.append("scenario.duration_s must be > 0")
        if self.request_interval_s <= 0:
            out.append("scenario.request_interval_s must be > 0")
        if self.discovery_interval_s <= 0:
            out.append("scenario.discovery_interval_s must be > 0")
        if self.peak_load < 0 or self.active_users_start < 0:
            out.append("scenario user counts must be >= 0")
        if self.residence not in ("fixed", "window"):
            out.append("scenario.residence must be 'fixed' or 'window'")
        if self.edge_initial not in ("none", "discoverable"):
            out.append("scenario.edge_initial must be 'none' or 'discoverable'")
        if self.repeat_days <= 0:
            out.append("scenario.repeat_days must be > 0")
        return out

    @property
    def n_agents(self) -> int:
        return max(self.peak_load, self.active_users_start)


BUILTIN_SCENARIOS = {
    "scale-up": ScenarioSpec(
        "scale-up", ScenarioKind.SCALE_UP, user_increment=5, peak_load=200,
        hold_peak_s=600, duration_s=50 * 60,
    ),
    "scale-down": ScenarioSpec(
        "scale-down", ScenarioKind.SCALE_DOWN, initial_requests=200, active_users_start=200,
        user_increment=-5, peak_load=200, hold_peak_s=600, duration_s=55 * 60,
        edge_initial="discoverable",
    ),
    "underprovision": ScenarioSpec(
        "underprovision", ScenarioKind.UNDERPROVISION, user_increment=5, peak_load=200,
        hold_peak_s=600, duration_s=60 * 60, double_requests_at_s=600, zone_deactivation_every_s=300,
    ),
    "annual": ScenarioSpec(
        "annual", ScenarioKind.ANNUAL, active_users_start=1000, user_increment=5, peak_load=1000,
        hold_peak_s=0, duration_s=int(DAY_S), start_hour=0.0, residence="window",
        departure_stagger_per_min=5, repeat_days=365.0,
    ),
}


def population(spec: ScenarioSpec, t_s: float) -> int:
    """Active users at simulated time ``t_s``."""
    m = int(t_s // 60)
    if spec.kind is ScenarioKind.ANNUAL:
        return spec.n_agents
    if spec.kind is ScenarioKind.SCALE_DOWN:
        hold_m = int(spec.hold_peak_s // 60)
        if m <= hold_m:
            return spec.peak_load
        return max(0, spec.peak_load + spec.user_increment * (m - hold_m))
    return max(0, min(spec.peak_load, spec.active_users_start + spec.user_increment * m))


def spawn_schedule(spec: ScenarioSpec, t_s: float) -> int:
    """Signed change in active users applied in the minute containing ``t_s``."""
    if t_s < 60:
        return population(spec, 0)
    return population(spec, t_s) - population(spec, t_s - 60)


def request_multiplier(spec: ScenarioSpec, t_s: float) -> int:
    if spec.double_requests_at_s is not None and t_s >= spec.double_requests_at_s:
        return 2
    return 1


def zone_deactivation_times(spec: ScenarioSpec, n_zones: int) -> list[float]:
    if spec.double_requests_at_s is None or not spec.zone_deactivation_every_s:
        return []
    return [spec.double_requests_at_s + (k + 1) * spec.zone_deactivation_every_s for k in range(n_zones)]


def phase_of(spec: ScenarioSpec, t_s: float, n_zones: int = 8) -> str:
    if spec.kind is ScenarioKind.SCALE_UP:
        return "hold" if population(spec, t_s) >= spec.peak_load else "ramp"
    if spec.kind is ScenarioKind.SCALE_DOWN:
        if t_s < spec.hold_peak_s:
            return "hold"
        return "decline" if population(spec, t_s) > 0 else "drain"
    if spec.kind is ScenarioKind.UNDERPROVISION:
        offs = zone_deactivation_times(spec, n_zones)
        if spec.double_requests_at_s is None or t_s < spec.double_requests_at_s:
            return "ramp"
        return "fog-only" if offs and t_s >= offs[-1] else "doubled"
    tod = (spec.start_hour * 3600.0 + t_s) % DAY_S / 3600.0
    return "night" if (tod >= 19.0 or tod < 7.0) else "day"


# --- agents ------------------------------------------------------------------

@dataclass(frozen=True)
class Leg:
    zone: str
    speed: float          # m/s used to reach this zone
    kind: int             # CLOCK or FIXED
    hours: float          # clock time or residence duration
    staggered: bool = False


def itinerary_for(agent_id: int, spec: ScenarioSpec) -> list[Leg]:
    """Daily route: home, a day zone, optional stadium detour, back home.

    Day zones rotate over agent ids; half of the south/west commuters
    (by parity of their index within the rotation) detour to the stadium.
    """
    day_zones = (
        ("commercial-north", 18.0),
        ("commercial-south", 18.0),
        ("commercial-east", 18.0),
        ("commercial-west", 18.0),
        ("university", 20.0),
        ("beach", 19.0),
    )
    zone, closes = day_zones[agent_id % len(day_zones)]
    detour = zone in ("commercial-south", "commercial-west") and (agent_id // len(day_zones)) % 2 == 0
    window = spec.residence == "window"
    home_speed = 10.0 if detour else 15.0
    if window:
        legs = [
            Leg("city-center", home_speed, CLOCK, 5.0, staggered=True),
            Leg(zone, 15.0, CLOCK, closes),
        ]
        if detour:
            legs.append(Leg("stadium", 10.0, CLOCK, 22.0))
    else:
        legs = [
            Leg("city-center", home_speed, CLOCK, 7.0),
            Leg(zone, 15.0, FIXED, 8.5),
        ]
        if detour:
            legs.append(Leg("stadium", 10.0, FIXED, 2.0))
    return legs


class AgentPopulation:
    """Struct-of-arrays user agents; agent ``i`` has id ``i``."""

    def __init__(self, spec: ScenarioSpec, topology: Topology, rng: np.random.Generator):
        self.spec = spec
        self.topology = topology
        n = spec.n_agents
        self.n = n
        names = {z.name: idx for idx, z in enumerate(topology.zones)}
        home = 0
        self.itineraries = []
        for i in range(n):
            legs = itinerary_for(i, spec)
            # fall back to staying home on topologies without the named zones
            legs = [lg for lg in legs if lg.zone in names] or [Leg(topology.zones[home].name, 15.0, CLOCK, 0.0)]
            self.itineraries.append(legs)
        L = max(len(legs) for legs in self.itineraries)
        self.n_legs = np.array([len(legs) for legs in self.itineraries])
        self.leg_zone = np.zeros((n, L), dtype=np.int64)
        self.leg_speed = np.zeros((n, L))
        self.leg_kind = np.zeros((n, L), dtype=np.int64)
        self.leg_hours = np.zeros((n, L))
        self.leg_stagger = np.zeros((n, L), dtype=bool)
        for i, legs in enumerate(self.itineraries):
            for j, lg in enumerate(legs):
                self.leg_zone[i, j] = names.get(lg.zone, home)
                self.leg_speed[i, j] = lg.speed
                self.leg_kind[i, j] = lg.kind
                self.leg_hours[i, j] = lg.hours
                self.leg_stagger[i, j] = lg.staggered
        # uniform random residence point per agent per leg
        rects = topology._rects[self.leg_zone]            # (n, L, 4)
        u = rng.random((n, L, 2))
        self.points = np.empty((n, L, 2))
        self.points[..., 0] = rects[..., 0] + u[..., 0] * (rects[..., 2] - rects[..., 0])
        self.points[..., 1] = rects[..., 1] + u[..., 1] * (rects[..., 3] - rects[..., 1])
        ids = np.arange(n)
        if spec.departure_stagger_per_min > 0:
            self.stagger_s = (ids // spec.departure_stagger_per_min) * 60.0
        else:
            self.stagger_s = np.zeros(n)
        self.leg = np.zeros(n, dtype=np.int64)
        self.pos = self.points[ids, 0].copy()
        self.target = self.pos.copy()
        self.speed = self.leg_speed[:, 0].copy()
        self.traveling = np.zeros(n, dtype=bool)
        self.depart_at = self._departure(ids, np.zeros(n))
        self.active = np.zeros(n, dtype=bool)
        self.phase_offset = ids % spec.request_interval_s
        self.zone = topology.resolve_zone_indices(self.pos)

    def _departure(self, idx: np.ndarray, arrived_at: np.ndarray) -> np.ndarray:
        leg = self.leg[idx]
        kind = self.leg_kind[idx, leg]
        hours = self.leg_hours[idx, leg]
        clock = hours * 3600.0 + np.where(self.leg_stagger[idx, leg], self.stagger_s[idx], 0.0)
        tod = (self.spec.start_hour * 3600.0 + arrived_at) % DAY_S
        wait = np.mod(clock - tod, DAY_S)
        return np.where(kind == CLOCK, arrived_at + wait, arrived_at + hours * 3600.0)

    def set_population(self, count: int):
        self.active[:] = False
        self.active[: min(count, self.n)] = True

    def zone_indices(self) -> np.ndarray:
        """Zone index per agent (-1 outside); refreshed for movers in :func:`advance_agents`."""
        return self.zone


def advance_agents(agents: AgentPopulation, topology: Topology, dt: float, now: float = 0.0) -> AgentPopulation:
    """Move agents one step of ``dt`` seconds ending at ``now + dt``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    leaving = ~agents.traveling & (agents.depart_at <= now)
    if leaving.any():
        idx = np.nonzero(leaving)[0]
        nxt = (agents.leg[idx] + 1) % agents.n_legs[idx]
        agents.leg[idx] = nxt
        agents.target[idx] = agents.points[idx, nxt]
        agents.speed[idx] = agents.leg_speed[idx, nxt]
        agents.traveling[idx] = True
    if agents.traveling.any():
        idx = np.nonzero(agents.traveling)[0]
        vec = agents.target[idx] - agents.pos[idx]
        dist = np.hypot(vec[:, 0], vec[:, 1])
        step = agents.speed[idx] * dt
        arrived = dist <= step
        moving = ~arrived
        scale = np.where(moving, step / np.where(dist > 0, dist, 1.0), 0.0)
        agents.pos[idx[moving]] += vec[moving] * scale[moving, None]
        if arrived.any():
            a = idx[arrived]
            agents.pos[a] = agents.target[a]
            agents.traveling[a] = False
            agents.depart_at[a] = agents._departure(a, np.full(a.size, now + dt))
        agents.zone[idx] = topology.resolve_zone_indices(agents.pos[idx])
    return agents


@dataclass(frozen=True)
class RequestRateSample:
    node_id: str
    timestamp: float
    r_req: float


@dataclass
class TickRequests:
    """Requests issued in one tick, aggregated per node and per zone."""

    now: float
    issued: int
    node_counts: np.ndarray      # routed requests per node index
    zone_counts: np.ndarray      # requests by users located in each zone
    rejected: int
    node_ids: list = field(default_factory=list)

    @property
    def routed(self) -> int:
        return int(self.node_counts.sum())

    def samples(self) -> list[RequestRateSample]:
        return [
            RequestRateSample(nid, self.now, float(c))
            for nid, c in zip(self.node_ids, self.node_counts)
            if c > 0
        ]


def requesting_agents(agents: AgentPopulation, now: float, zones: np.ndarray, zone_open: np.ndarray) -> np.ndarray:
    """Ids of agents issuing a request this tick (active, on cadence, not dormant)."""
    due = agents.active & ((int(now) - agents.phase_offset) % agents.spec.request_interval_s == 0)
    if agents.spec.window_gated:
        inside = zones >= 0
        due &= ~inside | zone_open[np.where(inside, zones, 0)]
    return np.nonzero(due)[0]


def emit_requests(agents: AgentPopulation, router, now: float, discoverable: set, phase: str = "", multiplier: int = 1):
    """Issue this tick's requests through ``router`` and aggregate them."""
    topo = agents.topology
    zones = agents.zone_indices()
    tod = (agents.spec.start_hour + now / 3600.0) % 24.0
    zone_open = np.array([zone_active(z, tod) for z in topo.zones], dtype=bool)
    users = requesting_agents(agents, now, zones, zone_open)
    uz = zones[users]
    nodes = router.route(now, users, uz, discoverable, phase, extra=multiplier - 1)
    n_nodes = len(router.node_ids)
    ok = nodes >= 0
    node_counts = np.bincount(nodes[ok], minlength=n_nodes)
    zrep = np.tile(uz, multiplier)
    inside = zrep >= 0
    zone_counts = np.bincount(zrep[inside], minlength=len(topo.zones))
    return TickRequests(now, int(nodes.size), node_counts, zone_counts, int((~ok).sum()), router.node_ids)
