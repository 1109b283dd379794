"""Location-aided service discovery and request routing (simulated)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .fsm import ServiceState
from .metrics import TimingAccumulator
from .topology import LAYER_ORDER, GeoIndex, Layer, candidate_nodes


@dataclass(frozen=True)
class LatencyModel:
    # synthetic defaults; only the layer ordering matters for results
    base_ms: dict = field(default_factory=lambda: {Layer.EDGE: 20.0, Layer.FOG: 60.0, Layer.CLOUD: 120.0})
    jitter_ms: dict = field(default_factory=lambda: {Layer.EDGE: 10.0, Layer.FOG: 15.0, Layer.CLOUD: 30.0})
    lookup_step_ms: float = 50.0
    lookup_steps: int = 1
    lookup_jitter_ms: float = 20.0

    def violations(self) -> list[str]:
        out = []
        b = self.base_ms
        if not b[Layer.EDGE] < b[Layer.FOG] < b[Layer.CLOUD]:
            out.append("latency bases must satisfy edge < fog < cloud")
        for layer in LAYER_ORDER:
            if self.jitter_ms[layer] < 0:
                out.append(f"latency jitter for {layer.value} must be >= 0")
            if self.base_ms[layer] - self.jitter_ms[layer] < 0:
                out.append(f"latency for {layer.value} could go negative (base < jitter)")
        if self.lookup_step_ms < 0 or self.lookup_steps < 0 or self.lookup_jitter_ms < 0:
            out.append("lookup step, count and jitter must be >= 0")
        if self.lookup_steps * self.lookup_step_ms < self.lookup_jitter_ms:
            out.append("lookup jitter exceeds the lookup time")
        return out

    def sample_rtt(self, layer: Layer, rng: np.random.Generator, size=None):
        h = self.jitter_ms[layer]
        return self.base_ms[layer] + rng.uniform(-h, h, size)

    def sample_lookup(self, rng: np.random.Generator, size=None):
        h = self.lookup_jitter_ms
        return self.lookup_steps * self.lookup_step_ms + rng.uniform(-h, h, size)


@dataclass
class DiscoveryRecord:
    user_id: int
    timestamp: float
    node_id: Optional[str]
    layer: Optional[Layer]
    discovery_time_ms: float
    acquisition_time_ms: Optional[float] = None
    cached: bool = False
    phase: str = ""


def discoverable_nodes(instances: Iterable) -> set[str]:
    return {i.node_id for i in instances if i.state is ServiceState.DISCOVERABLE}


def select_node(zone, geo: GeoIndex, discoverable: set[str]) -> Optional[str]:
    """First candidate (lowest modeled latency) hosting a discoverable instance."""
    for nid in candidate_nodes(zone, geo):
        if nid in discoverable:
            return nid
    return None


def discover(location, geo: GeoIndex, instances, model: LatencyModel, rng, user_id=0, now=0.0, phase=""):
    node = select_node(geo.resolve(location), geo, discoverable_nodes(instances))
    layer = geo.topology.nodes[node].layer if node is not None else None
    return DiscoveryRecord(user_id, now, node, layer, float(model.sample_lookup(rng)), phase=phase)


def acquire(record: DiscoveryRecord, model: LatencyModel, rng) -> Optional[float]:
    """Acquisition time: lookup (zero when served from cache) plus a round trip."""
    if record.node_id is None:
        return None
    lookup = 0.0 if record.cached else record.discovery_time_ms
    record.acquisition_time_ms = lookup + float(model.sample_rtt(record.layer, rng))
    return record.acquisition_time_ms


class DiscoveryRouter:
    """Vectorized per-tick routing with a per-user discovery cache.

    A cache entry holds the chosen node for ``ttl_s`` seconds and is dropped
    early when the user changes zone or the node stops hosting a
    discoverable instance.
    """

    def __init__(self, geo: GeoIndex, model: LatencyModel, n_users: int, rng: np.random.Generator, ttl_s=600.0):
        self.geo = geo
        self.model = model
        self.rng = rng
        self.ttl_s = ttl_s
        topo = geo.topology
        self.node_ids = list(topo.nodes)
        self.node_pos = {nid: i for i, nid in enumerate(self.node_ids)}
        self.node_layer = np.array([LAYER_ORDER.index(topo.nodes[n].layer) for n in self.node_ids])
        self.cache_node = np.full(n_users, -1, dtype=np.int64)
        self.cache_zone = np.full(n_users, -2, dtype=np.int64)
        self.cache_expiry = np.zeros(n_users)
        self.timing = {}
        self._pending: list = []
        self._pending_n = 0
        self._table_key = None
        self.record_log: Optional[list] = None   # set to a list to keep per-request records

    def _acc(self, *key) -> TimingAccumulator:
        acc = self.timing.get(key)
        if acc is None:
            acc = self.timing[key] = TimingAccumulator()
        return acc

    def best_node_table(self, discoverable: set[str]) -> np.ndarray:
        """Index of the chosen node per zone index; last slot is 'outside'."""
        zones = self.geo.topology.zones
        table = np.full(len(zones) + 1, -1, dtype=np.int64)
        for zi, zone in enumerate(zones + [None]):
            nid = select_node(zone, self.geo, discoverable)
            table[zi] = -1 if nid is None else self.node_pos[nid]
        return table

    def route(self, now, users: np.ndarray, zones: np.ndarray, discoverable: set[str], phase: str, extra: int = 0):
        """Route one request per user (plus ``extra`` cached follow-ups each).

        Returns the node index per request (-1 = rejected), aligned with
        ``np.tile(users, 1 + extra)`` ordering (first requests, then follow-ups).
        """
        if users.size == 0:
            return np.empty(0, dtype=np.int64)
        key = (frozenset(discoverable), tuple(self.geo.available[n] for n in self.node_ids))
        if key != self._table_key:
            self._table = self.best_node_table(discoverable)
            self._disc_mask = np.zeros(len(self.node_ids), dtype=bool)
            for nid in discoverable:
                if self.geo.is_available(nid):
                    self._disc_mask[self.node_pos[nid]] = True
            self._table_key = key
        table, disc_mask = self._table, self._disc_mask

        cn = self.cache_node[users]
        valid = (cn >= 0) & (self.cache_expiry[users] > now) & (self.cache_zone[users] == zones)
        valid &= disc_mask[np.where(cn >= 0, cn, 0)]
        fresh = ~valid
        nodes = np.where(valid, cn, table[np.where(zones >= 0, zones, len(table) - 1)])

        ok_fresh = fresh & (nodes >= 0)
        self.cache_node[users[ok_fresh]] = nodes[ok_fresh]
        self.cache_zone[users[ok_fresh]] = zones[ok_fresh]
        self.cache_expiry[users[ok_fresh]] = now + self.ttl_s
        self.cache_node[users[fresh & (nodes < 0)]] = -1

        lookup = np.where(fresh, self.model.sample_lookup(self.rng, users.size), 0.0)
        if extra:
            nodes_all = np.tile(nodes, 1 + extra)
            lookup_all = np.concatenate([lookup, np.zeros(users.size * extra)])
            cached_all = np.concatenate([~fresh, np.ones(users.size * extra, dtype=bool)])
        else:
            nodes_all, lookup_all, cached_all = nodes, lookup, ~fresh
        served = nodes_all >= 0
        layers = np.where(served, self.node_layer[np.where(served, nodes_all, 0)], -1)
        rtt = np.zeros(nodes_all.size)
        for li, layer in enumerate(LAYER_ORDER):
            m = layers == li
            k = int(np.count_nonzero(m))
            if k:
                rtt[m] = self.model.sample_rtt(layer, self.rng, k)
        acq = lookup_all + rtt
        self._pending.append((phase, layers[served], acq[served], rtt[served], lookup_all[served], cached_all[served]))
        self._pending_n += int(served.size)
        if self._pending_n >= 200_000:
            self._fold()
        if self.record_log is not None:
            uid_all = np.tile(users, 1 + extra)
            for u, n, lk, c, a in zip(uid_all, nodes_all, lookup_all, cached_all, acq):
                nid = self.node_ids[n] if n >= 0 else None
                layer = self.geo.topology.nodes[nid].layer if nid else None
                self.record_log.append(
                    DiscoveryRecord(int(u), now, nid, layer, float(lk), float(a) if nid else None, bool(c), phase)
                )
        return nodes_all

    def _fold(self):
        """Fold buffered per-tick timings into the accumulators."""
        if not self._pending:
            return
        by_phase: dict = {}
        for chunk in self._pending:
            by_phase.setdefault(chunk[0], []).append(chunk[1:])
        self._pending = []
        self._pending_n = 0
        for phase in sorted(by_phase):
            layers, acq, rtt, lookup, cached = (np.concatenate(c) for c in zip(*by_phase[phase]))
            fresh = ~cached
            for li, layer in enumerate(LAYER_ORDER):
                m = layers == li
                if not m.any():
                    continue
                self._acc("acquisition", "layer", layer.value).add(acq[m])
                self._acc("rtt", "layer", layer.value).add(rtt[m])
                self._acc("discovery", "layer", layer.value).add(lookup[m & fresh])
            self._acc("acquisition", "phase", phase).add(acq)
            self._acc("discovery", "phase", phase).add(lookup[fresh])
            self._acc("acquisition", "all", "").add(acq)
            self._acc("discovery", "all", "").add(lookup[fresh])

    def mean_acquisition_ms(self) -> float:
        self._fold()
        acc = self.timing.get(("acquisition", "all", ""))
        return acc.summary().get("mean", float("nan")) if acc else float("nan")

    def timing_summary(self) -> dict:
        self._fold()
        out: dict = {}
        for (metric, kind, key), acc in sorted(self.timing.items()):
            slot = out.setdefault(metric, {})
            if kind == "all":
                slot["overall"] = acc.summary()
            else:
                slot.setdefault(f"by_{kind}", {})[key] = acc.summary()
        return out
