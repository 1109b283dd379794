"""Tick loop tying demand, routing, scheduling, deployment and accounting together."""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .config import RunConfig, dump_yaml
from .control import (
    Fleet,
    SetAvailability,
    DeploymentPlan,
    apply_plan,
    inject_failure,
    schedule_tick,
)
from .discovery import DiscoveryRouter
from .fsm import Directive, ServiceState
from .metrics import cost_by_layer, emissions_by_layer, power_by_layer, sig3
from .mobility import (
    AgentPopulation,
    advance_agents,
    emit_requests,
    phase_of,
    population,
    request_multiplier,
    zone_deactivation_times,
)
from .reference import NOTES, compare_to_published
from .topology import LAYER_ORDER, GeoIndex, Layer

log = logging.getLogger(__name__)

TIMESERIES_HEADER = (
    "tick,sim_time_s,active_users,instances_discoverable,instances_undiscoverable,"
    "instances_inactive,instances_final,edge_load,fog_load,cloud_load,rejections"
)

_S = ServiceState


class InvariantViolation(RuntimeError):
    """An internal property of the simulation did not hold."""


@dataclass
class RunResult:
    config: RunConfig
    summary: dict
    timeseries: list = field(default_factory=list)
    events: list = field(default_factory=list)
    fleet: Optional[Fleet] = None
    router: Optional[DiscoveryRouter] = None


class Simulation:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.spec = cfg.scenario
        self.topology = cfg.build_topology()
        self.geo = GeoIndex(self.topology)
        self.fleet = Fleet(self.topology, cfg.scaler, cfg.instance_cap, self.geo)
        # independent streams so mobility and latency draws never interleave
        agent_seq, router_seq = np.random.SeedSequence(cfg.seed).spawn(2)
        self.agents = AgentPopulation(self.spec, self.topology, np.random.default_rng(agent_seq))
        self.router = DiscoveryRouter(
            self.geo, cfg.latency, self.agents.n, np.random.default_rng(router_seq), self.spec.discovery_interval_s
        )
        self.node_ids = list(self.topology.nodes)
        self.node_pos = {n: i for i, n in enumerate(self.node_ids)}
        self.node_layer = [self.topology.nodes[n].layer for n in self.node_ids]
        self.zone_nodes = [z.node_ids for z in self.topology.zones]
        self._deploy_initial()
        for f in cfg.failures:
            inject_failure(self.fleet, f.node, f.kind, f.start_s, f.duration_s)
        offs = zone_deactivation_times(self.spec, len(self.topology.zones))
        self.deactivations = {t: zi for zi, t in enumerate(offs)}
        self.injection_times = {t for inj in self.fleet.injections for t in (inj.start, inj.end)}

    def _deploy_initial(self):
        policy = self.cfg.policy
        fleet = self.fleet
        edge = self.topology.layer_nodes(Layer.EDGE)
        fog = self.topology.layer_nodes(Layer.FOG)
        cloud = self.topology.layer_nodes(Layer.CLOUD)
        if policy == "always_on":
            pinned = edge + fog[: self.cfg.always_on_fog_nodes] + cloud
        elif policy == "cloud_only":
            pinned = cloud
        else:
            pinned = fog + cloud
        for nid in pinned:
            fleet.create(nid, 0.0, _S.DISCOVERABLE, pinned=True, kind="deploy", detail=f"policy={policy}")
        if policy == "scarey" and self.spec.edge_initial == "discoverable":
            for nid in edge:
                fleet.create(nid, 0.0, _S.DISCOVERABLE, kind="deploy", detail="initial")

    # -- per-interval control step ----------------------------------------------

    def _serving(self, node_id: str) -> list:
        return [i for i in self.fleet.on_node(node_id) if i.state is not _S.INACTIVE]

    def _control_step(self, now: float, node_acc: np.ndarray, zone_acc: np.ndarray):
        fleet, cfg = self.fleet, self.cfg
        scaling = cfg.policy == "scarey"
        if scaling:
            for zi, nodes in enumerate(self.zone_nodes):
                if zone_acc[zi] <= 0:
                    continue
                avail = [n for n in nodes if self.geo.is_available(n)]
                if avail and not any(self._serving(n) for n in avail):
                    target = next((n for n in avail if fleet.live_count(n) < fleet.cap), None)
                    if target is not None:
                        fleet.create(target, now, kind="register", detail=f"zone={self.topology.zones[zi].name}")
                        fleet.counts["registered"] += 1
        samples = {}
        node_u = np.zeros(len(self.node_ids))
        f_d = cfg.scaler.demand.f_d
        for zi, nodes in enumerate(self.zone_nodes):
            avail = [n for n in nodes if self.geo.is_available(n)]
            serving = [i for n in avail for i in self._serving(n)]
            for inst in serving:
                share = zone_acc[zi] / len(serving)
                samples[inst.id] = share
                node_u[self.node_pos[inst.node_id]] = share / f_d
        for layer in (Layer.FOG, Layer.CLOUD):
            for nid in self.topology.layer_nodes(layer):
                serving = self._serving(nid)
                if not serving or not self.geo.is_available(nid):
                    continue
                share = node_acc[self.node_pos[nid]] / len(serving)
                node_u[self.node_pos[nid]] = share / f_d
                for inst in serving:
                    samples[inst.id] = share
        if scaling:
            plan = schedule_tick(fleet, samples, now)
            apply_plan(plan, fleet, now)
        if cfg.metrics.modeled_load_pct is not None:
            loads = np.full(len(self.node_ids), cfg.metrics.modeled_load_pct)
        else:
            loads = np.clip(node_u / cfg.capacity_u_max * 100.0, 0.0, 100.0)
        fleet.set_loads(loads)

    def _deactivate_zone(self, zi: int, now: float):
        nodes = self.zone_nodes[zi]
        apply_plan(DeploymentPlan([SetAvailability(n, False) for n in nodes]), self.fleet, now)
        for nid in nodes:
            for inst in self.fleet.on_node(nid):
                self.fleet.apply(inst, Directive.FINALIZE, now, "zone-deactivated")

    # -- main loop ----------------------------------------------------------

    def run(self) -> RunResult:
        spec, fleet, agents = self.spec, self.fleet, self.agents
        n_nodes = len(self.node_ids)
        interval = spec.request_interval_s
        node_acc = np.zeros(n_nodes, dtype=np.int64)
        zone_acc = np.zeros(len(self.topology.zones), dtype=np.int64)
        layer_idx = np.array([LAYER_ORDER.index(layer) for layer in self.node_layer])
        layer_onehot = np.stack([layer_idx == li for li in range(3)], axis=1).astype(np.int64)
        totals = {"issued": 0, "routed": 0, "rejected": 0}
        routed_by_node = np.zeros(n_nodes, dtype=np.int64)
        rows = []
        state_cache_key = None
        disc = set()
        counts = (0, 0, 0, 0)
        last_pop_min = None
        for tick in range(int(spec.duration_s)):
            now = float(tick)
            if now in self.injection_times:
                fleet.process_injections(now)
            if now in self.deactivations:
                self._deactivate_zone(self.deactivations[now], now)
            minute = tick // 60
            if minute != last_pop_min:
                agents.set_population(population(spec, now))
                last_pop_min = minute
            key = len(fleet.events)
            if key != state_cache_key:
                disc = {n for n in fleet.discoverable_nodes() if self.geo.is_available(n)}
                states = [i.state for i in fleet.instances.values()]
                counts = tuple(states.count(s) for s in (_S.DISCOVERABLE, _S.UNDISCOVERABLE, _S.INACTIVE, _S.FINAL))
                state_cache_key = key
            req = emit_requests(agents, self.router, now, disc, phase_of(spec, now), request_multiplier(spec, now))
            if req.routed + req.rejected != req.issued:
                raise InvariantViolation(f"request conservation broken at tick {tick}")
            if req.rejected and disc:
                raise InvariantViolation(f"rejections at tick {tick} while instances were discoverable")
            node_acc += req.node_counts
            zone_acc += req.zone_counts
            routed_by_node += req.node_counts
            totals["issued"] += req.issued
            totals["routed"] += req.routed
            totals["rejected"] += req.rejected
            rows.append((
                tick, tick, int(agents.active.sum()), *counts,
                *(req.node_counts @ layer_onehot).tolist(), req.rejected,
            ))
            if (tick + 1) % interval == 0:
                self._control_step(now, node_acc, zone_acc)
                node_acc[:] = 0
                zone_acc[:] = 0
            advance_agents(agents, self.topology, 1.0, now)
            fleet.accrue(now, 1.0)
        end = float(spec.duration_s)
        fleet.close(end)
        errs = fleet.violations()
        if errs:
            raise InvariantViolation("; ".join(errs))
        summary = self._summary(totals, routed_by_node)
        return RunResult(self.cfg, summary, rows, list(fleet.events), fleet, self.router)

    # -- reporting ------------------------------------------------------------

    def _summary(self, totals: dict, routed_by_node: np.ndarray) -> dict:
        cfg, spec, fleet = self.cfg, self.spec, self.fleet
        ledger = fleet.ledger(spec.repeat_days)
        specs = self.topology.nodes
        days = spec.duration_s / 86400.0
        for nid, h in ledger.hours_by_node().items():
            if h / spec.repeat_days > spec.duration_s / 3600.0 + 1e-9:
                raise InvariantViolation(f"node {nid} powered longer than the simulated period")

        def block(by_layer, scale=1.0):
            out = {layer.value: by_layer[layer] * scale for layer in LAYER_ORDER}
            out["total"] = sum(out.values())
            return out

        cost = block(cost_by_layer(ledger, specs))
        power_wh = block(power_by_layer(ledger, specs))
        emis_g = block(
            emissions_by_layer(ledger, specs, cfg.metrics.include_manufacturing, cfg.metrics.embodied_g_per_hour)
        )
        hours_by_node = ledger.hours_by_node()
        node_hours = {nid: hours_by_node.get(nid, 0.0) for nid in self.node_ids}
        layer_hours = {layer.value: 0.0 for layer in LAYER_ORDER}
        for nid, h in node_hours.items():
            layer_hours[specs[nid].layer.value] += h
        n_edge = len(self.topology.layer_nodes(Layer.EDGE))
        insts = list(fleet.instances.values())
        edge_insts = [i for i in insts if specs[i.node_id].layer is Layer.EDGE]
        summary = {
            "meta": {"version": __version__, "generated_at": None, "wall_clock_s": None},
            "scenario": {"name": spec.name, "kind": spec.kind.value, "duration_s": spec.duration_s,
                         "repeat_days": spec.repeat_days},
            "policy": cfg.policy,
            "seed": cfg.seed,
            "fleet": {
                "edge_model": cfg.topology.edge_model,
                "fog_model": cfg.topology.fog_model,
                "cloud_model": cfg.topology.cloud_model,
                "nodes": {layer.value: len(self.topology.layer_nodes(layer)) for layer in LAYER_ORDER},
            },
            "cost_usd": cost,
            "power_wh": power_wh,
            "energy_kwh": {k: sig3(v / 1000.0) for k, v in power_wh.items()},
            "emissions_kg": {k: v / 1000.0 for k, v in emis_g.items()},
            "hours": {
                "by_layer": layer_hours,
                "by_node": node_hours,
                "edge_mean_per_node_per_day": layer_hours["edge"] / n_edge / (spec.repeat_days * days) if n_edge else 0.0,
            },
            "requests": {
                **totals,
                "by_node": {nid: int(c) for nid, c in zip(self.node_ids, routed_by_node)},
                "by_layer": {
                    layer.value: int(sum(c for nid, c in zip(self.node_ids, routed_by_node)
                                         if specs[nid].layer is layer))
                    for layer in LAYER_ORDER
                },
            },
            "instances": {
                "created": len(insts),
                "spawned": fleet.counts["spawned"],
                "registered": fleet.counts["registered"],
                "finalized": fleet.counts["finalized"],
                "saturation_events": fleet.counts["saturation"],
                "constraint_events": fleet.counts["constraint"],
                "final_states": {
                    s.value: sum(1 for i in insts if i.state is s) for s in ServiceState
                },
                "edge_all_final": all(i.state is _S.FINAL for i in edge_insts) if edge_insts else True,
                "max_live_per_node": self._max_live_per_node(),
            },
            "timing": self.router.timing_summary(),
            "reference": {
                "comparison": compare_to_published(cfg.policy, {
                    "cost_usd": cost,
                    "energy_kwh": {k: v / 1000.0 for k, v in power_wh.items()},
                    "emissions_kg": {k: v / 1000.0 for k, v in emis_g.items()},
                }) if spec.kind.value == "annual" else {},
                "notes": NOTES,
            },
        }
        return summary

    def _max_live_per_node(self) -> int:
        # replay creation/finalization events to find the peak per-node count
        live: dict[str, int] = {}
        peak = 0
        for ev in self.fleet.events:
            if ev.kind in ("spawn", "register", "deploy"):
                live[ev.node_id] = live.get(ev.node_id, 0) + 1
                peak = max(peak, live[ev.node_id])
            elif ev.kind == "transition" and ev.new == _S.FINAL.value:
                live[ev.node_id] -= 1
        return peak


def run_simulation(cfg: RunConfig) -> RunResult:
    return Simulation(cfg).run()


# --- output files ---------------------------------------------------------

def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(type(o))


def summary_json(summary: dict) -> str:
    return json.dumps(summary, indent=2, sort_keys=False, default=_json_default) + "\n"


def write_outputs(result: RunResult, out_dir: str, wall_clock_s: Optional[float] = None):
    os.makedirs(out_dir, exist_ok=True)
    summary = dict(result.summary)
    summary["meta"] = {
        "version": __version__,
        "generated_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "wall_clock_s": None if wall_clock_s is None else round(wall_clock_s, 3),
    }
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        fh.write(summary_json(summary))
    with open(os.path.join(out_dir, "timeseries.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(TIMESERIES_HEADER + "\n")
        csv.writer(fh, lineterminator="\n").writerows(result.timeseries)
    with open(os.path.join(out_dir, "ledger.csv"), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scope", "node_id", "layer", "instance_id", "start_s", "end_s", "hours", "mean_load_pct"])
        specs = result.fleet.topology.nodes
        for iv in sorted(result.fleet.node_intervals, key=lambda iv: (iv.node_id, iv.start_s)):
            w.writerow(["node", iv.node_id, specs[iv.node_id].layer.value, "", iv.start_s, iv.end_s,
                        repr(iv.hours), repr(iv.mean_load)])
        for iv in sorted(result.fleet.instance_intervals, key=lambda iv: (iv.instance_id, iv.start_s)):
            w.writerow(["instance", iv.node_id, specs[iv.node_id].layer.value, iv.instance_id, iv.start_s,
                        iv.end_s, repr(iv.hours), repr(iv.mean_load)])
    with open(os.path.join(out_dir, "events.log"), "w", encoding="utf-8") as fh:
        for ev in result.events:
            fh.write(ev.line() + "\n")
    with open(os.path.join(out_dir, "config.yaml"), "w", encoding="utf-8") as fh:
        fh.write(dump_yaml(result.config))
