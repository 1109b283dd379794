"""Run configuration: YAML loading, validation and the effective-config echo."""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Optional

import yaml

from .discovery import LatencyModel
from .fsm import ConfigError, DemandParams, FsmMode
from .mobility import BUILTIN_SCENARIOS, ScenarioKind, ScenarioSpec
from .scaler import ScalerConfig
from .topology import DEFAULT_ZONES, HARDWARE, HardwareProfile, Layer, build_topology

POLICIES = ("scarey", "always_on", "cloud_only")

# Built-in scenario adjustments on top of the global defaults.  The annual
# day uses one instance per zone (u_max covers a full zone) and a flat
# modeled CPU load for energy/CO2.
SCENARIO_DEFAULTS = {
    "annual": {"demand": {"u_max": 250.0}, "metrics": {"modeled_load_pct": 10.0}},
}


@dataclass(frozen=True)
class FailureSpec:
    node: str
    kind: str
    start_s: float
    duration_s: float


@dataclass(frozen=True)
class TopologyConfig:
    edge_model: str = "jetson-nano"
    fog_model: str = "t2.small"
    fog_count: int = 2
    cloud_model: str = "t2.xlarge"
    cloud_count: int = 1
    capacity_u_max: Optional[float] = None     # defaults to demand.u_max
    zones: tuple = DEFAULT_ZONES
    hardware: dict = field(default_factory=dict)


@dataclass(frozen=True)
class MetricsConfig:
    modeled_load_pct: Optional[float] = None   # None: derive load from demand
    include_manufacturing: bool = False
    embodied_g_per_hour: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioSpec
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    scaler: ScalerConfig = field(default_factory=ScalerConfig)
    latency: LatencyModel = field(default_factory=LatencyModel)
    policy: str = "scarey"
    instance_cap: int = 2
    always_on_fog_nodes: int = 1
    failures: tuple = ()
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    seed: int = 0
    out: str = "out"

    @property
    def capacity_u_max(self) -> float:
        cap = self.topology.capacity_u_max
        return self.scaler.demand.u_max if cap is None else cap

    def build_topology(self):
        t = self.topology
        hw = {name: HardwareProfile(name, h["cost_per_hour"], tuple(h["power_w"]), tuple(h["co2_g_per_hour"]))
              for name, h in t.hardware.items()}
        return build_topology(
            t.zones, t.edge_model, t.fog_model, t.fog_count, t.cloud_model, t.cloud_count,
            self.capacity_u_max, hw,
        )


# --- (de)serialization ----------------------------------------------------------

def _latency_to_dict(m: LatencyModel) -> dict:
    out = {layer.value: {"base_ms": m.base_ms[layer], "jitter_ms": m.jitter_ms[layer]} for layer in Layer}
    out.update(lookup_step_ms=m.lookup_step_ms, lookup_steps=m.lookup_steps, lookup_jitter_ms=m.lookup_jitter_ms)
    return out


def to_dict(cfg: RunConfig) -> dict:
    """Effective configuration with every default resolved."""
    sc = asdict(cfg.scenario)
    sc["kind"] = cfg.scenario.kind.value
    topo = asdict(cfg.topology)
    topo["capacity_u_max"] = cfg.capacity_u_max
    topo["zones"] = [
        {"name": n, "rect": list(r), "window": [s, e], "category": c} for n, r, s, e, c in cfg.topology.zones
    ]
    return {
        "scenario": sc,
        "seed": cfg.seed,
        "policy": cfg.policy,
        "out": cfg.out,
        "topology": topo,
        "demand": asdict(cfg.scaler.demand),
        "stability": {
            "delta_t": cfg.scaler.delta_t,
            "i_r_min": cfg.scaler.i_r_min,
            "i_r_max": cfg.scaler.i_r_max,
            "indicator": cfg.scaler.indicator,
        },
        "fsm_mode": cfg.scaler.fsm_mode.value,
        "control": {"instance_cap": cfg.instance_cap, "always_on_fog_nodes": cfg.always_on_fog_nodes},
        "latency": _latency_to_dict(cfg.latency),
        "metrics": asdict(cfg.metrics),
        "failures": [asdict(f) for f in cfg.failures],
    }


def dump_yaml(cfg: RunConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)


def _deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


class _Problems:
    """Collects (field path, message) pairs; renders with YAML line numbers."""

    def __init__(self, lines: Optional[dict] = None):
        self.items: list[tuple[str, str]] = []
        self.lines = lines or {}

    def add(self, path: str, msg: str):
        self.items.append((path, msg))

    def render(self) -> list[str]:
        out = []
        for path, msg in self.items:
            line = self._line_for(path)
            where = f"{path} (line {line})" if line else path
            out.append(f"{where}: {msg}")
        return out

    def _line_for(self, path: str) -> Optional[int]:
        while path:
            if path in self.lines:
                return self.lines[path]
            path = path.rpartition(".")[0]
        return None


def _line_map(node, prefix="", out=None) -> dict:
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = f"{prefix}.{k.value}" if prefix else str(k.value)
            out[key] = k.start_mark.line + 1
            _line_map(v, key, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            key = f"{prefix}[{i}]"
            out[key] = v.start_mark.line + 1
            _line_map(v, key, out)
    return out


_KNOWN = {
    "scenario", "seed", "policy", "out", "topology", "demand", "stability", "fsm_mode",
    "control", "latency", "metrics", "failures",
}


def _section(raw: dict, name: str, cls, probs: _Problems) -> dict:
    val = raw.get(name) or {}
    if not isinstance(val, dict):
        probs.add(name, "must be a mapping")
        return {}
    allowed = {f.name for f in fields(cls)} if cls else None
    if allowed is not None:
        for k in val:
            if k not in allowed:
                probs.add(f"{name}.{k}", "unknown field")
    return {k: v for k, v in val.items() if allowed is None or k in allowed}


def _num(probs, path, v, kind=float):
    try:
        if isinstance(v, bool):
            raise TypeError
        return kind(v)
    except (TypeError, ValueError):
        probs.add(path, f"expected a number, got {v!r}")
        return None


def _scenario_from(raw, probs: _Problems) -> Optional[ScenarioSpec]:
    sc = raw.get("scenario", "scale-up")
    if isinstance(sc, str):
        if sc not in BUILTIN_SCENARIOS:
            probs.add("scenario", f"unknown built-in scenario {sc!r} (choose from {sorted(BUILTIN_SCENARIOS)})")
            return None
        return BUILTIN_SCENARIOS[sc]
    if not isinstance(sc, dict):
        probs.add("scenario", "must be a built-in name or a mapping")
        return None
    sc = dict(sc)
    base_name = sc.pop("base", None) or sc.get("name")
    base = BUILTIN_SCENARIOS.get(base_name)
    allowed = {f.name for f in fields(ScenarioSpec)}
    for k in list(sc):
        if k not in allowed:
            probs.add(f"scenario.{k}", "unknown field")
            sc.pop(k)
    if "kind" in sc:
        try:
            sc["kind"] = ScenarioKind(sc["kind"])
        except ValueError:
            probs.add("scenario.kind", f"unknown kind {sc['kind']!r}")
            return None
    if base is not None:
        return replace(base, **sc)
    missing = [k for k in ("name", "kind") if k not in sc]
    if missing:
        probs.add("scenario", f"inline scenario needs {', '.join(missing)} (or a 'base' built-in)")
        return None
    try:
        return ScenarioSpec(**sc)
    except TypeError as exc:
        probs.add("scenario", str(exc))
        return None


def _latency_from(raw: dict, probs: _Problems) -> LatencyModel:
    lat = raw.get("latency") or {}
    d = LatencyModel()
    base, jit = dict(d.base_ms), dict(d.jitter_ms)
    kwargs = {}
    for k, v in lat.items():
        if k in ("edge", "fog", "cloud"):
            layer = Layer(k)
            if not isinstance(v, dict):
                probs.add(f"latency.{k}", "must be a mapping with base_ms and jitter_ms")
                continue
            if "base_ms" in v:
                base[layer] = _num(probs, f"latency.{k}.base_ms", v["base_ms"]) or 0.0
            if "jitter_ms" in v:
                jit[layer] = _num(probs, f"latency.{k}.jitter_ms", v["jitter_ms"]) or 0.0
        elif k in ("lookup_step_ms", "lookup_jitter_ms"):
            kwargs[k] = _num(probs, f"latency.{k}", v) or 0.0
        elif k == "lookup_steps":
            kwargs[k] = _num(probs, f"latency.{k}", v, int) or 0
        else:
            probs.add(f"latency.{k}", "unknown field")
    return LatencyModel(base, jit, **kwargs)


def build_config(raw: dict, lines: Optional[dict] = None, overrides: Optional[dict] = None) -> tuple[Optional[RunConfig], list[str]]:
    """Build and validate a RunConfig; returns (config or None, all violations)."""
    probs = _Problems(lines)
    raw = _deep_merge(raw or {}, overrides or {})
    for k in raw:
        if k not in _KNOWN:
            probs.add(k, "unknown section")
    scenario = _scenario_from(raw, probs)
    if scenario is not None:
        defaults = SCENARIO_DEFAULTS.get(scenario.name, {})
        merged = _deep_merge(defaults, raw)
    else:
        merged = raw

    demand_kw = {k: _num(probs, f"demand.{k}", v) for k, v in _section(merged, "demand", DemandParams, probs).items()}
    stab = _section(merged, "stability", None, probs)
    stab_kw = {}
    for k, v in stab.items():
        if k in ("delta_t", "i_r_min", "i_r_max"):
            stab_kw[k] = _num(probs, f"stability.{k}", v)
        elif k == "indicator":
            stab_kw[k] = v
        else:
            probs.add(f"stability.{k}", "unknown field")
    try:
        fsm_mode = FsmMode(merged.get("fsm_mode", FsmMode.PERMISSIVE.value))
    except ValueError:
        probs.add("fsm_mode", "must be 'strict' or 'permissive'")
        fsm_mode = FsmMode.PERMISSIVE
    if any(v is None for v in (*demand_kw.values(), *stab_kw.values())):
        return None, probs.render()
    scaler = ScalerConfig(DemandParams(**demand_kw), fsm_mode=fsm_mode, **stab_kw)
    demand_msgs = scaler.demand.violations()
    for msg in scaler.violations():
        probs.add("demand" if msg in demand_msgs else "stability", msg)

    topo_kw = _section(merged, "topology", TopologyConfig, probs)
    if "zones" in topo_kw:
        zones = []
        for i, z in enumerate(topo_kw["zones"] or []):
            try:
                start, end = z["window"]
                zones.append((z["name"], tuple(float(c) for c in z["rect"]), float(start), float(end), z.get("category", "working")))
            except (KeyError, TypeError, ValueError):
                probs.add(f"topology.zones[{i}]", "zone needs name, rect [x0, y0, x1, y1] and window [start, end]")
        topo_kw["zones"] = tuple(zones)
    hardware = topo_kw.get("hardware") or {}
    for name, h in hardware.items():
        for key in ("cost_per_hour", "power_w", "co2_g_per_hour"):
            if not isinstance(h, dict) or key not in h:
                probs.add(f"topology.hardware.{name}", f"missing {key}")
    topo_cfg = TopologyConfig(**topo_kw)
    known_models = set(HARDWARE) | set(hardware)
    for key in ("edge_model", "fog_model", "cloud_model"):
        if getattr(topo_cfg, key) not in known_models:
            probs.add(f"topology.{key}", f"unknown hardware model {getattr(topo_cfg, key)!r}")

    control = _section(merged, "control", None, probs)
    instance_cap = control.get("instance_cap", 2)
    always_on_fog = control.get("always_on_fog_nodes", 1)
    for k in control:
        if k not in ("instance_cap", "always_on_fog_nodes"):
            probs.add(f"control.{k}", "unknown field")
    if not isinstance(instance_cap, int) or instance_cap < 1:
        probs.add("control.instance_cap", "must be an integer >= 1")

    policy = merged.get("policy", "scarey")
    if policy not in POLICIES:
        probs.add("policy", f"must be one of {', '.join(POLICIES)}")

    metrics = MetricsConfig(**_section(merged, "metrics", MetricsConfig, probs))
    if metrics.modeled_load_pct is not None and not 0 <= metrics.modeled_load_pct <= 100:
        probs.add("metrics.modeled_load_pct", "must lie in [0, 100]")

    latency = _latency_from(merged, probs)
    for msg in latency.violations():
        probs.add("latency", msg)

    failures = []
    for i, f in enumerate(merged.get("failures") or []):
        try:
            failures.append(FailureSpec(str(f["node"]), str(f["kind"]), float(f["start_s"]), float(f["duration_s"])))
        except (KeyError, TypeError, ValueError):
            probs.add(f"failures[{i}]", "needs node, kind, start_s, duration_s")
    for i, f in enumerate(failures):
        if f.kind not in ("hardware", "maintenance"):
            probs.add(f"failures[{i}].kind", "must be 'hardware' or 'maintenance'")
        if f.duration_s <= 0:
            probs.add(f"failures[{i}].duration_s", "must be > 0")

    seed = merged.get("seed", scenario.seed if scenario else 0)
    if not isinstance(seed, int):
        probs.add("seed", "must be an integer")
    if scenario is not None:
        scenario = replace(scenario, seed=seed if isinstance(seed, int) else 0)
        for msg in scenario.violations():
            probs.add("scenario", msg)

    if probs.items or scenario is None:
        return None, probs.render()
    cfg = RunConfig(
        scenario=scenario,
        topology=topo_cfg,
        scaler=scaler,
        latency=latency,
        policy=policy,
        instance_cap=instance_cap,
        always_on_fog_nodes=always_on_fog,
        failures=tuple(failures),
        metrics=metrics,
        seed=seed,
        out=str(merged.get("out", "out")),
    )
    try:
        topo = cfg.build_topology()
    except (KeyError, TypeError, ValueError) as exc:
        probs.add("topology", f"cannot build topology: {exc}")
        return None, probs.render()
    for msg in topo.violations():
        probs.add("topology", msg)
    for i, f in enumerate(cfg.failures):
        if f.node not in topo.nodes:
            probs.add(f"failures[{i}].node", f"unknown node {f.node!r}")
    if probs.items:
        return None, probs.render()
    return cfg, []


def parse_yaml(text: str) -> tuple[dict, dict]:
    """Parse YAML text; returns (data, field-path -> line).  Raises ConfigError with position."""
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ConfigError(f"parse error at {where}: {exc.problem}") from exc
    if data is None:
        return {}, {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    return data, _line_map(node)


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> RunConfig:
    """Load, merge CLI overrides and validate; raises ConfigError listing every violation."""
    raw, lines = {}, {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            raw, lines = parse_yaml(fh.read())
    cfg, errors = build_config(raw, lines, overrides)
    if errors:
        raise ConfigError("\n".join(errors))
    return cfg


def validate(path: str) -> tuple[Optional[RunConfig], list[str]]:
    """Validate a config file; returns (config, []) or (None, every violation)."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw, lines = parse_yaml(fh.read())
    except ConfigError as exc:
        return None, [str(exc)]
    return build_config(raw, lines)


def builtin_config(name: str, **overrides: Any) -> RunConfig:
    return load_config(overrides={"scenario": name, **overrides})
