"""Cost, energy and CO2 accounting plus discovery/acquisition timing statistics."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

import numpy as np

from .topology import LAYER_ORDER, Layer, NodeSpec


def interpolate_curve(curve, load: float) -> float:
    """Piecewise-linear value of a (load%, value) curve; idle is load 0."""
    if not 0.0 <= load <= 100.0 or math.isnan(load):
        raise ValueError(f"load must lie in [0, 100] percent, got {load}")
    xs = [p[0] for p in curve]
    ys = [p[1] for p in curve]
    return float(np.interp(load, xs, ys))


@dataclass(frozen=True)
class UsageInterval:
    node_id: str
    start_s: float
    end_s: float
    mean_load: float            # percent
    instance_id: Optional[int] = None

    @property
    def hours(self) -> float:
        return (self.end_s - self.start_s) / 3600.0


@dataclass
class UsageLedger:
    """Powered intervals per node; ``repeat`` scales a representative period."""

    intervals: list[UsageInterval] = field(default_factory=list)
    repeat: float = 1.0

    def add(self, interval: UsageInterval):
        if interval.end_s < interval.start_s:
            raise ValueError("interval ends before it starts")
        self.intervals.append(interval)

    def hours_by_node(self) -> dict[str, float]:
        out: dict[str, float] = defaultdict(float)
        for iv in self.intervals:
            out[iv.node_id] += iv.hours * self.repeat
        return dict(out)

    def for_node(self, node_id: str) -> "UsageLedger":
        return UsageLedger([iv for iv in self.intervals if iv.node_id == node_id], self.repeat)


def _layer_sum(ledger: UsageLedger, specs: Mapping[str, NodeSpec], per_hour) -> dict[Layer, float]:
    out = {layer: 0.0 for layer in LAYER_ORDER}
    for iv in ledger.intervals:
        spec = specs[iv.node_id]
        out[spec.layer] += iv.hours * ledger.repeat * per_hour(spec, iv)
    return out


def cost_by_layer(ledger, specs):
    return _layer_sum(ledger, specs, lambda s, iv: s.cost_per_hour)


def power_by_layer(ledger, specs):
    return _layer_sum(ledger, specs, lambda s, iv: interpolate_curve(s.power_curve, iv.mean_load))


def emissions_by_layer(ledger, specs, include_manufacturing=False, embodied_g_per_hour=None):
    embodied = embodied_g_per_hour or {}

    def rate(s, iv):
        g = interpolate_curve(s.co2_curve, iv.mean_load)
        if include_manufacturing:
            g += embodied.get(s.model, 0.0)
        return g

    return _layer_sum(ledger, specs, rate)


def total_cost(ledger: UsageLedger, specs: Mapping[str, NodeSpec]) -> float:
    """USD: hours times hourly rate, summed over layers and nodes."""
    return sum(cost_by_layer(ledger, specs).values())


def total_power(ledger: UsageLedger, specs: Mapping[str, NodeSpec]) -> float:
    """Watt-hours at the interpolated draw of each interval's mean load."""
    return sum(power_by_layer(ledger, specs).values())


def total_emissions(ledger, specs, include_manufacturing: bool = False, embodied_g_per_hour=None) -> float:
    """Grams CO2; optional embodied (manufacturing) share per active hour by model."""
    return sum(emissions_by_layer(ledger, specs, include_manufacturing, embodied_g_per_hour).values())


def sig3(x: float) -> float:
    if x == 0:
        return 0.0
    return float(f"{x:.3g}")


# --- timing ----------------------------------------------------------------

PERCENTILES = (50, 95, 99)


def _stats(values) -> dict:
    arr = np.asarray(list(values), dtype=float)
    if arr.size == 0:
        return {"count": 0, "empty": True}
    out = {"count": int(arr.size), "mean": float(arr.mean()), "stddev": float(arr.std())}
    for p, v in zip(PERCENTILES, np.percentile(arr, PERCENTILES)):
        out[f"p{p}"] = float(v)
    out["min"] = float(arr.min())
    out["max"] = float(arr.max())
    return out


def timing_stats(records: Iterable) -> dict:
    """Discovery and acquisition statistics, overall and split by phase.

    Discovery time only counts records that performed a fresh lookup.
    """
    records = list(records)
    if not records:
        return {"empty": True}

    def block(recs):
        return {
            "discovery": _stats(r.discovery_time_ms for r in recs if not r.cached and r.node_id is not None),
            "acquisition": _stats(r.acquisition_time_ms for r in recs if r.node_id is not None),
        }

    phases = defaultdict(list)
    for r in records:
        phases[r.phase].append(r)
    out = block(records)
    out["phases"] = {p: block(rs) for p, rs in sorted(phases.items())}
    return out


class TimingAccumulator:
    """Streaming mean/stddev/min/max with histogram percentiles.

    Exact first and second moments; percentiles resolve to ``bin_ms``.
    """

    def __init__(self, bin_ms: float = 0.01, max_ms: float = 5000.0):
        self.bin_ms = bin_ms
        self.nbins = int(math.ceil(max_ms / bin_ms)) + 1
        self.hist = np.zeros(self.nbins, dtype=np.int64)
        self.count = 0
        self.total = 0.0
        self.total_sq = 0.0
        self.min = math.inf
        self.max = -math.inf
        self._pending: list = []
        self._pending_n = 0

    def add(self, values: np.ndarray):
        # buffered: folding many small arrays at once is far cheaper
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            return
        self._pending.append(values)
        self._pending_n += values.size
        if self._pending_n >= 65536:
            self._flush()

    def _flush(self):
        if not self._pending:
            return
        values = np.concatenate(self._pending)
        self._pending = []
        self._pending_n = 0
        self.count += int(values.size)
        self.total += float(values.sum())
        self.total_sq += float(np.dot(values, values))
        self.min = min(self.min, float(values.min()))
        self.max = max(self.max, float(values.max()))
        bins = np.clip(np.floor(values / self.bin_ms + 1e-9).astype(np.int64), 0, self.nbins - 1)
        self.hist += np.bincount(bins, minlength=self.nbins)

    def percentile(self, p: float) -> float:
        self._flush()
        target = p / 100.0 * self.count
        cum = np.cumsum(self.hist)
        idx = int(np.searchsorted(cum, max(target, 1e-12)))
        # bin midpoint, clamped to the observed range
        return float(min(max((idx + 0.5) * self.bin_ms, self.min), self.max))

    def summary(self) -> dict:
        self._flush()
        if self.count == 0:
            return {"count": 0, "empty": True}
        mean = self.total / self.count
        var = max(self.total_sq / self.count - mean * mean, 0.0)
        out = {"count": self.count, "mean": mean, "stddev": math.sqrt(var)}
        for p in PERCENTILES:
            out[f"p{p}"] = self.percentile(p)
        out["min"] = self.min
        out["max"] = self.max
        return out
