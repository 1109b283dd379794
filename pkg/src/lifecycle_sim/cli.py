"""Command-line entry point: validate, run, compare, scenarios."""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from dataclasses import asdict
from typing import Optional

from .config import POLICIES, load_config, validate
from .fsm import ConfigError
from .mobility import BUILTIN_SCENARIOS
from .simulation import InvariantViolation, run_simulation, write_outputs

log = logging.getLogger("lifecycle_sim")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INVARIANT = 2
EXIT_IO = 3


def _overrides(args) -> dict:
    over: dict = {}
    if args.scenario:
        over["scenario"] = args.scenario
    if args.seed is not None:
        over["seed"] = args.seed
    if args.policy:
        over["policy"] = args.policy
    if args.cloud:
        over["topology"] = {"cloud_model": args.cloud}
    return over


def cmd_validate(args) -> int:
    path = args.path or args.config
    if path is None:
        print("validate needs a config path", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg, errors = validate(path)
    except OSError as exc:
        print(f"cannot read {path}: {exc}", file=sys.stderr)
        return EXIT_IO
    if errors:
        for e in errors:
            print(e)
        return EXIT_CONFIG
    print(f"{path}: valid ({cfg.scenario.name}, policy={cfg.policy})")
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config, _overrides(args))
    except ConfigError as exc:
        print(f"config error:\n{exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    out = os.environ.get("SCAREY_SIM_OUT") or args.out or cfg.out
    t0 = time.perf_counter()
    try:
        result = run_simulation(cfg)
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    try:
        write_outputs(result, out, time.perf_counter() - t0)
    except OSError as exc:
        print(f"cannot write outputs to {out}: {exc}", file=sys.stderr)
        return EXIT_IO
    s = result.summary
    log.info("wrote %s", out)
    print(
        f"{cfg.scenario.name} policy={cfg.policy} cost=${s['cost_usd']['total']:.2f} "
        f"energy={s['energy_kwh']['total']} kWh emissions={s['emissions_kg']['total']:.3f} kg -> {out}"
    )
    return EXIT_OK


def _pct(a: float, b: float) -> Optional[float]:
    if b == 0 or a is None or b is None or math.isnan(a) or math.isnan(b):
        return None
    return (a - b) / b * 100.0


def compare(summary_a: dict, summary_b: dict) -> dict:
    """Percent deltas (A - B) / B for totals and per layer."""
    report: dict = {"warnings": []}
    if summary_a["scenario"]["kind"] != summary_b["scenario"]["kind"]:
        report["warnings"].append(
            f"scenario kinds differ: {summary_a['scenario']['kind']} vs {summary_b['scenario']['kind']}"
        )
    for key, name in (("cost_usd", "cost"), ("power_wh", "power"), ("emissions_kg", "emissions")):
        a, b = summary_a[key], summary_b[key]
        report[name] = {layer: _pct(a[layer], b[layer]) for layer in a if layer in b}
    acq_a = summary_a.get("timing", {}).get("acquisition", {}).get("overall", {}).get("mean")
    acq_b = summary_b.get("timing", {}).get("acquisition", {}).get("overall", {}).get("mean")
    report["mean_acquisition"] = _pct(acq_a, acq_b) if acq_a is not None and acq_b is not None else None
    return report


def _read_summary(path: str) -> dict:
    if os.path.isdir(path):
        path = os.path.join(path, "summary.json")
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def cmd_compare(args) -> int:
    try:
        a, b = _read_summary(args.run_a), _read_summary(args.run_b)
    except (OSError, ValueError) as exc:
        print(f"cannot read summaries: {exc}", file=sys.stderr)
        return EXIT_IO
    report = compare(a, b)
    for w in report["warnings"]:
        log.warning(w)
    text = json.dumps(report, indent=2)
    print(text)
    out = os.environ.get("SCAREY_SIM_OUT") or args.out
    if out:
        try:
            os.makedirs(out, exist_ok=True)
            with open(os.path.join(out, "compare.json"), "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        except OSError as exc:
            print(f"cannot write compare report: {exc}", file=sys.stderr)
            return EXIT_IO
    return EXIT_OK


def cmd_scenarios(args) -> int:
    for name, spec in BUILTIN_SCENARIOS.items():
        d = asdict(spec)
        d["kind"] = spec.kind.value
        print(name)
        for k, v in d.items():
            if k != "name":
                print(f"  {k}: {v}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lifecycle-sim", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    v = sub.add_parser("validate", help="check a config file and list every violation")
    v.add_argument("path", nargs="?")
    v.add_argument("--config")
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("run", help="run one seeded scenario")
    r.add_argument("--scenario", choices=sorted(BUILTIN_SCENARIOS))
    r.add_argument("--config")
    r.add_argument("--seed", type=int)
    r.add_argument("--policy", choices=POLICIES)
    r.add_argument("--out")
    r.add_argument("--cloud", help="cloud hardware model, e.g. t4g.2xlarge")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="percent deltas between two run directories")
    c.add_argument("run_a")
    c.add_argument("run_b")
    c.add_argument("--out")
    c.set_defaults(func=cmd_compare)

    s = sub.add_parser("scenarios", help="list built-in scenarios")
    s.set_defaults(func=cmd_scenarios)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
