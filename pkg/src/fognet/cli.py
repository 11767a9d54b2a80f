"""Command-line interface: run, validate, gen-topology, report."""

from __future__ import annotations

import argparse
import os
import sys
from typing import List, Optional

import yaml

from .scenario import ParseError, ValidationError, load_scenario, parse_gen_params
from .simulation import Simulation
from .topology import InfeasiblePlacement, generate_clustered, save_topology
from .util import fmt6


def _cmd_run(args) -> int:
    try:
        config = load_scenario(args.scenario, seed=args.seed, duration_ms=args.duration)
    except (ParseError, ValidationError, OSError) as exc:
        print(f"error: {args.scenario}: {exc}", file=sys.stderr)
        return 1
    sim = Simulation(config)
    record = sim.run()
    out_dir = args.out or f"{os.path.splitext(args.scenario)[0]}.out"
    sim.write_outputs(out_dir, record)
    print(f"scenario {config.name}: {record.requests} requests, {record.admitted} admitted, "
          f"{record.rejected_total} rejected, backhaul {fmt6(record.backhaul_bytes / 1_000_000)} MB")
    print(f"outputs written to {out_dir}")
    return 0


def _cmd_validate(args) -> int:
    try:
        config = load_scenario(args.scenario)
    except (ParseError, ValidationError, OSError) as exc:
        print(f"error: {args.scenario}: {exc}", file=sys.stderr)
        return 1
    print(
        f"{args.scenario}: ok ({len(config.topology.nodes)} nodes, "
        f"{len(config.topology.clusters)} clusters, {len(config.slices)} slices)"
    )
    return 0


def _cmd_gen_topology(args) -> int:
    try:
        with open(args.params) as fh:
            doc = yaml.safe_load(fh.read()) or {}
        params = parse_gen_params(doc, "params", default_seed=0)
        topo = generate_clustered(params)
    except (OSError, yaml.YAMLError, ValidationError, InfeasiblePlacement) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.out:
        save_topology(topo, args.out)
        print(f"wrote {args.out}: {len(topo.nodes)} nodes, {len(topo.links)} links")
    else:
        from .topology import dumps

        sys.stdout.write(dumps(topo))
    return 0


def _read_rows(path: str) -> List[List[str]]:
    with open(path) as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    return [line.split("\t") for line in lines]


def _cmd_report(args) -> int:
    """Re-derive the summary from the run's trace files and cross-check it."""
    required = ["metrics.tsv", "decisions.log", "events.log", "connectivity.log", "slices.tsv"]
    for name in required:
        if not os.path.exists(os.path.join(args.rundir, name)):
            print(f"error: {args.rundir}: missing {name}", file=sys.stderr)
            return 1

    decisions = _read_rows(os.path.join(args.rundir, "decisions.log"))
    header, rows = decisions[0], decisions[1:]
    col = {name: i for i, name in enumerate(header)}
    requests = admitted = 0
    rejected: dict = {}
    latency_sum: dict = {}
    latency_count: dict = {}
    cache_lookups = cache_hits = 0
    for row in rows:
        status = row[col["status"]]
        reroute = row[col["reroute"]] == "1"
        if status in ("accepted", "rejected") and not reroute:
            requests += 1
        if status == "accepted" and not reroute:
            admitted += 1
            cls = row[col["class"]]
            latency_sum[cls] = latency_sum.get(cls, 0.0) + float(row[col["latency_ms"]])
            latency_count[cls] = latency_count.get(cls, 0) + 1
        elif status == "rejected" and not reroute:
            rejected[row[col["reason"]]] = rejected.get(row[col["reason"]], 0) + 1
        if row[col["note"]] == "cache_hit":
            cache_lookups += 1
            cache_hits += 1
        elif row[col["note"]] == "cache_miss":
            cache_lookups += 1

    metrics = _read_rows(os.path.join(args.rundir, "metrics.tsv"))
    mheader, mrows = metrics[0], metrics[1:]
    mcol = {name: i for i, name in enumerate(mheader)}
    last = mrows[-1]

    checks = [
        ("requests", requests, int(last[mcol["requests"]])),
        ("admitted", admitted, int(last[mcol["admitted"]])),
        ("rejected_total", sum(rejected.values()), int(last[mcol["rejected_total"]])),
        ("cache_lookups", cache_lookups, int(last[mcol["cache_lookups"]])),
        ("cache_hits", cache_hits, int(last[mcol["cache_hits"]])),
    ]
    ok = True
    print(f"report for {args.rundir}")
    for name, derived, recorded in checks:
        match = "ok" if derived == recorded else "MISMATCH"
        if derived != recorded:
            ok = False
        print(f"  {name}: derived={derived} recorded={recorded} [{match}]")
    for cls in sorted(latency_count):
        mean = latency_sum[cls] / latency_count[cls]
        recorded = float(last[mcol[f"mean_latency_ms_{cls}"]])
        match = "ok" if abs(mean - recorded) < 1e-6 else "MISMATCH"
        if match != "ok":
            ok = False
        print(f"  mean_latency_ms_{cls}: derived={mean:.6f} recorded={recorded:.6f} [{match}]")
    print(f"  backhaul_mbytes: {last[mcol['backhaul_mbytes']]}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fognet",
        description="Flow-level simulator of a rural fog-controlled access network",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario and write its traces")
    p_run.add_argument("scenario")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None, help="output directory (default: <scenario>.out)")
    p_run.add_argument("--duration", type=int, default=None, help="override duration_ms")
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate", help="parse and validate a scenario file")
    p_val.add_argument("scenario")
    p_val.set_defaults(func=_cmd_validate)

    p_gen = sub.add_parser("gen-topology", help="generate a clustered topology from a params file")
    p_gen.add_argument("params")
    p_gen.add_argument("--out", default=None)
    p_gen.set_defaults(func=_cmd_gen_topology)

    p_rep = sub.add_parser("report", help="re-derive a run summary from its traces")
    p_rep.add_argument("rundir")
    p_rep.set_defaults(func=_cmd_report)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
