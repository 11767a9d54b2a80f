#!/usr/bin/env python3
"""Paired runs showing how a fog cache cuts backhaul volume.

Same seed and request trace, cache on vs off, over a sweep of cache sizes.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from fognet.scenario import parse_scenario
from fognet.simulation import Simulation

TOPO = Path(__file__).resolve().parent.parent / "scenarios" / "two_cluster.topo.yaml"


def run(cache_capacity):
    doc = {
        "duration_ms": 30_000,
        "seed": 17,
        "metrics_tick_ms": 30_000,
        "topology": {"file": str(TOPO)},
        "fogs": {"fog1": {"cache": cache_capacity > 0, "cache_capacity": max(cache_capacity, 1)}},
        "workload": {
            "local_voip": {"rate_per_s": 0.0, "demand_mbps": 0.1, "holding_mean_s": 1},
            "content_request": {"rate_per_s": 60.0, "demand_mbps": 0.5, "holding_mean_s": 0.5},
            "external_web": {"rate_per_s": 0.0, "demand_mbps": 1.0, "holding_mean_s": 1},
            "content": {"catalog_size": 100, "zipf_exponent": 1.0},
        },
    }
    return Simulation(parse_scenario(doc)).run()


def main() -> int:
    baseline = run(0)
    base_mb = float(baseline.backhaul_bytes) / 1e6
    print(f"{'cache size':>10} {'hit rate':>9} {'backhaul MB':>12} {'saved':>7}")
    print(f"{'off':>10} {'-':>9} {base_mb:12.2f} {'-':>7}")
    for size in (5, 10, 20, 50):
        record = run(size)
        mb = float(record.backhaul_bytes) / 1e6
        saved = 100.0 * (1 - mb / base_mb)
        print(f"{size:>10} {record.cache_hit_rate:9.3f} {mb:12.2f} {saved:6.1f}%")
    return 0


if __name__ == "__main__":
    sys.exit(main())
