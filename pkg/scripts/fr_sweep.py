"""Flip-rate table for g, h01..hk, the oracle and random directions on the benchmark.

Usage: python3 scripts/fr_sweep.py [--config benchmarks/default.json] [--random 5] [--json out.json]
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

from bench import BENCH_CONFIG, Benchmark  # noqa: E402
from globaldirs import io  # noqa: E402
from globaldirs.config import RunConfig  # noqa: E402
from globaldirs.directions import Direction, combined_report  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(BENCH_CONFIG))
    ap.add_argument("--random", type=int, default=5, help="number of random unit directions")
    ap.add_argument("--json", help="also write the table here")
    args = ap.parse_args()

    bench = Benchmark(RunConfig.load(args.config))
    t0 = time.perf_counter()
    _, rep = bench.trained
    print(f"proxy held-out R2: f={rep.heldout_r2[0]:.3f} s={rep.heldout_r2[1]:.3f} "
          f"({time.perf_counter() - t0:.1f}s)")

    rows, results = [], []
    rng = np.random.default_rng(99)
    dirs = [("oracle", bench.oracle), ("g", bench.g)] + [(h.name, h) for h in bench.hs]
    for i in range(args.random):
        v = rng.standard_normal(bench.cfg.generator.n)
        dirs.append((f"random{i}", Direction(v / np.linalg.norm(v), "g", "random")))
    print(f"{'direction':>10} {'FR':>7} {'mean|a|':>8} {'dist':>8} {'eigenvalue':>11}")
    for label, d in dirs:
        rep, res = bench.evaluate(d, label)
        if d.kind in ("g", "h") and d.source_id != "random":
            results.append(res)
        ev = f"{d.eigenvalue:11.3e}" if d.eigenvalue is not None else " " * 11
        dist = f"{rep.mean_distance_flipped:8.4f}" if rep.mean_distance_flipped is not None else "       -"
        print(f"{label:>10} {rep.flip_rate:7.3f} {rep.mean_abs_alpha:8.3f} {dist} {ev}")
        rows.append({"direction": label, **rep.to_dict(), "eigenvalue": d.eigenvalue})
    comb, _ = combined_report(results, [lat.id for lat in bench.latents])
    print(f"{'g+h best':>10} {comb.flip_rate:7.3f}")
    if args.json:
        io.write_json(args.json, {"rows": rows, "combined": comb.to_dict()})


if __name__ == "__main__":
    main()
