"""One-off calibration of the synthetic benchmark; writes benchmarks/default.json.

1. threshold b = median disk mean over Gaussian latents (rounded to 0.01),
   so roughly half of the latents land on each side of the boundary;
2. oracle run: brute-force gradient of classifier(decoder(z)) at the source,
   flip rate over the evaluation latents;
3. the frozen globality pass mark is max(0.8, oracle FR - 0.1).

Run once; the outputs are committed and the tests never re-tune them.
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

from bench import Benchmark  # noqa: E402
from globaldirs import io  # noqa: E402
from globaldirs.config import ClassifierConfig, RunConfig, Thresholds  # noqa: E402
from globaldirs.worldmodel import DiskClassifier, SyntheticGenerator  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=20000)
    ap.add_argument("--out", default=str(ROOT / "benchmarks"))
    args = ap.parse_args()

    base = RunConfig()
    gen = SyntheticGenerator(base.generator)
    clf = DiskClassifier(base.classifier_spec())
    rng = np.random.default_rng(12345)
    Z = rng.standard_normal((args.samples, base.generator.n))
    means = np.concatenate([
        clf.classify_batch(gen.decode_batch(Z[i:i + 1000], 0)) / clf.spec.gain + clf.spec.threshold
        for i in range(0, len(Z), 1000)])
    b = round(float(np.median(means)), 2)
    print(f"median disk mean {np.median(means):.4f} -> threshold {b}")

    cfg = base.replace(classifier=ClassifierConfig(threshold=b))
    bench = Benchmark(cfg)
    t0 = time.perf_counter()
    oracle_rep, _ = bench.evaluate(bench.oracle)
    print(f"oracle FR {oracle_rep.flip_rate:.4f} on {oracle_rep.evaluated} latents ({time.perf_counter() - t0:.1f}s)")
    net, train_rep = bench.trained
    print(f"proxy held-out R2 f={train_rep.heldout_r2[0]:.3f} s={train_rep.heldout_r2[1]:.3f}")

    frozen = cfg.replace(thresholds=Thresholds(flip_rate=max(0.8, round(oracle_rep.flip_rate - 0.1, 2))))
    out = Path(args.out)
    out.mkdir(exist_ok=True)
    frozen.save(out / "default.json")
    io.write_json(out / "calibration.json", {
        "samples": args.samples,
        "median_disk_mean": float(np.median(means)),
        "positive_fraction_at_threshold": float(np.mean(means > b)),
        "oracle_flip_rate": oracle_rep.flip_rate,
        "proxy_heldout_r2": list(train_rep.heldout_r2),
        "frozen_thresholds": frozen.to_dict()["thresholds"],
    })
    print(f"wrote {out / 'default.json'}")


if __name__ == "__main__":
    main()
