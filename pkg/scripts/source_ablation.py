"""g-direction flip rate when the proxy is trained at different source latents.

Also reports the proxy fit and the source logit, since sources deep inside the
positive class see an almost constant classifier in their ball.

Usage: python3 scripts/source_ablation.py [--sources 5] [--max-logit 4]
"""

import argparse
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

from bench import BENCH_CONFIG, Benchmark  # noqa: E402
from globaldirs.cli import sample_positive  # noqa: E402
from globaldirs.config import RunConfig  # noqa: E402
from globaldirs.directions import evaluate_direction, g_direction  # noqa: E402
from globaldirs.numerics import make_rng, spawn_seeds  # noqa: E402
from globaldirs.proxy import build_dataset, train_proxy  # noqa: E402
from globaldirs.worldmodel import synthetic_world  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(BENCH_CONFIG))
    ap.add_argument("--sources", type=int, default=5)
    ap.add_argument("--max-logit", type=float, default=None,
                    help="upper logit bound for sources (default: no bound)")
    args = ap.parse_args()

    cfg = RunConfig.load(args.config)
    world = synthetic_world(cfg.generator, cfg.classifier_spec(), cfg.metric)
    latents = Benchmark(cfg).latents
    srcs = sample_positive(world, cfg, make_rng(spawn_seeds(cfg.seed + 1, 1)[0]), args.sources,
                           args.max_logit, "ablate")
    print(f"{'source':>10} {'logit':>7} {'R2_f':>6} {'FR_g':>6}")
    for i, rec in enumerate(srcs):
        data = build_dataset(world, rec["z_sem"], rec["z_T"], cfg.r, cfg.count, make_rng(1000 + i))
        net, rep = train_proxy(data, cfg.train)
        try:
            g = g_direction(net, rec["z_sem"], cfg.lam, rec["id"])
            fr = f"{evaluate_direction(world, g, latents, cfg.grid(), cfg.lam)[0].flip_rate:6.3f}"
        except ArithmeticError:
            fr = "  flat"
        print(f"{rec['id']:>10} {rec['logit']:7.2f} {rep.heldout_r2[0]:6.3f} {fr}")


if __name__ == "__main__":
    main()
