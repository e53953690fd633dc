"""Command-line pipeline: bench-init, discover, explain, attribute, verify.

Exit codes: 0 ok, 2 config error, 3 IO error, 4 domain failure, 5 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import io
from .attribution import NoBaselineFound, bb_ig, bb_lig, find_baseline, latent_path, magnitude_image
from .config import ConfigError, RunConfig
from .directions import (DegenerateDirection, Latent, NotPositiveClass, combined_report,
                         evaluate_direction, g_direction, h_directions, mean_abs_diff_map)
from .numerics import EigenNonConvergence, make_rng, spawn_seeds
from .proxy import ProxyError, build_dataset, train_proxy
from .remote import RemoteError, RemoteModel
from .worldmodel import WorldModel, synthetic_world

log = logging.getLogger("globaldirs")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_DOMAIN, EXIT_INTERNAL = 0, 2, 3, 4, 5


class DomainFailure(RuntimeError):
    pass


# ---------------------------------------------------------------- helpers

def make_world(cfg: RunConfig, remote: str | None = None) -> WorldModel:
    endpoint = remote or cfg.remote
    if endpoint:
        handle = RemoteModel(endpoint, n=cfg.generator.n)
        return WorldModel(handle, handle, cfg.metric, [handle.close])
    return synthetic_world(cfg.generator, cfg.classifier_spec(), cfg.metric)


def load_config(args, out: Path) -> RunConfig:
    path = Path(args.config) if args.config else out / "config.json"
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    cfg = RunConfig.load(path)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def prepare_dir(path: Path, force: bool) -> None:
    if path.exists():
        if not force:
            raise FileExistsError(f"{path} exists; pass --force to overwrite")
        shutil.rmtree(path)
    path.mkdir(parents=True)


def latent_records(path) -> list[Latent]:
    doc = io.read_json(path)
    if doc.get("kind") != "latents":
        raise io.FormatError(f"{path} is not a latent file")
    return [Latent(rec["id"], np.asarray(rec["z_sem"], dtype=np.float64), int(rec["z_T"])) for rec in doc["latents"]]


def write_report(out: Path, name: str, command: str, cfg: RunConfig, files, timings: dict, **extra) -> Path:
    reports = out / "reports"
    reports.mkdir(exist_ok=True)
    doc = {
        "schema": io.SCHEMA_VERSION,
        "kind": "run-report",
        "command": command,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "config": cfg.to_dict(),
        "timings": timings,
        **extra,
        "manifest": io.manifest(out, files),
    }
    path = reports / f"{name}.json"
    io.write_json(path, doc)
    return path


def _workers(args) -> int:
    return args.workers if args.workers else (os.cpu_count() or 1)


# ---------------------------------------------------------------- commands

def sample_positive(world: WorldModel, cfg: RunConfig, rng, count: int, max_logit: float | None,
                    prefix: str, batch: int = 256, max_draws: int = 1_000_000) -> list[dict]:
    recs, drawn = [], 0
    n = cfg.generator.n
    while len(recs) < count:
        if drawn >= max_draws:
            raise DomainFailure(f"only {len(recs)} of {count} {prefix} latents found in {drawn} draws")
        Z = rng.standard_normal((batch, n))
        seeds = rng.integers(0, 2 ** 62, size=batch)
        drawn += batch
        for z, s in zip(Z, seeds):
            logit = world.classifier.classify(world.generator.decode(z, int(s)))
            if logit > 0 and (max_logit is None or logit <= max_logit):
                recs.append({"id": f"{prefix}_{len(recs):03d}", "z_sem": z, "z_T": int(s), "logit": logit})
                if len(recs) == count:
                    break
    return recs


def cmd_bench_init(args) -> int:
    if not args.config:
        raise ConfigError("bench-init needs --config (use 'default' for built-in defaults)")
    cfg = RunConfig() if args.config == "default" else RunConfig.load(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    out = Path(args.out)
    if (out / "config.json").exists() and not args.force:
        raise FileExistsError(f"{out} already holds a benchmark; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    for sub in ("factual", "reports"):
        if (out / sub).exists():
            shutil.rmtree(out / sub)
    t0 = time.perf_counter()
    world = make_world(cfg, args.remote)
    try:
        eval_seed, source_seed = spawn_seeds(cfg.seed, 2)
        evals = sample_positive(world, cfg, make_rng(eval_seed), cfg.eval_count, None, "eval")
        sources = sample_positive(world, cfg, make_rng(source_seed), cfg.source_count, cfg.source_max_logit, "source")
        (out / "factual").mkdir()
        files = [out / "config.json", out / "latents.json", out / "sources.json"]
        cfg.save(out / "config.json")
        io.write_json(out / "latents.json", {"schema": io.SCHEMA_VERSION, "kind": "latents", "latents": evals})
        io.write_json(out / "sources.json", {"schema": io.SCHEMA_VERSION, "kind": "latents", "latents": sources})
        for rec in evals + sources:
            p = out / "factual" / f"{rec['id']}.pgm"
            io.write_pgm(p, world.generator.decode(rec["z_sem"], rec["z_T"]))
            files.append(p)
    finally:
        world.close()
    write_report(out, "bench-init", "bench-init", cfg, files, {"total_s": time.perf_counter() - t0},
                 counts={"eval": len(evals), "sources": len(sources)})
    log.info("benchmark with %d evaluation latents and %d sources written to %s", len(evals), len(sources), out)
    return EXIT_OK


def cmd_discover(args) -> int:
    out = Path(args.out)
    cfg = load_config(args, out)
    sources = latent_records(out / "sources.json")
    if not 0 <= args.source < len(sources):
        raise ConfigError(f"source index {args.source} out of range (0..{len(sources) - 1})")
    src = sources[args.source]
    target = out / "discover" / src.id
    prepare_dir(target, args.force)
    timings = {}
    world = make_world(cfg, args.remote)
    try:
        t0 = time.perf_counter()
        data_seed = spawn_seeds(cfg.seed, args.source + 3)[-1]
        data = build_dataset(world, src.z_sem, src.z_T, cfg.r, cfg.count, make_rng(data_seed))
        timings["dataset_s"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        net, train_rep = train_proxy(data, cfg.train)
        timings["train_s"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        dirs = [g_direction(net, src.z_sem, cfg.lam, src.id)]
        dirs += h_directions(net, src.z_sem, cfg.lam, cfg.k, src.id)
        timings["directions_s"] = time.perf_counter() - t0
    except BaseException:
        shutil.rmtree(target, ignore_errors=True)
        raise
    finally:
        world.close()
    (target / "directions").mkdir()
    files = [target / "dataset.json", target / "proxy.json"]
    io.write_json(files[0], io.dataset_to_dict(data))
    io.write_json(files[1], io.net_to_dict(net))
    for d in dirs:
        p = target / "directions" / f"{d.name}.json"
        io.save_direction(p, d)
        files.append(p)
    write_report(out, f"discover-{src.id}", "discover", cfg, files, timings,
                 source=src.id, train_report=train_rep.to_dict(),
                 eigenvalues=[d.eigenvalue for d in dirs if d.kind == "h"])
    log.info("%s: proxy held-out R2 f=%.3f s=%.3f; %d directions", src.id, *train_rep.heldout_r2, len(dirs))
    return EXIT_OK


def _direction_label(path: Path) -> str:
    # .../discover/<source>/directions/<name>.json -> <source>-<name>
    parts = path.resolve().parts
    if len(parts) >= 3 and parts[-2] == "directions":
        return f"{parts[-3]}-{path.stem}"
    return path.stem


def cmd_explain(args) -> int:
    out = Path(args.out)
    cfg = load_config(args, out)
    if args.directions:
        dir_files = [Path(p) for p in args.directions]
    else:
        dir_files = sorted((out / "discover" / args.source_id / "directions").glob("*.json"))
    if not dir_files:
        raise ConfigError("no direction files given or found")
    directions = [(_direction_label(p), io.load_direction(p)) for p in dir_files]
    latents = latent_records(args.latents or out / "latents.json")
    name = args.name or directions[0][0].split("-")[0]
    target = out / "explain" / name
    prepare_dir(target, args.force)
    world = make_world(cfg, args.remote)
    grid = cfg.grid()
    files, reports, all_results = [], {}, []
    timings = {}
    try:
        factual = {lat.id: world.generator.decode(lat.z_sem, lat.z_T) for lat in latents}
        for label, d in directions:
            t0 = time.perf_counter()
            rep, results = evaluate_direction(world, d, latents, grid, cfg.lam, _workers(args), label)
            timings[label] = time.perf_counter() - t0
            all_results.append(results)
            reports[label] = rep.to_dict()
            (target / "ce" / label).mkdir(parents=True)
            p = target / "reports" / f"{label}.json"
            p.parent.mkdir(exist_ok=True)
            io.write_json(p, io.report_to_dict(rep, results))
            files.append(p)
            pairs = []
            for lat, res in zip(latents, results):
                if res is None:
                    continue
                ce = target / "ce" / label / f"{lat.id}.pgm"
                io.write_pgm(ce, res.image)
                files.append(ce)
                if res.flipped:
                    pairs.append((factual[lat.id], res.image))
            if pairs:
                mad = target / f"mean_abs_diff_{label}.pgm"
                io.write_pgm(mad, mean_abs_diff_map(pairs))
                files.append(mad)
            log.info("%s: FR %.3f over %d latents", label, rep.flip_rate, rep.evaluated)
    finally:
        world.close()
    comb, best = combined_report(all_results, [lat.id for lat in latents])
    p = target / "combined.json"
    io.write_json(p, io.report_to_dict(comb, best))
    files.append(p)
    write_report(out, f"explain-{name}", "explain", cfg, files, timings,
                 direction_reports=reports, combined=comb.to_dict())
    log.info("combined FR %.3f", comb.flip_rate)
    return EXIT_OK


def cmd_attribute(args) -> int:
    out = Path(args.out)
    cfg = load_config(args, out)
    dpath = Path(args.direction)
    d = io.load_direction(dpath)
    lat_file = args.latents or out / "latents.json"
    latents = {lat.id: lat for lat in latent_records(lat_file)}
    if args.latent not in latents:
        raise ConfigError(f"latent {args.latent!r} not in {lat_file}")
    lat = latents[args.latent]
    target = out / "attribute" / f"{_direction_label(dpath)}_{lat.id}"
    prepare_dir(target, args.force)
    world = make_world(cfg, args.remote)
    t0 = time.perf_counter()
    try:
        try:
            base = find_baseline(world, lat.z_sem, lat.z_T, d, cfg.grid(), cfg.baseline_threshold)
        except NoBaselineFound:
            shutil.rmtree(target, ignore_errors=True)
            raise
        path = latent_path(world, lat.z_sem, lat.z_T, d, base.alpha, cfg.path_steps)
        x = path.images[0]
        x_prime = path.images[-1]
        lig = bb_lig(path, x, x_prime, cfg.pixel_eps)
        ig = bb_ig(x, world.classifier, cfg.path_steps, cfg.pixel_eps)
    finally:
        world.close()
    files = []

    def put(name, writer, obj):
        p = target / name
        writer(p, obj)
        files.append(p)

    put("factual.pgm", io.write_pgm, x)
    put("baseline.pgm", io.write_pgm, x_prime)
    put("baseline.json", io.write_json, {"schema": io.SCHEMA_VERSION, "kind": "baseline", "alpha": base.alpha,
                                         "probability": base.probability, "path_alphas": path.alphas,
                                         "path_logits": path.logits})
    put("difference.pgm", io.write_pgm, np.abs(x - x_prime))
    put("bb_lig.json", io.write_json, io.attribution_to_dict(lig, "bb-lig"))
    put("bb_ig.json", io.write_json, io.attribution_to_dict(ig, "bb-ig"))
    put("bb_lig_magnitude.pgm", io.write_pgm, magnitude_image(lig))
    put("bb_ig_magnitude.pgm", io.write_pgm, magnitude_image(ig))
    write_report(out, f"attribute-{target.name}", "attribute", cfg, files, {"total_s": time.perf_counter() - t0},
                 baseline={"alpha": base.alpha, "probability": base.probability})
    log.info("baseline at alpha=%.3f with probability %.4f", base.alpha, base.probability)
    return EXIT_OK


def verify_tree(out: Path) -> list[str]:
    """Problems found in the stored artifacts; empty when everything checks out."""
    problems = []
    reports = sorted((out / "reports").glob("*.json"))
    if not reports:
        problems.append("no run reports found")
    for rp in reports:
        doc = io.read_json(rp)
        for rel in io.check_manifest(out, doc.get("manifest", {})):
            problems.append(f"{rp.name}: {rel} missing or modified")
        try:
            echo = RunConfig.from_dict(doc["config"])
            if json.loads(echo.dumps()) != doc["config"]:
                problems.append(f"{rp.name}: config echo does not round-trip")
        except (ConfigError, KeyError) as exc:
            problems.append(f"{rp.name}: bad config echo ({exc})")
    for ddir in sorted(out.glob("discover/*/directions")):
        hs = []
        for p in sorted(ddir.glob("*.json")):
            try:
                d = io.load_direction(p)
            except (ValueError, KeyError) as exc:
                problems.append(f"{p}: {exc}")
                continue
            if d.kind == "h":
                hs.append((p.name, d.vector))
        for i in range(len(hs)):
            for j in range(i + 1, len(hs)):
                dot = abs(float(hs[i][1] @ hs[j][1]))
                if dot > 1e-6:
                    problems.append(f"{ddir}: {hs[i][0]} and {hs[j][0]} not orthogonal ({dot:.2e})")
    for p in sorted(out.glob("attribute/*/bb_*.json")):
        try:
            io.attribution_from_dict(io.read_json(p))
        except (ValueError, KeyError) as exc:
            problems.append(f"{p}: {exc}")
    return problems


def cmd_verify(args) -> int:
    problems = verify_tree(Path(args.out))
    for p in problems:
        log.error("%s", p)
    if problems:
        return EXIT_DOMAIN
    log.info("all artifacts verified")
    return EXIT_OK


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config JSON (default: <out>/config.json)")
    common.add_argument("--out", required=True, help="benchmark / output directory")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--workers", type=int, help="worker threads (default: CPU count)")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("--remote", metavar="CMD", help="spawn CMD as a remote generator/classifier")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="globaldirs", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("bench-init", parents=[common], help="sample evaluation and source latents")
    p.set_defaults(func=cmd_bench_init)
    p = sub.add_parser("discover", parents=[common], help="train a proxy and extract g/h directions")
    p.add_argument("--source", type=int, default=0, help="index into sources.json")
    p.set_defaults(func=cmd_discover)
    p = sub.add_parser("explain", parents=[common], help="counterfactuals and flip rates for directions")
    p.add_argument("--directions", nargs="+", help="direction files (default: all from --source-id)")
    p.add_argument("--source-id", default="source_000")
    p.add_argument("--latents", help="latent file (default: <out>/latents.json)")
    p.add_argument("--name", help="output subdirectory name")
    p.set_defaults(func=cmd_explain)
    p = sub.add_parser("attribute", parents=[common], help="baseline, BB-LIG and BB-IG maps for one latent")
    p.add_argument("--direction", required=True)
    p.add_argument("--latent", required=True, help="latent id, e.g. eval_000")
    p.add_argument("--latents", help="latent file (default: <out>/latents.json)")
    p.set_defaults(func=cmd_attribute)
    p = sub.add_parser("verify", parents=[common], help="re-check manifests and stored invariants")
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ConfigError, io.FormatError) as exc:
        log.error("config: %s", exc)
        return EXIT_CONFIG
    except (NoBaselineFound, DegenerateDirection, NotPositiveClass, EigenNonConvergence,
            ProxyError, DomainFailure) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_DOMAIN
    except (OSError, RemoteError) as exc:
        log.error("io: %s", exc)
        return EXIT_IO
    except Exception as exc:  # last-resort mapping to the internal-error exit code
        log.exception("internal error: %s", exc)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
