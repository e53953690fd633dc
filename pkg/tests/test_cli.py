import json
import shlex
import sys

import numpy as np
import pytest

from globaldirs import io
from globaldirs.cli import main
from globaldirs.config import RunConfig
from globaldirs.proxy import TrainConfig

SMALL = RunConfig(count=256, eval_count=12, source_count=2,
                  train=TrainConfig(epochs=25, batch_size=32, hidden=(32, 32, 16, 16)), k=4)
STUB = f"{shlex.quote(sys.executable)} -m globaldirs.remote"


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def small_cfg(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "small.json"
    SMALL.save(p)
    return p


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory, small_cfg):
    out = tmp_path_factory.mktemp("run") / "bench"
    assert run("bench-init", "--config", small_cfg, "--out", out) == 0
    assert run("discover", "--out", out, "--source", 0) == 0
    assert run("explain", "--out", out, "--workers", 2) == 0
    return out


def test_bench_init_records(pipeline):
    lat = io.read_json(pipeline / "latents.json")["latents"]
    src = io.read_json(pipeline / "sources.json")["latents"]
    assert len(lat) == SMALL.eval_count and len(src) == SMALL.source_count
    assert all(r["logit"] > 0 for r in lat)
    assert all(0 < r["logit"] <= SMALL.source_max_logit for r in src)
    assert len(list((pipeline / "factual").glob("*.pgm"))) == len(lat) + len(src)
    assert RunConfig.load(pipeline / "config.json") == SMALL


def test_bench_init_default_size(tmp_path):
    assert run("bench-init", "--config", "default", "--out", tmp_path / "b") == 0
    assert len(io.read_json(tmp_path / "b" / "latents.json")["latents"]) == 128


def test_bench_init_deterministic(tmp_path, small_cfg, pipeline):
    assert run("bench-init", "--config", small_cfg, "--out", tmp_path / "b") == 0
    for name in ("latents.json", "sources.json", "config.json"):
        assert (tmp_path / "b" / name).read_bytes() == (pipeline / name).read_bytes()


def test_bench_init_bad_config(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"lam": -1}))
    assert run("bench-init", "--config", tmp_path / "c.json", "--out", tmp_path / "b") == 2
    assert run("bench-init", "--out", tmp_path / "b") == 2


def test_bench_init_refuses_overwrite(small_cfg, pipeline):
    assert run("bench-init", "--config", small_cfg, "--out", pipeline) == 3


def test_discover_outputs(pipeline):
    d = pipeline / "discover" / "source_000"
    names = sorted(p.name for p in (d / "directions").glob("*.json"))
    assert names == ["g.json"] + [f"h{i:02d}.json" for i in range(1, SMALL.k + 1)]
    assert (d / "dataset.json").is_file() and (d / "proxy.json").is_file()
    hs = np.stack([io.load_direction(d / "directions" / n).vector for n in names[1:]])
    assert np.all(np.abs(hs @ hs.T - np.eye(SMALL.k)) <= 1e-6)
    rep = io.read_json(pipeline / "reports" / "discover-source_000.json")
    assert rep["source"] == "source_000" and len(rep["eigenvalues"]) == SMALL.k


def test_discover_default_config_has_sixteen_directions():
    assert 1 + RunConfig().k == 16


def test_discover_deterministic_and_refuses_overwrite(tmp_path, pipeline):
    assert run("discover", "--out", pipeline, "--source", 0) == 3
    assert run("discover", "--out", pipeline, "--source", 5) == 2
    d = pipeline / "discover" / "source_000"
    before = {p: p.read_bytes() for p in d.rglob("*.json")}
    assert run("discover", "--out", pipeline, "--source", 0, "--force") == 0
    assert {p: p.read_bytes() for p in d.rglob("*.json")} == before


def test_explain_reports(pipeline):
    target = pipeline / "explain" / "source_000"
    comb = io.read_json(target / "combined.json")
    assert 0.0 <= comb["flip_rate"] <= 1.0
    singles = [io.read_json(p)["flip_rate"] for p in (target / "reports").glob("*.json")]
    assert len(singles) == SMALL.k + 1
    assert comb["flip_rate"] >= max(singles)
    assert len(list((target / "ce" / "source_000-g").glob("*.pgm"))) == SMALL.eval_count


def test_explain_oracle_direction(pipeline):
    from bench import Benchmark
    bench = Benchmark(SMALL)
    io.save_direction(pipeline / "oracle.json", bench.oracle)
    # the oracle at one source must flip every evaluation latent in the small run too
    srcs = io.read_json(pipeline / "sources.json")["latents"]
    assert np.allclose(srcs[0]["z_sem"], bench.source.z_sem)
    assert run("explain", "--out", pipeline, "--directions", pipeline / "oracle.json", "--name", "oracle") == 0
    assert io.read_json(pipeline / "explain" / "oracle" / "combined.json")["flip_rate"] == 1.0


def test_attribute_outputs(pipeline):
    g = pipeline / "discover" / "source_000" / "directions" / "g.json"
    code = run("attribute", "--out", pipeline, "--direction", g, "--latent", "eval_000")
    if code == 4:
        pytest.skip("no baseline for eval_000 in the small run")
    assert code == 0
    target = pipeline / "attribute" / "source_000-g_eval_000"
    x, xp = io.read_pgm(target / "factual.pgm"), io.read_pgm(target / "baseline.pgm")
    for name in ("bb_lig.json", "bb_ig.json"):
        attr = io.attribution_from_dict(io.read_json(target / name))
        assert np.all(np.isfinite(attr))
    lig = io.attribution_from_dict(io.read_json(target / "bb_lig.json"))
    # pixels that are identical at both endpoints carry no attribution
    assert np.all(lig[x == xp] == 0.0)
    base = io.read_json(target / "baseline.json")
    assert base["probability"] <= SMALL.baseline_threshold
    assert len(base["path_alphas"]) == SMALL.path_steps + 1


def test_attribute_constant_classifier_exits_domain(pipeline):
    g = pipeline / "discover" / "source_000" / "directions" / "g.json"
    code = run("attribute", "--out", pipeline, "--direction", g, "--latent", "eval_001",
               "--remote", f"{STUB} --logit constant --constant-logit 2.0", "--force")
    assert code == 4
    assert not (pipeline / "attribute" / "source_000-g_eval_001").exists()


def test_attribute_unknown_latent(pipeline):
    g = pipeline / "discover" / "source_000" / "directions" / "g.json"
    assert run("attribute", "--out", pipeline, "--direction", g, "--latent", "nope") == 2


def test_remote_failure_exits_io(tmp_path, small_cfg):
    cmd = f"{shlex.quote(sys.executable)} -c 'import sys; sys.exit(1)'"
    assert run("bench-init", "--config", small_cfg, "--out", tmp_path / "b", "--remote", cmd) == 3


def test_verify_and_tamper(pipeline):
    assert run("verify", "--out", pipeline) == 0
    victim = pipeline / "discover" / "source_000" / "directions" / "h01.json"
    original = victim.read_bytes()
    try:
        victim.write_bytes(original.replace(b"\"lambda\": 1", b"\"lambda\": 2"))
        assert run("verify", "--out", pipeline) == 4
    finally:
        victim.write_bytes(original)
    assert run("verify", "--out", pipeline) == 0
