from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from globaldirs import io
from globaldirs.worldmodel import (ClassifierSpec, DiskClassifier, GeneratorSpec, SyntheticGenerator,
                                   WorldModelError, classify, decode, distance, oracle_gradient, synthetic_world)

DATA = Path(__file__).parent / "data"
GEN = SyntheticGenerator()
CLF = DiskClassifier()


def test_decode_deterministic():
    z = np.random.default_rng(0).normal(size=32)
    assert np.array_equal(GEN.decode(z, 5), GEN.decode(z, 5))
    assert np.array_equal(decode(GeneratorSpec(), z, 5), GEN.decode(z, 5))


def test_decode_matches_golden():
    doc = io.read_json(DATA / "golden_decode_zero.json")
    spec = GeneratorSpec(**doc["spec"])
    assert spec.noise == 0.0
    img = SyntheticGenerator(spec).decode(np.zeros(spec.n), 0)
    assert np.allclose(img, io.image_from_dict(doc), rtol=0, atol=1e-12)


def test_seeds_only_add_bounded_noise():
    z = np.random.default_rng(1).normal(size=32)
    clean = SyntheticGenerator(GeneratorSpec(noise=0.0)).decode(z, 0)
    a, b = GEN.decode(z, 1), GEN.decode(z, 2)
    noise = GEN.spec.noise
    assert not np.array_equal(a, b)
    assert np.all(np.abs(a - clean) <= noise + 1e-15)
    assert np.all(np.abs(b - clean) <= noise + 1e-15)


def test_decode_range_and_shape():
    Z = np.random.default_rng(2).normal(size=(16, 32)) * 5
    X = GEN.decode_batch(Z, 3)
    assert X.shape == (16, 64, 64)
    assert X.min() >= 0.0 and X.max() <= 1.0


def test_decode_dimension_mismatch():
    with pytest.raises(WorldModelError):
        GEN.decode(np.zeros(31), 0)


@pytest.mark.parametrize("kwargs", [{"n": 5}, {"noise": 0.2}])
def test_generator_spec_invariants(kwargs):
    with pytest.raises(WorldModelError):
        GeneratorSpec(**kwargs)


@pytest.mark.parametrize("kwargs", [{"gain": 0.0}, {"threshold": 1.0}, {"radius": 40.0}])
def test_classifier_spec_invariants(kwargs):
    with pytest.raises(WorldModelError):
        ClassifierSpec(**kwargs)


def test_classify_black_and_white():
    spec = ClassifierSpec(gain=40.0, threshold=0.35)
    assert classify(spec, np.zeros((64, 64))) == pytest.approx(-14.0, abs=1e-12)
    assert classify(spec, np.ones((64, 64))) == pytest.approx(26.0, abs=1e-12)


@given(st.integers(0, 63), st.integers(0, 63), st.floats(0.0, 0.9), st.floats(1e-3, 0.1))
def test_classify_monotone_inside_constant_outside(row, col, level, bump):
    x = np.full((64, 64), level)
    y = x.copy()
    y[row, col] += bump
    if CLF.mask[row, col]:
        assert CLF.classify(y) > CLF.classify(x)
    else:
        assert CLF.classify(y) == CLF.classify(x)


def test_classify_batch_matches_single():
    X = GEN.decode_batch(np.random.default_rng(3).normal(size=(4, 32)), 0)
    assert np.allclose(CLF.classify_batch(X), [CLF.classify(x) for x in X], rtol=0, atol=1e-12)


@pytest.mark.parametrize("metric", ["mean-squared", "patch-stat"])
def test_distance_identity_and_symmetry(metric):
    rng = np.random.default_rng(4)
    x, y = rng.random((64, 64)), rng.random((64, 64))
    assert distance(metric, x, x) == 0.0
    assert distance(metric, x, y) == distance(metric, y, x)


def test_distance_constant_levels():
    a, b = np.full((64, 64), 0.2), np.full((64, 64), 0.5)
    assert distance("mean-squared", a, b) == pytest.approx(0.09, abs=1e-15)
    assert distance("patch-stat", a, b) == pytest.approx(0.3, abs=1e-15)


def test_distance_dimension_mismatch():
    with pytest.raises(WorldModelError):
        distance("mean-squared", np.zeros((8, 8)), np.zeros((8, 16)))


@given(st.sampled_from(["mean-squared", "patch-stat"]), st.integers(0, 2**32 - 1))
def test_distance_properties(metric, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.random((16, 24)), rng.random((16, 24))
    d = distance(metric, x, y)
    assert d >= 0.0
    assert distance(metric, x, x.copy()) == 0.0
    assert d == distance(metric, y, x)


def test_oracle_gradient_descends():
    world = synthetic_world()
    rng = np.random.default_rng(5)
    for _ in range(10):
        z = rng.normal(size=32)
        grad = oracle_gradient(world.generator, world.classifier, z, 9)
        if np.linalg.norm(grad) < 1e-6:
            continue
        before = CLF.classify(GEN.decode(z, 9))
        after = CLF.classify(GEN.decode(z - 1e-3 * grad / np.linalg.norm(grad), 9))
        assert after < before


def test_oracle_gradient_matches_linear_background_direction():
    # background coefficients act linearly on the disk mean, so the oracle
    # recovers their sensitivity exactly wherever no pixel is clipped
    spec = GeneratorSpec(noise=0.0, intensity_max=0.0)
    gen = SyntheticGenerator(spec)
    z = np.zeros(32)
    grad = oracle_gradient(gen, CLF, z, 0)
    expected = CLF.spec.gain * spec.background_scale * np.array(
        [(b * CLF._weights).sum() for b in gen._basis])
    assert np.allclose(grad[12:], expected, rtol=1e-6, atol=1e-9)
    assert np.allclose(grad[:12], 0.0, atol=1e-9)
