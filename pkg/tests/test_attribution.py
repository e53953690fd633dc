import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import ConstantClassifier, LinearClassifier
from globaldirs.attribution import (LatentPath, NoBaselineFound, bb_ig, bb_lig, find_baseline, latent_path,
                                    magnitude_image, path_attribution)
from globaldirs.directions import AlphaGrid, Direction
from globaldirs.numerics import make_rng
from globaldirs.worldmodel import WorldModel, sigmoid
from test_directions import logit_gradient, toy_world


def oracle_dir(world):
    g = logit_gradient(world)
    return Direction(g / np.linalg.norm(g), "oracle")


# ---------------------------------------------------------------- baseline

def test_constant_classifier_has_no_baseline():
    world = toy_world()
    world = WorldModel(world.generator, ConstantClassifier(3.0), world.metric)
    with pytest.raises(NoBaselineFound) as info:
        find_baseline(world, np.zeros(3), 0, Direction(np.array([1.0, 0, 0]), "g"), AlphaGrid.symmetric(2.0))
    assert info.value.min_probability == pytest.approx(sigmoid(3.0))
    assert info.value.threshold == 0.1


def test_oracle_direction_reaches_baseline():
    world = toy_world()
    clf = world.classifier
    world = WorldModel(world.generator, LinearClassifier(10 * clf.w, 10 * clf.c), world.metric)
    base = find_baseline(world, np.zeros(3), 0, oracle_dir(world), AlphaGrid.symmetric(10.0))
    assert base.probability <= 0.1 and base.alpha < 0
    assert world.classifier.classify(base.image) < 0


def test_baseline_is_grid_argmin():
    world = toy_world(seed=3)
    d = Direction(np.array([0.6, 0.0, 0.8]), "g")
    grid = AlphaGrid.symmetric(30.0, 21)
    X = world.generator.decode_batch(grid.values()[:, None] * d.vector, 0)
    probs = sigmoid(world.classifier.classify_batch(X))
    try:
        base = find_baseline(world, np.zeros(3), 0, d, grid, threshold=0.5)
    except NoBaselineFound as exc:
        assert exc.min_probability == probs.min() > 0.5
    else:
        assert base.probability == probs.min()


# ---------------------------------------------------------------- paths

def test_latent_path_endpoints():
    world = toy_world()
    d = oracle_dir(world)
    path = latent_path(world, np.zeros(3), 0, d, -3.0, m=8)
    assert path.steps == 8 and len(path.images) == 9
    assert np.array_equal(path.images[0], world.generator.decode(np.zeros(3), 0))
    assert np.allclose(path.images[-1], world.generator.decode(-3.0 * d.vector, 0), rtol=0, atol=1e-15)
    assert path.direction_id == "oracle"


@pytest.mark.parametrize("alphas", [[0.0, 1.0], [0.0, 1.0, 0.5]])
def test_latent_path_invariants(alphas):
    k = len(alphas)
    with pytest.raises(ValueError):
        LatentPath(np.array(alphas), np.zeros((k, 2, 2)), np.zeros(k))


def test_latent_path_rejects_zero_end():
    world = toy_world()
    with pytest.raises(ValueError):
        latent_path(world, np.zeros(3), 0, oracle_dir(world), 0.0)


# ---------------------------------------------------------------- attribution

def linear_path(rng, m, shape=(4, 4)):
    x, xp = rng.random(shape), rng.random(shape)
    t = np.linspace(0, 1, m + 1)[:, None, None]
    return x, xp, x + t * (xp - x)


def test_zero_prefactor_gives_zero_attribution():
    rng = make_rng(0)
    x = rng.random((4, 4))
    images = np.stack([x, rng.random((4, 4)), x])
    out = path_attribution(images, [0.0, 1.0, 2.0], x, x)
    assert np.all(out == 0.0)


def test_constant_logit_gives_zero_attribution():
    rng = make_rng(1)
    x, xp, images = linear_path(rng, 8)
    assert np.all(path_attribution(images, np.full(9, 3.0), x, xp) == 0.0)


def brute_force(images, fvals, x, xp, eps):
    m = len(images) - 1
    out = np.zeros_like(x)
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            acc = 0.0
            for k in range(m):
                dx = images[k + 1][i, j] - images[k][i, j]
                acc += 0.0 if abs(dx) < eps else (fvals[k + 1] - fvals[k]) / dx
            out[i, j] = (x[i, j] - xp[i, j]) / m * acc
    return out


@pytest.mark.parametrize("m", [2, 8, 32])
def test_closed_form_on_linear_path(m):
    rng = make_rng(2)
    x, xp, images = linear_path(rng, m)
    f = LinearClassifier(rng.normal(size=(4, 4)))
    fvals = f.classify_batch(images)
    got = path_attribution(images, fvals, x, xp)
    assert np.allclose(got, brute_force(images, fvals, x, xp, 1e-8), rtol=1e-12, atol=1e-12)


def test_m2_explicit_arithmetic():
    x = np.array([[1.0, 0.2]])
    xp = np.array([[0.0, 0.2]])
    images = np.array([[[1.0, 0.2]], [[0.5, 0.2]], [[0.0, 0.2]]])
    fvals = np.array([3.0, 1.0, -2.0])
    # pixel 0: (1 - 0)/2 * ((1-3)/(-0.5) + (-2-1)/(-0.5)) = 0.5 * (4 + 6) = 5
    # pixel 1 never moves
    assert np.array_equal(path_attribution(images, fvals, x, xp), [[5.0, 0.0]])


@given(st.integers(0, 2**32 - 1), st.integers(2, 12), st.floats(0.0, 1e-6))
def test_never_nan_with_stalled_pixels(seed, m, jitter):
    rng = make_rng(seed)
    images = np.repeat(rng.random((1, 3, 3)), m + 1, axis=0)
    images[:, 0, 0] += np.linspace(0, jitter, m + 1)
    fvals = rng.normal(size=m + 1)
    out = path_attribution(images, fvals, images[0], images[-1])
    assert np.all(np.isfinite(out))


def test_bb_lig_uses_path_logits():
    world = toy_world()
    path = latent_path(world, np.zeros(3), 0, oracle_dir(world), -4.0, m=16)
    out = bb_lig(path, path.images[0], path.images[-1])
    ref = brute_force(path.images, path.logits, path.images[0], path.images[-1], 1e-8)
    assert np.allclose(out, ref, rtol=1e-12, atol=1e-12)
    with pytest.raises(ValueError):
        bb_lig(path, np.zeros((3, 3)), np.zeros((3, 3)))


def test_bb_ig_black_image_is_zero():
    assert np.all(bb_ig(np.zeros((4, 4)), LinearClassifier(np.ones((4, 4))), 8) == 0.0)


def test_bb_ig_linear_closed_form():
    rng = make_rng(3)
    w = rng.normal(size=(4, 4))
    x = rng.random((4, 4))
    out = bb_ig(x, LinearClassifier(w, 1.5), 16)
    # every pixel moves by x_i / m per step while f moves by (w.x) / m,
    # so each pixel receives the full change f(x) - f(black)
    assert np.allclose(out, np.sum(w * x), rtol=1e-10, atol=1e-12)


def test_bb_ig_linear_independent_of_m():
    rng = make_rng(4)
    w, x = rng.normal(size=(3, 3)), rng.random((3, 3))
    a = bb_ig(x, LinearClassifier(w), 8)
    b = bb_ig(x, LinearClassifier(w), 16)
    assert np.allclose(a, b, rtol=1e-10, atol=1e-12)


def test_magnitude_image():
    assert np.array_equal(magnitude_image(np.array([[-2.0, 1.0]])), [[1.0, 0.5]])
    assert np.array_equal(magnitude_image(np.zeros((2, 2))), np.zeros((2, 2)))
