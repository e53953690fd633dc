"""Black-box latent integrated gradients and the black-baseline comparator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .directions import AlphaGrid, Direction, NotPositiveClass
from .worldmodel import WorldModel, sigmoid


class NoBaselineFound(LookupError):
    def __init__(self, min_probability: float, alpha: float, threshold: float):
        super().__init__(f"lowest probability on the grid is {min_probability:.4g} at alpha={alpha:.4g}, "
                         f"above the baseline threshold {threshold}")
        self.min_probability = min_probability
        self.alpha = alpha
        self.threshold = threshold


@dataclass
class Baseline:
    image: np.ndarray
    alpha: float
    probability: float


@dataclass
class LatentPath:
    """Decoded images from the factual (alpha=0) to the baseline; m = len - 1 steps."""

    alphas: np.ndarray
    images: np.ndarray
    logits: np.ndarray
    direction_id: str = ""

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, dtype=np.float64)
        self.images = np.asarray(self.images, dtype=np.float64)
        self.logits = np.asarray(self.logits, dtype=np.float64)
        if len(self.alphas) < 3 or len(self.images) != len(self.alphas) or len(self.logits) != len(self.alphas):
            raise ValueError("path needs m >= 2 steps with one image and logit per alpha")
        steps = np.diff(self.alphas)
        if not (np.all(steps > 0) or np.all(steps < 0)):
            raise ValueError("path alphas must be strictly monotone")

    @property
    def steps(self) -> int:
        return len(self.alphas) - 1


def _factual(world: WorldModel, z_sem, z_T):
    x = world.generator.decode(z_sem, z_T)
    logit = world.classifier.classify(x)
    if not logit > 0:
        raise NotPositiveClass(f"factual logit {logit:.4f} is not positive")
    return x


def find_baseline(world: WorldModel, z_sem, z_T: int, d: Direction, grid: AlphaGrid,
                  threshold: float = 0.1) -> Baseline:
    """Grid point along ``d`` with the lowest predicted probability.

    Raises NoBaselineFound unless that probability is at most ``threshold``.
    """
    z_sem = np.asarray(z_sem, dtype=np.float64)
    _factual(world, z_sem, z_T)
    alphas = grid.values()
    X = world.generator.decode_batch(z_sem + alphas[:, None] * d.vector, z_T)
    probs = sigmoid(world.classifier.classify_batch(X))
    best = min(range(len(alphas)), key=lambda i: (probs[i], abs(alphas[i]), alphas[i]))
    if probs[best] > threshold:
        raise NoBaselineFound(float(probs[best]), float(alphas[best]), threshold)
    return Baseline(X[best].copy(), float(alphas[best]), float(probs[best]))


def latent_path(world: WorldModel, z_sem, z_T: int, d: Direction, alpha_end: float, m: int = 32) -> LatentPath:
    """Decode m uniform steps from the factual (alpha=0) to ``alpha_end``."""
    if m < 2:
        raise ValueError("path needs m >= 2 steps")
    if alpha_end == 0:
        raise ValueError("baseline coincides with the factual image")
    alphas = np.linspace(0.0, alpha_end, m + 1)
    X = world.generator.decode_batch(np.asarray(z_sem, dtype=np.float64) + alphas[:, None] * d.vector, z_T)
    return LatentPath(alphas, X, world.classifier.classify_batch(X), d.name)


def path_attribution(images, fvals, x, x_prime, eps: float = 1e-8) -> np.ndarray:
    """Finite-difference integrated gradients along an arbitrary image path.

    Each step contributes ``df / dx_i`` per pixel, zero where the pixel moved by
    less than ``eps``; the sum is scaled by ``(x - x_prime) / m``.
    """
    images = np.asarray(images, dtype=np.float64)
    fvals = np.asarray(fvals, dtype=np.float64)
    m = len(images) - 1
    if m < 2:
        raise ValueError("attribution needs m >= 2 steps")
    total = np.zeros(images.shape[1:])
    for k in range(m):
        dx = images[k + 1] - images[k]
        df = fvals[k + 1] - fvals[k]
        moved = np.abs(dx) >= eps
        q = np.zeros_like(dx)
        np.divide(df, dx, out=q, where=moved)
        total += q
    out = (np.asarray(x, dtype=np.float64) - np.asarray(x_prime, dtype=np.float64)) / m * total
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("attribution map has non-finite values")
    return out


def bb_lig(path: LatentPath, x, x_prime, eps: float = 1e-8) -> np.ndarray:
    """Attribution map over the latent path between the factual and the baseline."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != path.images.shape[1:] or np.shape(x_prime) != x.shape:
        raise ValueError("image shapes do not match the path")
    return path_attribution(path.images, path.logits, x, x_prime, eps)


def bb_ig(x, classifier, m: int = 32, eps: float = 1e-8) -> np.ndarray:
    """Same estimator on the straight pixel path from an all-black image to ``x``."""
    if m < 2:
        raise ValueError("attribution needs m >= 2 steps")
    x = np.asarray(x, dtype=np.float64)
    t = np.linspace(0.0, 1.0, m + 1)
    images = t[:, None, None] * x[None]
    fvals = classifier.classify_batch(images)
    return path_attribution(images, fvals, x, np.zeros_like(x), eps)


def magnitude_image(attr) -> np.ndarray:
    """|attr| divided by its maximum, for viewing."""
    a = np.abs(np.asarray(attr, dtype=np.float64))
    peak = a.max()
    return a / peak if peak > 0 else a
