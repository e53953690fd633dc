"""Synthetic generator, classifier and distance functions.

The generator renders two soft ellipses over a low-frequency cosine
background.  It is a deterministic stand-in for a semantic decoder: the
semantic code drives every visible attribute and the stochastic code is only
a seed for small per-pixel noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .numerics import NumericsError

ELLIPSE_DIMS = 6
N_ELLIPSES = 2


class WorldModelError(ValueError):
    pass


class Generator(Protocol):
    n: int

    def decode(self, z_sem, z_T: int) -> np.ndarray: ...

    def decode_batch(self, Z, z_T: int) -> np.ndarray: ...


class Classifier(Protocol):
    def classify(self, x) -> float: ...

    def classify_batch(self, X) -> np.ndarray: ...


@dataclass(frozen=True)
class GeneratorSpec:
    n: int = 32
    width: int = 64
    height: int = 64
    noise: float = 0.01
    background_level: float = 0.5
    background_scale: float = 0.6
    center_span: float = 0.3
    axis_min: float = 0.06
    axis_max: float = 0.3
    intensity_max: float = 0.35
    edge_sharpness: float = 6.0

    def __post_init__(self):
        if self.n < ELLIPSE_DIMS * N_ELLIPSES:
            raise WorldModelError(f"semantic dimension must be >= {ELLIPSE_DIMS * N_ELLIPSES}, got {self.n}")
        if not 0.0 <= self.noise <= 0.1:
            raise WorldModelError(f"noise amplitude must lie in [0, 0.1], got {self.noise}")
        if self.width < 1 or self.height < 1:
            raise WorldModelError("image dimensions must be positive")

    @property
    def background_count(self) -> int:
        return self.n - ELLIPSE_DIMS * N_ELLIPSES


@dataclass(frozen=True)
class ClassifierSpec:
    center: tuple[float, float] = (32.0, 32.0)  # (x, y) in pixels
    radius: float = 12.0
    gain: float = 40.0
    threshold: float = 0.5
    width: int = 64
    height: int = 64

    def __post_init__(self):
        cx, cy = self.center
        if self.gain <= 0:
            raise WorldModelError("classifier gain must be positive")
        if not 0.0 < self.threshold < 1.0:
            raise WorldModelError("classifier threshold must lie in (0, 1)")
        if self.radius <= 0 or cx - self.radius < 0 or cy - self.radius < 0 \
                or cx + self.radius > self.width or cy + self.radius > self.height:
            raise WorldModelError("classifier disk must lie within the image")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def _background_modes(count: int) -> list[tuple[int, int]]:
    modes = []
    total = 1
    while len(modes) < count:
        for kx in range(total + 1):
            modes.append((kx, total - kx))
        total += 1
    return modes[:count]


class SyntheticGenerator:
    def __init__(self, spec: GeneratorSpec = GeneratorSpec()):
        self.spec = spec
        self.n = spec.n
        h, w = spec.height, spec.width
        u = (np.arange(w) + 0.5) / w
        v = (np.arange(h) + 0.5) / h
        self._u, self._v = np.meshgrid(u, v)  # (h, w)
        modes = _background_modes(spec.background_count)
        basis = np.stack([np.cos(np.pi * kx * self._u) * np.cos(np.pi * ky * self._v) for kx, ky in modes]) \
            if modes else np.zeros((0, h, w))
        self._basis = basis / np.sqrt(max(1, len(modes)))
        self._noise_cache: dict[int, np.ndarray] = {}

    def noise_field(self, z_T: int) -> np.ndarray:
        key = int(z_T)
        field_ = self._noise_cache.get(key)
        if field_ is None:
            rng = np.random.default_rng(np.random.SeedSequence(key & ((1 << 64) - 1)))
            field_ = self.spec.noise * rng.uniform(-1.0, 1.0, (self.spec.height, self.spec.width))
            field_.setflags(write=False)
            if len(self._noise_cache) < 4096:
                self._noise_cache[key] = field_
        return field_

    def decode_batch(self, Z, z_T: int) -> np.ndarray:
        sp = self.spec
        Z = np.asarray(Z, dtype=np.float64)
        if Z.ndim != 2 or Z.shape[1] != sp.n:
            raise WorldModelError(f"latent batch has shape {Z.shape}, generator expects width {sp.n}")
        if not np.all(np.isfinite(Z)):
            raise WorldModelError("latent contains non-finite values")
        img = sp.background_level + sp.background_scale * np.einsum(
            "bk,khw->bhw", Z[:, ELLIPSE_DIMS * N_ELLIPSES:], self._basis)
        u = self._u[None]
        v = self._v[None]
        for e in range(N_ELLIPSES):
            p = np.tanh(Z[:, e * ELLIPSE_DIMS:(e + 1) * ELLIPSE_DIMS])
            cx = (0.5 + sp.center_span * p[:, 0])[:, None, None]
            cy = (0.5 + sp.center_span * p[:, 1])[:, None, None]
            ax = (sp.axis_min + (sp.axis_max - sp.axis_min) * 0.5 * (1.0 + p[:, 2]))[:, None, None]
            ay = (sp.axis_min + (sp.axis_max - sp.axis_min) * 0.5 * (1.0 + p[:, 3]))[:, None, None]
            inten = (sp.intensity_max * p[:, 4])[:, None, None]
            rot = (0.5 * np.pi * p[:, 5])[:, None, None]
            du, dv = u - cx, v - cy
            cr, sr = np.cos(rot), np.sin(rot)
            a = (cr * du + sr * dv) / ax
            b = (-sr * du + cr * dv) / ay
            img = img + inten * sigmoid(sp.edge_sharpness * (1.0 - a * a - b * b))
        img = img + self.noise_field(z_T)[None]
        return np.clip(img, 0.0, 1.0)

    def decode(self, z_sem, z_T: int) -> np.ndarray:
        z = np.asarray(z_sem, dtype=np.float64)
        if z.ndim != 1:
            raise WorldModelError("decode takes a single latent vector")
        return self.decode_batch(z[None], z_T)[0]


def decode(spec: GeneratorSpec, z_sem, z_T: int) -> np.ndarray:
    return SyntheticGenerator(spec).decode(z_sem, z_T)


class DiskClassifier:
    """Logit ``gain * (mean intensity inside the disk - threshold)``."""

    def __init__(self, spec: ClassifierSpec = ClassifierSpec()):
        self.spec = spec
        yy, xx = np.mgrid[0:spec.height, 0:spec.width]
        cx, cy = spec.center
        self.mask = ((xx + 0.5 - cx) ** 2 + (yy + 0.5 - cy) ** 2) <= spec.radius ** 2
        self._weights = self.mask / self.mask.sum()

    def classify_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 3 or X.shape[1:] != self.mask.shape:
            raise WorldModelError(f"image batch has shape {X.shape}, classifier expects {self.mask.shape}")
        means = np.einsum("bhw,hw->b", X, self._weights)
        return self.spec.gain * (means - self.spec.threshold)

    def classify(self, x) -> float:
        return float(self.classify_batch(np.asarray(x)[None])[0])


def classify(spec: ClassifierSpec, x) -> float:
    return DiskClassifier(spec).classify(x)


# ---------------------------------------------------------------- distances

METRICS = ("mean-squared", "patch-stat")


def _check_pair(x, x2):
    x = np.asarray(x, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x.shape[-2:] != x2.shape[-2:]:
        raise WorldModelError(f"image shapes differ: {x.shape} vs {x2.shape}")
    return x, x2


def _patch_stats(X, p: int = 8):
    # X: (..., h, w); trailing partial patches are dropped
    h, w = X.shape[-2:]
    hp, wp = h // p, w // p
    if hp == 0 or wp == 0:
        raise WorldModelError(f"image {h}x{w} is smaller than one {p}x{p} patch")
    P = X[..., :hp * p, :wp * p].reshape(*X.shape[:-2], hp, p, wp, p)
    return P.mean(axis=(-3, -1)), P.std(axis=(-3, -1))


def distance_batch(metric: str, x, X2) -> np.ndarray:
    """Distance from one image ``x`` to each image in the batch ``X2``."""
    x, X2 = _check_pair(x, X2)
    if metric == "mean-squared":
        return np.mean((X2 - x) ** 2, axis=(-2, -1))
    if metric == "patch-stat":
        m1, s1 = _patch_stats(x)
        m2, s2 = _patch_stats(X2)
        return np.mean(np.abs(m2 - m1) + np.abs(s2 - s1), axis=(-2, -1))
    raise WorldModelError(f"unknown metric {metric!r}; choose from {METRICS}")


def distance(metric: str, x, x2) -> float:
    return float(distance_batch(metric, x, x2))


# ---------------------------------------------------------------- oracle

def oracle_gradient(gen: Generator, clf: Classifier, z_sem, z_T: int, step: float = 1e-4) -> np.ndarray:
    """Brute-force central-difference gradient of classify(decode(z)) in z.

    Benchmark-only: it needs many generator and classifier queries.
    """
    z = np.asarray(z_sem, dtype=np.float64)
    n = z.shape[0]
    E = np.eye(n) * step
    X = gen.decode_batch(np.concatenate([z + E, z - E]), z_T)
    f = clf.classify_batch(X)
    return (f[:n] - f[n:]) / (2.0 * step)


@dataclass
class WorldModel:
    """Generator, classifier and distance metric bundled for the pipeline."""

    generator: Generator
    classifier: Classifier
    metric: str = "patch-stat"
    closers: list = field(default_factory=list, repr=False)

    def close(self):
        for c in self.closers:
            c()
        self.closers.clear()


def synthetic_world(gen_spec: GeneratorSpec = GeneratorSpec(), clf_spec: ClassifierSpec | None = None,
                    metric: str = "patch-stat") -> WorldModel:
    if clf_spec is None:
        clf_spec = ClassifierSpec(width=gen_spec.width, height=gen_spec.height)
    if (clf_spec.width, clf_spec.height) != (gen_spec.width, gen_spec.height):
        raise WorldModelError("classifier and generator image sizes differ")
    if metric not in METRICS:
        raise WorldModelError(f"unknown metric {metric!r}")
    return WorldModel(SyntheticGenerator(gen_spec), DiskClassifier(clf_spec), metric)


__all__ = [
    "GeneratorSpec", "ClassifierSpec", "SyntheticGenerator", "DiskClassifier", "WorldModel",
    "decode", "classify", "distance", "distance_batch", "oracle_gradient", "synthetic_world",
    "sigmoid", "WorldModelError", "NumericsError", "METRICS",
]
