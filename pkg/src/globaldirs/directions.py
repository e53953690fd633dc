"""Direction extraction from a trained proxy, line search and flip-rate evaluation."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .numerics import MlpNet, grad_input, hessian_input, sym_eigen
from .worldmodel import WorldModel, distance_batch, sigmoid

DIRECTION_KINDS = ("g", "h", "oracle")


class DegenerateDirection(ArithmeticError):
    pass


class NotPositiveClass(ValueError):
    pass


@dataclass(frozen=True)
class Direction:
    vector: np.ndarray
    kind: str
    source_id: str = ""
    lam: float = 1.0
    eigen_rank: int | None = None
    eigenvalue: float | None = None

    def __post_init__(self):
        v = np.array(self.vector, dtype=np.float64).reshape(-1)
        if self.kind not in DIRECTION_KINDS:
            raise ValueError(f"unknown direction kind {self.kind!r}")
        if abs(np.linalg.norm(v) - 1.0) > 1e-10:
            raise ValueError(f"direction must be unit-norm, got norm {np.linalg.norm(v)}")
        if (self.kind == "h") != (self.eigen_rank is not None and self.eigenvalue is not None):
            raise ValueError("eigen rank and value are required for h-directions and only for them")
        v.setflags(write=False)
        object.__setattr__(self, "vector", v)

    @property
    def name(self) -> str:
        if self.kind == "h":
            return f"h{self.eigen_rank:02d}"
        return self.kind


@dataclass(frozen=True)
class AlphaGrid:
    """Uniform step sizes on [alpha_min, alpha_max]; 0 is always added."""

    alpha_min: float
    alpha_max: float
    count: int = 64

    def __post_init__(self):
        if not self.alpha_min < 0.0 < self.alpha_max:
            raise ValueError(f"grid must straddle zero, got [{self.alpha_min}, {self.alpha_max}]")
        if self.count < 3:
            raise ValueError("grid needs at least 3 points")

    @classmethod
    def symmetric(cls, half_width: float, count: int = 64) -> "AlphaGrid":
        return cls(-float(half_width), float(half_width), count)

    def values(self) -> np.ndarray:
        return np.union1d(np.linspace(self.alpha_min, self.alpha_max, self.count), [0.0])

    def scaled(self, c: float) -> "AlphaGrid":
        return AlphaGrid(self.alpha_min * c, self.alpha_max * c, self.count)


@dataclass
class CFResult:
    source_id: str
    direction_id: str
    alpha: float
    image: np.ndarray = field(repr=False)
    logit_before: float
    logit_after: float
    distance: float
    cf_loss: float
    flipped: bool

    def summary(self) -> dict:
        return {k: getattr(self, k) for k in
                ("source_id", "direction_id", "alpha", "logit_before", "logit_after",
                 "distance", "cf_loss", "flipped")}


@dataclass
class DirectionReport:
    direction_id: str
    flip_rate: float
    flips: int
    evaluated: int
    mean_distance_flipped: float | None
    mean_abs_alpha: float
    failures: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


# ---------------------------------------------------------------- extraction

def _unit(v, what: str) -> np.ndarray:
    norm = float(np.linalg.norm(v))
    if not np.isfinite(norm) or norm < 1e-10:
        raise DegenerateDirection(f"{what} has norm {norm:.3e}")
    return v / norm


def g_direction(net: MlpNet, z_sem, lam: float = 1.0, source_id: str = "") -> Direction:
    """Unit gradient of the proxy counterfactual loss at ``z_sem``.

    The raw (ascent) orientation is kept; the negative half of the alpha grid
    walks down the loss.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    grad = grad_input(net, z_sem, (1.0, lam))
    return Direction(_unit(grad, "proxy gradient"), "g", source_id, float(lam))


def h_directions(net: MlpNet, z_sem, lam: float = 1.0, k: int = 15, source_id: str = "",
                 step: float | None = None) -> list[Direction]:
    """Top-k eigenvectors of the proxy-loss Hessian by |eigenvalue|."""
    n = net.input_width
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    H = hessian_input(net, z_sem, (1.0, lam), step)
    lam_vals, V = sym_eigen(H)
    out = []
    for rank in range(1, k + 1):
        ev = float(lam_vals[rank - 1])
        if abs(ev) < 1e-10:
            raise DegenerateDirection(f"h-direction rank {rank} has eigenvalue {ev:.3e}")
        vec = _unit(V[:, rank - 1], f"eigenvector {rank}")
        out.append(Direction(vec, "h", source_id, float(lam), rank, ev))
    return out


# ---------------------------------------------------------------- line search

def cf_losses(world: WorldModel, x_source, X, lam: float):
    logits = world.classifier.classify_batch(X)
    dists = distance_batch(world.metric, x_source, X)
    return logits, dists, sigmoid(logits) + lam * dists


def line_search(world: WorldModel, z_sem, z_T: int, d, grid: AlphaGrid, lam: float = 1.0,
                source_id: str = "", direction_id: str | None = None) -> CFResult:
    """Pick the grid step with the lowest counterfactual loss among flipped points.

    Falls back to the overall minimum (``flipped=False``) when no grid point
    crosses the decision boundary.
    """
    vec = d.vector if isinstance(d, Direction) else np.asarray(d, dtype=np.float64)
    if direction_id is None:
        direction_id = d.name if isinstance(d, Direction) else "custom"
    z_sem = np.asarray(z_sem, dtype=np.float64)
    x_source = world.generator.decode(z_sem, z_T)
    logit_before = float(world.classifier.classify(x_source))
    if not logit_before > 0:
        raise NotPositiveClass(f"source {source_id!r} has logit {logit_before:.4f}; expected > 0")
    alphas = grid.values()
    X = world.generator.decode_batch(z_sem + alphas[:, None] * vec, z_T)
    logits, dists, losses = cf_losses(world, x_source, X, lam)
    flipped = logits < 0
    pool = np.flatnonzero(flipped) if np.any(flipped) else np.arange(len(alphas))
    best = min(pool, key=lambda i: (losses[i], abs(alphas[i]), alphas[i]))
    return CFResult(
        source_id=source_id,
        direction_id=direction_id,
        alpha=float(alphas[best]),
        image=X[best].copy(),  # a view would keep the whole grid batch alive
        logit_before=logit_before,
        logit_after=float(logits[best]),
        distance=float(dists[best]),
        cf_loss=float(losses[best]),
        flipped=bool(flipped[best]),
    )


@dataclass(frozen=True)
class Latent:
    id: str
    z_sem: np.ndarray
    z_T: int


def _aggregate(direction_id: str, results: Sequence[CFResult | None], failures: dict[str, str]) -> DirectionReport:
    done = [r for r in results if r is not None]
    if not done:
        raise RuntimeError(f"direction {direction_id}: every latent failed ({failures})")
    flips = sum(r.flipped for r in done)
    dist = [r.distance for r in done if r.flipped]
    return DirectionReport(
        direction_id=direction_id,
        flip_rate=flips / len(done),
        flips=flips,
        evaluated=len(done),
        mean_distance_flipped=float(np.mean(dist)) if dist else None,
        mean_abs_alpha=float(np.mean([abs(r.alpha) for r in done])),
        failures=failures,
    )


def evaluate_direction(world: WorldModel, d, latents: Sequence[Latent], grid: AlphaGrid,
                       lam: float = 1.0, workers: int = 1,
                       direction_id: str | None = None) -> tuple[DirectionReport, list[CFResult | None]]:
    """Line search on every latent and the flip rate over the ones that ran.

    Failed latents keep a ``None`` slot in the result list and an entry in
    ``report.failures``.
    """
    if len(latents) == 0:
        raise ValueError("no latents to evaluate")
    if direction_id is None:
        direction_id = d.name if isinstance(d, Direction) else "custom"

    def run(lat: Latent):
        try:
            return line_search(world, lat.z_sem, lat.z_T, d, grid, lam, lat.id, direction_id), None
        except Exception as exc:  # recorded per latent, never fatal
            return None, f"{type(exc).__name__}: {exc}"

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            outcomes = list(pool.map(run, latents))
    else:
        outcomes = [run(lat) for lat in latents]
    results = [res for res, _ in outcomes]
    failures = {lat.id: err for lat, (_, err) in zip(latents, outcomes) if err is not None}
    return _aggregate(direction_id, results, failures), results


def best_of_directions(results: Sequence[Sequence[CFResult | None]]) -> list[CFResult | None]:
    """Per latent, the flipped candidate with the lowest CF loss across directions."""
    if not results:
        raise ValueError("no direction results given")
    size = len(results[0])
    if any(len(r) != size for r in results):
        raise ValueError("direction result lists cover different numbers of latents")
    combined = []
    for i in range(size):
        cands = [lst[i] for lst in results if lst[i] is not None]
        ids = {c.source_id for c in cands}
        if len(ids) > 1:
            raise ValueError(f"latent slot {i} mixes sources {sorted(ids)}")
        if not cands:
            combined.append(None)
            continue
        pool = [c for c in cands if c.flipped] or cands
        combined.append(min(pool, key=lambda c: (c.cf_loss, abs(c.alpha))))
    return combined


def combined_report(results: Sequence[Sequence[CFResult | None]], latent_ids: Sequence[str],
                    direction_id: str = "combined") -> tuple[DirectionReport, list[CFResult | None]]:
    best = best_of_directions(results)
    failures = {lid: "failed for every direction" for lid, r in zip(latent_ids, best) if r is None}
    return _aggregate(direction_id, best, failures), best


def mean_abs_diff_map(pairs) -> np.ndarray:
    """Pixel-wise mean of |x - x_cf| over (original, counterfactual) pairs."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("need at least one image pair")
    shape = np.shape(pairs[0][0])
    acc = np.zeros(shape)
    for x, x2 in pairs:
        x, x2 = np.asarray(x, dtype=np.float64), np.asarray(x2, dtype=np.float64)
        if x.shape != shape or x2.shape != shape:
            raise ValueError(f"image pair has shapes {x.shape}, {x2.shape}; expected {shape}")
        acc += np.abs(x - x2)
    return np.clip(acc / len(pairs), 0.0, 1.0)
