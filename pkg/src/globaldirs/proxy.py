"""Perturbation dataset around one latent and the two-head proxy network."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import MlpNet, backward_trace, forward_trace, make_rng, mlp_forward, sample_nball
from .worldmodel import WorldModel, distance_batch, sigmoid


class ProxyError(RuntimeError):
    pass


@dataclass(frozen=True)
class Normalizer:
    """Min-max scaling of one target column onto [0, 1]."""

    lo: float
    hi: float

    @classmethod
    def fit(cls, values) -> "Normalizer":
        values = np.asarray(values, dtype=np.float64)
        return cls(float(values.min()), float(values.max()))

    @property
    def scale(self) -> float:
        # constant targets map to 0 instead of dividing by zero
        return self.hi - self.lo if self.hi > self.lo else 1.0

    def normalize(self, t):
        return (np.asarray(t, dtype=np.float64) - self.lo) / self.scale

    def denormalize(self, y):
        return np.asarray(y, dtype=np.float64) * self.scale + self.lo


@dataclass
class ProxyDataset:
    z_source: np.ndarray
    z_T: int
    radius: float
    z_tilde: np.ndarray  # (count, n); row 0 is the source itself
    f_values: np.ndarray  # classifier probability on each decoded perturbation
    s_values: np.ndarray  # distance to the decoded source
    f_norm: Normalizer = field(init=False)
    s_norm: Normalizer = field(init=False)

    def __post_init__(self):
        if len(self.z_tilde) == 0:
            raise ProxyError("dataset is empty")
        for name in ("z_tilde", "f_values", "s_values"):
            bad = ~np.isfinite(np.asarray(getattr(self, name))).reshape(len(self.z_tilde), -1).all(axis=1)
            if bad.any():
                raise ProxyError(f"{name} has non-finite entries at sample {int(np.argmax(bad))}")
        self.f_norm = Normalizer.fit(self.f_values)
        self.s_norm = Normalizer.fit(self.s_values)

    def __len__(self):
        return len(self.z_tilde)

    @property
    def n(self) -> int:
        return self.z_tilde.shape[1]

    def targets(self) -> np.ndarray:
        return np.stack([self.f_norm.normalize(self.f_values), self.s_norm.normalize(self.s_values)], axis=1)


def build_dataset(world: WorldModel, z_sem, z_T: int, r: float, count: int,
                  rng: np.random.Generator, batch: int = 256) -> ProxyDataset:
    """Decode ``count`` perturbations drawn from the r-ball around ``z_sem``.

    The unperturbed source is always included as the first sample.
    """
    if count < 1:
        raise ProxyError("count must be >= 1")
    if not r > 0:
        raise ProxyError(f"radius must be positive, got {r}")
    z_sem = np.asarray(z_sem, dtype=np.float64)
    deltas = np.concatenate([np.zeros((1, z_sem.shape[0])), sample_nball(rng, z_sem.shape[0], r, count)])
    Z = z_sem + deltas
    source_img = world.generator.decode(z_sem, z_T)
    f_vals, s_vals = [], []
    for start in range(0, len(Z), batch):
        try:
            X = world.generator.decode_batch(Z[start:start + batch], z_T)
            logits = world.classifier.classify_batch(X)
        except Exception as exc:
            raise ProxyError(f"model failure in samples starting at index {start}: {exc}") from exc
        f_vals.append(sigmoid(logits))
        s_vals.append(distance_batch(world.metric, source_img, X))
    s_vals = np.concatenate(s_vals)
    s_vals[0] = 0.0  # same decode; guards against remote models that are not bit-stable
    return ProxyDataset(z_sem.copy(), int(z_T), float(r), Z, np.concatenate(f_vals), s_vals)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0
    hidden: tuple[int, int, int, int] = (128, 128, 64, 32)
    holdout: float = 0.2

    def __post_init__(self):
        if not 0.0 < self.holdout <= 0.5:
            raise ProxyError("held-out fraction must lie in (0, 0.5]")
        if len(self.hidden) != 4:
            raise ProxyError("the proxy has exactly four hidden layers")
        if self.epochs < 1 or self.batch_size < 1 or not self.learning_rate > 0:
            raise ProxyError("epochs, batch size and learning rate must be positive")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))


@dataclass
class TrainReport:
    epoch_loss: list[float]
    initial_loss: float
    heldout_mse: tuple[float, float]
    heldout_r2: tuple[float, float]
    train_mse: tuple[float, float]
    n_train: int
    n_heldout: int

    def to_dict(self) -> dict:
        return {
            "epoch_loss": list(self.epoch_loss),
            "initial_loss": self.initial_loss,
            "heldout_mse": list(self.heldout_mse),
            "heldout_r2": list(self.heldout_r2),
            "train_mse": list(self.train_mse),
            "n_train": self.n_train,
            "n_heldout": self.n_heldout,
        }


def init_net(widths, rng: np.random.Generator, hidden_activation="sigmoid",
             output_activations=("sigmoid", "sigmoid")) -> MlpNet:
    ws, bs = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        ws.append(rng.uniform(-limit, limit, (fan_out, fan_in)))
        bs.append(np.zeros(fan_out))
    return MlpNet(tuple(ws), tuple(bs), hidden_activation, tuple(output_activations))


def _r2(pred, target):
    ss_res = float(np.sum((pred - target) ** 2))
    ss_tot = float(np.sum((target - target.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else 0.0
    return 1.0 - ss_res / ss_tot


def split_indices(count: int, holdout: float, rng: np.random.Generator):
    perm = rng.permutation(count)
    n_hold = int(round(holdout * count))
    if count >= 2:
        n_hold = min(max(n_hold, 1), count - 1)
    else:
        n_hold = 0
    return np.sort(perm[n_hold:]), np.sort(perm[:n_hold])


def train_proxy(data: ProxyDataset, cfg: TrainConfig = TrainConfig()) -> tuple[MlpNet, TrainReport]:
    """Fit the proxy with Adam on per-head MSE (summed over heads)."""
    rng = make_rng(cfg.seed)
    Y = data.targets()
    # inputs are the perturbations themselves; the ball is centred on the source
    X = data.z_tilde
    train_idx, hold_idx = split_indices(len(data), cfg.holdout, rng)
    net = init_net([data.n, *cfg.hidden, 2], rng)
    params = [p.copy() for p in net.params()]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    b1, b2, eps = 0.9, 0.999, 1e-8
    t = 0

    def as_net(ps):
        return MlpNet(tuple(ps[0::2]), tuple(ps[1::2]), net.hidden_activation, net.output_activations)

    def mse(ps, idx):
        if len(idx) == 0:
            return np.zeros(2)
        pred = forward_trace(as_net(ps), X[idx])[-1]
        return np.mean((pred - Y[idx]) ** 2, axis=0)

    initial = float(mse(params, train_idx).sum())
    epoch_loss = []
    for epoch in range(cfg.epochs):
        order = train_idx[rng.permutation(len(train_idx))]
        total, seen = 0.0, 0
        for bi, start in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            cur = as_net(params)
            acts = forward_trace(cur, X[idx])
            diff = acts[-1] - Y[idx]
            loss = float(np.sum(diff ** 2) / len(idx))
            if not np.isfinite(loss):
                raise ProxyError(f"non-finite loss at epoch {epoch}, batch {bi}")
            total += loss * len(idx)
            seen += len(idx)
            _, grads = backward_trace(cur, acts, 2.0 * diff / len(idx))
            flat = [g for pair in grads for g in pair]
            if not all(np.all(np.isfinite(g)) for g in flat):
                raise ProxyError(f"non-finite gradient at epoch {epoch}, batch {bi}")
            t += 1
            for i, g in enumerate(flat):
                m[i] = b1 * m[i] + (1 - b1) * g
                v[i] = b2 * v[i] + (1 - b2) * g * g
                mhat = m[i] / (1 - b1 ** t)
                vhat = v[i] / (1 - b2 ** t)
                params[i] = params[i] - cfg.learning_rate * mhat / (np.sqrt(vhat) + eps)
        epoch_loss.append(total / seen)

    final = as_net(params)
    if len(hold_idx):
        pred = mlp_forward(final, X[hold_idx])
        hold_mse = np.mean((pred - Y[hold_idx]) ** 2, axis=0)
        r2 = (_r2(pred[:, 0], Y[hold_idx, 0]), _r2(pred[:, 1], Y[hold_idx, 1]))
    else:
        hold_mse, r2 = np.full(2, np.nan), (float("nan"), float("nan"))
    report = TrainReport(
        epoch_loss=epoch_loss,
        initial_loss=initial,
        heldout_mse=(float(hold_mse[0]), float(hold_mse[1])),
        heldout_r2=(float(r2[0]), float(r2[1])),
        train_mse=tuple(float(x) for x in mse(params, train_idx)),
        n_train=len(train_idx),
        n_heldout=len(hold_idx),
    )
    return final, report


def proxy_cf(net: MlpNet, z, lam: float) -> float:
    """Approximate counterfactual loss ``p_f + lam * p_s`` in normalized units."""
    if lam < 0:
        raise ProxyError("lambda must be non-negative")
    out = mlp_forward(net, z)
    return out[..., 0] + lam * out[..., 1]
