"""Linear algebra, sampling and a small feed-forward net with input derivatives."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class NumericsError(ValueError):
    pass


class EigenNonConvergence(NumericsError):
    def __init__(self, sweeps: int, residual: float):
        super().__init__(f"Jacobi did not converge after {sweeps} sweeps (off-diagonal norm {residual:.3e})")
        self.sweeps = sweeps
        self.residual = residual


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed)))


def spawn_seeds(seed: int, count: int) -> list[int]:
    """Derive independent child seeds, e.g. one per worker thread."""
    children = np.random.SeedSequence(int(seed)).spawn(count)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


# ---------------------------------------------------------------- sampling

def sample_nball(rng: np.random.Generator, n: int, r: float, count: int) -> np.ndarray:
    """Draw ``count`` points uniformly from the n-ball of radius ``r``.

    Gaussian directions are normalized onto the sphere and scaled by
    ``r * U**(1/n)`` with ``U`` uniform on (0, 1].  Returns shape (count, n).
    """
    if n < 1:
        raise NumericsError("n-ball dimension must be >= 1")
    if count < 1:
        raise NumericsError("sample count must be >= 1")
    if r < 0 or not np.isfinite(r):
        raise NumericsError(f"radius must be finite and non-negative, got {r}")
    g = rng.standard_normal((count, n))
    norms = np.linalg.norm(g, axis=1)
    # zero-norm gaussian draws are measure zero but would divide by zero
    while np.any(norms == 0.0):
        bad = norms == 0.0
        g[bad] = rng.standard_normal((int(bad.sum()), n))
        norms = np.linalg.norm(g, axis=1)
    u = 1.0 - rng.random(count)  # (0, 1]
    radii = r * u ** (1.0 / n)
    out = g / norms[:, None] * radii[:, None]
    # rounding can push a point a few ulps past the sphere
    lengths = np.linalg.norm(out, axis=1)
    over = lengths > r
    if np.any(over):
        out[over] *= (r / lengths[over])[:, None]
        lengths = np.linalg.norm(out, axis=1)
        over = lengths > r
        out[over] *= np.nextafter(1.0, 0.0)
    return out


# ---------------------------------------------------------------- MLP

_ACTIVATIONS = ("sigmoid", "identity", "tanh")


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _act(tag: str, x: np.ndarray) -> np.ndarray:
    if tag == "sigmoid":
        return _sigmoid(x)
    if tag == "tanh":
        return np.tanh(x)
    return x


def _act_deriv(tag: str, y: np.ndarray) -> np.ndarray:
    # derivative expressed through the activation output y
    if tag == "sigmoid":
        return y * (1.0 - y)
    if tag == "tanh":
        return 1.0 - y * y
    return np.ones_like(y)


@dataclass(frozen=True)
class MlpNet:
    """Feed-forward net with a 2-wide output, one activation per output head.

    ``weights[i]`` has shape (out, in); the last layer must have out == 2.
    """

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    hidden_activation: str = "sigmoid"
    output_activations: tuple[str, str] = ("sigmoid", "sigmoid")

    def __post_init__(self):
        if len(self.weights) == 0 or len(self.weights) != len(self.biases):
            raise NumericsError("need one bias per weight matrix and at least one layer")
        ws = tuple(np.array(w, dtype=np.float64) for w in self.weights)
        bs = tuple(np.array(b, dtype=np.float64).reshape(-1) for b in self.biases)
        for i, (w, b) in enumerate(zip(ws, bs)):
            if w.ndim != 2 or w.shape[0] != b.shape[0]:
                raise NumericsError(f"layer {i}: weight {w.shape} does not match bias {b.shape}")
            if i > 0 and w.shape[1] != ws[i - 1].shape[0]:
                raise NumericsError(f"layer {i}: input width {w.shape[1]} != previous output {ws[i - 1].shape[0]}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise NumericsError(f"layer {i}: non-finite parameters")
            w.setflags(write=False)
            b.setflags(write=False)
        if ws[-1].shape[0] != 2:
            raise NumericsError("output layer must have exactly 2 units")
        tags = (self.hidden_activation, *self.output_activations)
        if len(self.output_activations) != 2 or any(t not in _ACTIVATIONS for t in tags):
            raise NumericsError(f"unknown activation in {tags}")
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)
        object.__setattr__(self, "output_activations", tuple(self.output_activations))

    @property
    def input_width(self) -> int:
        return self.weights[0].shape[1]

    @property
    def widths(self) -> list[int]:
        return [self.input_width] + [w.shape[0] for w in self.weights]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out


def _as_batch(net: MlpNet, z) -> tuple[np.ndarray, bool]:
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    Z = z[None, :] if single else z
    if Z.ndim != 2 or Z.shape[1] != net.input_width:
        raise NumericsError(f"input has shape {z.shape}, net expects width {net.input_width}")
    return Z, single


def forward_trace(net: MlpNet, Z: np.ndarray) -> list[np.ndarray]:
    """Activations of every layer for a batch, input first, output last."""
    acts = [Z]
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        pre = acts[-1] @ w.T + b
        if i < last:
            acts.append(_act(net.hidden_activation, pre))
        else:
            out = np.empty_like(pre)
            for h, tag in enumerate(net.output_activations):
                out[:, h] = _act(tag, pre[:, h])
            acts.append(out)
    return acts


def backward_trace(net: MlpNet, acts: list[np.ndarray], dout: np.ndarray):
    """Reverse pass from output cotangent ``dout`` (batch, 2).

    Returns (d_input, [(dW, db), ...]) with parameter gradients summed over the batch.
    """
    last = len(net.weights) - 1
    delta = np.empty_like(dout)
    for h, tag in enumerate(net.output_activations):
        delta[:, h] = dout[:, h] * _act_deriv(tag, acts[-1][:, h])
    grads = [None] * len(net.weights)
    for i in range(last, -1, -1):
        grads[i] = (delta.T @ acts[i], delta.sum(axis=0))
        upstream = delta @ net.weights[i]
        if i > 0:
            delta = upstream * _act_deriv(net.hidden_activation, acts[i])
        else:
            delta = upstream
    return delta, grads


def mlp_forward(net: MlpNet, z) -> np.ndarray:
    """Output (2,) for a single vector or (batch, 2) for a matrix of inputs."""
    Z, single = _as_batch(net, z)
    out = forward_trace(net, Z)[-1]
    return out[0] if single else out


def grad_input(net: MlpNet, z, head_weights: Sequence[float] = (1.0, 0.0)) -> np.ndarray:
    """Gradient of ``w_f * out_f + w_s * out_s`` with respect to the input."""
    if not np.all(np.isfinite(head_weights)):
        raise NumericsError("head weights must be finite")
    Z, single = _as_batch(net, z)
    acts = forward_trace(net, Z)
    dout = np.broadcast_to(np.asarray(head_weights, dtype=np.float64), acts[-1].shape)
    dz, _ = backward_trace(net, acts, dout)
    return dz[0] if single else dz


def default_hessian_step(z) -> float:
    return 1e-3 * max(1.0, float(np.max(np.abs(z))))


def hessian_input(net: MlpNet, z, head_weights: Sequence[float] = (1.0, 0.0), step: float | None = None) -> np.ndarray:
    """Symmetrized central differences of the analytic input gradient."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1:
        raise NumericsError("hessian_input takes a single vector")
    if step is None:
        step = default_hessian_step(z)
    if not step > 0:
        raise NumericsError(f"step must be positive, got {step}")
    n = z.shape[0]
    E = np.eye(n) * step
    probes = np.concatenate([z + E, z - E], axis=0)
    with np.errstate(over="ignore", invalid="ignore"):
        G = grad_input(net, probes, head_weights)
        H = (G[:n] - G[n:]).T / (2.0 * step)  # column j: d grad / d z_j
    bad = ~np.isfinite(H)
    if np.any(bad):
        j = int(np.argwhere(bad)[0][1])
        raise NumericsError(f"non-finite Hessian entry while differencing along coordinate {j}")
    return 0.5 * (H + H.T)


# ---------------------------------------------------------------- eigen

def sym_eigen(H, max_sweeps: int = 100, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Returns (eigenvalues, V) with eigenvectors in the columns of V, sorted by
    |eigenvalue| descending; ties keep the original diagonal order.
    """
    A = np.array(H, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NumericsError(f"expected a square matrix, got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NumericsError("matrix has non-finite entries")
    if not np.array_equal(A, A.T):
        raise NumericsError("matrix is not symmetric")
    n = A.shape[0]
    V = np.eye(n)
    threshold = tol * np.linalg.norm(A)

    offdiag = ~np.eye(n, dtype=bool)

    def off_norm():
        return float(np.sqrt(np.sum(A[offdiag] ** 2)))

    sweeps = 0
    while off_norm() > threshold:
        if sweeps >= max_sweeps:
            raise EigenNonConvergence(sweeps, off_norm())
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                app, aqq = A[p, p], A[q, q]
                g = 100.0 * abs(apq)
                if sweeps > 4 and abs(app) + g == abs(app) and abs(aqq) + g == abs(aqq):
                    # below rounding of both diagonal entries
                    A[p, q] = A[q, p] = 0.0
                    continue
                h = aqq - app
                if abs(h) + g == abs(h):
                    t = apq / h
                else:
                    theta = 0.5 * h / apq
                    t = 1.0 / (abs(theta) + np.sqrt(1.0 + theta * theta))
                    if theta < 0:
                        t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = A[:, p].copy()
                aq = A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                rp = A[p, :].copy()
                rq = A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                A[p, q] = A[q, p] = 0.0
                vp = V[:, p].copy()
                V[:, p] = c * vp - s * V[:, q]
                V[:, q] = s * vp + c * V[:, q]
    lam = np.diag(A).copy()
    order = sorted(range(n), key=lambda i: (-abs(lam[i]), i))
    return lam[order], V[:, order]
