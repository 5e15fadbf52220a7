"""Tiny classification models with hand-derived gradients.

Two architectures cover the desk-scale experiments: multinomial logistic
regression and a one-hidden-layer MLP with tanh activation (smooth, so
finite-difference gradient checks are well conditioned).  Parameters live in
a single flat float64 vector; every operation here is a pure function that
returns fresh arrays and never mutates its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import NumericsError

LOGREG = "logistic-regression"
MLP = "mlp-1-hidden"


def param_count(kind: str, input_dim: int, n_classes: int, hidden_dim: int = 0) -> int:
    if kind == LOGREG:
        return input_dim * n_classes + n_classes
    if kind == MLP:
        if hidden_dim < 1:
            raise ValueError("mlp requires hidden_dim >= 1")
        return input_dim * hidden_dim + hidden_dim + hidden_dim * n_classes + n_classes
    raise ValueError(f"unknown model kind {kind!r}")


@dataclass(frozen=True)
class TinyModel:
    kind: str
    params: np.ndarray  # flat float64 vector
    input_dim: int
    n_classes: int
    hidden_dim: int = 0

    def __post_init__(self):
        expected = param_count(self.kind, self.input_dim, self.n_classes, self.hidden_dim)
        if self.params.ndim != 1 or self.params.shape[0] != expected:
            raise ValueError(
                f"params has dim {self.params.shape}, expected ({expected},) for {self.kind}"
            )

    @property
    def dim(self) -> int:
        return self.params.shape[0]

    def with_params(self, params: np.ndarray) -> "TinyModel":
        return replace(self, params=params)


def init_model(
    kind: str,
    input_dim: int,
    n_classes: int,
    hidden_dim: int = 0,
    rng: np.random.Generator | None = None,
    scale: float | None = None,
) -> TinyModel:
    """Random weights ~ N(0, scale^2), zero biases.  scale defaults to 1/sqrt(fan_in)."""
    rng = rng or np.random.default_rng(0)
    if kind == LOGREG:
        s = scale if scale is not None else 1.0 / np.sqrt(input_dim)
        w = rng.normal(0.0, s, size=input_dim * n_classes)
        b = np.zeros(n_classes)
        params = np.concatenate([w, b])
    elif kind == MLP:
        if hidden_dim < 1:
            raise ValueError("mlp needs hidden_dim >= 1")
        s1 = scale if scale is not None else 1.0 / np.sqrt(input_dim)
        s2 = scale if scale is not None else 1.0 / np.sqrt(hidden_dim)
        w1 = rng.normal(0.0, s1, size=input_dim * hidden_dim)
        b1 = np.zeros(hidden_dim)
        w2 = rng.normal(0.0, s2, size=hidden_dim * n_classes)
        b2 = np.zeros(n_classes)
        params = np.concatenate([w1, b1, w2, b2])
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    return TinyModel(kind, params, input_dim, n_classes, hidden_dim)


def _split_logreg(m: TinyModel):
    d, c = m.input_dim, m.n_classes
    w = m.params[: d * c].reshape(d, c)
    b = m.params[d * c :]
    return w, b


def _split_mlp(m: TinyModel):
    d, h, c = m.input_dim, m.hidden_dim, m.n_classes
    p = m.params
    i = 0
    w1 = p[i : i + d * h].reshape(d, h); i += d * h
    b1 = p[i : i + h]; i += h
    w2 = p[i : i + h * c].reshape(h, c); i += h * c
    b2 = p[i : i + c]
    return w1, b1, w2, b2


def _check_batch(m: TinyModel, X: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != m.input_dim:
        raise ValueError(f"batch feature dim {X.shape} does not match input_dim {m.input_dim}")
    if X.shape[0] == 0:
        raise ValueError("batch is empty")
    if y is not None and len(y) != X.shape[0]:
        raise ValueError("feature/label count mismatch")
    return X


def _logits(m: TinyModel, X: np.ndarray):
    """Returns (logits, hidden activations or None)."""
    if m.kind == LOGREG:
        w, b = _split_logreg(m)
        return X @ w + b, None
    w1, b1, w2, b2 = _split_mlp(m)
    h = np.tanh(X @ w1 + b1)
    return h @ w2 + b2, h


def predict_proba(m: TinyModel, X: np.ndarray) -> np.ndarray:
    """Softmax class probabilities, rows summing to 1."""
    X = _check_batch(m, X)
    z, _ = _logits(m, X)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def predict(m: TinyModel, X: np.ndarray) -> np.ndarray:
    """Argmax class per row; ties resolve to the lowest class index."""
    z, _ = _logits(m, _check_batch(m, X))
    return np.argmax(z, axis=1)


def loss(m: TinyModel, X: np.ndarray, y: np.ndarray) -> float:
    """Mean cross-entropy of the batch (nonnegative)."""
    X = _check_batch(m, X, y)
    z, _ = _logits(m, X)
    zmax = z.max(axis=1, keepdims=True)
    logsumexp = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    return float(np.mean(logsumexp - z[np.arange(len(y)), y]))


def loss_and_grad(m: TinyModel, X: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Batch loss and the flat analytic gradient."""
    X = _check_batch(m, X, y)
    y = np.asarray(y)
    n = X.shape[0]
    z, h = _logits(m, X)
    zmax = z.max(axis=1, keepdims=True)
    e = np.exp(z - zmax)
    p = e / e.sum(axis=1, keepdims=True)
    logsumexp = zmax[:, 0] + np.log(e.sum(axis=1))
    value = float(np.mean(logsumexp - z[np.arange(n), y]))

    dz = p.copy()
    dz[np.arange(n), y] -= 1.0
    dz /= n
    if m.kind == LOGREG:
        gw = X.T @ dz
        gb = dz.sum(axis=0)
        grad = np.concatenate([gw.ravel(), gb])
    else:
        _, _, w2, _ = _split_mlp(m)
        gw2 = h.T @ dz
        gb2 = dz.sum(axis=0)
        dh = dz @ w2.T
        dpre = dh * (1.0 - h * h)
        gw1 = X.T @ dpre
        gb1 = dpre.sum(axis=0)
        grad = np.concatenate([gw1.ravel(), gb1, gw2.ravel(), gb2])
    return value, grad


def sgd_step(params: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
    """One gradient step: params - lr * grad."""
    if lr < 0:
        raise ValueError("lr must be >= 0")
    if params.shape != grad.shape:
        raise ValueError(f"param/grad shape mismatch {params.shape} vs {grad.shape}")
    return params - lr * grad


def local_sgd_step(m: TinyModel, X: np.ndarray, y: np.ndarray, lr: float) -> TinyModel:
    """One SGD step on a batch; the input model is left untouched."""
    _, grad = loss_and_grad(m, X, y)
    bad = np.flatnonzero(~np.isfinite(grad))
    if bad.size:
        raise NumericsError(f"non-finite gradient at component {bad[0]}", index=int(bad[0]))
    return m.with_params(sgd_step(m.params, grad, lr))


def local_training(
    m: TinyModel,
    X: np.ndarray,
    y: np.ndarray,
    lr: float,
    epochs: int,
    batch_size: int,
    rng: np.random.Generator,
) -> TinyModel:
    """SGD over shuffled mini-batches for the given number of full passes.

    The shuffle order is drawn only from ``rng``, so reruns with an equally
    seeded generator are bitwise identical.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    X = _check_batch(m, X, y)
    n = X.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            m = local_sgd_step(m, X[idx], y[idx], lr)
    return m
