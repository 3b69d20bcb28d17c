"""Float64 layers with explicit forward/backward passes, plus Adam.

Everything is a plain function over numpy arrays; models own their parameter
dicts and chain these primitives. Convolutions go through the kernels
package so the compiled backend accelerates them when present.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError, ShapeError
from .kernels import conv3x3_forward, conv3x3_grad_input, conv3x3_grad_weight


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Logistic function, correct over the full float64 range.

    Uses the plain 1/(1+exp(-x)) with overflow silenced: for x <= -709 the
    intermediate exp overflows to inf and the quotient rounds to exactly 0.0,
    which is where the true value underflows regardless. Single exp pass and
    in-place arithmetic keep large tensors cheap.
    """
    x = np.asarray(x)
    if x.dtype != np.float32:
        x = x.astype(np.float64, copy=False)
    out = np.negative(x)
    with np.errstate(over="ignore"):
        np.exp(out, out=out)
    out += 1.0
    np.divide(1.0, out, out=out)
    return out


def silu_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """x * sigmoid(x); returns (value, sigmoid cache)."""
    s = sigmoid(x)
    return x * s, s


def silu_backward(g: np.ndarray, x: np.ndarray, s: np.ndarray) -> np.ndarray:
    out = 1.0 - s
    out *= x
    out += 1.0
    out *= s
    out *= g
    return out


def linear_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return x @ w + b


def linear_backward(
    g: np.ndarray, x: np.ndarray, w: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (grad_x, grad_w, grad_b)."""
    return g @ w.T, x.T @ g, g.sum(axis=0)


def embedding_forward(table: np.ndarray, ids: np.ndarray) -> np.ndarray:
    return table[ids]


def embedding_backward(g: np.ndarray, ids: np.ndarray, n_rows: int) -> np.ndarray:
    gt = np.zeros((n_rows, g.shape[1]), dtype=g.dtype)
    np.add.at(gt, ids, g)
    return gt


def timestep_embedding(t: np.ndarray, dim: int) -> np.ndarray:
    """Sinusoidal position features of integer timesteps, shape (B, dim).

    Frequencies are log-spaced from 1 down to 1/10000 across dim/2 bands,
    concatenated as [sin, cos].
    """
    if dim % 2:
        raise ParameterError(f"embedding dim must be even, got {dim}")
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    ang = np.asarray(t, dtype=np.float64)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def conv_forward(
    x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1
) -> np.ndarray:
    return conv3x3_forward(x, w, b, stride)


def conv_backward(
    g: np.ndarray, x: np.ndarray, w: np.ndarray, stride: int = 1
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (grad_x, grad_w, grad_b)."""
    gx = conv3x3_grad_input(g, w, x.shape, stride)
    gw, gb = conv3x3_grad_weight(g, x, stride)
    return gx, gw, gb


def global_average_pool(x: np.ndarray) -> np.ndarray:
    """(B, C, H, W) -> (B, C)."""
    return x.mean(axis=(2, 3))


def global_average_pool_backward(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    b, c, h, w = shape
    return np.broadcast_to(g[:, :, None, None], shape) / (h * w)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(
    logits: np.ndarray, targets: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy; returns (loss, grad_logits, probs)."""
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeError(f"logits {logits.shape} vs targets {targets.shape}")
    probs = softmax(logits)
    b = logits.shape[0]
    picked = probs[np.arange(b), targets]
    loss = float(-np.log(np.maximum(picked, 1e-300)).mean())
    grad = probs.copy()
    grad[np.arange(b), targets] -= 1.0
    return loss, grad / b, probs


class Adam:
    """Adaptive-moments optimizer over a named parameter dict (in place)."""

    def __init__(
        self,
        params: dict[str, np.ndarray],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        if lr <= 0.0 or not 0.0 <= beta1 < 1.0 or not 0.0 <= beta2 < 1.0 or eps <= 0.0:
            raise ParameterError("invalid optimizer hyperparameters")
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.step_count += 1
        bc1 = 1.0 - self.beta1**self.step_count
        bc2 = 1.0 - self.beta2**self.step_count
        for name, p in self.params.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
