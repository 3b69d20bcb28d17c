"""Trainable noise predictors and the per-modality category classifiers.

The denoiser is a four-layer 3x3 conv stack (C -> 32 -> 32 -> 32 -> C) whose
three hidden feature maps are modulated by feature-wise affine conditioning:
a sinusoidal timestep embedding and a learned category embedding (with one
extra null row for the unconditional case) are summed and passed through a
two-layer perceptron that emits one (scale, shift) pair of width 32 per
hidden layer, applied as h * (1 + scale) + shift before the activation.
The final conv and the conditioning output layer start at zero, so an
untrained model predicts exactly zero noise.

Backpropagation is hand-written; `grad_check` verifies it against central
finite differences. Models are float64 at rest and at inference; the
denoiser training loop runs its arithmetic in float32 (the direct conv
kernels double their throughput) and casts the result back to float64.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from . import nn
from .core import NoiseSchedule
from .datagen import Dataset
from .errors import ParameterError, ShapeError, TrainingError

N_CATEGORIES = 5
HIDDEN = 32
COND_DIM = 64
N_FILM_LAYERS = 3


def _he(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


class DenoiserModel:
    """Category- and time-conditioned convolutional noise predictor."""

    kind = "denoiser"

    def __init__(
        self,
        channels: int = 1,
        n_categories: int = N_CATEGORIES,
        hidden: int = HIDDEN,
        cond_dim: int = COND_DIM,
        activation: str = "silu",
        rng: np.random.Generator | None = None,
    ) -> None:
        if channels < 1 or n_categories < 1 or hidden < 1 or cond_dim < 2:
            raise ParameterError("model dimensions must be positive")
        if activation not in ("silu", "identity"):
            raise ParameterError(f"activation must be 'silu' or 'identity', got {activation!r}")
        self.channels = channels
        self.n_categories = n_categories
        self.hidden = hidden
        self.cond_dim = cond_dim
        self.activation = activation
        if rng is None:
            rng = np.random.Generator(np.random.Philox(key=[0, 0]))
        h, c, d = hidden, channels, cond_dim
        film = 2 * N_FILM_LAYERS * h
        self.params: dict[str, np.ndarray] = {
            "conv1_w": _he(rng, (h, c, 3, 3), c * 9),
            "conv1_b": np.zeros(h),
            "conv2_w": _he(rng, (h, h, 3, 3), h * 9),
            "conv2_b": np.zeros(h),
            "conv3_w": _he(rng, (h, h, 3, 3), h * 9),
            "conv3_b": np.zeros(h),
            "conv4_w": np.zeros((c, h, 3, 3)),
            "conv4_b": np.zeros(c),
            "embed": rng.standard_normal((n_categories + 1, d)) * 0.5,
            "mlp1_w": _he(rng, (d, d), d),
            "mlp1_b": np.zeros(d),
            "mlp2_w": np.zeros((d, film)),
            "mlp2_b": np.zeros(film),
        }

    @property
    def null_id(self) -> int:
        return self.n_categories

    def arch(self) -> dict:
        return {
            "channels": self.channels,
            "n_categories": self.n_categories,
            "hidden": self.hidden,
            "cond_dim": self.cond_dim,
            "activation": self.activation,
        }

    @property
    def dtype(self) -> np.dtype:
        return self.params["conv1_w"].dtype

    def astype(self, dtype: np.dtype | type) -> DenoiserModel:
        """Copy of the model with every parameter cast to `dtype`."""
        m = DenoiserModel.__new__(DenoiserModel)
        m.__dict__.update(self.__dict__)
        m.params = {k: np.asarray(v, dtype=dtype) for k, v in self.params.items()}
        return m

    def _activate(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
        if self.activation == "identity":
            return z, None
        return nn.silu_forward(z)

    def _activate_back(
        self, g: np.ndarray, z: np.ndarray, s: np.ndarray | None
    ) -> np.ndarray:
        if self.activation == "identity":
            return g
        return nn.silu_backward(g, z, s)

    def forward(
        self, x: np.ndarray, cat_ids: np.ndarray, t: np.ndarray
    ) -> tuple[np.ndarray, dict]:
        dt = self.dtype
        x = np.asarray(x, dtype=dt)
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ShapeError(f"expected (B, {self.channels}, H, W), got {x.shape}")
        cat_ids = np.asarray(cat_ids, dtype=np.int64)
        t = np.asarray(t, dtype=np.int64)
        b = x.shape[0]
        if cat_ids.shape != (b,) or t.shape != (b,):
            raise ShapeError("cat_ids and t must be 1-d with the batch length")
        if cat_ids.min() < 0 or cat_ids.max() > self.null_id:
            raise ParameterError(f"category ids must be in 0..{self.null_id}")
        p = self.params
        temb = nn.timestep_embedding(t, self.cond_dim).astype(dt, copy=False)
        cond = temb + p["embed"][cat_ids]
        z_c = nn.linear_forward(cond, p["mlp1_w"], p["mlp1_b"])
        a_c, s_c = self._activate(z_c)
        film = nn.linear_forward(a_c, p["mlp2_w"], p["mlp2_b"])
        film = film.reshape(b, N_FILM_LAYERS, 2, self.hidden)
        cache: dict = {"x": x, "cat_ids": cat_ids, "cond": cond, "z_c": z_c,
                       "s_c": s_c, "a_c": a_c, "film": film,
                       "inputs": [], "h": [], "z": [], "s": []}
        a = x
        for layer in range(N_FILM_LAYERS):
            w, bias = p[f"conv{layer + 1}_w"], p[f"conv{layer + 1}_b"]
            h = nn.conv_forward(a, w, bias)
            scale = film[:, layer, 0, :][:, :, None, None]
            shift = film[:, layer, 1, :][:, :, None, None]
            z = h * (1.0 + scale)
            z += shift
            a_next, s = self._activate(z)
            cache["inputs"].append(a)
            cache["h"].append(h)
            cache["z"].append(z)
            cache["s"].append(s)
            a = a_next
        cache["a_last"] = a
        out = nn.conv_forward(a, p["conv4_w"], p["conv4_b"])
        return out, cache

    def backward(self, cache: dict, g_out: np.ndarray) -> dict[str, np.ndarray]:
        p = self.params
        grads: dict[str, np.ndarray] = {}
        ga, grads["conv4_w"], grads["conv4_b"] = nn.conv_backward(
            g_out, cache["a_last"], p["conv4_w"]
        )
        film = cache["film"]
        g_film = np.zeros_like(film)
        for layer in reversed(range(N_FILM_LAYERS)):
            gz = self._activate_back(ga, cache["z"][layer], cache["s"][layer])
            h = cache["h"][layer]
            scale = film[:, layer, 0, :][:, :, None, None]
            g_film[:, layer, 0, :] = np.einsum("bchw,bchw->bc", gz, h)
            g_film[:, layer, 1, :] = gz.sum(axis=(2, 3))
            gh = gz * (1.0 + scale)
            ga, grads[f"conv{layer + 1}_w"], grads[f"conv{layer + 1}_b"] = nn.conv_backward(
                gh, cache["inputs"][layer], p[f"conv{layer + 1}_w"]
            )
        g_film = g_film.reshape(film.shape[0], -1)
        g_ac, grads["mlp2_w"], grads["mlp2_b"] = nn.linear_backward(
            g_film, cache["a_c"], p["mlp2_w"]
        )
        g_zc = self._activate_back(g_ac, cache["z_c"], cache["s_c"])
        g_cond, grads["mlp1_w"], grads["mlp1_b"] = nn.linear_backward(
            g_zc, cache["cond"], p["mlp1_w"]
        )
        grads["embed"] = nn.embedding_backward(
            g_cond, cache["cat_ids"], self.n_categories + 1
        )
        return grads

    def predict(self, x: np.ndarray, category: int | None, t: int) -> np.ndarray:
        """Batched noise prediction with one category and timestep.

        `x` is (B, C, H, W); `category` is a category id or None for the
        unconditional (null-embedding) estimate.
        """
        cat = self.null_id if category is None else int(category)
        if not 0 <= cat <= self.null_id:
            raise ParameterError(f"category id must be in 0..{self.n_categories - 1} or None")
        b = x.shape[0]
        out, _ = self.forward(x, np.full(b, cat), np.full(b, int(t)))
        return out


def predict_noise(
    m: DenoiserModel, x_t: np.ndarray, category: int | None, t: int
) -> np.ndarray:
    """Single-canvas noise prediction: (C, H, W) in, (C, H, W) out."""
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.ndim != 3:
        raise ShapeError(f"canvas must be (C, H, W), got {x_t.shape}")
    return m.predict(x_t[None], category, t)[0]


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 20000
    batch: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    p_uncond: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.steps < 1 or self.batch < 1:
            raise ParameterError("steps and batch must be >= 1")
        if self.lr <= 0.0:
            raise ParameterError(f"lr must be positive, got {self.lr}")
        if not 0.0 <= self.p_uncond < 1.0:
            raise ParameterError(f"p_uncond must be in [0, 1), got {self.p_uncond}")


def train_denoiser(
    dataset: Dataset,
    config: TrainConfig,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
    progress: Callable[[int, float], None] | None = None,
) -> tuple[DenoiserModel, np.ndarray]:
    """Denoising-score-matching training; returns (model, per-step loss).

    Each step samples a batch with replacement, draws t ~ U{1..T} and unit
    noise, replaces the category by the null id with probability p_uncond,
    and minimizes mean squared error between predicted and true noise.
    All random draws happen in float64 so the stream is precision-agnostic;
    the arithmetic runs in float32 and the returned model is float64.
    `progress`, if given, is called after every step with (step, loss).
    """
    n = len(dataset)
    if n < 1:
        raise ParameterError("dataset must be nonempty")
    channels = dataset.canvases.shape[1]
    x_all = (2.0 * dataset.canvases - 1.0).astype(np.float32)
    cats_all = dataset.categories
    model = DenoiserModel(channels=channels, rng=rng).astype(np.float32)
    opt = nn.Adam(model.params, config.lr, config.beta1, config.beta2, config.eps)
    ab = schedule.alpha_bar
    losses = np.empty(config.steps)
    for step in range(config.steps):
        idx = rng.integers(0, n, config.batch)
        t = rng.integers(1, schedule.T + 1, config.batch)
        eps = rng.standard_normal((config.batch, *x_all.shape[1:])).astype(np.float32)
        drop = rng.random(config.batch) < config.p_uncond
        cats = np.where(drop, model.null_id, cats_all[idx])
        coef_sig = np.sqrt(ab[t]).astype(np.float32)[:, None, None, None]
        coef_eps = np.sqrt(1.0 - ab[t]).astype(np.float32)[:, None, None, None]
        x_t = coef_sig * x_all[idx] + coef_eps * eps
        pred, cache = model.forward(x_t, cats, t)
        resid = pred - eps
        loss = float(np.mean(resid**2, dtype=np.float64))
        if not np.isfinite(loss):
            raise TrainingError(f"loss diverged at step {step}")
        losses[step] = loss
        grads = model.backward(cache, (2.0 / resid.size) * resid)
        opt.step(grads)
        if progress is not None:
            progress(step, loss)
    return model.astype(np.float64), losses


def smoothed_loss(losses: np.ndarray, step: int, window: int = 101) -> float:
    """Trailing moving average of the loss trace ending at `step`."""
    if not 0 <= step < losses.size:
        raise ParameterError(f"step must be in 0..{losses.size - 1}, got {step}")
    lo = max(0, step - window + 1)
    return float(losses[lo : step + 1].mean())


def _training_loss(
    model: DenoiserModel,
    x_t: np.ndarray,
    cats: np.ndarray,
    t: np.ndarray,
    eps: np.ndarray,
) -> tuple[float, dict]:
    pred, cache = model.forward(x_t, cats, t)
    resid = pred - eps
    return float(np.mean(resid**2)), {"cache": cache, "resid": resid}


def grad_check(
    model: DenoiserModel,
    probe_count: int = 120,
    rng: np.random.Generator | None = None,
    h: float = 1e-4,
) -> float:
    """Max relative error of analytic vs central-difference gradients.

    Builds a tiny fixed batch, computes analytic gradients once, then
    perturbs `probe_count` randomly chosen parameters by +-h and compares.
    Relative error uses the symmetric denominator |fd| + |g| + 1e-8.
    """
    if probe_count < 1:
        raise ParameterError(f"probe_count must be >= 1, got {probe_count}")
    if rng is None:
        rng = np.random.Generator(np.random.Philox(key=[1234, 0]))
    b, height, width = 2, 8, 16
    x_t = rng.standard_normal((b, model.channels, height, width))
    eps = rng.standard_normal(x_t.shape)
    t = rng.integers(1, 1000, b)
    cats = rng.integers(0, model.null_id + 1, b)
    loss, aux = _training_loss(model, x_t, cats, t, eps)
    grads = model.backward(aux["cache"], (2.0 / aux["resid"].size) * aux["resid"])
    names = sorted(model.params)
    sizes = np.array([model.params[k].size for k in names])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    total = int(offsets[-1])
    picks = rng.choice(total, size=min(probe_count, total), replace=False)
    max_rel = 0.0
    for flat in picks:
        k = int(np.searchsorted(offsets, flat, side="right") - 1)
        name = names[k]
        idx = np.unravel_index(int(flat - offsets[k]), model.params[name].shape)
        saved = model.params[name][idx]
        model.params[name][idx] = saved + h
        lp, _ = _training_loss(model, x_t, cats, t, eps)
        model.params[name][idx] = saved - h
        lm, _ = _training_loss(model, x_t, cats, t, eps)
        model.params[name][idx] = saved
        fd = (lp - lm) / (2.0 * h)
        g = float(grads[name][idx])
        rel = abs(fd - g) / (abs(fd) + abs(g) + 1e-8)
        max_rel = max(max_rel, rel)
    return max_rel


# ---------------------------------------------------------------------------
# Classifiers


class ClassifierModel:
    """Small conv classifier: C -> 16 -> 32 stride-2 convs, GAP, 64-d features."""

    kind = "classifier"

    def __init__(
        self,
        channels: int = 1,
        n_categories: int = N_CATEGORIES,
        feature_dim: int = 64,
        rng: np.random.Generator | None = None,
    ) -> None:
        if channels < 1 or n_categories < 1 or feature_dim < 1:
            raise ParameterError("model dimensions must be positive")
        self.channels = channels
        self.n_categories = n_categories
        self.feature_dim = feature_dim
        if rng is None:
            rng = np.random.Generator(np.random.Philox(key=[0, 0]))
        c, f = channels, feature_dim
        self.params: dict[str, np.ndarray] = {
            "conv1_w": _he(rng, (16, c, 3, 3), c * 9),
            "conv1_b": np.zeros(16),
            "conv2_w": _he(rng, (32, 16, 3, 3), 16 * 9),
            "conv2_b": np.zeros(32),
            "fc1_w": _he(rng, (32, f), 32),
            "fc1_b": np.zeros(f),
            "fc2_w": rng.standard_normal((f, n_categories)) * np.sqrt(1.0 / f),
            "fc2_b": np.zeros(n_categories),
        }

    def arch(self) -> dict:
        return {
            "channels": self.channels,
            "n_categories": self.n_categories,
            "feature_dim": self.feature_dim,
        }

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, dict]:
        """Returns (logits (B, K), features (B, feature_dim), cache)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ShapeError(f"expected (B, {self.channels}, H, W), got {x.shape}")
        p = self.params
        h1 = nn.conv_forward(x, p["conv1_w"], p["conv1_b"], stride=2)
        a1, s1 = nn.silu_forward(h1)
        h2 = nn.conv_forward(a1, p["conv2_w"], p["conv2_b"], stride=2)
        a2, s2 = nn.silu_forward(h2)
        pooled = nn.global_average_pool(a2)
        zf = nn.linear_forward(pooled, p["fc1_w"], p["fc1_b"])
        feat, sf = nn.silu_forward(zf)
        logits = nn.linear_forward(feat, p["fc2_w"], p["fc2_b"])
        cache = {"x": x, "h1": h1, "s1": s1, "a1": a1, "h2": h2, "s2": s2,
                 "a2": a2, "pooled": pooled, "zf": zf, "sf": sf, "feat": feat}
        return logits, feat, cache

    def backward(self, cache: dict, g_logits: np.ndarray) -> dict[str, np.ndarray]:
        p = self.params
        grads: dict[str, np.ndarray] = {}
        g_feat, grads["fc2_w"], grads["fc2_b"] = nn.linear_backward(
            g_logits, cache["feat"], p["fc2_w"]
        )
        g_zf = nn.silu_backward(g_feat, cache["zf"], cache["sf"])
        g_pool, grads["fc1_w"], grads["fc1_b"] = nn.linear_backward(
            g_zf, cache["pooled"], p["fc1_w"]
        )
        g_a2 = nn.global_average_pool_backward(g_pool, cache["a2"].shape)
        g_h2 = nn.silu_backward(g_a2, cache["h2"], cache["s2"])
        g_a1, grads["conv2_w"], grads["conv2_b"] = nn.conv_backward(
            g_h2, cache["a1"], p["conv2_w"], stride=2
        )
        g_h1 = nn.silu_backward(g_a1, cache["h1"], cache["s1"])
        _, grads["conv1_w"], grads["conv1_b"] = nn.conv_backward(
            g_h1, cache["x"], p["conv1_w"], stride=2
        )
        return grads

    def probabilities(self, x: np.ndarray) -> np.ndarray:
        logits, _, _ = self.forward(x)
        return nn.softmax(logits)


def features(c: ClassifierModel, x: np.ndarray) -> np.ndarray:
    """Pooled penultimate feature vector of a single canvas, shape (64,)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError(f"canvas must be (C, H, W), got {x.shape}")
    _, feat, _ = c.forward(x[None])
    return feat[0]


@dataclass(frozen=True)
class ClassifierTrainConfig:
    steps: int = 2000
    batch: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    val_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.steps < 1 or self.batch < 1:
            raise ParameterError("steps and batch must be >= 1")
        if self.lr <= 0.0:
            raise ParameterError(f"lr must be positive, got {self.lr}")
        if not 0.0 < self.val_fraction < 1.0:
            raise ParameterError("val_fraction must be in (0, 1)")


def classifier_accuracy(
    model: ClassifierModel, canvases: np.ndarray, categories: np.ndarray
) -> float:
    """Top-1 accuracy, evaluated in batches."""
    hits = 0
    for lo in range(0, canvases.shape[0], 256):
        logits, _, _ = model.forward(canvases[lo : lo + 256])
        hits += int((logits.argmax(axis=1) == categories[lo : lo + 256]).sum())
    return hits / canvases.shape[0]


def train_classifier(
    dataset: Dataset,
    config: ClassifierTrainConfig,
    rng: np.random.Generator,
    progress: Callable[[int, float], None] | None = None,
) -> ClassifierModel:
    """Cross-entropy training with an internal held-out split.

    The returned model carries `val_accuracy` and `loss_trace` attributes;
    accuracy below 0.8 after the full budget is a training error.
    `progress`, if given, is called after every step with (step, loss).
    """
    n = len(dataset)
    if n < 2:
        raise ParameterError("dataset must have at least 2 items")
    perm = rng.permutation(n)
    n_val = max(1, int(round(n * config.val_fraction)))
    n_val = min(n_val, n - 1)
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    model = ClassifierModel(channels=dataset.canvases.shape[1], rng=rng)
    opt = nn.Adam(model.params, config.lr, config.beta1, config.beta2, config.eps)
    losses = np.empty(config.steps)
    for step in range(config.steps):
        idx = train_idx[rng.integers(0, train_idx.size, config.batch)]
        logits, _, cache = model.forward(dataset.canvases[idx])
        loss, g_logits, _ = nn.cross_entropy(logits, dataset.categories[idx])
        if not np.isfinite(loss):
            raise TrainingError(f"loss diverged at step {step}")
        losses[step] = loss
        opt.step(model.backward(cache, g_logits))
        if progress is not None:
            progress(step, loss)
    acc = classifier_accuracy(
        model, dataset.canvases[val_idx], dataset.categories[val_idx]
    )
    if acc < 0.8:
        raise TrainingError(f"held-out accuracy {acc:.3f} below 0.8 after full budget")
    model.val_accuracy = acc
    model.loss_trace = losses
    return model
