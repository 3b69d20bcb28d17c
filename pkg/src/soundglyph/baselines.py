"""Comparison methods: the spectrogram-imprint trick and score-distillation.

The imprint baseline samples each modality independently and multiplicatively
darkens the spectrogram where the image is dark — pure algebra, no joint
process. The score-distillation baseline treats the canvas itself as the
optimization variable and descends the per-modality guided denoising
residuals, with an audio-only warmup phase before the visual term switches
on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .core import NoiseSchedule, to_canvas_space
from .datagen import CANVAS_SHAPE
from .errors import OptimizationError, ParameterError, ShapeError
from .sampler import CompositionConfig, cfg, sample_single


@dataclass(frozen=True)
class ImprintConfig:
    """Energy-reduction strength for the imprint baseline."""

    rho: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.rho <= 1.0:
            raise ParameterError(f"rho must be in [0, 1], got {self.rho}")


def imprint(
    spec_canvas: np.ndarray, image_canvas: np.ndarray, rho: float
) -> np.ndarray:
    """Darken a spectrogram canvas where an image canvas is dark.

    Returns spec * (1 - rho * (1 - gray(image))) with gray the channel mean;
    rho = 0 leaves the spectrogram untouched, rho = 1 silences fully black
    pixels.
    """
    if not 0.0 <= rho <= 1.0:
        raise ParameterError(f"rho must be in [0, 1], got {rho}")
    spec_canvas = np.asarray(spec_canvas, dtype=np.float64)
    image_canvas = np.asarray(image_canvas, dtype=np.float64)
    if spec_canvas.shape != image_canvas.shape:
        raise ShapeError(
            f"canvas shapes differ: {spec_canvas.shape} vs {image_canvas.shape}"
        )
    for c in (spec_canvas, image_canvas):
        if c.min() < 0.0 or c.max() > 1.0:
            raise ParameterError("canvas values must lie in [0, 1]")
    gray = image_canvas.mean(axis=0, keepdims=True) if image_canvas.ndim == 3 else image_canvas
    return spec_canvas * (1.0 - rho * (1.0 - gray))


def imprint_pipeline(
    cat_a,
    cat_v,
    rho: float,
    models,
    config: CompositionConfig,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
    shape: tuple[int, ...] | None = None,
) -> np.ndarray:
    """Sample a spectrogram and an image independently, then imprint.

    `models` is the (audio, visual) pair. The audio canvas is drawn first,
    so a rho = 0 run reproduces the pure audio sample bit for bit.
    """
    model_a, model_v = models
    spec_c = sample_single(
        model_a, cat_a, config.gamma_a, config.inference_steps, schedule, rng,
        shape=shape, sigma=config.sigma,
    )
    image_c = sample_single(
        model_v, cat_v, config.gamma_v, config.inference_steps, schedule, rng,
        shape=shape, sigma=config.sigma,
    )
    return imprint(spec_c, image_c, rho)


@dataclass(frozen=True)
class SdsConfig:
    """Score-distillation settings.

    lambda_sds weights the visual term; the first audio_only_warmup_steps
    steps zero it out entirely. Timesteps are drawn uniformly from the
    central [t_min_frac, t_max_frac] band of the schedule.
    """

    lambda_sds: float = 0.4
    steps: int = 5000
    audio_only_warmup_steps: int = 500
    guidance_a: float = 10.0
    guidance_v: float = 10.0
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t_min_frac: float = 0.02
    t_max_frac: float = 0.98
    seed: int = 0

    def __post_init__(self) -> None:
        if self.lambda_sds < 0.0:
            raise ParameterError(f"lambda_sds must be >= 0, got {self.lambda_sds}")
        if self.steps < 1:
            raise ParameterError("steps must be >= 1")
        if not 0 <= self.audio_only_warmup_steps <= self.steps:
            raise ParameterError("warmup must lie in [0, steps]")
        if self.guidance_a < 0.0 or self.guidance_v < 0.0:
            raise ParameterError("guidance strengths must be >= 0")
        if self.lr <= 0.0:
            raise ParameterError(f"lr must be positive, got {self.lr}")
        if not 0.0 <= self.t_min_frac < self.t_max_frac <= 1.0:
            raise ParameterError("need 0 <= t_min_frac < t_max_frac <= 1")

    def t_bounds(self, T: int) -> tuple[int, int]:
        lo = max(1, int(np.ceil(self.t_min_frac * T)))
        hi = min(T, int(np.floor(self.t_max_frac * T)))
        return lo, hi


def sds_step(
    x: np.ndarray,
    cat_a,
    cat_v,
    models,
    config: SdsConfig,
    step: int,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
) -> tuple[np.ndarray, float, float]:
    """One stochastic distillation gradient at the current canvas.

    Draws t then eps from rng, noises x, and returns
    (grad, norm_audio_term, norm_visual_term) where
    grad = (eps_hat_a - eps) + coeff_v * (eps_hat_v - eps); the visual
    coefficient is lambda_sds, or 0 during warmup (the visual model is not
    even evaluated then, so warmup dynamics cannot depend on it).
    """
    if step < 0:
        raise ParameterError(f"step must be >= 0, got {step}")
    model_a, model_v = models
    x = np.asarray(x, dtype=np.float64)
    lo, hi = config.t_bounds(schedule.T)
    t = int(rng.integers(lo, hi + 1))
    eps = rng.standard_normal(x.shape)
    ab = schedule.alpha_bar[t]
    x_t = np.sqrt(ab) * x + np.sqrt(1.0 - ab) * eps
    xb = x_t[None]
    eps_hat_a = cfg(
        model_a.predict(xb, None, t), model_a.predict(xb, cat_a, t), config.guidance_a
    )[0]
    term_a = eps_hat_a - eps
    coeff_v = 0.0 if step < config.audio_only_warmup_steps else config.lambda_sds
    if coeff_v > 0.0:
        if model_v is None:
            raise ParameterError("visual model required when its term is active")
        eps_hat_v = cfg(
            model_v.predict(xb, None, t), model_v.predict(xb, cat_v, t),
            config.guidance_v,
        )[0]
        term_v = coeff_v * (eps_hat_v - eps)
        grad = term_a + term_v
        norm_v = float(np.sqrt((term_v * term_v).sum()))
    else:
        grad = term_a
        norm_v = 0.0
    if not np.all(np.isfinite(grad)):
        raise OptimizationError(f"non-finite gradient at step {step} (t={t})")
    norm_a = float(np.sqrt((term_a * term_a).sum()))
    return grad, norm_a, norm_v


def sds_optimize(
    cat_a,
    cat_v,
    config: SdsConfig,
    models,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
    shape: tuple[int, ...] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Distill a canvas by adaptive-moments descent on the pixel values.

    The canvas lives in model space during optimization and starts at small
    noise (drawn from rng) to break symmetry. Returns the clamped [0, 1]
    canvas and a (steps, 2) array of per-term gradient norms.
    """
    if shape is None:
        shape = CANVAS_SHAPE
    params = {"x": 0.01 * rng.standard_normal(shape)}
    opt = nn.Adam(params, config.lr, config.beta1, config.beta2, config.eps)
    trace = np.empty((config.steps, 2))
    for step in range(config.steps):
        grad, norm_a, norm_v = sds_step(
            params["x"], cat_a, cat_v, models, config, step, schedule, rng
        )
        trace[step, 0] = norm_a
        trace[step, 1] = norm_v
        opt.step({"x": grad})
        if not np.all(np.isfinite(params["x"])):
            raise OptimizationError(f"canvas diverged at step {step}")
    return to_canvas_space(params["x"]), trace
