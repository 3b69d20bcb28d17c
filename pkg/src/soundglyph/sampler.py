"""Deterministic diffusion sampling with cross-modal composition.

One reverse process drives everything here: a DDIM update rule, classifier-
free guidance applied per modality, a Heaviside warm-start schedule that
decides which modality's estimate is active at each timestep, and a convex
combination of the active estimates. Composed sampling, single-modality
sampling, and grayscale-locked colorization are all thin wrappers around the
same loop, so their outputs agree bitwise wherever the math says they must.

All state is float64 and model-space ([-1, 1]); public entry points return
canvases mapped back to [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import NoiseSchedule, forward_diffuse, to_canvas_space
from .datagen import CANVAS_SHAPE
from .errors import ParameterError, SamplingError, ShapeError

DIAGNOSTIC_COLUMNS = ("step", "t", "lambda_a", "lambda_v", "norm_a", "norm_v")


@dataclass(frozen=True)
class CompositionConfig:
    """Knobs of a composed sampling run.

    gamma_a / gamma_v are the per-modality guidance strengths; t_a / t_v give
    the fraction of the reverse process during which each modality is active
    (1.0 = active from the start). At least one of them must be exactly 1 so
    some estimate exists at every step. sigma is the DDIM stochasticity
    (0 = fully deterministic).
    """

    gamma_a: float = 10.0
    gamma_v: float = 10.0
    t_a: float = 1.0
    t_v: float = 0.9
    inference_steps: int = 100
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.t_a <= 1.0 or not 0.0 <= self.t_v <= 1.0:
            raise ParameterError("t_a and t_v must lie in [0, 1]")
        if max(self.t_a, self.t_v) != 1.0:
            raise ParameterError("max(t_a, t_v) must be 1.0 so a modality is always active")
        if self.gamma_a < 0.0 or self.gamma_v < 0.0:
            raise ParameterError("guidance strengths must be >= 0")
        if self.inference_steps < 1:
            raise ParameterError("inference_steps must be >= 1")
        if self.sigma < 0.0:
            raise ParameterError(f"sigma must be >= 0, got {self.sigma}")


@dataclass(frozen=True)
class StepDiagnostics:
    """One reverse-process step: active weights and estimate magnitudes."""

    step: int
    t: int
    lambda_a: float
    lambda_v: float
    norm_a: float
    norm_v: float

    def as_row(self) -> tuple:
        return (self.step, self.t, self.lambda_a, self.lambda_v,
                self.norm_a, self.norm_v)


def inference_timesteps(T: int, steps: int) -> np.ndarray:
    """Uniformly strided descending timesteps T -> 0, length steps + 1."""
    if steps < 1:
        raise ParameterError(f"steps must be >= 1, got {steps}")
    if steps > T:
        raise ParameterError(f"steps ({steps}) cannot exceed the schedule length ({T})")
    ts = np.rint(np.linspace(T, 0, steps + 1)).astype(np.int64)
    if np.any(np.diff(ts) >= 0):
        raise ParameterError("timestep grid is not strictly decreasing")
    return ts


def ddim_step(
    x_t: np.ndarray,
    eps_hat: np.ndarray,
    t: int,
    t_prev: int,
    schedule: NoiseSchedule,
    sigma: float = 0.0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """One reverse update x_t -> x_{t_prev}.

    Reconstructs the clean-signal estimate from eps_hat, then re-noises it to
    level t_prev along the predicted direction, plus sigma-scaled fresh noise
    when sigma > 0 (never touching rng otherwise).
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    if x_t.shape != eps_hat.shape:
        raise ShapeError(f"x_t {x_t.shape} and eps_hat {eps_hat.shape} must match")
    if not 0 <= t_prev < t <= schedule.T:
        raise ParameterError(
            f"need 0 <= t_prev < t <= {schedule.T}, got t={t}, t_prev={t_prev}"
        )
    if sigma < 0.0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    ab_t = schedule.alpha_bar[t]
    ab_p = schedule.alpha_bar[t_prev]
    var_room = 1.0 - ab_p
    if sigma * sigma > var_room:
        raise ParameterError(
            f"sigma^2 = {sigma * sigma} exceeds available variance {var_room} at t_prev={t_prev}"
        )
    x0_pred = (x_t - np.sqrt(1.0 - ab_t) * eps_hat) / np.sqrt(ab_t)
    x_prev = np.sqrt(ab_p) * x0_pred + np.sqrt(var_room - sigma * sigma) * eps_hat
    if sigma > 0.0:
        if rng is None:
            raise ParameterError("sigma > 0 requires an rng")
        x_prev = x_prev + sigma * rng.standard_normal(x_t.shape)
    return x_prev


def cfg(eps_uncond: np.ndarray, eps_cond: np.ndarray, gamma: float) -> np.ndarray:
    """Guided estimate eps_uncond + gamma * (eps_cond - eps_uncond).

    gamma = 1 returns the conditional estimate itself and gamma = 0 the
    unconditional one, exactly, with no arithmetic applied.
    """
    eps_uncond = np.asarray(eps_uncond, dtype=np.float64)
    eps_cond = np.asarray(eps_cond, dtype=np.float64)
    if eps_uncond.shape != eps_cond.shape:
        raise ShapeError(
            f"estimate shapes differ: {eps_uncond.shape} vs {eps_cond.shape}"
        )
    if gamma == 1.0:
        return eps_cond
    if gamma == 0.0:
        return eps_uncond
    return eps_uncond + gamma * (eps_cond - eps_uncond)


def warm_start_weights(
    t: int, T: int, t_a: float, t_v: float
) -> tuple[float, float]:
    """Heaviside activity weights (lambda_a, lambda_v) at timestep t.

    A modality is active once t <= t_x * T, with the boundary itself counted
    as active; active modalities share weight equally, so the pair is always
    one of (1, 0), (0.5, 0.5), (0, 1).
    """
    if not 1 <= t <= T:
        raise ParameterError(f"t must be in 1..{T}, got {t}")
    if not 0.0 <= t_a <= 1.0 or not 0.0 <= t_v <= 1.0:
        raise ParameterError("t_a and t_v must lie in [0, 1]")
    w_a = 1.0 if t_a * T - t >= 0.0 else 0.0
    w_v = 1.0 if t_v * T - t >= 0.0 else 0.0
    total = w_a + w_v
    if total == 0.0:
        raise SamplingError(f"no modality active at t={t} (t_a={t_a}, t_v={t_v})")
    return w_a / total, w_v / total


def compose_eps(
    eps_a: np.ndarray, eps_v: np.ndarray, lambda_a: float, lambda_v: float
) -> np.ndarray:
    """Convex combination lambda_a * eps_a + lambda_v * eps_v.

    The degenerate weights (1, 0) and (0, 1) return the corresponding
    estimate untouched, so a single-modality phase is exactly single-model
    sampling.
    """
    eps_a = np.asarray(eps_a, dtype=np.float64)
    eps_v = np.asarray(eps_v, dtype=np.float64)
    if eps_a.shape != eps_v.shape:
        raise ShapeError(f"estimate shapes differ: {eps_a.shape} vs {eps_v.shape}")
    if lambda_a < 0.0 or lambda_v < 0.0 or abs(lambda_a + lambda_v - 1.0) > 1e-12:
        raise ParameterError(
            f"weights must be nonnegative and sum to 1, got ({lambda_a}, {lambda_v})"
        )
    if lambda_a == 1.0 and lambda_v == 0.0:
        return eps_a
    if lambda_a == 0.0 and lambda_v == 1.0:
        return eps_v
    return lambda_a * eps_a + lambda_v * eps_v


def _batch_norm(e: np.ndarray) -> float:
    """Mean per-sample L2 norm over the leading batch axis."""
    tail = tuple(range(1, e.ndim))
    return float(np.mean(np.sqrt((e * e).sum(axis=tail))))


def _guided(model, x: np.ndarray, category, t: int, gamma: float) -> np.ndarray:
    return cfg(model.predict(x, None, t), model.predict(x, category, t), gamma)


def reverse_process(
    model_a,
    cat_a,
    gamma_a: float,
    t_a: float,
    model_v,
    cat_v,
    gamma_v: float,
    t_v: float,
    shape: tuple[int, ...],
    steps: int,
    sigma: float,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
) -> tuple[np.ndarray, list[StepDiagnostics]]:
    """Shared model-space reverse loop over a batch of shape (B, ...).

    Either model may be None, in which case its activity fraction must be 0
    and its estimate is skipped (norm reported as 0). Returns the final
    model-space batch (no [0, 1] mapping) plus per-step diagnostics.
    """
    if model_a is None and model_v is None:
        raise ParameterError("at least one model is required")
    if model_a is None and t_a != 0.0:
        raise ParameterError("t_a must be 0 when model_a is absent")
    if model_v is None and t_v != 0.0:
        raise ParameterError("t_v must be 0 when model_v is absent")
    ts = inference_timesteps(schedule.T, steps)
    x = rng.standard_normal(shape)
    diags: list[StepDiagnostics] = []
    for i in range(steps):
        t, t_prev = int(ts[i]), int(ts[i + 1])
        lam_a, lam_v = warm_start_weights(t, schedule.T, t_a, t_v)
        eps_a = None if model_a is None else _guided(model_a, x, cat_a, t, gamma_a)
        eps_v = None if model_v is None else _guided(model_v, x, cat_v, t, gamma_v)
        norm_a = 0.0 if eps_a is None else _batch_norm(eps_a)
        norm_v = 0.0 if eps_v is None else _batch_norm(eps_v)
        if eps_a is None:
            eps_tilde = eps_v
        elif eps_v is None:
            eps_tilde = eps_a
        else:
            eps_tilde = compose_eps(eps_a, eps_v, lam_a, lam_v)
        x = ddim_step(x, eps_tilde, t, t_prev, schedule, sigma, rng)
        if not np.all(np.isfinite(x)):
            raise SamplingError(f"non-finite sampler state at step {i} (t={t})")
        diags.append(StepDiagnostics(i, t, lam_a, lam_v, norm_a, norm_v))
    return x, diags


def sample_composed(
    model_a,
    model_v,
    cat_a,
    cat_v,
    config: CompositionConfig,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
    shape: tuple[int, ...] | None = None,
) -> tuple[np.ndarray, list[StepDiagnostics]]:
    """Cross-modal composed sampling of a single canvas.

    Both models see the same evolving state; each contributes its guided
    estimate, weighted by the warm-start schedule. Returns the canvas in
    [0, 1] and the per-step diagnostics.
    """
    if shape is None:
        shape = CANVAS_SHAPE
    for model in (model_a, model_v):
        channels = getattr(model, "channels", None)
        if channels is not None and channels != shape[0]:
            raise ShapeError(
                f"model expects {channels} channels, canvas shape is {shape}"
            )
    x, diags = reverse_process(
        model_a, cat_a, config.gamma_a, config.t_a,
        model_v, cat_v, config.gamma_v, config.t_v,
        (1, *shape), config.inference_steps, config.sigma, schedule, rng,
    )
    return to_canvas_space(x[0]), diags


def sample_single(
    model,
    cat,
    gamma: float,
    steps: int,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
    shape: tuple[int, ...] | None = None,
    sigma: float = 0.0,
) -> np.ndarray:
    """Single-modality sampling: the composed loop with one model at weight 1."""
    if shape is None:
        shape = CANVAS_SHAPE
    channels = getattr(model, "channels", None)
    if channels is not None and channels != shape[0]:
        raise ShapeError(f"model expects {channels} channels, canvas shape is {shape}")
    x, _ = reverse_process(
        model, cat, gamma, 1.0,
        None, None, 0.0, 0.0,
        (1, *shape), steps, sigma, schedule, rng,
    )
    return to_canvas_space(x[0])


def _shrink_residual_into_range(target: np.ndarray, resid: np.ndarray) -> np.ndarray:
    """target + s * resid with the largest per-pixel s in [0, 1] keeping every
    channel inside [0, 1]; scaling all channels of a pixel together preserves
    the channel mean exactly."""
    tiny = 1e-300
    over = np.where(resid > 0.0, (1.0 - target) / np.maximum(resid, tiny), 1.0)
    under = np.where(resid < 0.0, target / np.maximum(-resid, tiny), 1.0)
    s = np.minimum(1.0, np.minimum(over, under).min(axis=0, keepdims=True))
    return np.clip(target + s * resid, 0.0, 1.0)


def colorize(
    model_color,
    target_gray: np.ndarray,
    steps: int,
    gamma: float,
    cat,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
) -> np.ndarray:
    """Sample a 3-channel canvas whose channel mean equals a given grayscale.

    Runs guided DDIM on the color model; after every update the state's
    channel-mean component is replaced by the target noised to the current
    level (fresh noise each time), and at the final step by the target
    itself, so the output's channel mean reproduces the target to floating
    precision. Residual chroma is scaled per pixel to stay inside [0, 1]
    without disturbing the mean.
    """
    target_gray = np.asarray(target_gray, dtype=np.float64)
    if target_gray.ndim != 3 or target_gray.shape[0] != 1:
        raise ShapeError(f"target must be (1, H, W), got {target_gray.shape}")
    if target_gray.min() < 0.0 or target_gray.max() > 1.0:
        raise ParameterError("target values must lie in [0, 1]")
    channels = getattr(model_color, "channels", 3)
    if channels != 3:
        raise ShapeError(f"colorization needs a 3-channel model, got {channels}")
    target_ms = 2.0 * target_gray - 1.0
    ts = inference_timesteps(schedule.T, steps)
    x = rng.standard_normal((1, 3, *target_gray.shape[1:]))
    for i in range(steps):
        t, t_prev = int(ts[i]), int(ts[i + 1])
        eps_hat = _guided(model_color, x, cat, t, gamma)
        x = ddim_step(x, eps_hat, t, t_prev, schedule)
        if not np.all(np.isfinite(x)):
            raise SamplingError(f"non-finite sampler state at step {i} (t={t})")
        resid = x - x.mean(axis=1, keepdims=True)
        if t_prev > 0:
            noise = rng.standard_normal((1, 1, *target_gray.shape[1:]))
            gray = forward_diffuse(target_ms[None], t_prev, noise, schedule)
        else:
            gray = target_ms[None]
        x = gray + resid
    canvas = (x[0] + 1.0) * 0.5
    resid_canvas = canvas - canvas.mean(axis=0, keepdims=True)
    return _shrink_residual_into_range(target_gray, resid_canvas)
