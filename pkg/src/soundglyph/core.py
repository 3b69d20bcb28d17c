"""Diffusion schedule, forward process, and deterministic RNG plumbing.

Canvases are float64 arrays of shape (C, H, W) with values in [0, 1].
Models operate in a symmetric space obtained by the affine map 2c - 1;
samplers map back at the end. Timesteps are integers t in 0..T where t = 0
is the clean signal and t = T is (nearly) pure noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, ShapeError

DEFAULT_T = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator (Philox4x32-10) keyed by (seed, stream).

    Philox is stateless in the sense that the draw sequence is a pure
    function of the 128-bit key, so results reproduce across platforms
    and numpy versions that ship the same algorithm. Distinct streams
    are independent keys, not jumps, so they can be created in any order.
    """
    if not isinstance(seed, (int, np.integer)) or not 0 <= seed < 2**64:
        raise ParameterError(f"seed must be a uint64, got {seed!r}")
    if not isinstance(stream, (int, np.integer)) or not 0 <= stream < 2**64:
        raise ParameterError(f"stream must be a uint64, got {stream!r}")
    return np.random.Generator(np.random.Philox(key=[seed, stream]))


@dataclass(frozen=True)
class NoiseSchedule:
    """Variance schedule. alpha_bar[t] is the signal fraction kept at step t.

    alpha_bar has length T + 1 with alpha_bar[0] = 1 (t = 0 is clean), and is
    strictly decreasing with alpha_bar[T] > 0.
    """

    betas: np.ndarray
    alpha_bar: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size < 1:
            raise ShapeError(f"betas must be a non-empty 1-d array, got shape {betas.shape}")
        if not np.all(np.isfinite(betas)):
            raise ParameterError("betas must be finite")
        if np.any(betas <= 0.0) or np.any(betas >= 1.0):
            raise ParameterError("betas must lie strictly inside (0, 1)")
        alpha_bar = np.empty(betas.size + 1, dtype=np.float64)
        alpha_bar[0] = 1.0
        np.cumprod(1.0 - betas, out=alpha_bar[1:])
        if alpha_bar[-1] <= 0.0 or np.any(np.diff(alpha_bar) >= 0.0):
            raise ParameterError("schedule must keep alpha_bar strictly decreasing and positive")
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alpha_bar", alpha_bar)

    @property
    def T(self) -> int:
        return self.betas.size


def make_linear_schedule(
    T: int = DEFAULT_T,
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
) -> NoiseSchedule:
    """Linearly spaced betas from beta_start to beta_end inclusive."""
    if T < 1:
        raise ParameterError(f"T must be >= 1, got {T}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ParameterError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    return NoiseSchedule(np.linspace(beta_start, beta_end, T))


def forward_diffuse(
    x0: np.ndarray, t: int, eps: np.ndarray, schedule: NoiseSchedule
) -> np.ndarray:
    """Noise a clean signal to level t: sqrt(ab_t) x0 + sqrt(1 - ab_t) eps."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ShapeError(f"x0 {x0.shape} and eps {eps.shape} must match")
    if not isinstance(t, (int, np.integer)) or not 0 <= t <= schedule.T:
        raise ParameterError(f"t must be an integer in 0..{schedule.T}, got {t!r}")
    ab = schedule.alpha_bar[t]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def gaussian_canvas(shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    """Standard normal draw in model space."""
    return rng.standard_normal(shape, dtype=np.float64)


def to_model_space(canvas: np.ndarray) -> np.ndarray:
    """[0, 1] canvas -> [-1, 1] model space."""
    canvas = np.asarray(canvas, dtype=np.float64)
    return 2.0 * canvas - 1.0


def to_canvas_space(x: np.ndarray) -> np.ndarray:
    """Model space -> [0, 1] canvas, clamping anything the sampler overshot."""
    return np.clip((np.asarray(x, dtype=np.float64) + 1.0) * 0.5, 0.0, 1.0)


def check_canvas(canvas: np.ndarray, channels: int | None = None) -> np.ndarray:
    """Validate a (C, H, W) float canvas in [0, 1] and return it as float64."""
    canvas = np.asarray(canvas, dtype=np.float64)
    if canvas.ndim != 3:
        raise ShapeError(f"canvas must be (C, H, W), got shape {canvas.shape}")
    if channels is not None and canvas.shape[0] != channels:
        raise ShapeError(f"expected {channels} channels, got {canvas.shape[0]}")
    if not np.all(np.isfinite(canvas)):
        raise ParameterError("canvas contains non-finite values")
    if canvas.min() < 0.0 or canvas.max() > 1.0:
        raise ParameterError("canvas values must lie in [0, 1]")
    return canvas
