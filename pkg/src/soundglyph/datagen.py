"""Procedural toy modalities: glyph images and synthesized sounds.

Category labels stand in for text prompts. Image canvases are rendered
directly; audio canvases are log-mel spectrograms of synthesized waveforms
produced by the audio module's forward transform, so the vocoder
cycle-consistency experiment is measured against real transform output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import DEFAULT_AUDIO_SPEC, AudioPipelineSpec, Waveform, wave_to_logmel
from .errors import ParameterError

IMAGE_CATEGORIES = ("circle", "vertical-bars", "cross", "checker", "blank-vignette")
SOUND_CATEGORIES = ("harmonic-stack", "up-chirp", "click-train", "noise-band", "silence")
MODALITIES = ("image", "audio")

CANVAS_SHAPE = (1, 32, 128)
DEFAULT_DURATION = 2.048  # seconds; 128 hops at 16 kHz / hop 256


def category_names(modality: str) -> tuple[str, ...]:
    if modality == "image":
        return IMAGE_CATEGORIES
    if modality == "audio":
        return SOUND_CATEGORIES
    raise ParameterError(f"modality must be one of {MODALITIES}, got {modality!r}")


def category_id(modality: str, name: str) -> int:
    names = category_names(modality)
    if name not in names:
        raise ParameterError(f"unknown {modality} category {name!r}; choose from {names}")
    return names.index(name)


def _check_category(cat: int, modality: str) -> int:
    cat = int(cat)
    if not 0 <= cat < len(category_names(modality)):
        raise ParameterError(f"{modality} category id must be in 0..4, got {cat}")
    return cat


# ---------------------------------------------------------------------------
# Glyph rendering


def render_glyph(category: int, rng: np.random.Generator) -> np.ndarray:
    """Anti-aliased grayscale glyph, canvas (1, 32, 128) in [0, 1]."""
    category = _check_category(category, "image")
    h, w = CANVAS_SHAPE[1], CANVAS_SHAPE[2]
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    img = np.zeros((h, w))
    name = IMAGE_CATEGORIES[category]
    if name == "circle":
        for _ in range(rng.integers(1, 3)):
            cx = rng.uniform(18.0, w - 18.0)
            cy = rng.uniform(10.0, h - 10.0)
            r = rng.uniform(6.0, 12.0)
            amp = rng.uniform(0.85, 1.0)
            thick = rng.uniform(1.5, 3.0)
            d = np.hypot(xx - cx, yy - cy)
            img += amp * np.clip(thick / 2.0 + 0.5 - np.abs(d - r), 0.0, 1.0)
    elif name == "vertical-bars":
        n_bars = rng.integers(2, 6)
        width = rng.uniform(2.0, 5.0)
        amp = rng.uniform(0.8, 1.0)
        slots = np.linspace(6.0, w - 6.0, n_bars)
        centers = slots + rng.uniform(-4.0, 4.0, n_bars)
        for cx in centers:
            img += amp * np.clip(width / 2.0 + 0.5 - np.abs(xx - cx), 0.0, 1.0)
    elif name == "cross":
        cx = rng.uniform(w * 0.25, w * 0.75)
        cy = rng.uniform(h * 0.35, h * 0.65)
        arm_x = rng.uniform(20.0, 55.0)
        arm_y = rng.uniform(8.0, 14.0)
        thick = rng.uniform(1.5, 3.5)
        amp = rng.uniform(0.85, 1.0)
        horiz = np.clip(thick / 2.0 + 0.5 - np.abs(yy - cy), 0.0, 1.0)
        horiz *= np.clip(arm_x + 0.5 - np.abs(xx - cx), 0.0, 1.0)
        vert = np.clip(thick / 2.0 + 0.5 - np.abs(xx - cx), 0.0, 1.0)
        vert *= np.clip(arm_y + 0.5 - np.abs(yy - cy), 0.0, 1.0)
        img += amp * np.maximum(horiz, vert)
    elif name == "checker":
        cell = float(rng.choice([4, 8]))
        phase_x = rng.uniform(0.0, 2.0 * cell)
        phase_y = rng.uniform(0.0, 2.0 * cell)
        amp = rng.uniform(0.7, 1.0)
        cells = (np.floor((xx + phase_x) / cell) + np.floor((yy + phase_y) / cell)) % 2
        img += amp * cells
    else:  # blank-vignette
        peak = rng.uniform(0.05, 0.15)
        cx = rng.uniform(w * 0.3, w * 0.7)
        cy = rng.uniform(h * 0.3, h * 0.7)
        sx = rng.uniform(30.0, 60.0)
        sy = rng.uniform(10.0, 20.0)
        img += peak * np.exp(-(((xx - cx) / sx) ** 2 + ((yy - cy) / sy) ** 2))
    return np.clip(img, 0.0, 1.0)[None, :, :]


# ---------------------------------------------------------------------------
# Sound synthesis


def _draw_sound_params(category: int, rng: np.random.Generator) -> dict[str, float]:
    """Scalar parameter draws for one sound, in a fixed order per category."""
    name = SOUND_CATEGORIES[category]
    if name == "harmonic-stack":
        return {"f0": float(rng.uniform(100.0, 400.0))}
    if name == "up-chirp":
        f_lo = float(rng.uniform(100.0, 2000.0))
        f_hi = float(rng.uniform(f_lo + 500.0, 4000.0))
        return {"f_lo": f_lo, "f_hi": f_hi}
    if name == "click-train":
        return {
            "rate": float(rng.uniform(2.0, 6.0)),
            "decay": float(rng.uniform(0.005, 0.015)),
        }
    if name == "noise-band":
        f_lo = float(rng.uniform(150.0, 3500.0))
        return {"f_lo": f_lo, "f_hi": min(2.0 * f_lo, 7800.0)}
    return {}


def _render_sound(
    category: int,
    params: dict[str, float],
    rng: np.random.Generator,
    duration: float,
    sample_rate: int,
) -> np.ndarray:
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    name = SOUND_CATEGORIES[category]
    if name == "harmonic-stack":
        x = np.zeros(n)
        phases = rng.uniform(0.0, 2.0 * np.pi, 6)
        for k in range(1, 7):
            x += np.sin(2.0 * np.pi * k * params["f0"] * t + phases[k - 1]) / k
    elif name == "up-chirp":
        sweep = params["f_lo"] * t + (params["f_hi"] - params["f_lo"]) * t**2 / (2.0 * duration)
        x = np.sin(2.0 * np.pi * sweep + rng.uniform(0.0, 2.0 * np.pi))
    elif name == "click-train":
        x = np.zeros(n)
        burst_len = int(0.03 * sample_rate)
        tau = params["decay"] * sample_rate
        envelope = np.exp(-np.arange(burst_len) / tau)
        k = 0
        while True:
            start = int(round(k / params["rate"] * sample_rate))
            if start >= n:
                break
            m = min(burst_len, n - start)
            x[start : start + m] += envelope[:m] * rng.standard_normal(m)
            k += 1
    elif name == "noise-band":
        x = rng.standard_normal(n)
        spectrum = np.fft.rfft(x)
        freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
        spectrum[(freqs < params["f_lo"]) | (freqs > params["f_hi"])] = 0.0
        x = np.fft.irfft(spectrum, n=n)
    else:  # silence: zeros plus -60 dB dither
        x = rng.uniform(-1.0, 1.0, n) * 1e-3
        return x
    peak = np.abs(x).max()
    if peak > 0.0:
        x *= 0.9 / peak
    return x


def expected_click_count(rate: float, duration: float) -> int:
    """Number of onsets a click train at `rate` places in [0, duration)."""
    return int(np.ceil(rate * duration))


def synth_sound(
    category: int,
    rng: np.random.Generator,
    duration: float = DEFAULT_DURATION,
    sample_rate: int = 16000,
) -> Waveform:
    """Synthesize one sound, peak-normalized to 0.9 (silence stays quiet)."""
    category = _check_category(category, "audio")
    if duration <= 0.0:
        raise ParameterError(f"duration must be positive, got {duration}")
    params = _draw_sound_params(category, rng)
    samples = _render_sound(category, params, rng, duration, sample_rate)
    return Waveform(sample_rate, samples)


# ---------------------------------------------------------------------------
# Datasets


@dataclass(frozen=True)
class Dataset:
    modality: str
    canvases: np.ndarray  # (n, 1, 32, 128) float64 in [0, 1]
    categories: np.ndarray  # (n,) int64

    def __len__(self) -> int:
        return self.canvases.shape[0]


def generate_items(
    modality: str,
    n: int,
    rng: np.random.Generator,
    duration: float = DEFAULT_DURATION,
    spec: AudioPipelineSpec = DEFAULT_AUDIO_SPEC,
):
    """Yield (index, category, canvas, waveform-or-None) deterministically.

    Category ids are drawn up front, then items are rendered in order, so
    make_dataset and dataset export see identical draws for a given seed.
    """
    if modality not in MODALITIES:
        raise ParameterError(f"modality must be one of {MODALITIES}, got {modality!r}")
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    cats = rng.integers(0, 5, n)
    for i in range(n):
        cat = int(cats[i])
        if modality == "image":
            yield i, cat, render_glyph(cat, rng), None
        else:
            w = synth_sound(cat, rng, duration, spec.sample_rate)
            yield i, cat, wave_to_logmel(w, spec), w


def make_dataset(
    modality: str,
    n: int,
    rng: np.random.Generator,
    duration: float = DEFAULT_DURATION,
) -> Dataset:
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    canvases = np.empty((n, *CANVAS_SHAPE))
    cats = np.empty(n, dtype=np.int64)
    for i, cat, canvas, _ in generate_items(modality, n, rng, duration):
        canvases[i] = canvas
        cats[i] = cat
    return Dataset(modality, canvases, cats)


def tint_glyph(gray: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Lift a (1, H, W) glyph to (3, H, W) with a random hue, preserving shape.

    Channel gains are drawn in [0.2, 1] and renormalized so their mean is 1,
    keeping the channel-mean image close to the source glyph.
    """
    gains = rng.uniform(0.2, 1.0, 3)
    gains = gains / gains.mean()
    return np.clip(gains[:, None, None] * gray, 0.0, 1.0)


def make_color_dataset(n: int, rng: np.random.Generator) -> Dataset:
    """Tinted glyph canvases (n, 3, 32, 128) for the colorization model."""
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    cats = rng.integers(0, 5, n)
    canvases = np.empty((n, 3, *CANVAS_SHAPE[1:]))
    for i in range(n):
        canvases[i] = tint_glyph(render_glyph(int(cats[i]), rng), rng)
    return Dataset("image", canvases, cats.astype(np.int64))
