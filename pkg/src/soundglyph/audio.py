"""Waveform <-> log-mel canvas pipeline.

The forward path is STFT -> mel power -> log compression -> affine map to
[0, 1]; the backward path undoes the map, inverts the mel projection by
nonnegative ridge least squares, and reconstructs phase with Griffin-Lim.

Amplitude convention: spectral magnitudes are scaled by 2/sum(window) so a
full-scale sinusoid has magnitude close to its amplitude and power close to
its squared amplitude. `stft` itself returns raw DFT values; the scaling is
applied where magnitudes are converted to or from mel power, and Griffin-Lim
is indifferent to it because its output is peak-normalized.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import nnls

from .errors import FormatError, ParameterError, ShapeError

PEAK_LEVEL = 0.9  # peak-normalization target shared with the sound generators


@dataclass(frozen=True)
class Waveform:
    """Mono audio: float64 samples in [-1, 1] at a fixed sample rate."""

    sample_rate: int
    samples: np.ndarray

    def __post_init__(self) -> None:
        if self.sample_rate <= 0:
            raise ParameterError(f"sample_rate must be positive, got {self.sample_rate}")
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1:
            raise ShapeError(f"samples must be 1-d, got shape {s.shape}")
        if s.size and (not np.all(np.isfinite(s)) or np.abs(s).max() > 1.0):
            raise ParameterError("samples must be finite and lie in [-1, 1]")
        object.__setattr__(self, "samples", s)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class AudioPipelineSpec:
    """STFT/mel/log parameters binding canvases to waveforms.

    Canvas value 0 corresponds to mel power log_floor and value 1 to mel
    power log_ceil; the map is affine in ln(power) and clamped.
    """

    sample_rate: int = 16000
    n_fft: int = 512
    hop: int = 256
    n_mels: int = 32
    f_min: float = 0.0
    f_max: float = 8000.0
    log_floor: float = 1e-5
    log_ceil: float = 10.0
    frames: int = 128

    def __post_init__(self) -> None:
        if self.n_fft < 2 or self.hop < 1 or self.hop > self.n_fft:
            raise ParameterError(f"need 1 <= hop <= n_fft, got hop={self.hop}, n_fft={self.n_fft}")
        if not 1 <= self.n_mels <= self.n_bins:
            raise ParameterError(f"n_mels must be in 1..{self.n_bins}, got {self.n_mels}")
        if not 0.0 <= self.f_min < self.f_max <= self.sample_rate / 2:
            raise ParameterError(
                f"need 0 <= f_min < f_max <= Nyquist, got ({self.f_min}, {self.f_max})"
            )
        if not 0.0 < self.log_floor < self.log_ceil:
            raise ParameterError("need 0 < log_floor < log_ceil")
        if self.frames < 1:
            raise ParameterError(f"frames must be >= 1, got {self.frames}")

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1

    @property
    def window(self) -> np.ndarray:
        return _hann_periodic(self.n_fft)

    @property
    def amp_scale(self) -> float:
        """2/sum(window): maps raw magnitudes to amplitude units."""
        return 2.0 / float(self.window.sum())


DEFAULT_AUDIO_SPEC = AudioPipelineSpec()


@lru_cache(maxsize=8)
def _hann_periodic(n: int) -> np.ndarray:
    w = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)
    w.flags.writeable = False
    return w


def frame_count(n_samples: int, spec: AudioPipelineSpec) -> int:
    return -(-n_samples // spec.hop)


def _frame_signal(x: np.ndarray, spec: AudioPipelineSpec) -> np.ndarray:
    """Centered frames with reflect padding, shape (frames, n_fft)."""
    pad = spec.n_fft // 2
    if x.size > 1:
        xp = np.pad(x, pad, mode="reflect")
    else:
        xp = np.pad(x, pad, mode="edge")
    n_frames = frame_count(x.size, spec)
    idx = spec.hop * np.arange(n_frames)[:, None] + np.arange(spec.n_fft)[None, :]
    return xp[idx]


def stft(w: Waveform, spec: AudioPipelineSpec = DEFAULT_AUDIO_SPEC) -> np.ndarray:
    """Hann-windowed DFT of centered frames; complex (n_bins, frames)."""
    return _stft_array(w.samples, spec)


def _stft_array(x: np.ndarray, spec: AudioPipelineSpec) -> np.ndarray:
    # Same transform without Waveform range validation, for internal signals
    # (Griffin-Lim intermediates) that are only proportional to a waveform.
    if x.size == 0:
        raise ParameterError("cannot STFT an empty waveform")
    frames = _frame_signal(x, spec) * spec.window
    return np.fft.rfft(frames, axis=1).T


def istft(S: np.ndarray, spec: AudioPipelineSpec, length: int) -> np.ndarray:
    """Least-squares signal estimate under the analysis model.

    Analysis takes centered frames of the reflect-padded signal, so the
    least-squares inverse overlap-adds windowed synthesis frames and then
    folds the contributions that landed in the pad region back onto the
    interior samples they reflect (a padded sample is not a free variable;
    it IS an interior sample). Without the fold, phase retrieval keeps
    re-deriving the boundary frames from a cropped estimate that ignores
    what was synthesized in the pad, and the first frame's residual never
    drops. On spectrograms of real signals the fold is exact.

    Samples whose accumulated window-square weight is below 1% of the
    maximum are returned as zero: with frame count = ceil(len/hop) the last
    hop's worth of samples is covered only by the decaying edge of the final
    window, and dividing by a vanishing weight there turns any spectrogram
    inconsistency (e.g. Griffin-Lim intermediates) into an enormous edge
    spike. The masked region is the trailing ~1.5% of one hop.
    """
    S = np.asarray(S)
    if S.ndim != 2 or S.shape[0] != spec.n_bins:
        raise ShapeError(f"spectrogram must be ({spec.n_bins}, frames), got {S.shape}")
    n_frames = S.shape[1]
    frames = np.fft.irfft(S.T, n=spec.n_fft, axis=1) * spec.window
    total = (n_frames - 1) * spec.hop + spec.n_fft
    buf = np.zeros(total)
    wsum = np.zeros(total)
    w_sq = spec.window**2
    for f in range(n_frames):
        start = f * spec.hop
        buf[start : start + spec.n_fft] += frames[f]
        wsum[start : start + spec.n_fft] += w_sq
    pad = spec.n_fft // 2
    core = np.zeros(length)
    wcore = np.zeros(length)
    m = min(total - pad, length)
    core[:m] = buf[pad : pad + m]
    wcore[:m] = wsum[pad : pad + m]
    # left pad: padded[i] reflects interior sample pad - i
    k = min(pad, length - 1)
    if k > 0:
        src = slice(pad - 1, pad - 1 - k if pad - 1 - k >= 0 else None, -1)
        core[1 : k + 1] += buf[src]
        wcore[1 : k + 1] += wsum[src]
    # right pad: padded[pad + length + j] reflects interior sample length - 2 - j
    tail = min(total - pad - length, length - 1)
    if tail > 0:
        dst = slice(length - 2, length - 2 - tail if length - 2 - tail >= 0 else None, -1)
        core[dst] += buf[pad + length : pad + length + tail]
        wcore[dst] += wsum[pad + length : pad + length + tail]
    covered = wcore >= 1e-2 * wcore.max()
    return np.where(covered, core / np.maximum(wcore, 1e-12), 0.0)


def mel_scale(f: np.ndarray | float) -> np.ndarray | float:
    """HTK mel: 2595 log10(1 + f/700)."""
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m: np.ndarray | float) -> np.ndarray | float:
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(spec: AudioPipelineSpec = DEFAULT_AUDIO_SPEC) -> np.ndarray:
    """Triangular filters (n_mels, n_bins), peak-normalized to 1.

    Centers are evenly spaced in mel between f_min and f_max; each filter
    rises from the previous center and falls to the next, evaluated on the
    FFT bin frequencies.
    """
    pts = np.linspace(mel_scale(spec.f_min), mel_scale(spec.f_max), spec.n_mels + 2)
    edges = np.asarray(mel_to_hz(pts))
    bin_hz = np.arange(spec.n_bins) * spec.sample_rate / spec.n_fft
    lo, ctr, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rise = (bin_hz[None, :] - lo) / (ctr - lo)
    fall = (hi - bin_hz[None, :]) / (hi - ctr)
    fb = np.maximum(0.0, np.minimum(rise, fall))
    peak = fb.max(axis=1, keepdims=True)
    return fb / np.where(peak > 0.0, peak, 1.0)


def wave_to_logmel(
    w: Waveform, spec: AudioPipelineSpec = DEFAULT_AUDIO_SPEC
) -> np.ndarray:
    """Canvas (1, n_mels, spec.frames) in [0, 1] from a waveform."""
    S = stft(w, spec)
    power = np.abs(S * spec.amp_scale) ** 2
    mel_power = mel_filterbank(spec) @ power
    v = _power_to_value(mel_power, spec)
    n = v.shape[1]
    if n >= spec.frames:
        v = v[:, : spec.frames]
    else:
        v = np.pad(v, ((0, 0), (0, spec.frames - n)))
    return v[None, :, :]


def _power_to_value(p: np.ndarray, spec: AudioPipelineSpec) -> np.ndarray:
    lo, hi = np.log(spec.log_floor), np.log(spec.log_ceil)
    v = (np.log(np.maximum(p, spec.log_floor)) - lo) / (hi - lo)
    return np.clip(v, 0.0, 1.0)


def _value_to_power(v: np.ndarray, spec: AudioPipelineSpec) -> np.ndarray:
    # Inverse of _power_to_value with the floor subtracted back out: encoding
    # clamps every power at or below log_floor to value 0, so value 0 decodes
    # to power 0 (true silence) rather than to the floor itself. For any real
    # content (power >> log_floor) the subtraction is negligible.
    lo, hi = np.log(spec.log_floor), np.log(spec.log_ceil)
    return np.exp(v * (hi - lo) + lo) - spec.log_floor


@lru_cache(maxsize=8)
def _ridge_nnls_design(spec: AudioPipelineSpec) -> np.ndarray:
    """Filterbank stacked on sqrt(lambda)*I: the augmented design whose
    nonnegative least-squares solution minimizes
    ||fb p - m||^2 + lambda ||p||^2 over p >= 0."""
    fb = mel_filterbank(spec)
    aug = np.vstack([fb, np.sqrt(1e-8) * np.eye(spec.n_bins)])
    aug.flags.writeable = False
    return aug


def logmel_to_linear(
    c: np.ndarray, spec: AudioPipelineSpec = DEFAULT_AUDIO_SPEC
) -> np.ndarray:
    """Approximate linear magnitudes (n_bins, frames), amplitude units.

    The mel projection is wide-to-narrow, so inversion solves, per frame, a
    least-squares problem over nonnegative power with a small ridge penalty
    (lambda = 1e-8); sqrt of the recovered power gives magnitudes. Keeping
    the nonnegativity inside the solve matters: the unconstrained solution
    oscillates around zero across the wide high-frequency filters, and
    clipping those lobes after the fact inflates the implied mel power far
    beyond the least-squares residual. The constrained optimum reproduces
    the mel power essentially exactly. Lossy by design in the linear domain.

    The ridge term also picks which exact fit comes back: the minimum-norm
    tie-break spreads each filter's power across the filter's whole support
    rather than spiking isolated bins. That spread is what downstream phase
    retrieval needs — forcing a filter's energy into two or three adjacent
    bins with constant magnitude demands a beating envelope no real signal
    with those constant magnitudes can have, and Griffin-Lim stalls on it.
    """
    c = np.asarray(c, dtype=np.float64)
    if c.ndim == 3:
        if c.shape[0] != 1:
            raise ShapeError(f"log-mel canvas must have 1 channel, got {c.shape[0]}")
        c = c[0]
    if c.ndim != 2 or c.shape[0] != spec.n_mels:
        raise ShapeError(f"canvas must be ({spec.n_mels}, frames), got {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ParameterError("canvas contains non-finite values")
    mel_power = _value_to_power(c, spec)
    design = _ridge_nnls_design(spec)
    target = np.zeros(design.shape[0])
    power = np.zeros((spec.n_bins, mel_power.shape[1]))
    for t in range(mel_power.shape[1]):
        if mel_power[:, t].any():
            target[: spec.n_mels] = mel_power[:, t]
            power[:, t] = nnls(design, target)[0]
    return np.sqrt(power)


def griffin_lim(
    mag: np.ndarray,
    spec: AudioPipelineSpec,
    rng: np.random.Generator,
    n_iter: int = 100,
) -> tuple[Waveform, np.ndarray]:
    """Alternating-projection phase retrieval from magnitudes.

    Starts from uniformly random phases, repeats x <- istft(mag e^{i phi}),
    phi <- phase(stft(x)), and returns the peak-normalized waveform plus the
    per-iteration spectral-convergence trace |mag - |stft(x)||_F / |mag|_F.
    All-zero magnitudes short-circuit to a zero waveform with a zero trace.

    Synthesis runs on the magnitudes extended by one duplicated final frame:
    with frame count = ceil(len/hop), the last hop of a bare reconstruction
    is covered only by the decaying edge of the final analysis window, and
    reconstruction there amplifies spectrogram inconsistency into an edge
    spike that would dominate peak normalization. The extra frame gives every
    returned sample full window coverage; the extension itself is discarded,
    and the convergence trace is measured against the caller's magnitudes.
    """
    mag = np.asarray(mag, dtype=np.float64)
    if mag.ndim != 2 or mag.shape[0] != spec.n_bins:
        raise ShapeError(f"magnitudes must be ({spec.n_bins}, frames), got {mag.shape}")
    if mag.size == 0 or np.any(mag < 0.0) or not np.all(np.isfinite(mag)):
        raise ParameterError("magnitudes must be nonempty, finite, and >= 0")
    if n_iter < 1:
        raise ParameterError(f"n_iter must be >= 1, got {n_iter}")
    n_frames = mag.shape[1]
    length = n_frames * spec.hop
    mag_norm = np.linalg.norm(mag)
    if mag_norm == 0.0:
        return Waveform(spec.sample_rate, np.zeros(length)), np.zeros(n_iter)
    mag_ext = np.concatenate([mag, mag[:, -1:]], axis=1)
    length_ext = length + spec.hop
    phase = rng.uniform(0.0, 2.0 * np.pi, mag_ext.shape)
    S = mag_ext * np.exp(1j * phase)
    trace = np.empty(n_iter)
    for i in range(n_iter):
        x = istft(S, spec, length_ext)
        S_est = _stft_array(x, spec)
        trace[i] = np.linalg.norm(mag - np.abs(S_est[:, :n_frames])) / mag_norm
        S = mag_ext * np.exp(1j * np.angle(S_est))
    x = istft(S, spec, length_ext)[:length]
    peak = np.abs(x).max()
    if peak > 0.0:
        x = x * (PEAK_LEVEL / peak)
    return Waveform(spec.sample_rate, x), trace


def vocode(
    c: np.ndarray,
    spec: AudioPipelineSpec,
    rng: np.random.Generator,
    n_iter: int = 100,
) -> tuple[Waveform, np.ndarray]:
    """Log-mel canvas -> waveform via mel inversion + Griffin-Lim."""
    return griffin_lim(logmel_to_linear(c, spec), spec, rng, n_iter)


def cycle_check(
    c: np.ndarray,
    spec: AudioPipelineSpec,
    rng: np.random.Generator,
    n_iter: int = 100,
) -> tuple[Waveform, np.ndarray, float]:
    """Vocode a canvas, re-encode the waveform, report mean abs error.

    Perfect consistency is impossible in general (mel inversion and phase
    retrieval both lose information); the error is reported, not bounded.
    """
    c = np.asarray(c, dtype=np.float64)
    if c.min() < 0.0 or c.max() > 1.0:
        raise ParameterError("canvas values must lie in [0, 1]")
    w, _ = vocode(c, spec, rng, n_iter)
    c2 = wave_to_logmel(w, spec)
    c3 = c.reshape(1, spec.n_mels, -1)
    n = min(c3.shape[2], c2.shape[2])
    err = float(np.mean(np.abs(c3[:, :, :n] - c2[:, :, :n])))
    return w, c2, err


def write_wav(path: str, w: Waveform) -> None:
    """PCM16 little-endian mono RIFF; samples quantized by round(32767 x)."""
    s = w.samples
    data = np.round(s * 32767.0).astype("<i2").tobytes()
    n = len(data)
    header = b"".join(
        [
            b"RIFF",
            (36 + n).to_bytes(4, "little"),
            b"WAVE",
            b"fmt ",
            (16).to_bytes(4, "little"),
            (1).to_bytes(2, "little"),  # PCM
            (1).to_bytes(2, "little"),  # mono
            int(w.sample_rate).to_bytes(4, "little"),
            int(w.sample_rate * 2).to_bytes(4, "little"),
            (2).to_bytes(2, "little"),
            (16).to_bytes(2, "little"),
            b"data",
            n.to_bytes(4, "little"),
        ]
    )
    with open(path, "wb") as f:
        f.write(header + data)


def read_wav(path: str) -> Waveform:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise FormatError(f"{path}: not a RIFF/WAVE file")
    pos = 12
    fmt = None
    data = None
    while pos + 8 <= len(raw):
        chunk_id = raw[pos : pos + 4]
        size = int.from_bytes(raw[pos + 4 : pos + 8], "little")
        body = raw[pos + 8 : pos + 8 + size]
        if chunk_id == b"fmt ":
            fmt = body
        elif chunk_id == b"data":
            data = body
        pos += 8 + size + (size & 1)
    if fmt is None or data is None or len(fmt) < 16:
        raise FormatError(f"{path}: missing fmt or data chunk")
    audio_format = int.from_bytes(fmt[0:2], "little")
    channels = int.from_bytes(fmt[2:4], "little")
    sample_rate = int.from_bytes(fmt[4:8], "little")
    bits = int.from_bytes(fmt[14:16], "little")
    if audio_format != 1 or channels != 1 or bits != 16:
        raise FormatError(f"{path}: expected 16-bit mono PCM, got fmt={audio_format} "
                          f"channels={channels} bits={bits}")
    if len(data) % 2:
        raise FormatError(f"{path}: odd data chunk length")
    samples = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32767.0
    return Waveform(sample_rate, np.clip(samples, -1.0, 1.0))
