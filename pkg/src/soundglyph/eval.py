"""Alignment scoring, Fréchet feature distance, and the ablation sweep.

Alignment replaces pretrained cross-modal encoders with the package's own
category classifiers: the score of a sample set is the mean probability the
classifier assigns to the intended category, with a normal-approximation
95% confidence interval. Distribution quality is summarized by the Fréchet
distance between Gaussian fits of penultimate-layer features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import NoiseSchedule
from .denoiser import ClassifierModel
from .errors import NumericError, ParameterError, ShapeError
from .sampler import CompositionConfig, sample_composed

# One image category paired with one sound category (same index), used when a
# run needs a "matching" prompt pair in both modalities.
MATCHED_CATEGORY_PAIRS: tuple[tuple[int, int], ...] = tuple(
    (i, i) for i in range(5)
)

GUIDANCE_AXIS_VALUES: tuple[float, ...] = (5.0, 7.5, 10.0)
# (t_v, t_a) grid: each row keeps at least one modality active from the start.
WARM_START_AXIS_VALUES: tuple[tuple[float, float], ...] = (
    (1.0, 1.0),
    (1.0, 0.9),
    (0.9, 1.0),
    (0.8, 1.0),
)

_Z95 = 1.959963984540054


@dataclass(frozen=True)
class AlignmentScore:
    """Mean target-category probability with a 95% confidence interval."""

    mean: float
    ci_low: float
    ci_high: float
    n: int

    @property
    def ci_half_width(self) -> float:
        return (self.ci_high - self.ci_low) / 2.0


def _score_from_probs(probs: np.ndarray) -> AlignmentScore:
    n = probs.size
    if n < 2:
        raise ParameterError(f"need at least 2 samples for a confidence interval, got {n}")
    mean = float(probs.mean())
    half = _Z95 * float(probs.std(ddof=1)) / np.sqrt(n)
    return AlignmentScore(mean, mean - half, mean + half, n)


def _as_canvas_batch(samples) -> np.ndarray:
    batch = np.asarray(samples, dtype=np.float64)
    if batch.ndim != 4:
        raise ShapeError(f"samples must stack to (N, C, H, W), got {batch.shape}")
    return batch


def category_probabilities(
    classifier: ClassifierModel, samples, target: int
) -> np.ndarray:
    """Probability of the target category for each sample, shape (N,)."""
    if not 0 <= target < classifier.n_categories:
        raise ParameterError(
            f"target must be in 0..{classifier.n_categories - 1}, got {target}"
        )
    batch = _as_canvas_batch(samples)
    probs = np.concatenate(
        [classifier.probabilities(batch[lo : lo + 256]) for lo in range(0, batch.shape[0], 256)]
    )
    return probs[:, target]


def alignment_score(
    classifier: ClassifierModel, samples, target: int
) -> AlignmentScore:
    """Mean probability the classifier assigns the intended category."""
    return _score_from_probs(category_probabilities(classifier, samples, target))


def feature_matrix(classifier: ClassifierModel, samples) -> np.ndarray:
    """Penultimate-layer features of every sample, shape (N, feature_dim)."""
    batch = _as_canvas_batch(samples)
    feats = []
    for lo in range(0, batch.shape[0], 256):
        _, feat, _ = classifier.forward(batch[lo : lo + 256])
        feats.append(feat)
    return np.concatenate(feats)


def _clipped_eigh(mat: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2.0)
    if vals.min() < -1e-6:
        raise NumericError(f"{what} has negative eigenvalue {vals.min():.3e}")
    return np.maximum(vals, 0.0), vecs


def frechet_feature_distance(feats_ref, feats_gen) -> float:
    """Fréchet distance between Gaussian fits of two feature sets.

    ||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2)), with the matrix square
    root computed symmetrically as sqrt(S1)^T S2 sqrt(S1) via
    eigendecomposition. Small negative eigenvalues (>= -1e-6) are clipped to
    zero; anything lower is reported as a numeric failure.
    """
    a = np.asarray(feats_ref, dtype=np.float64)
    b = np.asarray(feats_gen, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(f"feature sets must be (N, d) with equal d: {a.shape}, {b.shape}")
    d = a.shape[1]
    for name, f in (("reference", a), ("generated", b)):
        if f.shape[0] < d + 1:
            raise ParameterError(
                f"{name} set needs at least dim + 1 = {d + 1} samples, got {f.shape[0]}"
            )
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    cov_a = np.cov(a, rowvar=False)
    cov_b = np.cov(b, rowvar=False)
    vals_a, vecs_a = _clipped_eigh(cov_a, "reference covariance")
    sqrt_a = (vecs_a * np.sqrt(vals_a)) @ vecs_a.T
    inner = sqrt_a @ cov_b @ sqrt_a
    vals_i, _ = _clipped_eigh(inner, "covariance product")
    tr_sqrt = float(np.sqrt(vals_i).sum())
    diff = mu_a - mu_b
    dist = float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * tr_sqrt)
    return max(dist, 0.0)


@dataclass(frozen=True)
class SweepRow:
    """One ablation cell: the swept value and both alignment scores."""

    axis: str
    value: tuple
    image_score: AlignmentScore
    audio_score: AlignmentScore

    def value_label(self) -> str:
        if self.axis == "guidance":
            return f"gamma={self.value[0]:g}"
        return f"t_v={self.value[0]:g},t_a={self.value[1]:g}"


def _cell_config(axis: str, value: tuple, base: CompositionConfig) -> CompositionConfig:
    if axis == "guidance":
        return CompositionConfig(
            gamma_a=value[0], gamma_v=value[0], t_a=base.t_a, t_v=base.t_v,
            inference_steps=base.inference_steps, sigma=base.sigma, seed=base.seed,
        )
    return CompositionConfig(
        gamma_a=base.gamma_a, gamma_v=base.gamma_v, t_v=value[0], t_a=value[1],
        inference_steps=base.inference_steps, sigma=base.sigma, seed=base.seed,
    )


def ablation_sweep(
    axis: str,
    values,
    n_per_cell: int,
    models,
    classifiers,
    cat_a: int,
    cat_v: int,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
    base_config: CompositionConfig | None = None,
    shape: tuple[int, ...] | None = None,
) -> list[SweepRow]:
    """Composed-sampling sweep along one axis, scored in both modalities.

    `values` holds guidance strengths (scalars) or (t_v, t_a) pairs;
    `models` and `classifiers` are (audio, visual) pairs. Every cell draws
    n_per_cell fresh samples from the shared rng.
    """
    if axis not in ("guidance", "warm_start"):
        raise ParameterError(f"axis must be 'guidance' or 'warm_start', got {axis!r}")
    if n_per_cell < 1:
        raise ParameterError(f"n_per_cell must be >= 1, got {n_per_cell}")
    if base_config is None:
        base_config = CompositionConfig()
    model_a, model_v = models
    clf_a, clf_v = classifiers
    rows: list[SweepRow] = []
    for raw in values:
        value = (float(raw),) if np.isscalar(raw) else tuple(float(v) for v in raw)
        config = _cell_config(axis, value, base_config)
        samples = []
        for _ in range(n_per_cell):
            canvas, _ = sample_composed(
                model_a, model_v, cat_a, cat_v, config, schedule, rng, shape=shape
            )
            samples.append(canvas)
        rows.append(
            SweepRow(
                axis=axis,
                value=value,
                image_score=alignment_score(clf_v, samples, cat_v),
                audio_score=alignment_score(clf_a, samples, cat_a),
            )
        )
    return rows


def sweep_table_text(rows: list[SweepRow]) -> str:
    """Aligned plain-text rendering of a sweep, one line per cell."""
    if not rows:
        raise ParameterError("no sweep rows to render")
    header = f"{'cell':<20} {'image_align':>12} {'image_ci':>9} {'audio_align':>12} {'audio_ci':>9}"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{r.value_label():<20} {r.image_score.mean:>12.4f} "
            f"{r.image_score.ci_half_width:>9.4f} {r.audio_score.mean:>12.4f} "
            f"{r.audio_score.ci_half_width:>9.4f}"
        )
    return "\n".join(lines) + "\n"


def sweep_csv_rows(rows: list[SweepRow]) -> tuple[list[str], list[list]]:
    """(header, rows) for CSV emission of a sweep table."""
    header = ["axis", "value", "image_mean", "image_ci_low", "image_ci_high",
              "audio_mean", "audio_ci_low", "audio_ci_high", "n"]
    out = []
    for r in rows:
        out.append([
            r.axis, r.value_label(), r.image_score.mean, r.image_score.ci_low,
            r.image_score.ci_high, r.audio_score.mean, r.audio_score.ci_low,
            r.audio_score.ci_high, r.image_score.n,
        ])
    return header, out
