"""Isotropic Gaussian mixtures with closed-form diffusion quantities.

These mixtures play the role of analytically tractable experts: the noised
marginal p_t, the score, the ideal noise predictor, and the product of two
mixture densities are all exact, so sampler behaviour can be checked against
ground truth instead of against a trained network.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import NoiseSchedule
from .errors import ParameterError, ShapeError

_LOG_2PI = float(np.log(2.0 * np.pi))


def _as_batch(x: np.ndarray, dim: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
        single = True
    elif x.ndim == 2:
        single = False
    else:
        raise ShapeError(f"points must be (dim,) or (N, dim), got shape {x.shape}")
    if x.shape[1] != dim:
        raise ShapeError(f"points have dim {x.shape[1]}, mixture has dim {dim}")
    return x, single


@dataclass(frozen=True)
class GaussianMixture:
    """Mixture of K isotropic Gaussians in R^dim.

    weights: (K,) positive, summing to 1 within 1e-12.
    means: (K, dim).
    variances: (K,) positive, one isotropic variance per component.
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        m = np.asarray(self.means, dtype=np.float64)
        v = np.asarray(self.variances, dtype=np.float64)
        if m.ndim != 2:
            raise ShapeError(f"means must be (K, dim), got shape {m.shape}")
        k = m.shape[0]
        if w.shape != (k,) or v.shape != (k,):
            raise ShapeError(
                f"weights {w.shape} and variances {v.shape} must both be ({k},)"
            )
        if k < 1:
            raise ParameterError("mixture needs at least one component")
        if np.any(w <= 0.0):
            raise ParameterError("mixture weights must be strictly positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ParameterError(f"mixture weights must sum to 1, got {w.sum()!r}")
        if np.any(v <= 0.0):
            raise ParameterError("component variances must be strictly positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    def _log_joint(self, x: np.ndarray) -> np.ndarray:
        """log(w_k N_k(x)) for every point and component, shape (N, K)."""
        d = self.dim
        sq = ((x[:, None, :] - self.means[None, :, :]) ** 2).sum(axis=2)
        log_norm = -0.5 * d * (_LOG_2PI + np.log(self.variances))
        return np.log(self.weights) + log_norm - 0.5 * sq / self.variances

    def log_density(self, x: np.ndarray) -> np.ndarray:
        """log p(x), shape (N,) for (N, dim) input, scalar for (dim,)."""
        xb, single = _as_batch(x, self.dim)
        lj = self._log_joint(xb)
        hi = lj.max(axis=1, keepdims=True)
        out = (hi + np.log(np.exp(lj - hi).sum(axis=1, keepdims=True)))[:, 0]
        return out[0] if single else out

    def score(self, x: np.ndarray) -> np.ndarray:
        """grad_x log p(x) via responsibility-weighted component scores."""
        xb, single = _as_batch(x, self.dim)
        lj = self._log_joint(xb)
        lj -= lj.max(axis=1, keepdims=True)
        resp = np.exp(lj)
        resp /= resp.sum(axis=1, keepdims=True)
        pulls = (self.means[None, :, :] - xb[:, None, :]) / self.variances[None, :, None]
        out = (resp[:, :, None] * pulls).sum(axis=1)
        return out[0] if single else out

    def noised(self, alpha_bar: float) -> GaussianMixture:
        """Marginal of the forward process at signal fraction alpha_bar.

        Each component N(mu, s^2 I) becomes N(sqrt(ab) mu, (ab s^2 + 1 - ab) I);
        the mixture weights are untouched.
        """
        if not 0.0 < alpha_bar <= 1.0:
            raise ParameterError(f"alpha_bar must be in (0, 1], got {alpha_bar}")
        return GaussianMixture(
            weights=self.weights,
            means=np.sqrt(alpha_bar) * self.means,
            variances=alpha_bar * self.variances + (1.0 - alpha_bar),
        )

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw n points: component indices first, then one normal block."""
        if n < 1:
            raise ParameterError(f"n must be >= 1, got {n}")
        edges = np.cumsum(self.weights)
        comps = np.searchsorted(edges, rng.random(n), side="right")
        comps = np.minimum(comps, self.n_components - 1)
        z = rng.standard_normal((n, self.dim))
        return self.means[comps] + np.sqrt(self.variances[comps])[:, None] * z


def gmm_product(a: GaussianMixture, b: GaussianMixture) -> GaussianMixture:
    """Normalized product density of two mixtures, again a mixture.

    Pairwise component products are Gaussian with precision-summed variances;
    the pair weight picks up the Gaussian overlap integral
    Z_jk = N(m_j - mu_k; 0, (s_j^2 + sigma_k^2) I). Weights are renormalized
    in log space so wildly mismatched mixtures stay finite.
    """
    if a.dim != b.dim:
        raise ShapeError(f"mixture dims differ: {a.dim} vs {b.dim}")
    d = a.dim
    va = a.variances[:, None]
    vb = b.variances[None, :]
    v_sum = va + vb
    v_prod = va * vb / v_sum
    mu = (a.means[:, None, :] * vb[:, :, None] + b.means[None, :, :] * va[:, :, None])
    mu /= v_sum[:, :, None]
    diff_sq = ((a.means[:, None, :] - b.means[None, :, :]) ** 2).sum(axis=2)
    log_z = -0.5 * d * (_LOG_2PI + np.log(v_sum)) - 0.5 * diff_sq / v_sum
    log_w = np.log(a.weights)[:, None] + np.log(b.weights)[None, :] + log_z
    log_w = log_w.ravel()
    log_w -= log_w.max()
    w = np.exp(log_w)
    w /= w.sum()
    return GaussianMixture(
        weights=w,
        means=mu.reshape(-1, d),
        variances=v_prod.ravel(),
    )


class GmmNoisePredictor:
    """Ideal noise predictor for a mixture prior under a given schedule.

    predict(x, category, t) returns eps_hat = -sqrt(1 - ab_t) * score_t(x),
    the exact minimizer of the denoising objective. The category argument is
    accepted for interface parity with trained models and ignored: an
    analytic expert models a single distribution, so the conditional and
    unconditional estimates coincide.
    """

    def __init__(self, gmm: GaussianMixture, schedule: NoiseSchedule) -> None:
        self.gmm = gmm
        self.schedule = schedule

    def predict(self, x: np.ndarray, category: int | None, t: int) -> np.ndarray:
        if not 0 <= t <= self.schedule.T:
            raise ParameterError(f"t must be in 0..{self.schedule.T}, got {t}")
        ab = float(self.schedule.alpha_bar[t])
        if ab >= 1.0:
            return np.zeros_like(np.asarray(x, dtype=np.float64))
        return -np.sqrt(1.0 - ab) * self.gmm.noised(ab).score(x)


def gmm_noise_predictor(
    gmm: GaussianMixture, x_t: np.ndarray, t: int, schedule: NoiseSchedule
) -> np.ndarray:
    """Exact noise estimate -sqrt(1 - ab_t) * score of the noised mixture."""
    return GmmNoisePredictor(gmm, schedule).predict(x_t, None, t)


def sample_gmm(gmm: GaussianMixture, rng: np.random.Generator, n: int) -> np.ndarray:
    """i.i.d. draws from the mixture, shape (n, dim)."""
    return gmm.sample(n, rng)
