"""Reverse-process machinery: DDIM algebra, guidance, warm-start gating,
estimate composition, and the wrappers built on the shared loop."""

import numpy as np
import pytest

from soundglyph.analytic import GaussianMixture, GmmNoisePredictor
from soundglyph.core import forward_diffuse, make_rng, to_canvas_space
from soundglyph.datagen import CANVAS_SHAPE
from soundglyph.denoiser import DenoiserModel
from soundglyph.errors import ParameterError, SamplingError, ShapeError
from soundglyph.sampler import (
    DIAGNOSTIC_COLUMNS,
    CompositionConfig,
    StepDiagnostics,
    cfg,
    colorize,
    compose_eps,
    ddim_step,
    inference_timesteps,
    reverse_process,
    sample_composed,
    sample_single,
    warm_start_weights,
)


class StubModel:
    """Minimal predictor: a function of (x, category, t), optional channels."""

    def __init__(self, fn, channels=None):
        self._fn = fn
        if channels is not None:
            self.channels = channels

    def predict(self, x, category, t):
        return self._fn(np.asarray(x, dtype=np.float64), category, t)


def zero_model(channels=None):
    return StubModel(lambda x, c, t: np.zeros_like(x), channels)


class TestCompositionConfig:
    def test_defaults(self):
        c = CompositionConfig()
        assert (c.gamma_a, c.gamma_v) == (10.0, 10.0)
        assert (c.t_a, c.t_v) == (1.0, 0.9)
        assert c.inference_steps == 100
        assert c.sigma == 0.0
        assert c.seed == 0

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"t_a": 1.2},
            {"t_v": -0.1},
            {"t_a": 0.9, "t_v": 0.8},  # neither reaches 1.0
            {"gamma_a": -1.0},
            {"gamma_v": -0.5},
            {"inference_steps": 0},
            {"sigma": -0.1},
        ],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ParameterError):
            CompositionConfig(**kwargs)

    def test_one_sided_activity_allowed(self):
        CompositionConfig(t_a=0.0, t_v=1.0)
        CompositionConfig(t_a=1.0, t_v=0.0)


class TestInferenceTimesteps:
    def test_frozen_grid(self):
        np.testing.assert_array_equal(
            inference_timesteps(1000, 4), np.array([1000, 750, 500, 250, 0])
        )

    def test_endpoints_and_monotonicity(self):
        ts = inference_timesteps(1000, 100)
        assert ts.shape == (101,)
        assert ts[0] == 1000 and ts[-1] == 0
        assert np.all(np.diff(ts) < 0)

    def test_full_resolution(self):
        np.testing.assert_array_equal(inference_timesteps(10, 10), np.arange(10, -1, -1))

    def test_steps_cannot_exceed_T(self):
        with pytest.raises(ParameterError):
            inference_timesteps(100, 101)

    def test_steps_must_be_positive(self):
        with pytest.raises(ParameterError):
            inference_timesteps(100, 0)


class TestDdimStep:
    def test_oracle_noise_tracks_forward_trajectory(self, schedule):
        # With the true noise as the estimate, the reverse update lands
        # exactly on the forward-diffused point at the earlier timestep.
        rng = make_rng(10)
        x0 = rng.standard_normal((2, 4, 4))
        eps = rng.standard_normal((2, 4, 4))
        ts = inference_timesteps(schedule.T, 50)
        x = forward_diffuse(x0, int(ts[0]), eps, schedule)
        worst = 0.0
        for i in range(50):
            t, t_prev = int(ts[i]), int(ts[i + 1])
            x = ddim_step(x, eps, t, t_prev, schedule)
            want = forward_diffuse(x0, t_prev, eps, schedule)
            worst = max(worst, float(np.max(np.abs(x - want))))
        assert worst < 1e-10

    def test_sigma_zero_never_touches_rng(self, schedule):
        x = np.ones((1, 2))
        eps = np.zeros((1, 2))
        ddim_step(x, eps, 500, 400, schedule, sigma=0.0, rng=None)

    def test_sigma_noise_is_additive(self, schedule):
        x = make_rng(11).standard_normal((1, 8))
        eps = make_rng(12).standard_normal((1, 8))
        base = ddim_step(x, eps, 500, 400, schedule)
        sigma = 0.1
        noisy = ddim_step(x, eps, 500, 400, schedule, sigma=sigma, rng=make_rng(13))
        xi = make_rng(13).standard_normal((1, 8))
        var_room = 1.0 - schedule.alpha_bar[400]
        ab_t = schedule.alpha_bar[500]
        ab_p = schedule.alpha_bar[400]
        x0_pred = (x - np.sqrt(1.0 - ab_t) * eps) / np.sqrt(ab_t)
        want = np.sqrt(ab_p) * x0_pred + np.sqrt(var_room - sigma**2) * eps + sigma * xi
        np.testing.assert_allclose(noisy, want, rtol=1e-14)
        assert not np.allclose(noisy, base)

    def test_timestep_order_validation(self, schedule):
        x = np.zeros((1, 2))
        with pytest.raises(ParameterError):
            ddim_step(x, x, 400, 500, schedule)
        with pytest.raises(ParameterError):
            ddim_step(x, x, 400, 400, schedule)
        with pytest.raises(ParameterError):
            ddim_step(x, x, 1001, 400, schedule)

    def test_sigma_exceeding_variance_room(self, schedule):
        x = np.zeros((1, 2))
        sigma_max = np.sqrt(1.0 - schedule.alpha_bar[400])
        with pytest.raises(ParameterError):
            ddim_step(x, x, 500, 400, schedule, sigma=sigma_max * 1.01, rng=make_rng(0))

    def test_sigma_without_rng(self, schedule):
        x = np.zeros((1, 2))
        with pytest.raises(ParameterError):
            ddim_step(x, x, 500, 400, schedule, sigma=0.1)

    def test_shape_mismatch(self, schedule):
        with pytest.raises(ShapeError):
            ddim_step(np.zeros((1, 2)), np.zeros((1, 3)), 500, 400, schedule)


class TestCfg:
    def test_gamma_one_returns_conditional_untouched(self):
        u = make_rng(14).standard_normal(5)
        c = make_rng(15).standard_normal(5)
        np.testing.assert_array_equal(cfg(u, c, 1.0), c)

    def test_gamma_zero_returns_unconditional_untouched(self):
        u = make_rng(14).standard_normal(5)
        c = make_rng(15).standard_normal(5)
        np.testing.assert_array_equal(cfg(u, c, 0.0), u)

    def test_extrapolation_formula(self):
        u = np.array([1.0, 2.0])
        c = np.array([3.0, -2.0])
        np.testing.assert_array_equal(cfg(u, c, 2.5), u + 2.5 * (c - u))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            cfg(np.zeros(2), np.zeros(3), 1.0)


class TestWarmStartWeights:
    def test_heaviside_table_T100(self):
        # Defaults t_a = 1.0, t_v = 0.9 with T = 100: audio alone above
        # t = 90, equal shares at and below it (boundary counts as active).
        for t in range(91, 101):
            assert warm_start_weights(t, 100, 1.0, 0.9) == (1.0, 0.0)
        for t in range(1, 91):
            assert warm_start_weights(t, 100, 1.0, 0.9) == (0.5, 0.5)

    def test_boundary_is_active(self):
        assert warm_start_weights(90, 100, 1.0, 0.9) == (0.5, 0.5)
        assert warm_start_weights(91, 100, 1.0, 0.9) == (1.0, 0.0)

    def test_symmetric_roles(self):
        assert warm_start_weights(95, 100, 0.9, 1.0) == (0.0, 1.0)

    def test_no_active_modality_raises(self):
        with pytest.raises(SamplingError):
            warm_start_weights(50, 100, 0.1, 0.1)

    def test_t_validation(self):
        with pytest.raises(ParameterError):
            warm_start_weights(0, 100, 1.0, 1.0)
        with pytest.raises(ParameterError):
            warm_start_weights(101, 100, 1.0, 1.0)

    def test_fraction_validation(self):
        with pytest.raises(ParameterError):
            warm_start_weights(50, 100, 1.5, 1.0)


class TestComposeEps:
    def test_passthrough_exact(self):
        a = make_rng(16).standard_normal(6)
        b = make_rng(17).standard_normal(6)
        np.testing.assert_array_equal(compose_eps(a, b, 1.0, 0.0), a)
        np.testing.assert_array_equal(compose_eps(a, b, 0.0, 1.0), b)

    def test_convex_combination(self):
        a = np.array([2.0, 0.0])
        b = np.array([0.0, 4.0])
        np.testing.assert_array_equal(
            compose_eps(a, b, 0.25, 0.75), np.array([0.5, 3.0])
        )

    def test_equal_identical_estimates_exact(self):
        # 0.5 e + 0.5 e == e bitwise: halving and re-adding is exact in
        # binary floating point, which is what makes self-composition
        # indistinguishable from single-model sampling.
        e = make_rng(18).standard_normal(64)
        np.testing.assert_array_equal(compose_eps(e, e.copy(), 0.5, 0.5), e)

    @pytest.mark.parametrize(
        "lam", [(-0.1, 1.1), (0.6, 0.6), (0.2, 0.2), (1.0, 0.1)]
    )
    def test_weight_validation(self, lam):
        e = np.zeros(2)
        with pytest.raises(ParameterError):
            compose_eps(e, e, *lam)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            compose_eps(np.zeros(2), np.zeros(3), 0.5, 0.5)


class TestReverseProcess:
    def test_zero_estimate_rescales_initial_draw(self, schedule):
        # With eps_hat = 0 every update multiplies by sqrt(ab_prev / ab_t),
        # so the loop telescopes to x_init / sqrt(ab_T).
        seed = 21
        x_init = make_rng(seed).standard_normal((2, 3))
        x, diags = reverse_process(
            zero_model(), None, 1.0, 1.0,
            None, None, 0.0, 0.0,
            (2, 3), 10, 0.0, schedule, make_rng(seed),
        )
        want = x_init / np.sqrt(schedule.alpha_bar[schedule.T])
        np.testing.assert_allclose(x, want, rtol=1e-12)
        assert len(diags) == 10

    def test_requires_some_model(self, schedule):
        with pytest.raises(ParameterError):
            reverse_process(
                None, None, 0.0, 0.0, None, None, 0.0, 0.0,
                (1, 2), 10, 0.0, schedule, make_rng(0),
            )

    def test_absent_model_requires_zero_fraction(self, schedule):
        with pytest.raises(ParameterError):
            reverse_process(
                zero_model(), None, 1.0, 1.0, None, None, 1.0, 0.5,
                (1, 2), 10, 0.0, schedule, make_rng(0),
            )
        with pytest.raises(ParameterError):
            reverse_process(
                None, None, 1.0, 0.5, zero_model(), None, 1.0, 1.0,
                (1, 2), 10, 0.0, schedule, make_rng(0),
            )

    def test_non_finite_state_raises(self, schedule):
        nan_model = StubModel(lambda x, c, t: np.full_like(x, np.nan))
        with pytest.raises(SamplingError):
            reverse_process(
                nan_model, None, 1.0, 1.0, None, None, 0.0, 0.0,
                (1, 2), 5, 0.0, schedule, make_rng(0),
            )

    def test_self_composition_matches_single_model(self, schedule):
        # The same GMM expert on both slots with full activity must agree
        # bitwise with single-model sampling: the estimates are identical
        # and their equal-weight average is exact.
        gmm = GaussianMixture(
            weights=np.array([0.5, 0.5]),
            means=np.array([[-2.0], [2.0]]),
            variances=np.array([1.0, 1.0]),
        )
        pred = GmmNoisePredictor(gmm, schedule)
        kwargs = dict(shape=(64, 1), steps=25, sigma=0.0, schedule=schedule)
        x_pair, _ = reverse_process(
            pred, None, 1.0, 1.0, pred, None, 1.0, 1.0,
            rng=make_rng(33), **kwargs,
        )
        x_single, _ = reverse_process(
            pred, None, 1.0, 1.0, None, None, 0.0, 0.0,
            rng=make_rng(33), **kwargs,
        )
        np.testing.assert_array_equal(x_pair, x_single)

    def test_diagnostics_contents(self, schedule):
        steps = 10
        x, diags = reverse_process(
            zero_model(), None, 1.0, 1.0,
            StubModel(lambda x, c, t: np.ones_like(x)), None, 1.0, 0.5,
            (2, 4), steps, 0.0, schedule, make_rng(1),
        )
        ts = inference_timesteps(schedule.T, steps)
        assert [d.step for d in diags] == list(range(steps))
        assert [d.t for d in diags] == [int(t) for t in ts[:-1]]
        for d in diags:
            lam = warm_start_weights(d.t, schedule.T, 1.0, 0.5)
            assert (d.lambda_a, d.lambda_v) == lam
            assert d.norm_a == 0.0  # zero estimates
            assert d.norm_v == pytest.approx(2.0)  # per-sample L2 of ones (2,4)

    def test_diagnostics_row_matches_columns(self):
        d = StepDiagnostics(3, 970, 1.0, 0.0, 1.5, 0.0)
        row = d.as_row()
        assert len(row) == len(DIAGNOSTIC_COLUMNS)
        assert row == (3, 970, 1.0, 0.0, 1.5, 0.0)

    def test_deterministic_under_seed(self, schedule):
        model = StubModel(lambda x, c, t: 0.1 * x)
        runs = [
            reverse_process(
                model, None, 1.0, 1.0, None, None, 0.0, 0.0,
                (1, 4), 8, 0.0, schedule, make_rng(5),
            )[0]
            for _ in range(2)
        ]
        np.testing.assert_array_equal(runs[0], runs[1])


class TestSampleWrappers:
    def test_sample_single_matches_reverse_process(self, schedule):
        model = DenoiserModel(channels=1, rng=make_rng(40))
        canvas = sample_single(
            model, 2, 10.0, 5, schedule, make_rng(41), shape=(1, 8, 16)
        )
        x, _ = reverse_process(
            model, 2, 10.0, 1.0, None, None, 0.0, 0.0,
            (1, 1, 8, 16), 5, 0.0, schedule, make_rng(41),
        )
        np.testing.assert_array_equal(canvas, to_canvas_space(x[0]))
        assert canvas.shape == (1, 8, 16)
        assert canvas.min() >= 0.0 and canvas.max() <= 1.0

    def test_sample_composed_returns_canvas_and_diags(self, schedule):
        config = CompositionConfig(inference_steps=4)
        canvas, diags = sample_composed(
            zero_model(channels=1), zero_model(channels=1), 0, 1,
            config, schedule, make_rng(42), shape=(1, 8, 16),
        )
        assert canvas.shape == (1, 8, 16)
        assert canvas.min() >= 0.0 and canvas.max() <= 1.0
        assert len(diags) == 4

    def test_sample_composed_default_shape(self, schedule):
        config = CompositionConfig(inference_steps=1)
        canvas, _ = sample_composed(
            zero_model(), zero_model(), 0, 1, config, schedule, make_rng(43)
        )
        assert canvas.shape == CANVAS_SHAPE

    def test_channel_mismatch_rejected(self, schedule):
        config = CompositionConfig(inference_steps=2)
        with pytest.raises(ShapeError):
            sample_composed(
                zero_model(channels=3), zero_model(channels=1), 0, 1,
                config, schedule, make_rng(0), shape=(1, 8, 16),
            )
        with pytest.raises(ShapeError):
            sample_single(
                zero_model(channels=3), 0, 1.0, 2, schedule, make_rng(0),
                shape=(1, 8, 16),
            )


class TestColorize:
    def test_channel_mean_matches_target_exactly(self, schedule):
        model = DenoiserModel(channels=3, rng=make_rng(50))
        target = make_rng(51).random((1, 8, 16))
        out = colorize(model, target, 10, 5.0, 1, schedule, make_rng(52))
        assert out.shape == (3, 8, 16)
        np.testing.assert_allclose(
            out.mean(axis=0, keepdims=True), target, atol=1e-12
        )
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_untrained_model_keeps_chroma_visible(self, schedule):
        # An untrained (zero-estimate) model leaves pure noise chroma; the
        # output must still be a valid canvas with the exact mean.
        model = DenoiserModel(channels=3, rng=make_rng(53))
        target = np.full((1, 4, 4), 0.5)
        out = colorize(model, target, 5, 1.0, 0, schedule, make_rng(54))
        np.testing.assert_allclose(out.mean(axis=0), target[0], atol=1e-12)

    def test_requires_three_channel_model(self, schedule):
        model = DenoiserModel(channels=1, rng=make_rng(55))
        with pytest.raises(ShapeError):
            colorize(model, np.zeros((1, 4, 4)), 5, 1.0, 0, schedule, make_rng(0))

    def test_target_validation(self, schedule):
        model = DenoiserModel(channels=3, rng=make_rng(56))
        with pytest.raises(ShapeError):
            colorize(model, np.zeros((4, 4)), 5, 1.0, 0, schedule, make_rng(0))
        with pytest.raises(ParameterError):
            colorize(model, np.full((1, 4, 4), 1.5), 5, 1.0, 0, schedule, make_rng(0))
