"""Procedural glyphs and sounds: category structure, signal properties,
dataset plumbing."""

import numpy as np
import pytest

from soundglyph.audio import DEFAULT_AUDIO_SPEC, stft, wave_to_logmel
from soundglyph.core import make_rng
from soundglyph.datagen import (
    CANVAS_SHAPE,
    DEFAULT_DURATION,
    IMAGE_CATEGORIES,
    SOUND_CATEGORIES,
    Dataset,
    category_id,
    category_names,
    expected_click_count,
    generate_items,
    make_color_dataset,
    make_dataset,
    render_glyph,
    synth_sound,
    tint_glyph,
)
from soundglyph.errors import ParameterError


class TestCategories:
    def test_category_tables(self):
        assert len(IMAGE_CATEGORIES) == 5
        assert len(SOUND_CATEGORIES) == 5
        assert category_names("image") == IMAGE_CATEGORIES
        assert category_names("audio") == SOUND_CATEGORIES

    def test_category_id_roundtrip(self):
        for modality in ("image", "audio"):
            for i, name in enumerate(category_names(modality)):
                assert category_id(modality, name) == i

    def test_unknown_names_rejected(self):
        with pytest.raises(ParameterError):
            category_id("image", "squiggle")
        with pytest.raises(ParameterError):
            category_names("video")

    def test_constants(self):
        assert CANVAS_SHAPE == (1, 32, 128)
        assert DEFAULT_DURATION == 2.048


class TestGlyphs:
    @pytest.mark.parametrize("cat", range(5))
    def test_canvas_contract(self, cat):
        img = render_glyph(cat, make_rng(cat))
        assert img.shape == CANVAS_SHAPE
        assert img.min() >= 0.0 and img.max() <= 1.0

    def test_deterministic(self):
        a = render_glyph(2, make_rng(9))
        b = render_glyph(2, make_rng(9))
        np.testing.assert_array_equal(a, b)

    def test_blank_vignette_is_dim(self):
        cat = category_id("image", "blank-vignette")
        for seed in range(5):
            img = render_glyph(cat, make_rng(seed))
            assert img.max() <= 0.16

    def test_vertical_bars_have_column_peaks(self):
        cat = category_id("image", "vertical-bars")
        for seed in range(5):
            img = render_glyph(cat, make_rng(seed))[0]
            profile = img.sum(axis=0)
            median = np.median(profile)
            peaks = (profile > 3.0 * max(median, 1e-9)).sum()
            assert peaks >= 2

    def test_circle_has_bright_ring(self):
        cat = category_id("image", "circle")
        img = render_glyph(cat, make_rng(1))[0]
        assert img.max() > 0.6
        assert (img > 0.3).mean() < 0.5  # a ring, not a flood

    def test_category_validation(self):
        with pytest.raises(ParameterError):
            render_glyph(5, make_rng(0))
        with pytest.raises(ParameterError):
            render_glyph(-1, make_rng(0))


class TestSounds:
    @pytest.mark.parametrize("cat", range(5))
    def test_waveform_contract(self, cat):
        w = synth_sound(cat, make_rng(cat))
        assert w.sample_rate == 16000
        assert w.samples.shape == (int(round(DEFAULT_DURATION * 16000)),)
        assert np.abs(w.samples).max() <= 0.9 + 1e-12

    def test_deterministic(self):
        a = synth_sound(1, make_rng(3))
        b = synth_sound(1, make_rng(3))
        np.testing.assert_array_equal(a.samples, b.samples)

    def test_silence_is_near_zero(self):
        cat = category_id("audio", "silence")
        w = synth_sound(cat, make_rng(0))
        assert np.abs(w.samples).max() <= 1e-3

    def test_harmonic_stack_peaks_at_multiples_of_f0(self):
        # Recover f0 from the FFT peak and check the first harmonics all
        # carry energy at integer multiples.
        cat = category_id("audio", "harmonic-stack")
        w = synth_sound(cat, make_rng(4))
        n = w.samples.size
        spectrum = np.abs(np.fft.rfft(w.samples * np.hanning(n)))
        freqs = np.fft.rfftfreq(n, 1.0 / 16000)
        f0 = freqs[np.argmax(spectrum)]
        assert 100.0 <= f0 <= 400.0
        floor = spectrum.mean()
        for k in range(1, 5):
            window = (freqs > k * f0 - 5.0) & (freqs < k * f0 + 5.0)
            assert spectrum[window].max() > 20.0 * floor

    def test_up_chirp_frequency_rises(self):
        cat = category_id("audio", "up-chirp")
        w = synth_sound(cat, make_rng(5))
        S = np.abs(stft(w, DEFAULT_AUDIO_SPEC))
        peak_bins = np.argmax(S, axis=0)
        early = peak_bins[4 : len(peak_bins) // 4].mean()
        late = peak_bins[-len(peak_bins) // 4 : -4].mean()
        assert late > early + 2.0

    def test_click_train_onset_count(self):
        cat = category_id("audio", "click-train")
        for seed in range(4):
            rng = make_rng(seed)
            rate = float(rng.uniform(2.0, 6.0))  # same first draw as synth
            w = synth_sound(cat, make_rng(seed))
            # Count onsets as upward crossings of an energy threshold with a
            # refractory gap longer than a burst.
            energy = np.abs(w.samples)
            hot = energy > 0.1
            onsets = 0
            cooldown = 0
            for flag in hot:
                if cooldown > 0:
                    cooldown -= 1
                elif flag:
                    onsets += 1
                    cooldown = int(0.06 * 16000)
            want = expected_click_count(rate, DEFAULT_DURATION)
            assert abs(onsets - want) <= 1

    def test_noise_band_is_bandlimited(self):
        cat = category_id("audio", "noise-band")
        rng = make_rng(6)
        f_lo = float(rng.uniform(150.0, 3500.0))
        f_hi = min(2.0 * f_lo, 7800.0)
        w = synth_sound(cat, make_rng(6))
        spectrum = np.abs(np.fft.rfft(w.samples)) ** 2
        freqs = np.fft.rfftfreq(w.samples.size, 1.0 / 16000)
        inside = spectrum[(freqs >= f_lo) & (freqs <= f_hi)].sum()
        outside = spectrum[(freqs < f_lo * 0.9) | (freqs > f_hi * 1.1)].sum()
        assert inside > 100.0 * outside

    def test_expected_click_count(self):
        assert expected_click_count(2.0, 2.048) == 5  # onsets at 0, .5, ... 2.0
        assert expected_click_count(4.0, 1.0) == 4

    def test_duration_validation(self):
        with pytest.raises(ParameterError):
            synth_sound(0, make_rng(0), duration=0.0)

    def test_category_validation(self):
        with pytest.raises(ParameterError):
            synth_sound(7, make_rng(0))


class TestDatasets:
    def test_image_dataset_contract(self):
        ds = make_dataset("image", 20, make_rng(10))
        assert isinstance(ds, Dataset)
        assert ds.modality == "image"
        assert len(ds) == 20
        assert ds.canvases.shape == (20, 1, 32, 128)
        assert ds.categories.shape == (20,)
        assert ds.categories.dtype == np.int64
        assert ds.canvases.min() >= 0.0 and ds.canvases.max() <= 1.0
        assert set(np.unique(ds.categories)) <= set(range(5))

    def test_audio_dataset_matches_transform(self):
        ds = make_dataset("audio", 6, make_rng(11))
        assert ds.canvases.shape == (6, 1, 32, 128)
        # Re-generating with the same seed yields the same canvases, and each
        # canvas is the forward transform of the yielded waveform.
        for i, cat, canvas, w in generate_items("audio", 6, make_rng(11)):
            np.testing.assert_array_equal(ds.canvases[i], canvas)
            np.testing.assert_array_equal(canvas, wave_to_logmel(w, DEFAULT_AUDIO_SPEC))

    def test_category_histogram_is_roughly_uniform(self):
        ds = make_dataset("image", 100, make_rng(12))
        counts = np.bincount(ds.categories, minlength=5)
        assert counts.min() >= 20 * 0.7 - 1
        assert counts.max() <= 20 * 1.3 + 1

    def test_deterministic(self):
        a = make_dataset("audio", 4, make_rng(13))
        b = make_dataset("audio", 4, make_rng(13))
        np.testing.assert_array_equal(a.canvases, b.canvases)
        np.testing.assert_array_equal(a.categories, b.categories)

    def test_validation(self):
        with pytest.raises(ParameterError):
            make_dataset("image", 0, make_rng(0))
        with pytest.raises(ParameterError):
            make_dataset("spectrogram", 1, make_rng(0))

    def test_tint_preserves_channel_mean(self):
        gray = render_glyph(0, make_rng(14))
        color = tint_glyph(gray, make_rng(15))
        assert color.shape == (3, 32, 128)
        np.testing.assert_allclose(color.mean(axis=0), gray[0], atol=0.05)
        assert color.min() >= 0.0 and color.max() <= 1.0

    def test_color_dataset_contract(self):
        ds = make_color_dataset(8, make_rng(16))
        assert ds.canvases.shape == (8, 3, 32, 128)
        assert ds.modality == "image"
        assert ds.canvases.min() >= 0.0 and ds.canvases.max() <= 1.0
