"""soundglyph: canvases that are simultaneously images and spectrograms.

A self-contained diffusion playground in which one 32x128 canvas is read two
ways — as a grayscale glyph and as a log-mel spectrogram — and a composed
reverse-diffusion process steers it to satisfy a category prompt in both
modalities at once. Everything runs on CPU with numpy: analytic Gaussian-
mixture experts for exact verification, small trained denoisers and
classifiers, a Griffin-Lim vocoder, two baselines, and an evaluation
harness, behind one CLI.
"""

from .analytic import (
    GaussianMixture,
    GmmNoisePredictor,
    gmm_noise_predictor,
    gmm_product,
    sample_gmm,
)
from .audio import (
    DEFAULT_AUDIO_SPEC,
    AudioPipelineSpec,
    Waveform,
    cycle_check,
    griffin_lim,
    logmel_to_linear,
    mel_filterbank,
    read_wav,
    stft,
    vocode,
    wave_to_logmel,
    write_wav,
)
from .baselines import (
    ImprintConfig,
    SdsConfig,
    imprint,
    imprint_pipeline,
    sds_optimize,
    sds_step,
)
from .checkpoint import checkpoint_digest, load_checkpoint, save_checkpoint
from .core import (
    NoiseSchedule,
    forward_diffuse,
    make_linear_schedule,
    make_rng,
    to_canvas_space,
    to_model_space,
)
from .datagen import (
    CANVAS_SHAPE,
    IMAGE_CATEGORIES,
    SOUND_CATEGORIES,
    Dataset,
    make_color_dataset,
    make_dataset,
    render_glyph,
    synth_sound,
)
from .denoiser import (
    ClassifierModel,
    ClassifierTrainConfig,
    DenoiserModel,
    TrainConfig,
    features,
    grad_check,
    predict_noise,
    train_classifier,
    train_denoiser,
)
from .errors import (
    FormatError,
    NumericError,
    OptimizationError,
    ParameterError,
    SamplingError,
    ShapeError,
    TrainingError,
)
from .eval import (
    AlignmentScore,
    ablation_sweep,
    alignment_score,
    feature_matrix,
    frechet_feature_distance,
)
from .sampler import (
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

__version__ = "0.1.0"

__all__ = [
    "AlignmentScore",
    "AudioPipelineSpec",
    "CANVAS_SHAPE",
    "ClassifierModel",
    "ClassifierTrainConfig",
    "CompositionConfig",
    "DEFAULT_AUDIO_SPEC",
    "Dataset",
    "DenoiserModel",
    "FormatError",
    "GaussianMixture",
    "GmmNoisePredictor",
    "IMAGE_CATEGORIES",
    "ImprintConfig",
    "NoiseSchedule",
    "NumericError",
    "OptimizationError",
    "ParameterError",
    "SOUND_CATEGORIES",
    "SamplingError",
    "SdsConfig",
    "ShapeError",
    "StepDiagnostics",
    "TrainConfig",
    "TrainingError",
    "Waveform",
    "ablation_sweep",
    "alignment_score",
    "cfg",
    "checkpoint_digest",
    "colorize",
    "compose_eps",
    "cycle_check",
    "ddim_step",
    "feature_matrix",
    "features",
    "forward_diffuse",
    "frechet_feature_distance",
    "gmm_noise_predictor",
    "gmm_product",
    "grad_check",
    "griffin_lim",
    "imprint",
    "imprint_pipeline",
    "inference_timesteps",
    "load_checkpoint",
    "logmel_to_linear",
    "make_color_dataset",
    "make_dataset",
    "make_linear_schedule",
    "make_rng",
    "mel_filterbank",
    "predict_noise",
    "read_wav",
    "render_glyph",
    "reverse_process",
    "sample_composed",
    "sample_gmm",
    "sample_single",
    "save_checkpoint",
    "sds_optimize",
    "sds_step",
    "stft",
    "synth_sound",
    "to_canvas_space",
    "to_model_space",
    "train_classifier",
    "train_denoiser",
    "vocode",
    "warm_start_weights",
    "wave_to_logmel",
    "write_wav",
]
