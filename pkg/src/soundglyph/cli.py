"""Command-line surface: data generation, training, sampling, baselines,
vocoding, evaluation, ablations, and the analytic verification suite.

Exit codes: 0 on success; 1 for usage problems (bad flags or values, missing
or malformed files); 2 for runtime failures (training divergence, sampling
blow-ups, numeric errors). Every generating subcommand writes a flat
key=value manifest capturing the full configuration, seeds, and checkpoint
digests needed to reproduce its outputs byte for byte.

Configuration files are flat key=value text; command-line flags override
file values. The only environment variables consulted (at import time, for
kernel backend selection) are SOUNDGLYPH_KERNELS and SOUNDGLYPH_PORTABLE.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analytic import GaussianMixture, GmmNoisePredictor, gmm_product
from .audio import (
    DEFAULT_AUDIO_SPEC,
    cycle_check,
    vocode,
    write_wav,
)
from .baselines import ImprintConfig, SdsConfig, imprint_pipeline, sds_optimize
from .checkpoint import checkpoint_digest, load_checkpoint, save_checkpoint
from .core import forward_diffuse, make_linear_schedule, make_rng
from .datagen import (
    Dataset,
    category_id,
    category_names,
    generate_items,
)
from .denoiser import (
    ClassifierTrainConfig,
    TrainConfig,
    smoothed_loss,
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
    GUIDANCE_AXIS_VALUES,
    WARM_START_AXIS_VALUES,
    ablation_sweep,
    alignment_score,
    feature_matrix,
    frechet_feature_distance,
    sweep_csv_rows,
    sweep_table_text,
)
from .formats import (
    coerce,
    read_config,
    read_manifest,
    read_pgm,
    write_csv,
    write_manifest,
    write_pgm,
    write_ppm,
    write_trace,
)
from .sampler import (
    DIAGNOSTIC_COLUMNS,
    CompositionConfig,
    colorize,
    reverse_process,
    sample_composed,
    sample_single,
)

_USAGE_ERRORS = (
    ParameterError,
    ShapeError,
    FormatError,
    FileNotFoundError,
    IsADirectoryError,
    NotADirectoryError,
    PermissionError,
)
_RUNTIME_ERRORS = (TrainingError, SamplingError, OptimizationError, NumericError)


class _Parser(argparse.ArgumentParser):
    """argparse variant that exits 1 (not 2) on usage errors."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


# ---------------------------------------------------------------------------
# shared helpers


def _schedule():
    return make_linear_schedule()


def _merge_config(
    defaults: dict, config_path: str | None, overrides: dict
) -> dict:
    """defaults <- config file <- non-None command-line flags."""
    merged = dict(defaults)
    if config_path is not None:
        file_values = read_config(config_path)
        for key, text in file_values.items():
            if key not in merged:
                raise ParameterError(f"unknown config key {key!r} in {config_path}")
            merged[key] = coerce(text, type(merged[key]))
    for key, value in overrides.items():
        if value is not None:
            merged[key] = value
    return merged


def _load_dataset_dir(path: str) -> Dataset:
    root = Path(path)
    manifest = read_manifest(root / "manifest.txt")
    if "modality" not in manifest:
        raise FormatError(f"{root}/manifest.txt lacks a modality entry")
    modality = manifest["modality"]
    names = category_names(modality)
    canvases = []
    cats = []
    index_path = root / "index.txt"
    with open(index_path, "r", encoding="ascii") as f:
        for lineno, line in enumerate(f, 1):
            stripped = line.strip()
            if not stripped:
                continue
            parts = stripped.split()
            if len(parts) != 2 or parts[1] not in names:
                raise FormatError(f"{index_path}:{lineno}: expected 'file category'")
            canvases.append(read_pgm(root / parts[0]))
            cats.append(names.index(parts[1]))
    if not canvases:
        raise FormatError(f"{index_path} lists no items")
    return Dataset(modality, np.stack(canvases), np.asarray(cats, dtype=np.int64))


def _load_canvas_dir(path: str) -> np.ndarray:
    root = Path(path)
    files = sorted(root.glob("*.pgm"))
    if not files:
        raise ParameterError(f"no .pgm canvases found in {path}")
    return np.stack([read_pgm(f) for f in files])


def _load_model(path: str, kind: str):
    model, extra = load_checkpoint(path)
    if model.kind != kind:
        raise ParameterError(f"{path} holds a {model.kind} checkpoint, expected {kind}")
    return model, extra


def _category_arg(modality: str, name: str) -> int:
    return category_id(modality, name)


def _base_manifest(command: str) -> dict:
    return {"command": command, "package_version": __version__}


def _schedule_manifest(schedule) -> dict:
    return {
        "schedule_T": schedule.T,
        "beta_start": float(schedule.betas[0]),
        "beta_end": float(schedule.betas[-1]),
    }


def _emit_audio(canvas, out_wav, rng, n_iter: int) -> np.ndarray:
    w, trace = vocode(canvas, DEFAULT_AUDIO_SPEC, rng, n_iter)
    write_wav(str(out_wav), w)
    return trace


# ---------------------------------------------------------------------------
# subcommand handlers


def _cmd_gen_data(args) -> int:
    rng = make_rng(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = category_names(args.modality)
    index_lines = []
    for i, cat, canvas, wave in generate_items(args.modality, args.n, rng):
        stem = f"item_{i:05d}"
        write_pgm(out / f"{stem}.pgm", canvas)
        if wave is not None:
            write_wav(str(out / f"{stem}.wav"), wave)
        index_lines.append(f"{stem}.pgm {names[cat]}")
    with open(out / "index.txt", "w", encoding="ascii") as f:
        f.write("\n".join(index_lines) + "\n")
    manifest = _base_manifest("gen-data")
    manifest.update(
        modality=args.modality, n=args.n, seed=args.seed,
        sample_rate=DEFAULT_AUDIO_SPEC.sample_rate,
    )
    write_manifest(out / "manifest.txt", manifest)
    print(f"wrote {args.n} {args.modality} items to {out}")
    return 0


_TRAIN_DEFAULTS = {
    "steps": 20000, "batch": 32, "lr": 1e-3, "beta1": 0.9, "beta2": 0.999,
    "eps": 1e-8, "p_uncond": 0.1, "seed": 0,
}


def _cmd_train(args) -> int:
    dataset = _load_dataset_dir(args.data)
    if dataset.modality != args.modality:
        raise ParameterError(
            f"dataset at {args.data} is {dataset.modality}, asked for {args.modality}"
        )
    merged = _merge_config(
        _TRAIN_DEFAULTS, args.config,
        {"steps": args.steps, "batch": args.batch, "lr": args.lr, "seed": args.seed},
    )
    config = TrainConfig(**merged)
    schedule = _schedule()
    model, losses = train_denoiser(dataset, config, schedule, make_rng(config.seed))
    save_checkpoint(args.out, model, extra={"modality": args.modality})
    write_trace(
        f"{args.out}.loss.txt", ("step", "loss"),
        [(i, float(v)) for i, v in enumerate(losses)],
    )
    manifest = _base_manifest("train")
    manifest.update(merged)
    manifest.update(_schedule_manifest(schedule))
    manifest.update(
        modality=args.modality, data=args.data,
        checkpoint_digest=checkpoint_digest(args.out),
        final_smoothed_loss=smoothed_loss(losses, len(losses) - 1),
    )
    write_manifest(f"{args.out}.manifest.txt", manifest)
    print(
        f"trained {args.modality} denoiser for {config.steps} steps; "
        f"final smoothed loss {smoothed_loss(losses, len(losses) - 1):.4f}; "
        f"saved {args.out}"
    )
    return 0


_CLF_DEFAULTS = {
    "steps": 2000, "batch": 32, "lr": 1e-3, "beta1": 0.9, "beta2": 0.999,
    "eps": 1e-8, "val_fraction": 0.2, "seed": 0,
}


def _cmd_train_classifier(args) -> int:
    dataset = _load_dataset_dir(args.data)
    if dataset.modality != args.modality:
        raise ParameterError(
            f"dataset at {args.data} is {dataset.modality}, asked for {args.modality}"
        )
    merged = _merge_config(
        _CLF_DEFAULTS, args.config, {"steps": args.steps, "seed": args.seed}
    )
    config = ClassifierTrainConfig(**merged)
    model = train_classifier(dataset, config, make_rng(config.seed))
    save_checkpoint(
        args.out, model,
        extra={"modality": args.modality, "val_accuracy": model.val_accuracy},
    )
    manifest = _base_manifest("train-classifier")
    manifest.update(merged)
    manifest.update(
        modality=args.modality, data=args.data,
        checkpoint_digest=checkpoint_digest(args.out),
        val_accuracy=model.val_accuracy,
    )
    write_manifest(f"{args.out}.manifest.txt", manifest)
    print(
        f"trained {args.modality} classifier; held-out accuracy "
        f"{model.val_accuracy:.3f}; saved {args.out}"
    )
    return 0


def _cmd_sample(args) -> int:
    model, _ = _load_model(args.ckpt, "denoiser")
    cat = _category_arg(args.modality, args.category)
    schedule = _schedule()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.n):
        rng = make_rng(args.seed, stream=i)
        canvas = sample_single(model, cat, args.gamma, args.steps, schedule, rng)
        write_pgm(out / f"sample_{i:04d}.pgm", canvas)
        if args.modality == "audio":
            _emit_audio(canvas, out / f"sample_{i:04d}.wav", rng, args.vocoder_iters)
    manifest = _base_manifest("sample")
    manifest.update(_schedule_manifest(schedule))
    manifest.update(
        modality=args.modality, category=args.category, n=args.n, seed=args.seed,
        gamma=args.gamma, steps=args.steps, vocoder_iters=args.vocoder_iters,
        checkpoint_digest=checkpoint_digest(args.ckpt),
    )
    write_manifest(out / "manifest.txt", manifest)
    print(f"wrote {args.n} {args.modality} samples to {out}")
    return 0


_COMPOSE_DEFAULTS = {
    "gamma_a": 10.0, "gamma_v": 10.0, "t_a": 1.0, "t_v": 0.9,
    "steps": 100, "sigma": 0.0, "seed": 0,
}


def _cmd_compose(args) -> int:
    merged = _merge_config(
        _COMPOSE_DEFAULTS, args.config,
        {
            "gamma_a": args.gamma_a, "gamma_v": args.gamma_v, "t_a": args.t_a,
            "t_v": args.t_v, "steps": args.steps, "sigma": args.sigma,
            "seed": args.seed,
        },
    )
    config = CompositionConfig(
        gamma_a=merged["gamma_a"], gamma_v=merged["gamma_v"],
        t_a=merged["t_a"], t_v=merged["t_v"], inference_steps=merged["steps"],
        sigma=merged["sigma"], seed=merged["seed"],
    )
    model_a, _ = _load_model(args.audio_ckpt, "denoiser")
    model_v, _ = _load_model(args.image_ckpt, "denoiser")
    cat_a = _category_arg("audio", args.audio_category)
    cat_v = _category_arg("image", args.image_category)
    schedule = _schedule()
    rng = make_rng(config.seed)
    canvas, diags = sample_composed(
        model_a, model_v, cat_a, cat_v, config, schedule, rng
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_pgm(out / "canvas.pgm", canvas)
    _emit_audio(canvas, out / "audio.wav", rng, args.vocoder_iters)
    write_trace(out / "trace.txt", DIAGNOSTIC_COLUMNS, [d.as_row() for d in diags])
    manifest = _base_manifest("compose")
    manifest.update(merged)
    manifest.update(_schedule_manifest(schedule))
    manifest.update(
        audio_category=args.audio_category, image_category=args.image_category,
        audio_checkpoint_digest=checkpoint_digest(args.audio_ckpt),
        image_checkpoint_digest=checkpoint_digest(args.image_ckpt),
        vocoder_iters=args.vocoder_iters,
        sample_rate=DEFAULT_AUDIO_SPEC.sample_rate,
    )
    write_manifest(out / "manifest.txt", manifest)
    print(f"composed '{args.audio_category}' x '{args.image_category}' into {out}")
    return 0


def _cmd_imprint(args) -> int:
    rho = ImprintConfig(rho=args.rho).rho
    model_a, _ = _load_model(args.audio_ckpt, "denoiser")
    model_v, _ = _load_model(args.image_ckpt, "denoiser")
    cat_a = _category_arg("audio", args.audio_category)
    cat_v = _category_arg("image", args.image_category)
    config = CompositionConfig(
        gamma_a=args.gamma, gamma_v=args.gamma, inference_steps=args.steps,
        seed=args.seed,
    )
    schedule = _schedule()
    rng = make_rng(args.seed)
    canvas = imprint_pipeline(
        cat_a, cat_v, rho, (model_a, model_v), config, schedule, rng
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_pgm(out / "canvas.pgm", canvas)
    _emit_audio(canvas, out / "audio.wav", rng, args.vocoder_iters)
    manifest = _base_manifest("imprint")
    manifest.update(_schedule_manifest(schedule))
    manifest.update(
        audio_category=args.audio_category, image_category=args.image_category,
        rho=rho, gamma=args.gamma, steps=args.steps, seed=args.seed,
        vocoder_iters=args.vocoder_iters,
        audio_checkpoint_digest=checkpoint_digest(args.audio_ckpt),
        image_checkpoint_digest=checkpoint_digest(args.image_ckpt),
    )
    write_manifest(out / "manifest.txt", manifest)
    print(f"imprinted '{args.image_category}' onto '{args.audio_category}' in {out}")
    return 0


def _cmd_sds(args) -> int:
    config = SdsConfig(
        lambda_sds=args.lambda_sds, steps=args.steps,
        audio_only_warmup_steps=args.warmup, guidance_a=args.guidance_a,
        guidance_v=args.guidance_v, seed=args.seed,
    )
    model_a, _ = _load_model(args.audio_ckpt, "denoiser")
    model_v, _ = _load_model(args.image_ckpt, "denoiser")
    cat_a = _category_arg("audio", args.audio_category)
    cat_v = _category_arg("image", args.image_category)
    schedule = _schedule()
    rng = make_rng(config.seed)
    canvas, trace = sds_optimize(
        cat_a, cat_v, config, (model_a, model_v), schedule, rng
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_pgm(out / "canvas.pgm", canvas)
    _emit_audio(canvas, out / "audio.wav", rng, args.vocoder_iters)
    write_trace(
        out / "trace.txt", ("step", "grad_norm_a", "grad_norm_v"),
        [(i, float(row[0]), float(row[1])) for i, row in enumerate(trace)],
    )
    manifest = _base_manifest("sds")
    manifest.update(_schedule_manifest(schedule))
    manifest.update(
        audio_category=args.audio_category, image_category=args.image_category,
        lambda_sds=config.lambda_sds, steps=config.steps,
        warmup=config.audio_only_warmup_steps, guidance_a=config.guidance_a,
        guidance_v=config.guidance_v, seed=config.seed,
        vocoder_iters=args.vocoder_iters,
        audio_checkpoint_digest=checkpoint_digest(args.audio_ckpt),
        image_checkpoint_digest=checkpoint_digest(args.image_ckpt),
    )
    write_manifest(out / "manifest.txt", manifest)
    print(f"distilled '{args.audio_category}' x '{args.image_category}' into {out}")
    return 0


def _cmd_colorize(args) -> int:
    gray = read_pgm(args.gray)
    model, _ = _load_model(args.color_ckpt, "denoiser")
    cat = None if args.category is None else _category_arg("image", args.category)
    schedule = _schedule()
    rng = make_rng(args.seed)
    canvas = colorize(model, gray, args.steps, args.gamma, cat, schedule, rng)
    write_ppm(args.out, canvas)
    manifest = _base_manifest("colorize")
    manifest.update(_schedule_manifest(schedule))
    manifest.update(
        gray=args.gray, category=args.category or "", gamma=args.gamma,
        steps=args.steps, seed=args.seed,
        checkpoint_digest=checkpoint_digest(args.color_ckpt),
    )
    write_manifest(f"{args.out}.manifest.txt", manifest)
    print(f"colorized {args.gray} -> {args.out}")
    return 0


def _cmd_vocode(args) -> int:
    canvas = read_pgm(args.canvas)
    rng = make_rng(args.seed)
    wave, trace = vocode(canvas, DEFAULT_AUDIO_SPEC, rng, args.iters)
    write_wav(args.out, wave)
    if args.trace:
        write_trace(
            args.trace, ("iter", "value"),
            [(i, float(v)) for i, v in enumerate(trace)],
        )
    print(
        f"wrote {args.out} ({wave.duration:.2f} s, "
        f"final spectral convergence {trace[-1]:.4f})"
    )
    return 0


def _cmd_cycle_check(args) -> int:
    canvas = read_pgm(args.canvas)
    rng = make_rng(args.seed)
    _, _, err = cycle_check(canvas, DEFAULT_AUDIO_SPEC, rng, args.iters)
    if not np.isfinite(err):
        raise NumericError(f"cycle error is not finite: {err}")
    print(f"canvas={args.canvas}")
    print(f"n_iter={args.iters}")
    print(f"mean_abs_error={err!r}")
    return 0


def _cmd_eval(args) -> int:
    classifier, extra = _load_model(args.classifier, "classifier")
    ref = _load_canvas_dir(args.ref)
    gen = _load_canvas_dir(args.gen)
    fd = frechet_feature_distance(
        feature_matrix(classifier, ref), feature_matrix(classifier, gen)
    )
    rows = [("frechet_feature_distance", fd, "", "")]
    if args.category is not None:
        modality = extra.get("modality") or args.modality
        if modality is None:
            raise ParameterError(
                "--modality is required when the classifier checkpoint "
                "does not record one"
            )
        score = alignment_score(
            classifier, gen, _category_arg(modality, args.category)
        )
        rows.append(
            ("alignment_score", score.mean, score.ci_low, score.ci_high)
        )
    width = max(len(r[0]) for r in rows)
    lines = [f"{'metric':<{width}}  {'value':>12}  {'ci_low':>10}  {'ci_high':>10}"]
    for name, value, lo, hi in rows:
        lo_s = f"{lo:>10.4f}" if lo != "" else " " * 10
        hi_s = f"{hi:>10.4f}" if hi != "" else " " * 10
        lines.append(f"{name:<{width}}  {value:>12.4f}  {lo_s}  {hi_s}")
    table = "\n".join(lines)
    print(table)
    if args.csv:
        write_csv(
            args.csv, ("metric", "value", "ci_low", "ci_high"),
            [[name, value, lo, hi] for name, value, lo, hi in rows],
        )
    return 0


def _cmd_ablate(args) -> int:
    model_a, _ = _load_model(args.audio_ckpt, "denoiser")
    model_v, _ = _load_model(args.image_ckpt, "denoiser")
    clf_a, _ = _load_model(args.audio_classifier, "classifier")
    clf_v, _ = _load_model(args.image_classifier, "classifier")
    cat_a = _category_arg("audio", args.audio_category)
    cat_v = _category_arg("image", args.image_category)
    values = (
        GUIDANCE_AXIS_VALUES if args.axis == "guidance" else WARM_START_AXIS_VALUES
    )
    schedule = _schedule()
    rows = ablation_sweep(
        args.axis, values, args.n, (model_a, model_v), (clf_a, clf_v),
        cat_a, cat_v, schedule, make_rng(args.seed),
        base_config=CompositionConfig(inference_steps=args.steps),
    )
    text = sweep_table_text(rows)
    print(text, end="")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "table.txt", "w", encoding="ascii") as f:
        f.write(text)
    header, csv_rows = sweep_csv_rows(rows)
    write_csv(out / "table.csv", header, csv_rows)
    manifest = _base_manifest("ablate")
    manifest.update(
        axis=args.axis, n_per_cell=args.n, seed=args.seed, steps=args.steps,
        audio_category=args.audio_category, image_category=args.image_category,
        audio_checkpoint_digest=checkpoint_digest(args.audio_ckpt),
        image_checkpoint_digest=checkpoint_digest(args.image_ckpt),
    )
    write_manifest(out / "manifest.txt", manifest)
    return 0


# ---------------------------------------------------------------------------
# analytic verification suite


def _verify_score_oracle() -> None:
    rng = make_rng(7, stream=1)
    schedule = _schedule()
    worst = 0.0
    for _ in range(40):
        k = int(rng.integers(1, 4))
        dim = int(rng.integers(1, 4))
        w = rng.random(k) + 0.1
        gmm = GaussianMixture(w / w.sum(), rng.normal(0, 2, (k, dim)),
                              rng.random(k) + 0.5)
        t = int(rng.integers(1, schedule.T + 1))
        noised = gmm.noised(float(schedule.alpha_bar[t]))
        for _ in range(5):
            x = rng.normal(0, 2, dim)
            analytic = noised.score(x)
            h = 1e-5
            for axis in range(dim):
                e = np.zeros(dim)
                e[axis] = h
                fd = (noised.log_density(x + e) - noised.log_density(x - e)) / (2 * h)
                rel = abs(fd - analytic[axis]) / (abs(fd) + abs(analytic[axis]) + 1e-8)
                worst = max(worst, rel)
    if worst >= 1e-5:
        raise AssertionError(f"max relative score error {worst:.3e} >= 1e-5")


def _verify_single_gaussian_identity() -> None:
    schedule = _schedule()
    gmm = GaussianMixture(np.array([1.0]), np.zeros((1, 2)), np.array([1.0]))
    rng = make_rng(7, stream=2)
    x = rng.normal(0, 2, (50, 2))
    for t in (1, 250, 999):
        ab = float(schedule.alpha_bar[t])
        pred = GmmNoisePredictor(gmm, schedule).predict(x, None, t)
        expect = np.sqrt(1.0 - ab) * x
        if np.max(np.abs(pred - expect)) >= 1e-12:
            raise AssertionError(f"standard-normal predictor identity broken at t={t}")


def _verify_product_quadrature() -> None:
    rng = make_rng(7, stream=3)
    a = GaussianMixture(np.array([0.3, 0.7]), np.array([[-1.5], [2.0]]),
                        np.array([0.8, 1.3]))
    b = GaussianMixture(np.array([0.6, 0.4]), np.array([[0.5], [-2.5]]),
                        np.array([1.1, 0.6]))
    prod = gmm_product(a, b)
    grid = np.linspace(-12.0, 12.0, 9601)[:, None]
    raw = np.exp(a.log_density(grid) + b.log_density(grid))
    dx = grid[1, 0] - grid[0, 0]
    z = float(((raw[:-1] + raw[1:]) * 0.5).sum() * dx)
    probes = rng.uniform(-4.0, 4.0, (100, 1))
    dens_exact = np.exp(prod.log_density(probes))
    dens_quad = np.exp(a.log_density(probes) + b.log_density(probes)) / z
    rel = np.abs(dens_exact - dens_quad) / (np.abs(dens_quad) + 1e-300)
    if rel.max() >= 1e-6:
        raise AssertionError(f"product density off by rel {rel.max():.3e}")


def _verify_sampling_moments() -> None:
    rng = make_rng(7, stream=4)
    gmm = GaussianMixture(np.array([0.5, 0.5]), np.array([[-3.0], [3.0]]),
                          np.array([1.0, 1.0]))
    s = gmm.sample(100000, rng)
    frac = float((s > 0).mean())
    if abs(frac - 0.5) > 0.02:
        raise AssertionError(f"component occupancy {frac:.3f} outside 0.5 +/- 0.02")


def _verify_ddim_identity() -> None:
    schedule = _schedule()
    rng = make_rng(7, stream=5)
    from .sampler import ddim_step

    x0 = rng.normal(0, 1, (4, 3))
    eps = rng.standard_normal(x0.shape)
    worst = 0.0
    for t, t_prev in ((1000, 900), (900, 450), (450, 1), (1000, 1)):
        x_t = forward_diffuse(x0, t, eps, schedule)
        stepped = ddim_step(x_t, eps, t, t_prev, schedule)
        target = forward_diffuse(x0, t_prev, eps, schedule)
        worst = max(worst, float(np.max(np.abs(stepped - target))))
    if worst >= 1e-10:
        raise AssertionError(f"DDIM oracle-noise identity off by {worst:.3e}")


def _verify_composition() -> None:
    schedule = _schedule()
    gmm_l = GaussianMixture(np.array([1.0]), np.array([[-2.0]]), np.array([1.0]))
    gmm_r = GaussianMixture(np.array([1.0]), np.array([[2.0]]), np.array([1.0]))
    pred_l = GmmNoisePredictor(gmm_l, schedule)
    pred_r = GmmNoisePredictor(gmm_r, schedule)
    x, _ = reverse_process(
        pred_l, None, 1.0, 1.0, pred_r, None, 1.0, 1.0,
        (4000, 1), 100, 0.0, schedule, make_rng(7, stream=6),
    )
    mean, var = float(x.mean()), float(x.var())
    if abs(mean) > 0.08:
        raise AssertionError(f"composed mean {mean:.4f} outside +/- 0.08")
    if abs(var - 1.0) > 0.12:
        raise AssertionError(f"composed variance {var:.4f} outside 1 +/- 0.12")


def _verify_self_composition() -> None:
    schedule = _schedule()
    gmm = GaussianMixture(np.array([0.5, 0.5]), np.array([[-2.0], [2.0]]),
                          np.array([1.0, 1.0]))
    pred = GmmNoisePredictor(gmm, schedule)
    composed, _ = reverse_process(
        pred, None, 1.0, 1.0, pred, None, 1.0, 1.0,
        (64, 1), 50, 0.0, schedule, make_rng(7, stream=7),
    )
    single, _ = reverse_process(
        pred, None, 1.0, 1.0, None, None, 0.0, 0.0,
        (64, 1), 50, 0.0, schedule, make_rng(7, stream=7),
    )
    if composed.tobytes() != single.tobytes():
        raise AssertionError("self-composition is not bitwise identical")


_GMM_CHECKS = (
    ("score matches finite-difference log-density", _verify_score_oracle),
    ("standard-normal predictor closed form", _verify_single_gaussian_identity),
    ("product mixture matches quadrature", _verify_product_quadrature),
    ("mixture sampling occupancy", _verify_sampling_moments),
    ("DDIM reconstructs oracle-noise trajectory", _verify_ddim_identity),
    ("composed sampling matches averaged-score dynamics", _verify_composition),
    ("self-composition is bitwise single-model sampling", _verify_self_composition),
)


def _cmd_verify_gmm(args) -> int:
    failures = 0
    for name, check in _GMM_CHECKS:
        try:
            check()
        except AssertionError as exc:
            failures += 1
            print(f"FAIL - {name}: {exc}")
        else:
            print(f"ok - {name}")
    if failures:
        print(f"{failures} of {len(_GMM_CHECKS)} checks failed")
        return 2
    print(f"all {len(_GMM_CHECKS)} checks passed")
    return 0


# ---------------------------------------------------------------------------
# parser


def _build_parser() -> _Parser:
    parser = _Parser(prog="soundglyph", description=__doc__)
    parser.add_argument("--version", action="version", version=f"soundglyph {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="render a labeled toy dataset")
    p.add_argument("--modality", choices=("image", "audio"), required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train a denoiser on a dataset directory")
    p.add_argument("--modality", choices=("image", "audio"), required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("train-classifier", help="train a category classifier")
    p.add_argument("--modality", choices=("image", "audio"), required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_classifier)

    p = sub.add_parser("sample", help="draw single-modality samples")
    p.add_argument("--modality", choices=("image", "audio"), required=True)
    p.add_argument("--category", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gamma", type=float, default=10.0)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--vocoder-iters", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("compose", help="cross-modal composed sampling")
    p.add_argument("--audio-category", required=True)
    p.add_argument("--image-category", required=True)
    p.add_argument("--audio-ckpt", required=True)
    p.add_argument("--image-ckpt", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--gamma-a", type=float, default=None)
    p.add_argument("--gamma-v", type=float, default=None)
    p.add_argument("--t-a", type=float, default=None)
    p.add_argument("--t-v", type=float, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--vocoder-iters", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_compose)

    p = sub.add_parser("imprint", help="independent samples + energy mask baseline")
    p.add_argument("--audio-category", required=True)
    p.add_argument("--image-category", required=True)
    p.add_argument("--audio-ckpt", required=True)
    p.add_argument("--image-ckpt", required=True)
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--gamma", type=float, default=10.0)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vocoder-iters", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_imprint)

    p = sub.add_parser("sds", help="score-distillation baseline")
    p.add_argument("--audio-category", required=True)
    p.add_argument("--image-category", required=True)
    p.add_argument("--audio-ckpt", required=True)
    p.add_argument("--image-ckpt", required=True)
    p.add_argument("--lambda-sds", type=float, default=0.4)
    p.add_argument("--steps", type=int, default=5000)
    p.add_argument("--warmup", type=int, default=500)
    p.add_argument("--guidance-a", type=float, default=10.0)
    p.add_argument("--guidance-v", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vocoder-iters", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sds)

    p = sub.add_parser("colorize", help="sample a color canvas locked to a grayscale")
    p.add_argument("--gray", required=True)
    p.add_argument("--color-ckpt", required=True)
    p.add_argument("--category", default=None)
    p.add_argument("--gamma", type=float, default=10.0)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_colorize)

    p = sub.add_parser("vocode", help="canvas -> waveform via phase retrieval")
    p.add_argument("--canvas", required=True)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_vocode)

    p = sub.add_parser("cycle-check", help="vocode, re-encode, report the error")
    p.add_argument("--canvas", required=True)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_cycle_check)

    p = sub.add_parser("eval", help="score generated canvases against a reference set")
    p.add_argument("--ref", required=True)
    p.add_argument("--gen", required=True)
    p.add_argument("--classifier", required=True)
    p.add_argument("--category", default=None)
    p.add_argument("--modality", choices=("image", "audio"), default=None)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ablate", help="guidance / warm-start sweep")
    p.add_argument("--axis", choices=("guidance", "warm_start"), required=True)
    p.add_argument("--audio-ckpt", required=True)
    p.add_argument("--image-ckpt", required=True)
    p.add_argument("--audio-classifier", required=True)
    p.add_argument("--image-classifier", required=True)
    p.add_argument("--audio-category", default="harmonic-stack")
    p.add_argument("--image-category", default="circle")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("verify-gmm", help="run the analytic oracle suite")
    p.set_defaults(func=_cmd_verify_gmm)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        code = exc.code
        return int(code) if code is not None else 0
    except _USAGE_ERRORS as exc:
        sys.stderr.write(f"soundglyph: error: {exc}\n")
        return 1
    except _RUNTIME_ERRORS as exc:
        sys.stderr.write(f"soundglyph: error: {exc}\n")
        return 2
    except OSError as exc:
        sys.stderr.write(f"soundglyph: error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
