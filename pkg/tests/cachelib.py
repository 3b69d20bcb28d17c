"""Load-or-train cache for the expensive acceptance-test fixtures.

Training the two 20000-step denoisers takes hours on one core, so the test
suite and scripts/populate_acceptance_cache.py both resolve trained models
through this module: an artifact is loaded from .cache/acceptance/ when its
config digest matches, and trained (then saved) otherwise. The digest covers
every input that affects the result — dataset recipe, training config, and
noise schedule — so a stale cache can never satisfy a changed configuration.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from soundglyph.checkpoint import load_checkpoint, save_checkpoint
from soundglyph.core import (
    DEFAULT_BETA_END,
    DEFAULT_BETA_START,
    DEFAULT_T,
    make_linear_schedule,
    make_rng,
)
from soundglyph.datagen import Dataset, make_dataset
from soundglyph.denoiser import (
    ClassifierTrainConfig,
    TrainConfig,
    train_classifier,
    train_denoiser,
)

CACHE_DIR = Path(__file__).resolve().parents[1] / ".cache" / "acceptance"
DATASET_N = 512
DATA_SEEDS = {"image": 101, "audio": 102}

_SCHEDULE = {"T": DEFAULT_T, "beta_start": DEFAULT_BETA_START, "beta_end": DEFAULT_BETA_END}


def _digest(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def dataset_for(modality: str) -> Dataset:
    """The canonical acceptance dataset for a modality (deterministic)."""
    return make_dataset(modality, DATASET_N, make_rng(DATA_SEEDS[modality]))


def _denoiser_payload(modality: str) -> dict:
    return {
        "kind": "denoiser",
        "modality": modality,
        "dataset_n": DATASET_N,
        "data_seed": DATA_SEEDS[modality],
        "train": asdict(TrainConfig()),
        "schedule": _SCHEDULE,
    }


def _classifier_payload(modality: str) -> dict:
    return {
        "kind": "classifier",
        "modality": modality,
        "dataset_n": DATASET_N,
        "data_seed": DATA_SEEDS[modality],
        "train": asdict(ClassifierTrainConfig()),
    }


def denoiser_path(modality: str) -> Path:
    return CACHE_DIR / f"denoiser-{modality}-{_digest(_denoiser_payload(modality))}.ckpt"


def classifier_path(modality: str) -> Path:
    return CACHE_DIR / f"classifier-{modality}-{_digest(_classifier_payload(modality))}.ckpt"


def _loss_path(ckpt: Path) -> Path:
    return ckpt.with_suffix(".loss.npy")


def ensure_denoiser(modality: str, progress=None):
    """Returns (model, losses, extra); trains and caches on a miss."""
    path = denoiser_path(modality)
    if path.exists():
        model, extra = load_checkpoint(path)
        return model, np.load(_loss_path(path)), extra
    config = TrainConfig()
    dataset = dataset_for(modality)
    t0 = time.perf_counter()
    model, losses = train_denoiser(
        dataset, config, make_linear_schedule(), make_rng(config.seed), progress=progress
    )
    extra = {
        "config": _denoiser_payload(modality),
        "train_seconds": time.perf_counter() - t0,
    }
    CACHE_DIR.mkdir(parents=True, exist_ok=True)
    np.save(_loss_path(path), losses)
    save_checkpoint(path, model, extra=extra)
    return model, losses, extra


def ensure_classifier(modality: str, progress=None):
    """Returns (model, extra); trains and caches on a miss.

    The loaded model gets its `val_accuracy` and `loss_trace` training
    attributes re-attached from the cached artifacts.
    """
    path = classifier_path(modality)
    if path.exists():
        model, extra = load_checkpoint(path)
        model.val_accuracy = extra["val_accuracy"]
        model.loss_trace = np.load(_loss_path(path))
        return model, extra
    config = ClassifierTrainConfig()
    dataset = dataset_for(modality)
    t0 = time.perf_counter()
    model = train_classifier(dataset, config, make_rng(config.seed), progress=progress)
    extra = {
        "config": _classifier_payload(modality),
        "train_seconds": time.perf_counter() - t0,
        "val_accuracy": model.val_accuracy,
    }
    CACHE_DIR.mkdir(parents=True, exist_ok=True)
    np.save(_loss_path(path), model.loss_trace)
    save_checkpoint(path, model, extra=extra)
    return model, extra
