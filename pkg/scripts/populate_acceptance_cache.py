#!/usr/bin/env python3
"""Train and cache every model the acceptance tests need.

Runs the four training jobs (two classifiers, then the two 20000-step
denoisers) through tests/cachelib.py, so the test suite finds them by
config digest. Progress lands in .cache/acceptance/status.json after every
job and every few hundred steps, making long runs observable from outside.

On a single desktop core expect several hours; re-running skips anything
already cached.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

import cachelib


def main() -> int:
    cachelib.CACHE_DIR.mkdir(parents=True, exist_ok=True)
    status_path = cachelib.CACHE_DIR / "status.json"
    status: dict = {"jobs": {}, "started": time.strftime("%Y-%m-%d %H:%M:%S")}

    def flush() -> None:
        status_path.write_text(json.dumps(status, indent=2, sort_keys=True))

    def progress_for(name: str, total: int):
        t0 = time.perf_counter()

        def cb(step: int, loss: float) -> None:
            if step % 200 == 0 or step == total - 1:
                elapsed = time.perf_counter() - t0
                rate = elapsed / (step + 1)
                status["jobs"][name] = {
                    "state": "running",
                    "step": step + 1,
                    "total": total,
                    "loss": round(loss, 6),
                    "elapsed_s": round(elapsed, 1),
                    "eta_s": round(rate * (total - step - 1), 1),
                }
                flush()

        return cb

    jobs = [
        ("classifier-image", lambda: cachelib.ensure_classifier(
            "image", progress=progress_for("classifier-image", 2000))),
        ("classifier-audio", lambda: cachelib.ensure_classifier(
            "audio", progress=progress_for("classifier-audio", 2000))),
        ("denoiser-image", lambda: cachelib.ensure_denoiser(
            "image", progress=progress_for("denoiser-image", 20000))),
        ("denoiser-audio", lambda: cachelib.ensure_denoiser(
            "audio", progress=progress_for("denoiser-audio", 20000))),
    ]
    for name, run in jobs:
        t0 = time.perf_counter()
        print(f"[{time.strftime('%H:%M:%S')}] {name}: start", flush=True)
        result = run()
        extra = result[-1]
        info = {
            "state": "done",
            "seconds": round(time.perf_counter() - t0, 1),
            "train_seconds": round(extra.get("train_seconds", 0.0), 1),
        }
        if "val_accuracy" in extra:
            info["val_accuracy"] = extra["val_accuracy"]
        status["jobs"][name] = info
        flush()
        print(f"[{time.strftime('%H:%M:%S')}] {name}: done {info}", flush=True)
    status["finished"] = time.strftime("%Y-%m-%d %H:%M:%S")
    flush()
    print("cache populated")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
