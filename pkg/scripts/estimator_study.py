#!/usr/bin/env python3
"""Estimator study: generate data, train all three regressor variants over
several seeds, and evaluate them clean and under distribution shift.

Writes everything under --out and drops a summary.json with per-variant,
per-seed MSEs plus the shift table.  Stages are skipped when their outputs
already exist, so the study can resume after interruption.
"""

from __future__ import annotations

import argparse
import json
import time
from dataclasses import replace
from pathlib import Path

import torch

from ncf2.config import DataConfig, EvalConfig, NcfConfig, ShapeAeConfig, VaeConfig
from ncf2.datagen import generate_dataset
from ncf2.evalsuite import evaluate_model, robustness_sweep
from ncf2.models.ncf import NcfEstimator, train_ncf, train_shape_autoencoder, train_vae
from ncf2.scenes import object_from_library

VARIANTS = ("recurrent", "mlp", "transformer")


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--train-episodes", type=int, default=300)
    ap.add_argument("--test-episodes", type=int, default=60)
    ap.add_argument("--n-query", type=int, default=512)
    ap.add_argument("--vae-epochs", type=int, default=12)
    ap.add_argument("--vae-images", type=int, default=5000)
    ap.add_argument("--steps", type=int, default=2500, help="mlp/recurrent training steps")
    ap.add_argument("--steps-transformer", type=int, default=2200)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--eval-episodes", type=int, default=None)
    ap.add_argument("--shift-sigma", type=float, default=0.05)
    ap.add_argument("--threads", type=int, default=2)
    args = ap.parse_args()

    torch.set_num_threads(args.threads)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()

    def log(msg: str) -> None:
        line = f"[{time.time() - t0:8.1f}s] {msg}"
        print(line, flush=True)
        with open(out / "study.log", "a") as f:
            f.write(line + "\n")

    train_dir = out / "train_data"
    test_dir = out / "test_data"
    if not (train_dir / "manifest.json").exists():
        log(f"generating {args.train_episodes} training episodes")
        generate_dataset(DataConfig(episodes=args.train_episodes, n_query=args.n_query),
                         1000, train_dir, workers=1)
    if not (test_dir / "manifest.json").exists():
        log(f"generating {args.test_episodes} held-out-shape test episodes")
        generate_dataset(
            DataConfig(episodes=args.test_episodes, n_query=args.n_query, shape_indices=[4]),
            2000, test_dir, workers=1)

    vae_path = out / "vae.ckpt"
    if not vae_path.exists():
        log("training vae")
        res = train_vae(train_dir, VaeConfig(epochs=args.vae_epochs, max_images=args.vae_images),
                        vae_path)
        log(f"vae val mse {res.final_metric:.5f}")
    shape_path = out / "shape.ckpt"
    if not shape_path.exists():
        log("training shape autoencoder")
        objs = [object_from_library(c, i) for c in ("mug", "bottle", "bowl") for i in range(4)]
        res = train_shape_autoencoder(objs, ShapeAeConfig(), shape_path)
        log(f"shape chamfer {res.final_metric:.6f}")

    summary = {"variants": {}, "elapsed": {}}
    summary_path = out / "summary.json"
    if summary_path.exists():
        summary = json.loads(summary_path.read_text())

    for variant in VARIANTS:
        rec = summary["variants"].setdefault(variant, {})
        for seed in args.seeds:
            key = str(seed)
            if key in rec and "shift_mse" in rec[key]:
                continue
            ckpt = out / f"ncf_{variant}_s{seed}.ckpt"
            steps = args.steps_transformer if variant == "transformer" else args.steps
            if not ckpt.exists():
                log(f"training {variant} seed {seed} ({steps} steps)")
                train_ncf(train_dir, NcfConfig(variant=variant, steps=steps, seed=seed),
                          vae_path, shape_path, ckpt)
            est = NcfEstimator.load(vae_path, shape_path, ckpt)
            log(f"evaluating {variant} seed {seed} clean")
            report = evaluate_model(est, test_dir, EvalConfig(), model_name=ckpt.stem,
                                    max_episodes=args.eval_episodes)
            log(f"  clean mse {report.mean_mse:.5f} f1 {report.f1:.3f} iou {report.mean_patch_iou:.3f}")
            log(f"evaluating {variant} seed {seed} shifted")
            sweep = robustness_sweep(
                {ckpt.stem: est}, test_dir,
                EvalConfig(sigmas=[args.shift_sigma], background_splits=["heldout"], seed=seed),
                max_episodes=args.eval_episodes)
            shift_mse = sweep[0]["mse"]
            log(f"  shifted mse {shift_mse:.5f}")
            rec[key] = {
                "clean_mse": report.mean_mse,
                "clean_f1": report.f1,
                "clean_iou": report.mean_patch_iou,
                "shift_mse": shift_mse,
                "checkpoint": str(ckpt),
            }
            summary["elapsed"][f"{variant}_s{seed}"] = time.time() - t0
            summary_path.write_text(json.dumps(summary, indent=1, sort_keys=True))
    log("study complete")
    summary_path.write_text(json.dumps(summary, indent=1, sort_keys=True))


if __name__ == "__main__":
    main()
