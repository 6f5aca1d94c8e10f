"""Estimator metrics, robustness sweeps, and report emission.

The evaluation MSE is the mean over steps and points of the squared gap
between predicted contact probability and the binary label.  Transition
quality is scored on the any-point contact indicator with a small temporal
tolerance; patch quality as the IoU of thresholded point sets.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import EvalConfig
from .datagen import _cached_scene
from .dataio import read_dataset, read_manifest
from .episodes import Episode
from .errors import ConfigError
from .models.ncf import NcfEstimator
from .tactile import (
    BackgroundLibrary,
    GraspImprint,
    NoiseConfig,
    augment,
    generate_backgrounds,
    render_tactile,
)
from .contact import net_contact_normal

HELD_OUT_BACKGROUND_IDS = list(range(18, 24))


@dataclass
class EvalReport:
    model: str
    variant: str
    dataset: str
    per_trajectory_mse: list
    precision: float
    recall: float
    f1: float
    mean_patch_iou: float
    sweep: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    seed: int = 0

    @property
    def mean_mse(self) -> float:
        return float(np.mean(self.per_trajectory_mse))

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["mean_mse"] = self.mean_mse
        return d


def eval_mse(pred: np.ndarray, labels: np.ndarray) -> float:
    """Mean over steps and points of (p - label)^2 for one trajectory."""
    if pred.shape != labels.shape:
        raise ConfigError(f"prediction {pred.shape} does not match labels {labels.shape}")
    return float(np.mean((pred.astype(np.float64) - labels.astype(np.float64)) ** 2))


def _events(indicator: np.ndarray) -> list[int]:
    changes = np.flatnonzero(np.diff(indicator.astype(np.int8)) != 0)
    return [int(t) + 1 for t in changes]


def transition_f1(
    pred_series: np.ndarray,
    label_series: np.ndarray,
    prob_thresh: float = 0.5,
    tol_steps: int = 2,
) -> tuple[float, float, float]:
    """Precision/recall/F1 of any-point contact transitions.

    Events are sign changes of the any-point indicator; a predicted event
    within +/- tol_steps of an unmatched true event counts as a true positive
    (greedy one-to-one matching in time order).
    """
    if len(pred_series) != len(label_series):
        raise ConfigError("series lengths differ")
    pred_events = _events((np.asarray(pred_series) >= prob_thresh).any(axis=1))
    true_events = _events(np.asarray(label_series).astype(bool).any(axis=1))
    tp, matched = 0, [False] * len(true_events)
    for pe in pred_events:
        for j, te in enumerate(true_events):
            if not matched[j] and abs(pe - te) <= tol_steps:
                matched[j] = True
                tp += 1
                break
    precision = tp / len(pred_events) if pred_events else (1.0 if not true_events else 0.0)
    recall = tp / len(true_events) if true_events else 1.0
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1


def patch_iou(pred: np.ndarray, labels: np.ndarray, thresh: float = 0.5) -> float:
    """IoU of {p >= thresh} and {label = 1}; 1.0 when both sets are empty."""
    if pred.shape != labels.shape:
        raise ConfigError("patch shapes differ")
    a = np.asarray(pred) >= thresh
    b = np.asarray(labels).astype(bool)
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


def _transition_counts(pred, labels, thresh, tol):
    pred_events = _events((pred >= thresh).any(axis=1))
    true_events = _events(labels.astype(bool).any(axis=1))
    tp, matched = 0, [False] * len(true_events)
    for pe in pred_events:
        for j, te in enumerate(true_events):
            if not matched[j] and abs(pe - te) <= tol:
                matched[j] = True
                tp += 1
                break
    return tp, len(pred_events), len(true_events)


def rerender_episode(
    episode: Episode,
    backgrounds: BackgroundLibrary,
    background_id: int,
    sigma: float,
    seed: int,
) -> np.ndarray:
    """Re-render an episode's tactile stream under a different sensor/noise.

    Gel states are recomputed from the stored poses and the rebuilt scene, so
    the contact signal is identical; only background and pixel noise change.
    """
    meta = episode.scene_meta
    obj, env = _cached_scene(meta["category"], meta["shape_index"], meta["env_kind"])
    imprint = GraspImprint(obj, obj.grasp_offset)
    bg = backgrounds[background_id]
    noise = NoiseConfig(sigma=sigma) if sigma > 0 else NoiseConfig()
    rng = np.random.default_rng(seed)
    frames = np.empty_like(episode.tactile)
    for t, ee in enumerate(episode.poses):
        obj_pose = ee.compose(obj.grasp_offset)
        world = obj_pose.transform(episode.query_points.points)
        wrench_world = net_contact_normal(episode.labels[t], world, env.sdf)
        gel = imprint.gel_state(ee.rotation_matrix().T @ wrench_world)
        frames[t] = render_tactile(gel, bg, noise, int(rng.integers(2**31)))
    return frames


def predict_under_condition(
    est: NcfEstimator,
    episode: Episode,
    backgrounds: BackgroundLibrary,
    split: str,
    sigma: float,
    episode_index: int,
    seed: int,
) -> np.ndarray:
    if split == "train" and sigma == 0.0:
        return est.predict_episode(episode, backgrounds)
    if split == "heldout":
        bg_id = HELD_OUT_BACKGROUND_IDS[episode_index % len(HELD_OUT_BACKGROUND_IDS)]
    else:
        bg_id = episode.scene_meta["background_id"]
    frames = rerender_episode(episode, backgrounds, bg_id, sigma,
                              seed=seed * 100003 + episode_index)
    diffs = frames - backgrounds[bg_id][None]
    latents = est.encode_diffs(diffs)
    from .models.ncf import relative_pose_array

    rel = relative_pose_array(episode.poses)
    obj = est.object_for_meta(episode.scene_meta)
    r = est.descriptor(obj, episode.query_points.points)
    return est.predict_series(latents, rel, r)


def evaluate_model(
    est: NcfEstimator,
    dataset_path,
    cfg: EvalConfig = EvalConfig(),
    model_name: str = "ncf",
    max_episodes: int | None = None,
) -> EvalReport:
    """Clean-condition evaluation over a stored dataset."""
    manifest = read_manifest(dataset_path)
    if manifest["height"] != est.vae.height or manifest["width"] != est.vae.width:
        raise ConfigError("dataset image size does not match the VAE")
    if manifest["T"] != est.cfg.window:
        raise ConfigError("dataset window does not match the model")
    episodes = read_dataset(dataset_path)
    if max_episodes:
        episodes = episodes[:max_episodes]
    backgrounds = generate_backgrounds(manifest["background_seed"])
    mses, ious = [], []
    tp = pred_n = true_n = 0
    for ep in episodes:
        probs = est.predict_episode(ep, backgrounds)
        mses.append(eval_mse(probs, ep.labels))
        a, b, c = _transition_counts(probs, ep.labels, cfg.prob_threshold, cfg.transition_tolerance)
        tp += a
        pred_n += b
        true_n += c
        ious.extend(patch_iou(probs[t], ep.labels[t], cfg.prob_threshold) for t in range(len(ep)))
    precision = tp / pred_n if pred_n else (1.0 if not true_n else 0.0)
    recall = tp / true_n if true_n else 1.0
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return EvalReport(
        model=model_name,
        variant=est.cfg.variant,
        dataset=str(dataset_path),
        per_trajectory_mse=mses,
        precision=precision,
        recall=recall,
        f1=f1,
        mean_patch_iou=float(np.mean(ious)),
        config={"prob_threshold": cfg.prob_threshold,
                "transition_tolerance": cfg.transition_tolerance},
        seed=cfg.seed,
    )


def robustness_sweep(
    models: dict[str, NcfEstimator],
    dataset_path,
    cfg: EvalConfig = EvalConfig(),
    max_episodes: int | None = None,
) -> list[dict]:
    """Sweep (model, sigma, background split) -> mean MSE table."""
    if not models:
        raise ConfigError("sweep needs at least one model")
    manifest = read_manifest(dataset_path)
    episodes = read_dataset(dataset_path)
    if max_episodes:
        episodes = episodes[:max_episodes]
    backgrounds = generate_backgrounds(manifest["background_seed"])
    rows = []
    for name, est in models.items():
        for split in cfg.background_splits:
            for sigma in cfg.sigmas:
                mses = []
                for i, ep in enumerate(episodes):
                    probs = predict_under_condition(est, ep, backgrounds, split, sigma, i, cfg.seed)
                    mses.append(eval_mse(probs, ep.labels))
                rows.append(
                    {
                        "model": name,
                        "variant": est.cfg.variant,
                        "dataset": str(dataset_path),
                        "sigma": sigma,
                        "background_split": split,
                        "mse": float(np.mean(mses)),
                        "seed": cfg.seed,
                    }
                )
    return rows


CSV_COLUMNS = ["model", "variant", "dataset", "sigma", "background_split",
               "mse", "transition_f1", "patch_iou", "seed"]


def render_report(report: EvalReport, out_dir, curves: dict | None = None) -> list[Path]:
    """Emit report.json, metrics.csv, and line plots; returns written paths."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    rpath = out_dir / "report.json"
    rpath.write_text(json.dumps(report.to_dict(), indent=1, sort_keys=True))
    written.append(rpath)

    cpath = out_dir / "metrics.csv"
    with open(cpath, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
        w.writeheader()
        w.writerow(
            {
                "model": report.model,
                "variant": report.variant,
                "dataset": report.dataset,
                "sigma": 0.0,
                "background_split": "train",
                "mse": repr(report.mean_mse),
                "transition_f1": repr(report.f1),
                "patch_iou": repr(report.mean_patch_iou),
                "seed": report.seed,
            }
        )
        for row in report.sweep:
            w.writerow(
                {
                    "model": row["model"],
                    "variant": row["variant"],
                    "dataset": row["dataset"],
                    "sigma": row["sigma"],
                    "background_split": row["background_split"],
                    "mse": repr(row["mse"]),
                    "transition_f1": "",
                    "patch_iou": "",
                    "seed": row["seed"],
                }
            )
    written.append(cpath)

    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(sorted(report.per_trajectory_mse), marker=".")
    ax.set_xlabel("trajectory (sorted)")
    ax.set_ylabel("MSE")
    ax.set_title(f"{report.model}: mean MSE {report.mean_mse:.4f}")
    fig.tight_layout()
    ppath = out_dir / "per_trajectory_mse.png"
    fig.savefig(ppath, dpi=110)
    plt.close(fig)
    written.append(ppath)

    if report.sweep:
        fig, ax = plt.subplots(figsize=(5, 3.2))
        for split in sorted({r["background_split"] for r in report.sweep}):
            rows = sorted((r for r in report.sweep if r["background_split"] == split),
                          key=lambda r: r["sigma"])
            ax.plot([r["sigma"] for r in rows], [r["mse"] for r in rows],
                    marker="o", label=split)
        ax.set_xlabel("pixel noise sigma")
        ax.set_ylabel("mean MSE")
        ax.legend()
        fig.tight_layout()
        spath = out_dir / "robustness_sweep.png"
        fig.savefig(spath, dpi=110)
        plt.close(fig)
        written.append(spath)

    if curves:
        fig, ax = plt.subplots(figsize=(5, 3.2))
        for name, curve in curves.items():
            ax.plot([c["step"] for c in curve], [c["loss"] for c in curve], label=name)
        ax.set_xlabel("step")
        ax.set_ylabel("loss")
        ax.legend()
        fig.tight_layout()
        tpath = out_dir / "training_curves.png"
        fig.savefig(tpath, dpi=110)
        plt.close(fig)
        written.append(tpath)
    return written
