"""Estimator assembly and the three training stages.

Stage order: the tactile VAE and the shape autoencoder are trained first and
stay frozen while any contact regressor trains.  Episode tensors fed to the
regressors use poses expressed relative to the episode's first end-effector
pose, which makes the estimation problem translation invariant.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from ..config import NcfConfig, ShapeAeConfig, VaeConfig
from ..contact import farthest_point_sample
from ..dataio import read_dataset, read_manifest
from ..episodes import Episode
from ..errors import ConfigError, DependencyError
from ..scenes import ObjectModel, object_from_library
from ..tactile import BackgroundLibrary, NoiseConfig, augment, generate_backgrounds, subtract_background
from ..transforms import Pose
from .checkpoint import load_checkpoint, save_checkpoint, state_to_module
from .regressors import NcfModel, bce_loss
from .shape_ae import PointCloudAutoencoder, chamfer_distance
from .vae import TactileVAE, encode_batch, to_tensor, vae_loss


@dataclass
class TrainResult:
    checkpoint_path: Path
    curve: list
    final_metric: float


def relative_pose_array(poses: list[Pose]) -> np.ndarray:
    """(L, 7) pose rows relative to the first pose of the sequence."""
    inv0 = poses[0].inverse()
    return np.stack([inv0.compose(p).as_array() for p in poses]).astype(np.float32)


def window_indices(t: int, T: int) -> np.ndarray:
    """Indices of the T most recent frames at step t, clamped at episode start."""
    return np.clip(np.arange(t - T + 1, t + 1), 0, None)


def dataset_fingerprint(path) -> str:
    return hashlib.sha256((Path(path) / "manifest.json").read_bytes()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# VAE training
# ---------------------------------------------------------------------------

def train_vae(dataset_path, cfg: VaeConfig, out_path) -> TrainResult:
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    manifest = read_manifest(dataset_path)
    episodes = read_dataset(dataset_path)
    backgrounds = generate_backgrounds(manifest["background_seed"])

    frames = []
    for ep in episodes:
        bg_id = ep.scene_meta["background_id"]
        # Bias sampling toward contact frames so the latent carries signal.
        ind = ep.contact_indicator
        keep = np.where(ind | (rng.uniform(size=len(ep)) < 0.5))[0]
        frames.extend((ep.tactile[t], bg_id) for t in keep)
    order = rng.permutation(len(frames))[: cfg.max_images]
    frames = [frames[i] for i in order]
    n_val = max(8, int(cfg.val_fraction * len(frames)))
    val, train = frames[:n_val], frames[n_val:]

    model = TactileVAE(cfg.latent_dim, *frames[0][0].shape[:2])
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    gen = torch.Generator().manual_seed(cfg.seed)
    noise = NoiseConfig(cfg.aug_sigma, cfg.aug_brightness, cfg.aug_shift_px)

    def batch_diffs(items, seeds=None):
        diffs = []
        for k, (img, bg_id) in enumerate(items):
            if seeds is not None:
                img = augment(img, noise, int(seeds[k]))
            diffs.append(subtract_background(img, backgrounds[bg_id]))
        return to_tensor(np.stack(diffs))

    curve = []
    steps_per_epoch = max(1, len(train) // cfg.batch_size)
    step = 0
    for _ in range(cfg.epochs):
        perm = rng.permutation(len(train))
        for b in range(steps_per_epoch):
            idx = perm[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            seeds = rng.integers(2**31, size=len(idx))
            x = batch_diffs([train[i] for i in idx], seeds)
            recon, mu, logvar, _ = model(x, generator=gen)
            loss = vae_loss(x, recon, mu, logvar, cfg.beta)
            if not torch.isfinite(loss):
                raise RuntimeError(f"vae training diverged at step {step}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            if step % 25 == 0:
                curve.append({"step": step, "loss": float(loss.detach())})
            step += 1

    model.eval()
    with torch.no_grad():
        x = batch_diffs(val)
        mu, _ = model.encode(x)
        recon = model.decode(mu)
        val_mse = float(torch.mean((recon - x) ** 2))
    out_path = Path(out_path)
    save_checkpoint(
        out_path,
        "vae",
        {"latent_dim": cfg.latent_dim, "height": model.height, "width": model.width,
         "config": asdict(cfg)},
        dict(model.state_dict()),
        {"curve": curve, "val_mse": val_mse, "dataset": dataset_fingerprint(dataset_path)},
    )
    return TrainResult(out_path, curve, val_mse)


def load_vae(path) -> TactileVAE:
    kind, config, state, _ = load_checkpoint(path)
    if kind != "vae":
        raise ConfigError(f"{path} is a '{kind}' checkpoint, expected 'vae'")
    model = TactileVAE(config["latent_dim"], config["height"], config["width"])
    state_to_module(model, state)
    model.eval()
    return model


# ---------------------------------------------------------------------------
# Shape autoencoder training
# ---------------------------------------------------------------------------

def train_shape_autoencoder(objects: list[ObjectModel], cfg: ShapeAeConfig, out_path) -> TrainResult:
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    model = PointCloudAutoencoder(cfg.latent_dim, cfg.cloud_points)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    clouds = [o.surface for o in objects]
    curve = []
    for step in range(cfg.steps):
        picks = rng.integers(len(clouds), size=min(cfg.batch_size, len(clouds)))
        batch = np.stack(
            [clouds[i][rng.choice(len(clouds[i]), cfg.cloud_points, replace=False)] for i in picks]
        ).astype(np.float32)
        x = torch.from_numpy(batch)
        recon, _ = model(x)
        loss = chamfer_distance(recon, x)
        if not torch.isfinite(loss):
            raise RuntimeError(f"shape autoencoder diverged at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        if step % 25 == 0:
            curve.append({"step": step, "loss": float(loss.detach())})
    model.eval()
    with torch.no_grad():
        batch = np.stack([c[: cfg.cloud_points] for c in clouds]).astype(np.float32)
        recon, _ = model(torch.from_numpy(batch))
        final = float(chamfer_distance(recon, torch.from_numpy(batch)))
    out_path = Path(out_path)
    save_checkpoint(
        out_path,
        "shape_ae",
        {"latent_dim": cfg.latent_dim, "cloud_points": cfg.cloud_points, "config": asdict(cfg)},
        dict(model.state_dict()),
        {"curve": curve, "chamfer": final},
    )
    return TrainResult(out_path, curve, final)


def load_shape_ae(path) -> PointCloudAutoencoder:
    kind, config, state, _ = load_checkpoint(path)
    if kind != "shape_ae":
        raise ConfigError(f"{path} is a '{kind}' checkpoint, expected 'shape_ae'")
    model = PointCloudAutoencoder(config["latent_dim"], config["cloud_points"])
    state_to_module(model, state)
    model.eval()
    return model


# ---------------------------------------------------------------------------
# Estimator assembly
# ---------------------------------------------------------------------------

class NcfEstimator:
    """Frozen VAE + frozen shape latent + one trained contact regressor."""

    def __init__(self, vae: TactileVAE, shape_ae: PointCloudAutoencoder, model: NcfModel,
                 cfg: NcfConfig):
        self.vae = vae.eval()
        self.shape_ae = shape_ae.eval()
        self.model = model.eval()
        self.cfg = cfg
        self._shape_cache: dict = {}
        self._object_cache: dict = {}

    @staticmethod
    def load(vae_path, shape_path, ncf_path) -> "NcfEstimator":
        vae = load_vae(vae_path)
        shape_ae = load_shape_ae(shape_path)
        kind, config, state, _ = load_checkpoint(ncf_path)
        if kind != "ncf":
            raise ConfigError(f"{ncf_path} is a '{kind}' checkpoint, expected 'ncf'")
        cfg = NcfConfig(**config["ncf"])
        model = NcfModel(cfg, d_z=config["d_z"], d_r=config["d_r"])
        state_to_module(model, state)
        return NcfEstimator(vae, shape_ae, model, cfg)

    @property
    def d_r(self) -> int:
        return 3 + self.shape_ae.latent_dim

    def shape_latent(self, obj: ObjectModel) -> np.ndarray:
        key = (obj.category, json.dumps(obj.shape_params, sort_keys=True))
        if key not in self._shape_cache:
            cloud = farthest_point_sample(obj.surface, self.shape_ae.out_points, seed=0).points
            with torch.no_grad():
                z = self.shape_ae.encode(torch.from_numpy(cloud.astype(np.float32))[None])[0]
            self._shape_cache[key] = z.numpy()
        return self._shape_cache[key]

    def descriptor(self, obj: ObjectModel, query_points: np.ndarray) -> np.ndarray:
        """Per-point feature: grasp-frame coordinates + the global shape latent."""
        latent = self.shape_latent(obj)
        n = len(query_points)
        return np.concatenate(
            [query_points.astype(np.float32), np.tile(latent, (n, 1))], axis=1
        ).astype(np.float32)

    def object_for_meta(self, meta: dict) -> ObjectModel:
        key = (meta["category"], meta["shape_index"])
        if key not in self._object_cache:
            self._object_cache[key] = object_from_library(*key)
        return self._object_cache[key]

    def encode_diffs(self, diffs: np.ndarray) -> np.ndarray:
        return encode_batch(self.vae, diffs)

    def predict_episode(self, episode: Episode, backgrounds: BackgroundLibrary,
                        chunk_steps: int = 8) -> np.ndarray:
        """Contact probabilities (L, n) for a stored episode."""
        bg = backgrounds[episode.scene_meta["background_id"]]
        diffs = episode.tactile - bg[None]
        latents = self.encode_diffs(diffs)
        rel = relative_pose_array(episode.poses)
        obj = self.object_for_meta(episode.scene_meta)
        r = self.descriptor(obj, episode.query_points.points)
        return self.predict_series(latents, rel, r, chunk_steps)

    def predict_series(self, latents: np.ndarray, rel_poses: np.ndarray, r: np.ndarray,
                       chunk_steps: int = 8) -> np.ndarray:
        L = len(latents)
        T = self.cfg.window
        n = len(r)
        idx = np.stack([window_indices(t, T) for t in range(L)])  # (L, T)
        z_seq = latents[idx]  # (L, T, d_z)
        p_seq = rel_poses[idx]  # (L, T, 7)
        out = np.empty((L, n), dtype=np.float32)
        rt = torch.from_numpy(np.tile(r[None], (1, 1, 1)))
        with torch.no_grad():
            if self.cfg.variant == "recurrent":
                prev = torch.zeros(1, n)
                for t in range(L):
                    probs = self.model(
                        torch.from_numpy(z_seq[t : t + 1]),
                        torch.from_numpy(p_seq[t : t + 1]),
                        rt,
                        prev,
                    )
                    out[t] = probs[0].numpy()
                    prev = probs
            else:
                for s in range(0, L, chunk_steps):
                    e = min(L, s + chunk_steps)
                    probs = self.model(
                        torch.from_numpy(z_seq[s:e]),
                        torch.from_numpy(p_seq[s:e]),
                        torch.from_numpy(np.tile(r[None], (e - s, 1, 1))),
                    )
                    out[s:e] = probs.numpy()
        return out


# ---------------------------------------------------------------------------
# NCF training
# ---------------------------------------------------------------------------

def _episode_tensors(episodes, vae, shape_ae, backgrounds, cfg: NcfConfig):
    """Precompute latents, relative poses, and descriptors (VAE/shape frozen)."""
    est = NcfEstimator(vae, shape_ae, NcfModel(cfg, d_z=vae.latent_dim,
                                               d_r=3 + shape_ae.latent_dim), cfg)
    data = []
    for ep in episodes:
        bg = backgrounds[ep.scene_meta["background_id"]]
        latents = est.encode_diffs(ep.tactile - bg[None])
        rel = relative_pose_array(ep.poses)
        obj = est.object_for_meta(ep.scene_meta)
        r = est.descriptor(obj, ep.query_points.points)
        data.append({"z": latents, "poses": rel, "r": r, "labels": ep.labels})
    return data


def train_ncf(dataset_path, cfg: NcfConfig, vae_path, shape_path, out_path) -> TrainResult:
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    vae = load_vae(vae_path)
    shape_ae = load_shape_ae(shape_path)
    manifest = read_manifest(dataset_path)
    episodes = read_dataset(dataset_path)
    backgrounds = generate_backgrounds(manifest["background_seed"])

    data = _episode_tensors(episodes, vae, shape_ae, backgrounds, cfg)
    n_val = max(2, int(cfg.val_fraction * len(data)))
    order = rng.permutation(len(data))
    val_set = [data[i] for i in order[:n_val]]
    train_set = [data[i] for i in order[n_val:]]

    total = sum(d["labels"].size for d in train_set)
    pos = sum(int(d["labels"].sum()) for d in train_set)
    pos_weight = cfg.pos_weight if cfg.pos_weight > 0 else (total - pos) / max(pos, 1)

    d_z = vae.latent_dim
    d_r = 3 + shape_ae.latent_dim
    model = NcfModel(cfg, d_z=d_z, d_r=d_r)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    T, B, P = cfg.window, cfg.batch_windows, cfg.points_per_window

    # Index of all (episode, t) windows, sampled uniformly.
    windows = [(i, t) for i, d in enumerate(train_set) for t in range(len(d["z"]))]
    windows = np.array(windows)

    def make_batch(batch_windows):
        z = np.empty((len(batch_windows), T, d_z), dtype=np.float32)
        p = np.empty((len(batch_windows), T, 7), dtype=np.float32)
        r = np.empty((len(batch_windows), P, d_r), dtype=np.float32)
        y = np.empty((len(batch_windows), P), dtype=np.float32)
        prev = np.zeros((len(batch_windows), P), dtype=np.float32)
        for k, (i, t) in enumerate(batch_windows):
            d = train_set[i]
            idx = window_indices(t, T)
            z[k] = d["z"][idx]
            p[k] = d["poses"][idx]
            pts = rng.choice(d["r"].shape[0], P, replace=False)
            r[k] = d["r"][pts]
            y[k] = d["labels"][t, pts]
            if cfg.variant == "recurrent" and t > 0:
                prev[k] = d["labels"][t - 1, pts]
        return (torch.from_numpy(z), torch.from_numpy(p), torch.from_numpy(r),
                torch.from_numpy(y), torch.from_numpy(prev))

    curve = []
    model.train()
    for step in range(cfg.steps):
        batch = windows[rng.integers(len(windows), size=B)]
        z, p, r, y, prev = make_batch(batch)
        pred = model(z, p, r, prev if cfg.variant == "recurrent" else None)
        loss = bce_loss(pred, y, pos_weight)
        if not torch.isfinite(loss):
            raise RuntimeError(f"ncf training diverged at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        if step % 25 == 0 or step == cfg.steps - 1:
            curve.append({"step": step, "loss": float(loss.detach())})

    # Validation MSE against binary labels (self-rollout for the recurrent one).
    model.eval()
    est = NcfEstimator(vae, shape_ae, model, cfg)
    errs = []
    for d in val_set[:8]:
        probs = est.predict_series(d["z"], d["poses"], d["r"])
        errs.append(float(np.mean((probs - d["labels"].astype(np.float32)) ** 2)))
    val_mse = float(np.mean(errs))

    out_path = Path(out_path)
    save_checkpoint(
        out_path,
        "ncf",
        {"ncf": asdict(cfg), "d_z": d_z, "d_r": d_r},
        dict(model.state_dict()),
        {"curve": curve, "val_mse": val_mse, "pos_weight": float(pos_weight),
         "dataset": dataset_fingerprint(dataset_path)},
    )
    return TrainResult(out_path, curve, val_mse)
