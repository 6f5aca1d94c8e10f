"""DIGIT-style tactile image synthesis.

The sensor model is deliberately minimal: a gel plane tangent to the object at
the fixed grasp point accumulates an imprint whose footprint comes from the
object's local geometry and whose magnitude scales with the extrinsic load
proxy; tangential load shifts the imprint laterally.  No extrinsic load means
an empty gel, so no-contact frames reproduce the background bitwise.

All images are float32 H x W x 3 in [0, 1], quantized to a dyadic grid
(1/4096 for rendered frames, 1/256 for backgrounds) so that background
subtraction and re-addition are exact in float arithmetic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .scenes import ObjectModel
from .transforms import Pose

IMAGE_GRID = 4096
BACKGROUND_GRID = 256
NUM_BACKGROUNDS = 24


def quantize(img: np.ndarray, grid: int = IMAGE_GRID) -> np.ndarray:
    """Snap to the dyadic grid; exact in float32 since grid is a power of two."""
    return (np.round(np.asarray(img, dtype=np.float32) * grid) / grid).astype(np.float32)


@dataclass(frozen=True)
class TactileConfig:
    height: int = 64
    width: int = 48
    pixel_pitch: float = 0.0005  # meters per pixel on the gel plane
    k_depth: float = 2000.0  # intensity per meter of penetration
    k_shear: float = 30.0  # pixels per unit tangential load
    k_load: float = 1.0  # load units per unit normal wrench
    depth_gain: float = 0.0008  # meters of indentation per unit load
    intensity_clamp: float = 0.6
    channel_weights: tuple[float, float, float] = (0.9, 0.7, 0.5)


@dataclass(frozen=True)
class NoiseConfig:
    sigma: float = 0.0
    brightness: float = 0.0
    max_shift_px: int = 0

    def __post_init__(self):
        if self.sigma < 0 or self.brightness < 0 or self.max_shift_px < 0:
            raise ValueError("noise config values must be non-negative")

    @property
    def enabled(self) -> bool:
        return self.sigma > 0 or self.brightness > 0 or self.max_shift_px > 0


@dataclass
class GelState:
    depth_map: np.ndarray  # (H, W) penetration depths in meters, >= 0
    shear: np.ndarray  # (2,) tangential load proxy
    load: float  # >= 0


@dataclass
class BackgroundLibrary:
    images: list[np.ndarray]
    seed: int

    def __post_init__(self):
        if len(self.images) != NUM_BACKGROUNDS:
            raise ValueError(f"background library needs exactly {NUM_BACKGROUNDS} images")

    def __getitem__(self, sensor_id: int) -> np.ndarray:
        return self.images[sensor_id]

    def save(self, path) -> None:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        index = {"seed": self.seed, "scale": BACKGROUND_GRID, "files": {}}
        for i, img in enumerate(self.images):
            name = f"background_{i:02d}.png"
            arr = np.round(img * BACKGROUND_GRID).astype(np.uint8)
            Image.fromarray(arr, mode="RGB").save(path / name)
            index["files"][str(i)] = name
        (path / "index.json").write_text(json.dumps(index, indent=1))

    @staticmethod
    def load(path) -> "BackgroundLibrary":
        path = Path(path)
        index = json.loads((path / "index.json").read_text())
        scale = index["scale"]
        images = []
        for i in range(len(index["files"])):
            arr = np.asarray(Image.open(path / index["files"][str(i)]), dtype=np.float32)
            images.append((arr / scale).astype(np.float32))
        return BackgroundLibrary(images, index["seed"])


def generate_backgrounds(seed: int, cfg: TactileConfig = TactileConfig()) -> BackgroundLibrary:
    """24 synthetic sensor backgrounds: smooth RGB gradients + vignette + offset.

    Values stay below ~0.45 so imprint deltas never clip, which keeps
    background subtraction exact.
    """
    rng = np.random.default_rng(seed)
    h, w = cfg.height, cfg.width
    yy, xx = np.meshgrid(np.linspace(-1, 1, h), np.linspace(-1, 1, w), indexing="ij")
    vignette = -0.04 * (xx**2 + yy**2)
    images: list[np.ndarray] = []
    for _ in range(200):
        base = rng.uniform(0.16, 0.34, size=3)
        gx = rng.uniform(-0.05, 0.05, size=3)
        gy = rng.uniform(-0.05, 0.05, size=3)
        img = base[None, None, :] + gx * xx[..., None] + gy * yy[..., None] + vignette[..., None]
        img = quantize(np.clip(img, 0.02, 0.45), BACKGROUND_GRID)
        if all(np.abs(img - prev).mean() >= 0.01 for prev in images):
            images.append(img)
        if len(images) == NUM_BACKGROUNDS:
            return BackgroundLibrary(images, seed)
    raise RuntimeError("failed to generate distinct backgrounds")


class GraspImprint:
    """Static imprint geometry for one (object, grasp) pair.

    The object SDF is sampled once on the gel-plane pixel grid expressed in
    the object frame; per-step gel states only rescale and shift that field.
    """

    def __init__(self, obj: ObjectModel, grasp: Pose, cfg: TactileConfig = TactileConfig()):
        self.cfg = cfg
        grasp_point = grasp.inverse().position  # gripper origin in object frame
        h, w = cfg.height, cfg.width
        v = (np.arange(h) - (h - 1) / 2.0) * cfg.pixel_pitch
        u = (np.arange(w) - (w - 1) / 2.0) * cfg.pixel_pitch
        vv, uu = np.meshgrid(v, u, indexing="ij")
        # Gel plane spans the gripper's (y, z) axes; rows follow z, columns y.
        pts = np.stack(
            [np.zeros_like(uu), uu, vv], axis=-1
        ).reshape(-1, 3) + grasp_point
        self.plane_sdf = obj.sdf.sdf(pts).reshape(h, w)

    def gel_state(self, wrench_gripper: np.ndarray) -> GelState:
        """Gel state from a wrench proxy expressed in the gripper frame."""
        w = np.asarray(wrench_gripper, dtype=np.float64).reshape(3)
        load = float(self.cfg.k_load * abs(w[0]))
        shear = np.array([w[1], w[2]])
        depth = np.maximum(0.0, self.cfg.depth_gain * load - self.plane_sdf)
        return GelState(depth_map=depth, shear=shear, load=load)


def make_gel_state(
    obj: ObjectModel, grasp: Pose, wrench_proxy: np.ndarray, cfg: TactileConfig = TactileConfig()
) -> GelState:
    """Gel state for a grasped object under an extrinsic wrench proxy."""
    return GraspImprint(obj, grasp, cfg).gel_state(wrench_proxy)


def render_tactile(
    gel: GelState,
    background: np.ndarray,
    noise_cfg: NoiseConfig = NoiseConfig(),
    seed: int = 0,
    cfg: TactileConfig = TactileConfig(),
) -> np.ndarray:
    """Render one tactile frame: imprint over background, optional noise."""
    if gel.depth_map.shape != background.shape[:2]:
        raise ValueError(
            f"gel {gel.depth_map.shape} does not match background {background.shape[:2]}"
        )
    intensity = np.clip(cfg.k_depth * gel.depth_map, 0.0, cfg.intensity_clamp)
    if intensity.any():
        shift_px = cfg.k_shear * gel.shear  # (columns, rows)
        if np.any(shift_px != 0.0):
            intensity = ndimage.shift(
                intensity, (shift_px[1], shift_px[0]), order=1, mode="constant", cval=0.0
            )
            intensity = np.clip(intensity, 0.0, cfg.intensity_clamp)
        delta = quantize(intensity[..., None] * np.asarray(cfg.channel_weights, dtype=np.float32))
        img = (background + delta).astype(np.float32)
    else:
        img = background.astype(np.float32).copy()
    if noise_cfg.enabled:
        img = augment(img, noise_cfg, seed)
    return img


def subtract_background(img: np.ndarray, bg: np.ndarray) -> np.ndarray:
    """Difference image in [-1, 1]; exact inverse of adding the background."""
    if img.shape != bg.shape:
        raise ValueError(f"image {img.shape} does not match background {bg.shape}")
    return (img.astype(np.float32) - bg.astype(np.float32)).astype(np.float32)


def augment(img: np.ndarray, cfg: NoiseConfig, seed: int = 0) -> np.ndarray:
    """Sensor-nuisance augmentation: pixel noise, brightness offset, small shift."""
    rng = np.random.default_rng(seed)
    out = img.astype(np.float32)
    if cfg.max_shift_px > 0:
        dy, dx = rng.integers(-cfg.max_shift_px, cfg.max_shift_px + 1, size=2)
        if dy or dx:
            out = np.roll(out, (dy, dx), axis=(0, 1))
            # Edge-replicate the wrapped border.
            if dy > 0:
                out[:dy] = out[dy : dy + 1]
            elif dy < 0:
                out[dy:] = out[dy - 1 : dy]
            if dx > 0:
                out[:, :dx] = out[:, dx : dx + 1]
            elif dx < 0:
                out[:, dx:] = out[:, dx - 1 : dx]
    if cfg.brightness > 0:
        out = out + rng.uniform(-cfg.brightness, cfg.brightness)
    if cfg.sigma > 0:
        out = out + rng.normal(0.0, cfg.sigma, size=out.shape)
    return quantize(np.clip(out, 0.0, 1.0))
