"""Dataset generation: deterministic per (master_seed, episode_index).

Episodes are planned and simulated independently, so parallel generation
produces byte-identical files to serial generation.  Degenerate episodes
(no contact, or contact that never breaks) are rejected and regenerated with
the next sub-seed.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import DataConfig
from .episodes import ContactScene, Episode, script_trajectory, simulate_episode
from .scenes import (
    HELD_OUT_SHAPE_INDEX,
    ObjectModel,
    environment_for,
    make_environment,
    object_from_library,
)
from .tactile import BackgroundLibrary, NoiseConfig, TactileConfig, generate_backgrounds

MAX_ATTEMPTS = 12

_scene_cache: dict = {}


def _cached_scene(category: str, shape_index: int, env_kind: str):
    key = (category, shape_index, env_kind)
    if key not in _scene_cache:
        obj = object_from_library(category, shape_index)
        if env_kind == "cupholder" and category != "mug":
            p = obj.shape_params
            env = make_environment(
                "cupholder",
                {
                    "mug_radius": p.get("rim_outer_radius", p.get("body_radius")),
                    "mug_height": 0.6 * obj.height,
                    "handle_tube_r": 0.005,
                    "handle_bottom": 0.3 * obj.height,
                    "handle_extent": p.get("rim_outer_radius", p.get("body_radius")) + 0.02,
                },
            )
        else:
            env = environment_for(obj, env_kind)
        _scene_cache[key] = (obj, env)
    return _scene_cache[key]


def _trajectory_kinds(category: str, env_kind: str) -> list[str]:
    if env_kind == "dishrack":
        return ["rack-descent", "rack-descent", "press-slide-lift", "rim-drag"]
    kinds = ["press-slide-lift", "rim-drag"]
    if env_kind == "cupholder" and category == "mug":
        kinds.append("slot-approach")
    return kinds


def plan_episode(cfg: DataConfig, master_seed: int, index: int) -> dict:
    """Deterministic episode plan keyed by (master_seed, index)."""
    rng = np.random.default_rng(np.random.SeedSequence([master_seed, index]))
    category = cfg.categories[int(rng.integers(len(cfg.categories)))]
    shape_index = int(cfg.shape_indices[int(rng.integers(len(cfg.shape_indices)))])
    env_kinds = [k for k in cfg.env_kinds if k != "dishrack" or category == "bowl"]
    env_kind = env_kinds[int(rng.integers(len(env_kinds)))]
    traj_kinds = _trajectory_kinds(category, env_kind)
    traj_kind = traj_kinds[int(rng.integers(len(traj_kinds)))]
    background_id = int(cfg.background_ids[int(rng.integers(len(cfg.background_ids)))])
    return {
        "index": index,
        "category": category,
        "shape_index": shape_index,
        "env_kind": env_kind,
        "traj_kind": traj_kind,
        "background_id": background_id,
        "base_seed": int(rng.integers(2**31)),
    }


def build_episode(cfg: DataConfig, plan: dict, backgrounds: BackgroundLibrary) -> Episode:
    obj, env = _cached_scene(plan["category"], plan["shape_index"], plan["env_kind"])
    scene = ContactScene(obj, env, plan["background_id"], plan["shape_index"])
    noise = NoiseConfig(cfg.noise_sigma, cfg.noise_brightness, cfg.noise_shift_px)
    tactile_cfg = TactileConfig(height=cfg.image_height, width=cfg.image_width)
    last = None
    for attempt in range(MAX_ATTEMPTS):
        seed = plan["base_seed"] + attempt
        traj = script_trajectory(scene, plan["traj_kind"], seed)
        ep = simulate_episode(
            scene,
            traj,
            n_query=cfg.n_query,
            eps_c=cfg.eps_contact,
            noise=noise,
            tactile_cfg=tactile_cfg,
            backgrounds=backgrounds,
            seed=seed,
        )
        frac = ep.contact_indicator.mean()
        if ep.num_transitions() >= 2 and 0.0 < frac < 1.0:
            ep.scene_meta.update(
                traj_kind=plan["traj_kind"],
                held_out=plan["shape_index"] == HELD_OUT_SHAPE_INDEX,
                attempt=attempt,
            )
            return ep
        last = ep
    raise RuntimeError(
        f"episode {plan['index']} stayed degenerate after {MAX_ATTEMPTS} attempts "
        f"({plan['category']}/{plan['env_kind']}/{plan['traj_kind']})"
    )


def _build_one(args) -> Episode:
    cfg, plan, bg_seed = args
    backgrounds = generate_backgrounds(bg_seed, TactileConfig(height=cfg.image_height, width=cfg.image_width))
    return build_episode(cfg, plan, backgrounds)


def generate_episodes(cfg: DataConfig, master_seed: int, workers: int = 1) -> list[Episode]:
    plans = [plan_episode(cfg, master_seed, i) for i in range(cfg.episodes)]
    if workers <= 1:
        backgrounds = generate_backgrounds(
            cfg.background_seed, TactileConfig(height=cfg.image_height, width=cfg.image_width)
        )
        return [build_episode(cfg, plan, backgrounds) for plan in plans]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_build_one, [(cfg, p, cfg.background_seed) for p in plans],
                             chunksize=4))


def generate_dataset(cfg: DataConfig, master_seed: int, out_path, workers: int = 1) -> dict:
    from .dataio import write_dataset

    episodes = generate_episodes(cfg, master_seed, workers)
    extra = {
        "master_seed": master_seed,
        "background_seed": cfg.background_seed,
        "noise_sigma": cfg.noise_sigma,
        "eps_contact": cfg.eps_contact,
    }
    return write_dataset(episodes, out_path, extra)
