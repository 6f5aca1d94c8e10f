"""Run configuration: one JSON document, strict schema, explicit defaults.

Every numeric default lives here.  Unknown keys are rejected by name so that
typos fail loudly; a fully-resolved snapshot is echoed into every output
directory as ``config.resolved.json``.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError


@dataclass
class DataConfig:
    episodes: int = 300
    n_query: int = 512
    categories: list = field(default_factory=lambda: ["mug", "bottle", "bowl"])
    shape_indices: list = field(default_factory=lambda: [0, 1, 2, 3])
    env_kinds: list = field(default_factory=lambda: ["cupholder", "table"])
    background_ids: list = field(default_factory=lambda: list(range(18)))
    background_seed: int = 2024
    noise_sigma: float = 0.01
    noise_brightness: float = 0.005
    noise_shift_px: int = 0
    eps_contact: float = 0.002
    image_height: int = 64
    image_width: int = 48

    def __post_init__(self):
        if self.episodes < 1:
            raise ConfigError("data.episodes must be >= 1")
        if self.n_query < 4:
            raise ConfigError("data.n_query must be >= 4")
        if self.eps_contact <= 0:
            raise ConfigError("data.eps_contact must be positive")


@dataclass
class VaeConfig:
    latent_dim: int = 32
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 15
    max_images: int = 5000
    beta: float = 1e-4
    logvar_clamp: float = 10.0
    aug_sigma: float = 0.03
    aug_brightness: float = 0.02
    aug_shift_px: int = 1
    val_fraction: float = 0.1
    seed: int = 0


@dataclass
class ShapeAeConfig:
    latent_dim: int = 64
    cloud_points: int = 512
    learning_rate: float = 1e-3
    steps: int = 1500
    batch_size: int = 8
    seed: int = 0


@dataclass
class NcfConfig:
    variant: str = "transformer"
    window: int = 5
    learning_rate: float = 3e-4
    batch_windows: int = 32
    points_per_window: int = 32
    steps: int = 2500
    embed_dim: int = 64
    transformer_dim: int = 512
    transformer_heads: int = 2
    transformer_layers: int = 2
    transformer_ff: int = 512
    mlp_widths: list = field(default_factory=lambda: [512, 128, 1])
    head_widths: list = field(default_factory=lambda: [128, 1])
    pos_weight: float = 0.0  # 0 means auto (#neg / #pos of the training set)
    val_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.variant not in ("recurrent", "mlp", "transformer"):
            raise ConfigError(f"ncf.variant '{self.variant}' not one of recurrent/mlp/transformer")
        if self.window != 5:
            raise ConfigError("ncf.window is fixed at 5")


@dataclass
class EvalConfig:
    sigmas: list = field(default_factory=lambda: [0.0, 0.02, 0.05])
    background_splits: list = field(default_factory=lambda: ["train", "heldout"])
    prob_threshold: float = 0.5
    transition_tolerance: int = 2
    seed: int = 0


@dataclass
class PolicyConfig:
    task: str = "mug_in_cupholder"
    observation: str = "gtc"
    num_envs: int = 16
    paper_scale: bool = False  # flips num_envs to 256
    total_steps: int = 1_000_000
    rollout_steps: int = 128
    minibatch_size: int = 512
    update_epochs: int = 4
    learning_rate: float = 3e-4
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_ratio: float = 0.2
    entropy_coef: float = 0.003
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    hidden_dim: int = 64
    embed_dim: int = 64
    policy_query_count: int = 24
    ncf_gate_tactile_free: bool = True
    lambda_dist: float = 1.0
    lambda_rot: float = 0.5
    train_episode_cap: int = 250
    eval_episode_cap: int = 100
    eval_trials: int = 100
    ee_rand_xyz: float = 0.02
    ee_rand_yaw: float = 0.1
    grasp_jitter_xy: float = 0.005
    grasp_jitter_yaw: float = 0.05
    action_translation_clip: float = 0.005
    action_rotation_clip: float = 0.05
    penetration_limit: float = 0.001
    success_keypoint_tol: float = 0.005
    seed: int = 0

    def __post_init__(self):
        if self.task not in ("mug_in_cupholder", "bowl_in_dishrack"):
            raise ConfigError(f"policy.task '{self.task}' unknown")
        if self.observation not in ("prop", "tac", "ncf", "gtc"):
            raise ConfigError(f"policy.observation '{self.observation}' unknown")
        if self.num_envs < 1:
            raise ConfigError("policy.num_envs must be >= 1")
        if self.paper_scale:
            self.num_envs = 256

    @property
    def effective_num_envs(self) -> int:
        return self.num_envs


@dataclass
class RunConfig:
    seed: int = 0
    data: DataConfig = field(default_factory=DataConfig)
    vae: VaeConfig = field(default_factory=VaeConfig)
    shape_ae: ShapeAeConfig = field(default_factory=ShapeAeConfig)
    ncf: NcfConfig = field(default_factory=NcfConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)


_SECTIONS = {
    "data": DataConfig,
    "vae": VaeConfig,
    "shape_ae": ShapeAeConfig,
    "ncf": NcfConfig,
    "eval": EvalConfig,
    "policy": PolicyConfig,
}


def _build_section(cls, payload: dict, prefix: str):
    if not isinstance(payload, dict):
        raise ConfigError(f"config section '{prefix}' must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(payload) - names)
    if unknown:
        raise ConfigError(f"unknown config keys: {[prefix + '.' + k for k in unknown]}")
    try:
        return cls(**payload)
    except TypeError as e:
        raise ConfigError(f"bad config section '{prefix}': {e}") from e


def config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = sorted(set(doc) - set(_SECTIONS) - {"seed"})
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    sections = {
        name: _build_section(cls, doc.get(name, {}), name) for name, cls in _SECTIONS.items()
    }
    seed = doc.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    return RunConfig(seed=seed, **sections)


def config_to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    return config_from_dict(doc)


def write_resolved(cfg: RunConfig, out_dir, seed_record: dict | None = None) -> None:
    """Echo the fully-resolved config (and the stage seed) into an output dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.resolved.json").write_text(
        json.dumps(config_to_dict(cfg), indent=1, sort_keys=True)
    )
    if seed_record is not None:
        (out_dir / "seed.json").write_text(json.dumps(seed_record, indent=1, sort_keys=True))


def num_workers(default: int = 1) -> int:
    """Worker count override from the NCF_NUM_WORKERS environment variable."""
    raw = os.environ.get("NCF_NUM_WORKERS")
    if raw is None:
        return default
    try:
        value = int(raw)
    except ValueError as e:
        raise ConfigError(f"NCF_NUM_WORKERS must be an integer, got {raw!r}") from e
    if value < 1:
        raise ConfigError("NCF_NUM_WORKERS must be >= 1")
    return value
