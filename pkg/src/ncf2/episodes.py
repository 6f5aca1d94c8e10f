"""Scripted contact-rich trajectories and kinematic episode simulation.

Trajectories are authored on the object pose (the grasped object is what
touches the world) and converted to end-effector poses through the fixed
grasp offset.  Translation steps are capped at 2 mm so several frames land in
every contact phase at the 5-frame tactile window.  Lateral moves are capped
by a penetration bound of a few millimeters: the object presses against
walls and dividers instead of sweeping through them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contact import QueryPointSet, farthest_point_sample, label_contacts, net_contact_normal
from .scenes import EnvironmentModel, ObjectModel
from .tactile import BackgroundLibrary, GraspImprint, NoiseConfig, TactileConfig, render_tactile
from .transforms import Pose, quat_from_axis_angle, quat_mul

TRAJECTORY_KINDS = ("press-slide-lift", "rim-drag", "slot-approach", "rack-descent")
STEP_SIZE = 0.002
MIN_STEPS = 60
PRESS_DEPTH = 0.0012
SLIDE_PEN_LIMIT = -0.002
LIFT_CLEAR = 0.020


def _footprint_radius(obj: ObjectModel) -> float:
    p = obj.shape_params
    return float(p.get("rim_outer_radius", p.get("body_radius", 0.04)))


@dataclass(frozen=True)
class ContactScene:
    """An object/environment pairing plus the sensor background in use."""

    obj: ObjectModel
    env: EnvironmentModel
    background_id: int = 0
    shape_index: int = -1


@dataclass
class Episode:
    poses: list[Pose]  # end-effector poses, length L
    tactile: np.ndarray  # (L, H, W, 3) float32
    query_points: QueryPointSet  # fixed per episode, grasp/object frame
    labels: np.ndarray  # (L, n) uint8
    scene_meta: dict

    def __len__(self) -> int:
        return len(self.poses)

    @property
    def contact_indicator(self) -> np.ndarray:
        return self.labels.any(axis=1)

    def num_transitions(self) -> int:
        ind = self.contact_indicator.astype(np.int8)
        return int(np.abs(np.diff(ind)).sum())


def _slerp(a: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
    d = float(np.clip(a @ b, -1.0, 1.0))
    if d < 0:
        b, d = -b, -d
    if d > 1 - 1e-10:
        out = a + t * (b - a)
        return out / np.linalg.norm(out)
    th = np.arccos(d)
    return (np.sin((1 - t) * th) * a + np.sin(t * th) * b) / np.sin(th)


def _penetration(obj: ObjectModel, env: EnvironmentModel, pose: Pose) -> float:
    return float(env.sdf.sdf(pose.transform(obj.surface)).min())


def _max_feasible(pen_fn, pen_limit: float = SLIDE_PEN_LIMIT, iters: int = 24) -> float:
    """Largest fraction alpha in [0, 1] keeping pen_fn(alpha) >= pen_limit."""
    if pen_fn(1.0) >= pen_limit:
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if pen_fn(mid) >= pen_limit:
            lo = mid
        else:
            hi = mid
    return lo


class _PathBuilder:
    def __init__(self, obj: ObjectModel, env: EnvironmentModel, start: Pose):
        self.obj = obj
        self.env = env
        self.path = [start]

    @property
    def pose(self) -> Pose:
        return self.path[-1]

    def hold(self, n: int) -> None:
        self.path.extend([self.path[-1]] * n)

    def move_to(self, target_pos, yaw: float | None = None) -> None:
        """Step toward a position (and optionally a yaw) at <= 2 mm per step."""
        cur = self.path[-1]
        target_pos = np.asarray(target_pos, dtype=np.float64)
        delta = target_pos - cur.position
        steps = max(1, int(np.ceil(np.linalg.norm(delta) / STEP_SIZE)))
        tgt_q = cur.orientation if yaw is None else quat_from_axis_angle([0.0, 0.0, yaw])
        for i in range(1, steps + 1):
            f = i / steps
            self.path.append(Pose(cur.position + f * delta, _slerp(cur.orientation, tgt_q, f)))

    def slide_capped(self, delta_xy, pen_limit: float = SLIDE_PEN_LIMIT) -> None:
        """Lateral slide, shortened so penetration stays above pen_limit."""
        cur = self.path[-1]
        delta = np.array([delta_xy[0], delta_xy[1], 0.0])

        def pen(alpha: float) -> float:
            return _penetration(self.obj, self.env, Pose(cur.position + alpha * delta, cur.orientation))

        alpha = _max_feasible(pen)
        if alpha > 1e-3:
            self.move_to(cur.position + alpha * delta)

    def yaw_capped(self, dyaw: float, pen_limit: float = SLIDE_PEN_LIMIT) -> None:
        cur = self.path[-1]

        def pen(alpha: float) -> float:
            q = quat_from_axis_angle([0.0, 0.0, alpha * dyaw])
            return _penetration(self.obj, self.env, Pose(cur.position, quat_mul(q, cur.orientation)))

        alpha = _max_feasible(pen)
        if abs(alpha * dyaw) > 1e-4:
            steps = max(1, int(np.ceil(abs(alpha * dyaw) / 0.02)))
            for i in range(1, steps + 1):
                q = quat_from_axis_angle([0.0, 0.0, alpha * dyaw * i / steps])
                self.path.append(Pose(cur.position, quat_mul(q, cur.orientation)))

    def descend_to_touch(self, z_floor: float = -0.005, press: float = PRESS_DEPTH) -> None:
        """Descend straight down until first support contact plus a slight press."""
        cur = self.path[-1]

        def pen_at(z: float) -> float:
            return _penetration(self.obj, self.env, Pose(np.array([cur.position[0], cur.position[1], z]), cur.orientation))

        z_hi = cur.position[2]
        if pen_at(z_hi) < 0:
            return
        if pen_at(z_floor) > 0:
            self.move_to([cur.position[0], cur.position[1], z_floor])
            return
        lo, hi = z_floor, z_hi
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            if pen_at(mid) > 0:
                hi = mid
            else:
                lo = mid
        self.move_to([cur.position[0], cur.position[1], hi - press])


def script_trajectory(scene: ContactScene, kind: str, seed: int = 0) -> list[Pose]:
    """Deterministic scripted trajectory for a scene, returned as EE poses."""
    if kind not in TRAJECTORY_KINDS:
        raise ValueError(f"unknown trajectory kind '{kind}'")
    rng = np.random.default_rng(seed)
    obj, env = scene.obj, scene.env

    if env.kind == "cupholder":
        z_top = env.params["rim_height"]
        reach = env.params["inner_radius"]
    elif env.kind == "dishrack":
        z_top = env.params["divider_top"]
        reach = 0.5 * env.params["gap"]
    else:
        z_top, reach = 0.0, 0.06

    hover = z_top + 0.025 + rng.uniform(0.0, 0.010)
    yaw = float(rng.uniform(-0.3, 0.3))
    fit = reach - _footprint_radius(obj)  # lateral room when fully inside

    if kind == "press-slide-lift":
        if env.kind != "table" and fit > 0.002 and rng.uniform() < 0.6:
            # Drop inside the recess, press the floor, push against the wall.
            xy = rng.uniform(-0.5, 0.5, size=2) * fit
        else:
            xy = rng.uniform(-0.4, 0.4, size=2) * reach
        b = _PathBuilder(obj, env, Pose(np.array([xy[0], xy[1], hover]), quat_from_axis_angle([0, 0, yaw])))
        b.hold(3)
        b.descend_to_touch()
        b.hold(4)
        anchor = b.pose.position.copy()
        direction = rng.uniform(-1.0, 1.0, size=2)
        direction /= max(np.linalg.norm(direction), 1e-9)
        b.slide_capped(direction * rng.uniform(0.012, 0.024))
        b.hold(3)
        b.move_to(anchor)  # retreat so wall presses release before the lift
        b.move_to(anchor + [0.0, 0.0, LIFT_CLEAR])
        b.hold(3)

    elif kind == "rim-drag":
        if env.kind == "cupholder":
            r_off = reach + rng.uniform(-0.006, 0.004)
        elif env.kind == "dishrack":
            r_off = reach + rng.uniform(-0.01, 0.01)
        else:
            r_off = rng.uniform(0.0, 0.05)
        phi = rng.uniform(0, 2 * np.pi)
        xy = r_off * np.array([np.cos(phi), np.sin(phi)])
        b = _PathBuilder(obj, env, Pose(np.array([xy[0], xy[1], hover]), quat_from_axis_angle([0, 0, yaw])))
        b.hold(3)
        b.descend_to_touch()
        b.hold(3)
        if env.kind == "dishrack":
            b.slide_capped(np.array([0.0, rng.choice([-1.0, 1.0]) * rng.uniform(0.02, 0.04)]))
        else:
            arc = rng.uniform(0.35, 0.7) * rng.choice([-1.0, 1.0])
            n_arc = max(4, int(abs(arc) * max(r_off, 1e-6) / STEP_SIZE))
            zt = b.pose.position[2]
            for i in range(1, n_arc + 1):
                a = phi + arc * i / n_arc
                b.path.append(Pose(np.array([r_off * np.cos(a), r_off * np.sin(a), zt]), b.pose.orientation))
        b.hold(3)
        b.move_to([b.pose.position[0], b.pose.position[1], b.pose.position[2] + LIFT_CLEAR])
        b.hold(3)

    elif kind == "slot-approach":
        if env.kind != "cupholder" or obj.category != "mug":
            raise ValueError("slot-approach needs a mug/cupholder scene")
        hover = z_top + 0.012 + rng.uniform(0.0, 0.006)
        yaw = float(rng.uniform(-0.10, 0.10))
        xy = rng.uniform(-0.004, 0.004, size=2)
        b = _PathBuilder(obj, env, Pose(np.array([xy[0], xy[1], hover]), quat_from_axis_angle([0, 0, yaw])))
        b.hold(3)
        b.descend_to_touch()
        b.hold(4)
        b.yaw_capped(rng.choice([-1.0, 1.0]) * 0.2)
        b.hold(3)
        b.move_to([xy[0], xy[1], b.pose.position[2] + 0.008], yaw=0.0)
        b.descend_to_touch()
        b.hold(4)
        b.move_to([xy[0], xy[1], hover])
        b.hold(3)

    else:  # rack-descent
        if env.kind != "dishrack":
            raise ValueError("rack-descent needs a dishrack scene")
        gaps = env.params["divider_x"]
        gi = int(rng.integers(0, len(gaps) - 1))
        room = max(0.5 * env.params["gap"] - _footprint_radius(obj) - 0.5 * env.params["divider_thickness"], 0.001)
        cx = 0.5 * (gaps[gi] + gaps[gi + 1]) + rng.uniform(-0.8, 0.8) * room
        cy = rng.uniform(-0.02, 0.02)
        b = _PathBuilder(obj, env, Pose(np.array([cx, cy, hover]), quat_from_axis_angle([0, 0, yaw])))
        b.hold(3)
        b.descend_to_touch()
        b.hold(3)
        anchor = b.pose.position.copy()
        b.slide_capped(np.array([rng.choice([-1.0, 1.0]) * rng.uniform(0.010, 0.025), 0.0]))
        b.hold(3)
        b.move_to(anchor)
        b.move_to(anchor + [0.0, 0.0, LIFT_CLEAR + 0.01])
        b.hold(3)

    path = b.path
    if len(path) < MIN_STEPS:
        path.extend([path[-1]] * (MIN_STEPS - len(path)))
    offset_inv = obj.grasp_offset.inverse()
    return [p.compose(offset_inv) for p in path]


def simulate_episode(
    scene: ContactScene,
    trajectory: list[Pose],
    *,
    n_query: int = 512,
    eps_c: float = 2e-3,
    noise: NoiseConfig = NoiseConfig(),
    tactile_cfg: TactileConfig = TactileConfig(),
    backgrounds: BackgroundLibrary,
    seed: int = 0,
) -> Episode:
    """Roll a scripted trajectory into poses, labels, and tactile frames."""
    obj, env = scene.obj, scene.env
    rng = np.random.default_rng(seed)
    qpts = farthest_point_sample(obj.surface, n_query, seed=int(rng.integers(2**31)))
    imprint = GraspImprint(obj, obj.grasp_offset, tactile_cfg)
    bg = backgrounds[scene.background_id]

    L = len(trajectory)
    labels = np.zeros((L, n_query), dtype=np.uint8)
    tactile = np.zeros((L, tactile_cfg.height, tactile_cfg.width, 3), dtype=np.float32)
    noise_seeds = rng.integers(2**31, size=L)
    for t, ee in enumerate(trajectory):
        obj_pose = ee.compose(obj.grasp_offset)
        world = obj_pose.transform(qpts.points)
        lab = label_contacts(world, env.sdf, eps_c)
        labels[t] = lab
        wrench_world = net_contact_normal(lab, world, env.sdf)
        wrench_grip = ee.rotation_matrix().T @ wrench_world
        gel = imprint.gel_state(wrench_grip)
        tactile[t] = render_tactile(gel, bg, noise, int(noise_seeds[t]), tactile_cfg)

    meta = {
        "category": obj.category,
        "shape_index": scene.shape_index,
        "env_kind": env.kind,
        "background_id": scene.background_id,
        "seed": seed,
        "eps_c": eps_c,
    }
    return Episode(list(trajectory), tactile, qpts, labels, meta)
