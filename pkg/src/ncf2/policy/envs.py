"""Kinematic insertion environments, vectorized over parallel instances.

The end effector moves by clipped 6-DOF deltas; the grasped object follows
rigidly through the fixed grasp offset composed with a per-episode grasp
perturbation that the policy cannot observe.  A bisection projection keeps
object-environment penetration within 1 mm: translation is shortened until
the pose is feasible, and the rotation component is dropped whenever even
the unshortened-rotation pose cannot be made feasible.

Only the mug's keypoint alignment uses orientation in the reward; the bowl
task is scored on center distance to the target slot alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..config import PolicyConfig
from ..contact import farthest_point_sample
from ..errors import ContractError
from ..scenes import EnvironmentModel, ObjectModel, environment_for, object_from_library
from ..tactile import TactileConfig, quantize
from ..transforms import (
    Pose,
    quat_distance_batch,
    quat_from_axis_angle_batch,
    quat_mul_batch,
    quat_rotate_batch,
)

WINDOW = 5
POSE_WINDOW = 3


@dataclass(frozen=True)
class TaskSetup:
    name: str
    obj: ObjectModel
    env: EnvironmentModel
    start_object_pos: np.ndarray  # nominal object start position
    goal_orientation: np.ndarray


def build_task(name: str) -> TaskSetup:
    if name == "mug_in_cupholder":
        obj = object_from_library("mug", 4)
        env = environment_for(obj, "cupholder")
        start = np.array([0.0, 0.0, env.params["rim_height"] + 0.030])
    elif name == "bowl_in_dishrack":
        obj = object_from_library("bowl", 4)
        env = environment_for(obj, "dishrack")
        start = np.array([env.slot_frame.position[0], 0.0, env.params["divider_top"] + 0.030])
    else:
        raise ValueError(f"unknown task '{name}'")
    return TaskSetup(name, obj, env, start, env.goal_orientation)


class VecInsertionEnv:
    """Synchronous batch of identical insertion environments."""

    def __init__(
        self,
        cfg: PolicyConfig,
        num_envs: int | None = None,
        episode_cap: int | None = None,
        seed: int = 0,
        need_tactile: bool = False,
        tactile_cfg: TactileConfig = TactileConfig(),
        auto_reset: bool = True,
    ):
        self.cfg = cfg
        self.task = build_task(cfg.task)
        self.E = num_envs if num_envs is not None else cfg.num_envs
        self.cap = episode_cap if episode_cap is not None else cfg.train_episode_cap
        self.seed = seed
        self.need_tactile = need_tactile
        self.tcfg = tactile_cfg
        self.auto_reset = auto_reset

        obj = self.task.obj
        self.query_points = farthest_point_sample(
            obj.surface, cfg.policy_query_count, seed=0
        ).points
        self.collision_points = obj.surface
        self.keypoints_obj = obj.keypoints_obj
        self.keypoints_env = self.task.env.keypoints_env
        self.handle_points = (
            obj.surface[obj.feature_masks["handle"]] if "handle" in obj.feature_masks else None
        )

        E = self.E
        self.ee_pos = np.zeros((E, 3))
        self.ee_quat = np.tile([1.0, 0, 0, 0], (E, 1))
        self.jitter_pos = np.zeros((E, 3))
        self.jitter_quat = np.tile([1.0, 0, 0, 0], (E, 1))
        self.start_pose_inv: list[Pose] = [Pose.identity()] * E
        self.pose_hist = np.zeros((E, POSE_WINDOW, 7))
        self.rel_hist = np.zeros((E, WINDOW, 7), dtype=np.float32)
        self.contact_free = np.ones((E, WINDOW), dtype=bool)
        self.step_count = np.zeros(E, dtype=np.int64)
        self.episode_index = np.zeros(E, dtype=np.int64)
        self.done_flags = np.zeros(E, dtype=bool)
        self._labels = np.zeros((E, len(self.query_points)), dtype=np.uint8)
        self.oracle_queries = 0
        h, w = self.tcfg.height, self.tcfg.width
        self.diff_frames = np.zeros((E, h, w, 3), dtype=np.float32)
        self.diff_hist = np.zeros((E, WINDOW, h, w, 3), dtype=np.float32)
        self._imprint_grid = np.zeros((E, h, w))
        # Gel-plane pixel offsets in the gripper frame (rows follow z, cols y).
        v = (np.arange(h) - (h - 1) / 2.0) * self.tcfg.pixel_pitch
        u = (np.arange(w) - (w - 1) / 2.0) * self.tcfg.pixel_pitch
        vv, uu = np.meshgrid(v, u, indexing="ij")
        self._plane_offsets = np.stack([np.zeros_like(uu), uu, vv], axis=-1).reshape(-1, 3)
        self._resets_this_step = np.ones(E, dtype=bool)
        self.reset_all()

    # -- state helpers ------------------------------------------------------

    def _grasp_quat(self) -> np.ndarray:
        return quat_mul_batch(self.ee_quat, self.jitter_quat)

    def _object_pose_arrays(self, ee_pos=None, ee_quat=None):
        """World object pose = ee o grasp_offset o jitter, batched."""
        ee_pos = self.ee_pos if ee_pos is None else ee_pos
        ee_quat = self.ee_quat if ee_quat is None else ee_quat
        off = self.task.obj.grasp_offset.position
        pos = ee_pos + quat_rotate_batch(ee_quat, np.broadcast_to(off, ee_pos.shape))
        pos = pos + quat_rotate_batch(ee_quat, self.jitter_pos)
        quat = quat_mul_batch(ee_quat, self.jitter_quat)
        return pos, quat

    def _world_points(self, pts: np.ndarray, obj_pos, obj_quat) -> np.ndarray:
        """(E, N, 3) world coordinates of object points for each env."""
        return quat_rotate_batch(obj_quat[:, None], np.broadcast_to(pts, (len(obj_pos),) + pts.shape)) + obj_pos[:, None]

    def _penetration(self, obj_pos, obj_quat, mask=None) -> np.ndarray:
        idx = np.arange(len(obj_pos)) if mask is None else np.flatnonzero(mask)
        if len(idx) == 0:
            return np.zeros(0)
        world = self._world_points(self.collision_points, obj_pos[idx], obj_quat[idx])
        d = self.task.env.sdf.sdf(world.reshape(-1, 3)).reshape(len(idx), -1)
        return d.min(axis=1)

    # -- reset / step -------------------------------------------------------

    def reset_all(self) -> None:
        for i in range(self.E):
            self._reset_env(i)
        self._resets_this_step = np.ones(self.E, dtype=bool)
        self._refresh_labels()
        if self.need_tactile:
            self._render_tactile(np.arange(self.E))

    def _reset_env(self, i: int) -> None:
        rng = np.random.default_rng(
            np.random.SeedSequence([self.seed, i, int(self.episode_index[i])])
        )
        c = self.cfg
        start = self.task.start_object_pos.copy()
        start[:2] += rng.uniform(-c.ee_rand_xyz, c.ee_rand_xyz, size=2)
        start[2] += rng.uniform(0.0, c.ee_rand_xyz)
        yaw = rng.uniform(-c.ee_rand_yaw, c.ee_rand_yaw)
        obj_quat = quat_from_axis_angle_batch(np.array([0.0, 0.0, yaw]))
        self.jitter_pos[i, :2] = rng.uniform(-c.grasp_jitter_xy, c.grasp_jitter_xy, size=2)
        self.jitter_pos[i, 2] = 0.0
        self.jitter_quat[i] = quat_from_axis_angle_batch(
            np.array([0.0, 0.0, rng.uniform(-c.grasp_jitter_yaw, c.grasp_jitter_yaw)])
        )
        # Place the EE so the (jittered) object starts at the sampled pose.
        obj_pose = Pose(start, obj_quat)
        jitter = Pose(self.jitter_pos[i].copy(), self.jitter_quat[i].copy())
        ee = obj_pose.compose(jitter.inverse()).compose(self.task.obj.grasp_offset.inverse())
        self.ee_pos[i] = ee.position
        self.ee_quat[i] = ee.orientation
        self.start_pose_inv[i] = ee.inverse()
        self.pose_hist[i] = np.tile(ee.as_array(), (POSE_WINDOW, 1))
        rel0 = self.start_pose_inv[i].compose(ee).as_array()
        self.rel_hist[i] = np.tile(rel0, (WINDOW, 1)).astype(np.float32)
        self.contact_free[i] = True
        self.diff_hist[i] = 0.0
        self.diff_frames[i] = 0.0
        self.step_count[i] = 0
        self.done_flags[i] = False
        self.episode_index[i] += 1
        if self.need_tactile:
            # Pixel grid expressed in the object frame under the jittered grasp:
            # p_obj = jitter^-1 (grasp_point + pixel_offset).
            jinv = jitter.inverse()
            pts = quat_rotate_batch(
                jinv.orientation[None],
                self.task.obj.grasp_point + self._plane_offsets - jitter.position,
            )
            self._imprint_grid[i] = self.task.obj.sdf.sdf(pts).reshape(
                self.tcfg.height, self.tcfg.width
            )

    def _refresh_labels(self) -> None:
        obj_pos, obj_quat = self._object_pose_arrays()
        world = self._world_points(self.query_points, obj_pos, obj_quat)
        d = self.task.env.sdf.sdf(world.reshape(-1, 3)).reshape(self.E, -1)
        self._labels = (d <= 2e-3).astype(np.uint8)
        self._query_world = world

    def _render_tactile(self, idx: np.ndarray) -> None:
        """Diff-frame tactile rendering (background-free) for selected envs."""
        self.diff_hist = np.roll(self.diff_hist, -1, axis=1) if idx is None else self.diff_hist
        for i in idx:
            lab = self._labels[i]
            if not lab.any():
                frame = np.zeros_like(self.diff_frames[i])
            else:
                pts = self._query_world[i][lab.astype(bool)]
                grad = self.task.env.sdf.gradient(pts).mean(axis=0)
                grip = quat_rotate_batch(
                    np.array([self.ee_quat[i, 0], -self.ee_quat[i, 1],
                              -self.ee_quat[i, 2], -self.ee_quat[i, 3]])[None],
                    grad[None],
                )[0]
                load = self.tcfg.k_load * abs(grip[0])
                depth = np.maximum(0.0, self.tcfg.depth_gain * load - self._imprint_grid[i])
                intensity = np.clip(self.tcfg.k_depth * depth, 0.0, self.tcfg.intensity_clamp)
                if intensity.any():
                    shift = self.tcfg.k_shear * np.array([grip[1], grip[2]])
                    if np.any(shift != 0):
                        from scipy import ndimage

                        intensity = np.clip(
                            ndimage.shift(intensity, (shift[1], shift[0]), order=1,
                                          mode="constant", cval=0.0),
                            0.0, self.tcfg.intensity_clamp)
                    frame = quantize(
                        intensity[..., None]
                        * np.asarray(self.tcfg.channel_weights, dtype=np.float32)
                    )
                else:
                    frame = np.zeros_like(self.diff_frames[i])
            self.diff_frames[i] = frame

    # -- observation accessors (used by the observation builders) -----------

    def pose_window(self) -> np.ndarray:
        """Absolute EE pose window (t-2, t-1, t) flattened to (E, 21)."""
        return self.pose_hist.reshape(self.E, -1).astype(np.float32)

    def relative_pose_seq(self) -> np.ndarray:
        """(E, 5, 7) EE poses relative to each episode's first pose."""
        return self.rel_hist.copy()

    def tactile_window(self) -> np.ndarray:
        """(E, 5, H, W, 3) background-subtracted tactile history."""
        return self.diff_hist

    def tactile_free_window(self) -> np.ndarray:
        """(E,) True where the last 5 diff frames are exactly zero (no touch)."""
        return self.contact_free.all(axis=1)

    def oracle_labels(self) -> np.ndarray:
        """Ground-truth contact labels on the policy query set; counted."""
        self.oracle_queries += 1
        return self._labels.copy()

    def consume_resets(self) -> np.ndarray:
        mask = self._resets_this_step.copy()
        self._resets_this_step[:] = False
        return mask

    # -- reward and success -------------------------------------------------

    def _reward_success(self, obj_pos, obj_quat):
        env = self.task.env
        if self.task.name == "mug_in_cupholder":
            kp_world = self._world_points(self.keypoints_obj, obj_pos, obj_quat)
            dists = np.linalg.norm(kp_world - env.keypoints_env[None], axis=2)
            r_dist = dists.sum(axis=1)
            r_rot = quat_distance_batch(obj_quat, np.broadcast_to(self.task.goal_orientation,
                                                                  obj_quat.shape))
            reward = -self.cfg.lambda_dist * r_dist - self.cfg.lambda_rot * r_rot
            handle_world = self._world_points(self.handle_points, obj_pos, obj_quat)
            p = env.params
            in_slot = (
                (handle_world[..., 0] >= p["inner_radius"] - 0.002)
                & (np.abs(handle_world[..., 1]) <= p["slot_halfwidth"])
                & (handle_world[..., 2] <= p["rim_height"])
            ).all(axis=1)
            success = (dists <= self.cfg.success_keypoint_tol).all(axis=1) & in_slot
            return reward, success
        center_local = np.array([0.0, 0.0, 0.5 * self.task.obj.height])
        center = obj_pos + quat_rotate_batch(obj_quat, np.broadcast_to(center_local, obj_pos.shape))
        target = env.slot_frame.position
        reward = -np.linalg.norm(center - target[None], axis=1)
        lo, hi = env.success_region
        success = ((center >= lo[None]) & (center <= hi[None])).all(axis=1)
        return reward, success

    def reward(self) -> np.ndarray:
        obj_pos, obj_quat = self._object_pose_arrays()
        return self._reward_success(obj_pos, obj_quat)[0]

    # -- stepping -----------------------------------------------------------

    def step(self, actions: np.ndarray):
        """Apply clipped deltas; returns (rewards, dones, info)."""
        if self.done_flags.any():
            raise ContractError("step called on an environment that is done and not reset")
        actions = np.asarray(actions, dtype=np.float64).reshape(self.E, 6)
        trans = actions[:, :3].copy()
        norms = np.linalg.norm(trans, axis=1, keepdims=True)
        scale = np.minimum(1.0, self.cfg.action_translation_clip / np.maximum(norms, 1e-12))
        trans *= scale
        rot = actions[:, 3:].copy()
        rnorms = np.linalg.norm(rot, axis=1, keepdims=True)
        rot *= np.minimum(1.0, self.cfg.action_rotation_clip / np.maximum(rnorms, 1e-12))
        dq = quat_from_axis_angle_batch(rot)

        # Candidate pose: delta composed in the EE frame.
        new_pos_full = self.ee_pos + quat_rotate_batch(self.ee_quat, trans)
        new_quat_full = quat_mul_batch(self.ee_quat, dq)
        lim = -self.cfg.penetration_limit

        obj_pos, obj_quat = self._object_pose_arrays(new_pos_full, new_quat_full)
        pen = np.zeros(self.E)
        pen[:] = self._penetration(obj_pos, obj_quat)
        blocked = pen < lim

        keep_rot = np.ones(self.E, dtype=bool)
        if blocked.any():
            # Can the rotation alone stand?  If not, drop it for this step.
            idx = np.flatnonzero(blocked)
            op, oq = self._object_pose_arrays(self.ee_pos[idx], new_quat_full[idx])
            rot_ok = self._penetration(op, oq) >= lim
            keep_rot[idx] = rot_ok
            lo = np.zeros(len(idx))
            hi = np.ones(len(idx))
            quats = np.where(rot_ok[:, None], new_quat_full[idx], self.ee_quat[idx])
            for _ in range(16):
                mid = 0.5 * (lo + hi)
                cand = self.ee_pos[idx] + quat_rotate_batch(self.ee_quat[idx], trans[idx]) * mid[:, None]
                op, oq = self._object_pose_arrays(cand, quats)
                feasible = self._penetration(op, oq) >= lim
                lo = np.where(feasible, mid, lo)
                hi = np.where(feasible, hi, mid)
            final = self.ee_pos[idx] + quat_rotate_batch(self.ee_quat[idx], trans[idx]) * lo[:, None]
            new_pos_full[idx] = final
            new_quat_full[idx] = quats

        self.ee_pos = new_pos_full
        self.ee_quat = new_quat_full / np.linalg.norm(new_quat_full, axis=1, keepdims=True)
        self.step_count += 1

        now = np.concatenate([self.ee_pos, self.ee_quat], axis=1)
        self.pose_hist = np.concatenate([self.pose_hist[:, 1:], now[:, None]], axis=1)
        rel = np.stack(
            [self.start_pose_inv[i].compose(Pose(self.ee_pos[i], self.ee_quat[i])).as_array()
             for i in range(self.E)]
        ).astype(np.float32)
        self.rel_hist = np.concatenate([self.rel_hist[:, 1:], rel[:, None]], axis=1)

        self._refresh_labels()
        contact = self._labels.any(axis=1)
        self.contact_free = np.concatenate(
            [self.contact_free[:, 1:], (~contact)[:, None]], axis=1
        )
        if self.need_tactile:
            self.diff_hist = np.roll(self.diff_hist, -1, axis=1)
            self._render_tactile(np.arange(self.E))
            self.diff_hist[:, -1] = self.diff_frames

        obj_pos, obj_quat = self._object_pose_arrays()
        rewards, success = self._reward_success(obj_pos, obj_quat)
        truncated = (self.step_count >= self.cap) & ~success
        dones = success | truncated
        info = {
            "success": success.copy(),
            "truncated": truncated.copy(),
            "labels": self._labels.copy(),
            "steps": self.step_count.copy(),
            "penetration_blocked": blocked,
        }
        if dones.any():
            for i in np.flatnonzero(dones):
                self._reset_env(i)
                self._resets_this_step[i] = True
            self._refresh_labels()
            if self.need_tactile:
                self._render_tactile(np.flatnonzero(dones))
                for i in np.flatnonzero(dones):
                    self.diff_hist[i, -1] = self.diff_frames[i]
        return rewards.astype(np.float32), dones, info
