"""Rigid transforms: unit quaternions (w, x, y, z) and poses.

All frames are right-handed with z up.  Positions are in meters.  A pose maps
points from its local frame into its parent frame:

    world_point = position + R(orientation) @ local_point

Quaternion storage order is (w, x, y, z) throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidPoseError

QUAT_NORM_TOL = 1e-6


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return q / np.linalg.norm(q)


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a * b, both (w, x, y, z)."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_from_axis_angle(axis_angle: np.ndarray) -> np.ndarray:
    """Rotation vector (axis * angle, radians) to unit quaternion."""
    axis_angle = np.asarray(axis_angle, dtype=np.float64)
    angle = np.linalg.norm(axis_angle)
    if angle < 1e-12:
        return np.array([1.0, 0.0, 0.0, 0.0])
    axis = axis_angle / angle
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_rotate(q: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Rotate points of shape (..., 3) by quaternion q."""
    return np.asarray(points, dtype=np.float64) @ quat_to_matrix(q).T


def quat_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Double-cover-aware component distance min(|a-b|, |a+b|)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(min(np.linalg.norm(a - b), np.linalg.norm(a + b)))


def quat_mul_batch(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton products for (..., 4) arrays."""
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_rotate_batch(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate (..., 3) vectors by matching (..., 4) quaternions."""
    w = q[..., :1]
    u = q[..., 1:]
    uv = np.cross(u, v)
    return v + 2.0 * (w * uv + np.cross(u, uv))


def quat_from_axis_angle_batch(aa: np.ndarray) -> np.ndarray:
    """(..., 3) rotation vectors to (..., 4) unit quaternions."""
    aa = np.asarray(aa, dtype=np.float64)
    angle = np.linalg.norm(aa, axis=-1, keepdims=True)
    small = angle < 1e-12
    axis = np.where(small, 0.0, aa / np.where(small, 1.0, angle))
    half = 0.5 * angle
    return np.concatenate([np.cos(half), np.sin(half) * axis], axis=-1)


def quat_distance_batch(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Double-cover component distance for (..., 4) arrays."""
    return np.minimum(
        np.linalg.norm(a - b, axis=-1), np.linalg.norm(a + b, axis=-1)
    )


@dataclass(frozen=True)
class Pose:
    """Rigid transform: translation plus unit quaternion (w, x, y, z)."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64).reshape(3))
        object.__setattr__(
            self, "orientation", np.asarray(self.orientation, dtype=np.float64).reshape(4)
        )
        norm = np.linalg.norm(self.orientation)
        if not np.isfinite(self.position).all() or not np.isfinite(norm):
            raise InvalidPoseError("pose contains non-finite values")
        if abs(norm - 1.0) > QUAT_NORM_TOL:
            raise InvalidPoseError(f"quaternion norm {norm:.9f} outside 1 +/- {QUAT_NORM_TOL}")
        # Renormalize the residual drift so long compositions stay stable.
        object.__setattr__(self, "orientation", self.orientation / norm)

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    @staticmethod
    def from_parts(position, axis_angle=None, orientation=None) -> "Pose":
        if orientation is None:
            orientation = quat_from_axis_angle(np.zeros(3) if axis_angle is None else axis_angle)
        return Pose(np.asarray(position, dtype=np.float64), orientation)

    def compose(self, other: "Pose") -> "Pose":
        """self o other: apply other first, then self."""
        return Pose(
            self.position + quat_rotate(self.orientation, other.position),
            quat_mul(self.orientation, other.orientation),
        )

    def inverse(self) -> "Pose":
        q_inv = quat_conjugate(self.orientation)
        return Pose(-quat_rotate(q_inv, self.position), q_inv)

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Map points (..., 3) from this pose's local frame to the parent frame."""
        return quat_rotate(self.orientation, points) + self.position

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)

    def as_array(self) -> np.ndarray:
        """7 floats: position (3) then quaternion (4, wxyz)."""
        return np.concatenate([self.position, self.orientation])

    @staticmethod
    def from_array(v: np.ndarray) -> "Pose":
        v = np.asarray(v, dtype=np.float64).reshape(7)
        return Pose(v[:3], v[3:])

    def almost_equal(self, other: "Pose", tol: float = 1e-9) -> bool:
        return (
            np.linalg.norm(self.position - other.position) <= tol
            and quat_distance(self.orientation, other.orientation) <= tol
        )


def transform_points(pose: Pose, points: np.ndarray) -> np.ndarray:
    """Apply a rigid transform to an (m, 3) array of points."""
    points = np.asarray(points, dtype=np.float64)
    if not np.isfinite(points).all():
        raise ValueError("points contain non-finite values")
    return pose.transform(points)


def flatten_pose_window(poses) -> np.ndarray:
    """Flatten the 3 most recent poses (t-2, t-1, t) into 21 floats.

    Order is chronological: oldest pose first, each contributing its
    position (3) followed by its quaternion (4).
    """
    poses = list(poses)
    if len(poses) != 3:
        raise ValueError(f"pose window needs exactly 3 poses, got {len(poses)}")
    return np.concatenate([p.as_array() for p in poses])
