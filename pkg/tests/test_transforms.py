import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncf2.errors import InvalidPoseError
from ncf2.transforms import (
    Pose,
    flatten_pose_window,
    quat_from_axis_angle,
    transform_points,
)


def random_pose(rng: np.random.Generator) -> Pose:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return Pose(rng.normal(scale=0.3, size=3), q)


seeds = st.integers(min_value=0, max_value=2**31 - 1)


@given(seeds)
def test_inverse_composes_to_identity(seed):
    pose = random_pose(np.random.default_rng(seed))
    ident = pose.inverse().compose(pose)
    assert np.linalg.norm(ident.position) < 1e-9
    assert min(np.linalg.norm(ident.orientation - [1, 0, 0, 0]),
               np.linalg.norm(ident.orientation + [1, 0, 0, 0])) < 1e-9


@given(seeds)
def test_composition_associative(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_pose(rng) for _ in range(3))
    lhs = a.compose(b).compose(c)
    rhs = a.compose(b.compose(c))
    assert lhs.almost_equal(rhs, tol=1e-9)


@given(seeds)
def test_round_trip_points(seed):
    rng = np.random.default_rng(seed)
    pose = random_pose(rng)
    pts = rng.normal(size=(32, 3))
    back = transform_points(pose.inverse(), transform_points(pose, pts))
    assert np.abs(back - pts).max() < 1e-9


@given(seeds)
def test_rigidity_preserves_distances(seed):
    rng = np.random.default_rng(seed)
    pose = random_pose(rng)
    pts = rng.normal(size=(16, 3))
    out = transform_points(pose, pts)
    d_in = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    d_out = np.linalg.norm(out[:, None] - out[None], axis=-1)
    assert np.abs(d_in - d_out).max() < 1e-9


def test_identity_and_translation():
    assert np.allclose(transform_points(Pose.identity(), np.array([[0.1, 0.2, 0.3]])),
                       [[0.1, 0.2, 0.3]])
    shifted = transform_points(Pose.from_parts([0, 0, 0.1]), np.array([[0.0, 0.0, 0.0]]))
    assert np.allclose(shifted, [[0, 0, 0.1]])


def test_quarter_turn_about_z():
    s = np.sqrt(0.5)
    pose = Pose(np.zeros(3), np.array([s, 0.0, 0.0, s]))
    out = transform_points(pose, np.array([[1.0, 0.0, 0.0]]))
    assert np.allclose(out, [[0.0, 1.0, 0.0]], atol=1e-12)


def test_non_unit_quaternion_rejected():
    with pytest.raises(InvalidPoseError):
        Pose(np.zeros(3), np.array([1.0, 0.1, 0.0, 0.0]))


def test_non_finite_points_rejected():
    with pytest.raises(ValueError):
        transform_points(Pose.identity(), np.array([[np.nan, 0, 0]]))


def test_axis_angle_round_trip():
    aa = np.array([0.0, 0.0, np.pi / 2])
    q = quat_from_axis_angle(aa)
    assert np.allclose(q, [np.sqrt(0.5), 0, 0, np.sqrt(0.5)])


def test_pose_window_flattening():
    poses = [Pose.from_parts([i, 0, 0]) for i in range(3)]
    flat = flatten_pose_window(poses)
    assert flat.shape == (21,)
    assert flat[0] == 0 and flat[7] == 1 and flat[14] == 2
    with pytest.raises(ValueError):
        flatten_pose_window(poses[:2])
