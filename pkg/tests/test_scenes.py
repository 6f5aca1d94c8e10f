import numpy as np
import pytest

from ncf2.scenes import (
    DEFAULT_SHAPE_LIBRARY,
    EnvironmentModel,
    environment_for,
    make_environment,
    make_object,
    object_from_library,
    sample_grasp,
    seated_pose,
)


@pytest.fixture(scope="module")
def mug():
    return object_from_library("mug", 0)


@pytest.fixture(scope="module")
def cupholder(mug):
    return environment_for(mug, "cupholder")


def test_mug_has_four_colinear_equispaced_keypoints(mug):
    kp = mug.keypoints_obj
    assert kp.shape == (4, 3)
    assert np.abs(kp[:, :2]).max() < 1e-9
    gaps = np.diff(kp[:, 2])
    assert np.abs(gaps - gaps[0]).max() < 1e-9


def test_bowl_interior_is_negative():
    bowl = object_from_library("bowl", 0)
    p = bowl.shape_params
    # A point in the middle of the shell wall, near the bottom.
    probe = np.array([[0.0, 0.0, p["thickness"]]])
    assert bowl.sdf.sdf(probe)[0] < 0


@pytest.mark.parametrize("category", ["mug", "bottle", "bowl"])
@pytest.mark.parametrize("index", range(5))
def test_surface_points_on_surface(category, index):
    obj = object_from_library(category, index)
    assert np.abs(obj.sdf.sdf(obj.surface)).max() <= 1e-3


def test_grasp_is_deterministic(mug):
    a, b = sample_grasp(mug), sample_grasp(mug)
    assert np.array_equal(a.position, b.position)
    assert np.array_equal(a.orientation, b.orientation)


def test_grasp_opposite_handle(mug):
    # Handle points along +x; the gripper sits on the -x wall.
    gp = mug.grasp_point
    assert gp[0] == pytest.approx(-mug.shape_params["body_radius"])


def test_bottle_grasp_at_neck_height():
    params = dict(DEFAULT_SHAPE_LIBRARY["bottle"][0], neck_height=0.12)
    bottle = make_object("bottle", params)
    assert bottle.grasp_point[2] == pytest.approx(0.12)


def test_grasped_world_pose_composition(mug):
    from ncf2.transforms import Pose

    ee = Pose.from_parts([0.1, -0.2, 0.3], axis_angle=[0, 0, 0.4])
    obj_world = ee.compose(mug.grasp_offset)
    gp_world = ee.position  # gripper origin
    # The grasp point on the object must coincide with the gripper origin.
    assert np.allclose(obj_world.transform(mug.grasp_point), gp_world, atol=1e-12)


def test_out_of_range_params_rejected():
    bad = dict(DEFAULT_SHAPE_LIBRARY["mug"][0], body_radius=0.2)
    with pytest.raises(ValueError, match="body_radius"):
        make_object("mug", bad)
    with pytest.raises(ValueError):
        make_object("spoon")


def test_cupholder_slot_is_free_space(cupholder):
    slot_center = cupholder.slot_frame.position
    mirrored = slot_center * np.array([-1.0, 1.0, 1.0])
    assert cupholder.sdf.sdf(slot_center[None])[0] > 0
    assert cupholder.sdf.sdf(mirrored[None])[0] < 0


def test_cupholder_requires_positive_clearance(mug):
    with pytest.raises(ValueError, match="clearance"):
        environment_for(mug, "cupholder", clearance=-0.01)


def test_seated_mug_zero_penetration(mug, cupholder):
    pose = seated_pose(mug, cupholder)
    d = cupholder.sdf.sdf(pose.transform(mug.surface))
    assert d.min() >= -1e-4


def test_dishrack_target_is_second_gap_from_left():
    bowl = object_from_library("bowl", 1)
    rack = environment_for(bowl, "dishrack")
    xs = rack.params["divider_x"]
    assert len(xs) == 5
    expected = 0.5 * (xs[1] + xs[2])
    assert rack.slot_frame.position[0] == pytest.approx(expected)
    with pytest.raises(ValueError, match="divider"):
        environment_for(bowl, "dishrack", divider_count=2)


def test_seated_bowl_zero_penetration():
    bowl = object_from_library("bowl", 4)
    rack = environment_for(bowl, "dishrack")
    pose = seated_pose(bowl, rack)
    assert rack.sdf.sdf(pose.transform(bowl.surface)).min() >= -1e-4
    lo, hi = rack.success_region
    center = pose.transform(np.array([0.0, 0.0, bowl.height / 2]))
    assert np.all(center >= lo) and np.all(center <= hi)


def test_table_sdf_is_height():
    table = make_environment("table", {})
    assert table.sdf.sdf(np.array([[0.0, 0.0, 0.01]]))[0] == pytest.approx(0.01, abs=1e-6)


def test_held_out_index_is_last():
    for cat, shapes in DEFAULT_SHAPE_LIBRARY.items():
        assert len(shapes) == 5


def test_handle_mask_marks_handle(mug):
    mask = mug.feature_masks["handle"]
    assert 20 < mask.sum() < len(mask) * 0.5
    assert mug.surface[mask, 0].min() > mug.shape_params["body_radius"]
