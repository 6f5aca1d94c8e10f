import numpy as np
import pytest

from ncf2.contact import label_contacts
from ncf2.episodes import ContactScene, script_trajectory, simulate_episode
from ncf2.scenes import environment_for, object_from_library
from ncf2.tactile import NoiseConfig, generate_backgrounds


@pytest.fixture(scope="module")
def scene():
    mug = object_from_library("mug", 0)
    return ContactScene(mug, environment_for(mug, "cupholder"), background_id=2, shape_index=0)


@pytest.fixture(scope="module")
def backgrounds():
    return generate_backgrounds(7)


def test_unknown_kind_rejected(scene):
    with pytest.raises(ValueError, match="unknown trajectory kind"):
        script_trajectory(scene, "wiggle", 0)


def test_trajectory_quaternions_unit(scene):
    for kind in ("press-slide-lift", "rim-drag", "slot-approach"):
        for pose in script_trajectory(scene, kind, 1):
            assert abs(np.linalg.norm(pose.orientation) - 1.0) < 1e-6


def test_trajectory_deterministic(scene):
    a = script_trajectory(scene, "press-slide-lift", 3)
    b = script_trajectory(scene, "press-slide-lift", 3)
    assert len(a) == len(b)
    for pa, pb in zip(a, b):
        assert np.array_equal(pa.position, pb.position)
        assert np.array_equal(pa.orientation, pb.orientation)


def test_press_slide_lift_has_transitions(scene, backgrounds):
    # Derived check: simulate and count indicator transitions.
    traj = script_trajectory(scene, "press-slide-lift", 5)
    ep = simulate_episode(scene, traj, n_query=256, backgrounds=backgrounds, seed=5)
    assert ep.num_transitions() >= 2


def test_episode_length_and_label_consistency(scene, backgrounds):
    traj = script_trajectory(scene, "rim-drag", 2)
    ep = simulate_episode(scene, traj, n_query=128, backgrounds=backgrounds, seed=2)
    assert len(ep) == len(traj)
    # Recomputing labels from stored poses and the scene reproduces them.
    for t in (0, len(ep) // 2, len(ep) - 1):
        world = ep.poses[t].compose(scene.obj.grasp_offset).transform(ep.query_points.points)
        assert np.array_equal(label_contacts(world, scene.env.sdf, 2e-3), ep.labels[t])


def test_zero_contact_frames_equal_background(scene, backgrounds):
    traj = script_trajectory(scene, "press-slide-lift", 7)
    ep = simulate_episode(scene, traj, n_query=128, backgrounds=backgrounds,
                          noise=NoiseConfig(), seed=7)
    free = ~ep.contact_indicator
    assert free.any()
    bg = backgrounds[scene.background_id]
    for t in np.where(free)[0][:10]:
        assert np.array_equal(ep.tactile[t], bg)
