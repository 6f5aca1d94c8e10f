import numpy as np
import pytest

from ncf2.sdf import (
    ArcShell,
    Box,
    CappedCone,
    CappedCylinder,
    CappedTorus,
    HalfSpace,
    Difference,
    SdfScene,
    Sphere,
    Transformed,
    Tube,
    Union,
    sdf_eval,
)
from ncf2.transforms import Pose

PRIMITIVES = [
    Sphere(0.05),
    Box([0.04, 0.03, 0.02]),
    CappedCylinder(0.04, 0.05),
    Tube(0.03, 0.04, 0.05),
    CappedTorus(0.02, 0.005, 1.6),
    ArcShell(0.06, 0.004, 1.5),
    CappedCone(0.03, 0.015, 0.04),
    HalfSpace(0.0, (0.2, 0.2)),
]


def test_sphere_trivials():
    scene = SdfScene(Sphere(0.05))
    d = scene.sdf(np.array([[0.0, 0.0, 0.0], [0.05, 0.0, 0.0]]))
    assert d[0] == pytest.approx(-0.05)
    assert d[1] == pytest.approx(0.0, abs=1e-12)


def test_non_finite_point_rejected():
    with pytest.raises(ValueError):
        SdfScene(Sphere(0.05)).sdf(np.array([[np.inf, 0, 0]]))


@pytest.mark.parametrize("node", PRIMITIVES, ids=lambda n: type(n).__name__)
def test_gradient_norm_near_surface(node):
    # Finite-difference gradient norm within [0.99, 1.01] at 1000 points
    # within 5 mm of every primitive's surface.  The exterior band is used:
    # deep-interior points can sit on min/max medial seams where central
    # differences straddle a kink of an otherwise exact distance field.
    scene = SdfScene(node)
    rng = np.random.default_rng(0)
    pts = np.empty((0, 3))
    while len(pts) < 1000:
        cand = node.sample_raw(2000, rng)
        offsets = rng.normal(size=cand.shape)
        offsets *= (rng.uniform(0.0002, 0.005, size=(len(cand), 1))
                    / np.linalg.norm(offsets, axis=1, keepdims=True))
        cand = cand + offsets
        d = scene.sdf(cand)
        pts = np.concatenate([pts, cand[(d > 1e-4) & (d <= 0.005)]])
    norms = np.linalg.norm(scene.gradient(pts[:1000], h=1e-6), axis=1)
    assert norms.min() >= 0.99 and norms.max() <= 1.01


@pytest.mark.parametrize("node", PRIMITIVES, ids=lambda n: type(n).__name__)
def test_surface_samples_lie_on_surface(node):
    scene = SdfScene(node)
    pts = scene.sample_surface(2000, seed=1)
    assert np.abs(scene.sdf(pts)).max() <= 1e-6


def test_csg_interior_probes():
    # Union keeps interiors, difference carves them out.
    scene = SdfScene(Union(Sphere(0.05), Transformed(Box([0.02, 0.02, 0.02]), Pose.from_parts([0.06, 0, 0]))))
    assert scene.sdf(np.array([[0.0, 0.0, 0.0]]))[0] < 0
    assert scene.sdf(np.array([[0.06, 0.0, 0.0]]))[0] < 0
    carved = SdfScene(Difference(Sphere(0.05), Sphere(0.02)))
    assert carved.sdf(np.array([[0.0, 0.0, 0.0]]))[0] > 0  # hollowed center
    assert carved.sdf(np.array([[0.035, 0.0, 0.0]]))[0] < 0  # shell interior


def test_transformed_matches_manual():
    pose = Pose.from_parts([0.01, -0.02, 0.03], axis_angle=[0.3, 0.2, -0.4])
    node = Transformed(Box([0.03, 0.02, 0.04]), pose)
    rng = np.random.default_rng(3)
    pts = rng.uniform(-0.1, 0.1, size=(256, 3))
    expected = Box([0.03, 0.02, 0.04]).sdf(pose.inverse().transform(pts))
    assert np.allclose(node.sdf(pts), expected)


def test_scene_sdf_matches_brute_force_surface_distance():
    # Outside a union of primitives, the composed SDF must agree with the
    # nearest distance to a dense surface sampling (the independent oracle).
    scene = SdfScene(
        Union(
            Transformed(Sphere(0.04), Pose.from_parts([0.0, 0.0, 0.02])),
            Transformed(Box([0.05, 0.03, 0.01]), Pose.from_parts([0.02, 0.0, -0.02])),
        )
    )
    samples = scene.sample_surface(100_000, seed=0)
    rng = np.random.default_rng(1)
    lo, hi = scene.bounds
    pts = rng.uniform(lo - 0.02, hi + 0.02, size=(200, 3))
    d_scene = scene.sdf(pts)
    outside = d_scene > 1e-4
    brute = np.array([np.min(np.linalg.norm(samples - p, axis=1)) for p in pts[outside]])
    # The brute-force estimate can only overestimate by the sampling resolution.
    assert np.abs(brute - d_scene[outside]).max() < 1.5e-3


def test_sdf_eval_wrapper():
    scene = SdfScene(Sphere(0.05))
    assert sdf_eval(scene, np.zeros((1, 3)))[0] == pytest.approx(-0.05)
