"""Procedural objects (mug, bottle, bowl) and environments (cupholder,
dishrack, table) built from closed-form SDF primitives.

Object frames have z up with z = 0 at the outer bottom of the object.  The
mug's handle points along +x; handle slots and target gaps likewise open
along +x of the environment frame.  Grasp conventions: the gripper frame
shares the object frame's orientation and sits at a fixed grasp point on the
object surface, so ``grasp_offset`` (the object pose expressed in the gripper
frame) is a pure translation.  The world pose of a grasped object is always
``ee_pose o grasp_offset``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sdf import (
    ArcShell,
    Box,
    CappedCone,
    CappedCylinder,
    CappedTorus,
    HalfSpace,
    Difference,
    SdfScene,
    Transformed,
    Tube,
    Union,
)
from .transforms import Pose

CATEGORIES = ("mug", "bottle", "bowl")
HELD_OUT_SHAPE_INDEX = 4

# Five parameter sets per category; index 4 is reserved for testing shape
# generalization and never enters default training sets.
DEFAULT_SHAPE_LIBRARY: dict[str, list[dict[str, float]]] = {
    "mug": [
        {"body_radius": 0.040, "height": 0.100, "handle_ring_r": 0.020, "handle_tube_r": 0.0050},
        {"body_radius": 0.034, "height": 0.092, "handle_ring_r": 0.018, "handle_tube_r": 0.0048},
        {"body_radius": 0.046, "height": 0.108, "handle_ring_r": 0.022, "handle_tube_r": 0.0055},
        {"body_radius": 0.037, "height": 0.115, "handle_ring_r": 0.019, "handle_tube_r": 0.0050},
        {"body_radius": 0.043, "height": 0.096, "handle_ring_r": 0.021, "handle_tube_r": 0.0052},
    ],
    "bottle": [
        {"body_radius": 0.030, "neck_height": 0.110, "neck_length": 0.035, "neck_radius": 0.014},
        {"body_radius": 0.026, "neck_height": 0.125, "neck_length": 0.030, "neck_radius": 0.012},
        {"body_radius": 0.034, "neck_height": 0.100, "neck_length": 0.040, "neck_radius": 0.016},
        {"body_radius": 0.028, "neck_height": 0.135, "neck_length": 0.028, "neck_radius": 0.013},
        {"body_radius": 0.032, "neck_height": 0.120, "neck_length": 0.033, "neck_radius": 0.015},
    ],
    "bowl": [
        {"radius": 0.060, "thickness": 0.0035, "cap_angle": 1.45},
        {"radius": 0.052, "thickness": 0.0030, "cap_angle": 1.55},
        {"radius": 0.070, "thickness": 0.0040, "cap_angle": 1.35},
        {"radius": 0.056, "thickness": 0.0035, "cap_angle": 1.60},
        {"radius": 0.064, "thickness": 0.0038, "cap_angle": 1.50},
    ],
}

_PARAM_RANGES = {
    "mug": {
        "body_radius": (0.030, 0.050),
        "height": (0.085, 0.120),
        "handle_ring_r": (0.015, 0.024),
        "handle_tube_r": (0.004, 0.006),
    },
    "bottle": {
        "body_radius": (0.025, 0.040),
        "neck_height": (0.090, 0.140),
        "neck_length": (0.020, 0.050),
        "neck_radius": (0.010, 0.020),
    },
    "bowl": {
        "radius": (0.050, 0.080),
        "thickness": (0.0025, 0.0050),
        "cap_angle": (1.20, 1.70),
    },
}

MUG_WALL = 0.005
MUG_BASE = 0.006
HANDLE_CAP_ANGLE = 1.6
HANDLE_HEIGHT_FRAC = 0.45


@dataclass(frozen=True)
class ObjectModel:
    category: str
    sdf: SdfScene
    surface: np.ndarray  # (s, 3), object frame, |sdf| <= 1e-3 everywhere
    grasp_offset: Pose  # object pose expressed in the gripper frame
    keypoints_obj: np.ndarray  # (4, 3) along the central axis
    shape_params: dict
    feature_masks: dict = field(default_factory=dict)

    @property
    def height(self) -> float:
        return float(self.shape_params["total_height"])

    @property
    def grasp_point(self) -> np.ndarray:
        """Gripper origin expressed in the object frame."""
        return self.grasp_offset.inverse().position


@dataclass(frozen=True)
class EnvironmentModel:
    kind: str
    sdf: SdfScene
    keypoints_env: np.ndarray  # (4, 3) target axis points
    slot_frame: Pose
    success_region: tuple[np.ndarray, np.ndarray]  # AABB (lo, hi)
    goal_orientation: np.ndarray  # reference quaternion for the seated object
    params: dict


def _validate_params(category: str, params: dict) -> None:
    for key, (lo, hi) in _PARAM_RANGES[category].items():
        if key not in params:
            raise ValueError(f"{category} params missing '{key}'")
        v = float(params[key])
        if not lo <= v <= hi:
            raise ValueError(f"{category} param '{key}'={v} outside [{lo}, {hi}]")


def _axis_keypoints(total_height: float) -> np.ndarray:
    z = np.array([0.0, total_height / 3.0, 2.0 * total_height / 3.0, total_height])
    return np.stack([np.zeros(4), np.zeros(4), z], axis=1)


def make_object(category: str, shape_params: dict | None = None, seed: int = 0,
                surface_count: int = 4096) -> ObjectModel:
    """Build a procedural object; deterministic per (params, seed)."""
    if category not in CATEGORIES:
        raise ValueError(f"unknown category '{category}'")
    params = dict(DEFAULT_SHAPE_LIBRARY[category][0] if shape_params is None else shape_params)
    _validate_params(category, params)

    if category == "mug":
        r = params["body_radius"]
        h = params["height"]
        ring = params["handle_ring_r"]
        tube = params["handle_tube_r"]
        wall = Transformed(
            Tube(r - MUG_WALL, r, 0.5 * (h - 0.5 * MUG_BASE)),
            Pose.from_parts([0, 0, 0.5 * (h + 0.5 * MUG_BASE)]),
        )
        base = Transformed(CappedCylinder(r, 0.5 * MUG_BASE), Pose.from_parts([0, 0, 0.5 * MUG_BASE]))
        # Handle: torus arc in the xz-plane, bulging along +x, rounded ends in the wall.
        # Torus frame axes (x, y, z) map to object (z, x, y).
        handle_rot = np.array([0.5, -0.5, -0.5, -0.5])  # maps ex->ez, ey->ex, ez->ey
        handle_center = np.array([r - 0.001, 0.0, HANDLE_HEIGHT_FRAC * h])
        handle = Transformed(
            CappedTorus(ring, tube, HANDLE_CAP_ANGLE),
            Pose(handle_center, handle_rot),
        )
        root = Union(wall, base, handle)
        total_height = h
        grasp_point = np.array([-r, 0.0, 0.55 * h])
        params["handle_extent"] = r - 0.001 + ring + tube
        params["handle_top"] = HANDLE_HEIGHT_FRAC * h + ring + tube
        params["handle_bottom"] = HANDLE_HEIGHT_FRAC * h - ring - tube
    elif category == "bottle":
        rb = params["body_radius"]
        nh = params["neck_height"]
        nl = params["neck_length"]
        rn = params["neck_radius"]
        if rn >= rb:
            raise ValueError("neck_radius must be smaller than body_radius")
        body = Transformed(CappedCylinder(rb, 0.5 * nh), Pose.from_parts([0, 0, 0.5 * nh]))
        neck = Transformed(
            CappedCone(rb, rn, 0.5 * nl), Pose.from_parts([0, 0, nh + 0.5 * nl])
        )
        lip = Transformed(CappedCylinder(rn, 0.006), Pose.from_parts([0, 0, nh + nl + 0.004]))
        root = Union(body, neck, lip)
        total_height = nh + nl + 0.010
        grasp_point = np.array([-rb, 0.0, nh])
    else:  # bowl
        radius = params["radius"]
        t = params["thickness"]
        cap = params["cap_angle"]
        root = Transformed(ArcShell(radius, t, cap), Pose.from_parts([0, 0, radius + t]))
        rim_z = (radius + t) - radius * np.cos(cap)
        total_height = rim_z + t
        rim_radius = radius * np.sin(cap)
        grasp_point = np.array([-rim_radius, 0.0, rim_z])
        params["rim_radius"] = rim_radius
        params["rim_outer_radius"] = rim_radius + t

    params["total_height"] = total_height
    scene = SdfScene(root)
    surface = scene.sample_surface(surface_count, seed=seed, tol=1e-6)
    masks = {}
    if category == "mug":
        masks["handle"] = surface[:, 0] > params["body_radius"] + 1e-4
    return ObjectModel(
        category=category,
        sdf=scene,
        surface=surface,
        grasp_offset=Pose(-grasp_point, np.array([1.0, 0.0, 0.0, 0.0])),
        keypoints_obj=_axis_keypoints(total_height),
        shape_params=params,
        feature_masks=masks,
    )


def object_from_library(category: str, shape_index: int, seed: int = 0) -> ObjectModel:
    return make_object(category, DEFAULT_SHAPE_LIBRARY[category][shape_index], seed=seed)


def sample_grasp(obj: ObjectModel) -> Pose:
    """The object's fixed grasp offset; identical on every call."""
    return obj.grasp_offset


def make_environment(kind: str, params: dict) -> EnvironmentModel:
    """Build an environment sized for the object described in ``params``.

    Cupholder keys: mug_radius, mug_height, handle_tube_r, handle_bottom,
    handle_extent, clearance (diametral, default 0.01), slot_clearance.
    Dishrack keys: bowl_rim_outer_radius, bowl_height, divider_count,
    gap_clearance.  Table keys: extent.
    """
    params = dict(params)
    if kind == "cupholder":
        clearance = float(params.setdefault("clearance", 0.010))
        if clearance <= 0:
            raise ValueError("clearance must be positive")
        mug_r = float(params["mug_radius"])
        mug_h = float(params["mug_height"])
        handle_tube = float(params["handle_tube_r"])
        slot_clearance = float(params.setdefault("slot_clearance", 0.010))
        wall = float(params.setdefault("wall", 0.008))
        base_t = float(params.setdefault("base_thickness", 0.008))
        inner_r = mug_r + 0.5 * clearance
        outer_r = inner_r + wall
        rim_h = base_t + 0.85 * mug_h
        tube_node = Transformed(
            Tube(inner_r, outer_r, 0.5 * (rim_h - base_t)),
            Pose.from_parts([0, 0, 0.5 * (rim_h + base_t)]),
        )
        base_node = Transformed(CappedCylinder(outer_r, 0.5 * base_t), Pose.from_parts([0, 0, 0.5 * base_t]))
        slot_halfwidth = handle_tube + 0.5 * slot_clearance
        slot_bottom = base_t + float(params["handle_bottom"]) - 0.004
        slot_box = Transformed(
            Box([0.5 * (outer_r - inner_r) + 0.004, slot_halfwidth, 0.5 * (rim_h + 0.02 - slot_bottom)]),
            Pose.from_parts([0.5 * (inner_r + outer_r), 0.0, 0.5 * (slot_bottom + rim_h + 0.02)]),
        )
        table = HalfSpace(0.0, (0.30, 0.30))
        root = Union(Difference(Union(tube_node, base_node), slot_box), table)
        scene = SdfScene(root, bounds=(np.array([-0.3, -0.3, -0.05]), np.array([0.3, 0.3, rim_h + 0.1])))
        keypoints = _axis_keypoints(mug_h) + np.array([0.0, 0.0, base_t])
        slot_frame = Pose.from_parts([0.5 * (inner_r + outer_r), 0.0, 0.5 * (slot_bottom + rim_h)])
        region = (
            np.array([-inner_r, -inner_r, base_t - 1e-4]),
            np.array([inner_r, inner_r, rim_h]),
        )
        params.update(
            inner_radius=inner_r, outer_radius=outer_r, rim_height=rim_h,
            slot_halfwidth=slot_halfwidth, slot_bottom=slot_bottom, floor_z=base_t,
        )
        return EnvironmentModel("cupholder", scene, keypoints, slot_frame, region,
                                np.array([1.0, 0.0, 0.0, 0.0]), params)

    if kind == "dishrack":
        divider_count = int(params.setdefault("divider_count", 5))
        if divider_count < 3:
            raise ValueError("dishrack needs at least 3 dividers")
        gap_clearance = float(params.setdefault("gap_clearance", 0.015))
        if gap_clearance <= 0:
            raise ValueError("gap_clearance must be positive")
        bowl_w = 2.0 * float(params["bowl_rim_outer_radius"])
        bowl_h = float(params["bowl_height"])
        dt = float(params.setdefault("divider_thickness", 0.008))
        base_t = float(params.setdefault("base_thickness", 0.010))
        gap = bowl_w + gap_clearance
        depth = float(params.setdefault("depth", max(0.18, bowl_w + 0.06)))
        divider_h = 0.75 * bowl_h
        span = (divider_count - 1) * (gap + dt)
        x0 = -0.5 * span
        length = span + dt + 0.04
        nodes = [
            Transformed(Box([0.5 * length, 0.5 * depth, 0.5 * base_t]), Pose.from_parts([0, 0, 0.5 * base_t]))
        ]
        divider_x = []
        for i in range(divider_count):
            x = x0 + i * (gap + dt)
            divider_x.append(x)
            nodes.append(
                Transformed(
                    Box([0.5 * dt, 0.5 * depth, 0.5 * divider_h]),
                    Pose.from_parts([x, 0, base_t + 0.5 * divider_h]),
                )
            )
        nodes.append(HalfSpace(0.0, (0.5 * length + 0.1, 0.5 * depth + 0.1)))
        scene = SdfScene(
            Union(*nodes),
            bounds=(
                np.array([-0.5 * length - 0.1, -0.5 * depth - 0.1, -0.05]),
                np.array([0.5 * length + 0.1, 0.5 * depth + 0.1, base_t + divider_h + 0.1]),
            ),
        )
        target_gap = 1  # second slot from the left
        slot_x = 0.5 * (divider_x[target_gap] + divider_x[target_gap + 1])
        slot_frame = Pose.from_parts([slot_x, 0.0, base_t + 0.5 * bowl_h])
        half_gap_free = 0.5 * gap - 0.5 * dt
        region = (
            np.array([slot_x - half_gap_free, -0.4 * depth, base_t - 1e-4]),
            np.array([slot_x + half_gap_free, 0.4 * depth, base_t + divider_h]),
        )
        keypoints = _axis_keypoints(bowl_h) + np.array([slot_x, 0.0, base_t])
        params.update(
            gap=gap, divider_x=divider_x, divider_height=divider_h, divider_top=base_t + divider_h,
            floor_z=base_t, target_gap=target_gap,
        )
        return EnvironmentModel("dishrack", scene, keypoints, slot_frame, region,
                                np.array([1.0, 0.0, 0.0, 0.0]), params)

    if kind == "table":
        extent = params.setdefault("extent", 0.4)
        scene = SdfScene(HalfSpace(0.0, (extent, extent)),
                         bounds=(np.array([-extent, -extent, -0.05]), np.array([extent, extent, 0.3])))
        keypoints = _axis_keypoints(0.1)
        region = (np.array([-extent, -extent, -1e-4]), np.array([extent, extent, 0.3]))
        return EnvironmentModel("table", scene, keypoints, Pose.identity(), region,
                                np.array([1.0, 0.0, 0.0, 0.0]), params)

    raise ValueError(f"unknown environment kind '{kind}'")


def environment_for(obj: ObjectModel, kind: str, **overrides) -> EnvironmentModel:
    """Derive environment parameters from the paired object."""
    if kind == "cupholder":
        if obj.category != "mug":
            raise ValueError("cupholder environments pair with mugs")
        p = obj.shape_params
        params = {
            "mug_radius": p["body_radius"],
            "mug_height": p["height"],
            "handle_tube_r": p["handle_tube_r"],
            "handle_bottom": p["handle_bottom"],
            "handle_extent": p["handle_extent"],
        }
    elif kind == "dishrack":
        if obj.category != "bowl":
            raise ValueError("dishrack environments pair with bowls")
        params = {
            "bowl_rim_outer_radius": obj.shape_params["rim_outer_radius"],
            "bowl_height": obj.height,
        }
    elif kind == "table":
        params = {}
    else:
        raise ValueError(f"unknown environment kind '{kind}'")
    params.update(overrides)
    return make_environment(kind, params)


def seated_pose(obj: ObjectModel, env: EnvironmentModel) -> Pose:
    """Nominal fully-inserted object pose for the object/environment pair."""
    if env.kind == "cupholder":
        return Pose.from_parts([0.0, 0.0, env.params["floor_z"]], orientation=env.goal_orientation)
    if env.kind == "dishrack":
        return Pose.from_parts(
            [env.slot_frame.position[0], 0.0, env.params["floor_z"]],
            orientation=env.goal_orientation,
        )
    return Pose.from_parts([0.0, 0.0, 0.0])
