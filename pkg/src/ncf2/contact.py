"""Query-point sampling and the ground-truth extrinsic contact oracle.

Ground truth: a query point (expressed in the world frame) is in extrinsic
contact iff the environment's signed distance at that point is at most
``eps_c`` (2 mm by default).  Labels are strictly binary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sdf import SdfScene

EPS_CONTACT = 2e-3


@dataclass(frozen=True)
class QueryPointSet:
    """Fixed sample of object-surface points, in the grasp (object) frame."""

    points: np.ndarray  # (n, 3)

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=np.float64))
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise ValueError(f"query points must be (n, 3), got {self.points.shape}")

    def __len__(self) -> int:
        return len(self.points)


def label_contacts(world_points: np.ndarray, env: SdfScene, eps_c: float = EPS_CONTACT) -> np.ndarray:
    """Binary contact labels: 1 where env sdf <= eps_c."""
    if eps_c <= 0.0:
        raise ValueError(f"eps_c must be positive, got {eps_c}")
    d = env.sdf(world_points)
    return (d <= eps_c).astype(np.uint8)


def farthest_point_sample(
    surface: np.ndarray,
    n: int,
    seed: int = 0,
    start_index: int | None = None,
) -> QueryPointSet:
    """Greedy farthest-point subsample of an (m, 3) point set.

    Deterministic given the seed; the seed only chooses the start point, so
    the selected point set is invariant to input-order permutations when the
    same start point is supplied explicitly via ``start_index``.
    """
    surface = np.asarray(surface, dtype=np.float64)
    m = len(surface)
    if n > m:
        raise ValueError(f"cannot pick {n} points from {m}")
    if start_index is None:
        start_index = int(np.random.default_rng(seed).integers(0, m))
    chosen = np.empty(n, dtype=np.int64)
    chosen[0] = start_index
    d2 = np.sum((surface - surface[start_index]) ** 2, axis=1)
    for i in range(1, n):
        idx = int(np.argmax(d2))
        chosen[i] = idx
        d2 = np.minimum(d2, np.sum((surface - surface[idx]) ** 2, axis=1))
    return QueryPointSet(surface[chosen])


def net_contact_normal(labels: np.ndarray, world_points: np.ndarray, env: SdfScene) -> np.ndarray:
    """Mean environment-SDF gradient over contact points; zero when no contact.

    Serves as a crude net-wrench direction proxy for the tactile renderer:
    it points away from the environment surface, averaged over the patch.
    """
    labels = np.asarray(labels)
    world_points = np.asarray(world_points, dtype=np.float64)
    if labels.shape[0] != world_points.shape[0]:
        raise ValueError("labels and points must align")
    mask = labels.astype(bool)
    if not mask.any():
        return np.zeros(3)
    return env.gradient(world_points[mask]).mean(axis=0)
