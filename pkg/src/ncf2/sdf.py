"""Signed distance fields: exact primitives, CSG composition, surface sampling.

Sign convention: negative inside material, positive in free space, meters.
Primitives are origin-centered and axis-aligned (z is the symmetry axis);
arbitrary placement goes through :class:`Transformed`.

Every node supports vectorized evaluation over an (m, 3) float array and can
emit uniform random samples of its own boundary surface.  Scene-level surface
sampling draws from all member primitives in proportion to surface area and
keeps only points that lie on the composed boundary, so CSG trimming is
handled by rejection.
"""

from __future__ import annotations

import numpy as np

from .transforms import Pose

SURFACE_TOL = 1e-7


def _norm(v: np.ndarray) -> np.ndarray:
    return np.linalg.norm(v, axis=-1)


def _box2d(px: np.ndarray, py: np.ndarray, bx: float, by: float) -> np.ndarray:
    """Exact 2D box SDF, half-extents (bx, by)."""
    dx = np.abs(px) - bx
    dy = np.abs(py) - by
    outside = np.sqrt(np.maximum(dx, 0.0) ** 2 + np.maximum(dy, 0.0) ** 2)
    inside = np.minimum(np.maximum(dx, dy), 0.0)
    return outside + inside


class SdfNode:
    """Base class for SDF scene-graph nodes."""

    def sdf(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def surface_area(self) -> float:
        raise NotImplementedError

    def sample_raw(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform samples of this node's own boundary, ignoring CSG trimming."""
        raise NotImplementedError


class Sphere(SdfNode):
    def __init__(self, radius: float):
        self.radius = float(radius)

    def sdf(self, p):
        return _norm(p) - self.radius

    def bounds(self):
        r = self.radius
        return -np.full(3, r), np.full(3, r)

    def surface_area(self):
        return 4.0 * np.pi * self.radius**2

    def sample_raw(self, count, rng):
        d = rng.normal(size=(count, 3))
        d /= _norm(d)[:, None]
        return self.radius * d


class Box(SdfNode):
    def __init__(self, half_extents):
        self.half = np.asarray(half_extents, dtype=np.float64).reshape(3)

    def sdf(self, p):
        q = np.abs(p) - self.half
        return _norm(np.maximum(q, 0.0)) + np.minimum(q.max(axis=-1), 0.0)

    def bounds(self):
        return -self.half.copy(), self.half.copy()

    def surface_area(self):
        a, b, c = self.half * 2.0
        return 2.0 * (a * b + b * c + a * c)

    def sample_raw(self, count, rng):
        a, b, c = self.half * 2.0
        areas = np.array([b * c, b * c, a * c, a * c, a * b, a * b])
        face = rng.choice(6, size=count, p=areas / areas.sum())
        uv = rng.uniform(-1.0, 1.0, size=(count, 2))
        pts = np.empty((count, 3))
        axis = face // 2
        sign = np.where(face % 2 == 0, 1.0, -1.0)
        for ax in range(3):
            m = axis == ax
            others = [i for i in range(3) if i != ax]
            pts[m, ax] = sign[m] * self.half[ax]
            pts[np.ix_(m, others)] = uv[m] * self.half[others]
        return pts


class CappedCylinder(SdfNode):
    """Solid cylinder along z with given radius and half-height."""

    def __init__(self, radius: float, half_height: float):
        self.radius = float(radius)
        self.half_height = float(half_height)

    def sdf(self, p):
        dr = _norm(p[..., :2]) - self.radius
        dz = np.abs(p[..., 2]) - self.half_height
        outside = np.sqrt(np.maximum(dr, 0.0) ** 2 + np.maximum(dz, 0.0) ** 2)
        return outside + np.minimum(np.maximum(dr, dz), 0.0)

    def bounds(self):
        r, h = self.radius, self.half_height
        return np.array([-r, -r, -h]), np.array([r, r, h])

    def surface_area(self):
        r, h = self.radius, self.half_height
        return 2.0 * np.pi * r * (2.0 * h) + 2.0 * np.pi * r**2

    def sample_raw(self, count, rng):
        r, h = self.radius, self.half_height
        side = 2.0 * np.pi * r * 2.0 * h
        cap = np.pi * r**2
        kind = rng.choice(3, size=count, p=np.array([side, cap, cap]) / (side + 2 * cap))
        theta = rng.uniform(0.0, 2.0 * np.pi, size=count)
        pts = np.empty((count, 3))
        m = kind == 0
        pts[m, 0] = r * np.cos(theta[m])
        pts[m, 1] = r * np.sin(theta[m])
        pts[m, 2] = rng.uniform(-h, h, size=m.sum())
        for k, z in ((1, h), (2, -h)):
            m = kind == k
            rad = r * np.sqrt(rng.uniform(0.0, 1.0, size=m.sum()))
            pts[m, 0] = rad * np.cos(theta[m])
            pts[m, 1] = rad * np.sin(theta[m])
            pts[m, 2] = z
        return pts


class Tube(SdfNode):
    """Hollow cylinder wall along z (exact, including the rim edges)."""

    def __init__(self, inner_radius: float, outer_radius: float, half_height: float):
        if not 0.0 < inner_radius < outer_radius:
            raise ValueError("need 0 < inner_radius < outer_radius")
        self.ra = float(inner_radius)
        self.rb = float(outer_radius)
        self.half_height = float(half_height)

    def sdf(self, p):
        rho = _norm(p[..., :2])
        rmid = 0.5 * (self.ra + self.rb)
        return _box2d(rho - rmid, p[..., 2], 0.5 * (self.rb - self.ra), self.half_height)

    def bounds(self):
        r, h = self.rb, self.half_height
        return np.array([-r, -r, -h]), np.array([r, r, h])

    def surface_area(self):
        h2 = 2.0 * self.half_height
        ann = np.pi * (self.rb**2 - self.ra**2)
        return 2.0 * np.pi * (self.ra + self.rb) * h2 + 2.0 * ann

    def sample_raw(self, count, rng):
        h = self.half_height
        areas = np.array(
            [
                2.0 * np.pi * self.rb * 2.0 * h,
                2.0 * np.pi * self.ra * 2.0 * h,
                np.pi * (self.rb**2 - self.ra**2),
                np.pi * (self.rb**2 - self.ra**2),
            ]
        )
        kind = rng.choice(4, size=count, p=areas / areas.sum())
        theta = rng.uniform(0.0, 2.0 * np.pi, size=count)
        pts = np.empty((count, 3))
        for k, r in ((0, self.rb), (1, self.ra)):
            m = kind == k
            pts[m, 0] = r * np.cos(theta[m])
            pts[m, 1] = r * np.sin(theta[m])
            pts[m, 2] = rng.uniform(-h, h, size=m.sum())
        for k, z in ((2, h), (3, -h)):
            m = kind == k
            rad = np.sqrt(rng.uniform(self.ra**2, self.rb**2, size=m.sum()))
            pts[m, 0] = rad * np.cos(theta[m])
            pts[m, 1] = rad * np.sin(theta[m])
            pts[m, 2] = z
        return pts


class CappedTorus(SdfNode):
    """Torus arc in the xy-plane with rounded (spherical) ends.

    The ring has radius ``ring_r`` about the origin; the arc spans polar angle
    [-cap_angle, cap_angle] measured from the +y axis; the tube radius is
    ``tube_r``.
    """

    def __init__(self, ring_r: float, tube_r: float, cap_angle: float):
        self.ring_r = float(ring_r)
        self.tube_r = float(tube_r)
        self.cap = float(cap_angle)
        self._sc = np.array([np.sin(self.cap), np.cos(self.cap)])

    def sdf(self, p):
        sc, ra = self._sc, self.ring_r
        px = np.abs(p[..., 0])
        py = p[..., 1]
        on_arc = sc[1] * px <= sc[0] * py
        k = np.where(on_arc, np.hypot(px, py), px * sc[0] + py * sc[1])
        d2 = np.sum(p * p, axis=-1) + ra * ra - 2.0 * ra * k
        return np.sqrt(np.maximum(d2, 0.0)) - self.tube_r

    def bounds(self):
        r = self.ring_r + self.tube_r
        return np.array([-r, -r, -self.tube_r]), np.array([r, r, self.tube_r])

    def surface_area(self):
        arc = 2.0 * self.cap * self.ring_r * 2.0 * np.pi * self.tube_r
        return arc + 4.0 * np.pi * self.tube_r**2

    def sample_raw(self, count, rng):
        arc_area = 2.0 * self.cap * self.ring_r * 2.0 * np.pi * self.tube_r
        end_area = 4.0 * np.pi * self.tube_r**2
        n_arc = int(round(count * arc_area / (arc_area + end_area)))
        phi = rng.uniform(-self.cap, self.cap, size=n_arc)
        psi = rng.uniform(0.0, 2.0 * np.pi, size=n_arc)
        d = np.stack([np.sin(phi), np.cos(phi), np.zeros_like(phi)], axis=-1)
        ring = self.ring_r * d
        offset = self.tube_r * (np.cos(psi)[:, None] * d)
        offset[:, 2] += self.tube_r * np.sin(psi)
        arc_pts = ring + offset
        n_end = count - n_arc
        dirs = rng.normal(size=(n_end, 3))
        dirs /= _norm(dirs)[:, None]
        which = rng.integers(0, 2, size=n_end) * 2 - 1
        ends = np.stack(
            [which * self.ring_r * self._sc[0], np.full(n_end, self.ring_r * self._sc[1]),
             np.zeros(n_end)],
            axis=-1,
        )
        return np.concatenate([arc_pts, ends + self.tube_r * dirs], axis=0)


class ArcShell(SdfNode):
    """Spherical shell segment (a bowl): revolved 2D arc, exact with a round lip.

    Mid-surface radius ``radius``, half-thickness ``thickness``; the shell
    spans polar angle [0, cap_angle] measured from the -z axis (so the bowl
    opens upward and its lowest point is at z = -(radius + thickness)).
    """

    def __init__(self, radius: float, thickness: float, cap_angle: float):
        if not 0.0 < thickness < radius:
            raise ValueError("need 0 < thickness < radius")
        self.radius = float(radius)
        self.thickness = float(thickness)
        self.cap = float(cap_angle)
        self._sc = np.array([np.sin(self.cap), np.cos(self.cap)])

    def sdf(self, p):
        # Profile coordinates: qx = cylindrical radius, qy = -z (arc opens to -z).
        qx = _norm(p[..., :2])
        qy = -p[..., 2]
        sc, ra = self._sc, self.radius
        on_arc = sc[1] * qx <= sc[0] * qy
        d = np.where(
            on_arc,
            np.abs(np.hypot(qx, qy) - ra),
            np.hypot(qx - sc[0] * ra, qy - sc[1] * ra),
        )
        return d - self.thickness

    def bounds(self):
        r = self.radius + self.thickness
        lo_z = -r
        hi_z = -self.radius * np.cos(self.cap) + self.thickness
        return np.array([-r, -r, lo_z]), np.array([r, r, hi_z])

    def surface_area(self):
        r_out = self.radius + self.thickness
        r_in = self.radius - self.thickness
        cap_frac = 1.0 - np.cos(self.cap)
        caps = 2.0 * np.pi * (r_out**2 + r_in**2) * cap_frac
        lip = 2.0 * np.pi * (self.radius * np.sin(self.cap)) * np.pi * self.thickness
        return caps + lip

    def sample_raw(self, count, rng):
        r_out = self.radius + self.thickness
        r_in = self.radius - self.thickness
        cap_frac = 1.0 - np.cos(self.cap)
        a_out = 2.0 * np.pi * r_out**2 * cap_frac
        a_in = 2.0 * np.pi * r_in**2 * cap_frac
        a_lip = 2.0 * np.pi * (self.radius * np.sin(self.cap)) * np.pi * self.thickness
        areas = np.array([a_out, a_in, a_lip])
        kind = rng.choice(3, size=count, p=areas / areas.sum())
        pts = np.empty((count, 3))
        theta = rng.uniform(0.0, 2.0 * np.pi, size=count)
        for k, r in ((0, r_out), (1, r_in)):
            m = kind == k
            cosphi = rng.uniform(np.cos(self.cap), 1.0, size=m.sum())
            sinphi = np.sqrt(1.0 - cosphi**2)
            pts[m, 0] = r * sinphi * np.cos(theta[m])
            pts[m, 1] = r * sinphi * np.sin(theta[m])
            pts[m, 2] = -r * cosphi
        m = kind == 2
        n_lip = m.sum()
        psi = rng.uniform(0.0, np.pi, size=n_lip)
        rho_c = self.radius * self._sc[0]
        z_c = -self.radius * self._sc[1]
        # Half-torus lip: offset in the (radial, z) plane, outward of the arc end.
        ang = self.cap + (psi - 0.5 * np.pi)
        rho = rho_c + self.thickness * np.sin(ang)
        pts[m, 0] = rho * np.cos(theta[m])
        pts[m, 1] = rho * np.sin(theta[m])
        pts[m, 2] = z_c + self.thickness * np.cos(ang)
        return pts


class CappedCone(SdfNode):
    """Solid truncated cone along z: radius r1 at z=-half_height, r2 at z=+half_height."""

    def __init__(self, r1: float, r2: float, half_height: float):
        self.r1 = float(r1)
        self.r2 = float(r2)
        self.half_height = float(half_height)

    def sdf(self, p):
        h, r1, r2 = self.half_height, self.r1, self.r2
        qx = _norm(p[..., :2])
        qy = p[..., 2]
        k1 = np.array([r2, h])
        k2 = np.array([r2 - r1, 2.0 * h])
        ca_x = qx - np.minimum(qx, np.where(qy < 0.0, r1, r2))
        ca_y = np.abs(qy) - h
        t = np.clip(((k1[0] - qx) * k2[0] + (k1[1] - qy) * k2[1]) / (k2 @ k2), 0.0, 1.0)
        cb_x = qx - k1[0] + k2[0] * t
        cb_y = qy - k1[1] + k2[1] * t
        s = np.where((cb_x < 0.0) & (ca_y < 0.0), -1.0, 1.0)
        return s * np.sqrt(np.minimum(ca_x**2 + ca_y**2, cb_x**2 + cb_y**2))

    def bounds(self):
        r = max(self.r1, self.r2)
        h = self.half_height
        return np.array([-r, -r, -h]), np.array([r, r, h])

    def surface_area(self):
        slant = np.hypot(self.r1 - self.r2, 2.0 * self.half_height)
        return (
            np.pi * (self.r1 + self.r2) * slant
            + np.pi * self.r1**2
            + np.pi * self.r2**2
        )

    def sample_raw(self, count, rng):
        slant = np.hypot(self.r1 - self.r2, 2.0 * self.half_height)
        areas = np.array(
            [np.pi * (self.r1 + self.r2) * slant, np.pi * self.r1**2, np.pi * self.r2**2]
        )
        kind = rng.choice(3, size=count, p=areas / areas.sum())
        theta = rng.uniform(0.0, 2.0 * np.pi, size=count)
        pts = np.empty((count, 3))
        m = kind == 0
        # Lateral sampling: radius is linear in z, density ~ radius for uniformity.
        u = rng.uniform(0.0, 1.0, size=m.sum())
        if abs(self.r1 - self.r2) < 1e-12:
            t = u
        else:
            # Inverse CDF for density proportional to r(t) = r1 + (r2 - r1) t.
            a, b = self.r1, self.r2 - self.r1
            t = (np.sqrt(a**2 + u * (2 * a * b + b**2)) - a) / b
        r = self.r1 + (self.r2 - self.r1) * t
        pts[m, 0] = r * np.cos(theta[m])
        pts[m, 1] = r * np.sin(theta[m])
        pts[m, 2] = -self.half_height + 2.0 * self.half_height * t
        for k, rad, z in ((1, self.r1, -self.half_height), (2, self.r2, self.half_height)):
            m = kind == k
            rr = rad * np.sqrt(rng.uniform(0.0, 1.0, size=m.sum()))
            pts[m, 0] = rr * np.cos(theta[m])
            pts[m, 1] = rr * np.sin(theta[m])
            pts[m, 2] = z
        return pts


class HalfSpace(SdfNode):
    """Material below z = level; sampling is confined to a finite xy extent."""

    def __init__(self, level: float = 0.0, extent=(0.5, 0.5)):
        self.level = float(level)
        self.extent = np.asarray(extent, dtype=np.float64).reshape(2)

    def sdf(self, p):
        return p[..., 2] - self.level

    def bounds(self):
        ex, ey = self.extent
        return np.array([-ex, -ey, self.level - 0.05]), np.array([ex, ey, self.level])

    def surface_area(self):
        return float(4.0 * self.extent[0] * self.extent[1])

    def sample_raw(self, count, rng):
        xy = rng.uniform(-self.extent, self.extent, size=(count, 2))
        return np.concatenate([xy, np.full((count, 1), self.level)], axis=1)


class Transformed(SdfNode):
    """A node rigidly placed by a pose (node local frame -> scene frame)."""

    def __init__(self, node: SdfNode, pose: Pose):
        self.node = node
        self.pose = pose
        self._inv = pose.inverse()

    def sdf(self, p):
        return self.node.sdf(self._inv.transform(p))

    def bounds(self):
        lo, hi = self.node.bounds()
        corners = np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
        world = self.pose.transform(corners)
        return world.min(axis=0), world.max(axis=0)

    def surface_area(self):
        return self.node.surface_area()

    def sample_raw(self, count, rng):
        return self.pose.transform(self.node.sample_raw(count, rng))


class Union(SdfNode):
    def __init__(self, *nodes: SdfNode):
        if not nodes:
            raise ValueError("union of nothing")
        self.nodes = list(nodes)

    def sdf(self, p):
        d = self.nodes[0].sdf(p)
        for n in self.nodes[1:]:
            d = np.minimum(d, n.sdf(p))
        return d

    def bounds(self):
        los, his = zip(*(n.bounds() for n in self.nodes))
        return np.min(los, axis=0), np.max(his, axis=0)

    def surface_area(self):
        return sum(n.surface_area() for n in self.nodes)

    def sample_raw(self, count, rng):
        areas = np.array([n.surface_area() for n in self.nodes])
        alloc = _allocate(count, areas, rng)
        return np.concatenate(
            [n.sample_raw(k, rng) for n, k in zip(self.nodes, alloc) if k > 0], axis=0
        )


class Difference(SdfNode):
    """base minus every cut node."""

    def __init__(self, base: SdfNode, *cuts: SdfNode):
        self.base = base
        self.cuts = list(cuts)

    def sdf(self, p):
        d = self.base.sdf(p)
        for c in self.cuts:
            d = np.maximum(d, -c.sdf(p))
        return d

    def bounds(self):
        return self.base.bounds()

    def surface_area(self):
        return self.base.surface_area() + sum(c.surface_area() for c in self.cuts)

    def sample_raw(self, count, rng):
        nodes = [self.base] + self.cuts
        areas = np.array([n.surface_area() for n in nodes])
        alloc = _allocate(count, areas, rng)
        return np.concatenate(
            [n.sample_raw(k, rng) for n, k in zip(nodes, alloc) if k > 0], axis=0
        )


def _allocate(count: int, areas: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Integer allocation of `count` samples proportional to areas."""
    p = areas / areas.sum()
    alloc = np.floor(count * p).astype(int)
    short = count - alloc.sum()
    if short > 0:
        alloc += np.bincount(rng.choice(len(areas), size=short, p=p), minlength=len(areas))
    return alloc


class SdfScene:
    """A composed SDF with bounds and a dense boundary sample set for oracles."""

    def __init__(self, root: SdfNode, bounds=None, surface_count: int = 16384, seed: int = 0):
        self.root = root
        if bounds is None:
            lo, hi = root.bounds()
        else:
            lo, hi = np.asarray(bounds[0], dtype=np.float64), np.asarray(bounds[1], dtype=np.float64)
        self.bounds = (lo, hi)
        self._surface_count = surface_count
        self._seed = seed
        self._surface_cache: np.ndarray | None = None

    def sdf(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        if points.shape[-1] != 3:
            raise ValueError(f"points must be (..., 3), got {points.shape}")
        if not np.isfinite(points).all():
            raise ValueError("points contain non-finite values")
        return self.root.sdf(points)

    def gradient(self, points: np.ndarray, h: float = 1e-5) -> np.ndarray:
        """Central finite-difference gradient of the field at each point."""
        points = np.asarray(points, dtype=np.float64)
        grad = np.empty_like(points)
        for i in range(3):
            d = np.zeros(3)
            d[i] = h
            grad[..., i] = (self.root.sdf(points + d) - self.root.sdf(points - d)) / (2.0 * h)
        return grad

    @property
    def surface_samples(self) -> np.ndarray:
        if self._surface_cache is None:
            self._surface_cache = self.sample_surface(self._surface_count, self._seed)
        return self._surface_cache

    def sample_surface(self, count: int, seed: int = 0, tol: float = SURFACE_TOL) -> np.ndarray:
        """Uniform-ish samples of the composed boundary, |sdf| <= tol at each."""
        rng = np.random.default_rng(seed)
        kept: list[np.ndarray] = []
        total = 0
        for _ in range(200):
            raw = self.root.sample_raw(max(count, 1024), rng)
            good = raw[np.abs(self.root.sdf(raw)) <= tol]
            if len(good):
                kept.append(good)
                total += len(good)
            if total >= count:
                break
        else:
            raise RuntimeError("surface sampling failed to converge; scene may be degenerate")
        pts = np.concatenate(kept, axis=0)
        idx = rng.choice(len(pts), size=count, replace=False)
        return pts[idx]


def sdf_eval(scene: SdfScene, points: np.ndarray) -> np.ndarray:
    """Evaluate a scene's signed distance at (m, 3) points."""
    return scene.sdf(points)
