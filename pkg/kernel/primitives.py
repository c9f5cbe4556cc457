"""
Simple primitives with analytic point-membership tests.

Every primitive is built in its own local coordinate system and carries a
``Frame`` that places it in the world. All tests are closed (boundary points
are inside) and use exact comparisons.
"""
import logging
import math

import numpy as np
from scipy.spatial.transform import Rotation

from .exceptions import ParameterError

logger = logging.getLogger(__name__)

INSIDE = 'inside'
OUTSIDE = 'outside'
UNKNOWN = 'unknown'


def box_corners(lo, hi):
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    return np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])


def boxes_overlap(lo1, hi1, lo2, hi2):
    return bool(np.all(lo1 <= hi2) and np.all(lo2 <= hi1))


def _orthonormal(x, y, tol=1e-14):
    return abs(x @ x - 1.0) <= tol and abs(y @ y - 1.0) <= tol and abs(x @ y) <= tol


class Frame:
    """Rigid placement: origin O and orthonormal axes A1, A2, A3 (rows of T).

    World to local is ``T (P - O)``. ``allow_reflection`` admits det(T) = -1,
    which only mirror nodes use.
    """

    def __init__(self, origin=(0.0, 0.0, 0.0), x_axis=(1.0, 0.0, 0.0), y_axis=(0.0, 1.0, 0.0)):
        x = np.asarray(x_axis, dtype=float)
        y = np.asarray(y_axis, dtype=float)
        if np.linalg.norm(x) == 0 or np.linalg.norm(y) == 0:
            raise ParameterError("frame axes must be non-zero")
        if _orthonormal(x, y):
            # already orthonormal axes are kept bit for bit
            a1, a2 = x, y
        else:
            a1 = x / np.linalg.norm(x)
            y = y - (y @ a1) * a1
            if np.linalg.norm(y) <= 1e-12:
                raise ParameterError("frame axes are parallel")
            a2 = y / np.linalg.norm(y)
        self.origin = np.asarray(origin, dtype=float)
        self.matrix = np.array([a1, a2, np.cross(a1, a2)])

    @classmethod
    def from_matrix(cls, origin, matrix, allow_reflection=False):
        frame = cls.__new__(cls)
        frame.origin = np.asarray(origin, dtype=float)
        frame.matrix = np.asarray(matrix, dtype=float)
        if not np.allclose(frame.matrix @ frame.matrix.T, np.eye(3), atol=1e-12):
            raise ParameterError("frame matrix is not orthonormal")
        det = np.linalg.det(frame.matrix)
        if det < 0 and not allow_reflection:
            raise ParameterError("frame must be right-handed")
        return frame

    @classmethod
    def from_euler(cls, origin, angles, sequence='xyz', degrees=True):
        """Frame whose axes are the world axes rotated by the given Euler angles."""
        rotation = Rotation.from_euler(sequence, angles, degrees=degrees).as_matrix()
        return cls.from_matrix(origin, rotation.T)

    @classmethod
    def identity(cls):
        return cls()

    @property
    def axes(self):
        return self.matrix

    @property
    def is_identity(self):
        return bool(np.all(self.origin == 0) and np.all(self.matrix == np.eye(3)))

    def to_local(self, points):
        return (np.asarray(points, dtype=float) - self.origin) @ self.matrix.T

    def to_world(self, points):
        return np.asarray(points, dtype=float) @ self.matrix + self.origin

    def world_box(self, lo, hi):
        """World AABB of a local box."""
        corners = self.to_world(box_corners(lo, hi))
        return corners.min(axis=0), corners.max(axis=0)

    def local_box(self, lo, hi):
        """Local AABB of a world box (a superset of its image)."""
        corners = self.to_local(box_corners(lo, hi))
        return corners.min(axis=0), corners.max(axis=0)

    def to_dict(self):
        return {
            'origin': self.origin.tolist(),
            'x_axis': self.matrix[0].tolist(),
            'y_axis': self.matrix[1].tolist(),
        }


class Primitive:
    """Base class; subclasses implement ``_contains_local`` and ``local_bounds``."""
    kind = None
    convex = True

    def __init__(self, frame=None):
        self.frame = frame or Frame()

    def _contains_local(self, p):
        raise NotImplementedError

    def local_bounds(self):
        raise NotImplementedError

    def contains(self, point):
        return bool(self.contains_many(np.asarray(point, dtype=float)[None, :])[0])

    def contains_many(self, points):
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        return self._contains_local(self.frame.to_local(pts))

    def bounding_box(self):
        return self.frame.world_box(*self.local_bounds())

    def _outside_local_box(self, lo, hi):
        plo, phi = self.local_bounds()
        return not boxes_overlap(lo, hi, plo, phi)

    def classify_box(self, lo, hi):
        """Conservative class of a world box: inside, outside or unknown."""
        if not boxes_overlap(*self.bounding_box(), np.asarray(lo), np.asarray(hi)):
            return OUTSIDE
        local_lo, local_hi = self.frame.local_box(lo, hi)
        if self._outside_local_box(local_lo, local_hi):
            return OUTSIDE
        if self.convex and np.all(self.contains_many(box_corners(lo, hi))):
            return INSIDE
        return UNKNOWN

    def params(self):
        raise NotImplementedError

    def to_dict(self):
        data = {'primitive': self.kind}
        data.update(self.params())
        if not self.frame.is_identity:
            data['frame'] = self.frame.to_dict()
        return data

    def __repr__(self):
        args = ', '.join(f"{k}={v}" for k, v in self.params().items())
        return f"{type(self).__name__}({args})"


class Sphere(Primitive):
    kind = 'sphere'

    def __init__(self, radius, center=(0.0, 0.0, 0.0), frame=None):
        super().__init__(frame)
        if radius <= 0:
            raise ParameterError(f"sphere radius must be positive, got {radius}")
        self.radius = float(radius)
        self.center = np.asarray(center, dtype=float)

    def _contains_local(self, p):
        return np.sum((p - self.center) ** 2, axis=1) <= self.radius ** 2

    def local_bounds(self):
        return self.center - self.radius, self.center + self.radius

    def _outside_local_box(self, lo, hi):
        nearest = np.clip(self.center, lo, hi)
        return float(np.sum((nearest - self.center) ** 2)) > self.radius ** 2

    def params(self):
        return {'radius': self.radius, 'center': self.center.tolist()}


class Cuboid(Primitive):
    """Axis-aligned box between two diagonal corners (normalised on construction)."""
    kind = 'box'

    def __init__(self, start, end, frame=None):
        super().__init__(frame)
        start, end = np.asarray(start, dtype=float), np.asarray(end, dtype=float)
        self.start = np.minimum(start, end)
        self.end = np.maximum(start, end)
        if np.any(self.end - self.start <= 0):
            raise ParameterError("box has zero extent along an axis")

    def _contains_local(self, p):
        return np.all((p >= self.start) & (p <= self.end), axis=1)

    def local_bounds(self):
        return self.start.copy(), self.end.copy()

    @property
    def volume(self):
        return float(np.prod(self.end - self.start))

    def params(self):
        return {'start': self.start.tolist(), 'end': self.end.tolist()}


class Cylinder(Primitive):
    """Circular cylinder along local z, bottom centre ``center``, z in [0, height]."""
    kind = 'cylinder'

    def __init__(self, radius, height, center=(0.0, 0.0, 0.0), frame=None):
        super().__init__(frame)
        if radius <= 0 or height <= 0:
            raise ParameterError("cylinder radius and height must be positive")
        self.radius, self.height = float(radius), float(height)
        self.center = np.asarray(center, dtype=float)

    def _contains_local(self, p):
        q = p - self.center
        return (q[:, 0] ** 2 + q[:, 1] ** 2 <= self.radius ** 2) & (q[:, 2] >= 0) & (q[:, 2] <= self.height)

    def local_bounds(self):
        r = self.radius
        return self.center + [-r, -r, 0.0], self.center + [r, r, self.height]

    def _outside_local_box(self, lo, hi):
        if super()._outside_local_box(lo, hi):
            return True
        nearest = np.clip(self.center[:2], lo[:2], hi[:2])
        return float(np.sum((nearest - self.center[:2]) ** 2)) > self.radius ** 2

    def params(self):
        return {'radius': self.radius, 'height': self.height, 'center': self.center.tolist()}


class ConeFrustum(Primitive):
    """Cone frustum along local z: radius r(z) = (r1 - r0) / h * z + r0."""
    kind = 'cone'

    def __init__(self, bottom_radius, top_radius, height, center=(0.0, 0.0, 0.0), frame=None):
        super().__init__(frame)
        if bottom_radius <= 0 or top_radius < 0 or height <= 0:
            raise ParameterError("cone needs r0 > 0, r1 >= 0 and h > 0")
        self.bottom_radius, self.top_radius = float(bottom_radius), float(top_radius)
        self.height = float(height)
        self.center = np.asarray(center, dtype=float)

    def radius_at(self, z):
        return (self.top_radius - self.bottom_radius) / self.height * z + self.bottom_radius

    def _contains_local(self, p):
        q = p - self.center
        z = q[:, 2]
        inside_height = (z >= 0) & (z <= self.height)
        return inside_height & (q[:, 0] ** 2 + q[:, 1] ** 2 <= self.radius_at(z) ** 2)

    def local_bounds(self):
        r = max(self.bottom_radius, self.top_radius)
        return self.center + [-r, -r, 0.0], self.center + [r, r, self.height]

    @property
    def volume(self):
        r0, r1 = self.bottom_radius, self.top_radius
        return float(np.pi * self.height / 3.0 * (r0 * r0 + r0 * r1 + r1 * r1))

    def params(self):
        return {
            'bottom_radius': self.bottom_radius,
            'top_radius': self.top_radius,
            'height': self.height,
            'center': self.center.tolist(),
        }


class PyramidFrustum(Primitive):
    """Rectangular frustum: bottom box at z=0, top box at z=h, bounds linear in z."""
    kind = 'pyramid'

    def __init__(self, bottom, top, height, frame=None):
        super().__init__(frame)
        self.bottom = np.asarray(bottom, dtype=float).reshape(2, 2)
        self.top = np.asarray(top, dtype=float).reshape(2, 2)
        self.height = float(height)
        if self.height <= 0:
            raise ParameterError("pyramid height must be positive")
        if np.any(self.bottom[:, 1] <= self.bottom[:, 0]) or np.any(self.top[:, 1] < self.top[:, 0]):
            raise ParameterError("pyramid boxes must be given as [[x_start, x_end], [y_start, y_end]]")
        size = np.abs(self.bottom).max() + np.abs(self.top).max()
        if np.any(np.abs(self.bottom.mean(axis=1) - self.top.mean(axis=1)) > 1e-12 * size):
            raise ParameterError("pyramid bottom and top boxes must share a center")

    def _contains_local(self, p):
        z = p[:, 2]
        t = z / self.height
        lower = self.bottom[:, 0][None, :] + t[:, None] * (self.top[:, 0] - self.bottom[:, 0])[None, :]
        upper = self.bottom[:, 1][None, :] + t[:, None] * (self.top[:, 1] - self.bottom[:, 1])[None, :]
        xy = p[:, :2]
        return (z >= 0) & (z <= self.height) & np.all((xy >= lower) & (xy <= upper), axis=1)

    def local_bounds(self):
        lo = np.minimum(self.bottom[:, 0], self.top[:, 0])
        hi = np.maximum(self.bottom[:, 1], self.top[:, 1])
        return np.append(lo, 0.0), np.append(hi, self.height)

    def params(self):
        return {'bottom': self.bottom.tolist(), 'top': self.top.tolist(), 'height': self.height}


class Torus(Primitive):
    """Torus about local z: (sqrt(x^2 + y^2) - R)^2 + z^2 <= r^2."""
    kind = 'torus'
    convex = False

    def __init__(self, major_radius, minor_radius, center=(0.0, 0.0, 0.0), frame=None):
        super().__init__(frame)
        if minor_radius <= 0 or major_radius < minor_radius:
            raise ParameterError("torus needs 0 < r <= R")
        self.major_radius, self.minor_radius = float(major_radius), float(minor_radius)
        self.center = np.asarray(center, dtype=float)

    def _contains_local(self, p):
        q = p - self.center
        rho = np.sqrt(q[:, 0] ** 2 + q[:, 1] ** 2)
        return (rho - self.major_radius) ** 2 + q[:, 2] ** 2 <= self.minor_radius ** 2

    def local_bounds(self):
        R, r = self.major_radius, self.minor_radius
        return self.center + [-R - r, -R - r, -r], self.center + [R + r, R + r, r]

    def _core_distance(self, p):
        q = p - self.center
        return math.hypot(math.hypot(q[0], q[1]) - self.major_radius, q[2])

    def classify_box(self, lo, hi):
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        center = self.frame.to_local(0.5 * (lo + hi))
        half_diagonal = 0.5 * float(np.linalg.norm(hi - lo))
        distance = self._core_distance(center)
        if distance > self.minor_radius + half_diagonal:
            return OUTSIDE
        if distance + half_diagonal <= self.minor_radius:
            return INSIDE
        return super().classify_box(lo, hi)

    @property
    def volume(self):
        return float(2.0 * np.pi ** 2 * self.major_radius * self.minor_radius ** 2)

    def params(self):
        return {'major_radius': self.major_radius, 'minor_radius': self.minor_radius, 'center': self.center.tolist()}


class Wedge(Primitive):
    """Right triangular prism: x, y >= 0, x/a + y/b <= 1, z in [0, length]."""
    kind = 'wedge'

    def __init__(self, leg_x, leg_y, length, frame=None):
        super().__init__(frame)
        if leg_x <= 0 or leg_y <= 0 or length <= 0:
            raise ParameterError("wedge legs and length must be positive")
        self.leg_x, self.leg_y, self.length = float(leg_x), float(leg_y), float(length)

    def _contains_local(self, p):
        x, y, z = p[:, 0], p[:, 1], p[:, 2]
        # scaled form of x/a + y/b <= 1 keeps the hypotenuse exact at the corners
        return (x >= 0) & (y >= 0) & (x * self.leg_y + y * self.leg_x <= self.leg_x * self.leg_y) & (z >= 0) & (z <= self.length)

    def local_bounds(self):
        return np.zeros(3), np.array([self.leg_x, self.leg_y, self.length])

    @property
    def volume(self):
        return 0.5 * self.leg_x * self.leg_y * self.length

    def params(self):
        return {'leg_x': self.leg_x, 'leg_y': self.leg_y, 'length': self.length}


PRIMITIVES = {
    cls.kind: cls for cls in (Sphere, Cuboid, Cylinder, ConeFrustum, PyramidFrustum, Torus, Wedge)
}
