"""
Extended primitives: extrusions, revolutions, sweeps and lofts.

Membership is reduced to the 2D sketch test: the query point is mapped into
the sketch plane that passes through it, and the sketch decides. For sweeps
and lofts the plane is found from the closest point on the path; rotated
sketch planes need an extra root search along the path.
"""
import logging
import math

import numpy as np
from scipy.spatial.transform import Rotation

from . import conf
from .exceptions import ParameterError, RegularityError
from .primitives import OUTSIDE, UNKNOWN, Frame, boxes_overlap

logger = logging.getLogger(__name__)

FRAME_MODES = ('frenet', 'constant_dihedral', 'parallel', 'interpolated')
CURVATURE_TOL = 1e-10
PLANE_TOL = 1e-9
ROOT_MAX_ITERATIONS = 50
BISECTION_STEPS = 60


def dihedral_matrix(angles, sequence='xyz', degrees=True):
    """Relation matrix T between path frame A and sketch frame B from Euler angles."""
    return Rotation.from_euler(sequence, angles, degrees=degrees).as_matrix()


def _check_relation(T, name):
    T = np.asarray(T, dtype=float)
    if T.shape != (3, 3) or not np.allclose(T @ T.T, np.eye(3), atol=1e-9):
        raise ParameterError(f"{name} must be an orthonormal 3x3 matrix")
    return T


def _frenet_normal(d1, d2):
    if np.linalg.norm(np.cross(d2, d1)) <= CURVATURE_TOL * float(d1 @ d1):
        return None
    t = d1 / np.linalg.norm(d1)
    n = d2 - (d2 @ t) * t
    return n / np.linalg.norm(n)


def _initial_normal(t):
    axis = np.eye(3)[int(np.argmin(np.abs(t)))]
    n = axis - (axis @ t) * t
    return n / np.linalg.norm(n)


def _transport(normal, t):
    n = normal - (normal @ t) * t
    length = np.linalg.norm(n)
    if length <= 1e-12:
        return _initial_normal(t)
    return n / length


class PathFrames:
    """Moving frames A(xi) along a path.

    Frenet frames (A1 = N, A2 = T x N, A3 = T) where the curvature is
    non-degenerate; elsewhere the last frame is carried along by projection
    onto the new normal plane, starting from the world axis least aligned
    with the tangent.
    """

    def __init__(self, path):
        if path.dimension != 3:
            raise ParameterError("sweep paths must be 3D curves")
        self.path = path
        self.xis = path.sample_xi
        normals = []
        previous = None
        for xi in self.xis:
            _, d1, d2 = path.derivatives(xi, 2)
            t = self._tangent(d1, xi)
            n = _frenet_normal(d1, d2)
            if n is None:
                n = _transport(previous, t) if previous is not None else _initial_normal(t)
            normals.append(n)
            previous = n
        self.normals = np.array(normals)

    def _tangent(self, d1, xi):
        speed = np.linalg.norm(d1)
        if speed <= 1e-14 * (1.0 + self.path.diameter):
            raise RegularityError(f"path tangent vanishes at xi={xi}")
        return d1 / speed

    def frame(self, xi):
        C, d1, d2 = self.path.derivatives(xi, 2)
        t = self._tangent(d1, xi)
        n = _frenet_normal(d1, d2)
        if n is None:
            i = int(np.clip(np.searchsorted(self.xis, xi, side='right') - 1, 0, len(self.xis) - 1))
            n = _transport(self.normals[i], t)
        return Frame(C, n, np.cross(t, n))

    def axes_many(self, xis):
        """Origins and axes (n, T x N, T) of the frames at ``xis``, row-wise."""
        xis = np.asarray(xis, dtype=float)
        C, d1, d2 = self.path.derivatives_many(xis, 2)
        speed = np.linalg.norm(d1, axis=1)
        if np.any(speed <= 1e-14 * (1.0 + self.path.diameter)):
            bad = xis[int(np.argmin(speed))]
            raise RegularityError(f"path tangent vanishes at xi={bad}")
        t = d1 / speed[:, None]
        n = d2 - np.einsum('ij,ij->i', d2, t)[:, None] * t
        curved = np.linalg.norm(np.cross(d2, d1), axis=1) > CURVATURE_TOL * speed ** 2
        n_len = np.linalg.norm(n, axis=1)
        n[curved] /= n_len[curved, None]
        flat = np.flatnonzero(~curved)
        if len(flat):
            i = np.clip(np.searchsorted(self.xis, xis[flat], side='right') - 1, 0, len(self.xis) - 1)
            n[flat] = [_transport(self.normals[k], t[j]) for k, j in zip(i, flat)]
        return C, n, np.cross(t, n), t


def frenet_frame(path, xi):
    """Frame A(xi) of ``path`` with origin C(xi)."""
    return PathFrames(path).frame(xi)


class ExtendedSolid:
    """Common plumbing: bounding box, vectorised membership, box classification."""
    kind = None

    def contains_many(self, points):
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        return np.array([self.contains(p) for p in pts], dtype=bool)

    def bounding_box(self):
        raise NotImplementedError

    def _outside_bbox(self, P):
        lo, hi = self.bounding_box()
        return bool(np.any(P < lo) or np.any(P > hi))

    def classify_box(self, lo, hi):
        if not boxes_overlap(*self.bounding_box(), np.asarray(lo), np.asarray(hi)):
            return OUTSIDE
        return UNKNOWN


class ExtrudeSolid(ExtendedSolid):
    """Sketch in the local xy-plane moved along ``direction`` (local) by ``length``."""
    kind = 'extrude'

    def __init__(self, sketch, length, direction=(0.0, 0.0, 1.0), frame=None):
        self.sketch = sketch
        self.length = float(length)
        self.frame = frame or Frame()
        d = np.asarray(direction, dtype=float)
        if self.length <= 0:
            raise ParameterError("extrusion length must be positive")
        if np.linalg.norm(d) == 0 or d[2] <= 0:
            raise ParameterError("extrusion direction must leave the sketch plane (positive local z)")
        self.direction = d if abs(d @ d - 1.0) <= 1e-14 else d / np.linalg.norm(d)

    def contains(self, point):
        p = self.frame.to_local(np.asarray(point, dtype=float))
        distance = p[2] / self.direction[2]
        if distance < 0 or distance > self.length:
            return False
        return self.sketch.contains(p[:2] - distance * self.direction[:2])

    def contains_many(self, points):
        p = self.frame.to_local(np.asarray(points, dtype=float).reshape(-1, 3))
        distance = p[:, 2] / self.direction[2]
        flags = np.zeros(len(p), dtype=bool)
        within = (distance >= 0) & (distance <= self.length)
        if np.any(within):
            q = p[within, :2] - distance[within, None] * self.direction[None, :2]
            flags[within] = self.sketch.contains_many(q)
        return flags

    def bounding_box(self):
        lo, hi = self.sketch.bounding_box
        shift = self.length * self.direction
        local_lo = np.array([min(lo[0], lo[0] + shift[0]), min(lo[1], lo[1] + shift[1]), 0.0])
        local_hi = np.array([max(hi[0], hi[0] + shift[0]), max(hi[1], hi[1] + shift[1]), shift[2]])
        return self.frame.world_box(local_lo, local_hi)

    def to_dict(self):
        data = {
            'primitive': self.kind,
            'sketch': self.sketch,
            'length': self.length,
            'direction': self.direction.tolist(),
        }
        if not self.frame.is_identity:
            data['frame'] = self.frame.to_dict()
        return data


class RevolveSolid(ExtendedSolid):
    """Sketch (x = radius, y = height) revolved about the local z-axis by ``angle`` degrees."""
    kind = 'revolve'

    def __init__(self, sketch, angle=360.0, frame=None):
        self.sketch = sketch
        self.angle = float(angle)
        self.frame = frame or Frame()
        if not 0 < self.angle <= 360.0:
            raise ParameterError("revolve angle must lie in (0, 360]")
        if sketch.lo[0] < -sketch.tol:
            raise ParameterError("revolved sketch must not cross the axis (x >= 0)")

    def contains(self, point):
        p = self.frame.to_local(np.asarray(point, dtype=float))
        if self.angle < 360.0:
            phi = math.degrees(math.atan2(p[1], p[0])) % 360.0
            if phi > self.angle:
                return False
        return self.sketch.contains(np.array([math.hypot(p[0], p[1]), p[2]]))

    def contains_many(self, points):
        p = self.frame.to_local(np.asarray(points, dtype=float).reshape(-1, 3))
        flags = np.zeros(len(p), dtype=bool)
        within = np.ones(len(p), dtype=bool)
        if self.angle < 360.0:
            within = np.degrees(np.arctan2(p[:, 1], p[:, 0])) % 360.0 <= self.angle
        if np.any(within):
            q = np.column_stack([np.hypot(p[within, 0], p[within, 1]), p[within, 2]])
            flags[within] = self.sketch.contains_many(q)
        return flags

    def bounding_box(self):
        lo, hi = self.sketch.bounding_box
        r = hi[0]
        return self.frame.world_box(np.array([-r, -r, lo[1]]), np.array([r, r, hi[1]]))

    def to_dict(self):
        data = {'primitive': self.kind, 'sketch': self.sketch, 'angle': self.angle}
        if not self.frame.is_identity:
            data['frame'] = self.frame.to_dict()
        return data


class SweepSolid(ExtendedSolid):
    """Sketch moved along a C1 path.

    ``frame_mode`` selects the sketch plane: ``frenet`` (orthogonal to the
    path), ``constant_dihedral`` (B = A T), ``parallel`` (orientation of the
    start plane kept) or ``interpolated`` (relation blended from
    ``start_relation`` to ``end_relation`` by arc length).
    """
    kind = 'sweep'

    def __init__(self, path, sketch, frame_mode='frenet', relation=None, start_relation=None, end_relation=None):
        if frame_mode not in FRAME_MODES:
            raise ParameterError(f"unknown frame mode '{frame_mode}' (expected one of {', '.join(FRAME_MODES)})")
        self.path = path
        self.sketch = sketch
        self.frame_mode = frame_mode
        self.frames = PathFrames(path)
        self.relation = _check_relation(np.eye(3) if relation is None else relation, 'relation')
        if frame_mode == 'interpolated':
            if start_relation is None or end_relation is None:
                raise ParameterError("interpolated frames need start_relation and end_relation")
            self.start_relation = _check_relation(start_relation, 'start_relation')
            self.end_relation = _check_relation(end_relation, 'end_relation')
        else:
            self.start_relation = self.end_relation = None
        self.arc_xis, self.arc_lengths = path.arc_length_table(conf.get('LOFT_ARC_SAMPLES'))
        if self.arc_lengths[-1] <= 0:
            raise RegularityError("path has zero length")
        a, _ = path.domain
        self._start_frame = self.frames.frame(a)
        self.plane_tol = PLANE_TOL * max(self._sketch_diameter(), 1e-300)
        lo, hi = path.bounding_box()
        radius = self._circumradius()
        self._bbox = (lo - radius, hi + radius)

    def _sketches(self):
        return [self.sketch]

    def _sketch_diameter(self):
        return max(s.diameter for s in self._sketches())

    def _circumradius(self):
        return max(s.circumradius for s in self._sketches())

    @property
    def is_closed(self):
        return self.path.is_closed

    @property
    def is_orthogonal(self):
        return self.frame_mode == 'frenet' or (
            self.frame_mode == 'constant_dihedral' and np.allclose(self.relation, np.eye(3))
        )

    def bounding_box(self):
        return self._bbox[0].copy(), self._bbox[1].copy()

    def arc_fraction(self, xi):
        return float(np.interp(xi, self.arc_xis, self.arc_lengths) / self.arc_lengths[-1])

    def classify_box(self, lo, hi):
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        if not boxes_overlap(*self._bbox, lo, hi):
            return OUTSIDE
        # every solid point lies within the sketch circumradius of the path
        center = 0.5 * (lo + hi)
        half_diagonal = 0.5 * np.linalg.norm(hi - lo)
        if self.path.closest_point(center).distance > half_diagonal + self._circumradius():
            return OUTSIDE
        return UNKNOWN

    # --- sketch planes -------------------------------------------------

    def plane_frame(self, xi):
        """Sketch plane B(xi) with origin C(xi)."""
        A = self.frames.frame(xi)
        if self.frame_mode == 'frenet':
            return A
        if self.frame_mode == 'constant_dihedral':
            B = self.relation.T @ A.matrix
        elif self.frame_mode == 'parallel':
            B = self.relation.T @ self._start_frame.matrix
        else:
            s = self.arc_fraction(xi)
            B0 = self.start_relation.T @ A.matrix
            B1 = self.end_relation.T @ A.matrix
            blend = (1.0 - s) * B0 + s * B1
            b3 = blend[2] / np.linalg.norm(blend[2])
            b1 = blend[0] - (blend[0] @ b3) * b3
            b1 /= np.linalg.norm(b1)
            B = np.array([b1, np.cross(b3, b1), b3])
        return Frame(A.origin, B[0], B[1])

    def _plane_offset(self, P, xi):
        frame = self.plane_frame(xi)
        return float((P - frame.origin) @ frame.matrix[2]), frame

    def rotated_plane_root(self, point, seed=None):
        """Path parameter whose sketch plane passes through ``point``.

        Returns ``(xi_r, frame)`` or ``None`` when no plane along the path
        contains the point. Newton with a central-difference derivative is
        seeded from the closest point; on failure the polygon samples are
        scanned for the sign change nearest the seed and bisected.
        """
        P = np.asarray(point, dtype=float)
        a, b = self.path.domain
        if seed is None:
            seed = self.path.closest_point(P).xi
        if self.is_orthogonal:
            return seed, self.plane_frame(seed)
        h = 1e-6 * (b - a)
        xi = seed
        for _ in range(ROOT_MAX_ITERATIONS):
            g, frame = self._plane_offset(P, xi)
            if abs(g) < self.plane_tol:
                return xi, frame
            lo, hi = max(a, xi - h), min(b, xi + h)
            dg = (self._plane_offset(P, hi)[0] - self._plane_offset(P, lo)[0]) / (hi - lo)
            if dg == 0:
                break
            new = min(max(xi - g / dg, a), b)
            if new == xi:
                break
            xi = new
        logger.warning(f"sweep plane root: Newton did not converge for {P.tolist()}, scanning samples")
        return self._bracketed_root(P, seed)

    def _bracketed_root(self, P, seed):
        xis = self.path.sample_xi
        g = np.array([self._plane_offset(P, x)[0] for x in xis])
        exact = np.flatnonzero(np.abs(g) < self.plane_tol)
        changes = np.flatnonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)
        if len(exact):
            k = exact[np.argmin(np.abs(xis[exact] - seed))]
            return float(xis[k]), self._plane_offset(P, xis[k])[1]
        if not len(changes):
            return None
        i = changes[np.argmin(np.abs(0.5 * (xis[changes] + xis[changes + 1]) - seed))]
        lo, hi, g_lo = xis[i], xis[i + 1], g[i]
        for _ in range(BISECTION_STEPS):
            mid = 0.5 * (lo + hi)
            g_mid, frame = self._plane_offset(P, mid)
            if abs(g_mid) < self.plane_tol:
                return mid, frame
            if np.sign(g_mid) == np.sign(g_lo):
                lo, g_lo = mid, g_mid
            else:
                hi = mid
        mid = 0.5 * (lo + hi)
        return mid, self._plane_offset(P, mid)[1]

    def plane_point(self, P, xi_cp):
        """Sketch coordinates of P in the plane through it and that plane's parameter.

        Returns ``None`` when P lies beyond an end cap.
        """
        a, b = self.path.domain
        if self.is_orthogonal:
            frame = self.plane_frame(xi_cp)
            p = frame.to_local(P)
            # flat end caps
            if not self.is_closed and xi_cp in (a, b) and abs(p[2]) > self.plane_tol:
                return None
            return p[:2], xi_cp
        root = self.rotated_plane_root(P, xi_cp)
        if root is None:
            return None
        xi_r, frame = root
        return frame.to_local(P)[:2], xi_r

    def contains(self, point):
        P = np.asarray(point, dtype=float)
        if self.is_orthogonal:
            return bool(self.contains_many(P[None, :])[0])
        if self._outside_bbox(P):
            return False
        hit = self.plane_point(P, self.path.closest_point(P).xi)
        return hit is not None and self.sketch.contains(hit[0])

    def contains_many(self, points):
        """Batched membership; orthogonal planes are handled array-wise."""
        if not self.is_orthogonal:
            return super().contains_many(points)
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        flags = np.zeros(len(pts), dtype=bool)
        idx, _, local = self._plane_points(pts)
        if len(idx):
            flags[idx] = self.sketch.contains_many(local)
        return flags

    def _plane_points(self, pts):
        """Sketch coordinates of many points in their orthogonal planes.

        Returns (row indices, plane parameters, (m, 2) coordinates) for the
        rows inside the bounding box and not beyond an end cap. The plane is
        the one at the nearest path point; tied candidates are not tracked.
        """
        lo, hi = self._bbox
        idx = np.flatnonzero(np.all((pts >= lo) & (pts <= hi), axis=1))
        if not len(idx):
            return idx, np.empty(0), np.empty((0, 2))
        P = pts[idx]
        xi, _, _ = self.path.closest_points(P)
        C, n, b, t = self.frames.axes_many(xi)
        r = P - C
        local = np.column_stack([
            np.einsum('ij,ij->i', r, n),
            np.einsum('ij,ij->i', r, b),
            np.einsum('ij,ij->i', r, t),
        ])
        keep = np.ones(len(idx), dtype=bool)
        if not self.is_closed:
            a, b_end = self.path.domain
            # flat end caps
            keep = ~(((xi == a) | (xi == b_end)) & (np.abs(local[:, 2]) > self.plane_tol))
        return idx[keep], xi[keep], local[keep, :2]

    def _frame_mode_dict(self):
        data = {'frame_mode': self.frame_mode}
        if self.frame_mode in ('constant_dihedral', 'parallel') and not np.allclose(self.relation, np.eye(3)):
            data['relation'] = self.relation.tolist()
        if self.frame_mode == 'interpolated':
            data['start_relation'] = self.start_relation.tolist()
            data['end_relation'] = self.end_relation.tolist()
        return data

    def to_dict(self):
        data = {'primitive': self.kind, 'sketch': self.sketch, 'path': self.path}
        data.update(self._frame_mode_dict())
        return data


class LoftSolid(SweepSolid):
    """Start sketch blended into end sketch along a path.

    The section at a point is the zero set of the signed distances of both
    sketches, interpolated linearly in arc length.
    """
    kind = 'loft'

    def __init__(self, path, start_sketch, end_sketch, frame_mode='frenet', relation=None,
                 start_relation=None, end_relation=None):
        self.start_sketch = start_sketch
        self.end_sketch = end_sketch
        super().__init__(path, start_sketch, frame_mode, relation, start_relation, end_relation)

    def _sketches(self):
        return [self.start_sketch, self.end_sketch]

    def contains_many(self, points):
        """Batched membership on the nearest plane; ``contains`` also tries tied planes."""
        if not self.is_orthogonal:
            return ExtendedSolid.contains_many(self, points)
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        flags = np.zeros(len(pts), dtype=bool)
        idx, xi, local = self._plane_points(pts)
        if not len(idx):
            return flags
        inside0 = self.start_sketch.contains_many(local)
        inside1 = self.end_sketch.contains_many(local)
        inside = inside0 & inside1
        mixed = np.flatnonzero(inside0 != inside1)
        if len(mixed):
            fraction = np.interp(xi[mixed], self.arc_xis, self.arc_lengths) / self.arc_lengths[-1]
            d0 = self.start_sketch.signed_distance_many(local[mixed], inside0[mixed])
            d1 = self.end_sketch.signed_distance_many(local[mixed], inside1[mixed])
            inside[mixed] = d0 + fraction * (d1 - d0) >= 0
        flags[idx] = inside
        return flags

    def section_contains(self, p, fraction):
        inside0 = self.start_sketch.contains(p)
        inside1 = self.end_sketch.contains(p)
        if inside0 and inside1:
            return True
        if not inside0 and not inside1:
            return False
        d0 = self.start_sketch.signed_distance(p)
        d1 = self.end_sketch.signed_distance(p)
        return d0 + fraction * (d1 - d0) >= 0

    def contains(self, point):
        P = np.asarray(point, dtype=float)
        if self._outside_bbox(P):
            return False
        cp = self.path.closest_point(P)
        # ambiguous closest points: inside if any plane says so
        for xi in cp.candidates:
            hit = self.plane_point(P, xi)
            if hit is not None and self.section_contains(hit[0], self.arc_fraction(hit[1])):
                return True
        return False

    def to_dict(self):
        data = {
            'primitive': self.kind,
            'start_sketch': self.start_sketch,
            'end_sketch': self.end_sketch,
            'path': self.path,
        }
        data.update(self._frame_mode_dict())
        return data


EXTENDED = {cls.kind: cls for cls in (ExtrudeSolid, RevolveSolid, SweepSolid, LoftSolid)}
