"""
Planar closed contours and the parity point-membership test.

A sketch is an ordered cycle of line, arc and spline segments. Membership is
decided by counting crossings of the segment P_out -> P with the contour,
where P_out is a reference point outside the sketch bounding box. Spline
segments compare the finite and infinite control-polygon counts first and only
fall back to root finding on the curve when the point can lie between curve
and polygon.
"""
import logging
import math
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from . import conf
from .curve import Curve
from .exceptions import ParameterError, SketchValidationError

logger = logging.getLogger(__name__)

BOUNDARY_TOL = 1e-9
MAX_REFERENCE_RETRIES = 16
ROOT_MERGE_TOL = 1e-9
SUBDIVISION_DEPTH = 20
SUBDIVISION_SAMPLES_PER_SPAN = 64
TANGENCY_TOL = 1e-9
GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))
TWO_PI = 2.0 * math.pi


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _point_segment_distance(P, A, B):
    d = B - A
    dd = float(d @ d)
    if dd == 0.0:
        return float(np.linalg.norm(P - A))
    t = min(max(float((P - A) @ d) / dd, 0.0), 1.0)
    return float(np.linalg.norm(P - (A + t * d)))


def _boxes_overlap(lo1, hi1, lo2, hi2, tol=0.0):
    return bool(np.all(lo1 <= hi2 + tol) and np.all(lo2 <= hi1 + tol))


@dataclass
class Hits:
    """Crossings of one contour segment with the segment A -> B."""
    count: int = 0
    on_boundary: bool = False
    degenerate: bool = False


@dataclass
class RayCastResult:
    """Outcome of casting P_out -> P against a single spline segment.

    ``case`` follows the control-polygon case analysis: a/b when the finite
    polygon count equals the infinite polygon count plus the closing-line
    crossings, e/f when the counts differ and the infinite ray crosses the
    closing line, c/d otherwise (second letter of each pair = odd).
    ``method`` tells how the parity was obtained.
    """
    crossings: int = 0
    case: str = 'a'
    method: str = 'trivial'
    finite_count: int = 0
    infinite_count: int = 0
    closing_count: int = 0
    intersections: list = field(default_factory=list)
    evaluations: int = 0
    on_boundary: bool = False
    degenerate: bool = False

    @property
    def odd(self):
        return self.crossings % 2 == 1

    @property
    def parity(self):
        return 'odd' if self.odd else 'even'


def _polyline_crossings(points, A, B, tol, infinite=False):
    """Crossings of an open polyline with segment A->B (half-line if ``infinite``).

    Vertices are counted half-open (on the edge they start). Returns the count
    and the indices of polyline vertices lying within ``tol`` of the ray.
    """
    d = B - A
    length = float(np.linalg.norm(d))
    starts, ends = points[:-1], points[1:]
    e = ends - starts
    w = starts - A
    denom = _cross(d[None, :], e)
    with np.errstate(divide='ignore', invalid='ignore'):
        t = _cross(w, e) / denom
        s = _cross(w, d[None, :]) / denom
    valid = (denom != 0) & (s >= 0) & (s < 1) & (t >= 0)
    if not infinite:
        valid &= t <= 1
    # vertex proximity to the ray
    rel = points - A
    along = rel @ d / (length * length)
    off = np.abs(_cross(rel, np.broadcast_to(d, rel.shape))) / length
    near = (off <= tol) & (along >= -tol / length)
    if not infinite:
        near &= along <= 1 + tol / length
    return int(np.count_nonzero(valid)), np.flatnonzero(near)


class LineSegment:
    kind = 'line'

    def __init__(self, start, end):
        self.start = np.asarray(start, dtype=float)
        self.end = np.asarray(end, dtype=float)
        if np.linalg.norm(self.end - self.start) == 0:
            raise ParameterError("line segment has zero length")

    def bounding_box(self):
        return np.minimum(self.start, self.end), np.maximum(self.start, self.end)

    def conservative_boxes(self):
        return [self.bounding_box()]

    def touches_box(self, lo, hi, tol):
        if not _boxes_overlap(*self.bounding_box(), lo, hi, tol):
            return False
        corners = np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])
        d = self.end - self.start
        side = _cross(np.broadcast_to(d, corners.shape), corners - self.start) / np.linalg.norm(d)
        return not (np.all(side > tol) or np.all(side < -tol))

    def distance(self, P):
        return _point_segment_distance(P, self.start, self.end)

    def distance_many(self, P):
        d = self.end - self.start
        t = np.clip((P - self.start) @ d / float(d @ d), 0.0, 1.0)
        return np.linalg.norm(P - (self.start + t[:, None] * d), axis=1)

    def polyline(self, chords=1):
        return np.linspace(self.start, self.end, max(int(chords), 1) + 1)

    def intersect(self, A, B, tol):
        hits = Hits()
        if self.distance(B) <= tol:
            hits.on_boundary = True
            return hits
        d = B - A
        e = self.end - self.start
        w = self.start - A
        len_d, len_e = np.linalg.norm(d), np.linalg.norm(e)
        denom = _cross(d, e)
        if abs(denom) <= 1e-12 * len_d * len_e:
            if abs(_cross(w, d)) / len_d <= tol:
                t0 = float(w @ d) / len_d ** 2
                t1 = float((self.end - A) @ d) / len_d ** 2
                if max(min(t0, t1), 0.0) <= min(max(t0, t1), 1.0):
                    hits.degenerate = True
            return hits
        t = _cross(w, e) / denom
        s = _cross(w, d) / denom
        if t < 0 or t > 1 or s < -tol / len_e or s > 1 + tol / len_e:
            return hits
        if min(s, 1 - s) * len_e <= tol:
            hits.degenerate = True
        else:
            hits.count = 1
        return hits

    def to_dict(self):
        return {'type': 'line', 'start': self.start.tolist(), 'end': self.end.tolist()}


class ArcSegment:
    """Circular arc; angles in radians, a negative sweep runs clockwise."""
    kind = 'arc'

    def __init__(self, center, radius, start_angle, end_angle):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.start_angle = float(start_angle)
        self.end_angle = float(end_angle)
        self.sweep = self.end_angle - self.start_angle
        if self.radius <= 0:
            raise ParameterError(f"arc radius must be positive, got {radius}")
        if self.sweep == 0 or abs(self.sweep) > TWO_PI + 1e-12:
            raise ParameterError("arc sweep must be non-zero and at most one turn")
        self.start = self.point_at(self.start_angle)
        self.end = self.point_at(self.end_angle)
        self.degrees = None

    @classmethod
    def from_degrees(cls, center, radius, start_angle, end_angle):
        arc = cls(center, radius, math.radians(start_angle), math.radians(end_angle))
        arc.degrees = (float(start_angle), float(end_angle))
        return arc

    @property
    def is_full_circle(self):
        return abs(self.sweep) >= TWO_PI - 1e-12

    def point_at(self, theta):
        return self.center + self.radius * np.array([math.cos(theta), math.sin(theta)])

    def in_sweep(self, theta, slack=0.0):
        if self.is_full_circle:
            return True
        if self.sweep > 0:
            delta = (theta - self.start_angle) % TWO_PI
        else:
            delta = (self.start_angle - theta) % TWO_PI
        return delta <= abs(self.sweep) + slack or delta >= TWO_PI - slack

    def bounding_box(self):
        pts = [self.start, self.end]
        for k in range(4):
            theta = k * math.pi / 2
            if self.in_sweep(theta):
                pts.append(self.point_at(theta))
        pts = np.array(pts)
        return pts.min(axis=0), pts.max(axis=0)

    def conservative_boxes(self):
        return [self.bounding_box()]

    def touches_box(self, lo, hi, tol):
        if not _boxes_overlap(*self.bounding_box(), lo, hi, tol):
            return False
        nearest = np.clip(self.center, lo, hi)
        corners = np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])
        d_min = np.linalg.norm(nearest - self.center)
        d_max = np.linalg.norm(corners - self.center, axis=1).max()
        return d_min <= self.radius + tol and d_max >= self.radius - tol

    def distance(self, P):
        v = P - self.center
        rho = float(np.linalg.norm(v))
        if rho == 0.0:
            return self.radius
        if self.in_sweep(math.atan2(v[1], v[0])):
            return abs(rho - self.radius)
        return float(min(np.linalg.norm(P - self.start), np.linalg.norm(P - self.end)))

    def distance_many(self, P):
        v = P - self.center
        rho = np.linalg.norm(v, axis=1)
        ends = np.minimum(np.linalg.norm(P - self.start, axis=1), np.linalg.norm(P - self.end, axis=1))
        if self.is_full_circle:
            swept = np.ones(len(P), dtype=bool)
        else:
            theta = np.arctan2(v[:, 1], v[:, 0])
            if self.sweep > 0:
                delta = (theta - self.start_angle) % TWO_PI
            else:
                delta = (self.start_angle - theta) % TWO_PI
            swept = delta <= abs(self.sweep)
        out = np.where(swept, np.abs(rho - self.radius), ends)
        out[rho == 0.0] = self.radius
        return out

    def polyline(self, chords=64):
        thetas = np.linspace(self.start_angle, self.end_angle, max(int(chords), 1) + 1)
        return self.center + self.radius * np.column_stack([np.cos(thetas), np.sin(thetas)])

    def intersect(self, A, B, tol):
        """Analytic ray/arc intersection (quadratic in the ray parameter)."""
        hits = Hits()
        if self.distance(B) <= tol:
            hits.on_boundary = True
            return hits
        d = B - A
        f = A - self.center
        a = float(d @ d)
        line_dist = abs(_cross(d, self.center - A)) / math.sqrt(a)
        if abs(line_dist - self.radius) <= tol:
            t = float((self.center - A) @ d) / a
            X = A + t * d
            v = X - self.center
            if 0 <= t <= 1 and self.in_sweep(math.atan2(v[1], v[0]), tol / self.radius):
                hits.degenerate = True
            return hits
        b = 2.0 * float(f @ d)
        c = float(f @ f) - self.radius ** 2
        disc = b * b - 4 * a * c
        if disc < 0:
            return hits
        sq = math.sqrt(disc)
        for t in ((-b - sq) / (2 * a), (-b + sq) / (2 * a)):
            if t < 0 or t > 1:
                continue
            X = A + t * d
            v = X - self.center
            if not self.in_sweep(math.atan2(v[1], v[0]), tol / self.radius):
                continue
            if not self.is_full_circle and min(np.linalg.norm(X - self.start), np.linalg.norm(X - self.end)) <= tol:
                hits.degenerate = True
                continue
            hits.count += 1
        return hits

    def to_dict(self):
        return {
            'type': 'arc',
            'center': self.center.tolist(),
            'radius': self.radius,
            'start_angle': self.degrees[0] if self.degrees else math.degrees(self.start_angle),
            'end_angle': self.degrees[1] if self.degrees else math.degrees(self.end_angle),
        }


class SplineSegment:
    """2D NURBS segment with its closing line and control-point parameters."""
    kind = 'spline'

    def __init__(self, curve):
        if curve.dimension != 2:
            raise ParameterError("sketch splines must be planar (2D control points)")
        self.curve = curve
        points = curve.control_points
        self.start, self.end = points[0].copy(), points[-1].copy()
        # parameter of the curve point nearest to each control point
        self.control_params = np.array([curve.closest_point(q).xi for q in points])
        try:
            self._hull = ConvexHull(points).equations
        except (QhullError, ValueError):
            # collinear or too few points; the box is a conservative stand-in
            self._hull = None
        # one hull per span: the curve piece and its polygon legs stay inside it
        self._span_hulls = []
        for lo_xi, _ in curve.span_ranges():
            local = points[list(curve.span_control_indices(curve.find_span(lo_xi)))]
            try:
                self._span_hulls.append(ConvexHull(local).equations)
            except (QhullError, ValueError):
                # collinear span: curve and polygon coincide
                continue

    @property
    def closing_line(self):
        return self.start, self.end

    def bounding_box(self):
        return self.curve.bounding_box()

    def conservative_boxes(self):
        pts = self.curve.control_points
        boxes = []
        for lo_xi, _ in self.curve.span_ranges():
            span = self.curve.find_span(lo_xi)
            local = pts[list(self.curve.span_control_indices(span))]
            boxes.append((local.min(axis=0), local.max(axis=0)))
        return boxes

    def touches_box(self, lo, hi, tol):
        return any(_boxes_overlap(blo, bhi, lo, hi, tol) for blo, bhi in self.conservative_boxes())

    def outside_hull(self, P, tol=0.0):
        if self._hull is None:
            lo, hi = self.bounding_box()
            return bool(np.any(P < lo - tol) or np.any(P > hi + tol))
        return bool(np.any(self._hull[:, :2] @ P + self._hull[:, 2] > tol))

    def in_span_hull(self, P, tol=0.0):
        return any(bool(np.all(eq[:, :2] @ P + eq[:, 2] <= tol)) for eq in self._span_hulls)

    def distance(self, P):
        return self.curve.closest_point(P).distance

    def distance_many(self, P):
        return self.curve.closest_points(P)[1]

    def polyline(self, chords=256):
        a, b = self.curve.domain
        return self.curve.evaluate_many(np.linspace(a, b, max(int(chords), 1) + 1))

    def intersect(self, A, B, tol):
        result = ray_cast_spline(self, A, B, tol)
        return Hits(result.crossings, result.on_boundary, result.degenerate)

    def to_dict(self):
        data = {'type': 'spline'}
        data.update(self.curve.to_dict())
        return data


def _line_root_newton(curve, seed, A, u, y_tol):
    a, b = curve.domain
    step_tol = 1e-12 * (b - a)
    xi = seed
    evaluations = 0
    for _ in range(50):
        C, d1 = curve.derivatives(xi, 1)
        evaluations += 1
        y = _cross(u, C - A)
        if abs(y) <= y_tol:
            return xi, True, evaluations
        dy = _cross(u, d1)
        if dy == 0:
            return xi, False, evaluations
        new = min(max(xi - y / dy, a), b)
        if abs(new - xi) < step_tol:
            C = curve.evaluate(new)
            evaluations += 1
            return new, abs(_cross(u, C - A)) <= 1e3 * y_tol, evaluations
        xi = new
    return xi, False, evaluations


def _line_roots_subdivision(curve, A, u):
    """Roots of the signed line distance by sampling and bisection."""
    xis = []
    for lo, hi in curve.span_ranges():
        xis.extend(np.linspace(lo, hi, SUBDIVISION_SAMPLES_PER_SPAN, endpoint=False))
    xis.append(curve.domain[1])
    xis = np.asarray(xis)

    def signed(values):
        return _cross(u, values - A)

    y = signed(curve.evaluate_many(xis))
    evaluations = len(xis)
    positive = y >= 0
    roots = []
    for i in np.flatnonzero(positive[:-1] != positive[1:]):
        lo, hi = xis[i], xis[i + 1]
        lo_positive = positive[i]
        for _ in range(SUBDIVISION_DEPTH):
            mid = 0.5 * (lo + hi)
            mid_positive = signed(curve.evaluate(mid)) >= 0
            evaluations += 1
            if mid_positive == lo_positive:
                lo = mid
            else:
                hi = mid
        roots.append(0.5 * (lo + hi))
    return roots, evaluations


def ray_cast_spline(segment, reference, point, tol=None):
    """Parity of crossings between ``segment`` and the segment reference -> point.

    The control polygon is intersected with the finite ray and with the
    infinite ray; the infinite count also takes the crossings with the closing
    line. When both counts agree the point lies outside the loop formed by the
    polygon and its closing line, and the polygon parity is returned without
    evaluating the curve, unless an end of the ray sits inside a span's
    control hull, where curve and polygon can disagree. Rays whose ends both
    lie outside the convex hull are decided by the polygon as well. Any other
    ray is rotated onto the x-axis and the roots of y(xi) are found by Newton
    from seeds interpolated at the polygon crossings; the subdivision fallback
    takes over on any failure.
    """
    curve = segment.curve
    A = np.asarray(reference, dtype=float)
    B = np.asarray(point, dtype=float)
    if tol is None:
        tol = BOUNDARY_TOL * curve.diameter
    length = float(np.linalg.norm(B - A))
    if length <= tol:
        return RayCastResult()

    Q = curve.control_points
    result = RayCastResult()

    # ray through a contour vertex (first/last control point)
    for vertex in (segment.start, segment.end):
        if _point_segment_distance(vertex, A, B) <= tol:
            if np.linalg.norm(vertex - B) <= tol:
                result.on_boundary = True
            else:
                result.degenerate = True
            return result

    result.finite_count, touched = _polyline_crossings(Q, A, B, tol)
    result.infinite_count, _ = _polyline_crossings(Q, A, B, tol, infinite=True)
    result.closing_count, _ = _polyline_crossings(np.array([segment.start, segment.end]), A, B, tol, infinite=True)

    if len(touched) == 0:
        if _counts_agree(result):
            if not (segment.in_span_hull(A, tol) or segment.in_span_hull(B, tol)):
                return _polygon_parity(result, 'polygon')
        elif segment.outside_hull(A, tol) and segment.outside_hull(B, tol):
            return _polygon_parity(result, 'hull')

    u = (B - A) / length
    a, b = curve.domain
    yq = _cross(np.broadcast_to(u, Q.shape), Q - A)
    positive = yq >= 0
    changes = np.flatnonzero(positive[:-1] != positive[1:])
    xq = segment.control_params
    seeds = []
    for i in changes:
        frac = yq[i] / (yq[i] - yq[i + 1])
        seeds.append(min(max(xq[i] + (xq[i + 1] - xq[i]) * frac, a), b))

    y_tol = 1e-12 * (1.0 + curve.diameter)
    roots, all_converged = [], True
    for seed in seeds:
        xi, ok, n_eval = _line_root_newton(curve, seed, A, u, y_tol)
        result.evaluations += n_eval
        all_converged &= ok
        roots.append(xi)
    roots = _merge_roots(roots, ROOT_MERGE_TOL * (b - a))
    result.method = 'newton'
    # the curve crosses the line no more often than its polygon does
    if not all_converged or len(roots) != len(changes):
        logger.debug(
            f"spline ray cast: Newton gave {len(roots)} root(s) for {len(changes)} polygon crossing(s), "
            f"falling back to subdivision"
        )
        roots, n_eval = _line_roots_subdivision(curve, A, u)
        roots = _merge_roots(roots, ROOT_MERGE_TOL * (b - a))
        result.evaluations += n_eval
        result.method = 'subdivision'

    for xi in roots:
        C, d1 = curve.derivatives(xi, 1)
        result.evaluations += 1
        x = float((C - A) @ u)
        if x < -tol or x > length + tol:
            continue
        if abs(x - length) <= tol:
            result.on_boundary = True
            return result
        if abs(_cross(u, d1)) <= TANGENCY_TOL * np.linalg.norm(d1):
            result.degenerate = True
            return result
        result.crossings += 1
        result.intersections.append(C)
    result.case = _case_label(result)
    return result


def _counts_agree(result):
    return result.finite_count == result.infinite_count + result.closing_count


def _polygon_parity(result, method):
    result.crossings = result.finite_count
    result.method = method
    result.case = _case_label(result)
    return result


def _merge_roots(roots, tol):
    merged = []
    for xi in sorted(roots):
        if not merged or xi - merged[-1] > tol:
            merged.append(xi)
    return merged


def _case_label(result):
    odd = result.crossings % 2 == 1
    if _counts_agree(result):
        return 'b' if odd else 'a'
    if result.closing_count:
        return 'f' if odd else 'e'
    return 'd' if odd else 'c'


_OUTSIDE, _INSIDE, _CUT = 0, 1, 2
_CODES = {'outside': _OUTSIDE, 'inside': _INSIDE, 'cut': _CUT}


class _QuadNode:
    __slots__ = ('lo', 'hi', 'label', 'children')

    def __init__(self, lo, hi):
        self.lo, self.hi = lo, hi
        self.label = 'cut'
        self.children = None


def _flatten(root):
    """Breadth-first arrays (root lo, root hi, mid, children, codes) of a quadtree."""
    nodes = [root]
    children = []
    i = 0
    while i < len(nodes):
        node = nodes[i]
        if node.children is None:
            children.append((-1, -1, -1, -1))
        else:
            first = len(nodes)
            nodes.extend(node.children)
            children.append(tuple(range(first, first + 4)))
        i += 1
    mid = np.array([0.5 * (node.lo + node.hi) for node in nodes])
    codes = np.array([_CODES[node.label] for node in nodes], dtype=np.int8)
    return root.lo, root.hi, mid, np.array(children, dtype=np.intp), codes


class Sketch:
    """Closed planar contour with a lazily built acceleration quadtree."""

    def __init__(self, segments, quadtree_depth=None):
        self.segments = list(segments)
        if not self.segments:
            raise SketchValidationError("sketch has no segments")
        boxes = [seg.bounding_box() for seg in self.segments]
        self.lo = np.min([lo for lo, _ in boxes], axis=0)
        self.hi = np.max([hi for _, hi in boxes], axis=0)
        self.diameter = float(np.linalg.norm(self.hi - self.lo))
        self.tol = BOUNDARY_TOL * self.diameter
        self.quadtree_depth = conf.get('SKETCH_QUADTREE_DEPTH') if quadtree_depth is None else quadtree_depth
        self._validate()
        self.reference_point = self._initial_reference()
        self._quadtree = None
        self._flat_quadtree = None
        self._quadtree_lock = threading.Lock()

    # --- constructors -------------------------------------------------

    @classmethod
    def polygon(cls, points, **kwargs):
        pts = np.asarray(points, dtype=float)
        return cls([LineSegment(pts[i], pts[(i + 1) % len(pts)]) for i in range(len(pts))], **kwargs)

    @classmethod
    def rectangle(cls, width, height, center=(0.0, 0.0), **kwargs):
        cx, cy = center
        w, h = width / 2.0, height / 2.0
        return cls.polygon([(cx - w, cy - h), (cx + w, cy - h), (cx + w, cy + h), (cx - w, cy + h)], **kwargs)

    @classmethod
    def circle(cls, radius, center=(0.0, 0.0), rational=False, **kwargs):
        """Circle as four quarter arcs, or as four quarter NURBS when ``rational``."""
        quarters = [(k * math.pi / 2, (k + 1) * math.pi / 2) for k in range(4)]
        if rational:
            segments = [SplineSegment(Curve.circle_arc(center, radius, s, e)) for s, e in quarters]
        else:
            segments = [ArcSegment(center, radius, s, e) for s, e in quarters]
        return cls(segments, **kwargs)

    @classmethod
    def rounded_rectangle(cls, width, height, radius, center=(0.0, 0.0), **kwargs):
        w, h = width / 2.0, height / 2.0
        if not 0 < radius <= min(w, h):
            raise ParameterError("corner radius must be positive and fit the rectangle")
        cx, cy = center
        ix, iy = w - radius, h - radius
        segments = []
        corners = [(ix, -iy, -math.pi / 2), (ix, iy, 0.0), (-ix, iy, math.pi / 2), (-ix, -iy, math.pi)]
        for k, (ox, oy, angle) in enumerate(corners):
            arc = ArcSegment((cx + ox, cy + oy), radius, angle, angle + math.pi / 2)
            if k > 0 and np.linalg.norm(segments[-1].end - arc.start) > 0:
                segments.append(LineSegment(segments[-1].end, arc.start))
            segments.append(arc)
        if np.linalg.norm(segments[-1].end - segments[0].start) > 0:
            segments.append(LineSegment(segments[-1].end, segments[0].start))
        # start with the bottom edge for a conventional ordering
        return cls(segments[-1:] + segments[:-1], **kwargs)

    # --- validation ---------------------------------------------------

    def _validate(self):
        n = len(self.segments)
        for i, seg in enumerate(self.segments):
            nxt = self.segments[(i + 1) % n]
            gap = np.linalg.norm(seg.end - nxt.start)
            if gap > self.tol:
                raise SketchValidationError(f"contour is open between segment {i} and {(i + 1) % n} (gap {gap:.3g})")
        chords = []
        owner = []
        for i, seg in enumerate(self.segments):
            pts = seg.polyline(1 if seg.kind == 'line' else 64)
            chords.append(np.stack([pts[:-1], pts[1:]], axis=1))
            owner.extend([i] * (len(pts) - 1))
        chords = np.concatenate(chords)
        a, b = chords[:, 0], chords[:, 1]
        c, d = a[:, None, :], b[:, None, :]
        lengths = np.linalg.norm(b - a, axis=1)
        tol = self.tol

        def side(p, q, r, length):
            # signed distance of r from the line through p and q
            return _cross(q - p, r - p) / length

        def opposite(x, y):
            return (x * y < 0) & (np.minimum(np.abs(x), np.abs(y)) > tol)

        o1 = side(a[None, :, :], b[None, :, :], c, lengths[None, :])
        o2 = side(a[None, :, :], b[None, :, :], d, lengths[None, :])
        o3 = side(c, d, a[None, :, :], lengths[:, None])
        o4 = side(c, d, b[None, :, :], lengths[:, None])
        proper = opposite(o1, o2) & opposite(o3, o4)
        if np.any(proper):
            i, j = np.argwhere(proper)[0]
            raise SketchValidationError(
                f"contour self-intersects (segments {owner[i]} and {owner[j]})"
            )

    def _initial_reference(self):
        """Reference point outside the box, on the closing line of the largest spline if any."""
        splines = [seg for seg in self.segments if seg.kind == 'spline']
        outside = 1.5 * self.diameter
        if splines:
            largest = max(splines, key=lambda seg: np.prod(np.maximum(seg.bounding_box()[1] - seg.bounding_box()[0], 1e-300)))
            direction = largest.end - largest.start
            norm = np.linalg.norm(direction)
            if norm > self.tol:
                return largest.start - outside * direction / norm
        center = 0.5 * (self.lo + self.hi)
        return center + outside * np.array([math.cos(0.7137), math.sin(0.7137)])

    # --- queries ------------------------------------------------------

    @property
    def bounding_box(self):
        return self.lo.copy(), self.hi.copy()

    @property
    def circumradius(self):
        """Largest distance from the sketch origin to the bounding box."""
        corners = np.array([[x, y] for x in (self.lo[0], self.hi[0]) for y in (self.lo[1], self.hi[1])])
        return float(np.linalg.norm(corners, axis=1).max())

    def contains(self, point):
        P = np.asarray(point, dtype=float)
        if np.any(P < self.lo - self.tol) or np.any(P > self.hi + self.tol):
            return False
        label = self._quadtree_label(P)
        if label != 'cut':
            return label == 'inside'
        return self._exact_contains(P)

    def contains_many(self, points):
        """Vectorised ``contains``: quadtree leaves decide, cut leaves get the exact test."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        flags = np.zeros(len(pts), dtype=bool)
        in_box = np.all((pts >= self.lo - self.tol) & (pts <= self.hi + self.tol), axis=1)
        codes = np.full(len(pts), _CUT, dtype=np.int8)
        if self.quadtree_depth > 0 and np.any(in_box):
            codes[in_box] = self._quadtree_codes(pts[in_box])
        flags[in_box & (codes == _INSIDE)] = True
        for i in np.flatnonzero(in_box & (codes == _CUT)):
            flags[i] = self._exact_contains(pts[i])
        return flags

    def signed_distance(self, point):
        P = np.asarray(point, dtype=float)
        distance = min(seg.distance(P) for seg in self.segments)
        return distance if self.contains(P) else -distance

    def signed_distance_many(self, points, inside=None):
        """Vectorised ``signed_distance``; ``inside`` may pass known memberships."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        distance = np.min([seg.distance_many(pts) for seg in self.segments], axis=0)
        inside = self.contains_many(pts) if inside is None else np.asarray(inside, dtype=bool)
        return np.where(inside, distance, -distance)

    def cast(self, reference, point):
        """Crossings of reference -> point with the whole contour."""
        A, B = np.asarray(reference, dtype=float), np.asarray(point, dtype=float)
        ray_lo, ray_hi = np.minimum(A, B), np.maximum(A, B)
        total = Hits()
        for seg in self.segments:
            if not _boxes_overlap(*seg.bounding_box(), ray_lo, ray_hi, self.tol):
                continue
            hits = seg.intersect(A, B, self.tol)
            if hits.on_boundary:
                return Hits(on_boundary=True)
            if hits.degenerate:
                total.degenerate = True
                return total
            total.count += hits.count
        return total

    def reposition_reference(self, point, reference=None, attempt=0):
        """Reference point giving a non-degenerate ray to ``point``.

        Returns ``reference`` unchanged when its ray is already clean,
        otherwise rotates it about the point by a deterministic angle.
        """
        ref = self.reference_point if reference is None else np.asarray(reference, dtype=float)
        if not self.cast(ref, point).degenerate:
            return ref
        return self._rotated_reference(np.asarray(point, dtype=float), ref, attempt)

    def _rotated_reference(self, P, ref, attempt):
        v = ref - P
        radius = max(np.linalg.norm(v), 2.0 * self.diameter)
        angle = math.atan2(v[1], v[0]) + (attempt + 1) * GOLDEN_ANGLE + 1e-3 * (attempt + 1)
        return P + radius * np.array([math.cos(angle), math.sin(angle)])

    def _exact_contains(self, P):
        ref = self.reference_point
        for attempt in range(MAX_REFERENCE_RETRIES + 1):
            hits = self.cast(ref, P)
            if hits.on_boundary:
                return True
            if not hits.degenerate:
                return hits.count % 2 == 1
            if attempt < MAX_REFERENCE_RETRIES:
                logger.debug(f"degenerate ray to {P.tolist()}, repositioning reference (attempt {attempt + 1})")
                ref = self._rotated_reference(P, ref, attempt)
        logger.warning(f"all {MAX_REFERENCE_RETRIES} reference rays to {P.tolist()} degenerate, using winding number")
        return self.winding_contains(P)

    def polyline(self, chords_per_segment=256):
        pieces = [seg.polyline(1 if seg.kind == 'line' else chords_per_segment) for seg in self.segments]
        return np.concatenate([piece[:-1] for piece in pieces] + [pieces[0][:1]])

    def winding_contains(self, P, chords_per_segment=1024):
        """Winding-number membership on the subdivided contour."""
        pts = self.polyline(chords_per_segment) - np.asarray(P, dtype=float)
        if np.min(np.linalg.norm(pts, axis=1)) <= self.tol:
            return True
        angles = np.arctan2(pts[:, 1], pts[:, 0])
        turns = np.diff(angles)
        turns = (turns + math.pi) % TWO_PI - math.pi
        return abs(turns.sum()) > math.pi

    # --- acceleration quadtree ---------------------------------------

    def _build_quadtree(self):
        pad = 1e-6 * self.diameter
        root = _QuadNode(self.lo - pad, self.hi + pad)
        stack = [(root, 0)]
        leaves = 0
        while stack:
            node, depth = stack.pop()
            cut = any(seg.touches_box(node.lo, node.hi, self.tol) for seg in self.segments)
            if not cut:
                centroid = 0.5 * (node.lo + node.hi)
                node.label = 'inside' if self._exact_contains(centroid) else 'outside'
                leaves += 1
                continue
            if depth >= self.quadtree_depth:
                leaves += 1
                continue
            mid = 0.5 * (node.lo + node.hi)
            node.children = []
            for ix in (0, 1):
                for iy in (0, 1):
                    lo = np.array([node.lo[0] if ix == 0 else mid[0], node.lo[1] if iy == 0 else mid[1]])
                    hi = np.array([mid[0] if ix == 0 else node.hi[0], mid[1] if iy == 0 else node.hi[1]])
                    child = _QuadNode(lo, hi)
                    node.children.append(child)
                    stack.append((child, depth + 1))
        logger.debug(f"sketch quadtree built: {leaves} leaves at depth {self.quadtree_depth}")
        return root

    @property
    def quadtree(self):
        if self._quadtree is None:
            with self._quadtree_lock:
                if self._quadtree is None:
                    root = self._build_quadtree()
                    self._flat_quadtree = _flatten(root)
                    self._quadtree = root
        return self._quadtree

    def _quadtree_codes(self, pts):
        """Leaf codes for many points by a level-synchronous descent of the flat tree."""
        if self._flat_quadtree is None:
            self.quadtree
        lo, hi, mid, children, codes = self._flat_quadtree
        idx = np.zeros(len(pts), dtype=np.intp)
        outside = np.any((pts < lo) | (pts > hi), axis=1)
        while True:
            kids = children[idx]
            internal = np.flatnonzero(kids[:, 0] >= 0)
            if not len(internal):
                break
            m = mid[idx[internal]]
            P = pts[internal]
            quadrant = 2 * (P[:, 0] >= m[:, 0]) + (P[:, 1] >= m[:, 1])
            idx[internal] = kids[internal, quadrant]
        out = codes[idx]
        out[outside] = _CUT
        return out

    def _quadtree_label(self, P):
        if self.quadtree_depth <= 0:
            return 'cut'
        node = self.quadtree
        if np.any(P < node.lo) or np.any(P > node.hi):
            return 'cut'
        while node.children is not None:
            mid = 0.5 * (node.lo + node.hi)
            node = node.children[2 * int(P[0] >= mid[0]) + int(P[1] >= mid[1])]
        return node.label

    def quadtree_leaves(self):
        out, stack = [], [self.quadtree]
        while stack:
            node = stack.pop()
            if node.children is None:
                out.append(node)
            else:
                stack.extend(node.children)
        return out

    def to_dict(self):
        return {'segments': [seg.to_dict() for seg in self.segments]}

    def __repr__(self):
        kinds = ','.join(seg.kind for seg in self.segments)
        return f"Sketch([{kinds}])"
