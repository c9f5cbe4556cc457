"""
B-spline / NURBS curves in 2D and 3D.

Curves serve as sweep and loft paths and as spline segments of sketches.
A curve is immutable once built; the approximation polygon used to seed
closest-point searches is computed in the constructor.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline
from scipy.spatial.distance import cdist

from . import conf
from .exceptions import CurveDomainError, ParameterError, UnsupportedDerivativeOrder

logger = logging.getLogger(__name__)

NEWTON_MAX_ITERATIONS = 50
NEWTON_STEP_TOL = 1e-12
NEWTON_F_TOL = 1e-10
TIE_TOL = 1e-8
FD_STEP = 1e-6


@dataclass(frozen=True)
class ClosestPoint:
    """Result of a closest-point projection onto a curve."""
    xi: float
    distance: float
    point: np.ndarray
    candidates: list = field(default_factory=list)
    converged: bool = True

    @property
    def multiplicity(self):
        return len(self.candidates)


class Curve:
    """Clamped rational B-spline curve C(xi) = sum N_i w_i P_i / sum N_i w_i."""

    def __init__(self, degree, knots, control_points, weights=None, samples_per_span=None):
        self.degree = int(degree)
        self.knots = np.asarray(knots, dtype=float)
        self.control_points = np.atleast_2d(np.asarray(control_points, dtype=float))
        n = len(self.control_points)
        if weights is None:
            weights = np.ones(n)
        self.weights = np.asarray(weights, dtype=float)

        p = self.degree
        if p < 0:
            raise ParameterError(f"degree must be non-negative, got {p}")
        if self.control_points.shape[1] not in (2, 3):
            raise ParameterError("control points must be 2D or 3D")
        if len(self.knots) != n + p + 1:
            raise ParameterError(
                f"knot count {len(self.knots)} != control points {n} + degree {p} + 1"
            )
        if np.any(np.diff(self.knots) < 0):
            raise ParameterError("knot vector must be non-decreasing")
        if len(self.weights) != n or np.any(self.weights <= 0):
            raise ParameterError("one positive weight per control point is required")
        if not (np.all(self.knots[:p + 1] == self.knots[0]) and np.all(self.knots[-p - 1:] == self.knots[-1])):
            raise ParameterError("knot vector must be clamped (end knots repeated degree+1 times)")
        if self.knots[-1] <= self.knots[0]:
            raise ParameterError("knot range is empty")

        self._homogeneous = self.control_points * self.weights[:, None]
        self._spline = BSpline(
            self.knots, np.column_stack([self._homogeneous, self.weights]), p, extrapolate=False
        )
        interior = self.knots[p + 1:n]
        values, counts = np.unique(interior, return_counts=True)
        self._rough_knots = values[p - counts < 2]
        self._samples_per_span = samples_per_span or conf.get('CURVE_SAMPLES_PER_SPAN')
        self.sample_xi, self.sample_points = self._build_polygon()

    # --- constructors -------------------------------------------------

    @classmethod
    def line(cls, start, end):
        start, end = np.asarray(start, dtype=float), np.asarray(end, dtype=float)
        return cls(1, [0.0, 0.0, 1.0, 1.0], [start, end])

    @classmethod
    def circle_arc(cls, center, radius, start_angle, end_angle, x_axis=None, y_axis=None):
        """Exact rational arc, one quadratic piece per started quarter turn.

        Knots run over integers, one unit per piece, so a full circle has the
        knot vector [0,0,0,1,1,2,2,3,3,4,4,4]. Angles are in radians; a
        negative sweep runs clockwise.
        """
        center = np.asarray(center, dtype=float)
        dim = len(center)
        if x_axis is None:
            x_axis = np.eye(dim)[0]
        if y_axis is None:
            y_axis = np.eye(dim)[1]
        x_axis, y_axis = np.asarray(x_axis, dtype=float), np.asarray(y_axis, dtype=float)
        if radius <= 0:
            raise ParameterError(f"arc radius must be positive, got {radius}")
        sweep = end_angle - start_angle
        if sweep == 0 or abs(sweep) > 2 * math.pi + 1e-12:
            raise ParameterError("arc sweep must be non-zero and at most one turn")
        pieces = max(1, int(math.ceil(abs(sweep) / (math.pi / 2) - 1e-9)))
        dtheta = sweep / pieces
        w_mid = math.cos(dtheta / 2)

        def on_circle(theta, r=radius):
            return center + r * (math.cos(theta) * x_axis + math.sin(theta) * y_axis)

        points, weights = [on_circle(start_angle)], [1.0]
        for k in range(pieces):
            t0 = start_angle + k * dtheta
            mid = t0 + dtheta / 2
            points.append(on_circle(mid, radius / w_mid))
            weights.append(w_mid)
            points.append(on_circle(t0 + dtheta))
            weights.append(1.0)
        knots = [0.0, 0.0, 0.0]
        for k in range(1, pieces):
            knots += [float(k), float(k)]
        knots += [float(pieces)] * 3
        return cls(2, knots, points, weights)

    @classmethod
    def full_circle(cls, center, radius, x_axis=None, y_axis=None):
        return cls.circle_arc(center, radius, 0.0, 2 * math.pi, x_axis, y_axis)

    # --- basic queries ------------------------------------------------

    @property
    def dimension(self):
        return self.control_points.shape[1]

    @property
    def domain(self):
        return float(self.knots[0]), float(self.knots[-1])

    @property
    def is_closed(self):
        first, last = self.control_points[0], self.control_points[-1]
        return bool(np.linalg.norm(first - last) <= 1e-12 * (1.0 + self.diameter))

    @property
    def diameter(self):
        lo, hi = self.bounding_box()
        return float(np.linalg.norm(hi - lo))

    def bounding_box(self):
        """Control-point box; contains the curve by the convex hull property."""
        return self.control_points.min(axis=0), self.control_points.max(axis=0)

    def span_ranges(self):
        """Parameter intervals of the non-empty knot spans."""
        unique = np.unique(self.knots)
        return list(zip(unique[:-1], unique[1:]))

    def span_control_indices(self, span):
        p = self.degree
        return range(span - p, span + 1)

    def find_span(self, xi):
        p, n = self.degree, len(self.control_points)
        span = int(np.searchsorted(self.knots, xi, side='right')) - 1
        return min(max(span, p), n - 1)

    def _check_domain(self, xi):
        a, b = self.domain
        tol = 1e-12 * (b - a)
        if not (a - tol <= xi <= b + tol):
            raise CurveDomainError(f"parameter {xi} outside knot range [{a}, {b}]")
        return min(max(xi, a), b)

    # --- evaluation ---------------------------------------------------

    def _homogeneous_derivatives(self, xis, order):
        """Derivatives 0..order of the weighted spline (A^w, W) at ``xis``."""
        out = []
        for nu in range(order + 1):
            if nu <= self.degree:
                out.append(self._spline(xis, nu=nu))
            else:
                out.append(np.zeros((len(xis), self.dimension + 1)))
        return out

    def _rational_derivatives_many(self, xis, order):
        """[C, C', C''][:order+1] at an array of in-domain parameters.

        The quotient rule applied to the homogeneous derivatives:
        C' = (A' - W' C) / W and C'' = (A'' - 2 W' C' - W'' C) / W.
        """
        H = self._homogeneous_derivatives(xis, order)
        Aw = [h[:, :-1] for h in H]
        W = [h[:, -1:] for h in H]
        C = Aw[0] / W[0]
        out = [C]
        if order >= 1:
            out.append((Aw[1] - W[1] * C) / W[0])
        if order >= 2:
            out.append((Aw[2] - 2.0 * W[1] * out[1] - W[2] * C) / W[0])
        return out

    def _rational_derivatives(self, xi, order):
        return [v[0] for v in self._rational_derivatives_many(np.array([xi]), order)]

    def evaluate(self, xi):
        """Point C(xi); ``CurveDomainError`` outside the knot range."""
        xi = self._check_domain(float(xi))
        return self._rational_derivatives(xi, 0)[0]

    def evaluate_many(self, xis):
        """Vectorised ``evaluate`` over an array of parameters."""
        xis = np.asarray(xis, dtype=float)
        a, b = self.domain
        tol = 1e-12 * (b - a)
        if np.any(xis < a - tol) or np.any(xis > b + tol):
            raise CurveDomainError(f"parameters outside knot range [{a}, {b}]")
        return self._evaluate_unchecked(np.clip(xis, a, b))

    def _evaluate_unchecked(self, xis):
        values = self._spline(xis)
        return values[:, :-1] / values[:, -1:]

    def _rough_mask(self, xis):
        """True where the curve is not C2 (interior knots of high multiplicity)."""
        a, b = self.domain
        tol = 1e-10 * (b - a)
        if not len(self._rough_knots):
            return np.zeros(len(xis), dtype=bool)
        return np.any(np.abs(xis[:, None] - self._rough_knots[None, :]) <= tol, axis=1)

    def _second_derivative_unavailable(self, xi):
        return bool(self._rough_mask(np.array([float(xi)]))[0])

    def derivatives(self, xi, order=1):
        """(C, C') or (C, C', C'') at ``xi``.

        Where the curve is not C2 (knot multiplicity), C'' is a central
        finite difference of C' with step 1e-6 times the local span.
        """
        if order not in (1, 2):
            raise UnsupportedDerivativeOrder(f"derivative order {order} not supported (1 or 2)")
        xi = self._check_domain(float(xi))
        return tuple(v[0] for v in self.derivatives_many(np.array([xi]), order))

    def derivatives_many(self, xis, order=1):
        """Vectorised ``derivatives`` over in-domain parameters."""
        if order not in (1, 2):
            raise UnsupportedDerivativeOrder(f"derivative order {order} not supported (1 or 2)")
        xis = np.asarray(xis, dtype=float)
        out = self._rational_derivatives_many(xis, order)
        if order == 2:
            rough = self._rough_mask(xis)
            if np.any(rough):
                out[2][rough] = self._finite_difference_second(xis[rough])
        return out

    def _finite_difference_second(self, xis):
        a, b = self.domain
        p, n = self.degree, len(self.control_points)
        spans = np.clip(np.searchsorted(self.knots, xis, side='right') - 1, p, n - 1)
        width = self.knots[spans + 1] - self.knots[spans]
        h = FD_STEP * np.where(width > 0, width, b - a)
        lo, hi = np.maximum(a, xis - h), np.minimum(b, xis + h)
        d_lo = self._rational_derivatives_many(lo, 1)[1]
        d_hi = self._rational_derivatives_many(hi, 1)[1]
        return (d_hi - d_lo) / (hi - lo)[:, None]

    # --- approximation polygon and projection -------------------------

    def _build_polygon(self):
        xis = []
        for lo, hi in self.span_ranges():
            xis.extend(np.linspace(lo, hi, self._samples_per_span, endpoint=False))
        xis.append(self.domain[1])
        xis = np.asarray(xis)
        return xis, self._evaluate_unchecked(xis)

    def _project_many(self, P, xi):
        """Newton on f(xi) = C'(xi).(P - C(xi)) for rows of ``P`` at once.

        Returns (xi, converged) arrays. An endpoint counts as converged when
        the distance grows into the domain; where f' >= 0 (heading for a
        maximum) the Gauss-Newton step is taken instead.
        """
        a, b = self.domain
        step_tol = NEWTON_STEP_TOL * (b - a)
        xi = np.array(xi, dtype=float)
        done = np.zeros(len(xi), dtype=bool)
        ok = np.zeros(len(xi), dtype=bool)
        for _ in range(NEWTON_MAX_ITERATIONS):
            act = np.flatnonzero(~done)
            if not len(act):
                break
            x = xi[act]
            C, d1, d2 = self.derivatives_many(x, 2)
            r = P[act] - C
            f = np.einsum('ij,ij->i', d1, r)
            g = np.einsum('ij,ij->i', d1, d1)
            stop = np.abs(f) <= NEWTON_F_TOL * np.sqrt(g) * (1.0 + np.linalg.norm(r, axis=1))
            stop |= ((x <= a) & (f < 0)) | ((x >= b) & (f > 0))
            df = np.einsum('ij,ij->i', d2, r) - g
            df = np.where(df >= 0, -g, df)
            dead = ~stop & (df == 0)
            move = ~stop & ~dead
            new = x.copy()
            new[move] = np.clip(x[move] - f[move] / df[move], a, b)
            small = move & (np.abs(new - x) < step_tol)
            xi[act[move]] = new[move]
            ok[act[stop | small]] = True
            done[act[stop | small | dead]] = True
        return xi, ok

    def _project(self, P, xi):
        xis, ok = self._project_many(np.atleast_2d(P), [xi])
        return float(xis[0]), bool(ok[0])

    def _seed_pairs(self, P):
        """(row, sample) index pairs at local minima of the sample distances."""
        d = cdist(P, self.sample_points)
        inf = np.full((len(P), 1), np.inf)
        prev = np.hstack((inf, d[:, :-1]))
        nxt = np.hstack((d[:, 1:], inf))
        rows, cols = np.nonzero((d <= prev) & (d <= nxt))
        return d, rows, cols

    def closest_point(self, point):
        """Global closest point, seeded from the approximation polygon.

        All parameters whose distance ties the minimum within
        1e-8 * (1 + d_min) are reported in ``candidates``. If Newton fails on
        every seed the best polygon sample is returned with
        ``converged=False``.
        """
        P = np.atleast_2d(np.asarray(point, dtype=float))
        d, _, seeds = self._seed_pairs(P)
        d = d[0]
        best_sample = int(np.argmin(d))
        xis, ok = self._project_many(np.repeat(P, len(seeds), axis=0), self.sample_xi[seeds])
        found = xis[ok]
        if not len(found):
            logger.warning(f"closest point: Newton failed on all {len(seeds)} seeds, using polygon sample")
            xi = float(self.sample_xi[best_sample])
            return ClosestPoint(xi, float(d[best_sample]), self.sample_points[best_sample].copy(), [xi], False)

        a, b = self.domain
        found = np.sort(found)
        keep = np.concatenate(([True], np.diff(found) > 1e-9 * (b - a)))
        found = found[keep]
        pts = self._evaluate_unchecked(found)
        dist = np.linalg.norm(pts - P[0], axis=1)
        k = int(np.argmin(dist))
        if dist[k] > d[best_sample] * (1.0 + 1e-14):
            xi = float(self.sample_xi[best_sample])
            return ClosestPoint(xi, float(d[best_sample]), self.sample_points[best_sample].copy(), [xi], False)
        tied = found[dist <= dist[k] + TIE_TOL * (1.0 + dist[k])]
        return ClosestPoint(float(found[k]), float(dist[k]), pts[k], [float(x) for x in tied], True)

    def closest_points(self, points, chunk=4096):
        """Vectorised ``closest_point`` without candidate lists.

        Returns (xi, distance, converged) arrays, one entry per row of
        ``points``. Rows whose Newton runs all fail fall back to the nearest
        polygon sample.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n = len(points)
        xi_out = np.empty(n)
        dist_out = np.empty(n)
        ok_out = np.zeros(n, dtype=bool)
        for start in range(0, n, chunk):
            P = points[start:start + chunk]
            d, rows, cols = self._seed_pairs(P)
            xis, ok = self._project_many(P[rows], self.sample_xi[cols])
            pair_d = np.linalg.norm(self._evaluate_unchecked(xis) - P[rows], axis=1)
            pair_d[~ok] = np.inf
            order = np.lexsort((xis, pair_d, rows))
            sorted_rows = rows[order]
            first = order[np.concatenate(([True], sorted_rows[1:] != sorted_rows[:-1]))]
            best_xi = self.sample_xi[np.argmin(d, axis=1)]
            best_d = d.min(axis=1)
            converged = np.zeros(len(P), dtype=bool)
            win = pair_d[first] <= best_d[rows[first]] * (1.0 + 1e-14)
            best_xi[rows[first][win]] = xis[first][win]
            best_d[rows[first][win]] = pair_d[first][win]
            converged[rows[first][win]] = True
            xi_out[start:start + len(P)] = best_xi
            dist_out[start:start + len(P)] = best_d
            ok_out[start:start + len(P)] = converged
        return xi_out, dist_out, ok_out

    # --- derived curves -----------------------------------------------

    def transformed(self, matrix, offset=None):
        """Image under x -> M x + offset (NURBS are affinely invariant)."""
        M = np.asarray(matrix, dtype=float)
        pts = self.control_points @ M.T
        if offset is not None:
            pts = pts + np.asarray(offset, dtype=float)
        return Curve(self.degree, self.knots, pts, self.weights, self._samples_per_span)

    def reversed(self):
        a, b = self.domain
        knots = (a + b) - self.knots[::-1]
        return Curve(self.degree, knots, self.control_points[::-1], self.weights[::-1], self._samples_per_span)

    def arc_length_table(self, samples=None):
        """Cumulative chord length at ``samples + 1`` uniform parameters."""
        samples = samples or conf.get('LOFT_ARC_SAMPLES')
        a, b = self.domain
        xis = np.linspace(a, b, samples + 1)
        pts = self._evaluate_unchecked(xis)
        lengths = np.concatenate(([0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))))
        return xis, lengths

    def to_dict(self):
        data = {
            'degree': self.degree,
            'knots': self.knots.tolist(),
            'points': self.control_points.tolist(),
        }
        if not np.all(self.weights == 1.0):
            data['weights'] = self.weights.tolist()
        return data

    def __repr__(self):
        return f"Curve(degree={self.degree}, points={len(self.control_points)}, dim={self.dimension})"
