import math

import numpy as np
from django.test import SimpleTestCase

from kernel.curve import Curve
from kernel.exceptions import ParameterError, SketchValidationError
from kernel.sketch import LineSegment, Sketch, SplineSegment, ray_cast_spline


def bulge():
    """Quadratic Bezier arch y = 2x - x^2 over [0, 2], closed by the x-axis."""
    arch = SplineSegment(Curve(2, [0, 0, 0, 1, 1, 1], [(0, 0), (1, 2), (2, 0)]))
    return Sketch([arch, LineSegment((2, 0), (0, 0))])


def s_curve():
    return SplineSegment(Curve(3, [0, 0, 0, 0, 1, 1, 1, 1], [(0, 0), (1, 2), (2, -2), (3, 0)]))


class SketchMembershipTests(SimpleTestCase):
    def test_circle(self):
        for rational in (False, True):
            circle = Sketch.circle(1.0, rational=rational)
            self.assertTrue(circle.contains((0, 0)))
            self.assertFalse(circle.contains((2, 0)))
            self.assertTrue(circle.contains((1, 0)))

    def test_rational_circle_against_radius(self):
        circle = Sketch.circle(1.0, rational=True)
        rng = np.random.default_rng(3)
        points = rng.uniform(-1.5, 1.5, size=(300, 2))
        radii = np.linalg.norm(points, axis=1)
        keep = np.abs(radii - 1.0) > 1e-6
        np.testing.assert_array_equal(circle.contains_many(points[keep]), radii[keep] < 1.0)

    def test_boundary_points_are_inside(self):
        square = Sketch.rectangle(1.0, 1.0, center=(0.5, 0.5))
        self.assertTrue(square.contains((1.0, 0.5)))
        self.assertTrue(square.contains((0.0, 0.0)))
        self.assertFalse(square.contains((1.0 + 1e-6, 0.5)))

    def test_spline_arch_against_analytic_region(self):
        sketch = bulge()
        rng = np.random.default_rng(11)
        points = rng.uniform((-0.5, -0.5), (2.5, 1.5), size=(400, 2))
        x, y = points[:, 0], points[:, 1]
        top = 2 * x - x * x
        on_span = (x > -1e-4) & (x < 2 + 1e-4)
        near = on_span & ((np.abs(y) < 1e-4) | (np.abs(y - top) < 1e-4))
        expected = (x > 0) & (x < 2) & (y > 0) & (y < top)
        np.testing.assert_array_equal(sketch.contains_many(points[~near]), expected[~near])

    def test_random_polygons_against_winding_number(self):
        rng = np.random.default_rng(5)
        for _ in range(3):
            angles = np.sort(rng.uniform(0, 2 * math.pi, 12))
            radii = rng.uniform(0.5, 1.5, 12)
            polygon = Sketch.polygon(np.column_stack([radii * np.cos(angles), radii * np.sin(angles)]))
            for P in rng.uniform(-1.6, 1.6, size=(150, 2)):
                if min(seg.distance(P) for seg in polygon.segments) < 1e-6:
                    continue
                self.assertEqual(polygon.contains(P), polygon.winding_contains(P), msg=str(P))

    def test_signed_distance(self):
        square = Sketch.rectangle(2.0, 2.0)
        self.assertAlmostEqual(square.signed_distance((0, 0)), 1.0)
        self.assertAlmostEqual(square.signed_distance((2, 0)), -1.0)

    def test_rounded_rectangle_corner(self):
        sketch = Sketch.rounded_rectangle(2.0, 2.0, 0.5)
        self.assertFalse(sketch.contains((0.99, 0.99)))
        self.assertTrue(sketch.contains((0.8, 0.8)))
        self.assertTrue(sketch.contains((0.99, 0.0)))

    def test_quadtree_leaves_agree_with_exact_test(self):
        sketch = Sketch.rounded_rectangle(3.0, 2.0, 0.4, quadtree_depth=4)
        leaves = sketch.quadtree_leaves()
        self.assertTrue(any(leaf.label == 'cut' for leaf in leaves))
        for leaf in leaves:
            if leaf.label != 'cut':
                centroid = 0.5 * (leaf.lo + leaf.hi)
                self.assertEqual(leaf.label == 'inside', sketch._exact_contains(centroid))

    def test_quadtree_can_be_disabled(self):
        sketch = bulge()
        plain = Sketch(sketch.segments, quadtree_depth=0)
        for P in ((1.0, 0.5), (1.0, 1.2), (0.1, 0.05)):
            self.assertEqual(plain.contains(P), sketch.contains(P))


class DegenerateRayTests(SimpleTestCase):
    def test_ray_through_vertex_is_repositioned(self):
        square = Sketch.polygon([(0, 0), (1, 0), (1, 1), (0, 1)])
        reference = np.array([-0.5, -0.5])
        P = np.array([0.5, 0.5])
        self.assertTrue(square.cast(reference, P).degenerate)
        moved = square.reposition_reference(P, reference)
        self.assertFalse(np.allclose(moved, reference))
        self.assertFalse(square.cast(moved, P).degenerate)
        self.assertEqual(square.cast(moved, P).count % 2, 1)

    def test_clean_reference_is_kept(self):
        square = Sketch.polygon([(0, 0), (1, 0), (1, 1), (0, 1)])
        reference = np.array([-0.5, 0.3])
        np.testing.assert_array_equal(square.reposition_reference((0.5, 0.5), reference), reference)


class SketchValidationTests(SimpleTestCase):
    def test_open_contour(self):
        with self.assertRaises(SketchValidationError):
            Sketch([LineSegment((0, 0), (1, 0)), LineSegment((1, 0), (1, 1))])

    def test_self_intersection(self):
        with self.assertRaises(SketchValidationError):
            Sketch.polygon([(0, 0), (1, 1), (1, 0), (0, 1)])

    def test_spline_must_be_planar(self):
        with self.assertRaises(ParameterError):
            SplineSegment(Curve.line((0, 0, 0), (1, 0, 0)))

    def test_degenerate_line(self):
        with self.assertRaises(ParameterError):
            LineSegment((1, 1), (1, 1))


class SplineRayCastTests(SimpleTestCase):
    def setUp(self):
        self.spline = s_curve()

    def test_polygon_only_crossings_skip_curve_evaluation(self):
        result = ray_cast_spline(self.spline, (-1.0, 1.5), (4.0, 1.5))
        self.assertEqual(result.method, 'polygon')
        self.assertEqual(result.evaluations, 0)
        self.assertEqual(result.finite_count, 2)
        self.assertEqual(result.parity, 'even')
        self.assertEqual(result.case, 'a')

    def test_point_between_curve_and_closing_line(self):
        result = ray_cast_spline(self.spline, (-1.0, 0.3), (0.5, 0.3))
        self.assertIn(result.method, ('newton', 'subdivision'))
        self.assertTrue(result.odd)
        self.assertEqual(len(result.intersections), 1)
        self.assertEqual(result.case, 'd')
        self.assertGreater(result.evaluations, 0)

    def test_zero_length_ray(self):
        result = ray_cast_spline(self.spline, (0.5, 0.3), (0.5, 0.3))
        self.assertEqual(result.crossings, 0)
        self.assertEqual(result.method, 'trivial')

    def test_ray_ending_on_contour_vertex(self):
        result = ray_cast_spline(self.spline, (-1.0, 1.0), (3.0, 0.0))
        self.assertTrue(result.on_boundary)

    def test_ray_through_contour_vertex(self):
        result = ray_cast_spline(self.spline, (-1.0, 0.0), (1.0, 0.0))
        self.assertTrue(result.degenerate)
        self.assertFalse(result.on_boundary)


def arch():
    """C(t) = (2t, 4t(1 - t)) on [0, 1]."""
    return SplineSegment(Curve(2, [0, 0, 0, 1, 1, 1], [(0, 0), (1, 2), (2, 0)]))


def notch():
    """Quadratic with a reflex polygon corner at (2, 2.6); the curve passes (2, 2.7)."""
    return SplineSegment(Curve(2, [0, 0, 0, 1, 2, 3, 3, 3], [(0, 0), (1, 3), (2, 2.6), (3, 3), (4, 0)]))


def dense_crossings(points, A, B):
    """Proper crossings of the segment A -> B with a polyline."""
    d = B - A
    starts, ends = points[:-1], points[1:]
    e = ends - starts
    o1 = d[0] * (starts[:, 1] - A[1]) - d[1] * (starts[:, 0] - A[0])
    o2 = d[0] * (ends[:, 1] - A[1]) - d[1] * (ends[:, 0] - A[0])
    o3 = e[:, 0] * (A[1] - starts[:, 1]) - e[:, 1] * (A[0] - starts[:, 0])
    o4 = e[:, 0] * (B[1] - starts[:, 1]) - e[:, 1] * (B[0] - starts[:, 0])
    return int(np.count_nonzero((o1 * o2 < 0) & (o3 * o4 < 0)))


class SplineRayCaseTests(SimpleTestCase):
    def setUp(self):
        self.arch = arch()

    def test_case_a_equal_counts_outside_hull(self):
        result = ray_cast_spline(self.arch, (-1, 1.5), (3, 1.5))
        self.assertEqual((result.finite_count, result.infinite_count, result.closing_count), (2, 2, 0))
        self.assertEqual(result.method, 'polygon')
        self.assertEqual(result.crossings, 2)
        self.assertEqual(result.case, 'a')
        self.assertEqual(result.evaluations, 0)

    def test_case_b_reference_inside_span_hull(self):
        result = ray_cast_spline(self.arch, (0.9, 0.5), (0.9, 3))
        self.assertEqual((result.finite_count, result.infinite_count, result.closing_count), (1, 1, 0))
        self.assertEqual(result.method, 'newton')
        self.assertEqual(result.crossings, 1)
        self.assertEqual(result.case, 'b')
        np.testing.assert_allclose(result.intersections[0], (0.9, 0.99), atol=1e-9)

    def test_case_c_polygon_crossing_without_curve_crossing(self):
        result = ray_cast_spline(self.arch, (-1, 1.5), (1, 1.5))
        self.assertEqual((result.finite_count, result.infinite_count, result.closing_count), (1, 2, 0))
        self.assertIn(result.method, ('newton', 'subdivision'))
        self.assertEqual(result.crossings, 0)
        self.assertEqual(result.case, 'c')
        self.assertGreater(result.evaluations, 0)

    def test_case_d_point_under_the_curve(self):
        result = ray_cast_spline(self.arch, (-1, 0.5), (1, 0.5))
        self.assertEqual((result.finite_count, result.infinite_count, result.closing_count), (1, 2, 0))
        self.assertEqual(result.method, 'newton')
        self.assertEqual(result.crossings, 1)
        self.assertEqual(result.case, 'd')
        np.testing.assert_allclose(result.intersections[0], (1 - math.sqrt(0.5), 0.5), atol=1e-9)

    def test_case_e_root_beyond_the_point(self):
        result = ray_cast_spline(self.arch, (0.5, -1), (0.5, 0.5))
        self.assertEqual((result.finite_count, result.infinite_count, result.closing_count), (0, 1, 1))
        self.assertEqual(result.crossings, 0)
        self.assertEqual(result.case, 'e')

    def test_case_f_root_before_the_point(self):
        result = ray_cast_spline(self.arch, (0.5, -1), (0.5, 0.9))
        self.assertEqual((result.finite_count, result.infinite_count, result.closing_count), (0, 1, 1))
        self.assertEqual(result.method, 'newton')
        self.assertEqual(result.crossings, 1)
        self.assertEqual(result.case, 'f')

    def test_ends_outside_hull_use_polygon_count(self):
        result = ray_cast_spline(self.arch, (0.5, -1), (0.5, 3))
        self.assertEqual((result.finite_count, result.infinite_count, result.closing_count), (1, 1, 1))
        self.assertEqual(result.method, 'hull')
        self.assertEqual(result.crossings, 1)
        self.assertEqual(result.case, 'f')
        self.assertEqual(result.evaluations, 0)

    def test_equal_counts_near_reflex_corner_evaluate_the_curve(self):
        # the polygon crosses twice before the point, the curve only once
        segment = notch()
        result = ray_cast_spline(segment, (-6, -1.35), (2, 2.65))
        self.assertEqual((result.finite_count, result.infinite_count, result.closing_count), (2, 2, 0))
        self.assertNotEqual(result.method, 'polygon')
        self.assertEqual(result.crossings, 1)
        self.assertEqual(result.case, 'b')

        sketch = Sketch([segment, LineSegment((4, 0), (0, 0))])
        self.assertTrue(sketch.contains((2, 2.65)))
        self.assertTrue(sketch.contains((2, 2.55)))
        self.assertFalse(sketch.contains((2, 2.75)))

    def test_random_rays_against_dense_polyline(self):
        rng = np.random.default_rng(29)
        quarter = SplineSegment(Curve.circle_arc((0, 0), 1.0, 0.0, math.pi / 2))
        checked = 0
        for segment in (self.arch, s_curve(), notch(), quarter):
            curve = segment.curve
            dense = curve.evaluate_many(np.linspace(*curve.domain, 4097))
            lo, hi = dense.min(axis=0), dense.max(axis=0)
            center, span = 0.5 * (lo + hi), hi - lo
            far = 2.0 * float(np.linalg.norm(span))
            for _ in range(2500):
                angle = rng.uniform(0, 2 * math.pi)
                A = center + far * np.array([math.cos(angle), math.sin(angle)])
                B = rng.uniform(lo - 0.2 * span, hi + 0.2 * span)
                if np.min(np.linalg.norm(dense - B, axis=1)) < 1e-4:
                    continue
                result = ray_cast_spline(segment, A, B)
                if result.degenerate or result.on_boundary:
                    continue
                self.assertEqual(result.crossings % 2, dense_crossings(dense, A, B) % 2, msg=f"{A} -> {B}")
                checked += 1
        self.assertGreater(checked, 9900)


class CollinearEdgeTests(SimpleTestCase):
    def setUp(self):
        self.ell = Sketch.polygon([(0, 0), (2, 0), (2, 0.5), (1, 0.5), (1, 1), (0, 1)])

    def test_ray_along_edge_is_retried(self):
        reference = np.array([3.0, 0.5])
        P = np.array([0.5, 0.5])
        self.assertTrue(self.ell.cast(reference, P).degenerate)
        moved = self.ell.reposition_reference(P, reference)
        hits = self.ell.cast(moved, P)
        self.assertFalse(hits.degenerate)
        self.assertEqual(hits.count % 2, 1)

    def test_membership_along_edge_line(self):
        self.assertTrue(self.ell.contains((0.5, 0.5)))
        self.assertFalse(self.ell.contains((1.5, 0.75)))
        self.assertTrue(self.ell.contains((1.5, 0.25)))


class SignedDistanceTests(SimpleTestCase):
    def test_circle(self):
        for rational in (False, True):
            circle = Sketch.circle(1.0, rational=rational)
            self.assertAlmostEqual(circle.signed_distance((0, 0)), 1.0, places=9)
            self.assertAlmostEqual(circle.signed_distance((3, 0)), -2.0, places=9)
            np.testing.assert_allclose(circle.signed_distance_many([(0, 0), (3, 0)]), [1.0, -2.0], atol=1e-9)

    def test_rounded_rectangle_against_closed_form(self):
        w, h, r = 1.5, 1.0, 0.4
        sketch = Sketch.rounded_rectangle(2 * w, 2 * h, r)
        rng = np.random.default_rng(8)
        points = rng.uniform((-2.5, -2.0), (2.5, 2.0), size=(2000, 2))
        q = np.abs(points) - (w - r, h - r)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1) + np.minimum(q.max(axis=1), 0.0) - r
        np.testing.assert_allclose(sketch.signed_distance_many(points), -outside, atol=1e-9)
        for P, expected in zip(points[:50], outside[:50]):
            self.assertAlmostEqual(sketch.signed_distance(P), -expected, places=9)


class VectorisedMembershipTests(SimpleTestCase):
    def test_contains_many_matches_contains(self):
        rng = np.random.default_rng(13)
        for sketch in (Sketch.rounded_rectangle(3.0, 2.0, 0.4), bulge(), Sketch.circle(1.0, rational=True)):
            lo, hi = sketch.bounding_box
            points = rng.uniform(lo - 0.3, hi + 0.3, size=(1500, 2))
            expected = [sketch.contains(P) for P in points]
            self.assertEqual(sketch.contains_many(points).tolist(), expected)

    def test_without_quadtree(self):
        sketch = Sketch.rounded_rectangle(3.0, 2.0, 0.4)
        plain = Sketch(sketch.segments, quadtree_depth=0)
        points = np.random.default_rng(4).uniform(-2, 2, size=(500, 2))
        np.testing.assert_array_equal(plain.contains_many(points), sketch.contains_many(points))
