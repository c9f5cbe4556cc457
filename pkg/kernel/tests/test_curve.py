import math

import numpy as np
from django.test import SimpleTestCase
from scipy.spatial import cKDTree

from kernel.curve import Curve
from kernel.exceptions import CurveDomainError, ParameterError, UnsupportedDerivativeOrder

W = math.sqrt(0.5)


def helix():
    """Three-turn rational helix of radius 10 rising 8 per turn."""
    knots = [0, 0, 0] + [k for k in range(1, 12) for _ in range(2)] + [12, 12, 12]
    ring = [(10, 0), (10, 10), (0, 10), (-10, 10), (-10, 0), (-10, -10), (0, -10), (10, -10)]
    points = [(*ring[i % 8], float(i)) for i in range(25)]
    weights = [1.0 if i % 2 == 0 else W for i in range(25)]
    return Curve(2, knots, points, weights)


class CurveEvaluationTests(SimpleTestCase):
    def setUp(self):
        self.helix = helix()

    def test_end_points(self):
        np.testing.assert_allclose(self.helix.evaluate(0.0), [10, 0, 0], atol=1e-12)
        np.testing.assert_allclose(self.helix.evaluate(12.0), [10, 0, 24], atol=1e-12)

    def test_full_circle_is_exact(self):
        circle = Curve.full_circle((1.0, 2.0), 3.0)
        self.assertEqual(circle.knots.tolist(), [0, 0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 4])
        points = circle.evaluate_many(np.linspace(0.0, 4.0, 101))
        radii = np.linalg.norm(points - [1.0, 2.0], axis=1)
        np.testing.assert_allclose(radii, 3.0, rtol=0, atol=1e-12)
        self.assertTrue(circle.is_closed)

    def test_helix_projects_onto_circle(self):
        points = self.helix.evaluate_many(np.linspace(0.0, 12.0, 241))
        np.testing.assert_allclose(np.linalg.norm(points[:, :2], axis=1), 10.0, atol=1e-10)

    def test_derivatives_match_finite_differences(self):
        h = 1e-6
        for xi in (0.5, 3.25, 7.9):
            C, d1, d2 = self.helix.derivatives(xi, 2)
            fd1 = (self.helix.evaluate(xi + h) - self.helix.evaluate(xi - h)) / (2 * h)
            fd2 = (self.helix.derivatives(xi + h)[1] - self.helix.derivatives(xi - h)[1]) / (2 * h)
            np.testing.assert_allclose(d1, fd1, rtol=1e-6, atol=1e-6 * np.linalg.norm(d1))
            np.testing.assert_allclose(d2, fd2, rtol=1e-5, atol=1e-5 * np.linalg.norm(d2))

    def test_second_derivative_at_interior_knot(self):
        # double knot: the helix is only C1 there
        C, d1, d2 = self.helix.derivatives(1.0, 2)
        self.assertTrue(np.all(np.isfinite(d2)))

    def test_domain_errors(self):
        with self.assertRaises(CurveDomainError):
            self.helix.evaluate(-0.5)
        with self.assertRaises(CurveDomainError):
            self.helix.evaluate_many([0.0, 12.5])
        with self.assertRaises(UnsupportedDerivativeOrder):
            self.helix.derivatives(1.0, 3)

    def test_invalid_definitions(self):
        with self.assertRaises(ParameterError):
            Curve(2, [0, 0, 1, 1], [(0, 0), (1, 0), (2, 0)])
        with self.assertRaises(ParameterError):
            Curve(2, [0, 0, 0, 1, 1, 1], [(0, 0), (1, 0), (2, 0)], [1.0, 0.0, 1.0])
        with self.assertRaises(ParameterError):
            Curve(2, [0, 0, 0.5, 1, 1, 1], [(0, 0), (1, 0), (2, 0)])

    def test_affine_image(self):
        theta = 0.3
        M = np.array([[math.cos(theta), -math.sin(theta), 0], [math.sin(theta), math.cos(theta), 0], [0, 0, 2.0]])
        offset = np.array([1.0, -2.0, 0.5])
        image = self.helix.transformed(M, offset)
        for xi in np.linspace(0, 12, 13):
            np.testing.assert_allclose(image.evaluate(xi), M @ self.helix.evaluate(xi) + offset, atol=1e-10)

    def test_reversed(self):
        rev = self.helix.reversed()
        for xi in (0.0, 2.2, 11.0):
            np.testing.assert_allclose(rev.evaluate(12.0 - xi), self.helix.evaluate(xi), atol=1e-10)

    def test_arc_length_of_circle(self):
        _, lengths = Curve.full_circle((0.0, 0.0, 0.0), 10.0).arc_length_table(1024)
        self.assertAlmostEqual(lengths[-1], 20 * math.pi, delta=1e-3)
        self.assertTrue(np.all(np.diff(lengths) > 0))

    def test_to_dict_omits_unit_weights(self):
        line = Curve.line((0, 0, 0), (1, 0, 0))
        self.assertNotIn('weights', line.to_dict())
        self.assertEqual(len(self.helix.to_dict()['weights']), 25)


class ClosestPointTests(SimpleTestCase):
    def setUp(self):
        self.helix = helix()

    def test_perpendicular_foot_on_line(self):
        line = Curve.line((0, 0, 0), (10, 0, 0))
        cp = line.closest_point((3, 4, 0))
        self.assertAlmostEqual(cp.xi, 0.3, places=10)
        self.assertAlmostEqual(cp.distance, 4.0, places=10)
        self.assertTrue(cp.converged)

    def test_end_point_minimum(self):
        line = Curve.line((0, 0, 0), (10, 0, 0))
        cp = line.closest_point((-2, 1, 0))
        self.assertEqual(cp.xi, 0.0)
        self.assertAlmostEqual(cp.distance, math.sqrt(5.0), places=12)

    def test_centre_of_circle_is_ambiguous(self):
        circle = Curve.full_circle((0.0, 0.0, 0.0), 10.0)
        cp = circle.closest_point((0, 0, 5))
        self.assertAlmostEqual(cp.distance, math.sqrt(125.0), places=8)
        self.assertGreater(cp.multiplicity, 1)

    def test_helix_point_against_dense_sampling(self):
        P = np.array([10.5, 0.0, 0.1])
        cp = self.helix.closest_point(P)
        dense = np.linalg.norm(self.helix.evaluate_many(np.linspace(0, 12, 200001)) - P, axis=1).min()
        self.assertLess(cp.distance, 1.0)
        self.assertLessEqual(cp.distance, dense + 1e-12)
        self.assertLess(dense - cp.distance, 1e-5)

    def test_random_points_near_helix(self):
        rng = np.random.default_rng(7)
        xis = np.linspace(0, 12, 120001)
        samples = self.helix.evaluate_many(xis)
        for xi in rng.uniform(0.5, 11.5, 25):
            offset = rng.normal(size=3)
            P = self.helix.evaluate(xi) + 1.5 * rng.uniform() * offset / np.linalg.norm(offset)
            cp = self.helix.closest_point(P)
            dense = np.linalg.norm(samples - P, axis=1).min()
            self.assertLessEqual(cp.distance, dense + 1e-9)
            # stationarity away from the ends
            a, b = self.helix.domain
            if a < cp.xi < b:
                C, d1 = self.helix.derivatives(cp.xi)
                f = d1 @ (P - C)
                self.assertLess(abs(f), 1e-8 * np.linalg.norm(d1) * (1 + np.linalg.norm(P - C)))


class VectorisedCurveTests(SimpleTestCase):
    def setUp(self):
        self.helix = helix()

    def test_derivatives_many_match_scalar(self):
        # includes the doubled interior knots
        xis = np.concatenate((np.linspace(0.0, 12.0, 97), np.arange(1.0, 12.0)))
        C, d1, d2 = self.helix.derivatives_many(xis, 2)
        for i, xi in enumerate(xis):
            c, e1, e2 = self.helix.derivatives(xi, 2)
            np.testing.assert_allclose(C[i], c, atol=1e-12)
            np.testing.assert_allclose(d1[i], e1, atol=1e-10)
            np.testing.assert_allclose(d2[i], e2, rtol=1e-8, atol=1e-8)

    def test_circle_curvature(self):
        circle = Curve.full_circle((0.0, 0.0), 10.0)
        xis = np.linspace(0.05, 3.95, 40)
        xis = xis[np.abs(xis - np.round(xis)) > 1e-3]
        _, d1, d2 = circle.derivatives_many(xis, 2)
        cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        curvature = np.abs(cross) / np.linalg.norm(d1, axis=1) ** 3
        np.testing.assert_allclose(curvature, 0.1, rtol=1e-10)

    def test_closest_points_match_closest_point(self):
        rng = np.random.default_rng(19)
        points = rng.uniform((-14, -14, -3), (14, 14, 27), size=(40, 3))
        xis, distances, converged = self.helix.closest_points(points, chunk=16)
        for P, xi, distance, ok in zip(points, xis, distances, converged):
            cp = self.helix.closest_point(P)
            self.assertAlmostEqual(distance, cp.distance, places=10)
            self.assertEqual(ok, cp.converged)
            np.testing.assert_allclose(self.helix.evaluate(xi), cp.point, atol=1e-6 * (1 + cp.distance))

    def test_closest_points_against_dense_samples(self):
        samples = self.helix.evaluate_many(np.linspace(0.0, 12.0, 1_000_000))
        tree = cKDTree(samples)
        spacing = np.linalg.norm(np.diff(samples, axis=0), axis=1).max()
        rng = np.random.default_rng(23)
        points = rng.uniform((-14, -14, -3), (14, 14, 27), size=(1000, 3))
        oracle, _ = tree.query(points)
        _, distances, _ = self.helix.closest_points(points)
        self.assertTrue(np.all(distances <= oracle + 1e-9))
        self.assertTrue(np.all(oracle - distances <= spacing))
