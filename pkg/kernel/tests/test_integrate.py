import math
import time

import numpy as np
from django.test import SimpleTestCase, override_settings

from kernel.exceptions import ParameterError
from kernel.integrate import (
    CUT,
    alpha_value,
    gauss_rule,
    has_physical_part,
    integrate_alpha,
    leaf_records,
    membership,
    moments,
    partition,
    physical_flags,
    volume,
)
from kernel.fcm import FcmModel
from kernel.primitives import INSIDE, OUTSIDE, ConeFrustum, Cuboid, Sphere
from kernel.scene import parse_scene


class GaussRuleTests(SimpleTestCase):
    def test_weights_sum_to_one(self):
        for order in (1, 2, 4):
            for dim in (1, 2, 3):
                points, weights = gauss_rule(order, dim)
                self.assertEqual(points.shape, (order ** dim, dim))
                self.assertAlmostEqual(weights.sum(), 1.0, places=14)

    def test_exact_for_polynomials(self):
        points, weights = gauss_rule(3, 2)
        value = np.sum(weights * points[:, 0] ** 5 * points[:, 1] ** 4)
        self.assertAlmostEqual(value, 1 / 30, places=14)

    def test_order_must_be_positive(self):
        with self.assertRaises(ParameterError):
            gauss_rule(0, 3)

    def test_alpha(self):
        self.assertEqual(alpha_value(math.inf), 0.0)
        self.assertAlmostEqual(alpha_value(8), 1e-8)


class PartitionTests(SimpleTestCase):
    def test_half_plane(self):
        tree = partition((0, 0), (1, 1), lambda p: p[:, 0] <= 0.3, k_max=4)
        cut = [leaf for leaf in tree.leaves() if leaf.label == CUT]
        self.assertEqual(len(cut), 16)
        self.assertEqual({leaf.level for leaf in cut}, {4})
        for leaf in cut:
            self.assertTrue(leaf.lo[0] <= 0.3 <= leaf.hi[0])
        area = integrate_alpha(tree, lambda p: np.ones(len(p)), lambda p: p[:, 0] <= 0.3, q=math.inf)
        self.assertAlmostEqual(area, 0.3, delta=1 / 16)

    def test_enclosing_solid_is_one_leaf(self):
        tree = partition((0, 0, 0), (1, 1, 1), Cuboid((-1, -1, -1), (2, 2, 2)), k_max=5)
        self.assertTrue(tree.is_leaf)
        self.assertEqual(tree.label, INSIDE)
        self.assertEqual(tree.label_counts(), {INSIDE: 1, OUTSIDE: 0, CUT: 0})

    def test_depth_limit(self):
        sphere = Sphere(1.0)
        for k in (0, 1, 3):
            tree = partition((-1, -1, -1), (1, 1, 1), sphere, k_max=k)
            self.assertEqual(tree.depth(), k)
        with self.assertRaises(ParameterError):
            partition((0, 0, 0), (1, 1, 1), sphere, k_max=-1)
        with self.assertRaises(ParameterError):
            partition((0, 0, 0), (1, 0, 1), sphere, k_max=1)

    @override_settings(KERNEL_PARTITION_DEPTH=2)
    def test_depth_from_settings(self):
        tree = partition((-1, -1, -1), (1, 1, 1), Sphere(1.0))
        self.assertEqual(tree.depth(), 2)

    def test_leaf_records(self):
        tree = partition((-1, -1, -1), (1, 1, 1), Sphere(1.0), k_max=2)
        records = leaf_records(tree)
        self.assertEqual(len(records), len(tree.leaves()))
        self.assertEqual(set(records[0]), {'level', 'lo', 'hi', 'label'})
        total = sum(np.prod(np.subtract(r['hi'], r['lo'])) for r in records)
        self.assertAlmostEqual(total, 8.0)


class PhysicalPartTests(SimpleTestCase):
    def test_face_contact_is_not_physical(self):
        below = Cuboid((0, 0, -1), (1, 1, 0))
        self.assertFalse(has_physical_part((0, 0, 0), (1, 1, 1), below, k_max=3))

    def test_cut_cell_refined_to_interior_sample(self):
        slab = Cuboid((0, 0, -1), (1, 1, 0.3))
        # only the bottom face samples lie in the slab
        self.assertFalse(has_physical_part((0, 0, 0), (1, 1, 1), slab, k_max=0))
        self.assertTrue(has_physical_part((0, 0, 0), (1, 1, 1), slab, k_max=1))

    def test_disjoint_box(self):
        self.assertFalse(has_physical_part((5, 5, 5), (6, 6, 6), Sphere(1.0), k_max=4))

    def test_enclosed_box_is_physical(self):
        self.assertTrue(has_physical_part((0, 0, 0), (0.1, 0.1, 0.1), Sphere(1.0), k_max=0))

    def test_batched_flags_match_single_cells(self):
        sphere = Sphere(1.0, center=(0.05, -0.1, 0.02))
        edges = np.linspace(-1.5, 1.5, 5)
        boxes = [((x0, y0, z0), (x1, y1, z1))
                 for x0, x1 in zip(edges, edges[1:])
                 for y0, y1 in zip(edges, edges[1:])
                 for z0, z1 in zip(edges, edges[1:])]
        flags = physical_flags(boxes, sphere, k_max=3, gauss_order=2)
        single = [has_physical_part(lo, hi, sphere, k_max=3, gauss_order=2) for lo, hi in boxes]
        self.assertEqual(flags.tolist(), single)
        self.assertTrue(0 < flags.sum() < len(boxes))

    def test_empty_and_negative_depth(self):
        self.assertEqual(len(physical_flags([], Sphere(1.0), k_max=2)), 0)
        with self.assertRaises(ParameterError):
            physical_flags([((0, 0, 0), (1, 1, 1))], Sphere(1.0), k_max=-1)

    def test_coil_spring_activation(self):
        scene = parse_scene('coil_spring')
        lo, hi = scene.analysis_box()
        started = time.perf_counter()
        model = FcmModel(scene.root, lo, hi, scene.analysis.cells, degree=2, k_max=4)
        elapsed = time.perf_counter() - started
        self.assertLessEqual(abs(model.n_active - 134), 3)
        self.assertLess(elapsed, 30.0)


class VolumeTests(SimpleTestCase):
    def test_sphere_at_depth_one(self):
        # half of the Gauss points of each octant fall inside
        self.assertAlmostEqual(volume(Sphere(1.0), k_max=1, gauss_order=2), 4.0, places=12)

    def test_alpha_in_fictitious_domain(self):
        sphere = Sphere(1.0)
        tree = partition((-1, -1, -1), (1, 1, 1), sphere, k_max=1, gauss_order=2)
        value = integrate_alpha(tree, lambda p: np.ones(len(p)), sphere, q=2, gauss_order=2)
        self.assertAlmostEqual(value, 4.04, places=12)
        with self.assertRaises(ParameterError):
            integrate_alpha(tree, lambda p: np.ones(len(p)), None, q=2)

    def test_sphere_converges(self):
        exact = 4 / 3 * math.pi
        coarse = volume(Sphere(1.0), k_max=1, gauss_order=2)
        fine = volume(Sphere(1.0), k_max=5, gauss_order=2)
        # point sampling of the indicator does not shrink the error at every level
        self.assertLess(abs(fine - exact), abs(coarse - exact))
        self.assertAlmostEqual(fine, exact, delta=0.005 * exact)

    def test_cone_frustum(self):
        value = volume(ConeFrustum(1.0, 2.0, 3.0), lo=(-2, -2, 0), hi=(2, 2, 3), k_max=5, gauss_order=2)
        self.assertAlmostEqual(value, 7 * math.pi, delta=0.005 * 7 * math.pi)

    def test_unit_cube_moments(self):
        m = moments(Cuboid((0, 0, 0), (1, 1, 1)), k_max=3, gauss_order=2)
        self.assertAlmostEqual(m.volume, 1.0, places=12)
        np.testing.assert_allclose(m.centroid, [0.5, 0.5, 0.5], atol=1e-12)
        expected = np.full((3, 3), 0.25) + np.eye(3) * (1 / 3 - 0.25)
        np.testing.assert_allclose(m.second_moments, expected, atol=1e-12)
        self.assertEqual(set(m.to_dict()), {'volume', 'centroid', 'second_moments'})

    def test_threaded_membership_matches_serial(self):
        sphere = Sphere(1.0)
        rng = np.random.default_rng(21)
        points = rng.uniform(-1.2, 1.2, size=(5000, 3))
        np.testing.assert_array_equal(membership(sphere, points, threads=4), membership(sphere, points, threads=1))
