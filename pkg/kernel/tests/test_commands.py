import json
import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase, override_settings

from kernel.exporters import OccupancyGrid, read_leaf_dump
from kernel.models import RunRecord


def run(*args):
    out = StringIO()
    call_command(*args, stdout=out)
    return out.getvalue()


def run_json(*args):
    return json.loads(run(*args, '--json'))


class PmcCommandTests(SimpleTestCase):
    def test_coil_spring_points(self):
        result = run_json('pmc', 'coil_spring', '--point', '10', '0', '0', '--point', '0', '0', '12')
        self.assertEqual(result['scene'], 'coil_spring')
        self.assertEqual(result['result'], ['inside', 'outside'])
        self.assertEqual(result['inside'], 1)

    def test_plain_output(self):
        output = run('pmc', 'unit_cube', '--point', '0.5', '0.5', '0.5', '--point', '2', '0', '0')
        self.assertEqual(output.splitlines(), ['0.5 0.5 0.5 inside', '2 0 0 outside'])

    def test_points_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'points.txt'
            path.write_text('# query points\n0.5 0.5 0.5\n\n1.5, 0, 0\n', encoding='utf-8')
            result = run_json('pmc', 'unit_cube', '--points-file', str(path))
            self.assertEqual(result['result'], ['inside', 'outside'])
            path.write_text('1 2\n', encoding='utf-8')
            with self.assertRaises(CommandError) as ctx:
                run('pmc', 'unit_cube', '--points-file', str(path))
            self.assertEqual(ctx.exception.returncode, 2)

    def test_exit_codes(self):
        with self.assertRaises(CommandError) as ctx:
            run('pmc', 'unit_cube')
        self.assertEqual(ctx.exception.returncode, 1)
        with self.assertRaises(CommandError) as ctx:
            run('pmc', 'unit_cube', '--point', '1', '2')
        self.assertEqual(ctx.exception.returncode, 1)
        with self.assertRaises(CommandError) as ctx:
            run('pmc', 'no_such_scene', '--point', '0', '0', '0')
        self.assertEqual(ctx.exception.returncode, 2)


class IntegrationCommandTests(SimpleTestCase):
    def test_volume(self):
        result = run_json('volume', 'unit_cube', '--depth', '3')
        self.assertEqual(result['volume'], 1.0)
        self.assertEqual(result['partition']['leaves'], 1)

    def test_volume_with_box_and_leaf_dump(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'leaves.jsonl'
            result = run_json('volume', 'unit_cube', '--box', '0.5', '0', '0', '1.5', '1', '1',
                              '--depth', '2', '--leaf-dump', str(path))
            self.assertAlmostEqual(result['volume'], 0.5, places=12)
            self.assertEqual(len(read_leaf_dump(path)), result['partition']['leaves'])

    def test_moments(self):
        result = run_json('moments', 'unit_cube')
        self.assertAlmostEqual(result['volume'], 1.0)
        for value in result['centroid']:
            self.assertAlmostEqual(value, 0.5)

    def test_tree_stats(self):
        result = run_json('tree_stats', 'plate_4_holes', '--samples', '200', '--rebalance')
        self.assertEqual(result['leaves'], 9)
        self.assertGreater(result['rebalanced']['depth_before'], result['rebalanced']['depth_after'])
        self.assertEqual(result['sampling']['samples'], 200)
        self.assertEqual(result['sampling']['inside'], result['rebalanced']['sampling']['inside'])


class OutputCommandTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = Path(self.tmp.name)

    def test_voxelize(self):
        path = self.dir / 'cube.grid'
        result = run_json('voxelize', 'unit_cube', '--dims', '4', '4', '4', '--output', str(path))
        self.assertEqual(result['filled'], 64)
        self.assertEqual(result['volume'], 1.0)
        self.assertEqual(OccupancyGrid.read(path).filled, 64)

    def test_mesh(self):
        stl, vtk = self.dir / 'cube.stl', self.dir / 'cube.vtk'
        result = run_json('mesh', 'unit_cube', '--resolution', '8', '--refine', '12', '--stl', str(stl), '--vtk', str(vtk))
        self.assertGreater(result['triangles'], 0)
        # marching cubes bevels the cube edges by about one grid step
        self.assertGreater(result['signed_volume'], 0.8)
        self.assertLess(result['signed_volume'], 1.0 + 1e-3)
        self.assertTrue(stl.is_file() and vtk.is_file())

    def test_mesh_of_empty_box(self):
        stl = self.dir / 'nothing.stl'
        output = run('mesh', 'unit_cube', '--box', '5', '5', '5', '6', '6', '6', '--resolution', '4', '--stl', str(stl))
        self.assertIn('triangles 0', output)
        self.assertFalse(stl.exists())


class SolveCommandTests(SimpleTestCase):
    def test_unit_cube(self):
        with tempfile.TemporaryDirectory() as tmp:
            vtk = Path(tmp) / 'cube.vtk'
            result = run_json('solve', 'unit_cube', '--vtk', str(vtk))
            self.assertTrue(vtk.is_file())
        self.assertEqual(result['active_cells'], 1)
        self.assertEqual(result['dofs'], 81)
        self.assertAlmostEqual(result['strain_energy'], 0.005, places=10)
        self.assertAlmostEqual(result['max_displacement'], 0.1, places=10)
        self.assertAlmostEqual(result['max_von_mises'], 0.1, places=8)

    def test_overrides(self):
        result = run_json('solve', 'unit_cube', '--degree', '1', '--young', '2',
                          '--dirichlet', 'zmin', '0', '0', '0', '--dirichlet', 'zmax', 'free', 'free', '-0.2')
        self.assertEqual(result['degree'], 1)
        self.assertEqual(result['dofs'], 24)
        # 0.5 * E * eps^2 * V
        self.assertAlmostEqual(result['strain_energy'], 0.04, places=10)

    def test_singular_setup_is_numeric_failure(self):
        with self.assertRaises(CommandError) as ctx:
            run('solve', 'unit_cube', '--dirichlet', 'zmin', 'free', 'free', '0')
        self.assertEqual(ctx.exception.returncode, 3)

    def test_bad_face_is_usage_error(self):
        with self.assertRaises(CommandError) as ctx:
            run('solve', 'unit_cube', '--dirichlet', 'top', '0', '0', '0')
        self.assertEqual(ctx.exception.returncode, 1)

    def test_split_borehole_gives_the_same_answer(self):
        args = ('--cells', '2', '2', '2', '--degree', '1', '--depth', '2')
        single = run_json('solve', 'ops_cube', *args)
        split = run_json('solve', 'ops_cube_shifted', *args)
        self.assertEqual(single['active_cells'], split['active_cells'])
        self.assertEqual(single['dofs'], split['dofs'])
        self.assertAlmostEqual(split['displacement_l2'] / single['displacement_l2'], 1.0, delta=1e-6)
        self.assertAlmostEqual(split['strain_energy'] / single['strain_energy'], 1.0, delta=1e-6)

    def test_split_borehole_at_cubic_degree(self):
        args = ('--cells', '3', '3', '3', '--degree', '3', '--depth', '3')
        single = run_json('solve', 'ops_cube', *args)
        split = run_json('solve', 'ops_cube_shifted', *args)
        self.assertEqual(single['dofs'], split['dofs'])
        self.assertAlmostEqual(split['displacement_l2'] / single['displacement_l2'], 1.0, delta=1e-6)

        single = run_json('volume', 'ops_cube', '--depth', '4')
        split = run_json('volume', 'ops_cube_shifted', '--depth', '4')
        self.assertAlmostEqual(split['volume'] / single['volume'], 1.0, delta=1e-6)


class RunRecordTests(TestCase):
    def test_recording_is_off_by_default(self):
        run('volume', 'unit_cube', '--depth', '1')
        self.assertEqual(RunRecord.objects.count(), 0)

    @override_settings(KERNEL_RECORD_RUNS=True)
    def test_runs_are_recorded(self):
        run('volume', 'unit_cube', '--depth', '1')
        with self.assertRaises(CommandError):
            run('solve', 'unit_cube', '--dirichlet', 'zmin', 'free', 'free', '0')
        ok, failed = RunRecord.objects.order_by('id')
        self.assertEqual((ok.command, ok.status, ok.scene_name), ('volume', 'ok', 'unit_cube'))
        self.assertEqual(ok.summary['volume'], 1.0)
        self.assertEqual(ok.parameters['depth'], 1)
        self.assertEqual(len(ok.scene_sha1), 40)
        self.assertEqual((failed.command, failed.status), ('solve', 'numeric'))
        self.assertIn('rigid-body', failed.error_message)
