import json
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from kernel.analytics import TreeAnalyzer
from kernel.csg import Boolean
from kernel.exceptions import SceneError
from kernel.scene import (
    bundled_scenes,
    parse_scene,
    parse_scene_data,
    resolve_scene_path,
    scene_to_dict,
    serialize_scene,
)

BUNDLED = [
    'coil_spring', 'loft_pipe', 'loft_pipe_modified', 'ops_cube', 'ops_cube_shifted',
    'plate_4_holes', 'plate_6_holes', 'unit_cube',
]


def cube_scene(**extra):
    data = {
        'solids': {'cube': {'primitive': 'box', 'start': [0, 0, 0], 'end': [1, 1, 1]}},
        'root': {'solid': 'cube'},
    }
    data.update(extra)
    return data


class BundledSceneTests(SimpleTestCase):
    def test_all_bundled_scenes_parse(self):
        self.assertEqual(bundled_scenes(), BUNDLED)
        for name in BUNDLED:
            scene = parse_scene(name)
            self.assertEqual(scene.name, name)
            self.assertTrue(scene.description)
            self.assertIsNotNone(scene.analysis, msg=name)

    def test_serialization_is_stable(self):
        for name in BUNDLED:
            first = serialize_scene(parse_scene(name))
            second = serialize_scene(parse_scene_data(json.loads(first)))
            self.assertEqual(first, second, msg=name)

    def test_history_form_is_stable(self):
        for name in ('ops_cube', 'ops_cube_shifted', 'unit_cube'):
            scene = parse_scene(name)
            first = serialize_scene(scene, form='history')
            again = parse_scene_data(json.loads(first))
            self.assertEqual(serialize_scene(again, form='history'), first, msg=name)
            self.assertEqual(serialize_scene(again), serialize_scene(scene), msg=name)

    def test_coil_spring_tree(self):
        scene = parse_scene('coil_spring')
        self.assertIsInstance(scene.root, Boolean)
        self.assertEqual(scene.root.op, 'union')
        self.assertEqual(TreeAnalyzer.node_counts(scene.root), {'sweep': 3, 'union': 2})
        self.assertTrue(scene.root.contains((10, 0, 0)))
        self.assertFalse(scene.root.contains((0, 0, 12)))
        lo, hi = scene.analysis_box()
        np.testing.assert_array_equal(lo, [-11, -11, 0])
        np.testing.assert_array_equal(hi, [11, 11, 24])

    def test_ops_cube_history(self):
        scene = parse_scene('ops_cube')
        self.assertEqual([s.op for s in scene.history][:2], ['body', 'chamfer'])
        self.assertEqual(sum(s.op == 'hole' for s in scene.history), 3)
        self.assertTrue(scene.root.contains((5, 5, 5)))
        self.assertFalse(scene.root.contains((0.1, 0.1, 5)))

    def test_digest_tracks_content(self):
        a = parse_scene_data(cube_scene())
        b = parse_scene_data(cube_scene())
        c = parse_scene_data(cube_scene(root={'primitive': 'sphere', 'radius': 1}))
        self.assertEqual(a.digest(), b.digest())
        self.assertNotEqual(a.digest(), c.digest())

    def test_scene_from_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'cube.json'
            path.write_text(json.dumps(cube_scene()), encoding='utf-8')
            scene = parse_scene(str(path))
            self.assertEqual(scene.name, 'cube')
            self.assertEqual(scene.source, str(path))
            np.testing.assert_array_equal(scene.analysis_box()[1], [1, 1, 1])


class SceneErrorTests(SimpleTestCase):
    def assertSceneError(self, data, fragment):
        with self.assertRaises(SceneError) as ctx:
            parse_scene_data(data)
        self.assertIn(fragment, str(ctx.exception))

    def test_empty_document(self):
        self.assertSceneError({}, 'no root')
        self.assertSceneError({'solids': {}}, 'no root')

    def test_dangling_names(self):
        data = cube_scene(solids={'bar': {'primitive': 'extrude', 'sketch': 'profile', 'length': 2}})
        self.assertSceneError(data, "solids.bar.sketch: unknown sketch 'profile'")
        self.assertSceneError(cube_scene(root={'solid': 'nothing'}), "root: unknown solid 'nothing'")
        data = cube_scene(sketches={'wire': {'circle': {'radius': 1}}},
                          solids={'coil': {'primitive': 'sweep', 'path': 'helix', 'sketch': 'wire'}})
        self.assertSceneError(data, "solids.coil.path: unknown path curve 'helix'")

    def test_root_and_history(self):
        self.assertSceneError(cube_scene(history=[{'body': 'cube'}]), "either 'root' or 'history'")

    def test_history_errors_name_the_step(self):
        data = cube_scene(history=[{'body': 'cube'}, {'op': 'difference', 'body': 'drill'}])
        del data['root']
        self.assertSceneError(data, "history[1]")

    def test_bad_parameters(self):
        self.assertSceneError(cube_scene(root={'primitive': 'sphere', 'radius': -1}), 'root')
        self.assertSceneError(cube_scene(root={'primitive': 'sphere', 'size': 1}), 'bad parameters for sphere')
        self.assertSceneError(cube_scene(root={'primitive': 'blob'}), "unknown primitive 'blob'")
        self.assertSceneError(cube_scene(root={'op': 'union', 'children': [{'solid': 'cube'}]}), 'at least two children')
        self.assertSceneError(cube_scene(root={'op': 'twist', 'children': [{'solid': 'cube'}]}), "unknown operation 'twist'")

    def test_analysis_validation(self):
        self.assertSceneError(cube_scene(analysis={'cells': [1, 1, 1], 'mesh': 3}), 'unknown analysis field(s) mesh')
        self.assertSceneError(cube_scene(analysis={'material': {'young': 1, 'poisson': 0.5}}), 'Poisson')
        self.assertSceneError(cube_scene(analysis={'dirichlet': [{'face': 'zmin'}]}), 'analysis.dirichlet[0]')
        self.assertSceneError(cube_scene(analysis={'neumann': [{'pressure': 1, 'traction': [0, 0, 1]}]}),
                              'analysis.neumann[0]')

    def test_invalid_json_and_missing_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'broken.json'
            path.write_text('{"root": ', encoding='utf-8')
            with self.assertRaises(SceneError) as ctx:
                parse_scene(str(path))
            self.assertIn('invalid JSON', str(ctx.exception))
        with self.assertRaises(FileNotFoundError):
            resolve_scene_path('no_such_scene')

    def test_unknown_form(self):
        with self.assertRaises(ValueError):
            scene_to_dict(parse_scene('unit_cube'), form='yaml')
