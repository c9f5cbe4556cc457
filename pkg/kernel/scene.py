"""
Scene documents: named curves, sketches and solids, one CSG root (or a
construction history) and an optional analysis block, stored as JSON.

``parse_scene`` validates a document into a ``Scene`` and reports failures as
``SceneError`` with the path of the offending node. ``serialize_scene`` writes
the canonical form back, so parse -> serialize -> parse is stable.
"""
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .csg import (
    EXTENDED_OPS,
    OPERATIONS,
    Boolean,
    HistoryStep,
    Leaf,
    Transform,
    build_from_history,
    extended_op,
    to_history,
)
from .curve import Curve
from .exceptions import KernelError, SceneError
from .extended import EXTENDED, dihedral_matrix
from .fcm import Material
from .primitives import PRIMITIVES, Frame
from .sketch import ArcSegment, LineSegment, Sketch, SplineSegment

logger = logging.getLogger(__name__)

SCENES_DIR = Path(__file__).resolve().parent / 'scenes'


@dataclass
class Analysis:
    """Finite cell settings of a scene."""
    cells: list = field(default_factory=lambda: [4, 4, 4])
    degree: int = 2
    k_max: int = None
    q: float = None
    material: Material = field(default_factory=Material)
    box: list = None
    dirichlet: list = field(default_factory=list)
    neumann: list = field(default_factory=list)
    body_load: list = None
    mesh_resolution: int = 32

    FIELDS = ('cells', 'degree', 'k_max', 'q', 'box', 'dirichlet', 'neumann', 'body_load', 'mesh_resolution')

    @classmethod
    def from_dict(cls, data, path='analysis'):
        if not isinstance(data, dict):
            raise SceneError("analysis must be an object", path)
        unknown = set(data) - set(cls.FIELDS) - {'material'}
        if unknown:
            raise SceneError(f"unknown analysis field(s) {', '.join(sorted(unknown))}", path)
        kwargs = {name: data[name] for name in cls.FIELDS if name in data}
        try:
            if 'material' in data:
                kwargs['material'] = Material(**data['material'])
            analysis = cls(**kwargs)
        except (TypeError, KernelError) as exc:
            raise SceneError(str(exc), path) from exc
        for i, bc in enumerate(analysis.dirichlet):
            if 'face' not in bc or 'value' not in bc:
                raise SceneError("Dirichlet entries need 'face' and 'value'", f"{path}.dirichlet[{i}]")
        for i, load in enumerate(analysis.neumann):
            if ('traction' in load) == ('pressure' in load):
                raise SceneError("Neumann entries need exactly one of 'traction' or 'pressure'", f"{path}.neumann[{i}]")
        return analysis

    def to_dict(self):
        data = {'material': self.material.to_dict()}
        for name in self.FIELDS:
            value = getattr(self, name)
            if value is not None and value != []:
                data[name] = value
        return data


@dataclass
class Scene:
    name: str
    root: object
    curves: dict = field(default_factory=dict)
    sketches: dict = field(default_factory=dict)
    solids: dict = field(default_factory=dict)
    history: list = None
    bodies: dict = field(default_factory=dict)
    analysis: Analysis = None
    description: str = ''
    units: str = ''
    source: str = ''

    def bounding_box(self):
        return self.root.bounding_box()

    def analysis_box(self):
        """Embedding box of the analysis block, or the root bounding box."""
        if self.analysis is not None and self.analysis.box is not None:
            lo, hi = self.analysis.box
            return np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        return self.bounding_box()

    def digest(self):
        return hashlib.sha1(serialize_scene(self).encode('utf-8')).hexdigest()


# --- locating scene files ---------------------------------------------


def bundled_scenes():
    return sorted(p.stem for p in SCENES_DIR.glob('*.json'))


def resolve_scene_path(name):
    """A file path, or the name of a bundled scene."""
    path = Path(name)
    if path.is_file():
        return path
    bundled = SCENES_DIR / (path.name if path.suffix == '.json' else f"{path.name}.json")
    if bundled.is_file():
        return bundled
    raise FileNotFoundError(f"scene '{name}' is neither a file nor a bundled scene")


def parse_scene(path):
    path = resolve_scene_path(path)
    try:
        data = json.loads(path.read_text(encoding='utf-8'))
    except json.JSONDecodeError as exc:
        raise SceneError(f"invalid JSON: {exc}") from exc
    scene = parse_scene_data(data, default_name=path.stem)
    scene.source = str(path)
    return scene


# --- parsing ------------------------------------------------------------


def parse_scene_data(data, default_name='scene'):
    if not isinstance(data, dict) or not data:
        raise SceneError("no root")
    parser = _Parser(data)
    scene = parser.parse(default_name)
    logger.debug(
        f"parsed scene '{scene.name}': {len(scene.curves)} curves, {len(scene.sketches)} sketches, "
        f"{len(scene.solids)} solids, tree depth {scene.root.depth}"
    )
    return scene


def _require(data, key, path):
    if key not in data:
        raise SceneError(f"missing field '{key}'", path)
    return data[key]


def _frame(data, path):
    if data is None:
        return None
    if not isinstance(data, dict):
        raise SceneError("frame must be an object", path)
    try:
        if 'rotate' in data:
            return Frame.from_euler(data.get('origin', (0.0, 0.0, 0.0)), data['rotate'], data.get('sequence', 'xyz'))
        return Frame(data.get('origin', (0.0, 0.0, 0.0)), data.get('x_axis', (1.0, 0.0, 0.0)),
                     data.get('y_axis', (0.0, 1.0, 0.0)))
    except (TypeError, ValueError, KernelError) as exc:
        raise SceneError(str(exc), path) from exc


class _Parser:
    def __init__(self, data):
        self.data = data
        self.curves = {}
        self.sketches = {}
        self.solids = {}
        self.bodies = {}

    def parse(self, default_name):
        data = self.data
        for name, entry in data.get('curves', {}).items():
            self.curves[name] = self.curve(entry, f"curves.{name}")
        for name, entry in data.get('sketches', {}).items():
            self.sketches[name] = self.sketch(entry, f"sketches.{name}")
        for name, entry in data.get('solids', {}).items():
            self.solids[name] = self.solid(entry, f"solids.{name}")
        history = None
        if 'root' in data and 'history' in data:
            raise SceneError("give either 'root' or 'history', not both")
        if 'root' in data:
            root = self.node(data['root'], 'root')
        elif 'history' in data:
            for name, entry in data.get('bodies', {}).items():
                if name in self.solids:
                    raise SceneError(f"body '{name}' shadows a solid", f"bodies.{name}")
                self.bodies[name] = self.node(entry, f"bodies.{name}")
            history = self.history(data['history'], 'history')
            named = {name: Leaf(solid, name) for name, solid in self.solids.items()}
            named.update(self.bodies)
            try:
                root = build_from_history(history, named)
            except KernelError as exc:
                index = getattr(exc, 'step_index', None)
                raise SceneError(str(exc), 'history' if index is None else f"history[{index}]") from exc
        else:
            raise SceneError("no root")
        analysis = Analysis.from_dict(data['analysis']) if 'analysis' in data else None
        return Scene(
            name=data.get('name', default_name),
            root=root,
            curves=self.curves,
            sketches=self.sketches,
            solids=self.solids,
            history=history,
            bodies=self.bodies,
            analysis=analysis,
            description=data.get('description', ''),
            units=data.get('units', ''),
        )

    # curves and sketches

    def curve(self, entry, path):
        if isinstance(entry, str):
            if entry not in self.curves:
                raise SceneError(f"unknown curve '{entry}'", path)
            return self.curves[entry]
        if not isinstance(entry, dict):
            raise SceneError("curve must be an object or a curve name", path)
        try:
            if 'line' in entry:
                return Curve.line(entry['line']['start'], entry['line']['end'])
            if 'circle' in entry:
                c = entry['circle']
                return Curve.full_circle(c['center'], c['radius'], c.get('x_axis'), c.get('y_axis'))
            if 'arc' in entry:
                c = entry['arc']
                return Curve.circle_arc(c['center'], c['radius'], np.radians(c['start_angle']),
                                        np.radians(c['end_angle']), c.get('x_axis'), c.get('y_axis'))
            return Curve(_require(entry, 'degree', path), _require(entry, 'knots', path),
                         _require(entry, 'points', path), entry.get('weights'))
        except KeyError as exc:
            raise SceneError(f"missing field {exc}", path) from exc
        except (TypeError, KernelError) as exc:
            raise SceneError(str(exc), path) from exc

    def sketch(self, entry, path):
        if not isinstance(entry, dict):
            raise SceneError("sketch must be an object", path)
        depth = entry.get('quadtree_depth')
        try:
            if 'circle' in entry:
                c = entry['circle']
                return Sketch.circle(c['radius'], c.get('center', (0.0, 0.0)), c.get('rational', False), quadtree_depth=depth)
            if 'rectangle' in entry:
                r = entry['rectangle']
                return Sketch.rectangle(r['width'], r['height'], r.get('center', (0.0, 0.0)), quadtree_depth=depth)
            if 'rounded_rectangle' in entry:
                r = entry['rounded_rectangle']
                return Sketch.rounded_rectangle(r['width'], r['height'], r['radius'], r.get('center', (0.0, 0.0)),
                                                quadtree_depth=depth)
            if 'polygon' in entry:
                return Sketch.polygon(entry['polygon'], quadtree_depth=depth)
            segments = [self.segment(s, f"{path}.segments[{i}]")
                        for i, s in enumerate(_require(entry, 'segments', path))]
            return Sketch(segments, quadtree_depth=depth)
        except KeyError as exc:
            raise SceneError(f"missing field {exc}", path) from exc
        except (TypeError, KernelError) as exc:
            if isinstance(exc, SceneError):
                raise
            raise SceneError(str(exc), path) from exc

    def segment(self, entry, path):
        kind = _require(entry, 'type', path)
        if kind == 'line':
            return LineSegment(entry['start'], entry['end'])
        if kind == 'arc':
            return ArcSegment.from_degrees(entry['center'], entry['radius'], entry['start_angle'], entry['end_angle'])
        if kind == 'spline':
            curve = self.curve(entry['curve'] if 'curve' in entry else entry, path)
            return SplineSegment(curve)
        raise SceneError(f"unknown segment type '{kind}'", path)

    def named_sketch(self, name, path):
        if name not in self.sketches:
            raise SceneError(f"unknown sketch '{name}'", path)
        return self.sketches[name]

    # solids and nodes

    def solid(self, entry, path):
        kind = _require(entry, 'primitive', path)
        params = {k: v for k, v in entry.items() if k not in ('primitive', 'frame', 'name')}
        frame = _frame(entry.get('frame'), f"{path}.frame")
        try:
            if kind in PRIMITIVES:
                return PRIMITIVES[kind](**params, frame=frame)
            if kind in ('extrude', 'revolve'):
                params['sketch'] = self.named_sketch(params.get('sketch'), f"{path}.sketch")
                return EXTENDED[kind](**params, frame=frame)
            if kind in ('sweep', 'loft'):
                if 'path' not in params or params['path'] not in self.curves:
                    raise SceneError(f"unknown path curve '{params.get('path')}'", f"{path}.path")
                params['path'] = self.curves[params['path']]
                for key in ('sketch', 'start_sketch', 'end_sketch'):
                    if key in params:
                        params[key] = self.named_sketch(params[key], f"{path}.{key}")
                if 'dihedral' in params:
                    d = params.pop('dihedral')
                    params['relation'] = dihedral_matrix(d['angles'], d.get('sequence', 'xyz'))
                return EXTENDED[kind](**params)
        except TypeError as exc:
            raise SceneError(f"bad parameters for {kind}: {exc}", path) from exc
        except SceneError:
            raise
        except KernelError as exc:
            raise SceneError(str(exc), path) from exc
        raise SceneError(f"unknown primitive '{kind}'", path)

    def node(self, entry, path):
        if not isinstance(entry, dict):
            raise SceneError("tree node must be an object", path)
        if 'solid' in entry:
            name = entry['solid']
            if name in self.solids:
                return Leaf(self.solids[name], name)
            if name in self.bodies:
                return self.bodies[name]
            raise SceneError(f"unknown solid '{name}'", path)
        if 'primitive' in entry:
            return Leaf(self.solid(entry, path), entry.get('name'))
        op = _require(entry, 'op', path)
        children = [self.node(c, f"{path}.children[{i}]") for i, c in enumerate(_require(entry, 'children', path))]
        try:
            if op in OPERATIONS:
                if len(children) < 2:
                    raise SceneError(f"'{op}' needs at least two children", path)
                node = children[0]
                for child in children[1:]:
                    node = Boolean(op, node, child)
                return node
            if len(children) != 1:
                raise SceneError(f"'{op}' takes exactly one child", path)
            child = children[0]
            if op == 'transform':
                if 'frame' in entry:
                    return Transform(child, _frame(entry['frame'], f"{path}.frame"))
                return Transform.rigid(child, entry.get('translate', (0.0, 0.0, 0.0)), entry.get('rotate', (0.0, 0.0, 0.0)),
                                       entry.get('sequence', 'xyz'))
            if op == 'mirror':
                return Transform.mirror(child, _require(entry, 'point', path), _require(entry, 'normal', path))
            if op in EXTENDED_OPS:
                params = {k: v for k, v in entry.items() if k not in ('op', 'children')}
                return extended_op(child, op, **params)
        except SceneError:
            raise
        except (TypeError, KeyError, KernelError) as exc:
            raise SceneError(f"bad '{op}' node: {exc}", path) from exc
        raise SceneError(f"unknown operation '{op}'", path)

    def history(self, steps, path):
        if not isinstance(steps, list) or not steps:
            raise SceneError("history must be a non-empty list", path)
        out = []
        for i, step in enumerate(steps):
            if not isinstance(step, dict):
                raise SceneError("history step must be an object", f"{path}[{i}]")
            op = step.get('op', 'body')
            params = {k: v for k, v in step.items() if k not in ('op', 'body')}
            if op == 'transform':
                if 'frame' in params:
                    params = {'frame': _frame(params['frame'], f"{path}[{i}].frame")}
                else:
                    params = {'frame': Frame.from_euler(params.get('translate', (0.0, 0.0, 0.0)),
                                                        params.get('rotate', (0.0, 0.0, 0.0)),
                                                        params.get('sequence', 'xyz'))}
            out.append(HistoryStep(op, step.get('body'), params))
        return out


# --- serialization ------------------------------------------------------


class _Writer:
    def __init__(self, scene):
        self.scene = scene
        self.curve_names = {id(c): name for name, c in scene.curves.items()}
        self.sketch_names = {id(s): name for name, s in scene.sketches.items()}
        self.solid_names = {id(s): name for name, s in scene.solids.items()}

    def solid(self, solid):
        data = solid.to_dict()
        for key in ('sketch', 'start_sketch', 'end_sketch'):
            if key in data:
                data[key] = self.sketch_names[id(data[key])]
        if 'path' in data:
            data['path'] = self.curve_names[id(data['path'])]
        return data

    def node(self, node):
        if isinstance(node, Leaf):
            name = self.solid_names.get(id(node.solid))
            if name is not None:
                return {'solid': name}
            data = self.solid(node.solid)
            if node.name:
                data['name'] = node.name
            return data
        if isinstance(node, Boolean):
            return {'op': node.op, 'children': [self.node(node.left), self.node(node.right)]}
        child = [self.node(node.child)]
        if node.label == 'mirror':
            return {'op': 'mirror', 'point': node.params['point'], 'normal': node.params['normal'], 'children': child}
        return {'op': 'transform', 'frame': node.frame.to_dict(), 'children': child}

    @staticmethod
    def step(step):
        data = {} if step.op == 'body' else {'op': step.op}
        if step.body is not None:
            data['body'] = step.body
        if step.op == 'transform':
            data['frame'] = step.params['frame'].to_dict()
        else:
            data.update(step.params)
        return data

    def history(self):
        """Authored history when there is one, else the left spine of the tree."""
        scene = self.scene
        if scene.history is not None:
            steps = scene.history
            bodies = {name: self.node(body) for name, body in scene.bodies.items()}
            return [self.step(s) for s in steps], bodies
        steps, operands = to_history(scene.root)
        bodies = {}
        for step in steps:
            if step.body is None:
                continue
            operand = operands[step.body]
            if isinstance(operand, Leaf) and id(operand.solid) in self.solid_names:
                step.body = self.solid_names[id(operand.solid)]
            else:
                bodies[step.body] = self.node(operand)
        return [self.step(s) for s in steps], bodies


def scene_to_dict(scene, form='tree'):
    """Plain-data form of a scene; ``form`` is 'tree' (a root node) or 'history'."""
    if form not in ('tree', 'history'):
        raise ValueError(f"unknown scene form '{form}'")
    writer = _Writer(scene)
    data = {
        'name': scene.name,
        'curves': {name: c.to_dict() for name, c in scene.curves.items()},
        'sketches': {name: s.to_dict() for name, s in scene.sketches.items()},
        'solids': {name: writer.solid(s) for name, s in scene.solids.items()},
    }
    if scene.description:
        data['description'] = scene.description
    if scene.units:
        data['units'] = scene.units
    if form == 'history':
        data['history'], bodies = writer.history()
        if bodies:
            data['bodies'] = bodies
    else:
        data['root'] = writer.node(scene.root)
    if scene.analysis is not None:
        data['analysis'] = scene.analysis.to_dict()
    return data


def serialize_scene(scene, form='tree'):
    """Canonical JSON text of a scene (sorted keys, fixed indentation)."""
    return json.dumps(scene_to_dict(scene, form), indent=2, sort_keys=True)
