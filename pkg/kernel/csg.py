"""
CSG trees over simple and extended primitives.

Leaves hold a solid (anything with ``contains``, ``contains_many`` and
``bounding_box``), bifurcation nodes combine two children with union,
intersection or difference, and transform nodes place a single child with a
rigid motion or a mirror. Membership queries short-circuit and prune by
bounding box.
"""
import logging
import threading
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConstructionError, ParameterError
from .primitives import INSIDE, OUTSIDE, UNKNOWN, Cuboid, Cylinder, Frame, Wedge, boxes_overlap

logger = logging.getLogger(__name__)

OPERATIONS = ('union', 'intersection', 'difference')
COMMUTATIVE = ('union', 'intersection')


class CsgNode:
    kind = None

    def __init__(self):
        self.queries = 0
        self._counter_lock = threading.Lock()
        self._bbox = None

    def _count(self, n=1):
        with self._counter_lock:
            self.queries += n

    # --- structure ----------------------------------------------------

    @property
    def children(self):
        return ()

    def iter_nodes(self):
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    @property
    def depth(self):
        if not self.children:
            return 0
        return 1 + max(child.depth for child in self.children)

    @property
    def node_count(self):
        return sum(1 for _ in self.iter_nodes())

    def leaves(self):
        return [node for node in self.iter_nodes() if isinstance(node, Leaf)]

    def reset_counters(self):
        for node in self.iter_nodes():
            node.queries = 0

    # --- geometry -----------------------------------------------------

    def bounding_box(self):
        if self._bbox is None:
            self._bbox = self._compute_bbox()
        return self._bbox[0].copy(), self._bbox[1].copy()

    def _compute_bbox(self):
        raise NotImplementedError

    def _outside_bbox(self, P):
        lo, hi = self.bounding_box()
        return bool(np.any(P < lo) or np.any(P > hi))

    def contains(self, point, prune=True):
        """Membership of a single point; ``prune=False`` evaluates every node."""
        P = np.asarray(point, dtype=float)
        self._count()
        if prune and self._outside_bbox(P):
            return False
        return self._contains(P, prune)

    def contains_many(self, points):
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        result = np.zeros(len(pts), dtype=bool)
        if not len(pts):
            return result
        lo, hi = self.bounding_box()
        inbox = np.all((pts >= lo) & (pts <= hi), axis=1)
        self._count(len(pts))
        if np.any(inbox):
            result[inbox] = self._contains_many(pts[inbox])
        return result

    def classify_box(self, lo, hi):
        """Conservative class of an axis-aligned box: inside, outside or unknown."""
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        if not boxes_overlap(*self.bounding_box(), lo, hi):
            return OUTSIDE
        return self._classify_box(lo, hi)


class Leaf(CsgNode):
    kind = 'leaf'

    def __init__(self, solid, name=None):
        super().__init__()
        self.solid = solid
        self.name = name

    def _compute_bbox(self):
        lo, hi = self.solid.bounding_box()
        return np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)

    def _contains(self, P, prune):
        return bool(self.solid.contains(P))

    def _contains_many(self, pts):
        return np.asarray(self.solid.contains_many(pts), dtype=bool)

    def _classify_box(self, lo, hi):
        classify = getattr(self.solid, 'classify_box', None)
        return classify(lo, hi) if classify is not None else UNKNOWN

    def __repr__(self):
        return f"Leaf({self.name or self.solid!r})"


class Boolean(CsgNode):
    """Bifurcation node; the difference keeps points of ``left`` not in ``right``."""
    kind = 'boolean'

    def __init__(self, op, left, right):
        super().__init__()
        if op not in OPERATIONS:
            raise ParameterError(f"unknown boolean operation '{op}'")
        self.op = op
        self.left = left
        self.right = right

    @property
    def children(self):
        return (self.left, self.right)

    def _compute_bbox(self):
        llo, lhi = self.left.bounding_box()
        if self.op == 'difference':
            return llo, lhi
        rlo, rhi = self.right.bounding_box()
        if self.op == 'union':
            return np.minimum(llo, rlo), np.maximum(lhi, rhi)
        # may come out empty (lo > hi), which rejects every point
        return np.maximum(llo, rlo), np.minimum(lhi, rhi)

    def _contains(self, P, prune):
        a = self.left.contains(P, prune)
        if prune:
            if self.op == 'union' and a:
                return True
            if self.op != 'union' and not a:
                return False
        b = self.right.contains(P, prune)
        return self._combine(a, b)

    def _combine(self, a, b):
        if self.op == 'union':
            return a or b
        if self.op == 'intersection':
            return a and b
        return a and not b

    def _contains_many(self, pts):
        a = self.left.contains_many(pts)
        result = a.copy()
        if self.op == 'union':
            rest = ~a
            if np.any(rest):
                result[rest] = self.right.contains_many(pts[rest])
        elif np.any(a):
            b = self.right.contains_many(pts[a])
            result[a] = b if self.op == 'intersection' else ~b
        return result

    def _classify_box(self, lo, hi):
        a = self.left.classify_box(lo, hi)
        if self.op == 'union':
            if a == INSIDE:
                return INSIDE
            b = self.right.classify_box(lo, hi)
            if b == INSIDE:
                return INSIDE
            return OUTSIDE if a == OUTSIDE and b == OUTSIDE else UNKNOWN
        if a == OUTSIDE:
            return OUTSIDE
        b = self.right.classify_box(lo, hi)
        if self.op == 'intersection':
            if b == OUTSIDE:
                return OUTSIDE
            return INSIDE if a == INSIDE and b == INSIDE else UNKNOWN
        if b == INSIDE:
            return OUTSIDE
        return INSIDE if a == INSIDE and b == OUTSIDE else UNKNOWN

    def __repr__(self):
        return f"{self.op}({self.left!r}, {self.right!r})"


class Transform(CsgNode):
    """Single child placed by ``frame``; world point P maps to child point frame.to_local(P)."""
    kind = 'transform'

    def __init__(self, child, frame, label='rigid', params=None):
        super().__init__()
        self.child = child
        self.frame = frame
        self.label = label
        self.params = params or {}

    @classmethod
    def rigid(cls, child, translate=(0.0, 0.0, 0.0), rotate=(0.0, 0.0, 0.0), sequence='xyz'):
        """Rotate the child by Euler angles (degrees) and then translate it."""
        return cls(child, Frame.from_euler(translate, rotate, sequence), 'rigid')

    @classmethod
    def mirror(cls, child, point, normal):
        """Reflect the child across the plane through ``point`` with ``normal``."""
        n = np.asarray(normal, dtype=float)
        if np.linalg.norm(n) == 0:
            raise ParameterError("mirror normal must be non-zero")
        n = n / np.linalg.norm(n)
        H = np.eye(3) - 2.0 * np.outer(n, n)
        origin = 2.0 * float(n @ np.asarray(point, dtype=float)) * n
        params = {'point': [float(v) for v in point], 'normal': [float(v) for v in normal]}
        return cls(child, Frame.from_matrix(origin, H, allow_reflection=True), 'mirror', params)

    @property
    def children(self):
        return (self.child,)

    def _compute_bbox(self):
        return self.frame.world_box(*self.child.bounding_box())

    def _contains(self, P, prune):
        return self.child.contains(self.frame.to_local(P), prune)

    def _contains_many(self, pts):
        return self.child.contains_many(self.frame.to_local(pts))

    def _classify_box(self, lo, hi):
        return self.child.classify_box(*self.frame.local_box(lo, hi))

    def __repr__(self):
        return f"{self.label}({self.child!r})"


def as_node(body, name=None):
    return body if isinstance(body, CsgNode) else Leaf(body, name)


def union(a, b):
    return Boolean('union', as_node(a), as_node(b))


def intersection(a, b):
    return Boolean('intersection', as_node(a), as_node(b))


def difference(a, b):
    return Boolean('difference', as_node(a), as_node(b))


# --- construction history -------------------------------------------


@dataclass
class HistoryStep:
    """One entry of a construction history.

    The first step names the starting body. Later steps combine the current
    body with a named body (``union``, ``intersection``, ``difference``),
    place it (``transform`` with ``params['frame']``, ``mirror`` with
    ``point``/``normal``) or apply an extended operation (``chamfer``,
    ``fillet``, ``hole``).
    """
    op: str = 'body'
    body: str = None
    params: dict = field(default_factory=dict)


def build_from_history(steps, bodies):
    """Fold a construction history into a left-deep CSG tree."""
    steps = list(steps)
    if not steps:
        raise ConstructionError("empty construction history")

    def lookup(name, index):
        if name not in bodies:
            raise ConstructionError(f"unknown body '{name}'", index)
        return as_node(bodies[name], name)

    first = steps[0]
    if first.op != 'body':
        raise ConstructionError("history must start with a body", 0)
    current = lookup(first.body, 0)
    for index, step in enumerate(steps[1:], start=1):
        if step.op in OPERATIONS:
            current = Boolean(step.op, current, lookup(step.body, index))
        elif step.op == 'transform':
            frame = step.params.get('frame')
            if frame is None:
                raise ConstructionError("transform step needs a frame", index)
            current = Transform(current, frame)
        elif step.op == 'mirror':
            try:
                current = Transform.mirror(current, step.params['point'], step.params['normal'])
            except KeyError as exc:
                raise ConstructionError(f"mirror step is missing {exc}", index) from exc
        elif step.op in EXTENDED_OPS:
            try:
                current = extended_op(current, step.op, **step.params)
            except (TypeError, ParameterError) as exc:
                raise ConstructionError(str(exc), index) from exc
        else:
            raise ConstructionError(f"unknown operation '{step.op}'", index)
    logger.debug(f"history of {len(steps)} steps folded into a tree of depth {current.depth}")
    return current


def to_history(node):
    """Inverse of ``build_from_history`` for the left spine of a tree.

    Returns ``(steps, bodies)``; right operands become named bodies.
    """
    spine = []
    while isinstance(node, (Boolean, Transform)):
        spine.append(node)
        node = node.left if isinstance(node, Boolean) else node.child
    bodies = {}

    def name_of(operand):
        name = operand.name if isinstance(operand, Leaf) and operand.name else f"body_{len(bodies)}"
        while name in bodies and bodies[name] is not operand:
            name = f"{name}_{len(bodies)}"
        bodies[name] = operand
        return name

    steps = [HistoryStep('body', name_of(node))]
    for entry in reversed(spine):
        if isinstance(entry, Boolean):
            steps.append(HistoryStep(entry.op, name_of(entry.right)))
        elif entry.label == 'mirror':
            steps.append(HistoryStep('mirror', params=dict(entry.params)))
        else:
            steps.append(HistoryStep('transform', params={'frame': entry.frame}))
    return steps, bodies


def rebalance(node):
    """Balance runs of the same commutative operation.

    A chain ``((A - B) - C) - D`` becomes ``A - (B | C | D)`` with the union
    balanced. Membership is unchanged.
    """
    if isinstance(node, Transform):
        return Transform(rebalance(node.child), node.frame, node.label, node.params)
    if not isinstance(node, Boolean):
        return node
    if node.op == 'difference':
        subtrahends = []
        base = node
        while isinstance(base, Boolean) and base.op == 'difference':
            subtrahends.append(base.right)
            base = base.left
        base = rebalance(base)
        if len(subtrahends) == 1:
            return Boolean('difference', base, rebalance(subtrahends[0]))
        operands = []
        for sub in reversed(subtrahends):
            operands.extend(_flatten(sub, 'union'))
        return Boolean('difference', base, _balanced('union', [rebalance(o) for o in operands]))
    operands = _flatten(node, node.op)
    return _balanced(node.op, [rebalance(o) for o in operands])


def _flatten(node, op):
    if isinstance(node, Boolean) and node.op == op:
        return _flatten(node.left, op) + _flatten(node.right, op)
    return [node]


def _balanced(op, operands):
    if len(operands) == 1:
        return operands[0]
    mid = len(operands) // 2
    return Boolean(op, _balanced(op, operands[:mid]), _balanced(op, operands[mid:]))


# --- extended operations --------------------------------------------

EXTENDED_OPS = ('chamfer', 'fillet', 'hole')


def _edge_frame(start, end, normal_1, normal_2):
    """Frame at an edge: x and y run into the material along the faces, z along the edge."""
    start, end = np.asarray(start, dtype=float), np.asarray(end, dtype=float)
    n1 = np.asarray(normal_1, dtype=float)
    n2 = np.asarray(normal_2, dtype=float)
    n1, n2 = n1 / np.linalg.norm(n1), n2 / np.linalg.norm(n2)
    length = float(np.linalg.norm(end - start))
    if length == 0:
        raise ParameterError("edge has zero length")
    if abs(n1 @ n2) > 1e-9:
        raise ParameterError("edge operations need perpendicular adjacent faces")
    edge = (end - start) / length
    x, y = -n2, -n1
    swapped = float(np.cross(x, y) @ edge) < 0
    if swapped:
        x, y = y, x
    return Frame(start, x, y), length, swapped


def extended_tool(kind, **params):
    """Pure-boolean subtree removed by an extended operation (None for a no-op)."""
    if kind == 'hole':
        radius, depth = float(params['radius']), float(params['depth'])
        direction = np.asarray(params['direction'], dtype=float)
        direction = direction / np.linalg.norm(direction)
        axis = np.eye(3)[int(np.argmin(np.abs(direction)))]
        x = axis - (axis @ direction) * direction
        frame = Frame(params['point'], x, np.cross(direction, x))
        return Leaf(Cylinder(radius, depth, frame=frame), 'hole')
    if kind == 'chamfer':
        inset_1 = float(params['inset'])
        inset_2 = float(params.get('inset_2', inset_1))
        frame, length, swapped = _edge_frame(params['start'], params['end'], params['normal_1'], params['normal_2'])
        legs = (inset_2, inset_1) if swapped else (inset_1, inset_2)
        return Leaf(Wedge(legs[0], legs[1], length, frame=frame), 'chamfer')
    if kind == 'fillet':
        radius = float(params['radius'])
        if radius < 0:
            raise ParameterError("fillet radius must be non-negative")
        clearance = params.get('clearance')
        if clearance is not None and radius > float(clearance):
            raise ParameterError(f"fillet radius {radius} exceeds edge clearance {clearance}")
        if radius == 0:
            return None
        frame, length, _ = _edge_frame(params['start'], params['end'], params['normal_1'], params['normal_2'])
        corner = Leaf(Cuboid((0.0, 0.0, 0.0), (radius, radius, length), frame=frame), 'fillet_corner')
        rounding = Leaf(Cylinder(radius, length, center=(radius, radius, 0.0), frame=frame), 'fillet_cylinder')
        return Boolean('difference', corner, rounding)
    raise ParameterError(f"unknown extended operation '{kind}'")


def extended_op(body, kind, **params):
    """Apply chamfer, fillet or hole to ``body`` as a difference with its tool."""
    tool = extended_tool(kind, **params)
    if tool is None:
        return as_node(body)
    return Boolean('difference', as_node(body), tool)


from_history = build_from_history
