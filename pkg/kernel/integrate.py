"""
Composed integration on adaptive quadtrees (2D) and octrees (3D).

A cell is recursively split where the geometry cuts it, up to a maximum
depth. Leaves are labelled inside, outside or cut and integrated with a
tensor Gauss rule weighted by the indicator alpha (1 in the body, 10^-q
outside, per Gauss point in cut leaves).
"""
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

from . import conf
from .exceptions import ParameterError
from .primitives import INSIDE, OUTSIDE, UNKNOWN

logger = logging.getLogger(__name__)

CUT = 'cut'
MIN_POINTS_PER_THREAD = 256


@dataclass(eq=False)
class IntegrationNode:
    lo: np.ndarray
    hi: np.ndarray
    level: int = 0
    parent: 'IntegrationNode' = field(default=None, repr=False)
    label: str = UNKNOWN
    children: list = field(default_factory=list, repr=False)

    @property
    def dim(self):
        return len(self.lo)

    @property
    def size(self):
        return self.hi - self.lo

    @property
    def center(self):
        return 0.5 * (self.lo + self.hi)

    @property
    def volume(self):
        return float(np.prod(self.size))

    @property
    def is_leaf(self):
        return not self.children

    def subdivide(self):
        mid = self.center
        for corner in itertools.product((0, 1), repeat=self.dim):
            corner = np.array(corner, dtype=bool)
            lo = np.where(corner, mid, self.lo)
            hi = np.where(corner, self.hi, mid)
            self.children.append(IntegrationNode(lo, hi, self.level + 1, self))
        return self.children

    def iter_nodes(self):
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def leaves(self):
        return [node for node in self.iter_nodes() if node.is_leaf]

    def depth(self):
        return max(node.level for node in self.iter_nodes()) - self.level

    def label_counts(self):
        counts = {INSIDE: 0, OUTSIDE: 0, CUT: 0}
        for leaf in self.leaves():
            counts[leaf.label] += 1
        return counts


@lru_cache(maxsize=32)
def gauss_rule(order, dim):
    """Tensor Gauss-Legendre rule on the unit cell [0, 1]^dim; weights sum to 1."""
    if order < 1:
        raise ParameterError(f"Gauss order must be at least 1, got {order}")
    x, w = leggauss(order)
    x, w = 0.5 * (x + 1.0), 0.5 * w
    points = np.array(list(itertools.product(x, repeat=dim)))
    weights = np.array([np.prod(c) for c in itertools.product(w, repeat=dim)])
    return points, weights


@lru_cache(maxsize=32)
def sample_offsets(dim, gauss_order=None):
    """Cut-detection samples on the unit cell: the 3^dim grid plus optional Gauss points."""
    grid = np.array(list(itertools.product((0.0, 0.5, 1.0), repeat=dim)))
    if gauss_order:
        grid = np.vstack([grid, gauss_rule(gauss_order, dim)[0]])
    return grid


def alpha_value(q):
    """Indicator value in the fictitious domain; q = inf gives a hard zero."""
    return 0.0 if math.isinf(q) else 10.0 ** (-q)


def membership(geometry, points, threads=None):
    """Vectorised membership, split over a thread pool; result order is the input order."""
    pts = np.asarray(points, dtype=float)
    contains_many = getattr(geometry, 'contains_many', geometry)
    threads = threads or conf.get('THREADS')
    if threads <= 1 or len(pts) < threads * MIN_POINTS_PER_THREAD:
        return np.asarray(contains_many(pts), dtype=bool)
    chunks = np.array_split(pts, threads * 4)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(contains_many, chunks))
    return np.concatenate([np.asarray(r, dtype=bool) for r in results])


def _classify(nodes, geometry, gauss_order, threads):
    classify = getattr(geometry, 'classify_box', None)
    pending = []
    for node in nodes:
        label = classify(node.lo, node.hi) if classify is not None else UNKNOWN
        if label == UNKNOWN:
            pending.append(node)
        else:
            node.label = label
    if not pending:
        return pending
    offsets = sample_offsets(pending[0].dim, gauss_order)
    lo = np.array([node.lo for node in pending])
    size = np.array([node.size for node in pending])
    pts = lo[:, None, :] + size[:, None, :] * offsets[None, :, :]
    flags = membership(geometry, pts.reshape(-1, lo.shape[1]), threads).reshape(len(pending), -1)
    for node, row in zip(pending, flags):
        node.label = INSIDE if row.all() else OUTSIDE if not row.any() else CUT
    return pending


def partition(lo, hi, geometry, k_max=None, gauss_order=None, threads=None):
    """Split the box [lo, hi] where ``geometry`` cuts it, down to depth ``k_max``.

    A box is cut when its samples disagree: the 3^d grid of corners, face and
    edge midpoints and center, plus the Gauss points of ``gauss_order`` when
    given. A ``classify_box`` on the geometry short-cuts the sampling.
    Returns the root ``IntegrationNode``.
    """
    k_max = conf.get('PARTITION_DEPTH') if k_max is None else k_max
    if k_max < 0:
        raise ParameterError(f"partition depth must be non-negative, got {k_max}")
    root = IntegrationNode(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
    if np.any(root.size <= 0):
        raise ParameterError("partition box must have positive extent")
    frontier = [root]
    while frontier:
        _classify(frontier, geometry, gauss_order, threads)
        next_frontier = []
        for node in frontier:
            if node.label == CUT and node.level < k_max:
                next_frontier.extend(node.subdivide())
        frontier = next_frontier
    return root


def physical_flags(boxes, geometry, k_max=None, gauss_order=None, threads=None):
    """Per cell box, whether the body has a part strictly inside it.

    All cells are handled together, level by level. ``classify_box`` decides
    first; boxes it cannot decide are sampled (3^d grid plus Gauss points of
    ``gauss_order``). A cell is active as soon as a sample strictly interior
    to it lies in the body. Only boxes that come out cut are split further,
    down to ``k_max``; a body that merely grazes a cell face leaves it
    inactive.
    """
    k_max = conf.get('PARTITION_DEPTH') if k_max is None else k_max
    if k_max < 0:
        raise ParameterError(f"partition depth must be non-negative, got {k_max}")
    boxes = [(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)) for lo, hi in boxes]
    flags = np.zeros(len(boxes), dtype=bool)
    if not boxes:
        return flags
    cell_lo = np.array([lo for lo, _ in boxes])
    cell_hi = np.array([hi for _, hi in boxes])
    classify = getattr(geometry, 'classify_box', None)
    frontier = [(i, IntegrationNode(lo, hi)) for i, (lo, hi) in enumerate(boxes)]
    while frontier:
        pending = []
        for owner, node in frontier:
            if flags[owner]:
                continue
            label = classify(node.lo, node.hi) if classify is not None else UNKNOWN
            if label == INSIDE:
                flags[owner] = True
            elif label == UNKNOWN:
                pending.append((owner, node))
        if not pending:
            break
        owners = np.array([owner for owner, _ in pending])
        offsets = sample_offsets(len(cell_lo[0]), gauss_order)
        lo = np.array([node.lo for _, node in pending])
        size = np.array([node.size for _, node in pending])
        pts = lo[:, None, :] + size[:, None, :] * offsets[None, :, :]
        inside = membership(geometry, pts.reshape(-1, lo.shape[1]), threads).reshape(len(pending), -1)
        interior = np.all((pts > cell_lo[owners][:, None, :]) & (pts < cell_hi[owners][:, None, :]), axis=2)
        flags[owners[np.any(inside & interior, axis=1)]] = True
        frontier = []
        for (owner, node), row in zip(pending, inside):
            # all-outside samples end the search in this box
            if flags[owner] or node.level >= k_max or not row.any():
                continue
            frontier.extend((owner, child) for child in node.subdivide())
    return flags


def has_physical_part(lo, hi, geometry, k_max=None, gauss_order=None):
    """True when the body has a part strictly inside the box [lo, hi]."""
    return bool(physical_flags([(lo, hi)], geometry, k_max, gauss_order)[0])


def composed_rule(tree, geometry=None, gauss_order=None, q=None, threads=None):
    """Quadrature points and alpha-weighted weights over the leaves of ``tree``.

    Returns ``(points, weights)``; weights include the leaf Jacobian.
    """
    gauss_order = gauss_order or conf.get('VOLUME_GAUSS_ORDER')
    q = conf.get('ALPHA_EXPONENT') if q is None else q
    leaves = tree.leaves()
    dim = tree.dim
    ref_points, ref_weights = gauss_rule(gauss_order, dim)
    lo = np.array([leaf.lo for leaf in leaves])
    size = np.array([leaf.size for leaf in leaves])
    points = lo[:, None, :] + size[:, None, :] * ref_points[None, :, :]
    alpha = np.ones((len(leaves), len(ref_weights)))
    labels = np.array([leaf.label for leaf in leaves])
    alpha[labels == OUTSIDE] = alpha_value(q)
    cut = labels == CUT
    if np.any(cut):
        if geometry is None:
            raise ParameterError("cut leaves need the geometry to evaluate alpha")
        inside = membership(geometry, points[cut].reshape(-1, dim), threads).reshape(-1, len(ref_weights))
        alpha[cut] = np.where(inside, 1.0, alpha_value(q))
    weights = alpha * ref_weights[None, :] * np.prod(size, axis=1)[:, None]
    return points.reshape(-1, dim), weights.reshape(-1)


def integrate_alpha(tree, f, geometry=None, q=None, gauss_order=None, threads=None):
    """Integral of alpha * f over the partition; ``f`` maps (n, d) points to (n,) or (n, k) values."""
    points, weights = composed_rule(tree, geometry, gauss_order, q, threads)
    values = np.asarray(f(points), dtype=float)
    if values.ndim == 1:
        return float(np.sum(weights * values))
    return np.sum(weights[:, None] * values, axis=0)


def volume(geometry, lo=None, hi=None, k_max=None, gauss_order=None):
    gauss_order = gauss_order or conf.get('VOLUME_GAUSS_ORDER')
    if lo is None or hi is None:
        lo, hi = geometry.bounding_box()
    tree = partition(lo, hi, geometry, k_max, gauss_order)
    return integrate_alpha(tree, lambda p: np.ones(len(p)), geometry, math.inf, gauss_order)


@dataclass
class Moments:
    volume: float
    centroid: np.ndarray
    second_moments: np.ndarray

    def to_dict(self):
        return {
            'volume': self.volume,
            'centroid': self.centroid.tolist(),
            'second_moments': self.second_moments.tolist(),
        }


def _moment_integrand(points):
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    return np.column_stack([np.ones(len(points)), x, y, z, x * x, y * y, z * z, x * y, y * z, x * z])


def moments(geometry, lo=None, hi=None, k_max=None, gauss_order=None):
    """Volume, centroid and the matrix of second moments (integrals of x_i x_j)."""
    gauss_order = gauss_order or conf.get('VOLUME_GAUSS_ORDER')
    if lo is None or hi is None:
        lo, hi = geometry.bounding_box()
    tree = partition(lo, hi, geometry, k_max, gauss_order)
    m = integrate_alpha(tree, _moment_integrand, geometry, math.inf, gauss_order)
    vol = float(m[0])
    centroid = m[1:4] / vol if vol > 0 else np.full(3, np.nan)
    xx, yy, zz, xy, yz, xz = m[4:]
    second = np.array([[xx, xy, xz], [xy, yy, yz], [xz, yz, zz]])
    logger.info(f"moments: volume {vol:.6g} over {len(tree.leaves())} leaves")
    return Moments(vol, centroid, second)


def leaf_records(tree):
    """One record per leaf (level, box, class) for the leaf-dump file."""
    return [
        {'level': leaf.level, 'lo': leaf.lo.tolist(), 'hi': leaf.hi.tolist(), 'label': leaf.label}
        for leaf in tree.leaves()
    ]
