"""
Approximate boundary recovery from the membership oracle.

The oracle is sampled on a regular grid as a binary field, triangulated by
marching cubes at level 0.5 (vertices land on grid-edge midpoints) and
optionally sharpened by bisecting membership along each generating edge.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import trimesh
from skimage import measure

from .exceptions import ParameterError
from .integrate import membership

logger = logging.getLogger(__name__)

MIN_TRIANGLE_AREA = 1e-14
WELD_DIGITS = 9


@dataclass
class TriangleSoup:
    vertices: np.ndarray
    triangles: np.ndarray
    point_data: dict = field(default_factory=dict)
    # grid edge each vertex was generated on, kept for refinement
    edges: tuple = field(default=None, repr=False)

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    def __len__(self):
        return len(self.triangles)

    @property
    def is_empty(self):
        return not len(self.triangles)

    def to_trimesh(self):
        return trimesh.Trimesh(vertices=self.vertices, faces=self.triangles, process=False)

    def triangle_areas(self):
        if self.is_empty:
            return np.zeros(0)
        return self.to_trimesh().area_faces

    def area(self):
        return float(self.triangle_areas().sum())

    def signed_volume(self):
        """Divergence-theorem volume; positive for an outward-oriented closed soup."""
        if self.is_empty:
            return 0.0
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        return float(np.einsum('ij,ij->i', a, np.cross(b, c)).sum() / 6.0)

    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    def normals(self):
        """Unit triangle normals following the vertex winding."""
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        n = np.cross(b - a, c - a)
        return n / np.linalg.norm(n, axis=1)[:, None]

    def flipped(self):
        return TriangleSoup(self.vertices, self.triangles[:, ::-1].copy(), dict(self.point_data), self.edges)

    def subdivided(self):
        """Split every triangle into four through its edge midpoints (vertices are not shared)."""
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        ab, bc, ca = 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)
        corners = np.stack([
            np.stack([a, ab, ca], axis=1),
            np.stack([ab, b, bc], axis=1),
            np.stack([ca, bc, c], axis=1),
            np.stack([ab, bc, ca], axis=1),
        ], axis=1).reshape(-1, 3, 3)
        vertices = corners.reshape(-1, 3)
        return TriangleSoup(vertices, np.arange(len(vertices)).reshape(-1, 3))

    def weld(self, digits=WELD_DIGITS):
        """Merge vertices that agree to ``digits`` decimals and drop degenerate triangles."""
        if self.is_empty:
            return self
        mesh = self.to_trimesh()
        mesh.merge_vertices(digits_vertex=digits)
        mesh.update_faces(mesh.nondegenerate_faces(height=MIN_TRIANGLE_AREA))
        mesh.remove_unreferenced_vertices()
        return TriangleSoup(np.asarray(mesh.vertices), np.asarray(mesh.faces))


def _grid(lo, hi, resolution):
    resolution = np.broadcast_to(np.asarray(resolution, dtype=int), (3,))
    if np.any(resolution < 2):
        raise ParameterError(f"marching cubes needs at least 2 cells per axis, got {resolution.tolist()}")
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    if np.any(hi <= lo):
        raise ParameterError("marching cubes box must have positive extent")
    return lo, (hi - lo) / resolution, resolution


def sample_field(geometry, lo, hi, resolution):
    """Binary membership on the (resolution + 1)^3 grid nodes, x-major."""
    lo, h, resolution = _grid(lo, hi, resolution)
    axes = [lo[i] + h[i] * np.arange(resolution[i] + 1) for i in range(3)]
    X, Y, Z = np.meshgrid(*axes, indexing='ij')
    pts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    return membership(geometry, pts).reshape(X.shape)


def marching_cubes(geometry, lo=None, hi=None, resolution=32):
    """Triangulate the membership boundary of ``geometry`` inside [lo, hi].

    ``resolution`` is the number of grid cells per axis (scalar or triple).
    The field is padded with an outside layer so the soup closes at the box.
    """
    if lo is None or hi is None:
        lo, hi = geometry.bounding_box()
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        margin = 1e-6 * max(float(np.max(hi - lo)), 1.0)
        lo, hi = lo - margin, hi + margin
    lo, h, resolution = _grid(lo, hi, resolution)
    field = sample_field(geometry, lo, lo + h * resolution, resolution)
    if not field.any():
        logger.info("marching cubes: empty geometry, no triangles")
        return TriangleSoup.empty()
    padded = np.pad(field.astype(np.float32), 1, constant_values=0.0)
    verts, faces, _, _ = measure.marching_cubes(padded, level=0.5, allow_degenerate=False)
    index_coords = verts - 1.0
    vertices = lo + index_coords * h
    soup = TriangleSoup(vertices, faces.astype(np.int64), edges=_generating_edges(index_coords, lo, h))
    areas = soup.triangle_areas()
    if np.any(areas <= MIN_TRIANGLE_AREA):
        soup = TriangleSoup(soup.vertices, soup.triangles[areas > MIN_TRIANGLE_AREA], edges=soup.edges)
    if soup.signed_volume() < 0:
        soup = soup.flipped()
    logger.info(f"marching cubes: {len(soup)} triangles at resolution {resolution.tolist()}")
    return soup


def _generating_edges(index_coords, lo, h):
    """End points of the grid edge every vertex sits on (the axis with a fractional index)."""
    frac = np.abs(index_coords - np.round(index_coords))
    axis = np.argmax(frac, axis=1)
    start = np.round(index_coords)
    end = start.copy()
    rows = np.arange(len(index_coords))
    start[rows, axis] = np.floor(index_coords[rows, axis])
    end[rows, axis] = np.ceil(index_coords[rows, axis])
    return lo + start * h, lo + end * h


def refine_vertices(soup, geometry, iterations=20):
    """Move each vertex to the membership change on its generating edge by bisection."""
    if iterations <= 0 or soup.is_empty:
        return soup
    if soup.edges is None:
        raise ParameterError("soup has no generating edges; refine a marching cubes result")
    a, b = (np.array(e, dtype=float) for e in soup.edges)
    inside_a = membership(geometry, a)
    # edges closed off by the box padding have no sign change and stay put
    changes = inside_a != membership(geometry, b)
    a, b, inside_a = a[changes], b[changes], inside_a[changes]
    for _ in range(iterations):
        mid = 0.5 * (a + b)
        inside_mid = membership(geometry, mid)
        same = inside_mid == inside_a
        a = np.where(same[:, None], mid, a)
        b = np.where(same[:, None], b, mid)
    vertices = soup.vertices.copy()
    vertices[changes] = 0.5 * (a + b)
    return TriangleSoup(vertices, soup.triangles.copy(), dict(soup.point_data), soup.edges)

