"""
File outputs of the batch commands: legacy ASCII VTK, binary STL, the dense
occupancy grid and the partition leaf dump.
"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import meshio
import numpy as np

from .exceptions import ParameterError
from .integrate import leaf_records, membership

logger = logging.getLogger(__name__)

GRID_MAGIC = 'FCMGRID 1'


def write_vtk(soup, path):
    """Triangle soup with its point data channels as legacy ASCII VTK."""
    point_data = {name: np.asarray(values, dtype=float) for name, values in sorted(soup.point_data.items())}
    mesh = meshio.Mesh(
        points=np.asarray(soup.vertices, dtype=float),
        cells=[('triangle', np.asarray(soup.triangles, dtype=np.int64))],
        point_data=point_data,
    )
    meshio.write(str(path), mesh, file_format='vtk', binary=False)
    logger.info(f"wrote {len(soup)} triangles to {path}")
    return Path(path)


def write_stl(soup, path):
    """Welded soup as binary STL."""
    welded = soup.weld()
    welded.to_trimesh().export(str(path), file_type='stl')
    logger.info(f"wrote {len(welded)} welded triangles to {path}")
    return Path(path)


@dataclass
class OccupancyGrid:
    """Membership of the cell centres of a regular grid, x-major (C order over x, y, z)."""
    dims: tuple
    lo: np.ndarray
    hi: np.ndarray
    data: np.ndarray

    @property
    def cell_size(self):
        return (self.hi - self.lo) / np.asarray(self.dims)

    @property
    def filled(self):
        return int(self.data.sum())

    def volume(self):
        return self.filled * float(np.prod(self.cell_size))

    def header(self):
        lo = ' '.join(repr(float(v)) for v in self.lo)
        hi = ' '.join(repr(float(v)) for v in self.hi)
        return f"{GRID_MAGIC}\ndims {' '.join(str(n) for n in self.dims)}\nbox {lo} {hi}\ndata\n"

    def write(self, path):
        with open(path, 'wb') as fh:
            fh.write(self.header().encode('ascii'))
            fh.write(np.ascontiguousarray(self.data, dtype=np.uint8).tobytes(order='C'))
        logger.info(f"wrote occupancy grid {list(self.dims)} ({self.filled} filled) to {path}")
        return Path(path)

    @classmethod
    def read(cls, path):
        raw = Path(path).read_bytes()
        lines = raw.split(b'\n', 4)
        if len(lines) < 5 or lines[0].decode('ascii') != GRID_MAGIC or lines[3] != b'data':
            raise ParameterError(f"{path} is not an occupancy grid file")
        dims = tuple(int(v) for v in lines[1].split()[1:])
        box = [float(v) for v in lines[2].split()[1:]]
        payload = lines[4]
        if len(dims) != 3 or len(box) != 6 or len(payload) != int(np.prod(dims)):
            raise ParameterError(f"{path} has an inconsistent occupancy grid header")
        data = np.frombuffer(payload, dtype=np.uint8).reshape(dims).astype(bool)
        return cls(dims, np.array(box[:3]), np.array(box[3:]), data)


def voxelize(geometry, lo, hi, dims, threads=None):
    dims = tuple(int(n) for n in np.broadcast_to(np.asarray(dims, dtype=int), (3,)))
    if min(dims) < 1:
        raise ParameterError(f"occupancy grid needs at least one cell per axis, got {list(dims)}")
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    if np.any(hi <= lo):
        raise ParameterError("occupancy grid box must have positive extent")
    h = (hi - lo) / np.asarray(dims)
    axes = [lo[i] + h[i] * (np.arange(dims[i]) + 0.5) for i in range(3)]
    X, Y, Z = np.meshgrid(*axes, indexing='ij')
    pts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    data = membership(geometry, pts, threads).reshape(dims)
    return OccupancyGrid(dims, lo, hi, data)


def write_leaf_dump(tree, path):
    """One JSON record per partition leaf (level, box, class), depth-first order."""
    with open(path, 'w', encoding='utf-8') as fh:
        for record in leaf_records(tree):
            fh.write(json.dumps(record, sort_keys=True) + '\n')
    return Path(path)


def read_leaf_dump(path):
    with open(path, encoding='utf-8') as fh:
        return [json.loads(line) for line in fh if line.strip()]
