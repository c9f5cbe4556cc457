"""
Finite cell solver for 3D linear elasticity.

The body is embedded in a Cartesian grid of hexahedral cells. Each cell uses
the tensor product of a hierarchic 1D basis (linear nodal pair plus
integrated Legendre bubbles). The geometry enters only through the indicator
alpha at the quadrature points of each cell's octree partition. Dirichlet
conditions are imposed strongly on grid planes.
"""
import itertools
import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre
from scipy import sparse
from scipy.sparse.linalg import LinearOperator, cg, spsolve

from . import conf
from .exceptions import (
    ParameterError,
    SingularSystemError,
    SolverError,
    UnsupportedBoundaryCondition,
)
from .integrate import composed_rule, partition, physical_flags
from .primitives import INSIDE
from .surface import TriangleSoup

logger = logging.getLogger(__name__)

MAX_DEGREE = 8
ASSEMBLY_CHUNK = 64
AXES = 'xyz'
FACES = {
    'xmin': (0, 'min'), 'xmax': (0, 'max'),
    'ymin': (1, 'min'), 'ymax': (1, 'max'),
    'zmin': (2, 'min'), 'zmax': (2, 'max'),
}
RIGID_MODES = 6


def shape_functions(p, xi):
    """Hierarchic 1D basis of degree ``p`` at ``xi`` in [-1, 1].

    Returns ``(values, derivatives)``, each of shape (p + 1, len(xi)). Modes 0
    and 1 are the nodal pair (1 - xi) / 2 and (1 + xi) / 2; mode i >= 2 is the
    integrated Legendre polynomial (P_i - P_{i-2}) / sqrt(2 (2i - 1)).
    """
    if not 1 <= p <= MAX_DEGREE:
        raise ParameterError(f"polynomial degree must be in 1..{MAX_DEGREE}, got {p}")
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    values = np.empty((p + 1, len(xi)))
    derivatives = np.empty((p + 1, len(xi)))
    values[0], values[1] = 0.5 * (1.0 - xi), 0.5 * (1.0 + xi)
    derivatives[0], derivatives[1] = -0.5, 0.5
    for i in range(2, p + 1):
        values[i] = (legendre.legval(xi, np.eye(i + 1)[i]) - legendre.legval(xi, np.eye(i + 1)[i - 2])) / math.sqrt(2.0 * (2 * i - 1))
        derivatives[i] = math.sqrt((2 * i - 1) / 2.0) * legendre.legval(xi, np.eye(i)[i - 1])
    return values, derivatives


@dataclass(frozen=True)
class Material:
    young: float = 1.0
    poisson: float = 0.3

    def __post_init__(self):
        if self.young <= 0:
            raise ParameterError(f"Young's modulus must be positive, got {self.young}")
        if not -1.0 < self.poisson < 0.5:
            raise ParameterError(f"Poisson ratio must lie in (-1, 0.5), got {self.poisson}")

    @property
    def lame(self):
        E, nu = self.young, self.poisson
        return E * nu / ((1 + nu) * (1 - 2 * nu)), E / (2 * (1 + nu))

    def to_dict(self):
        return {'young': self.young, 'poisson': self.poisson}


class FcmModel:
    """Cell grid over the box [lo, hi], basis, constraints and assembled system."""

    def __init__(self, geometry, lo, hi, cells, degree=2, material=None, k_max=None, q=None, body_load=None):
        self.geometry = geometry
        self.lo, self.hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        self.cells = np.broadcast_to(np.asarray(cells, dtype=int), (3,)).copy()
        if np.any(self.cells < 1) or np.any(self.hi <= self.lo):
            raise ParameterError("cell grid needs at least one cell per axis and a positive box")
        if not 1 <= degree <= MAX_DEGREE:
            raise ParameterError(f"polynomial degree must be in 1..{MAX_DEGREE}, got {degree}")
        self.h = (self.hi - self.lo) / self.cells
        self.degree = int(degree)
        self.material = material or Material()
        self.k_max = conf.get('PARTITION_DEPTH') if k_max is None else k_max
        self.q = conf.get('ALPHA_EXPONENT') if q is None else q
        self.gauss_order = self.degree + 1
        self.body_load = None if body_load is None else np.asarray(body_load, dtype=float)
        self.axis_sizes = self.cells * self.degree + 1
        self.K = None
        self.f = None
        self.f_neumann = None
        self.constraints = {}
        self._trees = {}
        self._inside_cache = None
        self._cache_lock = threading.Lock()

        started = time.perf_counter()
        self.active = self._find_active_cells()
        self.active_cells = [tuple(c) for c in np.argwhere(self.active)]
        self._number_dofs()
        self.f_neumann = np.zeros(self.n_dofs)
        logger.info(
            f"finite cell grid {self.cells.tolist()}: {self.n_active} of {self.n_cells} cells active, "
            f"{self.n_dofs} dofs at p={self.degree} ({time.perf_counter() - started:.2f}s)"
        )

    # --- grid and dofs --------------------------------------------------

    @property
    def n_cells(self):
        return int(np.prod(self.cells))

    @property
    def n_active(self):
        return len(self.active_cells)

    def cell_box(self, cell):
        lo = self.lo + np.asarray(cell) * self.h
        return lo, lo + self.h

    def _find_active_cells(self):
        cells = list(itertools.product(*(range(n) for n in self.cells)))
        flags = physical_flags([self.cell_box(cell) for cell in cells], self.geometry, self.k_max, self.gauss_order)
        return flags.reshape(self.cells)

    def _axis_indices(self, axis, i):
        n, p = self.cells[axis], self.degree
        return np.array([i, i + 1] + [(n + 1) + i * (p - 1) + (a - 2) for a in range(2, p + 1)])

    def _scalar_globals(self, cell):
        gx, gy, gz = (self._axis_indices(axis, i) for axis, i in enumerate(cell))
        My, Mz = self.axis_sizes[1], self.axis_sizes[2]
        return (gx[:, None, None] * My * Mz + gy[None, :, None] * Mz + gz[None, None, :]).ravel()

    def _number_dofs(self):
        if self.active_cells:
            used = np.concatenate([self._scalar_globals(cell) for cell in self.active_cells])
        else:
            used = np.zeros(0, dtype=int)
        self.scalar_ids = np.unique(used)
        self.n_dofs = 3 * len(self.scalar_ids)
        My, Mz = self.axis_sizes[1], self.axis_sizes[2]
        g = self.scalar_ids
        self.dof_axis_index = np.column_stack([g // (My * Mz), (g // Mz) % My, g % Mz])

    def cell_dofs(self, cell):
        """Vector dofs of a cell, ordered (mode, component)."""
        s = np.searchsorted(self.scalar_ids, self._scalar_globals(cell))
        return (3 * s[:, None] + np.arange(3)[None, :]).ravel()

    def _nodal_coordinates(self):
        """Node coordinates of every scalar dof and a mask of the purely nodal ones."""
        idx = self.dof_axis_index
        nodal = np.all(idx <= self.cells[None, :], axis=1)
        coords = self.lo + np.minimum(idx, self.cells[None, :]) * self.h
        return coords, nodal

    # --- element level --------------------------------------------------

    def basis(self, cell, points):
        """Basis values (n, m) and physical gradients (n, m, 3) of a cell at world points."""
        lo, _ = self.cell_box(cell)
        xi = 2.0 * (np.asarray(points, dtype=float) - lo) / self.h - 1.0
        N, dN = zip(*(shape_functions(self.degree, xi[:, k]) for k in range(3)))
        dN = [d * (2.0 / self.h[k]) for k, d in enumerate(dN)]
        n = len(xi)
        values = np.einsum('an,bn,cn->nabc', *N).reshape(n, -1)
        grads = np.stack([
            np.einsum('an,bn,cn->nabc', dN[0], N[1], N[2]).reshape(n, -1),
            np.einsum('an,bn,cn->nabc', N[0], dN[1], N[2]).reshape(n, -1),
            np.einsum('an,bn,cn->nabc', N[0], N[1], dN[2]).reshape(n, -1),
        ], axis=-1)
        return values, grads

    def cell_tree(self, cell):
        tree = self._trees.get(cell)
        if tree is None:
            tree = partition(*self.cell_box(cell), self.geometry, self.k_max, self.gauss_order, threads=1)
            self._trees[cell] = tree
        return tree

    def element_matrices(self, cell):
        """Element stiffness (3m x 3m, ordered (mode, component)) and load vector of a cell."""
        cell = tuple(int(c) for c in cell)
        tree = self.cell_tree(cell)
        uniform = tree.is_leaf and tree.label == INSIDE
        if uniform and self._inside_cache is not None:
            return self._inside_cache
        points, weights = composed_rule(tree, self.geometry, self.gauss_order, self.q, threads=1)
        N, G = self.basis(cell, points)
        S = np.einsum('q,qai,qbj->ijab', weights, G, G)
        lam, mu = self.material.lame
        trace = np.einsum('kkab->ab', S)
        K4 = lam * S + mu * S.transpose(1, 0, 2, 3) + mu * np.eye(3)[:, :, None, None] * trace[None, None]
        m = N.shape[1]
        K = K4.transpose(2, 0, 3, 1).reshape(3 * m, 3 * m)
        if self.body_load is not None:
            f = np.einsum('q,qa,i->ai', weights, N, self.body_load).ravel()
        else:
            f = np.zeros(3 * m)
        if uniform:
            with self._cache_lock:
                self._inside_cache = (K, f)
        return K, f

    # --- global system --------------------------------------------------

    def assemble(self, threads=None):
        """Scatter-add all active cell matrices into the global K and f."""
        started = time.perf_counter()
        threads = threads or conf.get('THREADS')
        K = sparse.csr_matrix((self.n_dofs, self.n_dofs))
        f = np.zeros(self.n_dofs)
        rows, cols, vals = [], [], []

        def flush():
            nonlocal K
            if rows:
                chunk = sparse.coo_matrix(
                    (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                    shape=(self.n_dofs, self.n_dofs),
                )
                K = K + chunk.tocsr()
                rows.clear()
                cols.clear()
                vals.clear()

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                elements = list(pool.map(self.element_matrices, self.active_cells))
        else:
            elements = map(self.element_matrices, self.active_cells)
        for cell, (K_e, f_e) in zip(self.active_cells, elements):
            dofs = self.cell_dofs(cell)
            rows.append(np.repeat(dofs, len(dofs)))
            cols.append(np.tile(dofs, len(dofs)))
            vals.append(K_e.ravel())
            np.add.at(f, dofs, f_e)
            if len(rows) >= ASSEMBLY_CHUNK:
                flush()
        flush()
        self.K, self.f = K, f
        logger.info(f"assembled {self.n_active} cells into {self.n_dofs} dofs in {time.perf_counter() - started:.2f}s")
        return K, f

    def _face_dofs(self, face):
        if isinstance(face, str):
            if face not in FACES:
                raise ParameterError(f"unknown face '{face}', expected one of {', '.join(FACES)}")
            axis, side = FACES[face]
            index = 0 if side == 'min' else int(self.cells[axis])
        else:
            axis_name, index = face
            axis = AXES.index(axis_name) if isinstance(axis_name, str) else int(axis_name)
            index = int(index)
            if not 0 <= index <= self.cells[axis]:
                raise ParameterError(f"grid plane {AXES[axis]}={index} is outside 0..{self.cells[axis]}")
        return np.flatnonzero(self.dof_axis_index[:, axis] == index)

    def apply_strong_dirichlet(self, face, value, gradient=None):
        """Prescribe u = value + gradient @ x on a grid plane.

        ``face`` is one of the box faces (``'zmin'`` ...) or an ``(axis,
        node_index)`` pair for an interior cell-face plane. ``None`` entries of
        ``value`` leave that component free. Affine data is represented
        exactly: nodal modes take the prescribed values, all other modes on the
        face are set to zero.
        """
        if callable(value) or callable(gradient):
            raise UnsupportedBoundaryCondition("only constant or affine Dirichlet data is supported")
        value = list(value)
        if len(value) != 3:
            raise ParameterError("Dirichlet value needs three components")
        G = np.zeros((3, 3)) if gradient is None else np.asarray(gradient, dtype=float)
        if G.shape != (3, 3):
            raise UnsupportedBoundaryCondition("Dirichlet gradient must be a 3x3 matrix (affine data)")
        scalars = self._face_dofs(face)
        if not len(scalars):
            logger.warning(f"Dirichlet face {face} touches no active dofs")
            return 0
        coords, nodal = self._nodal_coordinates()
        for comp, u0 in enumerate(value):
            if u0 is None:
                continue
            prescribed = np.where(nodal[scalars], float(u0) + coords[scalars] @ G[comp], 0.0)
            for s, v in zip(scalars, prescribed):
                self.constraints[3 * int(s) + comp] = float(v)
        logger.debug(f"Dirichlet on {face}: {len(scalars)} scalar dofs")
        return len(scalars)

    def free_rigid_modes(self):
        """Number of rigid-body motions left unrestrained by the constraints."""
        if not self.constraints:
            return RIGID_MODES
        coords, nodal = self._nodal_coordinates()
        x = (coords - 0.5 * (self.lo + self.hi)) / float(np.max(self.hi - self.lo))
        dofs = np.fromiter(self.constraints, dtype=int)
        s, comp = dofs // 3, dofs % 3
        p = x[s]
        zero = np.zeros(len(s))
        fields = [
            np.stack([np.ones(len(s)), zero, zero], axis=1),
            np.stack([zero, np.ones(len(s)), zero], axis=1),
            np.stack([zero, zero, np.ones(len(s))], axis=1),
            np.stack([zero, -p[:, 2], p[:, 1]], axis=1),
            np.stack([p[:, 2], zero, -p[:, 0]], axis=1),
            np.stack([-p[:, 1], p[:, 0], zero], axis=1),
        ]
        R = np.column_stack([f[np.arange(len(s)), comp] * nodal[s] for f in fields])
        return RIGID_MODES - int(np.linalg.matrix_rank(R, tol=1e-10))

    def apply_neumann(self, soup, traction=None, pressure=None, selector=None, max_levels=3, rtol=1e-6):
        """Integrate a traction over (part of) a recovered surface into the load.

        One point per triangle, with the triangles subdivided until the load
        vector changes by less than ``rtol``. ``pressure`` acts against the
        outward triangle normal. ``selector`` is a (lo, hi) box picking
        triangles by centroid. Returns the load resultant.
        """
        if (traction is None) == (pressure is None):
            raise ParameterError("give exactly one of traction or pressure")
        mask = np.ones(len(soup), dtype=bool)
        if selector is not None:
            c = soup.centroids()
            mask = np.all((c >= np.asarray(selector[0])) & (c <= np.asarray(selector[1])), axis=1)
        part = TriangleSoup(soup.vertices, soup.triangles[mask])
        if part.is_empty:
            logger.warning("Neumann selector picked no triangles")
            return np.zeros(3)
        previous = None
        for level in range(max_levels + 1):
            load, resultant = self._surface_load(part, traction, pressure)
            if previous is not None and np.linalg.norm(load - previous) <= rtol * max(np.linalg.norm(load), 1e-300):
                break
            previous = load
            if level < max_levels:
                part = part.subdivided()
        else:
            logger.warning(f"Neumann load not converged after {max_levels} subdivisions")
        self.f_neumann += load
        return resultant

    def _surface_load(self, soup, traction, pressure):
        points, areas = soup.centroids(), soup.triangle_areas()
        if traction is not None:
            t = np.broadcast_to(np.asarray(traction, dtype=float), points.shape)
        else:
            t = -float(pressure) * soup.normals()
        load = np.zeros(self.n_dofs)
        cells, valid = self.locate(points)
        if not np.all(valid):
            logger.warning(f"{int(np.sum(~valid))} load points fall outside active cells")
        for cell, idx in _group_by_cell(cells, valid):
            N, _ = self.basis(cell, points[idx])
            f_e = np.einsum('n,na,ni->ai', areas[idx], N, t[idx]).ravel()
            np.add.at(load, self.cell_dofs(cell), f_e)
        return load, (areas[valid, None] * t[valid]).sum(axis=0)

    def locate(self, points):
        """Cell index of each point and a mask of points inside active cells."""
        pts = np.asarray(points, dtype=float)
        rel = (pts - self.lo) / self.h
        cells = np.clip(np.floor(rel).astype(int), 0, self.cells - 1)
        inside_box = np.all((pts >= self.lo) & (pts <= self.hi), axis=1)
        valid = inside_box & self.active[cells[:, 0], cells[:, 1], cells[:, 2]]
        return cells, valid

    def solve(self, method=None):
        """Solve the constrained system; ``method`` is 'direct', 'iterative' or None (by size)."""
        if self.K is None:
            self.assemble()
        free_modes = self.free_rigid_modes()
        if free_modes:
            logger.error(f"constrained system keeps {free_modes} rigid-body mode(s)")
            raise SingularSystemError(free_modes)
        started = time.perf_counter()
        fixed = np.fromiter(sorted(self.constraints), dtype=int)
        u_fixed = np.array([self.constraints[d] for d in fixed])
        free = np.ones(self.n_dofs, dtype=bool)
        free[fixed] = False
        K = self.K.tocsr()
        K_ff = K[free][:, free]
        rhs = (self.f + self.f_neumann)[free] - K[free][:, fixed] @ u_fixed
        u = np.zeros(self.n_dofs)
        u[fixed] = u_fixed
        if not np.any(rhs):
            u_free = np.zeros(int(free.sum()))
        else:
            if method is None:
                method = 'direct' if K_ff.shape[0] <= conf.get('DIRECT_SOLVER_MAX_DOFS') else 'iterative'
            u_free = _direct(K_ff, rhs) if method == 'direct' else _iterative(K_ff, rhs)
        u[free] = u_free
        logger.info(f"solved {K_ff.shape[0]} free dofs in {time.perf_counter() - started:.2f}s")
        return Solution(self, u)


def _direct(K, rhs):
    u = spsolve(K.tocsc(), rhs)
    if not np.all(np.isfinite(u)):
        raise SolverError("direct solve produced non-finite values")
    return u


def _iterative(K, rhs):
    diagonal = K.diagonal()
    if np.any(diagonal <= 0):
        raise SolverError("stiffness diagonal is not positive")
    preconditioner = LinearOperator(K.shape, matvec=lambda x: x / diagonal, dtype=float)
    norm = np.linalg.norm(rhs)
    residuals = []

    def record(xk):
        residuals.append(float(np.linalg.norm(rhs - K @ xk) / norm))

    u, info = cg(K, rhs, rtol=conf.get('ITERATIVE_TOL'), maxiter=10 * K.shape[0], M=preconditioner, callback=record)
    if info != 0:
        logger.error(f"cg stopped with info={info} after {len(residuals)} iterations")
        raise SolverError(f"conjugate gradients did not converge (info={info})", residuals)
    return u


def _group_by_cell(cells, valid):
    keys = np.flatnonzero(valid)
    if not len(keys):
        return
    order = keys[np.lexsort(cells[keys].T[::-1])]
    sorted_cells = cells[order]
    breaks = np.flatnonzero(np.any(np.diff(sorted_cells, axis=0) != 0, axis=1)) + 1
    for group in np.split(order, breaks):
        yield tuple(int(c) for c in cells[group[0]]), group


class Solution:
    """Displacement coefficients with field evaluators at arbitrary points."""

    def __init__(self, model, u):
        self.model = model
        self.u = u

    def _fields(self, points):
        model = self.model
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        disp = np.full((len(pts), 3), np.nan)
        grad = np.full((len(pts), 3, 3), np.nan)
        cells, valid = model.locate(pts)
        for cell, idx in _group_by_cell(cells, valid):
            N, G = model.basis(cell, pts[idx])
            U = self.u[model.cell_dofs(cell)].reshape(-1, 3)
            disp[idx] = N @ U
            grad[idx] = np.einsum('ai,naj->nij', U, G)
        return disp, grad

    def displacement(self, points):
        return self._fields(points)[0]

    def strain(self, points):
        grad = self._fields(points)[1]
        return 0.5 * (grad + grad.transpose(0, 2, 1))

    def stress(self, points):
        lam, mu = self.model.material.lame
        eps = self.strain(points)
        trace = np.trace(eps, axis1=1, axis2=2)
        return lam * trace[:, None, None] * np.eye(3)[None] + 2.0 * mu * eps

    def von_mises(self, points):
        s = self.stress(points)
        return np.sqrt(
            0.5 * ((s[:, 0, 0] - s[:, 1, 1]) ** 2 + (s[:, 1, 1] - s[:, 2, 2]) ** 2 + (s[:, 2, 2] - s[:, 0, 0]) ** 2)
            + 3.0 * (s[:, 0, 1] ** 2 + s[:, 1, 2] ** 2 + s[:, 0, 2] ** 2)
        )

    @property
    def strain_energy(self):
        return 0.5 * float(self.u @ (self.model.K @ self.u))

    def l2_norm(self):
        """Displacement L2 norm over the physical domain (composed quadrature, hard zero outside)."""
        model = self.model
        total = 0.0
        for cell in model.active_cells:
            points, weights = composed_rule(model.cell_tree(cell), model.geometry, model.gauss_order, math.inf, threads=1)
            keep = weights > 0
            if not np.any(keep):
                continue
            N, _ = model.basis(cell, points[keep])
            U = self.u[model.cell_dofs(cell)].reshape(-1, 3)
            total += float(np.sum(weights[keep] * np.sum((N @ U) ** 2, axis=1)))
        return math.sqrt(total)

    def annotate(self, soup):
        """Attach displacement and von Mises stress at the soup vertices as point data.

        Vertices recovered on a face of the embedding box can sit a bisection
        step outside it; they are evaluated at the nearest box point.
        """
        points = np.clip(soup.vertices, self.model.lo, self.model.hi)
        soup.point_data['u'] = self.displacement(points)
        soup.point_data['von_mises'] = self.von_mises(points)
        return soup

    def summary(self):
        return {
            'dofs': self.model.n_dofs,
            'active_cells': self.model.n_active,
            'strain_energy': self.strain_energy,
            'displacement_l2': self.l2_norm(),
            'max_displacement': float(np.max(np.abs(self.u))) if len(self.u) else 0.0,
        }
