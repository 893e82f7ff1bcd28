"""P1 finite elements on the unit square.

Assembly follows the usual per-triangle loop, vectorized over triangles and
summed into a coordinate-format matrix (duplicates are added in a fixed
order, so assembly is deterministic).
"""
import logging
from functools import lru_cache

import numpy as np
from scipy import sparse as sp

from psgheat.errors import ConfigurationError, DimensionMismatchError, MeshMismatchError, SolverError
from psgheat.models.mesh import ElementField, GridFunction, Mesh, SparseOperator

logger = logging.getLogger(__name__)

DEFAULT_CG_TOL = 1e-10
DEFAULT_MAX_ITER_FACTOR = 10

_REF_GRADIENTS = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
_LOCAL_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0

# 7-point rule, exact for degree 5 (barycentric coordinates, weights sum to 1)
_QUAD_WEIGHTS = np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3)
_QUAD_POINTS = np.array([
    [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
    [0.059715871789770, 0.470142064105115, 0.470142064105115],
    [0.470142064105115, 0.059715871789770, 0.470142064105115],
    [0.470142064105115, 0.470142064105115, 0.059715871789770],
    [0.797426985353087, 0.101286507323456, 0.101286507323456],
    [0.101286507323456, 0.797426985353087, 0.101286507323456],
    [0.101286507323456, 0.101286507323456, 0.797426985353087],
])


def build_mesh(n_div):
    """Uniform triangulation of [0,1]^2 with n_div cells per side"""
    if int(n_div) != n_div or n_div < 1:
        raise ConfigurationError(f"n_div must be a positive integer, got {n_div}")
    n = int(n_div)

    coords = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(coords, coords)
    nodes = np.column_stack([xx.ravel(), yy.ravel()])

    ii, jj = np.meshgrid(np.arange(n), np.arange(n))
    v00 = (jj * (n + 1) + ii).ravel()
    v10 = v00 + 1
    v01 = v00 + (n + 1)
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)

    idx = np.arange(n + 1)
    gi, gj = np.meshgrid(idx, idx)
    boundary = ((gi == 0) | (gi == n) | (gj == 0) | (gj == n)).ravel()

    corners = nodes[triangles]
    edges = np.concatenate([corners[:, 1] - corners[:, 0],
                            corners[:, 2] - corners[:, 1],
                            corners[:, 0] - corners[:, 2]])
    h_min = float(np.min(np.linalg.norm(edges, axis=1)))

    return Mesh(n, nodes, triangles, boundary, h_min)


def triangle_geometry(mesh):
    """Signed areas and constant P1 basis gradients, shape (T,) and (T, 3, 2)"""
    corners = mesh.nodes[mesh.triangles]
    jac = np.stack([corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0]], axis=2)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    inv_t = np.linalg.inv(jac).transpose(0, 2, 1)
    grads = np.einsum('tkj,ij->tik', inv_t, _REF_GRADIENTS)
    return 0.5 * det, grads


def _assemble(mesh, local, name):
    rows = np.broadcast_to(mesh.triangles[:, :, None], local.shape)
    cols = np.broadcast_to(mesh.triangles[:, None, :], local.shape)
    n = mesh.node_count
    matrix = sp.coo_matrix((local.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n)).tocsr()
    return SparseOperator(matrix, name=name)


def assemble_stiffness(mesh, a):
    """Entry (i, j) = sum_T a_T int_T grad phi_i . grad phi_j"""
    if isinstance(a, ElementField):
        if a.mesh_tag != mesh.tag:
            raise MeshMismatchError(f"conductivity on {a.mesh_tag} used with mesh {mesh.tag}")
        values = a.values
    else:
        values = np.asarray(a, dtype=float)
    if values.shape != (mesh.triangle_count,):
        raise DimensionMismatchError(
            f"conductivity has {values.size} values, mesh has {mesh.triangle_count} triangles"
        )
    area, grads = triangle_geometry(mesh)
    local = np.einsum('tik,tlk->til', grads, grads) * (values * area)[:, None, None]
    return _assemble(mesh, local, 'stiffness')


def assemble_mass(mesh):
    """Exact P1 mass matrix: area/12 * [[2,1,1],[1,2,1],[1,1,2]] per triangle"""
    area, _ = triangle_geometry(mesh)
    local = area[:, None, None] * _LOCAL_MASS[None, :, :]
    return _assemble(mesh, local, 'mass')


def conjugate_gradient(A, b, tol=DEFAULT_CG_TOL, max_iter=None, x0=None):
    """Plain CG for a symmetric positive definite A.

    Stops when ||b - A x|| <= tol * ||b||. Returns (x, iterations, residual norm).
    """
    b = np.asarray(b, dtype=float)
    if max_iter is None:
        max_iter = DEFAULT_MAX_ITER_FACTOR * b.size

    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        return np.zeros_like(b), 0, 0.0

    if x0 is None:
        x = np.zeros_like(b)
        r = b.copy()
    else:
        x = np.array(x0, dtype=float)
        r = b - A @ x

    p = r.copy()
    rho = r @ r
    target = (tol * b_norm) ** 2
    it = 0
    while rho > target and it < max_iter:
        it += 1
        q = A @ p
        alpha = rho / (p @ q)
        x += alpha * p
        r -= alpha * q
        rho_old = rho
        rho = r @ r
        p = r + (rho / rho_old) * p

    residual = float(np.sqrt(rho))
    if rho > target:
        logger.error(f"CG stopped after {it} iterations, residual {residual:.3e} (target {tol:.1e})")
        raise SolverError(
            f"conjugate gradients did not converge in {it} iterations",
            iterations=it,
            residual=residual / b_norm,
        )
    return x, it, residual


def solve_dirichlet(K, rhs, mesh, tol=DEFAULT_CG_TOL, max_iter_factor=DEFAULT_MAX_ITER_FACTOR):
    """Solve K w = rhs on interior nodes with w = 0 on the boundary.

    `rhs` is the assembled load vector (a GridFunction or array of nodal loads).
    """
    if not 0.0 < tol < 1.0:
        raise ConfigurationError(f"CG tolerance must lie in (0, 1), got {tol}")
    if isinstance(rhs, GridFunction):
        rhs.check_mesh(mesh)
        load = rhs.values
    else:
        load = np.asarray(rhs, dtype=float)
    if K.dimension != mesh.node_count or load.size != mesh.node_count:
        raise DimensionMismatchError(
            f"system of size {K.dimension} with load of size {load.size} on {mesh.node_count} nodes"
        )

    interior = mesh.interior
    K_int = K.restricted(interior)
    w_int, _, _ = conjugate_gradient(K_int, load[interior], tol=tol,
                                     max_iter=max_iter_factor * interior.size)
    values = np.zeros(mesh.node_count)
    values[interior] = w_int
    return GridFunction(mesh.tag, values)


def restrict_by_injection(fn, fine_mesh, coarse_mesh):
    """Nodal injection from a mesh refined by an integer factor"""
    fn.check_mesh(fine_mesh)
    factor, remainder = divmod(fine_mesh.n_div, coarse_mesh.n_div)
    if remainder or factor < 1:
        raise MeshMismatchError(f"{fine_mesh.tag} is not an integer refinement of {coarse_mesh.tag}")
    idx = np.arange(coarse_mesh.n_div + 1) * factor
    gi, gj = np.meshgrid(idx, idx)
    fine_index = (gj * (fine_mesh.n_div + 1) + gi).ravel()
    return GridFunction(coarse_mesh.tag, fn.values[fine_index])


class P1Space:
    """Mesh plus its mass and unit-conductivity stiffness operators"""

    def __init__(self, mesh, tol=DEFAULT_CG_TOL, max_iter_factor=DEFAULT_MAX_ITER_FACTOR):
        self.mesh = mesh
        self.tol = tol
        self.max_iter_factor = max_iter_factor
        self.mass = assemble_mass(mesh)
        self.stiffness = assemble_stiffness(mesh, ElementField.constant(mesh, 1.0))

    def __repr__(self):
        return f"<P1Space {self.mesh.tag}>"

    def _values(self, f):
        if isinstance(f, GridFunction):
            f.check_mesh(self.mesh)
            return f.values
        return np.asarray(f, dtype=float)

    def l2_inner(self, f, g):
        return self.mass.quadratic_form(self._values(f), self._values(g))

    def l2_norm(self, f):
        return float(np.sqrt(max(self.l2_inner(f, f), 0.0)))

    def h1_seminorm(self, f):
        v = self._values(f)
        return float(np.sqrt(max(self.stiffness.quadratic_form(v), 0.0)))

    def load(self, f):
        """Consistent load vector M f"""
        return self.mass @ self._values(f)

    def stiffness_for(self, a):
        """Stiffness operator for a conductivity field (scaled copy when a is constant)"""
        values = a.values if isinstance(a, ElementField) else np.asarray(a, dtype=float)
        if values.size and np.all(values == values[0]):
            return self.stiffness.scaled(values[0])
        return assemble_stiffness(self.mesh, a)

    def solve(self, K, load):
        return solve_dirichlet(K, load, self.mesh, tol=self.tol, max_iter_factor=self.max_iter_factor)

    def l2_error(self, f, exact):
        """||f_h - exact||_{L2} by 7-point quadrature on every triangle"""
        v = self._values(f)
        area, _ = triangle_geometry(self.mesh)
        corners = self.mesh.nodes[self.mesh.triangles]
        points = np.einsum('qi,tik->tqk', _QUAD_POINTS, corners)
        approx = np.einsum('qi,ti->tq', _QUAD_POINTS, v[self.mesh.triangles])
        diff = approx - exact(points[..., 0], points[..., 1])
        return float(np.sqrt(np.sum(area[:, None] * _QUAD_WEIGHTS[None, :] * diff ** 2)))


@lru_cache(maxsize=8)
def function_space(n_div, tol=DEFAULT_CG_TOL, max_iter_factor=DEFAULT_MAX_ITER_FACTOR):
    return P1Space(build_mesh(n_div), tol=tol, max_iter_factor=max_iter_factor)


def l2_inner(f, g, space):
    return space.l2_inner(f, g)


def l2_norm(f, space):
    return space.l2_norm(f)


def h1_seminorm(f, space):
    return space.h1_seminorm(f)
