import numpy as np
from scipy import sparse as sp

from psgheat.errors import ConfigurationError, DimensionMismatchError, MeshMismatchError


def _frozen(array, dtype=float):
    data = np.array(array, dtype=dtype, copy=True)
    data.setflags(write=False)
    return data


class Mesh:
    """Uniform P1 triangulation of the unit square.

    Node k = j*(n_div+1) + i sits at (i/n_div, j/n_div); every cell is split
    along its bottom-left to top-right diagonal.
    """

    def __init__(self, n_div, nodes, triangles, boundary_mask, h_min):
        self.n_div = int(n_div)
        self.nodes = _frozen(nodes)
        self.triangles = _frozen(triangles, dtype=np.int64)
        self.boundary_mask = _frozen(boundary_mask, dtype=bool)
        self.h_min = float(h_min)
        self.tag = f"unit-square-{self.n_div}"

    def __repr__(self):
        return f"<Mesh {self.tag} nodes={self.node_count}>"

    @property
    def node_count(self):
        return self.nodes.shape[0]

    @property
    def triangle_count(self):
        return self.triangles.shape[0]

    @property
    def interior(self):
        return np.flatnonzero(~self.boundary_mask)

    @property
    def x(self):
        return self.nodes[:, 0]

    @property
    def y(self):
        return self.nodes[:, 1]

    def interpolate(self, fn):
        """Nodal interpolant of fn(x1, x2) (vectorized over node arrays)"""
        values = np.broadcast_to(np.asarray(fn(self.x, self.y), dtype=float), (self.node_count,))
        return GridFunction(self.tag, values)

    def constant(self, value):
        return GridFunction(self.tag, np.full(self.node_count, float(value)))

    def zeros(self):
        return self.constant(0.0)

    def grid_index(self, i, j):
        return j * (self.n_div + 1) + i

    def to_dict(self):
        return {
            'tag': self.tag,
            'n_div': self.n_div,
            'node_count': self.node_count,
            'triangle_count': self.triangle_count,
            'h_min': self.h_min,
        }


class GridFunction:
    """Nodal values of a piecewise-linear function on a mesh identified by tag"""

    __array_priority__ = 100

    def __init__(self, mesh_tag, values):
        self.mesh_tag = mesh_tag
        self.values = _frozen(values)
        if self.values.ndim != 1:
            raise DimensionMismatchError(f"GridFunction values must be 1-D, got shape {self.values.shape}")

    def __repr__(self):
        return f"<GridFunction on {self.mesh_tag} len={self.values.size}>"

    def __len__(self):
        return self.values.size

    def check_mesh(self, mesh):
        if self.mesh_tag != mesh.tag:
            raise MeshMismatchError(f"GridFunction on {self.mesh_tag} used with mesh {mesh.tag}")
        if self.values.size != mesh.node_count:
            raise DimensionMismatchError(
                f"GridFunction has {self.values.size} values, mesh has {mesh.node_count} nodes"
            )
        return self

    def with_values(self, values):
        return GridFunction(self.mesh_tag, values)

    def _other_values(self, other):
        if isinstance(other, GridFunction):
            if other.mesh_tag != self.mesh_tag:
                raise MeshMismatchError(f"cannot combine {self.mesh_tag} with {other.mesh_tag}")
            return other.values
        return float(other)

    def __add__(self, other):
        return self.with_values(self.values + self._other_values(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self.with_values(self.values - self._other_values(other))

    def __rsub__(self, other):
        return self.with_values(self._other_values(other) - self.values)

    def __mul__(self, scalar):
        if isinstance(scalar, GridFunction):
            raise TypeError("GridFunction * GridFunction is not defined; use inner products")
        return self.with_values(self.values * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self.with_values(self.values / float(scalar))

    def __neg__(self):
        return self.with_values(-self.values)

    def is_finite(self):
        return bool(np.all(np.isfinite(self.values)))

    def vanishes_on(self, mask, atol=0.0):
        return bool(np.all(np.abs(self.values[mask]) <= atol))

    def to_dict(self):
        return {'mesh_tag': self.mesh_tag, 'values': self.values.tolist()}


class ElementField:
    """One conductivity value per triangle"""

    def __init__(self, mesh_tag, values):
        self.mesh_tag = mesh_tag
        self.values = _frozen(values)

    def __repr__(self):
        return f"<ElementField on {self.mesh_tag} len={self.values.size}>"

    @classmethod
    def constant(cls, mesh, value):
        return cls(mesh.tag, np.full(mesh.triangle_count, float(value)))

    @property
    def minimum(self):
        return float(self.values.min())

    @property
    def maximum(self):
        return float(self.values.max())

    def within(self, a_min, a_max):
        return bool(np.all((self.values > a_min) & (self.values < a_max)))

    def validate_positive(self):
        if not np.all(self.values > 0):
            raise ConfigurationError("conductivity must be strictly positive on every element")
        return self


class SparseOperator:
    """Symmetric matrix in compressed-row form"""

    def __init__(self, matrix, name='operator'):
        self.matrix = sp.csr_matrix(matrix)
        self.name = name
        if self.matrix.shape[0] != self.matrix.shape[1]:
            raise DimensionMismatchError(f"{name} must be square, got {self.matrix.shape}")

    def __repr__(self):
        return f"<SparseOperator {self.name} dim={self.dimension} nnz={self.matrix.nnz}>"

    @property
    def dimension(self):
        return self.matrix.shape[0]

    @property
    def indptr(self):
        return self.matrix.indptr

    @property
    def indices(self):
        return self.matrix.indices

    @property
    def data(self):
        return self.matrix.data

    def __matmul__(self, vector):
        if isinstance(vector, GridFunction):
            vector = vector.values
        return self.matrix @ vector

    def quadratic_form(self, u, v=None):
        v = u if v is None else v
        return float(u @ (self.matrix @ v))

    def asymmetry(self):
        """max |A - A^T| relative to max |A|"""
        diff = abs(self.matrix - self.matrix.T)
        scale = abs(self.matrix).max()
        if scale == 0:
            return 0.0
        return float(diff.max() / scale) if diff.nnz else 0.0

    def is_symmetric(self, rtol=1e-12):
        return self.asymmetry() <= rtol

    def scaled(self, factor):
        return SparseOperator(self.matrix * float(factor), name=f"{factor}*{self.name}")

    def restricted(self, index):
        """Principal submatrix on the given indices (boundary elimination)"""
        return self.matrix[index][:, index]

    def to_dict(self):
        return {'name': self.name, 'dimension': self.dimension, 'nnz': int(self.matrix.nnz)}
