"""Tensor-product grids on boxes, nodal fields and one-point cell quadrature.

Nodes are stored in C order with axis 0 running along x1.  Each cell of the
grid carries one quadrature point (its midpoint); gradients there are the
derivative of the multilinear interpolant of the cell's 2**N corners, which
is exact for affine fields.
"""

from dataclasses import dataclass, field
from functools import cached_property
from itertools import product

import numpy as np
import scipy.sparse as sp
from scipy import ndimage

__all__ = [
    "Grid",
    "ScalarField",
    "QuadratureField",
    "CorruptFieldError",
    "unit_square",
    "gradient",
    "truncate",
    "connected_components",
    "integrate",
    "write_csv",
    "read_csv",
    "write_vtk",
]


class CorruptFieldError(ValueError):
    """Raised when a field or integrand contains NaN or infinite values."""


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform node grid on the box prod_k [0, extents[k]]."""

    extents: tuple
    counts: tuple

    def __post_init__(self):
        extents = tuple(float(e) for e in self.extents)
        counts = tuple(int(n) for n in self.counts)
        if len(extents) != len(counts):
            raise ValueError("extents and counts must have the same length")
        if len(counts) < 2:
            raise ValueError("dimension must be at least 2")
        if any(n < 3 for n in counts):
            raise ValueError(f"node counts must be >= 3, got {counts}")
        if any(not e > 0 for e in extents):
            raise ValueError(f"extents must be positive, got {extents}")
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "counts", counts)

    def __eq__(self, other):
        return (isinstance(other, Grid) and self.extents == other.extents
                and self.counts == other.counts)

    def __hash__(self):
        return hash((self.extents, self.counts))

    @property
    def dim(self):
        return len(self.counts)

    @property
    def spacing(self):
        return tuple(e / (n - 1) for e, n in zip(self.extents, self.counts))

    @property
    def shape(self):
        return self.counts

    @property
    def cell_shape(self):
        return tuple(n - 1 for n in self.counts)

    @property
    def num_nodes(self):
        return int(np.prod(self.counts))

    @property
    def num_cells(self):
        return int(np.prod(self.cell_shape))

    @property
    def cell_measure(self):
        return float(np.prod(self.spacing))

    @property
    def volume(self):
        return float(np.prod(self.extents))

    def axes(self):
        return [np.linspace(0.0, e, n) for e, n in zip(self.extents, self.counts)]

    @cached_property
    def nodes(self):
        """Node coordinates, shape counts + (N,)."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    @cached_property
    def cell_centers(self):
        mids = [0.5 * (a[1:] + a[:-1]) for a in self.axes()]
        return np.stack(np.meshgrid(*mids, indexing="ij"), axis=-1)

    @cached_property
    def boundary_mask(self):
        mask = np.zeros(self.counts, dtype=bool)
        for k in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[k] = 0
            mask[tuple(idx)] = True
            idx[k] = -1
            mask[tuple(idx)] = True
        return mask

    @cached_property
    def interior_mask(self):
        return ~self.boundary_mask

    @cached_property
    def interior_index(self):
        """Flat indices of the interior nodes."""
        return np.flatnonzero(self.interior_mask.ravel())

    @cached_property
    def corner_offsets(self):
        return list(product((0, 1), repeat=self.dim))

    def _corner_slice(self, offset):
        return tuple(slice(o, n - 1 + o) for o, n in zip(offset, self.counts))

    @cached_property
    def averaging_matrix(self):
        """Sparse (cells x nodes) matrix producing cell-midpoint values."""
        return self._corner_matrix(lambda off: 1.0 / 2 ** self.dim)

    @cached_property
    def gradient_matrices(self):
        """One sparse (cells x nodes) matrix per axis, midpoint derivatives."""
        mats = []
        h = self.spacing
        w = 1.0 / 2 ** (self.dim - 1)
        for k in range(self.dim):
            mats.append(self._corner_matrix(
                lambda off, k=k: (w if off[k] else -w) / h[k]))
        return mats

    def _corner_matrix(self, weight):
        node_ids = np.arange(self.num_nodes).reshape(self.counts)
        rows = np.arange(self.num_cells)
        blocks = []
        for off in self.corner_offsets:
            cols = node_ids[self._corner_slice(off)].ravel()
            blocks.append(sp.csr_matrix(
                (np.full(self.num_cells, weight(off)), (rows, cols)),
                shape=(self.num_cells, self.num_nodes)))
        return sum(blocks[1:], blocks[0]).tocsr()

    @cached_property
    def stiffness(self):
        """Constant-coefficient Laplacian built from the midpoint gradients."""
        mats = self.gradient_matrices
        K = sum((G.T @ G for G in mats[1:]), mats[0].T @ mats[0])
        return (self.cell_measure * K).tocsr()

    def field(self, values):
        return ScalarField(self, values)

    def zeros(self):
        return ScalarField(self, np.zeros(self.counts))

    def from_function(self, func):
        """Sample ``func(x)`` (x of shape (..., N)) at the nodes."""
        return ScalarField(self, np.broadcast_to(func(self.nodes), self.counts))


def unit_square(n):
    """Unit square with ``n`` nodes per axis."""
    return Grid((1.0, 1.0), (n, n))


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.size != self.grid.num_nodes:
            raise ValueError(
                f"expected {self.grid.num_nodes} values, got {vals.size}")
        vals = vals.reshape(self.grid.counts)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def flat(self):
        return self.values.ravel()

    def _check(self, other):
        if isinstance(other, ScalarField):
            if other.grid != self.grid:
                raise ValueError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._check(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._check(other))

    def __rsub__(self, other):
        return ScalarField(self.grid, self._check(other) - self.values)

    def __mul__(self, s):
        return ScalarField(self.grid, self.values * self._check(s))

    __rmul__ = __mul__

    def __truediv__(self, s):
        return ScalarField(self.grid, self.values / s)

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def max_abs(self):
        return float(np.max(np.abs(self.values)))

    def is_dirichlet(self, atol=0.0):
        return bool(np.all(np.abs(self.values[self.grid.boundary_mask]) <= atol))

    def with_zero_boundary(self):
        vals = self.values.copy()
        vals[self.grid.boundary_mask] = 0.0
        return ScalarField(self.grid, vals)

    def cell_values(self):
        return (self.grid.averaging_matrix @ self.flat)


@dataclass(frozen=True, eq=False)
class QuadratureField:
    """Per-cell data: midpoint gradients, midpoint values and cell measures."""

    grid: Grid
    gradients: np.ndarray  # (num_cells, N)
    values: np.ndarray  # (num_cells,)
    measures: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.measures is None:
            object.__setattr__(self, "measures",
                               np.full(self.grid.num_cells, self.grid.cell_measure))

    @property
    def grad_norm(self):
        return np.sqrt(np.sum(self.gradients ** 2, axis=1))


def gradient(u):
    """Midpoint gradients and cell averages of a nodal field."""
    g = u.grid
    grads = np.stack([G @ u.flat for G in g.gradient_matrices], axis=1)
    return QuadratureField(g, grads, g.averaging_matrix @ u.flat)


def truncate(u, sign):
    """Nodal positive (``'+'``) or negative (``'-'``) part; both are >= 0."""
    if sign in ("+", 1, +1):
        return ScalarField(u.grid, np.maximum(u.values, 0.0))
    if sign in ("-", -1):
        return ScalarField(u.grid, np.maximum(-u.values, 0.0))
    raise ValueError(f"sign must be '+' or '-', got {sign!r}")


def integrate(g, grid=None):
    """Midpoint rule: sum of cell value times cell measure."""
    if isinstance(g, QuadratureField):
        vals, measures = g.values, g.measures
    else:
        vals = np.asarray(g, dtype=float).ravel()
        if grid is None:
            raise ValueError("grid is required for raw per-cell values")
        if vals.size != grid.num_cells:
            raise ValueError(f"expected {grid.num_cells} cell values, got {vals.size}")
        measures = np.full(vals.size, grid.cell_measure)
    if not np.all(np.isfinite(vals)):
        raise CorruptFieldError("non-finite integrand")
    return float(np.dot(vals, measures))


@dataclass(frozen=True)
class Components:
    positive: int
    negative: int
    labels: np.ndarray  # >0 for positive components, <0 for negative ones
    threshold: float

    @property
    def total(self):
        return self.positive + self.negative


def connected_components(u, threshold=None, rel=1e-6):
    """Nearest-neighbour components of {u > thr} and {u < -thr}.

    The default threshold is ``rel * max|u|``.
    """
    if threshold is None:
        threshold = rel * u.max_abs()
        if threshold == 0.0:
            return Components(0, 0, np.zeros(u.grid.counts, dtype=int), 0.0)
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    structure = ndimage.generate_binary_structure(u.grid.dim, 1)
    pos, npos = ndimage.label(u.values > threshold, structure=structure)
    neg, nneg = ndimage.label(u.values < -threshold, structure=structure)
    labels = pos - neg
    return Components(int(npos), int(nneg), labels, float(threshold))


def write_csv(u, path):
    """Write ``x1,x2,...,value`` rows in node (C) order with 17 digits."""
    g = u.grid
    coords = g.nodes.reshape(-1, g.dim)
    header = ",".join([f"x{k + 1}" for k in range(g.dim)] + ["value"])
    data = np.column_stack([coords, u.flat])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")


def read_csv(path, grid):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape != (grid.num_nodes, grid.dim + 1):
        raise ValueError(f"{path}: expected {grid.num_nodes} rows of "
                         f"{grid.dim + 1} columns, got {data.shape}")
    if not np.allclose(data[:, :-1], grid.nodes.reshape(-1, grid.dim), atol=1e-12):
        raise ValueError(f"{path}: node coordinates do not match the grid")
    return ScalarField(grid, data[:, -1])


def write_vtk(u, path, name="u"):
    """Legacy VTK structured-points export (x1 varies fastest in VTK)."""
    g = u.grid
    dims = list(g.counts) + [1] * (3 - g.dim)
    spacing = list(g.spacing) + [1.0] * (3 - g.dim)
    vals = np.transpose(u.values).ravel()
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"{name}\nASCII\nDATASET STRUCTURED_POINTS\n")
        fh.write("DIMENSIONS " + " ".join(str(d) for d in dims[:3]) + "\n")
        fh.write("ORIGIN 0 0 0\n")
        fh.write("SPACING " + " ".join(repr(s) for s in spacing[:3]) + "\n")
        fh.write(f"POINT_DATA {vals.size}\nSCALARS {name} double 1\n")
        fh.write("LOOKUP_TABLE default\n")
        for v in vals:
            fh.write(f"{v:.17g}\n")
