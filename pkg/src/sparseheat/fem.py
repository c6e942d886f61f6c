"""P1 finite elements on TriMesh.

Provides mass/stiffness assembly, cached direct solves, point
evaluation, Dirac load vectors, L2 projection and mass-weighted inner
products. Matrices are assembled over all nodes; homogeneous Dirichlet
conditions are imposed by restricting to the interior index set.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericalError

_RESIDUAL_TOL = 1e-12
_SYMMETRY_TOL = 1e-12


class SparseSpd:
    """Symmetric sparse matrix with a lazily cached direct factorization.

    The factorization is computed on the first solve and reused for all
    subsequent right-hand sides; it is immutable afterwards, so repeated
    solves may be issued concurrently.
    """

    def __init__(self, mat, check_symmetry=True):
        mat = sp.csr_matrix(mat)
        if check_symmetry:
            asym = abs(mat - mat.T)
            scale = max(abs(mat).max(), 1.0)
            if asym.nnz and asym.max() > _SYMMETRY_TOL * scale:
                raise ValueError("matrix is not symmetric")
        self.mat = mat
        self._lu = None

    @property
    def dimension(self):
        return self.mat.shape[0]

    def restrict(self, indices):
        """Submatrix on a subset of indices, with its own solve cache."""
        sub = self.mat[indices][:, indices]
        return SparseSpd(sub, check_symmetry=False)

    def solve(self, rhs):
        """Solve A x = rhs by a cached sparse LU factorization.

        The relative residual is checked against 1e-12; a larger residual
        (singular or badly conditioned matrix) raises NumericalError.
        """
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.dimension:
            raise ValueError("dimension mismatch in solve")
        if self._lu is None:
            try:
                self._lu = spla.splu(sp.csc_matrix(self.mat))
            except RuntimeError as exc:
                raise NumericalError(f"factorization failed: {exc}") from exc
        x = self._lu.solve(rhs)
        bnorm = np.linalg.norm(rhs)
        if bnorm > 0.0:
            res = np.linalg.norm(self.mat @ x - rhs) / bnorm
            if not res <= _RESIDUAL_TOL:
                raise NumericalError(f"solve residual {res:.3e} exceeds 1e-12")
        return x


def solve_spd(matrix, rhs):
    """Solve with a SparseSpd, reusing its cached factorization."""
    return matrix.solve(rhs)


class NodalField:
    """Coefficient vector over the nodes of a mesh (one P1 function)."""

    __slots__ = ("mesh", "values")

    def __init__(self, mesh, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (mesh.num_nodes,):
            raise ValueError("value vector does not match node count")
        self.mesh = mesh
        self.values = values

    def copy(self):
        return NodalField(self.mesh, self.values.copy())


def zero_field(mesh):
    return NodalField(mesh, np.zeros(mesh.num_nodes))


def _cell_geometry(mesh):
    tri = mesh.nodes[mesh.cells]
    d1 = tri[:, 1] - tri[:, 0]
    d2 = tri[:, 2] - tri[:, 0]
    area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    return tri, area


def assemble_mass(mesh):
    """P1 mass matrix, exact element integration (area/12 * [2,1,1] pattern)."""
    cells = mesh.cells
    _, area = _cell_geometry(mesh)
    w = area / 12.0
    rows, cols, vals = [], [], []
    for a in range(3):
        for b in range(3):
            rows.append(cells[:, a])
            cols.append(cells[:, b])
            vals.append(w * (2.0 if a == b else 1.0))
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(mesh.num_nodes, mesh.num_nodes),
    )
    return SparseSpd(mat.tocsr())


def assemble_stiffness(mesh):
    """P1 stiffness matrix; K_ab = (e_a . e_b) / (4 |T|) per cell."""
    cells = mesh.cells
    tri, area = _cell_geometry(mesh)
    # Edge opposite each vertex.
    e = np.stack(
        [tri[:, 2] - tri[:, 1], tri[:, 0] - tri[:, 2], tri[:, 1] - tri[:, 0]],
        axis=1,
    )
    rows, cols, vals = [], [], []
    for a in range(3):
        for b in range(3):
            rows.append(cells[:, a])
            cols.append(cells[:, b])
            vals.append(np.einsum("ij,ij->i", e[:, a], e[:, b]) / (4.0 * area))
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(mesh.num_nodes, mesh.num_nodes),
    )
    return SparseSpd(mat.tocsr())


def delta_load(mesh, q):
    """Load vector b_j = sum_i beta_i phi_j(x_i) for an atomic measure.

    Boundary rows are produced but ignored by Dirichlet solves.
    """
    b = np.zeros(mesh.num_nodes)
    for pos, beta in q:
        loc = mesh.locate(pos)
        b[mesh.cells[loc.cell]] += beta * loc.lam
    return b


def l2_project(mesh, f):
    """L2 projection of a pointwise-evaluable function onto P1.

    The right-hand side uses the three-point edge-midpoint rule, exact
    for quadratics; the solve uses the full mass matrix (no boundary
    conditions). `f` must accept numpy arrays (x, y).
    """
    tri, area = _cell_geometry(mesh)
    mids = [
        0.5 * (tri[:, 0] + tri[:, 1]),
        0.5 * (tri[:, 1] + tri[:, 2]),
        0.5 * (tri[:, 2] + tri[:, 0]),
    ]
    fvals = [np.asarray(f(m[:, 0], m[:, 1]), dtype=float) for m in mids]
    F = np.zeros(mesh.num_nodes)
    # Each vertex sees the two midpoints of its adjacent edges with hat value 1/2.
    adjacent = {0: (0, 2), 1: (0, 1), 2: (1, 2)}
    for vert, (ea, eb) in adjacent.items():
        np.add.at(F, mesh.cells[:, vert], area / 3.0 * 0.5 * (fvals[ea] + fvals[eb]))
    mass = assemble_mass(mesh)
    return NodalField(mesh, mass.solve(F))


def eval_field(mesh, v, point):
    """Evaluate a nodal field at a point by barycentric interpolation."""
    loc = mesh.locate(point)
    return float(loc.lam @ v.values[mesh.cells[loc.cell]])


def l2_inner(mass, u, v):
    """L2 inner product u^T M v of two nodal fields.

    Evaluated through the polarization identity, which is bitwise
    symmetric in the two arguments.
    """
    if u.values.shape != v.values.shape or mass.dimension != u.values.shape[0]:
        raise ValueError("dimension mismatch in l2_inner")
    plus = u.values + v.values
    minus = u.values - v.values
    return 0.25 * (float(plus @ (mass.mat @ plus)) - float(minus @ (mass.mat @ minus)))


def l2_norm(mass, u):
    """L2 norm sqrt(u^T M u), clamped against tiny negative round-off."""
    return float(np.sqrt(max(l2_inner(mass, u, u), 0.0)))


def field_to_csv(field, path):
    """Write a nodal field as CSV rows `x,y,value` (17 significant digits)."""
    with open(path, "w") as f:
        f.write("x,y,value\n")
        for (x, y), v in zip(field.mesh.nodes, field.values):
            f.write(f"{x:.17g},{y:.17g},{v:.17g}\n")


def interpolation_matrix(coarse, fine):
    """Nodal interpolation matrix from a coarse mesh onto a finer one.

    Exact for P1 functions when the fine mesh refines the coarse one
    (nested nodes): row k holds the barycentric weights of fine node k
    within its containing coarse cell.
    """
    rows, cols, vals = [], [], []
    for k, p in enumerate(fine.nodes):
        loc = coarse.locate(p)
        verts = coarse.cells[loc.cell]
        for v, w in zip(verts, loc.lam):
            if w != 0.0:
                rows.append(k)
                cols.append(v)
                vals.append(w)
    return sp.csr_matrix(
        (vals, (rows, cols)), shape=(fine.num_nodes, coarse.num_nodes)
    )


def interpolate_field(field, fine, matrix=None):
    """Interpolate a nodal field onto a finer nested mesh."""
    if matrix is None:
        matrix = interpolation_matrix(field.mesh, fine)
    return NodalField(fine, matrix @ field.values)
