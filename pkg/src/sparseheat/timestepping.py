"""Fully discrete heat solvers: P1 elements in space, dG(r) in time, r in {0,1}.

The map from initial data to the end-time state and its adjoint share one
factorization per distinct step length. With the shifted Legendre basis
{1, 2(t - t_{m-1})/k_m - 1} on each slab, the dG(1) slab system is

    [ M + k A      M          ] [U0]   [ f]
    [   -M         M + k/3 A  ] [U1] = [-f]

with end-of-slab trace U0 + U1 and f the previous trace paired with M
(first slab: the initial load hits both rows with weights +1/-1 because
the two basis functions have traces 1 and -1 at the left slab end). The
per-step amplification of a Laplacian eigenmode equals the subdiagonal
Pade approximant of exp(-s): 1/(1+s) for dG(0) and the (1,2) approximant
for dG(1); `pade_step_oracle` computes it from the raw 2x2 slab system.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericalError
from .fem import NodalField, assemble_mass, assemble_stiffness, delta_load, zero_field


class TimeGrid:
    """Partition of (0, T] into subintervals."""

    def __init__(self, T, steps):
        steps = np.asarray(steps, dtype=float)
        if T <= 0 or steps.size == 0 or np.any(steps <= 0):
            raise ValueError("final time and all steps must be positive")
        if abs(steps.sum() - T) > 1e-14 * max(T, 1.0):
            raise ValueError("step lengths do not sum to the final time")
        self.T = float(T)
        self.steps = steps
        self.steps.setflags(write=False)

    @classmethod
    def uniform(cls, T, M):
        if M < 1:
            raise ValueError("need at least one time step")
        return cls(T, np.full(M, T / M))

    @property
    def M(self):
        return self.steps.size


class HeatModel:
    """Assembled discretization of the homogeneous heat equation.

    Bundles the mesh, full mass/stiffness matrices, the interior index
    set, the time grid and the dG order; slab factorizations are created
    lazily per distinct step length and reused. Immutable after setup, so
    several propagations may run concurrently against one model.
    """

    def __init__(self, mesh, grid, order):
        if order not in (0, 1):
            raise ValueError("dG order must be 0 or 1")
        self.mesh = mesh
        self.grid = grid
        self.order = int(order)
        self.mass = assemble_mass(mesh)
        self.stiffness = assemble_stiffness(mesh)
        self.interior = mesh.interior_nodes()
        self.mass_int = self.mass.mat[self.interior][:, self.interior].tocsr()
        self.stiff_int = self.stiffness.mat[self.interior][:, self.interior].tocsr()
        self._slab_lu = {}

    @property
    def n_interior(self):
        return self.interior.size

    def _lu(self, k):
        key = float(k)
        lu = self._slab_lu.get(key)
        if lu is None:
            Mi, Ai = self.mass_int, self.stiff_int
            if self.order == 0:
                mat = (Mi + k * Ai).tocsc()
            else:
                mat = sp.bmat(
                    [[Mi + k * Ai, Mi], [-Mi, Mi + (k / 3.0) * Ai]], format="csc"
                )
            try:
                lu = spla.splu(mat)
            except RuntimeError as exc:
                raise NumericalError(f"slab factorization failed: {exc}") from exc
            self._slab_lu[key] = lu
        return lu

    def _step_forward(self, k, f):
        lu = self._lu(k)
        if self.order == 0:
            return lu.solve(f)
        y = lu.solve(np.concatenate([f, -f]))
        n = self.n_interior
        return y[:n] + y[n:]

    def _step_adjoint(self, k, w):
        lu = self._lu(k)
        if self.order == 0:
            return lu.solve(w)  # slab matrix is symmetric for dG(0)
        y = lu.solve(np.concatenate([w, w]), trans="T")
        n = self.n_interior
        return y[:n] - y[n:]

    def propagate_load(self, b_int, return_trajectory=False):
        """End-time trace from a first-slab load vector on interior nodes."""
        steps = self.grid.steps
        u = self._step_forward(steps[0], b_int)
        trajectory = [u] if return_trajectory else None
        for k in steps[1:]:
            u = self._step_forward(k, self.mass_int @ u)
            if return_trajectory:
                trajectory.append(u)
        return (u, trajectory) if return_trajectory else u

    def propagate_adjoint(self, w_int):
        """Transposed propagation: terminal pairing back to the initial trace."""
        steps = self.grid.steps
        w = self._step_adjoint(steps[-1], w_int)
        for k in steps[-2::-1]:
            w = self._step_adjoint(k, self.mass_int @ w)
        return w

    def embed(self, interior_values):
        """Interior coefficient vector as a full nodal field (zero boundary)."""
        values = np.zeros(self.mesh.num_nodes)
        values[self.interior] = interior_values
        return NodalField(self.mesh, values)


def forward_dirac(model, q, return_trajectory=False):
    """End-time state generated by an atomic initial measure.

    The measure enters through the duality pairing with the first-slab
    test trace, i.e. the load vector collects hat-function values at the
    atom positions. An empty measure yields the zero field.
    """
    if len(q) == 0:
        out = zero_field(model.mesh)
        return (out, []) if return_trajectory else out
    b = delta_load(model.mesh, q)[model.interior]
    if return_trajectory:
        u, traj = model.propagate_load(b, return_trajectory=True)
        return model.embed(u), [model.embed(t) for t in traj]
    return model.embed(model.propagate_load(b))


def forward_field(model, v0):
    """End-time state generated by an initial nodal field.

    The initial datum enters through the L2 pairing (mass matrix), which
    realizes the projection of v0 onto the interior P1 space.
    """
    if v0.values.shape[0] != model.mesh.num_nodes:
        raise ValueError("initial field does not match the model mesh")
    b = (model.mass.mat @ v0.values)[model.interior]
    return model.embed(model.propagate_load(b))


def adjoint_dirac(model, g):
    """Initial trace of the backward solve driven by a terminal residual.

    Returns the nodal field z with < q, z > = (forward_dirac(q), g) in L2
    for every atomic measure q, exactly up to factorization round-off.
    """
    if g.values.shape[0] != model.mesh.num_nodes:
        raise ValueError("terminal field does not match the model mesh")
    w = (model.mass.mat @ g.values)[model.interior]
    return model.embed(model.propagate_adjoint(w))


def pade_step_oracle(lam, k, order):
    """Amplification of one dG slab for the scalar mode u' + lam*u = 0.

    For order 0 this is 1/(1 + k*lam). For order 1 the 2x2 slab system is
    solved numerically and the end trace returned; the result agrees with
    the subdiagonal (1,2) Pade approximant of exp(-k*lam).
    """
    if k <= 0 or lam < 0:
        raise ValueError("need k > 0 and lam >= 0")
    if order not in (0, 1):
        raise ValueError("dG order must be 0 or 1")
    s = k * lam
    if order == 0:
        return 1.0 / (1.0 + s)
    mat = np.array([[1.0 + s, 1.0], [-1.0, 1.0 + s / 3.0]])
    u = np.linalg.solve(mat, np.array([1.0, -1.0]))
    return float(u[0] + u[1])
