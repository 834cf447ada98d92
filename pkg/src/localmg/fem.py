"""Linear (P1) finite elements for -div(a grad u) = f with piecewise
constant coefficients.

The coefficient is constant on each mesh subdomain.  Dirichlet conditions
are eliminated: the stiffness matrix acts on the non-Dirichlet (free)
vertices only, and the boundary data enters the load vector through a lift
``u0`` that equals the Dirichlet values at boundary vertices and vanishes
elsewhere.  The source term is integrated with the vertex quadrature rule
and Neumann data with the trapezoid rule per boundary edge, both exact
enough for P1 rates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from localmg.mesh import DIRICHLET, Triangulation

__all__ = [
    "CoefficientField",
    "DofMap",
    "dof_map",
    "assemble_stiffness",
    "assemble_load",
    "energy_norm",
    "weighted_l2_norm",
    "energy_error",
    "export_matrix_market",
]


@dataclass(frozen=True)
class CoefficientField:
    """Piecewise constant diffusion coefficient, one value per subdomain."""

    values: dict

    def __post_init__(self):
        for label, a in self.values.items():
            if not a > 0:
                raise ValueError(
                    f"coefficient on subdomain {label} must be positive, "
                    f"got {a}")

    def per_element(self, mesh: Triangulation):
        """(ne,) array of coefficient values."""
        try:
            return np.array([self.values[int(s)] for s in mesh.subdom])
        except KeyError as exc:
            raise KeyError(f"mesh uses subdomain label {exc} but the "
                           "coefficient field does not define it") from exc

    def jump(self):
        """Ratio of the largest to the smallest coefficient value."""
        vals = list(self.values.values())
        return max(vals) / min(vals)


@dataclass(frozen=True)
class DofMap:
    """Contiguous numbering of the non-Dirichlet vertices.

    ``index[v]`` is the dof of vertex v (or -1 at Dirichlet vertices),
    ``free[i]`` the vertex of dof i; dofs follow ascending vertex order.
    ``dirichlet`` lists the Dirichlet vertices, ``values`` the boundary
    data sampled at them.
    """

    index: np.ndarray
    free: np.ndarray
    dirichlet: np.ndarray
    values: np.ndarray
    nv: int

    @property
    def n(self):
        """Number of free dofs."""
        return len(self.free)

    def lift(self):
        """Full vertex vector: boundary data at Dirichlet vertices, else 0."""
        u0 = np.zeros(self.nv)
        u0[self.dirichlet] = self.values
        return u0

    def extend(self, u):
        """Scatter free dof values to all vertices, adding the lift."""
        full = self.lift()
        full[self.free] = full[self.free] + np.asarray(u)
        return full

    def restrict(self, w):
        """Gather a full vertex vector at the free vertices."""
        return np.asarray(w)[self.free]


def dof_map(mesh, g_D=0.0):
    """Build the DofMap of a mesh; ``g_D`` is the Dirichlet data
    (callable of (x, y) or a constant)."""
    index = np.full(mesh.nv, -1, dtype=np.int64)
    free = np.flatnonzero(mesh.vkind != DIRICHLET)
    index[free] = np.arange(len(free))
    diri = np.flatnonzero(mesh.vkind == DIRICHLET)
    gd = _as_function(g_D)
    vals = gd(mesh.coords[diri, 0], mesh.coords[diri, 1]) if len(diri) \
        else np.zeros(0)
    return DofMap(index=index, free=free, dirichlet=diri,
                  values=np.asarray(vals, dtype=np.float64),
                  nv=mesh.nv)


def _as_function(f):
    """Normalize a constant or callable into a vectorized callable."""
    if callable(f):
        return lambda x, y: np.broadcast_to(
            np.asarray(f(x, y), dtype=np.float64), np.shape(x)).copy()
    c = float(f)
    return lambda x, y: np.full(np.shape(x), c)


def _p1_gradients(mesh):
    """Per-element P1 shape gradients.

    Returns (gx, gy, area): gx[e, i] is the x-derivative of the hat of
    local vertex i on element e.
    """
    p = mesh.coords[mesh.tri]
    x, y = p[..., 0], p[..., 1]
    area = mesh.element_areas()
    gx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]],
                  axis=1) / (2.0 * area)[:, None]
    gy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]],
                  axis=1) / (2.0 * area)[:, None]
    return gx, gy, area


def _full_stiffness(mesh, coeff):
    """(nv, nv) stiffness matrix over all vertices (no boundary handling)."""
    gx, gy, area = _p1_gradients(mesh)
    a = coeff.per_element(mesh)
    w = (a * area)[:, None, None]
    local = w * (gx[:, :, None] * gx[:, None, :]
                 + gy[:, :, None] * gy[:, None, :])
    rows = np.repeat(mesh.tri, 3, axis=1).ravel()
    cols = np.tile(mesh.tri, (1, 3)).ravel()
    A = sp.coo_matrix((local.ravel(), (rows, cols)),
                      shape=(mesh.nv, mesh.nv))
    return A.tocsr()


def assemble_stiffness(mesh, coeff, dofs):
    """Stiffness matrix on the free dofs (CSR, symmetric positive
    definite when Dirichlet vertices exist)."""
    A = _full_stiffness(mesh, coeff)
    return A[dofs.free][:, dofs.free].tocsr()


def assemble_load(mesh, f, g_N, u0, coeff, dofs):
    """Load vector on the free dofs.

    ``f`` is the source (callable or constant, vertex quadrature),
    ``g_N`` the Neumann flux data (callable/constant or None, trapezoid
    rule per Neumann boundary edge), ``u0`` the full-vertex Dirichlet
    lift whose energy is subtracted from the right-hand side.
    """
    b_full = np.zeros(mesh.nv)

    ff = _as_function(f)
    area = mesh.element_areas()
    fv = ff(mesh.coords[:, 0], mesh.coords[:, 1])
    for k in range(3):
        np.add.at(b_full, mesh.tri[:, k], area / 3.0 * fv[mesh.tri[:, k]])

    if g_N is not None:
        gn = _as_function(g_N)
        for (a, b), elems in mesh.edge_elements().items():
            if len(elems) != 1:
                continue
            if mesh.vkind[a] == DIRICHLET and mesh.vkind[b] == DIRICHLET:
                continue
            length = float(np.linalg.norm(mesh.coords[a] - mesh.coords[b]))
            ga = float(gn(*mesh.coords[a]))
            gb = float(gn(*mesh.coords[b]))
            b_full[a] += 0.5 * length * ga
            b_full[b] += 0.5 * length * gb

    u0 = np.asarray(u0, dtype=np.float64)
    if u0.shape != (mesh.nv,):
        raise ValueError("u0 must be a full vertex vector")
    if np.any(u0):
        b_full -= _full_stiffness(mesh, coeff) @ u0
    return b_full[dofs.free]


def energy_norm(A, v):
    """sqrt(v' A v); raises if the quadratic form is negative."""
    v = np.asarray(v)
    q = float(v @ (A @ v))
    if q < 0:
        raise ValueError(f"quadratic form is negative ({q:.3e}); "
                         "the operator is not positive semidefinite here")
    return np.sqrt(q)


def weighted_l2_norm(mesh, coeff, v):
    """Coefficient-weighted L2 norm of a P1 function given by full vertex
    values: sqrt(sum_T a_T int_T v^2)."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (mesh.nv,):
        raise ValueError("v must be a full vertex vector")
    a = coeff.per_element(mesh)
    area = mesh.element_areas()
    vt = v[mesh.tri]
    # exact P1 mass: int_T v^2 = |T|/6 * (sum vi^2 + (sum vi)^2) / 2 ... use
    # the elementwise mass matrix |T|/12 * (1 + I)
    s2 = (vt**2).sum(axis=1)
    ss = vt.sum(axis=1) ** 2
    integral = area / 12.0 * (s2 + ss)
    return float(np.sqrt(np.sum(a * integral)))


# 7-point Dunavant rule, exact through degree 5
_QP = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [0.0597158717897698, 0.4701420641051151, 0.4701420641051151],
    [0.4701420641051151, 0.0597158717897698, 0.4701420641051151],
    [0.4701420641051151, 0.4701420641051151, 0.0597158717897698],
    [0.7974269853530873, 0.1012865073234563, 0.1012865073234563],
    [0.1012865073234563, 0.7974269853530873, 0.1012865073234563],
    [0.1012865073234563, 0.1012865073234563, 0.7974269853530873],
])
_QW = np.array([0.225,
                0.1323941527885062, 0.1323941527885062, 0.1323941527885062,
                0.1259391805448271, 0.1259391805448271, 0.1259391805448271])


def energy_error(mesh, coeff, u_full, grad_exact):
    """Energy norm of the difference between a P1 function and a smooth
    function with gradient ``grad_exact(x, y) -> (gx, gy)``:
    sqrt(sum_T a_T int_T |grad u_h - grad u|^2), degree-5 quadrature."""
    gx, gy, area = _p1_gradients(mesh)
    u = np.asarray(u_full)[mesh.tri]
    uhx = (gx * u).sum(axis=1)
    uhy = (gy * u).sum(axis=1)
    p = mesh.coords[mesh.tri]
    a = coeff.per_element(mesh)
    acc = np.zeros(mesh.ne)
    for lam, w in zip(_QP, _QW):
        qx = (lam[:, None] * p[..., 0].T).sum(axis=0)
        qy = (lam[:, None] * p[..., 1].T).sum(axis=0)
        ex, ey = grad_exact(qx, qy)
        acc += w * ((uhx - ex) ** 2 + (uhy - ey) ** 2)
    return float(np.sqrt(np.sum(a * area * acc)))


def export_matrix_market(A, path):
    """Write a sparse matrix in Matrix Market format."""
    from scipy.io import mmwrite

    mmwrite(str(path), A)
