"""Residual error estimation, bulk marking, and the adaptive loop.

The indicator is the coefficient-weighted residual estimator

    eta_t^2 = a_t^{-1} h_t^2 ||f||_{L2(t)}^2
            + 1/2 sum_{interior edges} h_e w_e^{-1} ||[a grad(u).n]||_{L2(e)}^2
            + sum_{Neumann edges} h_e a_t^{-1} ||g_N - a grad(u).n||_{L2(e)}^2

with h_t = |t|^{1/2} and edge weight w_e = max of the two adjacent
coefficients (a harmonic-mean variant is available).  The max weighting
keeps the indicator from blowing up on the small-coefficient side of an
interface, which is what makes it usable on strongly discontinuous
coefficients.
"""

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from localmg import fem, hierarchy, precond, solver
from localmg import mesh as mesh_mod

__all__ = [
    "AdaptiveRecord",
    "IndicatorField",
    "adaptive_solve",
    "estimate",
    "mark",
    "records_to_jsonl",
]

# abscissae/weights of 2-point Gauss on [0, 1], weights summing to one
_EDGE_Q = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
_EDGE_W = np.array([0.5, 0.5])


@dataclass(frozen=True)
class IndicatorField:
    """Per-element error indicators and their root-sum-square total."""

    eta: np.ndarray
    total: float

    def __len__(self):
        return len(self.eta)


def _element_norm_f_squared(mesh, f):
    """Integral of f^2 over each element (degree-5 rule for callables)."""
    area = mesh.element_areas()
    if not callable(f):
        return float(f) ** 2 * area
    p = mesh.coords[mesh.tri]
    acc = np.zeros(mesh.ne)
    for lam, w in zip(fem._QP, fem._QW):
        qx = (lam[:, None] * p[..., 0].T).sum(axis=0)
        qy = (lam[:, None] * p[..., 1].T).sum(axis=0)
        acc += w * np.asarray(f(qx, qy), dtype=float) ** 2
    return acc * area


def estimate(mesh, coeff, u, f, g_N=0.0, weight="max"):
    """Per-element residual indicators for the P1 solution ``u`` (full
    vertex values)."""
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (mesh.nv,):
        raise ValueError("u must be a full vertex vector")
    if weight not in ("max", "harmonic"):
        raise ValueError(f"unknown edge weight {weight!r}")

    a = coeff.per_element(mesh)
    area = mesh.element_areas()
    gx, gy, _ = fem._p1_gradients(mesh)
    ut = u[mesh.tri]
    flux_x = a * (gx * ut).sum(axis=1)
    flux_y = a * (gy * ut).sum(axis=1)

    eta2 = area / a * _element_norm_f_squared(mesh, f)

    interior = []
    for (p, q), eids in mesh.edge_elements().items():
        if len(eids) == 2:
            interior.append((p, q, eids[0], eids[1]))
        else:
            eta2[eids[0]] += _neumann_term(mesh, coeff, g_N, p, q, eids[0],
                                           flux_x, flux_y)
    if interior:
        pe = np.array(interior, dtype=np.int64)
        vec = mesh.coords[pe[:, 1]] - mesh.coords[pe[:, 0]]
        h_e = np.hypot(vec[:, 0], vec[:, 1])
        nx, ny = vec[:, 1] / h_e, -vec[:, 0] / h_e
        e1, e2 = pe[:, 2], pe[:, 3]
        jump = (flux_x[e1] - flux_x[e2]) * nx + (flux_y[e1] - flux_y[e2]) * ny
        if weight == "max":
            w_e = np.maximum(a[e1], a[e2])
        else:
            w_e = 2.0 * a[e1] * a[e2] / (a[e1] + a[e2])
        term = 0.5 * h_e ** 2 / w_e * jump ** 2
        np.add.at(eta2, e1, term)
        np.add.at(eta2, e2, term)

    eta = np.sqrt(eta2)
    return IndicatorField(eta=eta, total=float(np.sqrt(eta2.sum())))


def _neumann_term(mesh, coeff, g_N, p, q, eid, flux_x, flux_y):
    """Flux-mismatch contribution of one boundary edge (zero for Dirichlet
    edges)."""
    kp, kq = mesh.vkind[p], mesh.vkind[q]
    if kp == mesh_mod.DIRICHLET and kq == mesh_mod.DIRICHLET:
        return 0.0
    xp, xq = mesh.coords[p], mesh.coords[q]
    vec = xq - xp
    h_e = float(np.hypot(vec[0], vec[1]))
    n = np.array([vec[1], -vec[0]]) / h_e
    others = [v for v in mesh.tri[eid] if v != p and v != q]
    mid = 0.5 * (xp + xq)
    if n @ (mesh.coords[others[0]] - mid) > 0.0:
        n = -n
    fn = float(flux_x[eid] * n[0] + flux_y[eid] * n[1])
    if callable(g_N):
        pts = xp[None, :] + _EDGE_Q[:, None] * vec[None, :]
        g = np.asarray(g_N(pts[:, 0], pts[:, 1]), dtype=float)
    else:
        g = np.full(2, float(g_N))
    resid2 = float(_EDGE_W @ (g - fn) ** 2)
    a_t = coeff.per_element(mesh)[eid]
    return h_e ** 2 / a_t * resid2


def mark(ind, theta):
    """Minimal bulk-chasing element set: greedy by descending indicator
    until the marked mass reaches ``theta^2`` of the total.  Ties break
    toward the smaller element id.  Returns ascending element ids."""
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must lie in (0, 1]")
    eta2 = ind.eta ** 2
    total2 = eta2.sum()
    if total2 == 0.0:
        return np.empty(0, dtype=np.int64)
    order = np.lexsort((np.arange(len(eta2)), -eta2))
    csum = np.cumsum(eta2[order])
    target = theta ** 2 * total2 * (1.0 - 1e-12)
    count = int(np.searchsorted(csum, target) + 1)
    count = min(count, int((eta2 > 0.0).sum()))
    return np.sort(order[:count])


@dataclass
class AdaptiveRecord:
    """One iteration of the adaptive loop."""

    mesh: object
    u: np.ndarray
    indicator: IndicatorField
    n_dofs: int
    report: object = None


def _solve_once(mesh, mesh0, coeff, f, g_N, g_D, method, tol, maxit):
    dofs = fem.dof_map(mesh, g_D)
    A = fem.assemble_stiffness(mesh, coeff, dofs)
    u0 = dofs.lift()
    b = fem.assemble_load(mesh, f, g_N, u0, coeff, dofs)
    if method == "direct":
        x = spla.spsolve(A.tocsc(), b)
        return dofs.extend(x), None
    if method == "cg":
        x, report = solver.cg(A, b, tol=tol, maxit=maxit)
        return dofs.extend(x), report
    seq, grouping = hierarchy.decompose(mesh, mesh0)
    spec = precond.build_spaces(seq, grouping, dofs, A)
    if method == "tpsmg":
        apply_b = lambda r: precond.vcycle_apply(spec, r)
        x, report = solver.stationary_iterate(A, b, B=apply_b, tol=tol,
                                              maxit=maxit)
    elif method == "tpsmgcg":
        apply_b = lambda r: precond.vcycle_apply(spec, r)
        x, report = solver.pcg(A, b, B=apply_b, tol=tol, maxit=maxit)
    elif method == "tpsbpxcg":
        apply_b = lambda r: precond.bpx_apply(spec, r)
        x, report = solver.pcg(A, b, B=apply_b, tol=tol, maxit=maxit)
    else:
        raise ValueError(f"unknown solve method {method!r}")
    return dofs.extend(x), report


def adaptive_solve(mesh0, coeff, f, g_N=0.0, g_D=0.0, *, max_dof,
                   theta=0.5, method="direct", tol=1e-10, maxit=1000,
                   weight="max"):
    """Run SOLVE -> ESTIMATE -> MARK -> REFINE until the dof count
    exceeds ``max_dof``; returns one :class:`AdaptiveRecord` per solve.

    The final record is the first mesh whose dof count exceeds the cap.
    A non-converged iterative solve stops the loop early with the records
    collected so far.
    """
    records = []
    current = mesh0
    while True:
        u, report = _solve_once(current, mesh0, coeff, f, g_N, g_D,
                                method, tol, maxit)
        indicator = estimate(current, coeff, u, f, g_N, weight=weight)
        n_dofs = int(fem.dof_map(current, g_D).n)
        records.append(AdaptiveRecord(mesh=current, u=u,
                                      indicator=indicator,
                                      n_dofs=n_dofs, report=report))
        if report is not None and not report.converged:
            break
        if n_dofs > max_dof:
            break
        marked = mark(indicator, theta)
        if marked.size == 0:
            break
        current = mesh_mod.refine(current, marked)
    return records


def records_to_jsonl(records, path):
    """One JSON object per adaptive iteration."""
    with open(path, "w") as fh:
        for rec in records:
            row = {
                "n_vertices": int(rec.mesh.nv),
                "n_elements": int(rec.mesh.ne),
                "n_dofs": rec.n_dofs,
                "indicator_total": rec.indicator.total,
            }
            if rec.report is not None:
                row["iterations"] = rec.report.iterations
                row["converged"] = rec.report.converged
                row["wall_time"] = rec.report.wall_time
            fh.write(json.dumps(row) + "\n")
