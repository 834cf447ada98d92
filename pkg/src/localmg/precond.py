"""Multilevel preconditioners assembled from a bisection sequence.

Each recorded bisection i contributes a *three-point subspace*: the span of
the hat functions at the new vertex and the two endpoints of the split
edge, taken on the intermediate mesh right after that bisection.  Those
hats are expressed in the nodal basis of the finest mesh by replaying the
sequence once: a hat frozen at step i starts as the unit coefficient
vector of its vertex and collects its values at later midpoints through
the interpolation rule w[mid] = (w[left] + w[right]) / 2.  Hats at
Dirichlet vertices are dropped and the coefficient vectors are truncated
to the free dofs.

On top of the three-point subspaces sit the coarse-mesh space (all hats of
the source mesh) and the one-dimensional nodal spaces of the finest mesh.
Every local matrix is the Galerkin product W_i' A W_i with the finest
stiffness matrix A.

Two applications are provided:

* ``bpx_apply`` — additive: diagonal (Jacobi) scaling on the three-point
  and nodal subspaces plus an exact coarse solve;
* ``vcycle_apply`` — multiplicative symmetric sweep: forward Gauss-Seidel
  on the nodal spaces, exact three-point solves fine-to-coarse, exact
  coarse solve, three-point solves coarse-to-fine, backward Gauss-Seidel.

The sequential sweeps run through numba-compiled kernels when numba is
importable and fall back to an equivalent scipy path otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve_triangular

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap if not (args and callable(args[0])) else args[0]

__all__ = [
    "SubspaceBasis",
    "ApplyLog",
    "PreconditionerSpec",
    "build_spaces",
    "bpx_apply",
    "vcycle_apply",
    "assemble_explicit",
]

COARSE = "coarse"
THREEPOINT = "threepoint"
FINEST_NODAL = "finest_nodal"


@dataclass(frozen=True)
class SubspaceBasis:
    """One correction subspace: its kind, the dofs spanning it and the
    hierarchy level it belongs to (0 = coarse, then bisection levels,
    finally the finest nodal level)."""

    kind: str
    dof_ids: tuple
    level: int


@dataclass
class ApplyLog:
    """Operation counters accumulated across preconditioner applications."""

    applies: int = 0
    subspace_corrections: int = 0
    float_work: int = 0

    def reset(self):
        self.applies = 0
        self.subspace_corrections = 0
        self.float_work = 0


class PreconditionerSpec:
    """Prepared subspace data shared by the additive and multiplicative
    applications.

    ``subspaces`` lists the correction spaces in order: the coarse space,
    the three-point spaces in replay order, then the nodal spaces
    (when built with ``include_nodal``).  ``local_matrix(i)`` returns the
    Galerkin matrix of subspace i.  ``smoother`` names the nodal smoother
    of the multiplicative sweep; the additive application uses the Jacobi
    diagonals of the same subspaces.
    """

    def __init__(self, A, subspaces, smoother, W0, A0_cho, A0, W3, AW3, d3,
                 tp, diagA, L, U, log):
        self.A = A
        self.n = A.shape[0]
        self.subspaces = subspaces
        self.smoother = smoother
        self.W0 = W0
        self.A0_cho = A0_cho
        self.A0 = A0
        self.W3 = W3
        self.AW3 = AW3
        self.d3 = d3
        self.tp = tp
        self.diagA = diagA
        self.L = L
        self.U = U
        self.log = log
        self.AW0 = A @ W0 if W0 is not None else None

    @property
    def num_threepoint(self):
        return int(self.tp["count"])

    @property
    def dof_total(self):
        """n plus the summed subspace dimensions (work-bound yardstick)."""
        return self.n + sum(len(s.dof_ids) for s in self.subspaces)

    def local_matrix(self, i):
        """Galerkin matrix of subspace i (dense)."""
        s = self.subspaces[i]
        if s.kind == COARSE:
            return self.A0.copy()
        if s.kind == THREEPOINT:
            j = i - 1
            tp = self.tp
            k = int(tp["kdim"][j])
            return tp["amat"][tp["ia_off"][j]:tp["ia_off"][j] + k * k] \
                .reshape(k, k).copy()
        d = self.diagA[s.dof_ids[0]]
        return np.array([[d]])


def _require_spd(mat, what):
    try:
        sla.cholesky(mat, lower=True)
    except sla.LinAlgError as exc:
        raise ValueError(f"{what} is singular or indefinite") from exc


def build_spaces(seq, grouping, dofs, A, include_nodal=True):
    """Build the preconditioner data for a stiffness matrix ``A`` on the
    free dofs of ``dofs``, from the bisection sequence and its level
    grouping.

    The subspace list depends only on the hierarchy and the dof map, not
    on the coefficient; the local matrices are Galerkin products with the
    given ``A``.
    """
    A = sp.csr_matrix(A)
    n = dofs.n
    if A.shape != (n, n):
        raise ValueError(f"A has shape {A.shape}, expected ({n}, {n})")

    levels = np.zeros(len(seq.items), dtype=np.int64)
    for lvl, g in enumerate(grouping.groups, start=1):
        for i in g:
            levels[i] = lvl

    free = dofs.index  # vertex -> dof or -1

    # replay the sequence, freezing hat vectors and cascading old ones
    index = {}  # vertex -> list of frozen vectors having a value there

    def freeze(v):
        vec = {v: 1.0}
        index.setdefault(v, []).append(vec)
        return vec

    coarse_cols = [(v, freeze(v)) for v in range(seq.source.nv)
                   if free[v] >= 0]
    tp_entries = []  # (item_index, [(vertex, vec), ...])
    for i, item in enumerate(seq.items):
        p = item.midpoint
        l, r = item.endpoints
        seen = set()
        for vec in index.get(l, []) + index.get(r, []):
            if id(vec) in seen:
                continue
            seen.add(id(vec))
            val = (vec.get(l, 0.0) + vec.get(r, 0.0)) / 2.0
            if val != 0.0:
                vec[p] = val
                index.setdefault(p, []).append(vec)
        cols = [(q, freeze(q)) for q in (p, l, r) if free[q] >= 0]
        if cols:
            tp_entries.append((i, cols))

    subspaces = [SubspaceBasis(
        kind=COARSE,
        dof_ids=tuple(int(free[v]) for v, _ in coarse_cols),
        level=0)]
    for i, cols in tp_entries:
        subspaces.append(SubspaceBasis(
            kind=THREEPOINT,
            dof_ids=tuple(int(free[v]) for v, _ in cols),
            level=int(levels[i])))

    # coarse space: sparse basis matrix and dense Galerkin matrix
    W0 = _columns_to_sparse(n, free, [vec for _, vec in coarse_cols])
    if W0.shape[1] > 0:
        A0 = (W0.T @ (A @ W0)).toarray()
        A0 = 0.5 * (A0 + A0.T)
        try:
            A0_cho = sla.cho_factor(A0)
        except sla.LinAlgError as exc:
            raise ValueError("coarse Galerkin matrix is singular or "
                             "indefinite") from exc
    else:
        A0, A0_cho = None, None

    # three-point spaces: one global basis matrix, per-space dense blocks
    W3 = _columns_to_sparse(
        n, free, [vec for _, cols in tp_entries for _, vec in cols])
    AW3 = (A @ W3).tocsc()
    W3 = W3.tocsc()
    tp = _flatten_threepoint(tp_entries, W3, AW3)
    d3 = tp["d3"]

    if include_nodal:
        subspaces.extend(
            SubspaceBasis(kind=FINEST_NODAL, dof_ids=(d,),
                          level=grouping.num_levels + 1)
            for d in range(n))
    diagA = np.asarray(A.diagonal())
    if include_nodal and (diagA <= 0).any():
        raise ValueError("stiffness diagonal must be positive")

    return PreconditionerSpec(
        A=A, subspaces=tuple(subspaces), smoother="symmetric-gauss-seidel",
        W0=W0 if W0.shape[1] else None, A0_cho=A0_cho, A0=A0,
        W3=W3 if W3.shape[1] else None, AW3=AW3 if W3.shape[1] else None,
        d3=d3, tp=tp, diagA=diagA if include_nodal else None,
        L=sp.tril(A).tocsr() if include_nodal else None,
        U=sp.triu(A).tocsr() if include_nodal else None,
        log=ApplyLog())


def _columns_to_sparse(n, free, vecs):
    rows, cols, vals = [], [], []
    for j, vec in enumerate(vecs):
        for v, val in vec.items():
            d = free[v]
            if d >= 0:
                rows.append(d)
                cols.append(j)
                vals.append(val)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, len(vecs)))


def _flatten_threepoint(tp_entries, W3, AW3):
    """Concatenate per-subspace support rows, basis blocks and inverse
    local matrices into flat arrays for the sweep kernels."""
    kdims, sup_ptr, idx_parts = [], [0], []
    w_parts, aw_parts, inv_parts, amat_parts = [], [], [], []
    w_off, ia_off = [], []
    d3 = []
    w_run = ia_run = 0
    Wp, Wi, Wx = W3.indptr, W3.indices, W3.data
    Zp, Zi, Zx = AW3.indptr, AW3.indices, AW3.data
    col = 0
    for _, cols in tp_entries:
        k = len(cols)
        idx = np.unique(np.concatenate(
            [Wi[Wp[col]:Wp[col + k]], Zi[Zp[col]:Zp[col + k]]]))
        s = len(idx)
        Wd = np.zeros((s, k))
        AWd = np.zeros((s, k))
        for c in range(k):
            rows = Wi[Wp[col + c]:Wp[col + c + 1]]
            Wd[np.searchsorted(idx, rows), c] = Wx[Wp[col + c]:Wp[col + c + 1]]
            rows = Zi[Zp[col + c]:Zp[col + c + 1]]
            AWd[np.searchsorted(idx, rows), c] = \
                Zx[Zp[col + c]:Zp[col + c + 1]]
        Ai = Wd.T @ AWd
        Ai = 0.5 * (Ai + Ai.T)
        _require_spd(Ai, "three-point Galerkin matrix")
        inv = np.linalg.inv(Ai)
        kdims.append(k)
        w_off.append(w_run)
        ia_off.append(ia_run)
        w_run += s * k
        ia_run += k * k
        idx_parts.append(idx)
        sup_ptr.append(sup_ptr[-1] + s)
        w_parts.append(Wd.ravel())
        aw_parts.append(AWd.ravel())
        inv_parts.append(inv.ravel())
        amat_parts.append(Ai.ravel())
        d3.extend(np.diag(Ai))
        col += k

    def cat(parts, dtype):
        return np.concatenate(parts).astype(dtype) if parts \
            else np.zeros(0, dtype=dtype)

    return {
        "count": len(tp_entries),
        "kdim": np.asarray(kdims, dtype=np.int64),
        "sup_ptr": np.asarray(sup_ptr, dtype=np.int64),
        "idx": cat(idx_parts, np.int64),
        "w": cat(w_parts, np.float64),
        "aw": cat(aw_parts, np.float64),
        "inv": cat(inv_parts, np.float64),
        "amat": cat(amat_parts, np.float64),
        "w_off": np.asarray(w_off, dtype=np.int64),
        "ia_off": np.asarray(ia_off, dtype=np.int64),
        "d3": np.asarray(d3, dtype=np.float64),
    }


# ---------------------------------------------------------------------------
# sweep kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _gs_sweep_kernel(indptr, indices, data, diag, w, r, reverse):
    n = w.shape[0]
    ks = range(n - 1, -1, -1) if reverse else range(n)
    for k in ks:
        c = r[k] / diag[k]
        if c != 0.0:
            w[k] += c
            for jj in range(indptr[k], indptr[k + 1]):
                r[indices[jj]] -= c * data[jj]


@njit(cache=True)
def _tp_sweep_kernel(sup_ptr, idx, wcat, awcat, invcat, kdim, w_off, ia_off,
                     order, w, r):
    y = np.zeros(3)
    cv = np.zeros(3)
    for oo in range(order.shape[0]):
        i = order[oo]
        s0, s1 = sup_ptr[i], sup_ptr[i + 1]
        s = s1 - s0
        k = kdim[i]
        base = w_off[i]
        for c in range(k):
            y[c] = 0.0
        for t in range(s):
            rt = r[idx[s0 + t]]
            for c in range(k):
                y[c] += wcat[base + t * k + c] * rt
        ib = ia_off[i]
        for a in range(k):
            acc = 0.0
            for b in range(k):
                acc += invcat[ib + a * k + b] * y[b]
            cv[a] = acc
        for t in range(s):
            dof = idx[s0 + t]
            accw = 0.0
            accr = 0.0
            for c in range(k):
                accw += wcat[base + t * k + c] * cv[c]
                accr += awcat[base + t * k + c] * cv[c]
            w[dof] += accw
            r[dof] -= accr


def _gs_sweep(spec, w, R, reverse):
    """Gauss-Seidel sweep updating (w, R) in place; R is the running
    residual.  Works for single vectors and for column blocks."""
    if _HAVE_NUMBA and R.ndim == 1:
        A = spec.A
        _gs_sweep_kernel(A.indptr, A.indices, A.data, spec.diagA, w, R,
                         reverse)
        return
    T = spec.U if reverse else spec.L
    c = spsolve_triangular(T, R, lower=not reverse)
    w += c
    R -= spec.A @ c


def _tp_sweep(spec, w, R, forward):
    tp = spec.tp
    count = tp["count"]
    if count == 0:
        return
    order = np.arange(count) if forward else np.arange(count)[::-1]
    if _HAVE_NUMBA and R.ndim == 1:
        _tp_sweep_kernel(tp["sup_ptr"], tp["idx"], tp["w"], tp["aw"],
                         tp["inv"], tp["kdim"], np.ascontiguousarray(
                             tp["w_off"]),
                         tp["ia_off"], np.ascontiguousarray(order), w, R)
        return
    for i in order:
        s0, s1 = tp["sup_ptr"][i], tp["sup_ptr"][i + 1]
        k = int(tp["kdim"][i])
        idx = tp["idx"][s0:s1]
        base = int(tp["w_off"][i])
        size = (s1 - s0) * k
        Wd = tp["w"][base:base + size].reshape(-1, k)
        AWd = tp["aw"][base:base + size].reshape(-1, k)
        ib = int(tp["ia_off"][i])
        inv = tp["inv"][ib:ib + k * k].reshape(k, k)
        cv = inv @ (Wd.T @ R[idx])
        w[idx] += Wd @ cv
        R[idx] -= AWd @ cv


def _coarse_correct(spec, w, R):
    if spec.W0 is None:
        return
    c0 = sla.cho_solve(spec.A0_cho, spec.W0.T @ R)
    w += spec.W0 @ c0
    R -= spec.AW0 @ c0


# ---------------------------------------------------------------------------
# applications
# ---------------------------------------------------------------------------


def _check_vector(spec, r):
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (spec.n,):
        raise ValueError(f"vector has shape {r.shape}, expected ({spec.n},)")
    return r


def bpx_apply(spec, r):
    """Additive application: coarse solve + Jacobi on the three-point and
    nodal subspaces."""
    r = _check_vector(spec, r)
    w = np.zeros_like(r)
    work = 0
    if spec.diagA is not None:
        w += r / spec.diagA
        work += spec.n
    if spec.W3 is not None:
        w += spec.W3 @ ((spec.W3.T @ r) / spec.d3)
        work += 2 * spec.W3.nnz + len(spec.d3)
    if spec.W0 is not None:
        w += spec.W0 @ sla.cho_solve(spec.A0_cho, spec.W0.T @ r)
        work += 2 * spec.W0.nnz + spec.W0.shape[1] ** 2
    log = spec.log
    log.applies += 1
    log.subspace_corrections += len(spec.subspaces)
    log.float_work += work
    return w


def vcycle_apply(spec, g):
    """Multiplicative symmetric application (one V-shaped sweep through
    the subspaces; every value it produces satisfies
    ``w = B g`` for a fixed symmetric operator B)."""
    g = _check_vector(spec, g)
    if spec.diagA is None:
        # degenerate build without nodal spaces: subspace corrections only
        w = np.zeros_like(g)
        r = g.copy()
        _tp_sweep(spec, w, r, forward=False)
        _coarse_correct(spec, w, r)
        _tp_sweep(spec, w, r, forward=True)
        _log_vcycle(spec)
        return w
    w = np.zeros_like(g)
    r = g.copy()
    _gs_sweep(spec, w, r, reverse=False)
    _tp_sweep(spec, w, r, forward=False)
    _coarse_correct(spec, w, r)
    _tp_sweep(spec, w, r, forward=True)
    _gs_sweep(spec, w, r, reverse=True)
    _log_vcycle(spec)
    return w


def _log_vcycle(spec):
    log = spec.log
    log.applies += 1
    log.subspace_corrections += 2 * (spec.n + spec.tp["count"]) + 1
    work = 4 * (spec.A.nnz + spec.n)  # two GS sweeps
    work += 4 * spec.tp["w"].size + 2 * spec.tp["inv"].size
    if spec.W0 is not None:
        work += 4 * spec.W0.nnz + spec.W0.shape[1] ** 2
    log.float_work += work


def _vcycle_batched(spec, G):
    """Same sweep as vcycle_apply for a block of right-hand sides."""
    W = np.zeros_like(G)
    R = G.copy()
    if spec.diagA is not None:
        _gs_sweep(spec, W, R, reverse=False)
    _tp_sweep(spec, W, R, forward=False)
    _coarse_correct(spec, W, R)
    _tp_sweep(spec, W, R, forward=True)
    if spec.diagA is not None:
        _gs_sweep(spec, W, R, reverse=True)
    return W


def _bpx_closed_form(spec):
    """The additive operator as a closed sparse expression; independent of
    the vector apply path, used to cross-check it."""
    B = sp.csr_matrix((spec.n, spec.n))
    if spec.diagA is not None:
        B = B + sp.diags(1.0 / spec.diagA)
    if spec.W3 is not None:
        B = B + spec.W3 @ sp.diags(1.0 / spec.d3) @ spec.W3.T
    if spec.W0 is not None:
        A0inv = sla.cho_solve(spec.A0_cho, np.eye(spec.W0.shape[1]))
        B = B + spec.W0 @ sp.csr_matrix(A0inv) @ spec.W0.T
    return np.asarray(B.todense())


def assemble_explicit(spec, which, dense_limit=3000):
    """Dense matrix of the preconditioner, built by applying it to every
    unit vector.  Guarded by ``dense_limit``."""
    if spec.n > dense_limit:
        raise ValueError(f"n = {spec.n} exceeds the dense limit "
                         f"{dense_limit}")
    if which == "bpx":
        apply_fn = bpx_apply
    elif which == "vcycle":
        apply_fn = vcycle_apply
    else:
        raise ValueError(f"unknown preconditioner kind {which!r}")
    B = np.empty((spec.n, spec.n))
    e = np.zeros(spec.n)
    for j in range(spec.n):
        e[j] = 1.0
        B[:, j] = apply_fn(spec, e)
        e[j] = 0.0
    return B
