"""Session-wide fixtures for the end-to-end benchmark checks.

The expensive artifacts (adaptive trajectories of the jump-coefficient
benchmark, explicit preconditioner matrices, dense spectra) are shared by
several acceptance tests, so they are computed once per session, lazily on
first use.  Unit-test modules do not touch these fixtures and stay fast.
"""

import time
from dataclasses import dataclass, field

import numpy as np
import pytest
import scipy.sparse.linalg as spla

from localmg import adapt, experiments, fem, hierarchy, precond, solver, \
    spectral

BENCH_MAX_DOF = 2100    # ends near n = 2400: the trailing x16 dof window
                        # then starts above the 127 unknowns of the start
DENSE_LIMIT = 3000
EPS_HARD = 1e-4
EPS_TINY = 1e-6
SWEEP_EPS = (1e-6, 1e-4, 1e-2, 1.0)


def jump_coefficient(eps):
    return fem.CoefficientField({1: 1.0, 2: 1.0, 3: eps})


@dataclass
class Instance:
    """One assembled (mesh, coefficient) pair with its preconditioner and,
    when computed, the dense spectra of both preconditioned operators."""

    eps: float
    mesh: object
    dofs: object
    A: object
    b: np.ndarray
    u: np.ndarray
    pspec: object
    spectra: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.dofs.n

    def apply(self, family):
        if family == "vcycle":
            return lambda r: precond.vcycle_apply(self.pspec, r)
        if family == "bpx":
            return lambda r: precond.bpx_apply(self.pspec, r)
        raise ValueError(f"unknown preconditioner family {family!r}")


def build_instance(mesh, mesh0, eps, g_D, hier=None):
    coeff = jump_coefficient(eps)
    dofs = fem.dof_map(mesh, g_D)
    A = fem.assemble_stiffness(mesh, coeff, dofs)
    b = fem.assemble_load(mesh, 1.0, 0.0, dofs.lift(), coeff, dofs)
    seq, grouping = hier if hier is not None else \
        hierarchy.decompose(mesh, mesh0)
    pspec = precond.build_spaces(seq, grouping, dofs, A)
    u = spla.spsolve(A.tocsc(), b)
    return Instance(eps=eps, mesh=mesh, dofs=dofs, A=A, b=b, u=u,
                    pspec=pspec)


def add_spectra(inst):
    """Dense spectra of both preconditioned operators.

    The congruence L^T B L is built column-by-column from the operator
    applications: B(L e_j) has norm ~ ||B||^(1/2) instead of ||B||, which
    keeps the eigenvalues accurate to ~1e-12 absolute even at coefficient
    jumps of 1e6 (forming the explicit B first and multiplying loses
    ~|jump| * machine-eps near the top of the spectrum)."""
    import scipy.linalg as sla
    if inst.n > DENSE_LIMIT:
        raise ValueError(f"n = {inst.n} exceeds the dense limit")
    L = sla.cholesky(inst.A.toarray(), lower=True)
    for family in ("bpx", "vcycle"):
        apply_fn = inst.apply(family)
        M = np.empty((inst.n, inst.n))
        for j in range(inst.n):
            M[:, j] = L.T @ apply_fn(np.ascontiguousarray(L[:, j]))
        ev = sla.eigvalsh(0.5 * (M + M.T))
        inst.spectra[family] = spectral.SpectrumReport(
            eigenvalues=ev, method="dense",
            m_candidates=spectral._detect_gap(ev))


@dataclass
class BenchmarkData:
    """Everything the acceptance tests share.

    ``hard`` holds one instance per mesh of the eps=1e-4 trajectory;
    ``dense_hard`` the indices of those that carry spectra.  ``tiny`` are
    the last four meshes of the eps=1e-6 trajectory.  ``sweep`` maps each
    eps of the matched-mesh sweep to an instance on the one fixed mesh
    (the largest eps=1e-4 mesh, re-assembled per eps).  ``iters`` has one
    dict per hard instance with the solver iteration counts; ``window``
    is (start, last) index of the trailing x16 dof range.
    """

    mesh0: object
    g_D: object
    m0: int
    hard: list
    dense_hard: list
    tiny: list
    sweep: dict
    iters: list
    cg_last: int
    window: tuple
    timings: dict

    def dense_instances(self):
        """Every instance that carries dense spectra, deduplicated."""
        out = [self.hard[i] for i in self.dense_hard] + list(self.tiny)
        out += [inst for eps, inst in sorted(self.sweep.items())
                if inst is not self.hard[-1]]
        return out


def _solver_counts(inst, maxit=50000, tol=1e-10):
    vc, bp = inst.apply("vcycle"), inst.apply("bpx")
    _, mg = solver.stationary_iterate(inst.A, inst.b, B=vc, tol=tol,
                                      maxit=maxit)
    _, mgcg = solver.pcg(inst.A, inst.b, B=vc, tol=tol, maxit=maxit)
    _, bpxcg = solver.pcg(inst.A, inst.b, B=bp, tol=tol, maxit=maxit)
    assert mg.converged and mgcg.converged and bpxcg.converged
    return {"n": inst.n, "tpsmg": mg.iterations, "tpsmgcg": mgcg.iterations,
            "tpsbpxcg": bpxcg.iterations}


@pytest.fixture(scope="session")
def jump_bench():
    timings = {}
    mesh0, g_D = experiments.jump_problem()
    m0 = experiments.count_floating_subdomains(mesh0)

    t0 = time.perf_counter()
    recs_hard = adapt.adaptive_solve(mesh0, jump_coefficient(EPS_HARD), 1.0,
                                     g_D=g_D, max_dof=BENCH_MAX_DOF)
    timings["trajectory_hard"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    recs_tiny = adapt.adaptive_solve(mesh0, jump_coefficient(EPS_TINY), 1.0,
                                     g_D=g_D, max_dof=BENCH_MAX_DOF)
    timings["trajectory_tiny"] = time.perf_counter() - t0

    hard = [build_instance(r.mesh, mesh0, EPS_HARD, g_D) for r in recs_hard]
    tiny = [build_instance(r.mesh, mesh0, EPS_TINY, g_D)
            for r in recs_tiny[-4:]]

    # trailing dof window spanning at least x16: the latest start that
    # still leaves a factor 16 to the final mesh
    n_last = hard[-1].n
    start = max((i for i, inst in enumerate(hard)
                 if 16 * inst.n <= n_last), default=0)
    window = (start, len(hard) - 1)
    dense_hard = sorted({start, len(hard) // 2, *range(len(hard) - 4,
                                                       len(hard))})

    for i in dense_hard:
        t0 = time.perf_counter()
        add_spectra(hard[i])
        timings[f"spectra_hard_{i}"] = time.perf_counter() - t0
    for i, inst in enumerate(tiny):
        t0 = time.perf_counter()
        add_spectra(inst)
        timings[f"spectra_tiny_{i}"] = time.perf_counter() - t0

    # matched-mesh sweep: the largest eps=1e-4 mesh, re-assembled per eps
    # (the hierarchy is coefficient-independent and reused)
    fixed = hard[-1]
    hier = hierarchy.decompose(fixed.mesh, mesh0)
    sweep = {}
    for eps in SWEEP_EPS:
        if eps == EPS_HARD:
            sweep[eps] = fixed
            continue
        inst = build_instance(fixed.mesh, mesh0, eps, g_D, hier=hier)
        t0 = time.perf_counter()
        add_spectra(inst)
        timings[f"spectra_sweep_{eps:g}"] = time.perf_counter() - t0
        sweep[eps] = inst

    t0 = time.perf_counter()
    iters = [_solver_counts(inst) for inst in hard]
    _, cg_report = solver.cg(hard[-1].A, hard[-1].b, tol=1e-10, maxit=200000)
    assert cg_report.converged
    timings["iterations"] = time.perf_counter() - t0

    return BenchmarkData(mesh0=mesh0, g_D=g_D, m0=m0, hard=hard,
                         dense_hard=dense_hard, tiny=tiny, sweep=sweep,
                         iters=iters, cg_last=cg_report.iterations,
                         window=window, timings=timings)
