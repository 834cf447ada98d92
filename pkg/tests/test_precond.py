"""Tests for the multilevel preconditioner module."""

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp

from localmg import fem, hierarchy, mesh, precond


def island_grid(nx=4):
    """Criss-cross grid on (-1,1)^2 with two interior subdomain islands and
    Dirichlet conditions on the x = +-1 sides."""

    def subdom(cx, cy):
        lab = np.full(cx.shape, 3, dtype=int)
        lab[(cx > -0.5) & (cx < 0.0) & (cy > -0.5) & (cy < 0.0)] = 1
        lab[(cx > 0.0) & (cx < 0.5) & (cy > 0.0) & (cy < 0.5)] = 2
        return lab

    def diri(x, y):
        return np.abs(np.abs(x) - 1.0) < 1e-12

    return mesh.crisscross_grid(nx, nx, xlim=(-1.0, 1.0), ylim=(-1.0, 1.0),
                                subdomain=subdom, dirichlet=diri)


def build_problem(refines=3, seed=3, eps=1e-4, include_nodal=True):
    m0 = island_grid()
    m = m0
    rng = np.random.default_rng(seed)
    for _ in range(refines):
        marked = np.flatnonzero(rng.random(m.ne) < 0.3)
        m = mesh.refine(m, marked)
    coeff = fem.CoefficientField({1: 1.0, 2: 1.0, 3: eps})
    dofs = fem.dof_map(m)
    A = fem.assemble_stiffness(m, coeff, dofs)
    seq, grouping = hierarchy.decompose(m, m0)
    spec = precond.build_spaces(seq, grouping, dofs, A,
                                include_nodal=include_nodal)
    return m0, m, dofs, A, seq, grouping, spec


@pytest.fixture(scope="module")
def problem():
    return build_problem()


def dense_inverse(A):
    return sla.inv(A.toarray())


class TestBuildSpaces:
    def test_subspace_ordering(self, problem):
        *_, spec = problem
        kinds = [s.kind for s in spec.subspaces]
        assert kinds[0] == precond.COARSE
        n3 = spec.num_threepoint
        assert all(k == precond.THREEPOINT for k in kinds[1:1 + n3])
        assert all(k == precond.FINEST_NODAL for k in kinds[1 + n3:])
        nodal = [s.dof_ids[0] for s in spec.subspaces[1 + n3:]]
        assert nodal == sorted(nodal)

    def test_threepoint_counts(self, problem):
        _, m, dofs, A, seq, _, spec = problem
        nonempty = sum(
            1 for it in seq.items
            if any(dofs.index[v] >= 0
                   for v in (it.midpoint, *it.endpoints)))
        assert spec.num_threepoint == nonempty
        assert spec.num_threepoint <= len(seq)

    def test_dof_total_bound(self, problem):
        m0, m, dofs, A, seq, _, spec = problem
        n = A.shape[0]
        n0 = spec.W0.shape[1]
        total = sum(len(s.dof_ids) for s in spec.subspaces)
        assert total <= 3 * len(seq) + n + n0
        assert spec.dof_total == n + total

    def test_subspaces_independent_of_coefficient(self, problem):
        m0, m, dofs, A, seq, grouping, spec = problem
        coeff2 = fem.CoefficientField({1: 50.0, 2: 1e-3, 3: 7.0})
        A2 = fem.assemble_stiffness(m, coeff2, dofs)
        spec2 = precond.build_spaces(seq, grouping, dofs, A2)
        ids1 = [(s.kind, tuple(s.dof_ids), s.level) for s in spec.subspaces]
        ids2 = [(s.kind, tuple(s.dof_ids), s.level) for s in spec2.subspaces]
        assert ids1 == ids2

    def test_local_matrices_spd(self, problem):
        *_, spec = problem
        for i in range(len(spec.subspaces)):
            M = spec.local_matrix(i)
            np.testing.assert_allclose(M, M.T, atol=1e-14 * abs(M).max())
            assert sla.eigvalsh(M).min() > 0.0

    def test_threepoint_matrices_are_galerkin(self, problem):
        *_, A, _, _, spec = problem
        # The stored 3x3 blocks must equal W_i^T A W_i for the stored
        # coarse-hat columns, not principal submatrices of A.
        col = 0
        for i, s in enumerate(spec.subspaces):
            if s.kind != precond.THREEPOINT:
                continue
            k = len(s.dof_ids)
            W = spec.W3[:, col:col + k].toarray()
            np.testing.assert_allclose(spec.local_matrix(i), W.T @ (A @ W),
                                       rtol=1e-12, atol=1e-14)
            col += k

    def test_coarse_hats_on_uniform_square(self, tmp_path):
        # Two bisection sweeps of the unit square; the coarse hat at the
        # free corner (0,0) interpolates to 1/2 at the midpoints of its
        # incident coarse edges and at the diagonal midpoint.
        path = tmp_path / "square.mesh"
        path.write_text(
            "4 2 1\n"
            "0.0 0.0 0\n1.0 0.0 1\n1.0 1.0 1\n0.0 1.0 0\n"
            "0 1 2 1\n0 2 3 1\n")
        m0 = mesh.load_initial_mesh(path)
        m = mesh.uniform_refine(mesh.uniform_refine(m0))
        coeff = fem.CoefficientField({1: 1.0})
        dofs = fem.dof_map(m)
        A = fem.assemble_stiffness(m, coeff, dofs)
        seq, grouping = hierarchy.decompose(m, m0)
        spec = precond.build_spaces(seq, grouping, dofs, A)
        free_coarse = [v for v in range(m0.nv) if m0.vkind[v] != mesh.DIRICHLET]
        j = free_coarse.index(0)
        hat = np.zeros(m.nv)
        hat[dofs.free] = spec.W0[:, j].toarray().ravel()
        expect = {(0.0, 0.0): 1.0, (0.5, 0.5): 0.5,
                  (0.5, 0.0): 0.5, (0.0, 0.5): 0.5}
        for v in range(m.nv):
            key = (m.coords[v, 0], m.coords[v, 1])
            assert hat[v] == expect.get(key, 0.0)

    def test_singular_operator_rejected(self, problem):
        m0, m, dofs, A, seq, grouping, _ = problem
        bad = A.tolil()
        k = dofs.index[seq.items[-1].midpoint]
        bad[k, :] = 0.0
        bad[:, k] = 0.0
        with pytest.raises(ValueError):
            precond.build_spaces(seq, grouping, dofs, bad.tocsr())


class TestApplies:
    def test_coarse_only_is_exact_inverse(self):
        m0 = island_grid()
        coeff = fem.CoefficientField({1: 1.0, 2: 1.0, 3: 1e-4})
        dofs = fem.dof_map(m0)
        A = fem.assemble_stiffness(m0, coeff, dofs)
        seq, grouping = hierarchy.decompose(m0, m0)
        spec = precond.build_spaces(seq, grouping, dofs, A,
                                    include_nodal=False)
        rng = np.random.default_rng(0)
        r = rng.standard_normal(A.shape[0])
        exact = sla.solve(A.toarray(), r)
        for apply_fn in (precond.bpx_apply, precond.vcycle_apply):
            got = apply_fn(spec, r)
            np.testing.assert_allclose(got, exact, rtol=1e-10)

    def test_zero_maps_to_zero(self, problem):
        *_, spec = problem
        z = np.zeros(spec.n)
        assert not precond.bpx_apply(spec, z).any()
        assert not precond.vcycle_apply(spec, z).any()

    def test_wrong_shape_rejected(self, problem):
        *_, spec = problem
        with pytest.raises(ValueError):
            precond.bpx_apply(spec, np.zeros(spec.n + 1))
        with pytest.raises(ValueError):
            precond.vcycle_apply(spec, np.zeros(spec.n + 1))

    def test_explicit_matches_apply_columns(self, problem):
        *_, spec = problem
        rng = np.random.default_rng(5)
        cols = rng.integers(0, spec.n, size=20)
        for which, apply_fn in (("bpx", precond.bpx_apply),
                                ("vcycle", precond.vcycle_apply)):
            B = precond.assemble_explicit(spec, which)
            for j in cols:
                e = np.zeros(spec.n)
                e[j] = 1.0
                got = apply_fn(spec, e)
                scale = np.linalg.norm(B[:, j])
                assert np.linalg.norm(got - B[:, j]) <= 1e-12 * scale

    def test_bpx_closed_form_agrees(self, problem):
        *_, spec = problem
        B = precond.assemble_explicit(spec, "bpx")
        C = precond._bpx_closed_form(spec)
        assert np.abs(B - C).max() <= 1e-12 * np.abs(C).max()

    def test_vcycle_batched_agrees(self, problem):
        *_, spec = problem
        B = precond.assemble_explicit(spec, "vcycle")
        C = precond._vcycle_batched(spec, np.eye(spec.n))
        assert np.abs(B - C).max() <= 1e-12 * np.abs(C).max()

    def test_explicit_symmetric_positive(self, problem):
        *_, spec = problem
        for which in ("bpx", "vcycle"):
            B = precond.assemble_explicit(spec, which)
            assert np.abs(B - B.T).max() <= 1e-12 * np.abs(B).max()
            assert sla.eigvalsh(0.5 * (B + B.T)).min() > 0.0

    def test_operator_symmetry_random_pairs(self, problem):
        *_, spec = problem
        rng = np.random.default_rng(11)
        for which, apply_fn in (("bpx", precond.bpx_apply),
                                ("vcycle", precond.vcycle_apply)):
            for _ in range(100):
                x = rng.standard_normal(spec.n)
                y = rng.standard_normal(spec.n)
                bx = apply_fn(spec, x)
                by = apply_fn(spec, y)
                lhs = x @ by
                rhs = y @ bx
                assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), abs(rhs))

    def test_vcycle_spectrum_ceiling(self, problem):
        *_, A, _, _, spec = problem
        B = precond.assemble_explicit(spec, "vcycle")
        L = sla.cholesky(A.toarray(), lower=True)
        M = L.T @ B @ L
        ev = sla.eigvalsh(0.5 * (M + M.T))
        assert ev.max() <= 1.0 + 1e-10
        assert ev.min() > 0.0

    def test_dense_limit_guard(self, problem):
        *_, spec = problem
        with pytest.raises(ValueError, match="dense limit"):
            precond.assemble_explicit(spec, "vcycle", dense_limit=spec.n - 1)
        with pytest.raises(ValueError, match="kind"):
            precond.assemble_explicit(spec, "ssor")


class TestApplyLog:
    def test_work_bound(self, problem):
        *_, spec = problem
        spec.log.reset()
        r = np.ones(spec.n)
        precond.bpx_apply(spec, r)
        assert spec.log.applies == 1
        assert spec.log.float_work <= 64 * spec.dof_total
        spec.log.reset()
        precond.vcycle_apply(spec, r)
        assert spec.log.applies == 1
        assert spec.log.float_work <= 64 * spec.dof_total

    def test_vcycle_correction_count(self, problem):
        *_, spec = problem
        spec.log.reset()
        precond.vcycle_apply(spec, np.ones(spec.n))
        expect = 2 * (spec.n + spec.num_threepoint) + 1
        assert spec.log.subspace_corrections == expect
