"""Tests for conforming triangulations and newest-vertex bisection."""

import numpy as np
import pytest

from localmg import mesh as M


def unit_square_two_triangles(tmp_path, labels=(1, 1)):
    path = tmp_path / "square.txt"
    path.write_text(
        "4 2 {ns}\n"
        "0.0 0.0 1\n"
        "1.0 0.0 1\n"
        "1.0 1.0 1\n"
        "0.0 1.0 1\n"
        "0 1 2 {l0}\n"
        "0 2 3 {l1}\n".format(ns=len(set(labels)), l0=labels[0],
                              l1=labels[1]))
    return path


class TestLoadSave:
    def test_two_triangle_square_loads(self, tmp_path):
        mesh = M.load_initial_mesh(unit_square_two_triangles(tmp_path))
        assert mesh.nv == 4
        assert mesh.ne == 2
        assert (mesh.vgen == 0).all()
        assert (mesh.tgen == 0).all()
        assert M.check_conformity(mesh)

    def test_label_compatible_picks_the_diagonal(self, tmp_path):
        mesh = M.load_initial_mesh(unit_square_two_triangles(tmp_path))
        labeled = M.label_compatible(mesh)
        for e in range(2):
            edge = tuple(sorted(labeled.refinement_edges()[e]))
            assert edge == (0, 2)
        assert M.is_labeling_compatible(labeled)

    def test_roundtrip_is_exact(self, tmp_path):
        mesh = M.crisscross_grid(3, 2, (-1.0, 1.0), (0.0, 1.0))
        out = tmp_path / "m.txt"
        M.save_mesh(mesh, out)
        back = M.load_initial_mesh(out)
        assert np.array_equal(back.coords, mesh.coords)
        assert np.array_equal(back.vkind, mesh.vkind)
        assert np.array_equal(back.tri, mesh.tri)
        assert np.array_equal(back.subdom, mesh.subdom)

    def test_malformed_header_raises(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("4 two 1\n")
        with pytest.raises(M.MeshError):
            M.load_initial_mesh(p)

    def test_missing_subdomain_column_raises(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("3 1 1\n0 0 1\n1 0 1\n0 1 1\n0 1 2\n")
        with pytest.raises(M.MeshError):
            M.load_initial_mesh(p)

    def test_vertex_out_of_range_raises(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("3 1 1\n0 0 1\n1 0 1\n0 1 1\n0 1 7 1\n")
        with pytest.raises(M.MeshError):
            M.load_initial_mesh(p)

    def test_inverted_element_raises(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("3 1 1\n0 0 1\n1 0 1\n0 1 1\n0 2 1 1\n")
        with pytest.raises(M.MeshError, match="area"):
            M.load_initial_mesh(p)

    def test_hanging_vertex_raises(self, tmp_path):
        # vertex 4 splits the diagonal only on the upper-left side, so it
        # hangs on edge (0, 2) of the lower-right triangle
        p = tmp_path / "hang.txt"
        p.write_text(
            "5 3 1\n"
            "0.0 0.0 1\n"
            "1.0 0.0 1\n"
            "1.0 1.0 1\n"
            "0.0 1.0 1\n"
            "0.5 0.5 0\n"
            "0 1 2 1\n"
            "0 4 3 1\n"
            "4 2 3 1\n")
        with pytest.raises(M.MeshError, match="conform"):
            M.load_initial_mesh(p)


class TestLabeling:
    def test_incompatible_labeling_detected(self, tmp_path):
        mesh = M.load_initial_mesh(unit_square_two_triangles(tmp_path))
        # one triangle labeled on the shared diagonal, the other on a leg:
        # edge (0, 2) is the refinement edge of only one of its two elements
        tri = np.array([[1, 2, 0], [0, 2, 3]])
        bad = M.Triangulation(mesh.coords, mesh.vkind, mesh.vgen,
                              mesh.origin, tri, mesh.subdom, mesh.tgen)
        assert not M.is_labeling_compatible(bad)

    def test_refining_incompatible_labeling_raises(self, tmp_path):
        mesh = M.load_initial_mesh(unit_square_two_triangles(tmp_path))
        tri = np.array([[1, 2, 0], [0, 2, 3]])
        bad = M.Triangulation(mesh.coords, mesh.vkind, mesh.vgen,
                              mesh.origin, tri, mesh.subdom, mesh.tgen)
        with pytest.raises(M.LabelingError):
            for _ in range(4):
                bad = M.uniform_refine(bad)

    def test_crisscross_labels_on_diagonals(self):
        mesh = M.crisscross_grid(2, 2)
        # every refinement edge connects a cluster center to a corner
        counts = np.bincount(mesh.tri.ravel(), minlength=mesh.nv)
        centers = set(np.flatnonzero((counts == 4)
                                     & ~mesh.boundary_vertex_mask()))
        for a, b in mesh.refinement_edges():
            assert (int(a) in centers) != (int(b) in centers)
        assert M.is_labeling_compatible(mesh)

    def test_label_compatible_rejects_refined_meshes(self):
        mesh = M.uniform_refine(M.crisscross_grid(1, 1))
        with pytest.raises(M.LabelingError):
            M.label_compatible(mesh)


class TestBisect:
    def test_children_replace_parent(self):
        mesh = M.crisscross_grid(1, 1)
        out, new_vid = M.bisect(mesh, 0)
        assert out.nv == mesh.nv + 1
        assert out.ne == mesh.ne + 1
        assert new_vid == mesh.nv
        # midpoint coordinates are the exact average of the edge endpoints
        a, b = mesh.refinement_edges()[0]
        assert np.array_equal(out.coords[new_vid],
                              (mesh.coords[a] + mesh.coords[b]) / 2.0)
        assert tuple(out.origin[new_vid]) in ((a, b), (b, a))

    def test_newest_vertex_first_and_ccw(self):
        mesh = M.crisscross_grid(2, 3)
        for _ in range(3):
            mesh = M.uniform_refine(mesh)
        assert (mesh.element_areas() > 0).all()
        gen1 = mesh.tgen >= 1
        assert (mesh.vgen[mesh.tri[gen1, 0]] == mesh.tgen[gen1]).all()

    def test_neighbor_bisection_reuses_midpoint(self):
        mesh = M.crisscross_grid(1, 1)
        once, vid1 = M.bisect(mesh, 0)
        # element 0's refinement edge is interior, shared with one neighbor
        # that carries the same refinement edge; find it in `once`
        reg = once.split_edge_registry()
        (edge, mid), = reg.items()
        assert mid == vid1
        partner = [e for e, (a, b) in enumerate(once.refinement_edges())
                   if tuple(sorted((a, b))) == edge]
        assert len(partner) == 1
        twice, vid2 = M.bisect(once, partner[0])
        assert vid2 == vid1
        assert twice.nv == once.nv
        assert M.check_conformity(twice)

    def test_vertex_generation_bookkeeping(self):
        mesh = M.crisscross_grid(1, 1)
        out, vid = M.bisect(mesh, 0)
        assert out.vgen[vid] == 1
        assert (out.tgen[-2:] == 1).all()


class TestRefine:
    def test_single_mark_completes_to_six_elements(self):
        mesh = M.crisscross_grid(1, 1)
        out = M.refine(mesh, [0])
        assert out.ne == 6
        assert out.nv == 6
        assert M.check_conformity(out)

    def test_all_marked_equals_uniform(self):
        mesh = M.crisscross_grid(2, 2)
        a = M.refine(mesh, range(mesh.ne))
        b = M.uniform_refine(mesh)
        assert a.nv == b.nv
        assert np.array_equal(a.coords, b.coords)
        tri_a = {tuple(sorted(t)) for t in a.tri}
        tri_b = {tuple(sorted(t)) for t in b.tri}
        assert tri_a == tri_b

    def test_marked_elements_are_bisected(self):
        mesh = M.crisscross_grid(2, 2)
        marked = [3, 7, 11]
        out = M.refine(mesh, marked)
        survivors = {tuple(sorted(t)) for t in out.tri}
        for eid in marked:
            assert tuple(sorted(mesh.tri[eid])) not in survivors

    def test_refine_stays_conforming_under_random_marking(self):
        rng = np.random.default_rng(7)
        mesh = M.crisscross_grid(2, 2)
        for _ in range(6):
            k = max(1, mesh.ne // 5)
            marked = rng.choice(mesh.ne, size=k, replace=False)
            mesh = M.refine(mesh, marked)
            assert M.check_conformity(mesh)
            assert (mesh.element_areas() > 0).all()
        assert mesh.ne > 4 * 4

    def test_empty_marking_is_identity(self):
        mesh = M.crisscross_grid(2, 2)
        out = M.refine(mesh, [])
        assert out.ne == mesh.ne
        assert np.array_equal(out.tri, mesh.tri)

    def test_out_of_range_mark_raises(self):
        mesh = M.crisscross_grid(1, 1)
        with pytest.raises(M.MeshError):
            M.refine(mesh, [99])


class TestUniformRefine:
    def test_doubles_elements_on_compatible_mesh(self):
        mesh = M.crisscross_grid(8, 8, (-1, 1), (-1, 1))
        out = M.uniform_refine(mesh)
        assert out.ne == 2 * mesh.ne
        assert M.check_conformity(out)

    def test_area_halves_exactly_with_generation(self):
        mesh = M.crisscross_grid(1, 1)
        a0 = float(mesh.element_areas()[0])
        for _ in range(8):
            mesh = M.uniform_refine(mesh)
        assert np.all(mesh.element_areas() * 2.0 ** mesh.tgen == a0)

    def test_works_on_adaptive_meshes(self):
        rng = np.random.default_rng(3)
        mesh = M.crisscross_grid(2, 2)
        for _ in range(3):
            marked = rng.choice(mesh.ne, size=mesh.ne // 4 + 1, replace=False)
            mesh = M.refine(mesh, marked)
        before = {tuple(sorted(t)) for t in mesh.tri}
        out = M.uniform_refine(mesh)
        assert M.check_conformity(out)
        after = {tuple(sorted(t)) for t in out.tri}
        assert not (before & after)  # every element was bisected
        assert out.ne >= 2 * mesh.ne


class TestShapeRegularity:
    def test_min_angle_repeats_across_similarity_period(self):
        mesh = M.crisscross_grid(1, 1)
        levels = [mesh]
        for _ in range(8):
            levels.append(M.uniform_refine(levels[-1]))
        assert M.min_angle(levels[4]) == pytest.approx(
            M.min_angle(levels[8]), abs=0.0)

    def test_min_angle_bounded_below(self):
        mesh = M.crisscross_grid(1, 1)
        floor = None
        for _ in range(8):
            mesh = M.uniform_refine(mesh)
            ang = M.min_angle(mesh)
            floor = ang if floor is None else min(floor, ang)
        assert floor > np.arctan(1 / 3) - 1e-12

    def test_min_angle_is_in_radians(self):
        mesh = M.crisscross_grid(1, 1)
        # criss-cross triangles are right isosceles: smallest angle pi/4
        assert M.min_angle(mesh) == pytest.approx(np.pi / 4, rel=1e-14)


class TestConformity:
    def test_detects_hanging_vertex_geometrically(self):
        coords = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0],
                           [0.5, 0.5]])
        vkind = np.array([1, 1, 1, 1, 0])
        tri = np.array([[0, 1, 2], [0, 4, 3], [4, 2, 3]])
        # drop the hanging-node configuration into a raw Triangulation
        mesh = M.Triangulation(coords, vkind, np.zeros(5), np.full((5, 2), -1),
                               tri, np.ones(3), np.zeros(3))
        assert not M.check_conformity(mesh)

    def test_detects_overshared_edge(self):
        coords = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 1.0], [0.5, -1.0],
                           [1.5, 1.0]])
        tri = np.array([[0, 1, 2], [1, 0, 3], [0, 1, 4]])
        with np.errstate(all="ignore"):
            mesh = M.Triangulation(coords, np.ones(5), np.zeros(5),
                                   np.full((5, 2), -1), tri,
                                   np.ones(3), np.zeros(3), validate=False)
        assert not M.check_conformity(mesh)

    def test_refined_mesh_passes(self):
        mesh = M.uniform_refine(M.crisscross_grid(2, 2))
        assert M.check_conformity(mesh)


class TestGridGenerator:
    def test_eight_by_eight_counts(self):
        mesh = M.crisscross_grid(8, 8, (-1, 1), (-1, 1),
                                 dirichlet=lambda x, y: abs(abs(x) - 1) < 1e-12)
        assert mesh.nv == 145  # 81 corners + 64 centers
        assert mesh.ne == 256
        assert int((mesh.vkind == M.DIRICHLET).sum()) == 18
        assert int((mesh.vkind == M.NEUMANN).sum()) == 14
        assert M.check_conformity(mesh)

    def test_subdomain_labels_from_centroids(self):
        mesh = M.crisscross_grid(2, 2, (-1, 1), (-1, 1),
                                 subdomain=lambda x, y: 2 if x > 0 else 1)
        cent = mesh.coords[mesh.tri].mean(axis=1)
        assert ((mesh.subdom == 2) == (cent[:, 0] > 0)).all()

    def test_boundary_midpoints_inherit_edge_kind(self):
        mesh = M.crisscross_grid(2, 2, (-1, 1), (-1, 1),
                                 dirichlet=lambda x, y: abs(abs(x) - 1) < 1e-12)
        out = M.uniform_refine(M.uniform_refine(mesh))
        for p in range(mesh.nv, out.nv):
            x, y = out.coords[p]
            k = out.vkind[p]
            if abs(abs(x) - 1) < 1e-12:
                assert k == M.DIRICHLET
            elif abs(abs(y) - 1) < 1e-12:
                assert k == M.NEUMANN
            else:
                assert k == M.INTERIOR

    def test_immutability(self):
        mesh = M.crisscross_grid(1, 1)
        with pytest.raises(ValueError):
            mesh.coords[0, 0] = 7.0
