"""Conforming 2D triangulations refined by newest-vertex bisection.

A mesh is a flat array value: vertex coordinates plus per-vertex metadata,
and element connectivity plus per-element metadata.  Every element stores
its *newest* vertex at local index 0, so the refinement edge is always the
edge opposite local vertex 0, i.e. ``(tri[e, 1], tri[e, 2])``.  Bisecting an
element with vertices ``(v0, v1, v2)`` at the midpoint ``m`` of its
refinement edge produces the children ``(m, v0, v1)`` and ``(m, v2, v0)``,
which preserves orientation and keeps the newest-vertex convention.

Refinement only appends vertices and elements; existing vertices are never
renumbered, so the vertex numbering of a mesh is a prefix of the numbering
of every mesh refined from it.  Midpoints are identified by the id pair of
the edge they split (stored per vertex in ``origin``), never by comparing
coordinates.

Triangulation values are immutable snapshots: all arrays are marked
read-only, and the refinement operations return new values.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "INTERIOR",
    "DIRICHLET",
    "NEUMANN",
    "MeshError",
    "LabelingError",
    "Triangulation",
    "load_initial_mesh",
    "save_mesh",
    "crisscross_grid",
    "label_compatible",
    "is_labeling_compatible",
    "bisect",
    "refine",
    "uniform_refine",
    "check_conformity",
    "min_angle",
    "areas",
    "diameters",
]

# Vertex boundary kinds.
INTERIOR = 0
DIRICHLET = 1
NEUMANN = 2

_VALID_KINDS = (INTERIOR, DIRICHLET, NEUMANN)


class MeshError(Exception):
    """Invalid mesh data: bad indices, inverted elements, nonconformity."""


class LabelingError(MeshError):
    """Refinement-edge labeling violates the compatibility requirements."""


class Triangulation:
    """Immutable snapshot of a conforming triangle mesh.

    Parameters
    ----------
    coords : (nv, 2) float array
        Vertex coordinates.
    vkind : (nv,) int array
        Boundary kind per vertex: INTERIOR, DIRICHLET or NEUMANN.
    vgen : (nv,) int array
        Vertex generation: 0 for initial vertices, otherwise one more than
        the generation of the elements whose refinement edge the vertex
        bisected.
    origin : (nv, 2) int array
        For a midpoint vertex, the ids of the two endpoints of the edge it
        split; ``(-1, -1)`` for initial vertices.
    tri : (ne, 3) int array
        Element connectivity, newest vertex first, counter-clockwise.
    subdom : (ne,) int array
        Subdomain label per element (inherited under refinement).
    tgen : (ne,) int array
        Element generation: 0 for initial elements, parent's + 1 for
        children.
    """

    __slots__ = ("coords", "vkind", "vgen", "origin", "tri", "subdom",
                 "tgen", "_edge_elems", "_areas")

    def __init__(self, coords, vkind, vgen, origin, tri, subdom, tgen,
                 validate=True):
        self.coords = np.ascontiguousarray(coords, dtype=np.float64)
        self.vkind = np.ascontiguousarray(vkind, dtype=np.int32)
        self.vgen = np.ascontiguousarray(vgen, dtype=np.int32)
        self.origin = np.ascontiguousarray(origin, dtype=np.int64)
        self.tri = np.ascontiguousarray(tri, dtype=np.int64)
        self.subdom = np.ascontiguousarray(subdom, dtype=np.int32)
        self.tgen = np.ascontiguousarray(tgen, dtype=np.int32)
        for a in (self.coords, self.vkind, self.vgen, self.origin,
                  self.tri, self.subdom, self.tgen):
            a.setflags(write=False)
        self._edge_elems = None
        self._areas = None
        if validate:
            self._validate()

    # -- basic queries ---------------------------------------------------

    @property
    def nv(self):
        """Number of vertices."""
        return self.coords.shape[0]

    @property
    def ne(self):
        """Number of elements."""
        return self.tri.shape[0]

    def refinement_edges(self):
        """(ne, 2) array of refinement-edge vertex pairs (v1, v2)."""
        return self.tri[:, 1:3]

    def edge_elements(self):
        """Map from sorted edge pair to the tuple of incident element ids."""
        if self._edge_elems is None:
            edge_elems = {}
            tri = self.tri
            for e in range(tri.shape[0]):
                v0, v1, v2 = tri[e]
                for a, b in ((v0, v1), (v1, v2), (v2, v0)):
                    key = (a, b) if a < b else (b, a)
                    edge_elems.setdefault(key, []).append(e)
            self._edge_elems = {k: tuple(v) for k, v in edge_elems.items()}
        return self._edge_elems

    def element_areas(self):
        """(ne,) array of (signed, positive for CCW) element areas."""
        if self._areas is None:
            p = self.coords[self.tri]
            d1 = p[:, 1] - p[:, 0]
            d2 = p[:, 2] - p[:, 0]
            areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
            areas.setflags(write=False)
            self._areas = areas
        return self._areas

    def boundary_vertex_mask(self):
        """Boolean mask of vertices lying on a boundary edge."""
        mask = np.zeros(self.nv, dtype=bool)
        for (a, b), elems in self.edge_elements().items():
            if len(elems) == 1:
                mask[a] = True
                mask[b] = True
        return mask

    def split_edge_registry(self):
        """Map (a, b) -> midpoint id for every edge ever split, id-based."""
        reg = {}
        origin = self.origin
        for p in range(self.nv):
            a, b = origin[p]
            if a >= 0:
                reg[(a, b) if a < b else (b, a)] = p
        return reg

    # -- validation -------------------------------------------------------

    def _validate(self):
        nv, ne = self.nv, self.ne
        if self.coords.ndim != 2 or self.coords.shape[1] != 2:
            raise MeshError("coords must have shape (nv, 2)")
        if self.tri.ndim != 2 or self.tri.shape[1] != 3:
            raise MeshError("tri must have shape (ne, 3)")
        for name, arr, n in (("vkind", self.vkind, nv),
                             ("vgen", self.vgen, nv),
                             ("origin", self.origin, nv),
                             ("subdom", self.subdom, ne),
                             ("tgen", self.tgen, ne)):
            if arr.shape[0] != n:
                raise MeshError(f"{name} has wrong length")
        if ne == 0 or nv == 0:
            raise MeshError("mesh must contain vertices and elements")
        if self.tri.min() < 0 or self.tri.max() >= nv:
            raise MeshError("element references vertex out of range")
        if not np.isin(self.vkind, _VALID_KINDS).all():
            raise MeshError("invalid vertex boundary kind")
        used = np.zeros(nv, dtype=bool)
        used[self.tri] = True
        if not used.all():
            raise MeshError("mesh has vertices not referenced by any element")
        a = self.element_areas()
        if not (a > 0).all():
            bad = int(np.argmin(a))
            raise MeshError(
                f"element {bad} has non-positive area {a[bad]:.3e} "
                "(vertices must be counter-clockwise)")
        same = self.tri[:, [0, 1]] == self.tri[:, [1, 2]]
        if same.any() or (self.tri[:, 0] == self.tri[:, 2]).any():
            raise MeshError("element with repeated vertex")


# ---------------------------------------------------------------------------
# mutable builder used by all refinement / replay operations
# ---------------------------------------------------------------------------


class _Builder:
    """Append-only mutable view of a mesh during refinement.

    Elements are tombstoned (``alive`` flag) rather than removed, so element
    ids stay valid while an operation runs; snapshots compact the alive
    elements in creation order.
    """

    def __init__(self, mesh: Triangulation):
        self.coords = [tuple(xy) for xy in mesh.coords]
        self.vkind = list(mesh.vkind)
        self.vgen = list(mesh.vgen)
        self.origin = [tuple(ab) for ab in mesh.origin]
        self.tri = [tuple(t) for t in mesh.tri]
        self.subdom = list(mesh.subdom)
        self.tgen = list(mesh.tgen)
        self.alive = list(np.ones(mesh.ne, dtype=bool))
        self.n_initial = mesh.ne
        # edge -> list of alive incident element ids
        self.edge_elems = {}
        for e, (v0, v1, v2) in enumerate(self.tri):
            for a, b in ((v0, v1), (v1, v2), (v2, v0)):
                self.edge_elems.setdefault(_key(a, b), []).append(e)
        # split edge -> midpoint id (id-based, derived from vertex origins)
        self.midpoints = mesh.split_edge_registry()

    # -- queries ----------------------------------------------------------

    def ref_edge(self, eid):
        t = self.tri[eid]
        return _key(t[1], t[2])

    def neighbor_across_ref_edge(self, eid):
        """The other alive element incident to eid's refinement edge."""
        for other in self.edge_elems.get(self.ref_edge(eid), ()):
            if other != eid and self.alive[other]:
                return other
        return None

    # -- mutations ----------------------------------------------------------

    def new_vertex(self, xy, kind, gen, origin):
        self.coords.append(xy)
        self.vkind.append(kind)
        self.vgen.append(gen)
        self.origin.append(origin)
        return len(self.coords) - 1

    def bisect_edge(self, edge, eids):
        """Split ``edge`` and bisect the given incident elements at it.

        Returns the midpoint vertex id (reused if the edge was already
        split by an earlier bisection).
        """
        a, b = edge
        m = self.midpoints.get(edge)
        if m is None:
            gen = self.tgen[eids[0]] + 1
            incident = self.edge_elems.get(edge, ())
            n_alive = sum(1 for e in incident if self.alive[e])
            if n_alive == 1:
                ka, kb = self.vkind[a], self.vkind[b]
                kind = DIRICHLET if (ka == DIRICHLET and kb == DIRICHLET) \
                    else NEUMANN
            else:
                kind = INTERIOR
            xa, ya = self.coords[a]
            xb, yb = self.coords[b]
            m = self.new_vertex(((xa + xb) / 2.0, (ya + yb) / 2.0),
                                kind, gen, (a, b))
            self.midpoints[edge] = m
        for eid in eids:
            if self.tgen[eid] + 1 != self.vgen[m]:
                raise LabelingError(
                    "elements of unequal generation share a refinement "
                    f"edge {edge}; the initial labeling is not compatible")
            self._split_element(eid, m)
        return m

    def _split_element(self, eid, m):
        v0, v1, v2 = self.tri[eid]
        if _key(v1, v2) != _key(*self.origin[m]):
            raise MeshError(
                f"midpoint {m} does not belong to the refinement edge of "
                f"element {eid}")
        self.alive[eid] = False
        for a, b in ((v0, v1), (v1, v2), (v2, v0)):
            lst = self.edge_elems[_key(a, b)]
            lst.remove(eid)
            if not lst:
                del self.edge_elems[_key(a, b)]
        gen = self.tgen[eid] + 1
        sub = self.subdom[eid]
        self._append_element((m, v0, v1), sub, gen)
        self._append_element((m, v2, v0), sub, gen)

    def _append_element(self, verts, sub, gen):
        eid = len(self.tri)
        self.tri.append(verts)
        self.subdom.append(sub)
        self.tgen.append(gen)
        self.alive.append(True)
        v0, v1, v2 = verts
        for a, b in ((v0, v1), (v1, v2), (v2, v0)):
            self.edge_elems.setdefault(_key(a, b), []).append(eid)
        return eid

    def conforming_bisect(self, eid):
        """Bisect ``eid`` keeping the mesh conforming.

        If the neighbour across the refinement edge does not share that
        edge as its own refinement edge, the neighbour is made compatible
        first (the recursive completion step); each actual split is an
        atomic bisection of a compatible edge patch, so the mesh is
        conforming after every split.
        """
        stack = [eid]
        while stack:
            if len(stack) > self.n_initial + 1:
                raise LabelingError(
                    "completion recursion exceeded the element count; "
                    "the initial labeling is not compatible")
            t = stack[-1]
            if not self.alive[t]:
                stack.pop()
                continue
            edge = self.ref_edge(t)
            nbr = self.neighbor_across_ref_edge(t)
            if nbr is None or self.ref_edge(nbr) == edge:
                patch = [t] if nbr is None else [t, nbr]
                self.bisect_edge(edge, patch)
                stack.pop()
            else:
                stack.append(nbr)

    def resolve_hanging(self):
        """Bisect elements until no split edge remains a full edge.

        No-op on meshes refined through compatible atomic patches; needed
        after the exactly-once pass of uniform refinement on meshes whose
        edge patches are not all compatible.
        """
        while True:
            work = None
            for edge, mid in self.midpoints.items():
                incident = self.edge_elems.get(edge)
                if incident:
                    work = (edge, [e for e in incident if self.alive[e]])
                    break
            if work is None:
                return
            edge, eids = work
            for eid in eids:
                if not self.alive[eid]:
                    continue
                if self.ref_edge(eid) == edge:
                    self.bisect_edge(edge, [eid])
                else:
                    self.conforming_bisect(eid)

    # -- snapshot -----------------------------------------------------------

    def to_triangulation(self):
        keep = [e for e, ok in enumerate(self.alive) if ok]
        return Triangulation(
            np.asarray(self.coords, dtype=np.float64),
            np.asarray(self.vkind, dtype=np.int32),
            np.asarray(self.vgen, dtype=np.int32),
            np.asarray(self.origin, dtype=np.int64),
            np.asarray([self.tri[e] for e in keep], dtype=np.int64),
            np.asarray([self.subdom[e] for e in keep], dtype=np.int32),
            np.asarray([self.tgen[e] for e in keep], dtype=np.int32),
            validate=False)


def _key(a, b):
    return (a, b) if a < b else (b, a)


# ---------------------------------------------------------------------------
# i/o
# ---------------------------------------------------------------------------


def load_initial_mesh(path):
    """Read an initial mesh from a plain-text file.

    Format: a header line ``nv ne ns``; nv lines ``x y boundary_kind``;
    ne lines ``v0 v1 v2 subdomain`` with 0-based vertex indices.  The mesh
    must be conforming, counter-clockwise and fully labeled by subdomain;
    violations raise MeshError with a description of the defect.
    """
    with open(path, "r", encoding="utf-8") as fh:
        tokens = fh.read().split()
    if len(tokens) < 3:
        raise MeshError(f"{path}: missing header 'nv ne ns'")
    try:
        nv, ne, ns = (int(t) for t in tokens[:3])
    except ValueError as exc:
        raise MeshError(f"{path}: malformed header: {exc}") from exc
    need = 3 + 3 * nv + 4 * ne
    if len(tokens) != need:
        raise MeshError(
            f"{path}: expected {need} whitespace-separated values for "
            f"nv={nv}, ne={ne}, found {len(tokens)}")
    body = tokens[3:]
    try:
        coords = np.array(
            [[float(body[3 * i]), float(body[3 * i + 1])] for i in range(nv)])
        vkind = np.array([int(body[3 * i + 2]) for i in range(nv)])
        off = 3 * nv
        rows = [[int(body[off + 4 * i + j]) for j in range(4)]
                for i in range(ne)]
    except ValueError as exc:
        raise MeshError(f"{path}: malformed entry: {exc}") from exc
    rows = np.asarray(rows)
    tri, subdom = rows[:, :3], rows[:, 3]
    if not np.isin(vkind, _VALID_KINDS).all():
        raise MeshError(f"{path}: boundary kind must be 0, 1 or 2")
    if len(np.unique(subdom)) != ns:
        raise MeshError(
            f"{path}: header declares {ns} subdomains, file uses "
            f"{len(np.unique(subdom))}")
    mesh = Triangulation(coords, vkind, np.zeros(nv, dtype=np.int32),
                         np.full((nv, 2), -1, dtype=np.int64),
                         tri, subdom, np.zeros(ne, dtype=np.int32))
    if not check_conformity(mesh):
        raise MeshError(f"{path}: mesh is not conforming (hanging vertex "
                        "or edge shared by more than two elements)")
    return mesh


def save_mesh(mesh, path):
    """Write a mesh in the format read by load_initial_mesh.

    Generation and origin metadata are not part of the format; a reloaded
    mesh is a valid *initial* mesh with the same geometry and labels.
    """
    lines = [f"{mesh.nv} {mesh.ne} {len(np.unique(mesh.subdom))}"]
    for (x, y), k in zip(mesh.coords, mesh.vkind):
        lines.append(f"{float(x)!r} {float(y)!r} {k}")
    for (v0, v1, v2), s in zip(mesh.tri, mesh.subdom):
        lines.append(f"{v0} {v1} {v2} {s}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def crisscross_grid(nx, ny, xlim=(0.0, 1.0), ylim=(0.0, 1.0),
                    subdomain=None, dirichlet=None):
    """Criss-cross triangulation of a rectangle, labeled compatibly.

    Each of the nx*ny grid squares is split into 4 triangles around its
    center.  ``subdomain`` maps an element centroid ``(x, y)`` to an integer
    label (default: all 1).  ``dirichlet`` maps boundary vertex coordinates
    to True for Dirichlet (default: whole boundary Dirichlet).
    """
    x = np.linspace(xlim[0], xlim[1], nx + 1)
    y = np.linspace(ylim[0], ylim[1], ny + 1)
    nvc = (nx + 1) * (ny + 1)
    coords = np.empty((nvc + nx * ny, 2))
    xx, yy = np.meshgrid(x, y, indexing="xy")
    coords[:nvc, 0] = xx.ravel()
    coords[:nvc, 1] = yy.ravel()

    def corner(i, j):
        return j * (nx + 1) + i

    vkind = np.zeros(nvc + nx * ny, dtype=np.int32)
    on_bnd = ((np.isclose(coords[:nvc, 0], xlim[0]))
              | (np.isclose(coords[:nvc, 0], xlim[1]))
              | (np.isclose(coords[:nvc, 1], ylim[0]))
              | (np.isclose(coords[:nvc, 1], ylim[1])))
    if dirichlet is None:
        vkind[:nvc][on_bnd] = DIRICHLET
    else:
        for v in np.flatnonzero(on_bnd):
            vkind[v] = DIRICHLET if dirichlet(*coords[v]) else NEUMANN

    tri = []
    for j in range(ny):
        for i in range(nx):
            c = nvc + j * nx + i
            coords[c] = ((x[i] + x[i + 1]) / 2.0, (y[j] + y[j + 1]) / 2.0)
            sw, se = corner(i, j), corner(i + 1, j)
            ne_, nw = corner(i + 1, j + 1), corner(i, j + 1)
            # CCW fans around the center
            tri += [(c, sw, se), (c, se, ne_), (c, ne_, nw), (c, nw, sw)]
    tri = np.asarray(tri)

    if subdomain is None:
        subdom = np.ones(len(tri), dtype=np.int32)
    else:
        cent = coords[tri].mean(axis=1)
        subdom = np.array([subdomain(cx, cy) for cx, cy in cent],
                          dtype=np.int32)

    nv = coords.shape[0]
    mesh = Triangulation(coords, vkind, np.zeros(nv, dtype=np.int32),
                         np.full((nv, 2), -1, dtype=np.int64),
                         tri, subdom, np.zeros(len(tri), dtype=np.int32))
    return label_compatible(mesh)


# ---------------------------------------------------------------------------
# labeling
# ---------------------------------------------------------------------------


def is_labeling_compatible(mesh):
    """True if every edge is the refinement edge of all or none of its
    incident elements."""
    ref = {_key(a, b) for a, b in mesh.refinement_edges()}
    ref_of = [_key(a, b) for a, b in mesh.refinement_edges()]
    for edge, elems in mesh.edge_elements().items():
        if edge in ref:
            if any(ref_of[e] != edge for e in elems):
                return False
    return True


def label_compatible(mesh):
    """Reorder element connectivity so refinement edges are compatible.

    Only generation-0 meshes can be relabeled.  For criss-cross meshes the
    four triangles of each cluster are labeled on the diagonal through the
    cluster's smallest-id corner; otherwise a longest-edge labeling is
    tried.  Raises LabelingError if the result is not compatible.
    """
    if mesh.vgen.max(initial=0) != 0 or mesh.tgen.max(initial=0) != 0:
        raise LabelingError("only initial (generation-0) meshes can be "
                            "relabeled")
    tri = _label_crisscross(mesh)
    if tri is None:
        tri = _label_longest_edge(mesh)
    out = Triangulation(mesh.coords, mesh.vkind, mesh.vgen, mesh.origin,
                        tri, mesh.subdom, mesh.tgen, validate=False)
    if not is_labeling_compatible(out):
        raise LabelingError(
            "no built-in labeling strategy produced a compatible "
            "refinement-edge assignment for this mesh")
    return out


def _label_crisscross(mesh):
    """Diagonal labeling for meshes made of 4-triangle criss-cross
    clusters; None if the mesh does not have that structure."""
    counts = np.bincount(mesh.tri.ravel(), minlength=mesh.nv)
    on_bnd = mesh.boundary_vertex_mask()
    is_center = (counts == 4) & ~on_bnd
    if not is_center.any():
        return None
    tri = mesh.tri
    center_of = np.full(mesh.ne, -1, dtype=np.int64)
    for e in range(mesh.ne):
        hits = [v for v in tri[e] if is_center[v]]
        if len(hits) != 1:
            return None
        center_of[e] = hits[0]
    new_tri = np.empty_like(tri)
    for c in np.flatnonzero(is_center):
        elems = np.flatnonzero(center_of == c)
        if len(elems) != 4:
            return None
        corners = sorted({v for e in elems for v in tri[e] if v != c})
        if len(corners) != 4:
            return None
        q = corners[0]
        with_q = [e for e in elems if q in tri[e]]
        if len(with_q) != 2:
            return None
        # the corner opposite q shares no element with q
        opp = [v for v in corners
               if all(v not in tri[e] for e in with_q)]
        if len(opp) != 1:
            return None
        opp = opp[0]
        for e in elems:
            verts = list(tri[e])
            end = q if q in verts else opp
            apex = next(v for v in verts if v != c and v != end)
            # keep the original CCW cyclic order, apex first
            i = verts.index(apex)
            new_tri[e] = (verts[i], verts[(i + 1) % 3], verts[(i + 2) % 3])
    return new_tri


def _label_longest_edge(mesh):
    """Label each element on its longest edge (smallest id pair on ties)."""
    tri = mesh.tri
    p = mesh.coords[tri]
    new_tri = np.empty_like(tri)
    for e in range(mesh.ne):
        best = None
        for i in range(3):
            a, b = (i + 1) % 3, (i + 2) % 3
            d = p[e, b] - p[e, a]
            l2 = float(d @ d)
            pair = _key(tri[e, a], tri[e, b])
            cand = (-l2, pair, i)
            if best is None or cand < best:
                best = cand
        i = best[2]
        new_tri[e] = (tri[e, i], tri[e, (i + 1) % 3], tri[e, (i + 2) % 3])
    return new_tri


# ---------------------------------------------------------------------------
# refinement
# ---------------------------------------------------------------------------


def bisect(mesh, element_id):
    """Bisect one element at its refinement edge.

    Returns ``(mesh, new_vertex_id)``.  The midpoint is reused if that edge
    was already split from the other side; the result may be nonconforming
    (conformity is restored by refine's completion).
    """
    if not 0 <= element_id < mesh.ne:
        raise MeshError(f"element id {element_id} out of range")
    b = _Builder(mesh)
    m = b.bisect_edge(b.ref_edge(element_id), [element_id])
    return b.to_triangulation(), m


def refine(mesh, marked):
    """Bisect all marked elements, completing to a conforming mesh.

    Elements bisected along the way as part of completion may raise the
    total beyond the marked count; every marked element is bisected at
    least once.  The result is conforming (asserted).
    """
    marked = sorted(set(int(m) for m in marked))
    if marked and (marked[0] < 0 or marked[-1] >= mesh.ne):
        raise MeshError("marked element id out of range")
    b = _Builder(mesh)
    for eid in marked:
        if b.alive[eid]:
            b.conforming_bisect(eid)
    out = b.to_triangulation()
    if not check_conformity(out):
        raise MeshError("refine produced a nonconforming mesh (internal "
                        "error or incompatible labeling)")
    return out


def uniform_refine(mesh):
    """Bisect every element exactly once, then restore conformity.

    Under a compatible labeling the completion pass does nothing and the
    element count exactly doubles.
    """
    b = _Builder(mesh)
    originals = list(range(mesh.ne))
    for eid in originals:
        if b.alive[eid]:
            b.bisect_edge(b.ref_edge(eid), [eid])
    b.resolve_hanging()
    out = b.to_triangulation()
    if not check_conformity(out):
        raise MeshError("uniform_refine produced a nonconforming mesh")
    return out


# ---------------------------------------------------------------------------
# checks and measures
# ---------------------------------------------------------------------------


def check_conformity(mesh, geometric=None):
    """True if the mesh is conforming.

    Checks that every edge has one or two incident elements and that no
    split edge (id-based registry) survives as a full edge.  A geometric
    hanging-vertex scan — needed for meshes that carry no bisection
    history, e.g. freshly loaded files — runs when the mesh has no
    recorded midpoints or is small; pass ``geometric=True`` to force it.
    """
    edge_elems = mesh.edge_elements()
    for elems in edge_elems.values():
        if not 1 <= len(elems) <= 2:
            return False
    for edge in mesh.split_edge_registry():
        if edge in edge_elems:
            return False
    if geometric is None:
        geometric = mesh.nv <= 2000 or not mesh.split_edge_registry()
    if geometric:
        coords = mesh.coords
        scale = max(np.ptp(coords, axis=0).max(), 1.0)
        tol = 1e-12 * scale
        for a, b in list(edge_elems):
            pa, pb = coords[a], coords[b]
            d = pb - pa
            L2 = float(d @ d)
            rel = coords - pa
            cross = np.abs(rel[:, 0] * d[1] - rel[:, 1] * d[0])
            dot = rel @ d
            on_open_seg = (cross <= tol * np.sqrt(L2)) \
                & (dot > tol) & (dot < L2 - tol)
            on_open_seg[a] = on_open_seg[b] = False
            if on_open_seg.any():
                return False
    return True


def min_angle(mesh):
    """Smallest interior angle over all elements, in radians."""
    p = mesh.coords[mesh.tri]
    worst = np.inf
    for i in range(3):
        u = p[:, (i + 1) % 3] - p[:, i]
        v = p[:, (i + 2) % 3] - p[:, i]
        c = (u * v).sum(axis=1) / (
            np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        worst = min(worst, np.arccos(np.clip(c, -1.0, 1.0)).min())
    return float(worst)


def areas(mesh):
    """Element areas."""
    return mesh.element_areas()


def diameters(mesh):
    """Element diameters (longest edge length)."""
    p = mesh.coords[mesh.tri]
    d = np.stack([np.linalg.norm(p[:, 1] - p[:, 0], axis=1),
                  np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
                  np.linalg.norm(p[:, 0] - p[:, 2], axis=1)])
    return d.max(axis=0)
