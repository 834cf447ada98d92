"""Decomposition of an adaptive mesh into a sequence of edge bisections.

A refined mesh is taken apart by repeated coarsening sweeps.  A vertex is
*removable* when it is the newest vertex of every element around it, the
ring has the canonical size (four elements around an interior vertex, two
at the boundary), and all ring elements carry the vertex's generation.
Removing it merges the ring back into the one or two parent elements whose
bisection created the vertex.  All removable vertices of a sweep are
independent (an element has a single newest vertex), so one sweep removes
them together.

Replaying the recorded bisections coarse-to-fine reproduces the fine mesh
exactly; the sweeps, taken in reverse, group the bisections into levels of
comparable generation.  Vertex ids are stable throughout: coarsening never
renumbers, and refinement only appends, so the ids appearing in the records
are fine-mesh vertex ids.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from localmg import mesh as _mesh
from localmg.mesh import INTERIOR, MeshError, Triangulation

__all__ = [
    "CompatibleBisection",
    "BisectionSequence",
    "LevelGrouping",
    "coarsen_once",
    "decompose",
    "verify_replay",
    "sequence_to_json",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CompatibleBisection:
    """One recorded edge bisection.

    midpoint        vertex created by the bisection
    endpoints       ids of the split edge's endpoints
    generation      generation of the midpoint (= child element generation)
    patch_elements  element ids of the bisected patch in the mesh the sweep
                    started from (one or two parents; recorded are the
                    2 or 4 children removed by the merge)
    patch_tris      vertex-id triples (sorted) of those children; vertex ids
                    are stable across sweeps, so these identify the patch
                    independently of any intermediate element numbering
    patch_diameter  largest diameter among the patch elements
    """

    midpoint: int
    endpoints: tuple
    generation: int
    patch_elements: tuple
    patch_tris: tuple
    patch_diameter: float


@dataclass(frozen=True)
class BisectionSequence:
    """Bisections in replay (coarse-to-fine) order, with the two meshes."""

    items: tuple
    source: Triangulation
    target: Triangulation

    def __len__(self):
        return len(self.items)


@dataclass(frozen=True)
class LevelGrouping:
    """Partition of sequence items into levels G(1)..G(L').

    ``groups[l - 1]`` holds the indices (into the sequence's items) of
    level l; level 1 replays first.
    """

    groups: tuple

    @property
    def num_levels(self):
        return len(self.groups)


class _CoarsenState:
    """Mutable mesh state with persistent vertex and element ids."""

    def __init__(self, mesh: Triangulation):
        self.coords = [tuple(xy) for xy in mesh.coords]
        self.vkind = list(mesh.vkind)
        self.vgen = list(mesh.vgen)
        self.origin = [tuple(ab) for ab in mesh.origin]
        self.valive = [True] * mesh.nv
        self.tri = [tuple(t) for t in mesh.tri]
        self.subdom = list(mesh.subdom)
        self.tgen = list(mesh.tgen)
        self.alive = [True] * mesh.ne

    def alive_elements(self):
        return [e for e, ok in enumerate(self.alive) if ok]

    def sweep(self):
        """Remove every removable vertex once; return the records
        (ascending vertex id)."""
        rings = {}
        incident = {}
        for e in self.alive_elements():
            v0, v1, v2 = self.tri[e]
            rings.setdefault(v0, []).append(e)
            for v in (v0, v1, v2):
                incident[v] = incident.get(v, 0) + 1

        records = []
        for p in sorted(rings):
            if self.vgen[p] < 1:
                continue
            ring = rings[p]
            want = 2 if self.vkind[p] != INTERIOR else 4
            if len(ring) != want or incident.get(p, 0) != want:
                continue
            gen = self.vgen[p]
            if any(self.tgen[e] != gen for e in ring):
                continue
            records.append(self._remove(p, ring))
        return records

    def _remove(self, p, ring):
        l, r = self.origin[p]
        # pair the ring children by their apex (the parents' newest vertex)
        pairs = {}
        for e in ring:
            verts = self.tri[e]
            apex = [v for v in verts if v != p and v != l and v != r]
            if len(apex) != 1:
                raise MeshError(
                    f"ring of vertex {p} is not a bisection patch")
            pairs.setdefault(apex[0], []).append(e)
        diam = 0.0
        tris = []
        for e in ring:
            tris.append(tuple(sorted(self.tri[e])))
            pts = np.asarray([self.coords[v] for v in self.tri[e]])
            for i in range(3):
                d = np.linalg.norm(pts[i] - pts[(i + 1) % 3])
                diam = max(diam, float(d))
        rec = CompatibleBisection(
            midpoint=p, endpoints=(l, r), generation=int(self.vgen[p]),
            patch_elements=tuple(sorted(ring)),
            patch_tris=tuple(sorted(tris)),
            patch_diameter=diam)

        for e in ring:
            self.alive[e] = False
        self.valive[p] = False
        for apex, kids in sorted(pairs.items()):
            if len(kids) != 2:
                raise MeshError(
                    f"ring of vertex {p} has an unpaired child element")
            a, b = kids
            if self.subdom[a] != self.subdom[b]:
                raise MeshError(
                    f"children of vertex {p} straddle subdomains")
            qa = np.asarray(self.coords[apex])
            dl = np.asarray(self.coords[l]) - qa
            dr = np.asarray(self.coords[r]) - qa
            first, second = (l, r) if dl[0] * dr[1] - dl[1] * dr[0] > 0 \
                else (r, l)
            eid = len(self.tri)
            self.tri.append((apex, first, second))
            self.subdom.append(self.subdom[a])
            self.tgen.append(self.vgen[p] - 1)
            self.alive.append(True)
        return rec

    def to_triangulation(self):
        """Compact snapshot with order-preserving vertex renumbering."""
        vmap = np.full(len(self.valive), -1, dtype=np.int64)
        keep = [v for v, ok in enumerate(self.valive) if ok]
        vmap[keep] = np.arange(len(keep))
        coords = np.asarray([self.coords[v] for v in keep])
        origin = []
        for v in keep:
            a, b = self.origin[v]
            origin.append((-1, -1) if a < 0 else (vmap[a], vmap[b]))
        elems = self.alive_elements()
        tri = vmap[np.asarray([self.tri[e] for e in elems])]
        return Triangulation(
            coords,
            np.asarray([self.vkind[v] for v in keep], dtype=np.int32),
            np.asarray([self.vgen[v] for v in keep], dtype=np.int32),
            np.asarray(origin, dtype=np.int64),
            tri,
            np.asarray([self.subdom[e] for e in elems], dtype=np.int32),
            np.asarray([self.tgen[e] for e in elems], dtype=np.int32))


def coarsen_once(mesh):
    """One coarsening sweep.

    Returns the coarsened mesh and the removed bisections in discovery
    order (ascending midpoint id, ids in the numbering of the *input*
    mesh).  If nothing is removable the input mesh is returned unchanged
    with an empty list.
    """
    state = _CoarsenState(mesh)
    records = state.sweep()
    if not records:
        return mesh, []
    return state.to_triangulation(), records


def decompose(fine, coarse):
    """Coarsen ``fine`` back to ``coarse`` and record the bisections.

    Returns a BisectionSequence in replay (coarse-to-fine) order together
    with the LevelGrouping induced by the sweeps: the last sweep's records
    replay first and form level 1.  Requires ``fine`` to have been produced
    from ``coarse`` by refinement (the vertex numbering of ``coarse`` must
    be a prefix of the numbering of ``fine``).
    """
    nv0 = coarse.nv
    if (fine.nv < nv0
            or not np.array_equal(fine.coords[:nv0], coarse.coords)
            or not np.array_equal(fine.vkind[:nv0], coarse.vkind)):
        raise MeshError("fine mesh does not extend the coarse mesh "
                        "(was it refined from it?)")

    state = _CoarsenState(fine)
    sweeps = []
    while True:
        records = state.sweep()
        if not records:
            break
        sweeps.append(records)
        if len(sweeps) > int(fine.vgen.max(initial=0)) + 1:
            raise MeshError("coarsening did not terminate")

    alive_vs = {v for v, ok in enumerate(state.valive) if ok}
    if alive_vs != set(range(nv0)):
        raise MeshError("coarsening removed a different vertex set than "
                        "the coarse mesh's (fine mesh not reachable from "
                        "coarse by bisection)")
    reached = {tuple(sorted(state.tri[e])) for e in state.alive_elements()}
    expect = {tuple(sorted(t)) for t in coarse.tri}
    if reached != expect:
        raise MeshError("coarsening reached a different coarse mesh")

    items = []
    groups = []
    for records in reversed(sweeps):
        start = len(items)
        items.extend(records)
        groups.append(tuple(range(start, len(items))))
    if len(items) != fine.nv - nv0:
        raise MeshError("bisection count does not match the number of "
                        "added vertices")
    for lvl, g in enumerate(groups, start=1):
        log.debug("level %d: %d bisections", lvl, len(g))
    seq = BisectionSequence(items=tuple(items), source=coarse, target=fine)
    return seq, LevelGrouping(groups=tuple(groups))


def verify_replay(seq):
    """Replay the sequence from its source mesh and compare with the
    target, mapping vertex ids through the replay.  Returns False on any
    mismatch (wrong edge, wrong order, wrong final mesh)."""
    try:
        return _replay_matches(seq)
    except MeshError:
        return False


def _replay_matches(seq):
    builder = _mesh._Builder(seq.source)
    vmap = {v: v for v in range(seq.source.nv)}
    for item in seq.items:
        le, re_ = item.endpoints
        if le not in vmap or re_ not in vmap:
            return False
        edge = _mesh._key(vmap[le], vmap[re_])
        eids = [e for e in builder.edge_elems.get(edge, ())
                if builder.alive[e]]
        if not eids or len(eids) != len(item.patch_elements) // 2:
            return False
        if any(builder.ref_edge(e) != edge for e in eids):
            return False
        m = builder.bisect_edge(edge, eids)
        if builder.vgen[m] != item.generation:
            return False
        vmap[item.midpoint] = m

    replay = builder.to_triangulation()
    target = seq.target
    if replay.nv != target.nv or len(vmap) != target.nv:
        return False
    perm = np.empty(target.nv, dtype=np.int64)
    for v, w in vmap.items():
        perm[v] = w
    if not np.array_equal(target.coords, replay.coords[perm]):
        return False
    if not np.array_equal(target.vkind, replay.vkind[perm]):
        return False
    if not np.array_equal(target.vgen, replay.vgen[perm]):
        return False

    def keyed(tri, tgen):
        return {tuple(sorted(t)): g for t, g in zip(tri, tgen)}

    mapped = keyed(perm[target.tri], target.tgen)
    return mapped == keyed(replay.tri, replay.tgen)


def sequence_to_json(seq, path, grouping=None):
    """Dump a sequence (and optional grouping) to a JSON file."""
    doc = {
        "source": {"nv": int(seq.source.nv), "ne": int(seq.source.ne)},
        "target": {"nv": int(seq.target.nv), "ne": int(seq.target.ne)},
        "items": [
            {
                "midpoint": int(it.midpoint),
                "endpoints": [int(v) for v in it.endpoints],
                "generation": int(it.generation),
                "patch_elements": [int(e) for e in it.patch_elements],
                "patch_diameter": it.patch_diameter,
            }
            for it in seq.items
        ],
    }
    if grouping is not None:
        doc["groups"] = [[int(i) for i in g] for g in grouping.groups]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
