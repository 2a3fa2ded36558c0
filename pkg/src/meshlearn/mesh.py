"""Triangle meshes, OBJ/PLY I/O and the edge adjacency used by the convolutions.

Edges are numbered in *canonical order*: the order in which they first appear
while walking the faces in file order, and the half-edges of each face as
``(v0, v1), (v1, v2), (v2, v0)``.  Per-edge feature tensors and label files are
aligned to this order.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    MeshError,
    NonManifoldError,
    ObjParseError,
    WindingError,
)

__all__ = [
    "Mesh",
    "EdgeTopology",
    "load_obj",
    "build_edge_topology",
    "euler_characteristic",
    "export_mesh",
    "topology_to_mesh",
    "PALETTE",
]

logger = logging.getLogger(__name__)

# 16 distinct RGB colours, cycled by label id.
PALETTE = np.array(
    [
        [230, 25, 75], [60, 180, 75], [255, 225, 25], [0, 130, 200],
        [245, 130, 48], [145, 30, 180], [70, 240, 240], [240, 50, 230],
        [210, 245, 60], [250, 190, 212], [0, 128, 128], [220, 190, 255],
        [170, 110, 40], [255, 250, 200], [128, 0, 0], [128, 128, 128],
    ],
    dtype=np.uint8,
)


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Vertex positions plus counter-clockwise triangles.

    Construction validates the faces and drops vertices no face refers to;
    the number dropped is kept in ``dropped_vertices``.
    """

    vertices: np.ndarray
    faces: np.ndarray
    dropped_vertices: int = field(default=0, compare=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        nv = len(v)
        if len(f) and (f.min() < 0 or f.max() >= nv):
            bad = int(np.nonzero((f < 0) | (f >= nv))[0][0])
            raise MeshError(f"face {bad} has a vertex index out of range (vertex count {nv})")
        if len(f):
            repeated = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
            if repeated.any():
                bad = int(np.nonzero(repeated)[0][0])
                raise MeshError(f"face {bad} repeats a vertex: {f[bad].tolist()}")
            srt = np.sort(f, axis=1)
            _, first, counts = np.unique(srt, axis=0, return_index=True, return_counts=True)
            if (counts > 1).any():
                dup = srt[first[counts > 1][0]]
                raise MeshError(f"duplicate face {dup.tolist()}")
        used = np.zeros(nv, dtype=bool)
        used[f.ravel()] = True
        dropped = int(nv - used.sum())
        if dropped:
            remap = np.cumsum(used) - 1
            v = v[used]
            f = remap[f]
            logger.warning("dropped %d isolated vertices", dropped)
        object.__setattr__(self, "vertices", _frozen(v))
        object.__setattr__(self, "faces", _frozen(f))
        object.__setattr__(self, "dropped_vertices", self.dropped_vertices + dropped)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    def transformed(self, matrix=None, offset=None):
        """Return a copy with ``x -> matrix @ x + offset`` applied to every vertex."""
        v = self.vertices
        if matrix is not None:
            v = v @ np.asarray(matrix, dtype=np.float64).T
        if offset is not None:
            v = v + np.asarray(offset, dtype=np.float64)
        return Mesh(v, self.faces)


class EdgeTopology:
    """Edge list and fixed 4-neighbour adjacency of a manifold triangle mesh.

    Attributes
    ----------
    vertices : (V, 3) float array
        Positions. After pooling some vertices are no longer referenced; they
        are kept so vertex ids stay stable.
    faces : (F, 3) int array
    edges : (E, 2) int array
    face_edges : (F, 3) int array
        ``face_edges[f, i]`` is the edge joining ``faces[f, i]`` and ``faces[f, (i+1) % 3]``.
    edge_faces : (E, 2) int array
        Incident faces in ascending id order, ``-1`` when absent.
    neighbors : (E, 4) int array
        Slots 0-1 hold the other two edges of the first incident face in
        counter-clockwise order starting after the edge itself, slots 2-3 the
        same for the second face.  Missing neighbours hold ``sentinel == E``.
    boundary : (E,) bool array
    """

    def __init__(self, vertices, faces, edges, face_edges, edge_faces, neighbors, boundary):
        self.vertices = _frozen(np.asarray(vertices, dtype=np.float64))
        self.faces = _frozen(np.asarray(faces, dtype=np.int64))
        self.edges = _frozen(np.asarray(edges, dtype=np.int64))
        self.face_edges = _frozen(np.asarray(face_edges, dtype=np.int64))
        self.edge_faces = _frozen(np.asarray(edge_faces, dtype=np.int64))
        self.neighbors = _frozen(np.asarray(neighbors, dtype=np.int64))
        self.boundary = _frozen(np.asarray(boundary, dtype=bool))

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_faces(self):
        return len(self.faces)

    @property
    def n_vertices(self):
        """Number of vertices referenced by at least one face."""
        return int(np.unique(self.faces).size)

    @property
    def sentinel(self):
        return len(self.edges)

    @property
    def n_boundary(self):
        return int(self.boundary.sum())

    def vertex_rings(self):
        """Per-vertex frozenset of incident edge ids (empty for unreferenced vertices)."""
        rings = [set() for _ in range(len(self.vertices))]
        for e, (u, w) in enumerate(self.edges.tolist()):
            rings[u].add(e)
            rings[w].add(e)
        return [frozenset(r) for r in rings]

    def vertex_ring(self, v):
        return frozenset(np.nonzero((self.edges == v).any(axis=1))[0].tolist())

    def swap_face_order(self, mask=None):
        """Exchange the two incident faces (and neighbour pairs) of the edges in ``mask``.

        The result describes the same mesh with ``(a, b, c, d)`` stored as
        ``(c, d, a, b)``; convolutions must not be able to tell the difference.
        """
        if mask is None:
            mask = np.ones(self.n_edges, dtype=bool)
        mask = np.asarray(mask, dtype=bool)
        nb = self.neighbors.copy()
        ef = self.edge_faces.copy()
        nb[mask] = nb[mask][:, [2, 3, 0, 1]]
        ef[mask] = ef[mask][:, [1, 0]]
        return EdgeTopology(self.vertices, self.faces, self.edges, self.face_edges, ef, nb, self.boundary)

    def with_vertices(self, vertices):
        return EdgeTopology(
            vertices, self.faces, self.edges, self.face_edges,
            self.edge_faces, self.neighbors, self.boundary,
        )

    def __eq__(self, other):
        if not isinstance(other, EdgeTopology):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, name), getattr(other, name))
            for name in ("faces", "edges", "face_edges", "edge_faces", "neighbors", "boundary")
        )

    __hash__ = None

    def __repr__(self):
        return (
            f"EdgeTopology(edges={self.n_edges}, faces={self.n_faces}, "
            f"vertices={self.n_vertices}, boundary={self.n_boundary})"
        )


def _parse_index(token, n_vertices, lineno):
    head = token.split("/")[0]
    try:
        idx = int(head)
    except ValueError:
        raise ObjParseError(f"malformed face index {token!r}", lineno) from None
    if idx < 0:
        idx = n_vertices + idx
    else:
        idx -= 1
    if idx < 0 or idx >= n_vertices:
        raise ObjParseError(f"face index {token!r} out of range", lineno)
    return idx


def load_obj(path):
    """Read the ``v``/``f`` records of an ASCII OBJ file into a :class:`Mesh`.

    Texture and normal references in ``f i/t/n`` are ignored; other record
    types are skipped. Faces with more than three vertices are rejected.
    """
    vertices = []
    faces = []
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise ObjParseError("vertex needs three coordinates", lineno)
                try:
                    vertices.append([float(x) for x in parts[1:4]])
                except ValueError:
                    raise ObjParseError(f"malformed vertex {line.strip()!r}", lineno) from None
            elif tag == "f":
                if len(parts) != 4:
                    if len(parts) > 4:
                        raise ObjParseError("non-triangular face", lineno)
                    raise ObjParseError("face needs three vertices", lineno)
                faces.append([_parse_index(t, len(vertices), lineno) for t in parts[1:]])
    return Mesh(np.array(vertices, dtype=np.float64).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))


def assemble_topology(vertices, faces, edges, face_edges):
    """Derive incident faces, the neighbour table and boundary flags.

    ``faces`` and ``face_edges`` must already be consistent with ``edges``.
    """
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    face_edges = np.asarray(face_edges, dtype=np.int64).reshape(-1, 3)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    n_edges = len(edges)
    n_faces = len(faces)

    fe = face_edges.ravel()
    fid = np.repeat(np.arange(n_faces), 3)
    slot = np.tile(np.arange(3), n_faces)
    order = np.lexsort((fid, fe))
    fe_s, fid_s, slot_s = fe[order], fid[order], slot[order]

    counts = np.bincount(fe, minlength=n_edges)
    if (counts > 2).any():
        bad = int(np.nonzero(counts > 2)[0][0])
        raise NonManifoldError(
            f"non-manifold edge {bad} {edges[bad].tolist()} is shared by {counts[bad]} faces"
        )
    if (counts == 0).any():
        bad = int(np.nonzero(counts == 0)[0][0])
        raise MeshError(f"edge {bad} has no incident face")
    start = np.concatenate([[0], np.cumsum(counts)[:-1]])
    side = np.arange(len(fe_s)) - start[fe_s]

    edge_faces = np.full((n_edges, 2), -1, dtype=np.int64)
    edge_faces[fe_s, side] = fid_s
    neighbors = np.full((n_edges, 4), n_edges, dtype=np.int64)
    neighbors[fe_s, 2 * side] = face_edges[fid_s, (slot_s + 1) % 3]
    neighbors[fe_s, 2 * side + 1] = face_edges[fid_s, (slot_s + 2) % 3]
    return EdgeTopology(vertices, faces, edges, face_edges, edge_faces, neighbors, counts == 1)


def build_edge_topology(mesh):
    """Build the canonical edge list and the 4-neighbour table of ``mesh``.

    Raises
    ------
    NonManifoldError
        An edge is shared by three or more faces.
    WindingError
        Two faces traverse a shared edge in the same direction.
    """
    faces = mesh.faces
    nv = max(mesh.n_vertices, 1)
    he_from = faces.ravel()
    he_to = np.roll(faces, -1, axis=1).ravel()

    key = np.minimum(he_from, he_to) * nv + np.maximum(he_from, he_to)
    uniq, first, inverse, counts = np.unique(
        key, return_index=True, return_inverse=True, return_counts=True
    )
    if (counts > 2).any():
        k = int(uniq[counts > 2][0])
        raise NonManifoldError(
            f"non-manifold edge ({k // nv}, {k % nv}) is shared by {counts[counts > 2][0]} faces"
        )

    directed = he_from * nv + he_to
    uniq_d, counts_d = np.unique(directed, return_counts=True)
    if (counts_d > 1).any():
        k = int(uniq_d[counts_d > 1][0])
        raise WindingError(
            f"inconsistent winding: half-edge ({k // nv}, {k % nv}) is traversed by two faces"
        )
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    face_edges = rank[inverse.ravel()].reshape(-1, 3)
    start = first[order]
    edges = np.stack([he_from[start], he_to[start]], axis=1)
    return assemble_topology(mesh.vertices, faces, edges, face_edges)


def euler_characteristic(mesh, topo=None):
    """``V - E + F`` counted over the elements ``topo`` references."""
    if topo is None:
        topo = build_edge_topology(mesh)
    return topo.n_vertices - topo.n_edges + topo.n_faces


def topology_to_mesh(topo):
    """Compact the referenced vertices of ``topo`` back into a standalone :class:`Mesh`."""
    used = np.zeros(len(topo.vertices), dtype=bool)
    used[topo.faces.ravel()] = True
    remap = np.cumsum(used) - 1
    return Mesh(topo.vertices[used], remap[topo.faces])


def face_labels_from_edges(topo, edge_labels):
    """Majority label of each face's three edges; ties go to the lowest label."""
    labels = np.asarray(edge_labels, dtype=np.int64)
    fl = labels[topo.face_edges]
    out = np.empty(len(fl), dtype=np.int64)
    for i, (x, y, z) in enumerate(fl.tolist()):
        if x == y or x == z:
            out[i] = x
        elif y == z:
            out[i] = y
        else:
            out[i] = min(x, y, z)
    return out


def export_mesh(mesh, topo, path, edge_labels=None):
    """Write ``topo`` (or ``mesh`` when ``topo`` is None) to disk.

    Unlabelled meshes are written as OBJ. With ``edge_labels`` (one integer per
    canonical edge) an ASCII PLY with per-face colours is written instead.
    Vertex positions come from the topology, so pooled meshes show their
    collapsed vertex locations.
    """
    if topo is None:
        topo = build_edge_topology(mesh)
    out = topology_to_mesh(topo)
    path = Path(path)
    if edge_labels is None:
        with open(path, "w") as fh:
            for x, y, z in out.vertices.tolist():
                fh.write(f"v {x!r} {y!r} {z!r}\n")
            for a, b, c in (out.faces + 1).tolist():
                fh.write(f"f {a} {b} {c}\n")
        return path

    labels = np.asarray(edge_labels)
    if labels.shape != (topo.n_edges,):
        raise ValueError(f"expected {topo.n_edges} edge labels, got {labels.shape}")
    colors = PALETTE[face_labels_from_edges(topo, labels) % len(PALETTE)]
    with open(path, "w") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {out.n_vertices}\n")
        fh.write("property float x\nproperty float y\nproperty float z\n")
        fh.write(f"element face {out.n_faces}\n")
        fh.write("property list uchar int vertex_indices\n")
        fh.write("property uchar red\nproperty uchar green\nproperty uchar blue\n")
        fh.write("end_header\n")
        for x, y, z in out.vertices.tolist():
            fh.write(f"{x!r} {y!r} {z!r}\n")
        for (a, b, c), (r, g, bl) in zip(out.faces.tolist(), colors.tolist()):
            fh.write(f"3 {a} {b} {c} {r} {g} {bl}\n")
    return path


def read_ply_face_colors(path):
    """Face colours of a PLY written by :func:`export_mesh` (used for inspection)."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    end = lines.index("end_header")
    nv = int(next(l for l in lines if l.startswith("element vertex")).split()[-1])
    nf = int(next(l for l in lines if l.startswith("element face")).split()[-1])
    rows = [l.split() for l in lines[end + 1 + nv: end + 1 + nv + nf]]
    return np.array([[int(t) for t in r[4:7]] for r in rows], dtype=np.uint8)
