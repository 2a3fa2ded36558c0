"""Task-driven pooling by prioritised edge collapse.

Collapsing an interior edge ``e`` removes its two triangles. On each side the
three edges of the vanished triangle (``a, b, e`` and ``c, d, e``) merge into
one surviving edge whose feature is their channelwise mean. Three edges
disappear per collapse: ``e``, ``b`` and ``d``; ``a`` and ``c`` survive.

Edges are visited by ascending L2 norm of their features. Scores are computed
once per pooling call; a surviving edge takes the smaller score of the two
edges merged into it and the stale queue entry is skipped lazily.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import InvalidCollapseError, PoolExhaustedError
from .mesh import EdgeTopology, assemble_topology

__all__ = [
    "CollapseRecord",
    "PoolHistory",
    "PoolState",
    "edge_priority",
    "is_valid_collapse",
    "collapse_edge",
    "mesh_pool",
    "replay_history",
    "simplify",
]


@dataclass(frozen=True)
class CollapseRecord:
    """One collapse, expressed in the edge ids in use just before it."""

    edge: int
    side1: tuple  # (a, b)
    side2: tuple  # (c, d)
    survivors: tuple  # (p, q) == (a, c)
    removed: tuple  # (e, b, d)
    keep_vertex: int
    removed_vertex: int


@dataclass
class PoolHistory:
    """Everything needed to undo one pooling call.

    ``merge`` maps pre-pool features to pooled ones (``pooled = x @ merge``),
    ``unpool`` maps pooled features back (``restored = y @ unpool``).
    ``parents[i]`` lists the pooled edge ids pre-pool edge ``i`` flows into.
    """

    snapshot: EdgeTopology
    records: list
    pooled: EdgeTopology
    kept: np.ndarray  # pre-pool ids of the surviving edges, ascending
    parents: list
    merge: sp.csr_matrix = field(repr=False)
    unpool: sp.csr_matrix = field(repr=False)

    @property
    def n_collapses(self):
        return len(self.records)

    @property
    def mapping(self):
        """Pre-pool edge id -> tuple of pooled edge ids."""
        return {i: tuple(p) for i, p in enumerate(self.parents)}


def edge_priority(features):
    """L2 norm of each edge's feature column; smaller collapses first."""
    f = np.asarray(features, dtype=np.float64)
    return np.sqrt((f * f).sum(axis=0))


class PoolState:
    """Mutable edge/face incidence used while collapsing.

    Face lists per edge are kept in ascending face-id order so that the
    neighbour order seen here matches the compacted :class:`EdgeTopology`.
    """

    def __init__(self, topo):
        self.topo = topo
        self.ev = topo.edges.tolist()
        self.fv = topo.faces.tolist()
        self.fe = topo.face_edges.tolist()
        self.ef = [[f for f in pair if f >= 0] for pair in topo.edge_faces.tolist()]
        self.edge_alive = [True] * topo.n_edges
        self.face_alive = [True] * topo.n_faces
        self.vedges = [set() for _ in range(len(topo.vertices))]
        for e, (u, w) in enumerate(self.ev):
            self.vedges[u].add(e)
            self.vedges[w].add(e)
        self.positions = np.array(topo.vertices, dtype=np.float64)
        self.n_edges = topo.n_edges
        # collapses never open a closed mesh, so the boundary scan can be skipped
        self.closed = not bool(np.any(topo.boundary))
        # merge weights over pre-pool edges and unpool membership, filled lazily
        self.weights = {}
        self.members = {}

    # -- queries -----------------------------------------------------------
    def is_boundary_vertex(self, v):
        if self.closed:
            return False
        ef = self.ef
        return any(len(ef[x]) == 1 for x in self.vedges[v])

    def ring(self, v):
        ev = self.ev
        out = set()
        for x in self.vedges[v]:
            a, b = ev[x]
            out.add(b if a == v else a)
        return out

    def sides(self, e):
        """``[(face, a, b, opposite_vertex), ...]`` for each face of ``e``."""
        out = []
        for f in self.ef[e]:
            fe = self.fe[f]
            i = fe.index(e)
            out.append((f, fe[(i + 1) % 3], fe[(i + 2) % 3], self.fv[f][(i + 2) % 3]))
        return out

    def is_valid(self, e):
        if not self.edge_alive[e] or len(self.ef[e]) != 2:
            return False
        u, w = self.ev[e]
        if self.is_boundary_vertex(u) and self.is_boundary_vertex(w):
            return False
        if len(self.ring(u) & self.ring(w)) >= 3:
            return False
        for _, _, _, s in self.sides(e):
            # the opposite vertex loses an edge; it must keep a proper fan
            minimum = 3 if self.is_boundary_vertex(s) else 4
            if len(self.vedges[s]) < minimum:
                return False
        return True

    def folds(self, e, min_cos=0.95):
        """Whether moving both endpoints of ``e`` to its midpoint tilts a face too far."""
        u, w = self.ev[e]
        pos = self.positions
        mid = 0.5 * (pos[u] + pos[w])
        dying = set(self.ef[e])
        faces = set()
        for v in (u, w):
            for x in self.vedges[v]:
                faces.update(self.ef[x])
        for f in faces - dying:
            tri = pos[self.fv[f]]
            old = np.cross(tri[1] - tri[0], tri[2] - tri[0])
            new_tri = np.array([mid if v in (u, w) else pos[v] for v in self.fv[f]])
            new = np.cross(new_tri[1] - new_tri[0], new_tri[2] - new_tri[0])
            no, nn = np.linalg.norm(old), np.linalg.norm(new)
            if nn < 1e-12 or np.dot(old, new) < min_cos * no * nn:
                return True
        return False

    # -- mutation ----------------------------------------------------------
    def _weights(self, x):
        w = self.weights.get(x)
        return {x: 1.0} if w is None else w

    def _members(self, x):
        m = self.members.get(x)
        return {x} if m is None else m

    def _merge(self, survivor, others):
        group = (survivor,) + others
        acc = {}
        for x in group:
            for k, val in self._weights(x).items():
                acc[k] = acc.get(k, 0.0) + val / 3.0
        mem = set()
        for x in group:
            mem |= self._members(x)
        return acc, mem

    def _drop_edge(self, x):
        self.edge_alive[x] = False
        u, w = self.ev[x]
        self.vedges[u].discard(x)
        self.vedges[w].discard(x)
        self.n_edges -= 1

    def _absorb(self, survivor, victim, dead_face):
        """Move the remaining face of ``victim`` onto ``survivor``."""
        for g in self.ef[victim]:
            if g == dead_face:
                continue
            fe = self.fe[g]
            fe[fe.index(victim)] = survivor
            self.ef[survivor].append(g)
        self.ef[survivor].sort()

    def collapse(self, e):
        if not self.is_valid(e):
            raise InvalidCollapseError(f"edge {e} cannot be collapsed")
        (f1, a, b, _), (f2, c, d, _) = self.sides(e)
        keep, gone = self.ev[e]

        wp, mp = self._merge(a, (b, e))
        wq, mq = self._merge(c, (d, e))

        for f in (f1, f2):
            self.face_alive[f] = False
            for x in self.fe[f]:
                self.ef[x].remove(f)
        self._absorb(a, b, f1)
        self._absorb(c, d, f2)
        for x in (e, b, d):
            self._drop_edge(x)
            self.weights.pop(x, None)
            self.members.pop(x, None)
        self.weights[a], self.members[a] = wp, mp
        self.weights[c], self.members[c] = wq, mq

        faces_touched = set()
        for x in list(self.vedges[gone]):
            ends = self.ev[x]
            ends[ends.index(gone)] = keep
            self.vedges[keep].add(x)
            faces_touched.update(self.ef[x])
        self.vedges[gone] = set()
        for f in faces_touched:
            fv = self.fv[f]
            if gone in fv:
                fv[fv.index(gone)] = keep
        self.positions[keep] = 0.5 * (self.positions[keep] + self.positions[gone])
        return CollapseRecord(e, (a, b), (c, d), (a, c), (e, b, d), keep, gone)

    # -- output ------------------------------------------------------------
    def finalize(self, records):
        topo = self.topo
        kept = np.nonzero(self.edge_alive)[0]
        alive_faces = np.nonzero(self.face_alive)[0]
        remap = np.full(topo.n_edges, -1, dtype=np.int64)
        remap[kept] = np.arange(len(kept))
        fe = remap[np.array(self.fe, dtype=np.int64).reshape(-1, 3)[alive_faces]]
        fv = np.array(self.fv, dtype=np.int64).reshape(-1, 3)[alive_faces]
        ev = np.array(self.ev, dtype=np.int64).reshape(-1, 2)[kept]
        pooled = assemble_topology(self.positions, fv, ev, fe)

        n_old, n_new = topo.n_edges, len(kept)
        rows, cols, vals = [], [], []
        parents = [[] for _ in range(n_old)]
        for j, x in enumerate(kept.tolist()):
            for k, val in self._weights(x).items():
                rows.append(k)
                cols.append(j)
                vals.append(val)
            for k in self._members(x):
                parents[k].append(j)
        merge = sp.csr_matrix((vals, (rows, cols)), shape=(n_old, n_new))
        urows, ucols, uvals = [], [], []
        for k, ps in enumerate(parents):
            ps.sort()
            w = 1.0 / len(ps)
            for j in ps:
                urows.append(j)
                ucols.append(k)
                uvals.append(w)
        unpool = sp.csr_matrix((uvals, (urows, ucols)), shape=(n_new, n_old))
        return PoolHistory(topo, list(records), pooled, kept, parents, merge, unpool)


def is_valid_collapse(topo, edge):
    """Whether collapsing ``edge`` keeps the mesh a proper manifold.

    Rejected: boundary edges, edges whose endpoints are both on the boundary,
    edges whose endpoint one-rings share three or more vertices, and edges
    whose collapse would leave an opposite vertex with a degenerate fan
    (duplicate triangles, as on a tetrahedron).
    """
    return PoolState(topo).is_valid(int(edge))


def collapse_edge(topo, features, edge):
    """Collapse a single edge. Returns ``(pooled_topo, pooled_features, record)``."""
    state = PoolState(topo)
    record = state.collapse(int(edge))
    history = state.finalize([record])
    pooled = None
    if features is not None:
        pooled = np.asarray(features) @ history.merge
    return history.pooled, pooled, record


def mesh_pool(topo, features, target_edges, mode="norm", seed=None, rng=None, scores=None,
              geometric_check=False):
    """Collapse edges until at most ``target_edges`` remain.

    Parameters
    ----------
    topo : EdgeTopology
    features : (C, E) array or None
        Used for priorities (``mode="norm"``) and merged into the output.
    target_edges : int
    mode : {"norm", "random"}
        ``"random"`` draws priorities uniformly from ``rng`` (or ``seed``).
    scores : (E,) array, optional
        Explicit priorities; overrides ``mode``.
    geometric_check : bool
        Also reject collapses that fold faces over (for decimating geometry,
        never used inside networks).

    Returns
    -------
    pooled_topo, pooled_features, history
    """
    if target_edges < 1:
        raise ValueError("target_edges must be at least 1")
    if scores is None:
        if mode in ("norm", "by-norm"):
            scores = edge_priority(features)
        elif mode == "random":
            if rng is None:
                rng = np.random.default_rng(seed)
            scores = rng.random(topo.n_edges)
        else:
            raise ValueError(f"unknown pooling mode {mode!r}")
    cur = np.asarray(scores, dtype=np.float64).tolist()
    if len(cur) != topo.n_edges:
        raise ValueError(f"{len(cur)} scores for {topo.n_edges} edges")

    state = PoolState(topo)
    records = []
    heap = [(s, i) for i, s in enumerate(cur)]
    heapq.heapify(heap)
    skipped = []
    progress = False
    alive = state.edge_alive
    while state.n_edges > target_edges:
        if not heap:
            if not (skipped and progress):
                raise PoolExhaustedError(state.n_edges, target_edges)
            heap = [(cur[x], x) for x in skipped if alive[x]]
            heapq.heapify(heap)
            skipped = []
            progress = False
            continue
        s, x = heapq.heappop(heap)
        if not alive[x] or s != cur[x]:
            continue
        if not state.is_valid(x) or (geometric_check and state.folds(x)):
            skipped.append(x)
            continue
        rec = state.collapse(x)
        records.append(rec)
        progress = True
        a, b = rec.side1
        c, d = rec.side2
        for p, other in ((a, b), (c, d)):
            if cur[other] < cur[p]:
                cur[p] = cur[other]
                heapq.heappush(heap, (cur[p], p))
    history = state.finalize(records)
    pooled = None
    if features is not None:
        pooled = np.asarray(features) @ history.merge
    return history.pooled, pooled, history


def replay_history(history):
    """Re-apply the recorded collapses to the snapshot; returns the pooled topology."""
    state = PoolState(history.snapshot)
    for rec in history.records:
        state.collapse(rec.edge)
    return state.finalize(history.records).pooled


def simplify(topo, target_edges, rounds=8):
    """Shortest-edge decimation down to ``target_edges`` (geometry-driven preprocessing).

    Lengths are refreshed between rounds so each round sees current geometry.
    """
    n = topo.n_edges
    steps = np.linspace(n, target_edges, rounds + 1)[1:]
    for step in steps:
        goal = max(int(round(step)), target_edges)
        if goal >= topo.n_edges:
            continue
        v = topo.vertices
        lengths = np.linalg.norm(v[topo.edges[:, 0]] - v[topo.edges[:, 1]], axis=1)
        try:
            topo, _, _ = mesh_pool(topo, None, goal, scores=lengths, geometric_check=True)
        except PoolExhaustedError:
            topo, _, _ = mesh_pool(topo, None, goal, scores=lengths)
    return topo
