"""Per-edge input descriptors.

The invariant descriptor has five channels per edge:

0. dihedral angle (radians, ``pi`` for a flat pair),
1-2. inner angles opposite the edge in its two faces, sorted ascending,
3-4. edge length over the triangle height on that edge, sorted ascending.

All five are unchanged by rotation, translation and uniform scaling.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFaceError, ShapeError

__all__ = [
    "FeatureStats",
    "compute_input_features",
    "compute_midpoint_features",
    "compute_features",
    "fit_stats",
    "apply_stats",
    "AREA_EPS",
    "STD_FLOOR",
]

AREA_EPS = 1e-12
STD_FLOOR = 1e-8


def _opposite_vertices(topo):
    """Opposite vertex per (edge, side); boundary sides repeat side 0."""
    ef = topo.edge_faces
    faces = topo.faces
    fe = topo.face_edges
    opp = np.empty((topo.n_edges, 2), dtype=np.int64)
    for side in (0, 1):
        f = np.where(ef[:, side] >= 0, ef[:, side], ef[:, 0])
        slot = np.argmax(fe[f] == np.arange(topo.n_edges)[:, None], axis=1)
        opp[:, side] = faces[f, (slot + 2) % 3]
    return opp


def compute_input_features(mesh, topo):
    """Return the ``(5, E)`` similarity-invariant descriptor as float64.

    ``mesh`` is accepted for interface symmetry; positions are read from
    ``topo.vertices`` (identical for a freshly built topology).
    """
    v = topo.vertices if topo is not None else mesh.vertices
    faces = topo.faces
    tri = v[faces]
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    twice_area = np.linalg.norm(cross, axis=1)
    if (0.5 * twice_area < AREA_EPS).any():
        bad = int(np.nonzero(0.5 * twice_area < AREA_EPS)[0][0])
        raise DegenerateFaceError(f"face {bad} {faces[bad].tolist()} is degenerate")
    normals = cross / twice_area[:, None]

    e0, e1 = topo.edges[:, 0], topo.edges[:, 1]
    evec = v[e1] - v[e0]
    elen = np.linalg.norm(evec, axis=1)
    opp = _opposite_vertices(topo)
    ef = topo.edge_faces
    f0 = ef[:, 0]
    f1 = np.where(ef[:, 1] >= 0, ef[:, 1], f0)

    cos_n = np.clip(np.einsum("ij,ij->i", normals[f0], normals[f1]), -1.0, 1.0)
    dihedral = np.pi - np.arccos(cos_n)
    dihedral[topo.boundary] = np.pi

    angles = np.empty((topo.n_edges, 2))
    ratios = np.empty((topo.n_edges, 2))
    for side in (0, 1):
        o = v[opp[:, side]]
        da = v[e0] - o
        db = v[e1] - o
        na = np.linalg.norm(da, axis=1)
        nb = np.linalg.norm(db, axis=1)
        cosang = np.clip(np.einsum("ij,ij->i", da, db) / (na * nb), -1.0, 1.0)
        angles[:, side] = np.arccos(cosang)
        # height on the edge = |cross| / |edge|, so ratio = |edge|^2 / |cross|
        cr = np.linalg.norm(np.cross(evec, o - v[e0]), axis=1)
        ratios[:, side] = elen * elen / cr
    angles.sort(axis=1)
    ratios.sort(axis=1)
    return np.vstack([dihedral, angles.T, ratios.T])


def compute_midpoint_features(mesh, topo):
    """Return the ``(3, E)`` edge-midpoint coordinates (not invariant)."""
    v = topo.vertices if topo is not None else mesh.vertices
    return (0.5 * (v[topo.edges[:, 0]] + v[topo.edges[:, 1]])).T.copy()


def compute_features(mesh, topo, mode="invariant"):
    if mode == "invariant":
        return compute_input_features(mesh, topo)
    if mode == "midpoint":
        return compute_midpoint_features(mesh, topo)
    raise ValueError(f"unknown feature mode {mode!r} (expected 'invariant' or 'midpoint')")


@dataclass(frozen=True, eq=False)
class FeatureStats:
    mean: np.ndarray
    std: np.ndarray

    @property
    def channels(self):
        return len(self.mean)


def fit_stats(tensors):
    """Per-channel mean and standard deviation over every edge of every tensor.

    Stored as float32 so a checkpoint round trip is exact.
    """
    tensors = list(tensors)
    if not tensors:
        raise ValueError("fit_stats needs at least one feature tensor")
    channels = {t.shape[0] for t in tensors}
    if len(channels) != 1:
        raise ShapeError(f"feature tensors disagree on channel count: {sorted(channels)}")
    flat = np.concatenate([np.asarray(t, dtype=np.float64) for t in tensors], axis=1)
    mean = flat.mean(axis=1)
    std = np.maximum(flat.std(axis=1), STD_FLOOR)
    return FeatureStats(mean.astype(np.float32), std.astype(np.float32))


def apply_stats(t, stats):
    t = np.asarray(t, dtype=np.float64)
    if t.shape[0] != stats.channels:
        raise ShapeError(f"tensor has {t.shape[0]} channels, stats have {stats.channels}")
    std = np.maximum(stats.std.astype(np.float64), STD_FLOOR)
    return (t - stats.mean.astype(np.float64)[:, None]) / std[:, None]
