"""Dataset discovery, edge label files and training-time augmentation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetError, MeshError, PoolExhaustedError
from .mesh import Mesh, build_edge_topology, load_obj, topology_to_mesh
from .pool import mesh_pool

__all__ = [
    "DatasetEntry",
    "Dataset",
    "AugmentParams",
    "load_dataset",
    "read_eseg",
    "write_eseg",
    "load_entry",
    "augment",
    "flip_edges",
    "slide_vertices",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DatasetEntry:
    path: Path
    split: str
    label: int | None = None
    label_path: Path | None = None


@dataclass
class Dataset:
    root: Path
    task: str
    entries: list
    class_names: list = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def split(self, name):
        return [e for e in self.entries if e.split == name]

    @property
    def num_classes(self):
        return len(self.class_names)


def read_eseg(path, n_edges=None):
    """Read one 0-based integer label per line; check the count if ``n_edges`` is given."""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"missing edge label file {path}")
    text = [ln.strip() for ln in path.read_text().splitlines()]
    try:
        labels = np.array([int(t) for t in text if t], dtype=np.int64)
    except ValueError as exc:
        raise DatasetError(f"{path}: {exc}") from None
    if n_edges is not None and len(labels) != n_edges:
        raise DatasetError(f"{path}: {len(labels)} labels for a mesh with {n_edges} edges")
    if len(labels) and labels.min() < 0:
        raise DatasetError(f"{path}: negative label")
    return labels


def write_eseg(path, labels):
    with open(path, "w") as fh:
        fh.write("".join(f"{int(x)}\n" for x in labels))


def load_dataset(root, task="classification"):
    """Index a dataset tree.

    Classification layout is ``<root>/<class>/<train|test>/*.obj``, with class
    ids given by the sorted class directory names. Segmentation layout is
    ``<root>/<train|test>/*.obj`` with a sibling ``<name>.eseg`` per mesh.
    Entries are sorted by path. Label files are checked for presence here and
    for length when the mesh is loaded.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} is not a directory")
    task = {"cls": "classification", "seg": "segmentation"}.get(task, task)
    entries = []
    if task == "classification":
        classes = sorted(p.name for p in root.iterdir() if p.is_dir())
        if not classes:
            raise DatasetError(f"no class directories under {root}")
        for cid, name in enumerate(classes):
            for split in ("train", "test"):
                for p in sorted((root / name / split).glob("*.obj")):
                    entries.append(DatasetEntry(p, split, label=cid))
        entries.sort(key=lambda e: str(e.path))
    elif task == "segmentation":
        classes = []
        for split in ("train", "test"):
            for p in sorted((root / split).glob("*.obj")):
                lp = p.with_suffix(".eseg")
                if not lp.exists():
                    raise DatasetError(f"missing edge label file {lp}")
                entries.append(DatasetEntry(p, split, label_path=lp))
        entries.sort(key=lambda e: str(e.path))
    else:
        raise DatasetError(f"unknown task {task!r}")
    if not entries:
        raise DatasetError(f"no .obj meshes found under {root}")
    return Dataset(root, task, entries, classes)


def load_entry(entry):
    """Return ``(mesh, topo, label)`` where label is an int or a per-edge array."""
    mesh = load_obj(entry.path)
    topo = build_edge_topology(mesh)
    if entry.label_path is not None:
        return mesh, topo, read_eseg(entry.label_path, topo.n_edges)
    return mesh, topo, entry.label


@dataclass(frozen=True)
class AugmentParams:
    aniso_scale_sigma: float = 0.1
    slide_vertex_fraction: float = 0.20
    edge_flip_fraction: float = 0.05
    random_collapse_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.aniso_scale_sigma < 0:
            raise ValueError("aniso_scale_sigma must be non-negative")
        for name in ("slide_vertex_fraction", "edge_flip_fraction", "random_collapse_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    @property
    def changes_topology(self):
        return self.edge_flip_fraction > 0 or self.random_collapse_fraction > 0

    def geometric_only(self):
        """Copy with flips and collapses switched off (keeps edge labels aligned)."""
        return AugmentParams(self.aniso_scale_sigma, self.slide_vertex_fraction, 0.0, 0.0, self.seed)


def _face_normals(v, faces):
    n = np.cross(v[faces[:, 1]] - v[faces[:, 0]], v[faces[:, 2]] - v[faces[:, 0]])
    return n


def slide_vertices(mesh, topo, fraction, rng):
    """Move a random subset of vertices part way toward a random 1-ring neighbour.

    Targets are the neighbours' original positions. A move is undone if any incident face becomes degenerate or turns over.
    Returns the new vertex array and the number of reverted moves.
    """
    v = mesh.vertices.copy()
    original = mesh.vertices
    nv = len(v)
    count = int(round(fraction * nv))
    if count == 0:
        return v, 0
    chosen = rng.choice(nv, size=count, replace=False)
    rings = topo.vertex_rings()
    edges = topo.edges
    vf = [[] for _ in range(nv)]
    for fi, f in enumerate(topo.faces.tolist()):
        for x in f:
            vf[x].append(fi)
    reverted = 0
    for x in chosen.tolist():
        ring = sorted(int(edges[e][0] + edges[e][1] - x) for e in rings[x])
        target = ring[int(rng.integers(len(ring)))]
        u = rng.uniform(0.2, 0.5)
        inc = topo.faces[vf[x]]
        before = _face_normals(v, inc)
        old = v[x].copy()
        v[x] = old + u * (original[target] - old)
        after = _face_normals(v, inc)
        area = 0.5 * np.linalg.norm(after, axis=1)
        if (area < 1e-10).any() or (np.einsum("ij,ij->i", before, after) <= 0).any():
            v[x] = old
            reverted += 1
    return v, reverted


def flip_edges(vertices, faces, fraction, rng):
    """Flip a random ``fraction`` of interior edges in place of their quads' other diagonal.

    Flips that would create an existing edge, leave an interior vertex with
    fewer than three neighbours (a boundary vertex with fewer than two), or
    produce a degenerate or folded triangle are skipped.
    Returns ``(faces', n_flipped, n_skipped)``.
    """
    faces = np.array(faces, dtype=np.int64)
    v = np.asarray(vertices)
    half = {}
    for fi, (a, b, c) in enumerate(faces.tolist()):
        half[(a, b)] = fi
        half[(b, c)] = fi
        half[(c, a)] = fi
    valence = np.zeros(len(v), dtype=np.int64)
    on_boundary = np.zeros(len(v), dtype=bool)
    interior = []
    for (a, b), fi in half.items():
        if a < b:
            valence[a] += 1
            valence[b] += 1
            if (b, a) in half:
                interior.append((a, b))
        elif (b, a) not in half:
            valence[a] += 1
            valence[b] += 1
        if (b, a) not in half:
            on_boundary[a] = on_boundary[b] = True
    # an endpoint loses one edge: interior fans need 3 left, boundary fans 2
    min_valence = np.where(on_boundary, 3, 4)
    interior.sort()
    count = int(round(fraction * len(interior)))
    if count == 0:
        return faces, 0, 0
    picks = rng.choice(len(interior), size=count, replace=False)
    flipped = skipped = 0

    def third(fi, a, b):
        f = faces[fi].tolist()
        return next(x for x in f if x != a and x != b)

    for k in picks.tolist():
        a, b = interior[k]
        f1, f2 = half.get((a, b)), half.get((b, a))
        if f1 is None or f2 is None:
            skipped += 1
            continue
        o1, o2 = third(f1, a, b), third(f2, a, b)
        if o1 == o2 or (o1, o2) in half or (o2, o1) in half or valence[a] < min_valence[a] or valence[b] < min_valence[b]:
            skipped += 1
            continue
        new1, new2 = (o1, a, o2), (o2, b, o1)
        old_n = _face_normals(v, faces[[f1, f2]]).sum(axis=0)
        nn = _face_normals(v, np.array([new1, new2]))
        if (0.5 * np.linalg.norm(nn, axis=1) < 1e-10).any() or (nn @ old_n <= 0).any():
            skipped += 1
            continue
        for fi in (f1, f2):
            x, y, z = faces[fi].tolist()
            for he in ((x, y), (y, z), (z, x)):
                del half[he]
        faces[f1], faces[f2] = new1, new2
        for fi in (f1, f2):
            x, y, z = faces[fi].tolist()
            half[(x, y)] = half[(y, z)] = half[(z, x)] = fi
        valence[a] -= 1
        valence[b] -= 1
        valence[o1] += 1
        valence[o2] += 1
        flipped += 1
    return faces, flipped, skipped


def augment(mesh, topo=None, params=AugmentParams(), rng=None):
    """Return an augmented copy of ``mesh``.

    Steps, in order: per-axis scaling by factors drawn from ``N(1, sigma)``,
    vertex sliding, edge flips and random collapses. Any step with a zero
    parameter is skipped, so the default-free call
    ``augment(m, params=AugmentParams(0, 0, 0, 0))`` returns ``m`` unchanged.
    """
    if rng is None:
        rng = np.random.default_rng(params.seed)
    if topo is None:
        topo = build_edge_topology(mesh)
    v = mesh.vertices.copy()
    faces = mesh.faces
    if params.aniso_scale_sigma > 0:
        scale = rng.normal(1.0, params.aniso_scale_sigma, size=3)
        v = v * np.clip(scale, 0.5, 1.5)
    cur = Mesh(v, faces)
    if params.slide_vertex_fraction > 0:
        v, reverted = slide_vertices(cur, topo.with_vertices(v), params.slide_vertex_fraction, rng)
        if reverted:
            logger.debug("slide: reverted %d moves", reverted)
        cur = Mesh(v, faces)
    if params.edge_flip_fraction > 0:
        faces, _, skipped = flip_edges(v, faces, params.edge_flip_fraction, rng)
        if skipped:
            logger.debug("flip: skipped %d edges", skipped)
        cur = Mesh(v, faces)
    if params.random_collapse_fraction > 0:
        t = build_edge_topology(cur)
        n = int(params.random_collapse_fraction * t.n_edges / 3)
        if n:
            try:
                t, _, _ = mesh_pool(t, None, t.n_edges - 3 * n, mode="random", rng=rng)
            except (MeshError, PoolExhaustedError) as exc:
                logger.debug("collapse: stopped early (%s)", exc)
            cur = topology_to_mesh(t)
    return cur
