"""Parametric primitives and a small synthetic dataset generator.

Classification sets draw from ``sphere``, ``box`` (with a bump on one side)
and ``cylinder``; each mesh gets random proportions and is decimated to the
requested edge count. Segmentation sets are capsules whose end caps are
labelled apart from the cylindrical body.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import write_eseg
from .mesh import Mesh, build_edge_topology, export_mesh, topology_to_mesh

__all__ = [
    "icosphere",
    "box",
    "cylinder",
    "capsule",
    "tetrahedron",
    "random_rotation",
    "random_similarity",
    "orient_outward",
    "perturbed_sphere",
    "CLASS_SHAPES",
    "gen_synthetic",
    "write_eseg",
]

CLASS_SHAPES = ("sphere", "box", "cylinder")


def tetrahedron(scale=1.0):
    """Regular tetrahedron with unit edge length times ``scale``, outward winding."""
    v = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=np.float64)
    v *= scale / (2.0 * np.sqrt(2.0))
    f = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    return orient_outward(Mesh(v, f))


def signed_volume(mesh):
    t = mesh.vertices[mesh.faces]
    return float(np.einsum("ij,ij->i", t[:, 0], np.cross(t[:, 1], t[:, 2])).sum() / 6.0)


def orient_outward(mesh):
    """Flip all faces if the (consistently wound) closed mesh encloses negative volume."""
    if signed_volume(mesh) < 0:
        return Mesh(mesh.vertices, mesh.faces[:, ::-1])
    return mesh


def _weld(vertices, faces, decimals=9):
    keys = np.round(vertices, decimals)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    first = np.full(len(uniq), -1)
    for i, k in enumerate(inverse):
        if first[k] < 0:
            first[k] = i
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    return vertices[first[order]], rank[inverse][faces]


def icosphere(subdivisions=2, radius=1.0):
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ]
    faces = [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
    verts = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}
        new_faces = []

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new_faces
    return orient_outward(Mesh(np.array(verts) * radius, np.array(faces)))


def box(size=(1.0, 1.0, 1.0), divisions=8, bump_height=0.0, bump_radius=0.3, bump_center=(0.0, 0.0)):
    """Axis-aligned box centred at the origin, each side a ``divisions`` grid.

    A Gaussian bump of ``bump_height`` can be raised on the +z side.
    """
    n = divisions
    g = np.linspace(-1.0, 1.0, n + 1)
    uu, vv = np.meshgrid(g, g, indexing="ij")
    uu, vv = uu.ravel(), vv.ravel()
    quads = []
    for i in range(n):
        for j in range(n):
            p = i * (n + 1) + j
            quads.append([p, p + n + 1, p + n + 2, p + 1])
    quads = np.array(quads)
    verts, faces = [], []
    for axis in range(3):
        for sign in (-1.0, 1.0):
            pts = np.zeros((len(uu), 3))
            others = [k for k in range(3) if k != axis]
            pts[:, axis] = sign
            pts[:, others[0]] = uu
            pts[:, others[1]] = vv
            base = sum(len(v) for v in verts)
            verts.append(pts)
            tri = np.concatenate([quads[:, [0, 1, 2]], quads[:, [0, 2, 3]]]) + base
            # orient each side outward
            t = pts[tri - base]
            nrm = np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])
            flip = nrm[:, axis] * sign < 0
            tri[flip] = tri[flip][:, ::-1]
            faces.append(tri)
    v, f = _weld(np.concatenate(verts), np.concatenate(faces))
    if bump_height:
        top = np.isclose(v[:, 2], 1.0)
        r2 = (v[:, 0] - bump_center[0]) ** 2 + (v[:, 1] - bump_center[1]) ** 2
        v[top, 2] += bump_height * np.exp(-r2[top] / (2 * bump_radius ** 2))
    v = v * (0.5 * np.asarray(size, dtype=np.float64))
    return Mesh(v, f)


def cylinder(radius=0.5, height=2.0, segments=16, rings=8):
    """Closed cylinder along z with fan caps."""
    theta = np.linspace(0, 2 * np.pi, segments, endpoint=False)
    zs = np.linspace(-height / 2, height / 2, rings + 1)
    verts = [[radius * np.cos(t), radius * np.sin(t), z] for z in zs for t in theta]
    verts += [[0, 0, -height / 2], [0, 0, height / 2]]
    bottom, top = len(verts) - 2, len(verts) - 1
    faces = []
    for r in range(rings):
        for s in range(segments):
            a = r * segments + s
            b = r * segments + (s + 1) % segments
            c = a + segments
            d = b + segments
            faces += [[a, b, d], [a, d, c]]
    last = rings * segments
    for s in range(segments):
        faces.append([bottom, (s + 1) % segments, s])
        faces.append([top, last + s, last + (s + 1) % segments])
    return orient_outward(Mesh(np.array(verts, dtype=np.float64), np.array(faces)))


def capsule(radius=0.5, half_length=1.0, segments=12, rings=20, twist=0.0, n_parts=2):
    """Cylinder of length ``2 * half_length`` capped by hemispheres, axis along z.

    ``rings`` latitude circles are spaced evenly in arc length between the
    poles. Returns ``(mesh, edge_labels)``: body edges are 0, cap edges 1
    (with ``n_parts=3`` the bottom cap is 2).
    """
    r, h = radius, half_length
    cap_len = 0.5 * np.pi * r
    total = 2 * cap_len + 2 * h
    s = total * np.arange(1, rings + 1) / (rings + 1)
    z = np.empty(rings)
    rad = np.empty(rings)
    lower = s < cap_len
    upper = s > cap_len + 2 * h
    body = ~(lower | upper)
    phi = s[lower] / r
    z[lower], rad[lower] = -h - r * np.cos(phi), r * np.sin(phi)
    z[body], rad[body] = -h + (s[body] - cap_len), r
    phi = (total - s[upper]) / r
    z[upper], rad[upper] = h + r * np.cos(phi), r * np.sin(phi)

    verts = []
    for k in range(rings):
        off = twist * k * np.pi / segments
        t = np.linspace(0, 2 * np.pi, segments, endpoint=False) + off
        verts += [[rad[k] * np.cos(a), rad[k] * np.sin(a), z[k]] for a in t]
    verts += [[0.0, 0.0, -h - r], [0.0, 0.0, h + r]]
    south, north = len(verts) - 2, len(verts) - 1
    faces = []
    for k in range(rings - 1):
        for j in range(segments):
            a = k * segments + j
            b = k * segments + (j + 1) % segments
            c, d = a + segments, b + segments
            faces += [[a, b, d], [a, d, c]]
    last = (rings - 1) * segments
    for j in range(segments):
        faces.append([south, (j + 1) % segments, j])
        faces.append([north, last + j, last + (j + 1) % segments])
    mesh = orient_outward(Mesh(np.array(verts, dtype=np.float64), np.array(faces)))
    labels = capsule_labels(mesh, h, n_parts)
    return mesh, labels


def capsule_labels(mesh, half_length, n_parts=2):
    topo = build_edge_topology(mesh)
    mid = 0.5 * (mesh.vertices[topo.edges[:, 0]] + mesh.vertices[topo.edges[:, 1]])
    tol = 1e-9 * max(1.0, half_length)
    labels = np.zeros(topo.n_edges, dtype=np.int64)
    labels[mid[:, 2] > half_length + tol] = 1
    labels[mid[:, 2] < -half_length - tol] = 2 if n_parts == 3 else 1
    return labels


def random_rotation(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def random_similarity(mesh, rng):
    """Apply a random rotation, translation and positive uniform scale."""
    scale = float(np.exp(rng.uniform(np.log(0.2), np.log(5.0))))
    return mesh.transformed(scale * random_rotation(rng), rng.uniform(-10, 10, size=3))


def perturbed_sphere(rng, subdivisions=2, noise=0.15):
    """Icosphere with random radial noise: a generic (non-symmetric) closed mesh."""
    m = icosphere(subdivisions)
    radial = 1.0 + noise * rng.uniform(-1, 1, size=(m.n_vertices, 1))
    return Mesh(m.vertices * radial, m.faces)


def _decimate(mesh, target_edges):
    from .pool import simplify

    topo = build_edge_topology(mesh)
    target = target_edges - (topo.n_edges - target_edges) % 3
    if topo.n_edges > target:
        topo = simplify(topo, target)
    return topology_to_mesh(topo)


def _class_mesh(shape, rng, target_edges):
    if shape == "sphere":
        base = icosphere(3)
        m = base.transformed(np.diag(rng.uniform(0.8, 1.2, size=3)))
    elif shape == "box":
        size = rng.uniform(0.7, 1.3, size=3)
        center = rng.uniform(-0.3, 0.3, size=2)
        m = box(size, divisions=12, bump_height=rng.uniform(0.25, 0.4),
                bump_radius=rng.uniform(0.25, 0.35), bump_center=center)
    elif shape == "cylinder":
        m = cylinder(rng.uniform(0.35, 0.6), rng.uniform(1.2, 2.2), segments=24, rings=12)
    else:
        raise ValueError(f"unknown primitive {shape!r}")
    m = _decimate(m, target_edges)
    return m.transformed(random_rotation(rng))


def _capsule_mesh(rng, target_edges, n_parts):
    # a closed capsule with s segments and r rings has s * r + 2 vertices, 3 * s * r edges
    side = np.sqrt(target_edges / 3)
    lo = max(6, int(round(0.75 * side)))
    segments = int(rng.integers(lo, max(lo, int(round(1.25 * side))) + 1))
    rings = max(4, int(round(target_edges / (3 * segments))))
    mesh, labels = capsule(
        radius=rng.uniform(0.45, 0.55),
        half_length=rng.uniform(0.95, 1.05),
        segments=segments,
        rings=rings,
        twist=float(rng.integers(0, 2)),
        n_parts=n_parts,
    )
    angle = rng.uniform(0, 2 * np.pi)
    c, s = np.cos(angle), np.sin(angle)
    return mesh.transformed(np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])), labels


def gen_synthetic(out_dir, task="cls", n_classes=2, count=20, target_edges=750, seed=0, test_fraction=0.2):
    """Write a synthetic dataset to ``out_dir`` and return the list of written paths.

    Classification: ``<out>/<class>/<train|test>/<class>_NNN.obj`` with
    ``count`` meshes per class. Segmentation: ``<out>/<train|test>/capsule_NNN.obj``
    with a sibling ``.eseg`` label file, ``count`` meshes in total.
    """
    if target_edges < 20:
        raise ValueError("target_edges must be at least 20")
    out = Path(out_dir)
    rng = np.random.default_rng(seed)
    n_test = int(round(count * test_fraction))
    written = []
    if task in ("cls", "classification"):
        if not 1 <= n_classes <= len(CLASS_SHAPES):
            raise ValueError(f"n_classes must be in [1, {len(CLASS_SHAPES)}]")
        for shape in CLASS_SHAPES[:n_classes]:
            for i in range(count):
                split = "test" if i >= count - n_test else "train"
                d = out / shape / split
                d.mkdir(parents=True, exist_ok=True)
                mesh = _class_mesh(shape, rng, target_edges)
                written.append(export_mesh(mesh, None, d / f"{shape}_{i:03d}.obj"))
    elif task in ("seg", "segmentation"):
        n_parts = 3 if n_classes >= 3 else 2
        for i in range(count):
            split = "test" if i >= count - n_test else "train"
            d = out / split
            d.mkdir(parents=True, exist_ok=True)
            mesh, labels = _capsule_mesh(rng, target_edges, n_parts)
            p = export_mesh(mesh, None, d / f"capsule_{i:03d}.obj")
            write_eseg(p.with_suffix(".eseg"), labels)
            written.append(p)
    else:
        raise ValueError(f"unknown task {task!r}")
    return written
