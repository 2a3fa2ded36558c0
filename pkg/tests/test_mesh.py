import logging

import numpy as np
import pytest

from meshlearn.errors import MeshError, NonManifoldError, ObjParseError, WindingError
from meshlearn.mesh import (
    PALETTE,
    Mesh,
    build_edge_topology,
    euler_characteristic,
    export_mesh,
    face_labels_from_edges,
    load_obj,
    read_ply_face_colors,
)
from meshlearn.synthetic import box, capsule, cylinder, icosphere

from conftest import quad_strip, regular_tetrahedron, write_text


def brute_force_adjacency(faces):
    """Independent edge enumeration: dict-of-half-edges walk over the faces."""
    order, index = [], {}
    incident = {}
    for fi, (a, b, c) in enumerate(faces):
        for u, w in ((a, b), (b, c), (c, a)):
            key = frozenset((u, w))
            if key not in index:
                index[key] = len(order)
                order.append((u, w))
            incident.setdefault(key, []).append(fi)
    sentinel = len(order)
    neighbors = []
    for u, w in order:
        row = []
        for fi in sorted(incident[frozenset((u, w))]):
            f = list(faces[fi])
            hes = [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])]
            k = next(i for i, (x, y) in enumerate(hes) if {x, y} == {u, w})
            row += [index[frozenset(hes[(k + 1) % 3])], index[frozenset(hes[(k + 2) % 3])]]
        row += [sentinel] * (4 - len(row))
        neighbors.append(row)
    return order, neighbors


# ----------------------------------------------------------------- load_obj

def test_single_triangle(tmp_path):
    p = write_text(tmp_path / "t.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    m = load_obj(p)
    assert m.n_vertices == 3 and m.n_faces == 1
    topo = build_edge_topology(m)
    assert topo.n_edges == 3
    assert euler_characteristic(m, topo) == 1


def test_quad_face_rejected_with_line(tmp_path):
    p = write_text(tmp_path / "q.obj", "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    with pytest.raises(ObjParseError, match="line 5.*non-triangular face"):
        load_obj(p)


def test_malformed_vertex_line(tmp_path):
    p = write_text(tmp_path / "bad.obj", "v 0 0 0\nv 1 x 0\nv 0 1 0\nf 1 2 3\n")
    with pytest.raises(ObjParseError, match="line 2"):
        load_obj(p)


def test_out_of_range_index(tmp_path):
    p = write_text(tmp_path / "r.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
    with pytest.raises(ObjParseError, match="line 4"):
        load_obj(p)


def test_slash_and_negative_indices(tmp_path):
    text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvn 0 0 1\nf 1/1/1 2//1 -1/1\n"
    m = load_obj(write_text(tmp_path / "s.obj", text))
    assert m.faces.tolist() == [[0, 1, 2]]


def test_tetrahedron_obj(tmp_path):
    m = regular_tetrahedron()
    p = export_mesh(m, None, tmp_path / "tet.obj")
    back = load_obj(p)
    assert back.n_vertices == 4 and back.n_faces == 4
    assert build_edge_topology(back).n_edges == 6


def test_isolated_vertices_dropped(tmp_path, caplog):
    p = write_text(tmp_path / "iso.obj", "v 5 5 5\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 2 3 4\n")
    with caplog.at_level(logging.WARNING):
        m = load_obj(p)
    assert m.n_vertices == 3
    assert m.dropped_vertices == 1
    assert m.faces.tolist() == [[0, 1, 2]]
    assert "isolated" in caplog.text


def test_mesh_rejects_repeated_and_duplicate_faces():
    v = np.eye(3)
    with pytest.raises(MeshError, match="repeats"):
        Mesh(v, [[0, 0, 1]])
    with pytest.raises(MeshError, match="duplicate"):
        Mesh(v, [[0, 1, 2], [1, 2, 0]])


# -------------------------------------------------------- build_edge_topology

def test_tetrahedron_topology(tetra):
    topo = build_edge_topology(tetra)
    assert topo.n_edges == 6
    assert not topo.boundary.any()
    assert (topo.neighbors < topo.sentinel).all()
    for e in range(6):
        assert len(set(topo.neighbors[e].tolist())) == 4


def test_quad_strip_topology(quad):
    topo = build_edge_topology(quad)
    assert topo.n_edges == 5
    shared = [e for e in range(5) if not topo.boundary[e]]
    assert len(shared) == 1
    assert (topo.neighbors[shared[0]] < 5).all()
    for e in range(5):
        if topo.boundary[e]:
            assert (topo.neighbors[e, :2] < 5).all()
            assert (topo.neighbors[e, 2:] == topo.sentinel).all()


@pytest.mark.parametrize(
    "mesh",
    [regular_tetrahedron(), quad_strip(), icosphere(1), box(divisions=3), cylinder(segments=7, rings=3)],
    ids=["tetra", "quad", "ico1", "box", "cylinder"],
)
def test_matches_brute_force_adjacency(mesh):
    topo = build_edge_topology(mesh)
    order, neighbors = brute_force_adjacency(mesh.faces.tolist())
    assert topo.edges.tolist() == [list(e) for e in order]
    assert topo.neighbors.tolist() == neighbors


def test_neighbors_share_one_vertex_and_are_symmetric(ico2_topo):
    topo = ico2_topo
    for e in range(topo.n_edges):
        ends = set(topo.edges[e].tolist())
        for n in topo.neighbors[e].tolist():
            assert len(ends & set(topo.edges[n].tolist())) == 1
            assert e in topo.neighbors[n].tolist()


def test_non_manifold_edge():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1]], dtype=float)
    m = Mesh(v, [[0, 1, 2], [1, 0, 3], [0, 1, 4]])
    with pytest.raises(NonManifoldError, match=r"\(0, 1\) is shared by 3 faces"):
        build_edge_topology(m)


def test_four_faces_on_one_edge():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=float)
    m = Mesh(v, [[0, 1, 2], [1, 0, 3], [0, 1, 4], [1, 0, 5]])
    with pytest.raises(NonManifoldError, match="shared by 4"):
        build_edge_topology(m)


def test_inconsistent_winding():
    v = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float)
    # both faces walk the shared edge 0 -> 2
    m = Mesh(v, [[0, 1, 2], [0, 2, 3][::-1]])
    with pytest.raises(WindingError):
        build_edge_topology(m)


def test_reload_is_deterministic(tmp_path, ico2):
    p = export_mesh(ico2, None, tmp_path / "ico.obj")
    assert build_edge_topology(load_obj(p)) == build_edge_topology(load_obj(p))


# -------------------------------------------------------------------- euler

def test_euler_characteristics(tetra):
    assert euler_characteristic(tetra) == 2
    for k in range(4):
        assert euler_characteristic(icosphere(k)) == 2
    assert euler_characteristic(box(divisions=4)) == 2
    assert euler_characteristic(cylinder()) == 2


def test_torus_has_euler_zero():
    n, m = 8, 6
    verts, faces = [], []
    for i in range(n):
        for j in range(m):
            a, b = 2 * np.pi * i / n, 2 * np.pi * j / m
            verts.append([(2 + np.cos(b)) * np.cos(a), (2 + np.cos(b)) * np.sin(a), np.sin(b)])
    for i in range(n):
        for j in range(m):
            p, q = i * m + j, ((i + 1) % n) * m + j
            r, s = ((i + 1) % n) * m + (j + 1) % m, i * m + (j + 1) % m
            faces += [[p, q, r], [p, r, s]]
    assert euler_characteristic(Mesh(np.array(verts), faces)) == 0


# ------------------------------------------------------------------- export

def test_obj_round_trip(tmp_path, ico2):
    back = load_obj(export_mesh(ico2, None, tmp_path / "a.obj"))
    assert np.array_equal(back.faces, ico2.faces)
    assert np.abs(back.vertices - ico2.vertices).max() < 1e-6


def test_ply_single_label(tmp_path, tetra, tetra_topo):
    p = export_mesh(tetra, tetra_topo, tmp_path / "a.ply", np.zeros(6, dtype=int))
    colors = read_ply_face_colors(p)
    assert colors.shape == (4, 3)
    assert (colors == PALETTE[0]).all()


def test_ply_two_regions(tmp_path):
    mesh, labels = capsule(segments=8, rings=6)
    topo = build_edge_topology(mesh)
    p = export_mesh(mesh, topo, tmp_path / "cap.ply", labels)
    colors = read_ply_face_colors(p)
    face_lab = face_labels_from_edges(topo, labels)
    assert {tuple(c) for c in colors.tolist()} == {tuple(PALETTE[0]), tuple(PALETTE[1])}
    for fl, c in zip(face_lab, colors):
        assert tuple(c) == tuple(PALETTE[fl % 16])


def test_face_label_majority_and_tie():
    topo = build_edge_topology(regular_tetrahedron())
    lab = np.zeros(6, dtype=int)
    e0, e1, e2 = topo.face_edges[0]
    lab[[e0, e1, e2]] = [3, 3, 1]
    assert face_labels_from_edges(topo, lab)[0] == 3
    lab[[e0, e1, e2]] = [5, 2, 7]
    assert face_labels_from_edges(topo, lab)[0] == 2


def test_palette_cycles(tmp_path, tetra, tetra_topo):
    p = export_mesh(tetra, tetra_topo, tmp_path / "c.ply", np.full(6, 17))
    assert (read_ply_face_colors(p) == PALETTE[1]).all()


def test_wrong_label_count(tmp_path, tetra, tetra_topo):
    with pytest.raises(ValueError):
        export_mesh(tetra, tetra_topo, tmp_path / "x.ply", np.zeros(5, dtype=int))
