import filecmp

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meshlearn.data import (
    AugmentParams,
    augment,
    flip_edges,
    load_dataset,
    load_entry,
    read_eseg,
    slide_vertices,
    write_eseg,
)
from meshlearn.errors import DatasetError
from meshlearn.features import compute_input_features
from meshlearn.mesh import Mesh, build_edge_topology, euler_characteristic, export_mesh
from meshlearn.synthetic import gen_synthetic, icosphere, perturbed_sphere

from conftest import quad_strip, regular_tetrahedron, write_text

NO_OP = AugmentParams(0, 0, 0, 0)


def _cls_tree(root, names=("sphere", "cube"), per_split=1):
    for name in names:
        for split in ("train", "test"):
            d = root / name / split
            d.mkdir(parents=True)
            for i in range(per_split):
                export_mesh(regular_tetrahedron(), None, d / f"{name}_{i}.obj")
    return root


# ------------------------------------------------------------------ loading

def test_class_ids_from_sorted_names(tmp_path):
    ds = load_dataset(_cls_tree(tmp_path), "classification")
    assert ds.class_names == ["cube", "sphere"] and ds.num_classes == 2
    labels = {e.path.parent.parent.name: e.label for e in ds.entries}
    assert labels == {"cube": 0, "sphere": 1}


def test_entries_in_lexicographic_order(tmp_path):
    ds = load_dataset(_cls_tree(tmp_path), "cls")
    paths = [str(e.path) for e in ds.entries]
    assert len(paths) == 4 and paths == sorted(paths)
    assert [e.split for e in ds.split("train")] == ["train", "train"]


def test_segmentation_layout(tmp_path):
    for split in ("train", "test"):
        (tmp_path / split).mkdir()
        p = export_mesh(regular_tetrahedron(), None, tmp_path / split / "t.obj")
        write_eseg(p.with_suffix(".eseg"), [0, 1, 0, 1, 1, 0])
    ds = load_dataset(tmp_path, "segmentation")
    mesh, topo, labels = load_entry(ds.entries[0])
    assert labels.tolist() == [0, 1, 0, 1, 1, 0]


def test_missing_label_file(tmp_path):
    (tmp_path / "train").mkdir()
    export_mesh(regular_tetrahedron(), None, tmp_path / "train" / "t.obj")
    with pytest.raises(DatasetError, match="missing"):
        load_dataset(tmp_path, "segmentation")


def test_label_count_mismatch_names_both_counts(tmp_path):
    (tmp_path / "train").mkdir()
    p = export_mesh(regular_tetrahedron(), None, tmp_path / "train" / "t.obj")
    write_eseg(p.with_suffix(".eseg"), [0] * 5)
    ds = load_dataset(tmp_path, "segmentation")
    with pytest.raises(DatasetError, match="5 labels .* 6 edges"):
        load_entry(ds.entries[0])


def test_eseg_parsing(tmp_path):
    p = write_text(tmp_path / "x.eseg", "1\n0\n\n2\n")
    assert read_eseg(p).tolist() == [1, 0, 2]
    with pytest.raises(DatasetError):
        read_eseg(write_text(tmp_path / "bad.eseg", "1\nfoo\n"))
    with pytest.raises(DatasetError):
        read_eseg(write_text(tmp_path / "neg.eseg", "-1\n"))


def test_empty_or_missing_roots(tmp_path):
    with pytest.raises(DatasetError):
        load_dataset(tmp_path / "nope", "cls")
    with pytest.raises(DatasetError):
        load_dataset(tmp_path, "cls")
    with pytest.raises(DatasetError):
        load_dataset(tmp_path, "regression")


# ------------------------------------------------------------- augmentation

def test_augment_params_validation():
    with pytest.raises(ValueError):
        AugmentParams(aniso_scale_sigma=-0.1)
    with pytest.raises(ValueError):
        AugmentParams(edge_flip_fraction=1.5)
    assert AugmentParams().slide_vertex_fraction == 0.2
    assert not AugmentParams(edge_flip_fraction=0).changes_topology
    assert not AugmentParams().geometric_only().changes_topology


def test_no_op_is_identity(ico2):
    out = augment(ico2, params=NO_OP, rng=np.random.default_rng(0))
    assert np.array_equal(out.vertices, ico2.vertices)
    assert np.array_equal(out.faces, ico2.faces)


def test_quad_flip_hand_trace():
    m = quad_strip()  # faces (0,1,2), (0,2,3): shared diagonal 0-2
    faces, flipped, skipped = flip_edges(m.vertices, m.faces, 1.0, np.random.default_rng(0))
    assert (flipped, skipped) == (1, 0)
    assert sorted(map(sorted, faces.tolist())) == [[0, 1, 3], [1, 2, 3]]
    topo = build_edge_topology(Mesh(m.vertices, faces))
    assert topo.n_edges == 5
    shared = topo.edges[~topo.boundary]
    assert sorted(shared[0].tolist()) == [1, 3]


def test_flip_refuses_tetrahedron():
    t = regular_tetrahedron()
    faces, flipped, skipped = flip_edges(t.vertices, t.faces, 1.0, np.random.default_rng(0))
    assert flipped == 0 and skipped == 6
    assert np.array_equal(faces, t.faces)


def test_flip_preserves_counts(ico2):
    faces, flipped, _ = flip_edges(ico2.vertices, ico2.faces, 0.3, np.random.default_rng(1))
    assert flipped > 0
    m = Mesh(ico2.vertices, faces)
    topo = build_edge_topology(m)
    assert topo.n_edges == build_edge_topology(ico2).n_edges
    assert euler_characteristic(m, topo) == 2


def test_slide_moves_toward_ring(ico2, ico2_topo):
    v, reverted = slide_vertices(ico2, ico2_topo, 0.5, np.random.default_rng(2))
    moved = np.nonzero(np.abs(v - ico2.vertices).max(axis=1) > 0)[0]
    assert len(moved) + reverted == round(0.5 * ico2.n_vertices)
    rings = ico2_topo.vertex_rings()
    for x in moved.tolist():
        d = v[x] - ico2.vertices[x]
        ok = False
        for e in rings[x]:
            other = int(ico2_topo.edges[e].sum()) - x
            chord = ico2.vertices[other] - ico2.vertices[x]
            t = d @ chord / (chord @ chord)
            if 0.2 - 1e-9 <= t <= 0.5 + 1e-9 and np.allclose(d, t * chord):
                ok = True
        assert ok


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_augmented_meshes_stay_manifold(seed):
    rng = np.random.default_rng(seed)
    m = perturbed_sphere(rng, 2)
    params = AugmentParams(0.1, 0.2, 0.05, 0.0)
    out = augment(m, params=params, rng=rng)
    topo = build_edge_topology(out)
    assert euler_characteristic(out, topo) == 2
    assert not topo.boundary.any()
    compute_input_features(out, topo)  # no degenerate faces


def test_random_collapses_shrink_mesh(ico2):
    out = augment(ico2, params=AugmentParams(0, 0, 0, 0.1), rng=np.random.default_rng(0))
    n0 = build_edge_topology(ico2).n_edges
    topo = build_edge_topology(out)
    assert topo.n_edges == n0 - 3 * int(0.1 * n0 / 3)
    assert euler_characteristic(out, topo) == 2


def test_isotropic_scale_keeps_features(ico2, ico2_topo):
    base = compute_input_features(ico2, ico2_topo)
    scaled = ico2.transformed(1.37 * np.eye(3))
    assert np.abs(compute_input_features(scaled, build_edge_topology(scaled)) - base).max() < 1e-6


def test_anisotropic_augmentation_changes_features(ico2, ico2_topo):
    out = augment(ico2, params=AugmentParams(0.1, 0, 0, 0), rng=np.random.default_rng(3))
    assert np.array_equal(out.faces, ico2.faces)
    assert np.abs(compute_input_features(out, build_edge_topology(out))
                  - compute_input_features(ico2, ico2_topo)).max() > 1e-3


def test_geometric_augmentation_keeps_edge_order(ico2, ico2_topo):
    out = augment(ico2, params=AugmentParams(0.1, 0.2, 0, 0), rng=np.random.default_rng(4))
    assert np.array_equal(build_edge_topology(out).edges, ico2_topo.edges)


def test_augment_is_seeded(ico2):
    p = AugmentParams(seed=11)
    a, b = augment(ico2, params=p), augment(ico2, params=p)
    assert np.array_equal(a.vertices, b.vertices) and np.array_equal(a.faces, b.faces)


# ---------------------------------------------------------------- synthetic

def test_gen_classification_layout(tmp_path):
    paths = gen_synthetic(tmp_path, "cls", n_classes=2, count=3, target_edges=150, seed=0)
    assert len(paths) == 6
    ds = load_dataset(tmp_path, "cls")
    assert ds.class_names == ["box", "sphere"]
    assert len(ds.split("test")) == 2
    for e in ds.entries:
        mesh, topo, _ = load_entry(e)
        assert abs(topo.n_edges - 150) <= 3
        assert euler_characteristic(mesh, topo) == 2


def test_gen_segmentation_alignment(tmp_path):
    gen_synthetic(tmp_path, "seg", n_classes=2, count=3, target_edges=300, seed=1)
    ds = load_dataset(tmp_path, "seg")
    assert len(ds) == 3
    for e in ds.entries:
        mesh, topo, labels = load_entry(e)
        assert len(labels) == topo.n_edges
        assert set(labels.tolist()) == {0, 1}
        # caps lie beyond the cylinder body along the axis
        mid = 0.5 * (mesh.vertices[topo.edges[:, 0]] + mesh.vertices[topo.edges[:, 1]])
        assert np.abs(mid[labels == 1, 2]).min() > np.abs(mid[labels == 0, 2]).max() - 1e-9


def test_gen_is_byte_identical(tmp_path):
    a = gen_synthetic(tmp_path / "a", "seg", count=2, target_edges=200, seed=7)
    b = gen_synthetic(tmp_path / "b", "seg", count=2, target_edges=200, seed=7)
    for pa, pb in zip(a, b):
        assert filecmp.cmp(pa, pb, shallow=False)
        assert filecmp.cmp(pa.with_suffix(".eseg"), pb.with_suffix(".eseg"), shallow=False)


def test_gen_argument_errors(tmp_path):
    with pytest.raises(ValueError):
        gen_synthetic(tmp_path, "cls", target_edges=10)
    with pytest.raises(ValueError):
        gen_synthetic(tmp_path, "cls", n_classes=9)
    with pytest.raises(ValueError):
        gen_synthetic(tmp_path, "regression")


def test_icosphere_counts():
    for k in range(4):
        m = icosphere(k)
        assert build_edge_topology(m).n_edges == 30 * 4 ** k
