import sys

import numpy as np
import pytest

from meshlearn.config import RunConfig
from meshlearn.mesh import Mesh, build_edge_topology
from meshlearn.synthetic import gen_synthetic, icosphere

# a small network that trains in seconds on ~150-edge meshes
TINY_CLS = dict(task="classification", input_edges=150, pool_targets=(120, 90, 60, 45),
                conv_channels=(8, 8, 8, 8), fc_dims=(16,), norm_groups=4, batch_size=4)
TINY_SEG = dict(task="segmentation", input_edges=150, pool_targets=(120, 90, 60, 45),
                conv_channels=(4, 8, 8, 8), norm_groups=4, batch_size=4)


def regular_tetrahedron():
    """Unit-edge regular tetrahedron with outward counter-clockwise faces."""
    v = np.array(
        [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=np.float64
    ) / (2 * np.sqrt(2))
    f = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    return Mesh(v, f)


def quad_strip():
    """Two triangles sharing the edge (0, 2) in the z = 0 plane."""
    v = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=np.float64)
    return Mesh(v, np.array([[0, 1, 2], [0, 2, 3]]))


def write_text(path, text):
    path.write_text(text)
    return path


@pytest.fixture
def tetra():
    return regular_tetrahedron()


@pytest.fixture
def tetra_topo(tetra):
    return build_edge_topology(tetra)


@pytest.fixture
def quad():
    return quad_strip()


@pytest.fixture(scope="session")
def ico2():
    return icosphere(2)


@pytest.fixture(scope="session")
def ico2_topo(ico2):
    return build_edge_topology(ico2)


@pytest.fixture(scope="session")
def ico3():
    return icosphere(3)


@pytest.fixture(scope="session")
def ico3_topo(ico3):
    return build_edge_topology(ico3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_config(kind="cls", **overrides):
    base = dict(TINY_CLS if kind == "cls" else TINY_SEG)
    base.update(overrides)
    return RunConfig(**base)


@pytest.fixture(scope="session")
def tiny_cls_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cls")
    gen_synthetic(d, "cls", n_classes=2, count=5, target_edges=150, seed=0)
    return d


@pytest.fixture(scope="session")
def tiny_seg_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("seg")
    gen_synthetic(d, "seg", n_classes=2, count=5, target_edges=150, seed=0)
    return d


def pytest_terminal_summary(terminalreporter):
    """Print one PASS/FAIL line per acceptance criterion that ran."""
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(module.RESULTS):
        passed, detail = module.RESULTS[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")
