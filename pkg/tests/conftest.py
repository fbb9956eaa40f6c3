import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from romforge.core.mesh import FE_TRI, INLET, WALL, Mesh  # noqa: E402
from romforge.pipeline import config_from_text, offline_run  # noqa: E402


def two_triangle_mesh() -> Mesh:
    """A skewed quadrilateral split into two triangles; the top edge is the lid."""
    nodes = np.array([[0.0, 0.0], [1.2, 0.1], [1.0, 0.9], [0.1, 1.1]])
    cells = np.array([[0, 1, 2], [0, 2, 3]])
    p = nodes[cells]
    edges = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
    h = np.linalg.norm(edges, axis=-1).max(axis=1)
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    vol = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    bf = np.array([[0, 1], [1, 2], [2, 3], [3, 0]])
    return Mesh(FE_TRI, nodes, cells, h, vol, bf, np.array([WALL, WALL, INLET, WALL], dtype=np.int8))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


FE_SMALL = """
study.branch = cavity-fe
sampling = 9
fe.mesh_n = 8
fe.picard_tol = 1e-12
rb.n_max = 3
"""

FV_SMALL = """
study.branch = backstep-fv
sampling = 2,2
fv.resolution = 4
"""


@pytest.fixture(scope="session")
def fe_bundle(tmp_path_factory):
    return offline_run(config_from_text(FE_SMALL), tmp_path_factory.mktemp("fe") / "bundle")


@pytest.fixture(scope="session")
def fv_bundle(tmp_path_factory):
    return offline_run(config_from_text(FV_SMALL), tmp_path_factory.mktemp("fv") / "bundle")
