import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gnsfilter.graph import GraphTopology, build_knn_graph, eigendecompose, laplacian  # noqa: E402
from gnsfilter.sampling import FrequencySet, SamplingMask, build_projector  # noqa: E402


def path_graph(n: int) -> GraphTopology:
    return GraphTopology(n, frozenset((i, i + 1) for i in range(n - 1)))


@pytest.fixture
def path3():
    """3-node path graph, band {0, 1}, full mask."""
    sp = eigendecompose(laplacian(path_graph(3)))
    proj = build_projector(sp, FrequencySet((0, 1)))
    return sp, proj, SamplingMask(np.ones(3))


@pytest.fixture
def small_graph():
    """12 random geographic points, 3-NN graph, band of 5, 8 observed nodes."""
    rng = np.random.default_rng(3)
    coords = np.column_stack([rng.uniform(35, 45, 12), rng.uniform(-110, -90, 12)])
    sp = eigendecompose(laplacian(build_knn_graph(coords, 3)))
    mask = SamplingMask.from_nodes(12, [0, 1, 3, 4, 6, 8, 9, 11])
    proj = build_projector(sp, FrequencySet((0, 1, 2, 3, 4)))
    return sp, proj, mask


# filled by test_acceptance.report(); echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
