import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from volball.mesh import TetMesh, generate_mesh

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# standard 5-tet split of the unit cube: 4 corner tets around a central one
CUBE5_VERTICES = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0],
                           [0, 0, 1], [1, 0, 1], [0, 1, 1], [1, 1, 1]], dtype=float)
CUBE5_TETS = np.array([[0, 1, 2, 4], [1, 3, 2, 7], [1, 4, 5, 7], [2, 6, 4, 7], [1, 2, 4, 7]])

REGULAR_TET = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)


@pytest.fixture(scope="session")
def cube5():
    return TetMesh(CUBE5_VERTICES, CUBE5_TETS)


@pytest.fixture(scope="session")
def single_tet():
    return TetMesh(REGULAR_TET, [[0, 1, 2, 3]])


@pytest.fixture(scope="session")
def ball4():
    return generate_mesh("ball", 4)


@pytest.fixture(scope="session")
def ball6():
    return generate_mesh("ball", 6)


@pytest.fixture(scope="session")
def blob4():
    return generate_mesh("blob", 4, seed=2)


def random_feasible_map(mesh, rng, amplitude=0.15):
    """Smooth orientation-preserving perturbation of the identity."""
    a = rng.normal(size=(3, 3)) * amplitude
    b = rng.normal(size=3) * amplitude
    v = mesh.vertices
    f = v + np.sin(v @ a) * b + 0.3 * amplitude * rng.normal(size=3)
    return f


def cells_mesh(cells, h=1.0):
    """Kuhn-subdivided union of unit grid cells ``(i, j, k)``."""
    perms = ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0))
    ids = {}
    tets = []
    for c in cells:
        for perm in perms:
            corner = list(c)
            path = [tuple(corner)]
            for axis in perm:
                corner[axis] += 1
                path.append(tuple(corner))
            tets.append([ids.setdefault(p, len(ids)) for p in path])
    verts = np.array(sorted(ids, key=ids.get), dtype=float) * h
    return TetMesh(verts, tets)


def u_shape_cells(n=4, depth=3):
    """Thick U: an n x 1 base with two arms rising ``depth`` cells."""
    cells = [(i, 0, k) for i in range(n) for k in range(2)]
    for arm in (0, n - 1):
        cells += [(arm, j, k) for j in range(1, depth + 1) for k in range(2)]
    return cells


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
