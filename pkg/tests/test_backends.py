import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_feasible_map
from volball import _backend
from volball.mesh import generate_mesh

BACKENDS = _backend.available()
needs_both = pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled extension not built")


def test_python_backend_always_available():
    assert "python" in BACKENDS


@pytest.mark.parametrize("name", BACKENDS)
def test_backend_name(name):
    assert _backend.load(name).NAME == name


@pytest.mark.parametrize("value, expected", [("1", "python"), ("", None)])
def test_env_switch(value, expected):
    env = dict(os.environ, VOLBALL_PURE_PYTHON=value)
    out = subprocess.run([sys.executable, "-c", "import volball._backend as b; print(b.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True).stdout.strip()
    assert out == (expected or BACKENDS[0])


@needs_both
@given(st.integers(0, 10_000), st.sampled_from(["ball", "cube", "blob"]))
def test_edge_weights_agree(seed, kind):
    mesh = generate_mesh(kind, 3, seed=seed % 7)
    f = random_feasible_map(mesh, np.random.default_rng(seed), amplitude=0.5)
    f = np.ascontiguousarray(f)
    a = _backend.load("cython").edge_weights(f, mesh.tets, mesh.volumes)
    b = _backend.load("python").edge_weights(f, mesh.tets, mesh.volumes)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-14 * np.abs(b).max())


@needs_both
@given(st.integers(0, 10_000))
def test_walk_locate_agree(seed):
    mesh = generate_mesh("ball", 4)
    rng = np.random.default_rng(seed)
    f = np.ascontiguousarray(random_feasible_map(mesh, rng, amplitude=0.3))
    pts = np.ascontiguousarray(rng.uniform(-1.2, 1.2, size=(40, 3)))
    start = int(rng.integers(mesh.n_tets))
    res = [_backend.load(n).walk_locate(f, mesh.tets, mesh.neighbors, pts, start, 1e-12, 10_000)
           for n in ("cython", "python")]
    assert np.array_equal(res[0][0], res[1][0])
    hit = res[0][0] >= 0
    assert np.allclose(res[0][1][hit], res[1][1][hit], atol=1e-13)
