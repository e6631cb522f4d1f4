import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import LocalFD, feasible_ball_map, relative_errors
from volball.energy import image_volume
from volball.errors import ZeroImageVolume
from volball.mesh import generate_mesh
from volball.spherical import (
    THETA_EPS,
    SphericalBoundary,
    assemble_map,
    from_spherical,
    grad_iso_energy,
    grad_volume_angles,
    normalize_angles,
    pack,
    to_spherical,
    unpack,
)

angles = st.tuples(st.floats(THETA_EPS, math.pi - THETA_EPS), st.floats(-math.pi, math.pi))


def test_north_pole():
    p = from_spherical(SphericalBoundary(np.array([0.0]), np.array([2.3])))
    assert np.allclose(p, [[0, 0, 1]], atol=1e-17)


@given(st.lists(angles, min_size=1, max_size=20))
def test_unit_norm_and_roundtrip(pairs):
    th, ph = map(np.array, zip(*pairs))
    p = from_spherical(SphericalBoundary(th, ph))
    assert np.allclose(np.linalg.norm(p, axis=1), 1.0, atol=1e-14)
    back = to_spherical(p)
    assert np.allclose(back.theta, th, atol=1e-12)
    # phi is only identifiable away from the poles
    ok = np.sin(th) > 1e-6
    d = np.angle(np.exp(1j * (back.phi - ph)))
    assert np.all(np.abs(d[ok]) < 1e-12 / np.sin(th[ok]).clip(1e-3))


def test_to_spherical_renormalizes():
    sb = to_spherical(np.array([[0.0, 3.0, 0.0]]))
    assert sb.theta[0] == pytest.approx(math.pi / 2)
    assert sb.phi[0] == pytest.approx(math.pi / 2)


@given(st.floats(-20, 20), st.floats(-20, 20))
def test_normalize_angles_ranges(t, p):
    th, ph = normalize_angles(np.array([t]), np.array([p]))
    assert THETA_EPS <= th[0] <= math.pi - THETA_EPS
    assert -math.pi < ph[0] <= math.pi
    assert math.cos(ph[0]) == pytest.approx(math.cos(p), abs=1e-12)
    assert math.sin(ph[0]) == pytest.approx(math.sin(p), abs=1e-12)


def test_normalize_angles_pi_maps_to_pi():
    _, ph = normalize_angles(np.array([1.0, 1.0]), np.array([math.pi, -math.pi]))
    assert np.all(ph == math.pi)


def test_pack_unpack_roundtrip(rng=np.random.default_rng(0)):
    fi = rng.normal(size=(5, 3))
    sb = SphericalBoundary(rng.random(4), rng.random(4))
    x = pack(fi, sb)
    assert len(x) == 3 * 5 + 2 * 4
    a, t, p = unpack(x, 5)
    assert np.array_equal(a, fi) and np.array_equal(t, sb.theta) and np.array_equal(p, sb.phi)
    # stacking is coordinate-major: all x, then all y, then all z
    assert np.array_equal(x[:5], fi[:, 0])


@pytest.fixture(scope="module")
def blob5():
    return generate_mesh("blob", 5, seed=3)


def test_grad_volume_angles_fd(blob5):
    rng = np.random.default_rng(1)
    f, sb = feasible_ball_map(blob5, rng)
    dth, dph = grad_volume_angles(blob5, f, sb)
    h = 1e-5
    for k in rng.choice(len(sb), 10, replace=False):
        for arr, g in ((sb.theta, dth), (sb.phi, dph)):
            vals = []
            for s in (h, -h):
                a = arr.copy()
                a[k] += s
                t2 = SphericalBoundary(a, sb.phi) if arr is sb.theta else SphericalBoundary(sb.theta, a)
                vals.append(image_volume(blob5, assemble_map(blob5, f[blob5.idx_interior], t2)))
            assert g[k] == pytest.approx((vals[0] - vals[1]) / (2 * h), rel=1e-6, abs=2e-9)


@pytest.mark.parametrize("kind", ["ball", "cube", "blob"])
def test_gradient_matches_full_fd(kind):
    mesh = generate_mesh(kind, 4, seed=1)
    f, sb = feasible_ball_map(mesh, np.random.default_rng(7))
    g = grad_iso_energy(mesh, f, sb).stack()
    fd = LocalFD(mesh, f, sb)
    assert relative_errors(g, fd.gradient()).max() < 1e-5
    assert relative_errors(g, fd.gradient(frozen=True)).max() < 1e-5


def test_gradient_blocks_shape(blob5):
    f, sb = feasible_ball_map(blob5, np.random.default_rng(0))
    g = grad_iso_energy(blob5, f, sb)
    assert g.g_interior.shape == (len(blob5.idx_interior), 3)
    assert g.g_theta.shape == g.g_phi.shape == (len(blob5.idx_boundary),)
    assert len(g.stack()) == 3 * len(blob5.idx_interior) + 2 * len(blob5.idx_boundary)
    assert np.all(np.isfinite(g.stack()))


def test_gradient_vanishes_at_identity():
    mesh = generate_mesh("ball", 4)
    f = mesh.vertices
    sb = to_spherical(f[mesh.idx_boundary])
    g = grad_iso_energy(mesh, f, sb).stack()
    assert np.abs(g).max() < 1e-12


def test_phi_gradient_sums_to_zero_for_symmetric_map():
    # the ball grid and a radial warp are both symmetric under swapping x and y,
    # so rotating the boundary by +a or -a changes the energy equally
    mesh = generate_mesh("ball", 6)
    v = mesh.vertices
    r2 = np.sum(v * v, axis=1, keepdims=True)
    f = v * (1 + 0.2 * (1 - r2))
    sb = to_spherical(f[mesh.idx_boundary])
    f[mesh.idx_boundary] = from_spherical(sb)
    g = grad_iso_energy(mesh, f, sb)
    assert abs(g.g_phi.sum()) < 1e-8
    assert np.abs(g.g_interior).max() > 1e-4  # the map is not a critical point


def test_pole_safety():
    mesh = generate_mesh("ball", 3)
    f = mesh.vertices.copy()
    sb = to_spherical(f[mesh.idx_boundary])
    top = np.argmax(sb.theta * -1)
    bottom = np.argmax(sb.theta)
    th = sb.theta.copy()
    th[top], th[bottom] = 1e-12, math.pi - 1e-12
    sb = SphericalBoundary(th, sb.phi)
    f[mesh.idx_boundary] = from_spherical(sb)
    g = grad_iso_energy(mesh, f, sb).stack()
    assert np.all(np.isfinite(g))


def test_zero_image_volume_raises(single_tet):
    f = np.zeros((4, 3))
    sb = SphericalBoundary(np.full(4, 1.0), np.zeros(4))
    with pytest.raises(ZeroImageVolume):
        grad_iso_energy(single_tet, f, sb, L=np.zeros((4, 4)), e_v=0.0, v_f=0.0)
