"""Finite-difference oracles shared by the unit and acceptance tests.

Perturbing one vertex only changes its incident tets and boundary faces,
so differences of the global sums are accumulated locally. This keeps the
oracles fast and avoids cancellation in the totals.
"""

import numpy as np

from volball.energy import build_laplacian, image_volume, stretch_energy
from volball.spherical import SphericalBoundary, from_spherical

REL_FLOOR = 1e-3  # components below this fraction of max|oracle| are compared against that floor


def _incidence(mesh):
    n = mesh.n_vertices
    tet_of = [[] for _ in range(n)]
    for t, tet in enumerate(mesh.tets):
        for v in tet:
            tet_of[v].append(t)
    face_of = [[] for _ in range(n)]
    for k, face in enumerate(mesh.boundary_faces):
        for v in face:
            face_of[v].append(k)
    return [np.array(a, dtype=int) for a in tet_of], [np.array(a, dtype=int) for a in face_of]


def _vol(p):
    return np.einsum("ij,ij->i", np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), p[:, 3] - p[:, 0]) / 6


def _fan(p):
    return np.einsum("ij,ij->i", p[:, 0], np.cross(p[:, 1], p[:, 2])) / 6


class LocalFD:
    """Central differences of E_I (full) or of its frozen-Laplacian surrogate."""

    def __init__(self, mesh, f, sb: SphericalBoundary, h=1e-5):
        self.mesh = mesh
        self.f = np.asarray(f, dtype=float)
        self.sb = sb
        self.h = h
        self.tets_of, self.faces_of = _incidence(mesh)
        self.e_v = stretch_energy(mesh, f)
        self.v_f = image_volume(mesh, f)
        self.v_e = mesh.total_volume
        self.L = build_laplacian(mesh, f).tocsr()
        self.pos = {int(v): k for k, v in enumerate(mesh.idx_boundary)}

    # --- local changes -----------------------------------------------------
    def _delta_ev(self, v, p_new):
        ts = self.tets_of[v]
        pts = self.f[self.mesh.tets[ts]]
        old = _vol(pts)
        pts[self.mesh.tets[ts] == v] = p_new
        new = _vol(pts)
        return np.sum((new - old) * (new + old) / self.mesh.volumes[ts])

    def _delta_q(self, v, p_new):
        # frozen quadratic form 0.5 tr(f^T L0 f) with row v changed
        d = p_new - self.f[v]
        row = self.L.getrow(v)
        lf_v = row @ self.f
        return float(np.dot(d, lf_v.ravel()) + 0.5 * self.L[v, v] * np.dot(d, d))

    def _delta_vol(self, v, p_new):
        ks = self.faces_of[v]
        if len(ks) == 0:
            return 0.0
        pts = self.f[self.mesh.boundary_faces[ks]]
        old = _fan(pts)
        pts[self.mesh.boundary_faces[ks] == v] = p_new
        return np.sum(_fan(pts) - old)

    def _diff(self, v, p_plus, p_minus, frozen):
        if frozen:
            # the stretch term enters the gradient as 3 x (quadratic form gradient)
            dp, dm = 3 * self._delta_q(v, p_plus), 3 * self._delta_q(v, p_minus)
        else:
            dp, dm = self._delta_ev(v, p_plus), self._delta_ev(v, p_minus)
        wp, wm = self._delta_vol(v, p_plus), self._delta_vol(v, p_minus)
        e, V = self.e_v, self.v_f
        ratio = (e * (wm - wp) + (dp - dm) * V + dp * wm - dm * wp) / ((V + wp) * (V + wm))
        return (self.v_e * ratio - (wp - wm)) / (2 * self.h)

    # --- public ------------------------------------------------------------
    def gradient(self, frozen=False):
        """Stacked gradient ``[g_I^1, g_I^2, g_I^3, g_theta, g_phi]``."""
        m, h = self.mesh, self.h
        ni = len(m.idx_interior)
        g_int = np.empty((ni, 3))
        for a, v in enumerate(m.idx_interior):
            for d in range(3):
                e = np.zeros(3)
                e[d] = h
                g_int[a, d] = self._diff(v, self.f[v] + e, self.f[v] - e, frozen)
        nb = len(m.idx_boundary)
        g_th, g_ph = np.empty(nb), np.empty(nb)
        th, ph = self.sb.theta, self.sb.phi
        for k, v in enumerate(m.idx_boundary):
            def at(t, p):
                return from_spherical(SphericalBoundary(np.array([t]), np.array([p])))[0]
            g_th[k] = self._diff(v, at(th[k] + h, ph[k]), at(th[k] - h, ph[k]), frozen)
            g_ph[k] = self._diff(v, at(th[k], ph[k] + h), at(th[k], ph[k] - h), frozen)
        return np.concatenate([g_int.T.ravel(), g_th, g_ph])


def relative_errors(g, oracle, floor=REL_FLOOR):
    scale = np.maximum(np.abs(oracle), floor * np.abs(oracle).max())
    return np.abs(g - oracle) / scale


def feasible_ball_map(mesh, rng, amplitude=0.2, tries=20):
    """Random folding-free map with the boundary on the unit sphere.

    Starts from the harmonic-like warm start and jitters interior vertices
    by ``amplitude`` times the shortest incident edge and boundary angles by
    a comparable amount. Returns ``(f, SphericalBoundary)``.
    """
    from volball.boundary_init import init_boundary_sphere
    from volball.mesh import signed_volumes
    from volball.solver import vsem_fixed_point

    sb0 = init_boundary_sphere(mesh)
    base = vsem_fixed_point(mesh, from_spherical(sb0), 0)
    e = mesh.edges
    length = np.linalg.norm(base[e[:, 0]] - base[e[:, 1]], axis=1)
    short = np.full(mesh.n_vertices, np.inf)
    np.minimum.at(short, e[:, 0], length)
    np.minimum.at(short, e[:, 1], length)
    for _ in range(tries):
        f = base.copy()
        ii = mesh.idx_interior
        f[ii] += amplitude * short[ii, None] * rng.uniform(-1, 1, size=(len(ii), 3))
        sb = SphericalBoundary(
            sb0.theta + amplitude * short[mesh.idx_boundary] * rng.uniform(-1, 1, len(sb0)),
            sb0.phi + amplitude * short[mesh.idx_boundary] * rng.uniform(-1, 1, len(sb0)))
        sb = SphericalBoundary(np.clip(sb.theta, 1e-3, np.pi - 1e-3), sb.phi)
        f[mesh.idx_boundary] = from_spherical(sb)
        if np.all(signed_volumes(f, mesh.tets) > 0):
            return f, sb
        amplitude *= 0.7
    raise RuntimeError("could not draw a folding-free map")
