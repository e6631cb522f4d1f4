"""Spherical boundary coordinates and the gradient of the isovolumetric energy.

Boundary vertices are parameterized by polar angle ``theta`` and azimuth
``phi``, so the unit-sphere constraint holds by construction. Arrays over
boundary vertices follow the order of ``mesh.idx_boundary``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .energy import build_laplacian, image_volume, stretch_energy
from .errors import ZeroImageVolume
from .mesh import TetMesh

THETA_EPS = 1e-9


@dataclass(frozen=True)
class SphericalBoundary:
    theta: np.ndarray
    phi: np.ndarray

    def __len__(self):
        return len(self.theta)


def from_spherical(sb: SphericalBoundary) -> np.ndarray:
    """Unit vectors ``(sin t cos p, sin t sin p, cos t)``, shape (n_B, 3)."""
    st = np.sin(sb.theta)
    return np.column_stack([st * np.cos(sb.phi), st * np.sin(sb.phi), np.cos(sb.theta)])


def to_spherical(points) -> SphericalBoundary:
    """Inverse of :func:`from_spherical`; rows are renormalized first.

    At the poles ``phi`` is whatever ``atan2`` gives for the (tiny) planar
    part, 0 for exact poles.
    """
    p = np.asarray(points, dtype=float)
    p = p / np.linalg.norm(p, axis=1, keepdims=True)
    # atan2 stays accurate near the poles, where arccos(z) loses half the digits
    theta = np.arctan2(np.hypot(p[:, 0], p[:, 1]), p[:, 2])
    phi = np.arctan2(p[:, 1], p[:, 0])
    return SphericalBoundary(theta, phi)


def normalize_angles(theta, phi, eps: float = THETA_EPS):
    """Clamp ``theta`` to ``[eps, pi - eps]`` and wrap ``phi`` to ``(-pi, pi]``."""
    theta = np.clip(theta, eps, np.pi - eps)
    phi = np.pi - np.mod(np.pi - np.asarray(phi, dtype=float), 2 * np.pi)
    return theta, phi


def boundary_positions(mesh: TetMesh, vertex_ids) -> np.ndarray:
    """Index into boundary arrays for the given (boundary) vertex ids."""
    return np.searchsorted(mesh.idx_boundary, vertex_ids)


def grad_volume_angles(mesh: TetMesh, f, sb: SphericalBoundary):
    """Gradient of the image volume with respect to ``theta`` and ``phi``.

    Accumulated face by face over the fan of tets ``[0, f_i, f_j, f_k]``
    and scattered to the boundary vertices.
    """
    f = np.asarray(f, dtype=float)
    faces = mesh.boundary_faces
    pos = boundary_positions(mesh, faces).ravel()
    x, y, z = (f[faces][..., s] for s in range(3))   # each (n_faces, 3)
    c1 = np.cross(y, z).ravel()    # d det / d x-column
    c2 = np.cross(z, x).ravel()
    c3 = np.cross(x, y).ravel()
    st, ct = np.sin(sb.theta)[pos], np.cos(sb.theta)[pos]
    sp, cp = np.sin(sb.phi)[pos], np.cos(sb.phi)[pos]
    nb = len(mesh.idx_boundary)
    dth = np.bincount(pos, weights=ct * cp * c1 + ct * sp * c2 - st * c3, minlength=nb)
    dph = np.bincount(pos, weights=st * cp * c2 - st * sp * c1, minlength=nb)
    return dth / 6.0, dph / 6.0


@dataclass(frozen=True)
class StackedGradient:
    """Gradient blocks: interior coordinates (n_I, 3), theta and phi (n_B,)."""

    g_interior: np.ndarray
    g_theta: np.ndarray
    g_phi: np.ndarray

    def stack(self) -> np.ndarray:
        """Flat vector ``[g_I^1, g_I^2, g_I^3, g_theta, g_phi]``."""
        return np.concatenate([self.g_interior.T.ravel(), self.g_theta, self.g_phi])


def pack(f_interior, sb: SphericalBoundary) -> np.ndarray:
    return np.concatenate([np.asarray(f_interior).T.ravel(), sb.theta, sb.phi])


def unpack(x, n_interior: int):
    """Split a flat parameter vector into ``(f_interior, theta, phi)``."""
    ni3 = 3 * n_interior
    f_int = x[:ni3].reshape(3, n_interior).T
    nb = (len(x) - ni3) // 2
    return f_int, x[ni3:ni3 + nb], x[ni3 + nb:]


def assemble_map(mesh: TetMesh, f_interior, sb: SphericalBoundary) -> np.ndarray:
    """Full (n, 3) map from interior coordinates and boundary angles."""
    f = np.empty((mesh.n_vertices, 3))
    f[mesh.idx_interior] = f_interior
    f[mesh.idx_boundary] = from_spherical(sb)
    return f


def grad_iso_energy(mesh: TetMesh, f, sb: SphericalBoundary, L=None,
                    e_v: float | None = None, v_f: float | None = None) -> StackedGradient:
    """Gradient of the isovolumetric energy in the unconstrained variables.

    Parameters
    ----------
    mesh : TetMesh
    f : np.ndarray
        Current map, shape (n, 3); boundary rows must equal
        ``from_spherical(sb)``.
    sb : SphericalBoundary
    L, e_v, v_f : optional
        Precomputed ``L_V(f)``, stretch energy and image volume.

    Returns
    -------
    StackedGradient

    Raises
    ------
    ZeroImageVolume
    """
    f = np.asarray(f, dtype=float)
    if L is None:
        L = build_laplacian(mesh, f)
    if v_f is None:
        v_f = image_volume(mesh, f)
    if v_f == 0.0:
        raise ZeroImageVolume("image volume is zero")
    if e_v is None:
        e_v = stretch_energy(mesh, f)
    v_e = mesh.total_volume
    scale = 3.0 * v_e / v_f
    lf = L @ f
    ib = mesh.idx_boundary
    g_int = scale * lf[mesh.idx_interior]

    lb = lf[ib]
    st, ct = np.sin(sb.theta), np.cos(sb.theta)
    sp, cp = np.sin(sb.phi), np.cos(sb.phi)
    dv_th, dv_ph = grad_volume_angles(mesh, f, sb)
    vol_coef = 1.0 + v_e * e_v / (v_f * v_f)
    g_th = scale * (ct * cp * lb[:, 0] + ct * sp * lb[:, 1] - st * lb[:, 2]) - vol_coef * dv_th
    g_ph = scale * (st * cp * lb[:, 1] - st * sp * lb[:, 0]) - vol_coef * dv_ph
    return StackedGradient(g_int, g_th, g_ph)
