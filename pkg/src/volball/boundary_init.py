"""Initial map of the boundary surface onto the unit sphere.

Two routes:

* ``radial``: central projection from the boundary centroid. Used when it
  yields no flipped spherical triangles (star-shaped boundaries).
* ``tutte``: puncture one face, embed the rest in the plane with uniform
  Tutte weights, lift by inverse stereographic projection, then smooth
  toward area-proportional spacing.

Both finish with Möbius centering so the point centroid is near the origin.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .errors import InitFailure
from .mesh import TetMesh
from .spherical import SphericalBoundary, to_spherical

logger = logging.getLogger(__name__)

CENTER_TOL = 1e-3


def _local_faces(mesh: TetMesh) -> np.ndarray:
    return np.searchsorted(mesh.idx_boundary, mesh.boundary_faces)


def spherical_flips(points: np.ndarray, faces: np.ndarray) -> int:
    """Number of faces whose origin fan tet is not positively oriented."""
    p = points[faces]
    det = np.einsum("ij,ij->i", p[:, 0], np.cross(p[:, 1], p[:, 2]))
    return int(np.sum(det <= 0))


def _unit(p):
    return p / np.linalg.norm(p, axis=1, keepdims=True)


def mobius_center(points: np.ndarray, tol: float = CENTER_TOL, max_iter: int = 100) -> np.ndarray:
    """Apply ball automorphisms until the point centroid is within ``tol`` of 0."""
    x = points
    for _ in range(max_iter):
        c = x.mean(axis=0)
        if np.linalg.norm(c) <= tol:
            break
        a = 0.5 * c
        aa = a @ a
        d = x - a
        dd = np.einsum("ij,ij->i", d, d)
        num = (1 - aa) * d - dd[:, None] * a
        den = 1 - 2 * (x @ a) + aa
        x = _unit(num / den[:, None])
    return x


def _radial(mesh: TetMesh) -> np.ndarray:
    pts = mesh.vertices[mesh.idx_boundary]
    return _unit(pts - pts.mean(axis=0))


def _surface_adjacency(nb: int, faces: np.ndarray) -> sparse.csr_matrix:
    e = faces[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2)
    a = sparse.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(nb, nb)).tocsr()
    a = ((a + a.T) > 0).astype(float)
    return a


def _tutte(mesh: TetMesh, faces: np.ndarray) -> np.ndarray:
    nb = len(mesh.idx_boundary)
    pts = mesh.vertices[mesh.idx_boundary]
    areas = 0.5 * np.linalg.norm(np.cross(pts[faces[:, 1]] - pts[faces[:, 0]],
                                          pts[faces[:, 2]] - pts[faces[:, 0]]), axis=1)
    hole = faces[int(np.argmax(areas))]
    ang = np.array([0.0, 2 * np.pi / 3, 4 * np.pi / 3])
    fixed_pos = np.column_stack([np.cos(ang), -np.sin(ang)])  # clockwise: hole seen from inside
    adj = _surface_adjacency(nb, faces)
    lap = sparse.diags(np.asarray(adj.sum(axis=1)).ravel()) - adj
    free = np.setdiff1d(np.arange(nb), hole)
    uv = np.zeros((nb, 2))
    uv[hole] = fixed_pos
    rhs = -lap[free][:, hole] @ fixed_pos
    uv[free] = spsolve(lap[free][:, free].tocsc(), rhs).reshape(-1, 2)
    # put the median vertex on the equator
    r = np.linalg.norm(uv, axis=1)
    uv /= np.median(r[free])
    r2 = np.einsum("ij,ij->i", uv, uv)
    sphere = np.column_stack([2 * uv[:, 0], 2 * uv[:, 1], r2 - 1]) / (r2 + 1)[:, None]
    if spherical_flips(sphere, faces) > len(faces) // 2:
        sphere[:, 0] *= -1
    return sphere


def _smooth(points: np.ndarray, source: np.ndarray, faces: np.ndarray, rounds: int) -> np.ndarray:
    """Stretch-weighted averaging toward area-proportional spacing."""
    nb = len(points)

    def tri_area(p):
        return 0.5 * np.linalg.norm(np.cross(p[faces[:, 1]] - p[faces[:, 0]],
                                             p[faces[:, 2]] - p[faces[:, 0]]), axis=1)

    src_area = tri_area(source)
    src_area /= src_area.sum()
    best, best_flips = points, spherical_flips(points, faces)
    x = points
    for _ in range(rounds):
        img_area = tri_area(x)
        stretch = img_area / img_area.sum() / src_area
        # faces that are too large (stretch > 1) pull their vertices together
        w = np.clip(stretch, 1e-3, 1e3)
        rows = faces[:, [0, 0, 1, 1, 2, 2]].ravel()
        cols = faces[:, [1, 2, 0, 2, 0, 1]].ravel()
        a = sparse.coo_matrix((np.repeat(w, 6), (rows, cols)), shape=(nb, nb)).tocsr()
        deg = np.asarray(a.sum(axis=1)).ravel()
        x = _unit(0.5 * x + 0.5 * (a @ x) / deg[:, None])
        flips = spherical_flips(x, faces)
        if flips > best_flips:
            break
        best, best_flips = x, flips
    return best


def init_boundary_sphere(mesh: TetMesh, method: str = "auto", smoothing_rounds: int = 10,
                         strict: bool = False) -> SphericalBoundary:
    """Map boundary vertices to the unit sphere.

    Parameters
    ----------
    mesh : TetMesh
    method : {"auto", "radial", "tutte"}
        ``auto`` uses radial projection when it is flip-free, else Tutte.
    smoothing_rounds : int
        Area-equalizing rounds applied on the Tutte route.
    strict : bool
        Raise :class:`InitFailure` instead of logging a warning when the
        final map has flipped triangles.

    Returns
    -------
    SphericalBoundary
        Angles for the vertices in ``mesh.idx_boundary`` order.
    """
    faces = _local_faces(mesh)
    pts = None
    if method in ("auto", "radial"):
        pts = _radial(mesh)
        if method == "auto" and spherical_flips(pts, faces) > 0:
            logger.info("radial projection flips triangles; using Tutte embedding")
            pts = None
    elif method != "tutte":
        raise ValueError(f"unknown init method {method!r}")
    if pts is None:
        pts = _tutte(mesh, faces)
        pts = _smooth(pts, mesh.vertices[mesh.idx_boundary], faces, smoothing_rounds)
    pts = mobius_center(pts)
    flips = spherical_flips(pts, faces)
    if flips:
        msg = f"spherical boundary map has {flips} flipped triangle(s)"
        if strict:
            raise InitFailure(msg, flipped=flips)
        logger.warning(msg)
    return to_spherical(pts)
