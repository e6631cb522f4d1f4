"""Registration of two solids through their ball parameterizations.

With ``f0: M0 -> B`` and ``f1: M1 -> B`` and optimal rotations ``g0``,
``g1`` aligning each ball image with its mesh, the registration map is
``phi = f1^-1 o h o f0`` where ``h = g1^T g0``. ``f1^-1`` is evaluated by
locating each query point in the image mesh ``f1(M1)`` and reusing the
barycentric weights on the target coordinates.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._backend import kernels
from .errors import LocationFailure, RankDeficient
from .mesh import TetMesh, vertex_volumes, write_mesh

BARY_EPS = 1e-12
MAX_WALK_STEPS = 10_000
DEFAULT_TIMES = (0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0)


def weighted_rotation(src, dst, weights) -> np.ndarray:
    """Rotation ``g`` minimizing ``sum w * |g @ src_i - dst_i|**2``.

    Builds ``C = sum w src dst^T = U S V^T`` and returns
    ``V diag(1, 1, det(V U^T)) U^T``, which is a proper rotation even when
    the unconstrained optimum is a reflection.

    Raises
    ------
    RankDeficient
        When ``C`` has rank < 2, so the rotation is not determined.
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    c = (np.asarray(weights, dtype=float)[:, None] * src).T @ dst
    u, s, vt = np.linalg.svd(c)
    if s[0] == 0.0 or s[1] <= 1e-12 * s[0]:
        raise RankDeficient(f"cross-covariance singular values {s}")
    v = vt.T
    d = np.sign(np.linalg.det(v @ u.T))
    return v @ np.diag([1.0, 1.0, d]) @ u.T


def optimal_rotation(mesh: TetMesh, f) -> np.ndarray:
    """Rotation of the ball best aligning ``f(v)`` with ``v``, weighted by vertex volume."""
    return weighted_rotation(f, mesh.vertices, vertex_volumes(mesh))


# ---------------------------------------------------------------------------
# point location


@dataclass(frozen=True)
class Location:
    """Result of :func:`locate_point`.

    ``kind`` is ``"tet"`` (4 weights over ``tets[index]``) or ``"face"``
    (3 weights over ``boundary_faces[index]``, padded with a zero).
    """

    kind: str
    index: int
    weights: np.ndarray

    def vertex_ids(self, mesh: TetMesh) -> np.ndarray:
        if self.kind == "tet":
            return mesh.tets[self.index]
        return mesh.boundary_faces[self.index]

    def evaluate(self, mesh: TetMesh, coords) -> np.ndarray:
        """Interpolate per-vertex ``coords`` at this location."""
        ids = self.vertex_ids(mesh)
        return self.weights[:len(ids)] @ np.asarray(coords)[ids]


def barycentric_all(image, tets, q) -> np.ndarray:
    """Barycentric coordinates of ``q`` in every tet, shape (m, 4)."""
    p = np.asarray(image)[tets]
    q = np.asarray(q, dtype=float)

    def det(a, b, c, d):
        return np.einsum("ij,ij->i", np.cross(b - a, c - a), d - a)

    full = det(p[:, 0], p[:, 1], p[:, 2], p[:, 3])
    qq = np.broadcast_to(q, p[:, 0].shape)
    lam = np.column_stack([
        det(qq, p[:, 1], p[:, 2], p[:, 3]),
        det(p[:, 0], qq, p[:, 2], p[:, 3]),
        det(p[:, 0], p[:, 1], qq, p[:, 3]),
        det(p[:, 0], p[:, 1], p[:, 2], qq),
    ])
    return lam / full[:, None]


def brute_force_locate(mesh: TetMesh, f, q, eps: float = BARY_EPS):
    """Exhaustive scan; returns ``(tet id, weights)`` or ``(-1, None)``.

    Among tets containing ``q`` (all weights >= ``-eps``) the one with the
    largest minimum weight is returned, so ties on shared faces resolve
    deterministically.
    """
    lam = barycentric_all(f, mesh.tets, q)
    worst = lam.min(axis=1)
    t = int(np.argmax(worst))
    if worst[t] < -eps:
        return -1, None
    return t, lam[t]


def _clean(w: np.ndarray) -> np.ndarray:
    w = np.clip(w, 0.0, None)
    return w / w.sum()


def _project_to_face(mesh: TetMesh, f, q, eps: float):
    """Cast the ray from the origin through ``q`` onto the image boundary."""
    p = np.asarray(f)[mesh.boundary_faces]
    a, b, c = p[:, 0], p[:, 1], p[:, 2]
    n = np.cross(b - a, c - a)
    denom = n @ q
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.einsum("ij,ij->i", n, a) / denom
        x = s[:, None] * q
    # 2D barycentrics via sub-triangle normals projected on n
    nn = np.einsum("ij,ij->i", n, n)
    w0 = np.einsum("ij,ij->i", np.cross(c - b, x - b), n) / nn
    w1 = np.einsum("ij,ij->i", np.cross(a - c, x - c), n) / nn
    w2 = 1.0 - w0 - w1
    w = np.column_stack([w0, w1, w2])
    ok = (denom > 0) & (s > 0) & np.all(w >= -1e-9, axis=1)
    if not np.any(ok):
        return None
    cand = np.flatnonzero(ok)
    k = int(cand[np.argmax(w[cand].min(axis=1))])
    return Location("face", k, np.append(_clean(w[k]), 0.0))


def locate_points(mesh: TetMesh, f, points, eps: float = BARY_EPS, start: int = 0):
    """Locate many points in the image mesh ``f(mesh)``.

    Uses a coherent visibility walk (each walk starts where the previous
    point was found), an exhaustive scan for points the walk misses, and
    finally a radial projection onto the image boundary for points in the
    gap between the polyhedral image and the sphere.

    Returns
    -------
    list of Location

    Raises
    ------
    LocationFailure
        Lists the indices of points that could not be located.
    """
    f = np.ascontiguousarray(f, dtype=float)
    pts = np.ascontiguousarray(points, dtype=float).reshape(-1, 3)
    found, bary = kernels.walk_locate(f, mesh.tets, mesh.neighbors, pts, int(start),
                                      float(eps), MAX_WALK_STEPS)
    out = []
    failed = []
    for i, q in enumerate(pts):
        if found[i] >= 0:
            out.append(Location("tet", int(found[i]), _clean(bary[i])))
            continue
        t, w = brute_force_locate(mesh, f, q, eps)
        if t >= 0:
            out.append(Location("tet", t, _clean(w)))
            continue
        loc = _project_to_face(mesh, f, q, eps)
        if loc is None:
            failed.append(i)
            out.append(None)
        else:
            out.append(loc)
    if failed:
        raise LocationFailure(f"{len(failed)} point(s) could not be located", failed)
    return out


def locate_point(mesh: TetMesh, f, p, eps: float = BARY_EPS) -> Location:
    """Locate a single point; see :func:`locate_points`."""
    return locate_points(mesh, f, np.asarray(p, dtype=float)[None], eps)[0]


# ---------------------------------------------------------------------------
# registration


@dataclass(frozen=True)
class RegistrationMap:
    """Per-source-vertex images ``phi(v)`` and their locations in the target.

    Attributes
    ----------
    source : TetMesh
        Source mesh in the coordinates used for ``homotopy`` and
        ``deformation_measure``.
    phi : np.ndarray
        (n0, 3) images in target coordinates.
    locations : tuple of Location
    h : np.ndarray
        Ball rotation ``g1^T g0``.
    """

    source: TetMesh
    phi: np.ndarray
    locations: tuple
    h: np.ndarray

    def to_csv(self) -> str:
        """Rows ``src_vertex,tet_or_face,w0..w3,phi_x,phi_y,phi_z``.

        ``tet_or_face`` is the tet id when ``>= 0`` and encodes boundary
        face ``k`` as ``-(k + 1)``; face rows have ``w3 = 0``.
        """
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["src_vertex", "tet_or_face", "w0", "w1", "w2", "w3", "phi_x", "phi_y", "phi_z"])
        for i, (loc, p) in enumerate(zip(self.locations, self.phi)):
            code = loc.index if loc.kind == "tet" else -(loc.index + 1)
            w.writerow([i, code, *map(repr, map(float, loc.weights)), *map(repr, map(float, p))])
        return buf.getvalue()


def register(mesh0: TetMesh, f0, mesh1: TetMesh, f1, *, source: TetMesh | None = None,
             target_vertices=None) -> RegistrationMap:
    """Compose ``phi = f1^-1 o (g1^T g0) o f0``.

    Parameters
    ----------
    mesh0, mesh1 : TetMesh
        Meshes the maps ``f0`` and ``f1`` are defined on (for example the
        pose-normalized meshes returned with :func:`parameterize`).
    f0, f1 : np.ndarray
        Ball maps, shapes (n0, 3) and (n1, 3).
    source : TetMesh, optional
        Source mesh with ``mesh0``'s connectivity in the coordinates to
        report, typically the original input. Defaults to ``mesh0``.
    target_vertices : np.ndarray, optional
        Coordinates (n1, 3) on which ``phi`` is interpolated, typically the
        original target vertices. Defaults to ``mesh1.vertices``.

    Raises
    ------
    LocationFailure
        With the source vertex ids that could not be located.
    """
    f0 = np.asarray(f0, dtype=float)
    f1 = np.asarray(f1, dtype=float)
    h = optimal_rotation(mesh1, f1).T @ optimal_rotation(mesh0, f0)
    q = f0 @ h.T
    norm = np.linalg.norm(q, axis=1)
    outside = norm > 1.0
    q[outside] /= norm[outside, None]
    target = mesh1.vertices if target_vertices is None else np.asarray(target_vertices, dtype=float)
    locs = locate_points(mesh1, f1, q)
    phi = np.array([loc.evaluate(mesh1, target) for loc in locs])
    phi.setflags(write=False)
    return RegistrationMap(source if source is not None else mesh0, phi, tuple(locs), h)


def homotopy(reg: RegistrationMap, t: float) -> np.ndarray:
    """``(1 - t) v + t phi(v)`` for every source vertex."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    if t == 0.0:
        return reg.source.vertices.copy()
    if t == 1.0:
        return np.array(reg.phi)
    return (1.0 - t) * reg.source.vertices + t * reg.phi


def rigid_residual(reg: RegistrationMap):
    """``phi`` after the volume-weighted best rigid motion onto the source."""
    w = vertex_volumes(reg.source)
    v = reg.source.vertices
    cv = w @ v / w.sum()
    cp = w @ reg.phi / w.sum()
    r = weighted_rotation(reg.phi - cp, v - cv, w)
    return (reg.phi - cp) @ r.T + cv


def deformation_measure(reg: RegistrationMap, align: bool = False) -> float:
    """Volume-weighted mean displacement ``sum |v - phi(v)| vol(v) / |M0|``.

    With ``align=True`` the best rigid motion of ``phi`` onto the source is
    removed first, so a rigidly moved copy measures (close to) zero.
    """
    phi = rigid_residual(reg) if align else reg.phi
    w = vertex_volumes(reg.source)
    disp = np.linalg.norm(reg.source.vertices - phi, axis=1)
    return math.fsum(disp * w) / reg.source.total_volume


def frame_name(t: float) -> str:
    return f"frame_{t:g}.mesh"


def write_frames(directory, reg: RegistrationMap, times=DEFAULT_TIMES) -> list:
    """Write ``frame_<t>.mesh`` for each ``t``; returns the paths."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for t in times:
        path = d / frame_name(t)
        write_mesh(path, homotopy(reg, float(t)), reg.source.tets)
        paths.append(path)
    return paths
