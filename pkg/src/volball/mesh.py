"""Tetrahedral meshes: validation, boundary extraction, IO and generators.

A :class:`TetMesh` is immutable. On construction every tetrahedron is
reoriented to positive signed volume and the boundary surface is extracted
and checked to be a closed genus-0 triangulation.
"""

from __future__ import annotations

import logging
import math
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateTet,
    DisconnectedBoundary,
    MalformedFile,
    NonManifoldBoundary,
)

logger = logging.getLogger(__name__)

# Faces of a positively oriented tet [i, j, k, l], indexed by the local
# vertex they are opposite to, listed with outward orientation.
LOCAL_FACES = np.array([[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]])

# Kuhn subdivision of the unit cube: one tet per axis permutation.
_KUHN_PERMS = ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0))

TETS_PER_CUBE = 6
BALL_VOLUME_RESOLUTION = 10  # generate_mesh("ball", 10) is within 2% of 4*pi/3


def signed_volume(p0, p1, p2, p3) -> float:
    """Signed volume of the tetrahedron ``[p0, p1, p2, p3]``.

    Positive when ``p3`` lies on the side of the plane ``(p0, p1, p2)``
    that the right-hand normal points to.
    """
    p0 = np.asarray(p0, dtype=float)
    a = np.asarray(p1, dtype=float) - p0
    b = np.asarray(p2, dtype=float) - p0
    c = np.asarray(p3, dtype=float) - p0
    return float(np.dot(np.cross(a, b), c) / 6.0)


def signed_volumes(points: np.ndarray, tets: np.ndarray) -> np.ndarray:
    """Vectorized :func:`signed_volume` over an ``(m, 4)`` index array."""
    p = points[tets]
    a = p[:, 1] - p[:, 0]
    b = p[:, 2] - p[:, 0]
    c = p[:, 3] - p[:, 0]
    return np.einsum("ij,ij->i", np.cross(a, b), c) / 6.0


def boundary_extract(vertices: np.ndarray, tets: np.ndarray):
    """Boundary faces and the boundary/interior vertex partition.

    Parameters
    ----------
    vertices : np.ndarray
        Vertex coordinates, shape (n, 3).
    tets : np.ndarray
        Tetrahedra, shape (m, 4).

    Returns
    -------
    faces : np.ndarray
        Outward-oriented boundary triangles, shape (n_faces, 3).
    idx_boundary, idx_interior : np.ndarray
        Sorted vertex ids on and off the boundary.
    neighbors : np.ndarray
        ``neighbors[t, a]`` is the tet sharing the face opposite local
        vertex ``a`` of tet ``t``, or -1 on the boundary.

    Raises
    ------
    NonManifoldBoundary
        If a triangle is shared by more than two tets.
    """
    vertices = np.asarray(vertices, dtype=float)
    tets = np.asarray(tets, dtype=np.int64)
    m = len(tets)
    all_faces = tets[:, LOCAL_FACES].reshape(-1, 3)
    keys = np.sort(all_faces, axis=1)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    if np.any(counts > 2):
        bad = np.flatnonzero(counts > 2)
        raise NonManifoldBoundary(f"{len(bad)} triangle(s) shared by more than two tets")

    neighbors = np.full(4 * m, -1, dtype=np.int64)
    order = np.argsort(inverse, kind="stable")
    sorted_inv = inverse[order]
    pair = np.flatnonzero(sorted_inv[1:] == sorted_inv[:-1])
    first, second = order[pair], order[pair + 1]
    neighbors[first] = second // 4
    neighbors[second] = first // 4
    neighbors = neighbors.reshape(m, 4)

    on_boundary = counts[inverse] == 1
    faces = all_faces[on_boundary].copy()
    opposite = tets.reshape(-1)[np.flatnonzero(on_boundary)]
    # the opposite vertex must lie on the negative side of an outward face
    side = signed_volumes(vertices, np.column_stack([faces, opposite]))
    flip = side > 0
    faces[flip] = faces[flip][:, [0, 2, 1]]

    idx_boundary = np.unique(faces)
    mask = np.ones(len(vertices), dtype=bool)
    mask[idx_boundary] = False
    idx_interior = np.flatnonzero(mask)
    return faces, idx_boundary, idx_interior, neighbors


def _check_closed_genus0(faces: np.ndarray) -> None:
    edges = np.sort(faces[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2), axis=1)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    if np.any(counts != 2):
        raise NonManifoldBoundary(
            f"boundary surface is not closed: {int(np.sum(counts != 2))} edge(s) "
            "not shared by exactly two boundary faces"
        )
    chi = len(np.unique(faces)) - len(uniq) + len(faces)
    if chi != 2:
        raise DisconnectedBoundary(f"boundary Euler characteristic is {chi}, expected 2")


class TetMesh:
    """Immutable tetrahedral mesh of a simply connected solid.

    Parameters
    ----------
    vertices : array_like
        Coordinates, shape (n, 3).
    tets : array_like
        0-based vertex indices, shape (m, 4). Negatively oriented tets are
        reoriented by swapping their last two indices.

    Attributes
    ----------
    vertices, tets : np.ndarray
        Read-only arrays.
    boundary_faces : np.ndarray
        Outward-oriented boundary triangles.
    idx_boundary, idx_interior : np.ndarray
        Partition of ``range(n)`` into boundary and interior vertex ids.
    neighbors : np.ndarray
        Tet adjacency across faces, -1 on the boundary.

    Raises
    ------
    MalformedFile
        Bad shapes, out-of-range or repeated indices.
    DegenerateTet
        Any tet of zero volume.
    NonManifoldBoundary, DisconnectedBoundary
        Boundary is not a closed genus-0 surface.
    """

    def __init__(self, vertices, tets):
        v = np.array(vertices, dtype=float)
        t = np.array(tets, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MalformedFile("vertices must have shape (n, 3)")
        if t.ndim != 2 or t.shape[1] != 4 or len(t) == 0:
            raise MalformedFile("tets must have shape (m, 4) with m >= 1")
        if t.min() < 0 or t.max() >= len(v):
            raise MalformedFile("tet index out of range")
        st = np.sort(t, axis=1)
        if np.any(st[:, 1:] == st[:, :-1]):
            raise MalformedFile("tet with repeated vertex index")
        if not np.all(np.isfinite(v)):
            raise MalformedFile("non-finite vertex coordinate")

        vol = signed_volumes(v, t)
        if np.any(vol == 0.0):
            raise DegenerateTet(f"{int(np.sum(vol == 0.0))} tet(s) with zero volume")
        neg = vol < 0
        if np.any(neg):
            logger.debug("reorienting %d negative tets", int(neg.sum()))
            t[neg] = t[neg][:, [0, 1, 3, 2]]
            vol = np.abs(vol)

        faces, ib, ii, nbr = boundary_extract(v, t)
        _check_closed_genus0(faces)

        for arr in (v, t, vol, faces, ib, ii, nbr):
            arr.setflags(write=False)
        self.vertices = v
        self.tets = t
        self.volumes = vol
        self.boundary_faces = faces
        self.idx_boundary = ib
        self.idx_interior = ii
        self.neighbors = nbr

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    @property
    def total_volume(self) -> float:
        return math.fsum(self.volumes)

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges, shape (n_edges, 2), sorted rows."""
        e = self.tets[:, [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]]].reshape(-1, 2)
        e = np.unique(np.sort(e, axis=1), axis=0)
        e.setflags(write=False)
        return e

    def with_vertices(self, vertices) -> "TetMesh":
        """Same connectivity, new coordinates (revalidated)."""
        return TetMesh(vertices, self.tets)

    def __repr__(self):
        return (f"TetMesh(n_vertices={self.n_vertices}, n_tets={self.n_tets}, "
                f"n_boundary={len(self.idx_boundary)})")


def vertex_volumes(mesh: TetMesh) -> np.ndarray:
    """Quarter of the summed volumes of the tets incident to each vertex."""
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, mesh.tets.ravel(), np.repeat(mesh.volumes / 4.0, 4))
    return out


def vertex_volume(mesh: TetMesh, v: int) -> float:
    if not 0 <= v < mesh.n_vertices:
        raise IndexError(f"vertex {v} out of range")
    incident = np.any(mesh.tets == v, axis=1)
    return math.fsum(mesh.volumes[incident]) / 4.0


# ---------------------------------------------------------------------------
# file formats


def _tokens(text: str):
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        yield from line.split()


# entries per record for MEDIT sections we skip over
_MEDIT_SKIP = {
    "edges": 3, "triangles": 4, "quadrilaterals": 5, "hexahedra": 9,
    "corners": 1, "ridges": 1, "requiredvertices": 1, "requiredtriangles": 1,
    "requirededges": 1, "normals": 3, "tangents": 3,
}


def _parse_medit(text: str):
    toks = list(_tokens(text))
    pos = 0
    verts = tets = None

    def take(k):
        nonlocal pos
        if pos + k > len(toks):
            raise MalformedFile("unexpected end of MEDIT file")
        out = toks[pos:pos + k]
        pos += k
        return out

    while pos < len(toks):
        kw = toks[pos]
        pos += 1
        key = kw.lower()
        try:
            if key == "meshversionformatted":
                take(1)
            elif key == "dimension":
                (d,) = take(1)
                if int(d) != 3:
                    raise MalformedFile(f"unsupported dimension {d}")
            elif key == "vertices":
                n = int(take(1)[0])
                verts = np.array(take(4 * n), dtype=float).reshape(n, 4)[:, :3]
            elif key == "tetrahedra":
                m = int(take(1)[0])
                tets = np.array(take(5 * m), dtype=np.int64).reshape(m, 5)[:, :4] - 1
            elif key in _MEDIT_SKIP:
                k = int(take(1)[0])
                take(k * _MEDIT_SKIP[key])
            elif key == "end":
                break
            else:
                raise MalformedFile(f"unknown MEDIT keyword {kw!r}")
        except ValueError as exc:
            raise MalformedFile(f"bad value in section {kw!r}: {exc}") from None
    if verts is None or tets is None:
        raise MalformedFile("MEDIT file needs both Vertices and Tetrahedra sections")
    return verts, tets


def _table(text: str, what: str):
    rows = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            rows.append(line.split())
    if not rows:
        raise MalformedFile(f"empty {what} file")
    try:
        count = int(rows[0][0])
    except ValueError:
        raise MalformedFile(f"bad {what} header") from None
    body = rows[1:1 + count]
    if len(body) != count:
        raise MalformedFile(f"{what} file declares {count} records, found {len(body)}")
    return body


def _parse_tetgen(node: str, ele: str):
    try:
        nrows = _table(node, "node")
        ids = np.array([int(r[0]) for r in nrows])
        verts = np.array([[float(x) for x in r[1:4]] for r in nrows])
        erows = _table(ele, "ele")
        tets = np.array([[int(x) for x in r[1:5]] for r in erows], dtype=np.int64)
    except (ValueError, IndexError) as exc:
        raise MalformedFile(f"bad TetGen record: {exc}") from None
    base = int(ids[0]) if len(ids) else 0
    if base not in (0, 1):
        raise MalformedFile(f"TetGen node ids must start at 0 or 1, got {base}")
    return verts, tets - base


def _decode(data) -> str:
    if isinstance(data, bytes):
        try:
            return data.decode("ascii")
        except UnicodeDecodeError:
            raise MalformedFile("mesh file is not ASCII") from None
    return data


def parse_arrays(data, format: str = "medit"):
    """Parse raw ``(vertices, tets)`` without mesh validation.

    Used for map files, whose image tets may be folded.
    """
    if format == "medit":
        return _parse_medit(_decode(data))
    if format == "tetgen":
        node, ele = data
        return _parse_tetgen(_decode(node), _decode(ele))
    raise ValueError(f"unknown mesh format {format!r}")


def parse_mesh(data, format: str = "medit") -> TetMesh:
    """Parse a mesh from file contents.

    Parameters
    ----------
    data : bytes or str, or (node, ele) pair for ``format="tetgen"``
        File contents.
    format : {"medit", "tetgen"}

    Returns
    -------
    TetMesh
    """
    return TetMesh(*parse_arrays(data, format))


def format_medit(vertices, tets) -> str:
    """Canonical MEDIT text: 17 significant digits, zero reference tags."""
    vertices = np.asarray(vertices, dtype=float)
    tets = np.asarray(tets, dtype=np.int64)
    lines = ["MeshVersionFormatted 2", "Dimension 3", f"Vertices {len(vertices)}"]
    lines += [f"{x:.17g} {y:.17g} {z:.17g} 0" for x, y, z in vertices]
    lines.append(f"Tetrahedra {len(tets)}")
    lines += [f"{i} {j} {k} {l} 0" for i, j, k, l in tets + 1]
    lines.append("End")
    return "\n".join(lines) + "\n"


def _tetgen_pair(path: Path):
    stem = path.with_suffix("")
    return stem.with_suffix(".node"), stem.with_suffix(".ele")


def read_arrays(path):
    path = Path(path)
    if path.suffix in (".node", ".ele"):
        node, ele = _tetgen_pair(path)
        return parse_arrays((node.read_bytes(), ele.read_bytes()), "tetgen")
    return parse_arrays(path.read_bytes(), "medit")


def read_mesh(path) -> TetMesh:
    """Read a ``.mesh`` file or a TetGen ``.node``/``.ele`` pair."""
    return TetMesh(*read_arrays(path))


def write_mesh(path, mesh_or_vertices, tets=None) -> None:
    if tets is None:
        vertices, tets = mesh_or_vertices.vertices, mesh_or_vertices.tets
    else:
        vertices = mesh_or_vertices
    Path(path).write_text(format_medit(vertices, tets))


# ---------------------------------------------------------------------------
# generators


def _cube_grid(r: int):
    ticks = np.linspace(-1.0, 1.0, r + 1)
    gx, gy, gz = np.meshgrid(ticks, ticks, ticks, indexing="ij")
    verts = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])

    def vid(i, j, k):
        return (i * (r + 1) + j) * (r + 1) + k

    ci, cj, ck = (a.ravel() for a in np.meshgrid(*(np.arange(r),) * 3, indexing="ij"))
    tets = []
    for perm in _KUHN_PERMS:
        corner = [ci, cj, ck]
        path = [vid(*corner)]
        for axis in perm:
            corner = list(corner)
            corner[axis] = corner[axis] + 1
            path.append(vid(*corner))
        tets.append(np.column_stack(path))
    tets = np.concatenate(tets)
    neg = signed_volumes(verts, tets) < 0
    tets[neg] = tets[neg][:, [0, 1, 3, 2]]
    return verts, tets


def _cube_to_ball(p: np.ndarray) -> np.ndarray:
    # smooth bijection [-1,1]^3 -> unit ball, cube faces land on the sphere
    x2, y2, z2 = (p * p).T
    s = np.column_stack([
        1 - y2 / 2 - z2 / 2 + y2 * z2 / 3,
        1 - z2 / 2 - x2 / 2 + z2 * x2 / 3,
        1 - x2 / 2 - y2 / 2 + x2 * y2 / 3,
    ])
    return p * np.sqrt(s)


def _blob_radius(u: np.ndarray, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(4, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    amp = rng.uniform(-1.0, 1.0, size=4)
    amp *= 0.25 / np.abs(amp).sum()
    phase = rng.uniform(0.0, 2 * np.pi, size=4)
    return 1.0 + np.sin(0.5 * np.pi * (u @ dirs.T) + phase) @ amp


def generate_mesh(kind: str, resolution: int, *, axes=(1.0, 1.0, 1.0), seed: int = 0) -> TetMesh:
    """Deterministic synthetic meshes centered at the origin.

    All kinds start from a ``resolution**3`` grid of cubes on ``[-1, 1]^3``,
    each split into 6 Kuhn tets, so every kind has ``(resolution + 1)**3``
    vertices and ``6 * resolution**3`` tets.

    ``cube``
        The grid itself.
    ``ball``
        Grid pushed through a smooth cube-to-ball bijection. Boundary
        vertices lie exactly on the unit sphere.
    ``ellipsoid``
        ``ball`` scaled per axis by ``axes``.
    ``blob``
        ``ball`` with a smooth star-shaped radial perturbation drawn from
        ``seed`` (radius stays within 25% of 1).
    """
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    verts, tets = _cube_grid(int(resolution))
    if kind == "cube":
        pass
    elif kind in ("ball", "ellipsoid", "blob"):
        verts = _cube_to_ball(verts)
        if kind == "ellipsoid":
            verts = verts * np.asarray(axes, dtype=float)
        elif kind == "blob":
            norm = np.linalg.norm(verts, axis=1)
            u = np.divide(verts, norm[:, None], out=np.zeros_like(verts), where=norm[:, None] > 0)
            verts = verts * _blob_radius(u, seed)[:, None]
    else:
        raise ValueError(f"unknown mesh kind {kind!r}")
    if np.any(signed_volumes(verts, tets) <= 0):
        raise DegenerateTet(f"{kind} generator inverted tets at resolution {resolution}")
    return TetMesh(verts, tets)
