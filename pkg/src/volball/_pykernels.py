"""Pure numpy/Python implementations of the hot kernels.

Signatures match the compiled ``_ckernels`` module exactly; see
``volball._backend`` for how one of the two is selected.
"""

import numpy as np

NAME = "python"

# (i, j, k, l): weight of edge (i, j) uses the dihedral angle on edge (k, l)
EDGE_LOCAL = np.array([
    [0, 1, 2, 3],
    [0, 2, 1, 3],
    [0, 3, 1, 2],
    [1, 2, 0, 3],
    [1, 3, 0, 2],
    [2, 3, 0, 1],
])


def edge_weights(image, tets, ref_vol):
    """Modified cotangent weights, shape (m, 6), one per local edge.

    Equals ``len(f(e_kl)) * cot(theta_kl) * |f(tau)| / (9 |tau|)``, written
    as ``(u x a) . (u x b) / (54 |tau|)`` with ``u = f_l - f_k``,
    ``a = f_i - f_k``, ``b = f_j - f_k``.
    """
    p = image[tets]
    out = np.empty((len(tets), 6))
    for e, (i, j, k, l) in enumerate(EDGE_LOCAL):
        u = p[:, l] - p[:, k]
        n1 = np.cross(u, p[:, i] - p[:, k])
        n2 = np.cross(u, p[:, j] - p[:, k])
        out[:, e] = np.einsum("ij,ij->i", n1, n2)
    out /= 54.0 * ref_vol[:, None]
    return out


def _det(a, b, c, d):
    # orient3d on plain float triples; much cheaper than numpy on 3-vectors
    bx, by, bz = b[0] - a[0], b[1] - a[1], b[2] - a[2]
    cx, cy, cz = c[0] - a[0], c[1] - a[1], c[2] - a[2]
    dx, dy, dz = d[0] - a[0], d[1] - a[1], d[2] - a[2]
    nx = by * cz - bz * cy
    ny = bz * cx - bx * cz
    nz = bx * cy - by * cx
    return nx * dx + ny * dy + nz * dz


def _bary(q, p):
    # barycentric coordinates of q in tet p (4 points), via sub-volumes
    v = _det(p[0], p[1], p[2], p[3])
    return [_det(q, p[1], p[2], p[3]) / v,
            _det(p[0], q, p[2], p[3]) / v,
            _det(p[0], p[1], q, p[3]) / v,
            _det(p[0], p[1], p[2], q) / v]


def walk_locate(image, tets, neighbors, points, start, eps, max_steps):
    """Locate each point by a visibility walk through the image mesh.

    The walk for point ``q`` starts where the previous point was found
    (``start`` for the first point, or after a failure). Returns tet ids
    (-1 when the walk leaves the mesh or exceeds ``max_steps``) and the
    barycentric weights in the found tet.
    """
    nq = len(points)
    found = np.full(nq, -1, dtype=np.int64)
    bary = np.zeros((nq, 4))
    current = int(start)
    img = image.tolist()
    tl = tets.tolist()
    nbr = neighbors.tolist()
    for s, q in enumerate(points.tolist()):
        t = current
        for _ in range(max_steps):
            lam = _bary(q, [img[i] for i in tl[t]])
            a = min(range(4), key=lam.__getitem__)
            if lam[a] >= -eps:
                found[s] = t
                bary[s] = lam
                current = t
                break
            t = nbr[t][a]
            if t < 0:
                break
    return found, bary
