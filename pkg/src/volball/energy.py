"""Weighted volumetric Laplacian and the stretch / isovolumetric energies.

Sums over tets and boundary faces use :func:`math.fsum`, so energy values
are correctly rounded and independent of summation order.
"""

from __future__ import annotations

import math
import weakref

import numpy as np
from scipy import sparse

from ._backend import kernels
from ._pykernels import EDGE_LOCAL
from .errors import DegenerateImageTet, ZeroImageVolume
from .mesh import TetMesh, signed_volumes


class LaplacianAssembler:
    """Sparsity pattern of ``L_V`` for one mesh; assembles values per map.

    The CSR pattern (mesh edges plus diagonal) is computed once. Each call
    scatters the per-tet edge weights into it with :func:`numpy.bincount`,
    which visits the contributions to ``(i, j)`` and ``(j, i)`` in the same
    order, so the result is exactly symmetric.
    """

    def __init__(self, mesh: TetMesh):
        self.mesh = mesh
        n = mesh.n_vertices
        t = mesh.tets
        a = t[:, EDGE_LOCAL[:, 0]].ravel()
        b = t[:, EDGE_LOCAL[:, 1]].ravel()
        # (min, max) first so (i, j) and (j, i) receive identical sequences
        ei, ej = np.minimum(a, b), np.maximum(a, b)
        diag = np.arange(n)
        rows = np.concatenate([ei, ej, diag])
        cols = np.concatenate([ej, ei, diag])
        keys, inverse = np.unique(rows * n + cols, return_inverse=True)
        self._n = n
        self._ne = len(ei)
        self._slot = inverse.ravel()
        self._diag_slot = self._slot[2 * self._ne:]
        self.indices = (keys % n).astype(np.int32)
        self.indptr = np.searchsorted(keys // n, np.arange(n + 1)).astype(np.int32)
        self._ei, self._ej = ei, ej

    def weights(self, f: np.ndarray) -> np.ndarray:
        """Per-tet modified cotangent weights, shape (m, 6)."""
        return kernels.edge_weights(np.ascontiguousarray(f, dtype=float),
                                    self.mesh.tets, self.mesh.volumes)

    def __call__(self, f: np.ndarray, check: bool = True) -> sparse.csr_matrix:
        f = np.ascontiguousarray(f, dtype=float)
        if check:
            vf = signed_volumes(f, self.mesh.tets)
            if np.any(vf == 0.0):
                raise DegenerateImageTet(
                    f"{int(np.sum(vf == 0.0))} image tet(s) with zero volume")
        w = self.weights(f).ravel()
        nnz = len(self.indices)
        off = np.bincount(self._slot[:2 * self._ne], weights=np.concatenate([-w, -w]),
                          minlength=nnz)
        rowsum = np.bincount(self._ei, weights=w, minlength=self._n)
        rowsum += np.bincount(self._ej, weights=w, minlength=self._n)
        off[self._diag_slot] = rowsum
        return sparse.csr_matrix((off, self.indices, self.indptr), shape=(self._n, self._n))


_ASSEMBLERS: "weakref.WeakKeyDictionary[TetMesh, LaplacianAssembler]" = weakref.WeakKeyDictionary()


def assembler_for(mesh: TetMesh) -> LaplacianAssembler:
    asm = _ASSEMBLERS.get(mesh)
    if asm is None:
        asm = _ASSEMBLERS[mesh] = LaplacianAssembler(mesh)
    return asm


def build_laplacian(mesh: TetMesh, f) -> sparse.csr_matrix:
    """Assemble the weighted Laplacian ``L_V(f)``.

    For each tet and each edge ``(i, j)`` with opposite edge ``(k, l)`` the
    weight is ``len(f_l - f_k) * cot(theta) * |f(tau)| / (9 |tau|)``, where
    ``theta`` is the dihedral angle of the image tet at edge ``(k, l)``.
    Off-diagonal entries are minus the summed weights; the diagonal makes
    every row sum to zero.

    Parameters
    ----------
    mesh : TetMesh
    f : np.ndarray
        Image coordinates, shape (n, 3).

    Returns
    -------
    scipy.sparse.csr_matrix
        Symmetric (n, n) matrix with ``0.5 * trace(f.T @ L @ f) == E_V(f)``.

    Raises
    ------
    DegenerateImageTet
        If some image tet has exactly zero volume.
    """
    return assembler_for(mesh)(f)


def stretch_energy(mesh: TetMesh, f) -> float:
    """Volumetric stretch energy, the sum of ``|f(tau)|**2 / |tau|``."""
    vf = signed_volumes(np.asarray(f, dtype=float), mesh.tets)
    return math.fsum(vf * vf / mesh.volumes)


def image_volume(mesh: TetMesh, f) -> float:
    """Signed volume enclosed by the image of the boundary surface.

    Sums the signed volumes of the tets spanned by the origin and each
    outward boundary face.
    """
    p = np.asarray(f, dtype=float)[mesh.boundary_faces]
    return math.fsum(np.einsum("ij,ij->i", p[:, 0], np.cross(p[:, 1], p[:, 2]))) / 6.0


def iso_energy(mesh: TetMesh, f) -> float:
    """Isovolumetric energy ``V(e) / V(f) * E_V(f) - V(f)``.

    Nonnegative for orientation-preserving maps and zero exactly when
    ``|f(tau)| / |tau|`` is constant.

    Raises
    ------
    ZeroImageVolume
        If the image volume is zero.
    """
    vf = image_volume(mesh, f)
    if vf == 0.0:
        raise ZeroImageVolume("image volume is zero")
    return mesh.total_volume / vf * stretch_energy(mesh, f) - vf
