"""Anisotropic scaling transformation (AST): principal-axis pose normalization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RankDeficientCloud
from .mesh import TetMesh

SKEW_TOL = 1e-6


@dataclass(frozen=True)
class AstTransform:
    """``x -> diag(scales) @ rotation @ (x - center)``."""

    rotation: np.ndarray
    scales: np.ndarray
    center: np.ndarray

    @classmethod
    def identity(cls) -> "AstTransform":
        return cls(np.eye(3), np.ones(3), np.zeros(3))

    def apply(self, points) -> np.ndarray:
        return ((np.asarray(points, dtype=float) - self.center) @ self.rotation.T) * self.scales

    def invert(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=float) / self.scales) @ self.rotation + self.center


def _axis_signs(centered: np.ndarray, axes: np.ndarray) -> np.ndarray:
    # orient each principal axis toward the heavier tail (third moment) so
    # the result does not depend on the input's rotation; symmetric shapes
    # fall back to making the largest-magnitude component positive
    proj = centered @ axes
    scale = np.abs(proj).max(axis=0)
    skew = np.mean((proj / scale) ** 3, axis=0)
    out = axes.copy()
    for c in range(2):
        if abs(skew[c]) > SKEW_TOL:
            sign = np.sign(skew[c])
        else:
            sign = np.sign(axes[np.argmax(np.abs(axes[:, c])), c])
        out[:, c] *= sign
    out[:, 2] = np.cross(out[:, 0], out[:, 1])
    return out


def ast_normalize(mesh: TetMesh):
    """Rotate principal axes onto the coordinate axes and rescale each axis.

    The center is the vertex mean. Principal axes come from the SVD of the
    centered vertices; each axis is then scaled so the largest positive
    coordinate along it is 1.

    Returns
    -------
    (TetMesh, AstTransform)

    Raises
    ------
    RankDeficientCloud
        If the vertices are (nearly) coplanar.
    """
    v = mesh.vertices
    center = v.mean(axis=0)
    p = v - center
    _, s, vt = np.linalg.svd(p, full_matrices=False)
    if s[2] <= 1e-12 * s[0]:
        raise RankDeficientCloud(f"singular values {s} indicate a flat point cloud")
    axes = _axis_signs(p, vt.T)
    rotation = axes.T
    scales = 1.0 / (p @ axes).max(axis=0)
    t = AstTransform(rotation, scales, center)
    return mesh.with_vertices(t.apply(v)), t
