"""Volume distortion statistics of a computed map."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .energy import image_volume
from .errors import ZeroImageVolume
from .mesh import TetMesh, signed_volumes

HISTOGRAM_BINS = 50
PERCENTILES = (25, 50, 75, 95)


def local_distortion(mesh: TetMesh, f) -> np.ndarray:
    """Per-tet relative volume distortion.

    ``D_V(tau) = | (|f(tau)| / V(f) - |tau| / V(e)) / (|tau| / V(e)) |``,
    where ``V(f)`` is the volume enclosed by the image boundary and ``V(e)``
    the mesh volume. Invariant under uniform scaling of ``f``.

    Raises
    ------
    ZeroImageVolume
    """
    f = np.asarray(f, dtype=float)
    v_f = image_volume(mesh, f)
    if v_f == 0.0:
        raise ZeroImageVolume("image volume is zero")
    ref = mesh.volumes / mesh.total_volume
    return np.abs((signed_volumes(f, mesh.tets) / v_f - ref) / ref)


def folding_count(mesh: TetMesh, f) -> int:
    """Number of tets whose image has nonpositive signed volume."""
    return int(np.sum(signed_volumes(np.asarray(f, dtype=float), mesh.tets) <= 0))


@dataclass(frozen=True)
class DistortionSummary:
    """Mean, population SD and linear-interpolation percentiles of ``D_V``."""

    values: np.ndarray
    mean: float
    sd: float
    p25: float
    p50: float
    p75: float
    p95: float
    folding_count: int

    def row(self) -> dict:
        return {"mean": self.mean, "sd": self.sd, "p25": self.p25, "p50": self.p50,
                "p75": self.p75, "p95": self.p95, "foldings": self.folding_count}


def summarize(dist, foldings: int = 0) -> DistortionSummary:
    """Summary statistics of a per-tet distortion array.

    Percentiles interpolate linearly between closest ranks (NumPy's default
    ``"linear"`` method), so ``[1, 2, 3, 4]`` has median 2.5.
    """
    d = np.asarray(dist, dtype=float)
    if d.size == 0:
        p = [0.0] * 4
        mean = sd = 0.0
    else:
        p = np.percentile(d, PERCENTILES, method="linear").tolist()
        mean, sd = float(d.mean()), float(d.std())
    return DistortionSummary(d, mean, sd, *p, int(foldings))


def histogram(dist, bins: int = HISTOGRAM_BINS):
    """Counts over ``bins`` uniform bins spanning ``[0, max(dist)]``.

    Returns
    -------
    (np.ndarray, np.ndarray)
        Counts of length ``bins`` and edges of length ``bins + 1``.
    """
    d = np.asarray(dist, dtype=float)
    top = float(d.max()) if d.size else 0.0
    if top <= 0.0:
        top = 1.0
    return np.histogram(d, bins=bins, range=(0.0, top))


def _write(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue())


def _fmt(x) -> str:
    return repr(float(x))


def write_distortion_csv(path, dist):
    _write(path, ["tet", "D_V"], ((i, _fmt(v)) for i, v in enumerate(dist)))


def write_summary_csv(path, summary: DistortionSummary):
    row = summary.row()
    _write(path, list(row), [[_fmt(v) if k != "foldings" else v for k, v in row.items()]])


def write_histogram_csv(path, dist, bins: int = HISTOGRAM_BINS):
    counts, edges = histogram(dist, bins)
    _write(path, ["bin_left", "bin_right", "count"],
           ((_fmt(edges[i]), _fmt(edges[i + 1]), int(c)) for i, c in enumerate(counts)))


def evaluate(mesh: TetMesh, f) -> DistortionSummary:
    """``summarize(local_distortion(mesh, f), folding_count(mesh, f))``."""
    return summarize(local_distortion(mesh, f), folding_count(mesh, f))
