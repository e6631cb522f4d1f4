import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_feasible_map
from volball.energy import iso_energy
from volball.errors import ZeroImageVolume
from volball.metrics import (
    HISTOGRAM_BINS,
    evaluate,
    folding_count,
    histogram,
    local_distortion,
    summarize,
    write_distortion_csv,
    write_histogram_csv,
    write_summary_csv,
)
from volball.mesh import signed_volume


def test_identity_and_scaling_zero(cube5):
    assert np.all(local_distortion(cube5, cube5.vertices) == 0)
    assert np.abs(local_distortion(cube5, 3.0 * cube5.vertices)).max() < 1e-14


def test_anisotropic_map_brute_force(cube5):
    f = cube5.vertices * [2.0, 1.0, 0.5]
    got = local_distortion(cube5, f)
    v_e = sum(signed_volume(*cube5.vertices[t]) for t in cube5.tets)
    p = f[cube5.boundary_faces]
    v_f = sum(np.dot(a, np.cross(b, c)) for a, b, c in p) / 6
    for k, t in enumerate(cube5.tets):
        ref = signed_volume(*cube5.vertices[t]) / v_e
        want = abs((signed_volume(*f[t]) / v_f - ref) / ref)
        assert got[k] == pytest.approx(want, abs=1e-14)


@given(st.floats(0.01, 100))
def test_scale_invariance(s):
    from volball.mesh import generate_mesh
    mesh = generate_mesh("blob", 2, seed=1)
    f = random_feasible_map(mesh, np.random.default_rng(0), amplitude=0.3)
    a = local_distortion(mesh, f)
    b = local_distortion(mesh, s * f)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-14)


def test_distortion_zero_iff_energy_zero(blob4):
    rng = np.random.default_rng(2)
    affine = blob4.vertices @ (np.eye(3) + 0.3 * rng.normal(size=(3, 3))).T
    assert np.abs(local_distortion(blob4, affine)).max() < 1e-10
    assert iso_energy(blob4, affine) < 1e-10 * abs(iso_energy(blob4, 3 * affine) + 1)
    warped = random_feasible_map(blob4, rng)
    assert local_distortion(blob4, warped).max() > 1e-5
    assert iso_energy(blob4, warped) > 1e-10


def test_zero_image_volume(single_tet):
    with pytest.raises(ZeroImageVolume):
        local_distortion(single_tet, np.zeros((4, 3)))


def test_summary_zeros():
    s = summarize([0, 0, 0, 0])
    assert (s.mean, s.sd, s.p25, s.p50, s.p75, s.p95, s.folding_count) == (0, 0, 0, 0, 0, 0, 0)


def test_summary_linear_median():
    s = summarize([1, 2, 3, 4], 2)
    assert s.p50 == 2.5 and s.folding_count == 2
    assert s.sd == pytest.approx(np.sqrt(1.25))  # population SD


def _sorted_percentile(x, q):
    # closest-rank linear interpolation, written out
    x = sorted(x)
    pos = q / 100 * (len(x) - 1)
    lo = int(np.floor(pos))
    hi = min(lo + 1, len(x) - 1)
    return x[lo] + (pos - lo) * (x[hi] - x[lo])


def test_summary_percentiles_oracle():
    x = np.random.default_rng(0).exponential(size=10_000)
    s = summarize(x)
    for q, got in zip((25, 50, 75, 95), (s.p25, s.p50, s.p75, s.p95)):
        assert got == pytest.approx(_sorted_percentile(x, q), rel=1e-14)
    assert 0 <= s.p25 <= s.p50 <= s.p75 <= s.p95


def test_summary_empty():
    s = summarize([])
    assert s.mean == 0 and s.p95 == 0


def test_folding_count(single_tet, ball4):
    assert folding_count(ball4, ball4.vertices) == 0
    assert folding_count(ball4, -ball4.vertices) == ball4.n_tets
    f = single_tet.vertices.copy()
    # reflect vertex 3 through the plane of the opposite face
    n = np.cross(f[1] - f[0], f[2] - f[0])
    n /= np.linalg.norm(n)
    f[3] -= 2 * np.dot(f[3] - f[0], n) * n
    assert folding_count(single_tet, f) >= 1


def test_folding_interior_vertex(ball4):
    f = ball4.vertices.copy()
    v = ball4.idx_interior[len(ball4.idx_interior) // 2]
    f[v] += [0.0, 0.0, 2.0]  # drag one vertex through its neighbours
    assert folding_count(ball4, f) >= 1


def test_histogram_bins():
    counts, edges = histogram([0.0, 0.5, 1.0, 1.0])
    assert len(counts) == HISTOGRAM_BINS and counts.sum() == 4
    assert edges[0] == 0.0 and edges[-1] == 1.0
    counts, edges = histogram([0.0, 0.0])
    assert counts.sum() == 2


def test_csv_writers(tmp_path, blob4):
    f = random_feasible_map(blob4, np.random.default_rng(0))
    s = evaluate(blob4, f)
    write_distortion_csv(tmp_path / "d.csv", s.values)
    write_summary_csv(tmp_path / "s.csv", s)
    write_histogram_csv(tmp_path / "h.csv", s.values)
    rows = list(csv.reader(open(tmp_path / "d.csv")))
    assert rows[0] == ["tet", "D_V"] and len(rows) == blob4.n_tets + 1
    assert float(rows[1][1]) == s.values[0]
    rows = list(csv.DictReader(open(tmp_path / "s.csv")))
    assert float(rows[0]["p95"]) == s.p95 and int(rows[0]["foldings"]) == s.folding_count
    rows = list(csv.DictReader(open(tmp_path / "h.csv")))
    assert len(rows) == HISTOGRAM_BINS
    assert sum(int(r["count"]) for r in rows) == blob4.n_tets
    assert float(rows[-1]["bin_right"]) == pytest.approx(s.values.max())
