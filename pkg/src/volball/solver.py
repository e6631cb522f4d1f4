"""Preconditioned nonlinear conjugate gradient for the isovolumetric energy.

Pipeline (:func:`parameterize`): pose normalization, spherical boundary
initialization, fixed-point warm start, a one-time block preconditioner
factorization, then :func:`cg_minimize`.

Unknowns are stacked as ``x = [f_I^1, f_I^2, f_I^3, theta, phi]``.
"""

from __future__ import annotations

import io
import logging
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.sparse.linalg import splu

from .boundary_init import init_boundary_sphere
from .energy import assembler_for, image_volume, iso_energy, stretch_energy
from .errors import (
    DegenerateImageTet,
    LineSearchFailure,
    NondecreasingDiagnostic,
    NotPositiveDefinite,
    SingularSystem,
    ZeroImageVolume,
)
from .mesh import TetMesh, signed_volumes
from .pose import AstTransform, ast_normalize
from .spherical import (
    SphericalBoundary,
    assemble_map,
    from_spherical,
    grad_iso_energy,
    normalize_angles,
    pack,
    to_spherical,
    unpack,
)

logger = logging.getLogger(__name__)

SAFEGUARDS = ("quadratic_guarded", "strong_wolfe")


@dataclass
class SolverConfig:
    vsem_warm_steps: int = 15
    cg_max_iters: int = 500
    tol_epsilon: float = 1e-9
    alpha0: float = 1e-3
    ast_enabled: bool = True
    safeguard: str = "quadratic_guarded"
    c1: float = 1e-4
    c2: float = 0.4
    max_halvings: int = 30
    init_method: str = "auto"
    refresh_preconditioner: bool = False

    def __post_init__(self):
        if self.safeguard not in SAFEGUARDS:
            raise ValueError(f"safeguard must be one of {SAFEGUARDS}")
        if self.safeguard == "strong_wolfe" and not 0 < self.c1 < self.c2 < 0.5:
            raise ValueError("strong Wolfe constants need 0 < c1 < c2 < 1/2")
        if self.vsem_warm_steps < 0 or self.cg_max_iters < 0:
            raise ValueError("step counts must be nonnegative")
        if self.alpha0 <= 0:
            raise ValueError("alpha0 must be positive")


@dataclass
class IterationRecord:
    iter: int
    energy: float
    alpha: float
    beta: float
    grad_norm: float
    foldings: int


@dataclass
class SolverReport:
    """Per-iteration trace of a :func:`cg_minimize` run.

    Each row describes the iterate after that step; ``grad_norm`` is its
    preconditioned gradient norm ``sqrt(g^T M^-1 g)``. Row 0 is the
    starting point. ``to_csv`` omits wall time so repeated runs give
    byte-identical output.
    """

    records: list = field(default_factory=list)
    termination: str = ""
    wall_time: float = 0.0

    @property
    def energies(self) -> np.ndarray:
        return np.array([r.energy for r in self.records])

    @property
    def iterations(self) -> int:
        return len(self.records) - 1

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("iter,E_I,alpha,beta,grad_norm,foldings\n")
        for r in self.records:
            vals = ",".join(repr(float(v)) for v in (r.energy, r.alpha, r.beta, r.grad_norm))
            buf.write(f"{r.iter},{vals},{r.foldings}\n")
        return buf.getvalue()


def folding_count_of(mesh: TetMesh, f) -> int:
    return int(np.sum(signed_volumes(f, mesh.tets) <= 0))


# ---------------------------------------------------------------------------
# linear algebra


class BlockCholesky:
    """Sparse symmetric factorization with a fill-reducing ordering.

    Backed by SuperLU with a symmetric minimum-degree ordering and no
    off-diagonal pivoting, which makes the computed ``U`` the ``D L^T`` of
    an ``L D L^T`` factorization; ``D > 0`` certifies positive definiteness.
    """

    def __init__(self, a, name: str = "block"):
        a = a.tocsc()
        if a.shape[0] == 0:
            self._lu = None
            return
        lu = splu(a, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                  options={"SymmetricMode": True})
        d = lu.U.diagonal()
        if not np.all(lu.perm_r == lu.perm_c) or np.any(d <= 0) or not np.all(np.isfinite(d)):
            raise NotPositiveDefinite(
                f"{name} preconditioner block is not positive definite "
                "(starting map likely has flipped image tets)")
        self._lu = lu

    def solve(self, b):
        if self._lu is None:
            return np.zeros_like(b)
        return self._lu.solve(np.asarray(b, dtype=float))


class Preconditioner:
    """``M = blockdiag(I_3 (x) L_II, I_2 (x) L_BB)`` factored once."""

    def __init__(self, L, idx_interior, idx_boundary):
        L = L.tocsr()
        l_ii = L[idx_interior][:, idx_interior]
        l_bb = L[idx_boundary][:, idx_boundary]
        if len(idx_interior) == 0:
            # without interior vertices L_BB is the full (singular) Laplacian
            l_bb = l_bb + 1e-8 * abs(l_bb.diagonal()).max() * _speye(l_bb.shape[0])
        self.interior = BlockCholesky(l_ii, "interior")
        self.boundary = BlockCholesky(l_bb, "boundary")
        self.matrices = (l_ii, l_bb)
        self.n_interior = len(idx_interior)
        self.n_boundary = len(idx_boundary)

    def apply(self, g: np.ndarray) -> np.ndarray:
        """``M^-1 g`` for a stacked vector."""
        ni, nb = self.n_interior, self.n_boundary
        h = np.empty_like(g)
        h[:3 * ni] = self.interior.solve(g[:3 * ni].reshape(3, ni).T).T.ravel()
        h[3 * ni:] = self.boundary.solve(g[3 * ni:].reshape(2, nb).T).T.ravel()
        return h

    def multiply(self, x: np.ndarray) -> np.ndarray:
        ni, nb = self.n_interior, self.n_boundary
        l_ii, l_bb = self.matrices
        out = np.empty_like(x)
        out[:3 * ni] = (l_ii @ x[:3 * ni].reshape(3, ni).T).T.ravel()
        out[3 * ni:] = (l_bb @ x[3 * ni:].reshape(2, nb).T).T.ravel()
        return out


def _speye(n):
    from scipy import sparse
    return sparse.identity(n, format="csc")


def factor_preconditioner(L, idx_interior, idx_boundary) -> Preconditioner:
    """Factor the interior and boundary diagonal blocks of ``L``.

    Raises
    ------
    NotPositiveDefinite
    """
    return Preconditioner(L, idx_interior, idx_boundary)


# ---------------------------------------------------------------------------
# warm start


def _solve_interior(L, mesh: TetMesh, f_b: np.ndarray) -> np.ndarray:
    ii, ib = mesh.idx_interior, mesh.idx_boundary
    L = L.tocsr()
    l_ii = L[ii][:, ii].tocsc()
    rhs = -(L[ii][:, ib] @ f_b)
    try:
        lu = splu(l_ii, permc_spec="MMD_AT_PLUS_A")
    except RuntimeError as exc:
        raise SingularSystem(f"interior block is singular: {exc}") from None
    x = lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise SingularSystem("interior solve produced non-finite values")
    return x


def vsem_fixed_point(mesh: TetMesh, f_b, steps: int, f_start=None) -> np.ndarray:
    """Fixed-point iteration with the boundary held at ``f_b``.

    Starting from the identity-map Laplacian (or from ``L_V(f_start)`` if
    given), repeatedly solves ``L_II f_I = -L_IB f_B`` and rebuilds ``L``
    from the new map. The identity-based solve is always performed unless
    ``f_start`` is supplied; ``steps`` further rounds follow.

    Returns
    -------
    np.ndarray
        Map of shape (n, 3).

    Warns
    -----
    NondecreasingDiagnostic
        When some round increases the isovolumetric energy.
    """
    f_b = np.asarray(f_b, dtype=float)
    asm = assembler_for(mesh)
    f = np.empty((mesh.n_vertices, 3))
    f[mesh.idx_boundary] = f_b
    if f_start is None:
        if len(mesh.idx_interior):
            f[mesh.idx_interior] = _solve_interior(asm(mesh.vertices), mesh, f_b)
    else:
        f[mesh.idx_interior] = np.asarray(f_start, dtype=float)[mesh.idx_interior]
    if len(mesh.idx_interior) == 0:
        return f
    energy = iso_energy(mesh, f)
    increased = 0
    for _ in range(steps):
        f[mesh.idx_interior] = _solve_interior(asm(f, check=False), mesh, f_b)
        new = iso_energy(mesh, f)
        increased += new > energy
        energy = new
    if increased:
        warnings.warn(f"fixed-point energy increased in {increased} of {steps} rounds",
                      NondecreasingDiagnostic, stacklevel=2)
    return f


# ---------------------------------------------------------------------------
# line search


def quadratic_step(phi0: float, dphi0: float, alpha_prev: float, phi_prev: float) -> float:
    """Minimizer of the quadratic through ``phi(0)``, ``phi'(0)`` and ``phi(alpha_prev)``.

    Returns ``nan`` when the fitted parabola is not convex.
    """
    curv = phi_prev - phi0 - alpha_prev * dphi0
    if not curv > 0 or not math.isfinite(curv):
        return math.nan
    return -alpha_prev * alpha_prev * dphi0 / (2.0 * curv)


class _Problem:
    """Energy and gradient as functions of the stacked unknowns."""

    def __init__(self, mesh: TetMesh):
        self.mesh = mesh
        self.ni = len(mesh.idx_interior)
        self.asm = assembler_for(mesh)
        self.v_e = mesh.total_volume

    def map(self, x):
        fi, th, ph = unpack(x, self.ni)
        return assemble_map(self.mesh, fi, SphericalBoundary(th, ph))

    def energy(self, x) -> float:
        f = self.map(x)
        try:
            return iso_energy(self.mesh, f)
        except ZeroImageVolume:
            return math.inf

    def state(self, x):
        """Map, Laplacian, stretch energy, volume and energy at ``x``."""
        f = self.map(x)
        L = self.asm(f)
        e_v = stretch_energy(self.mesh, f)
        v_f = image_volume(self.mesh, f)
        if v_f == 0.0:
            raise ZeroImageVolume("image volume is zero")
        return f, L, e_v, v_f, self.v_e / v_f * e_v - v_f

    def gradient(self, x, f=None, L=None, e_v=None, v_f=None) -> np.ndarray:
        if f is None:
            f, L, e_v, v_f, _ = self.state(x)
        _, th, ph = unpack(x, self.ni)
        return grad_iso_energy(self.mesh, f, SphericalBoundary(th, ph), L, e_v, v_f).stack()


def _guarded_step(problem: _Problem, x, p, e0, dphi0, alpha_trial, max_halvings):
    """Quadratic-interpolation step with halving fallback; ``None`` on failure."""
    phi_trial = problem.energy(x + alpha_trial * p)
    alpha = quadratic_step(e0, dphi0, alpha_trial, phi_trial)
    if math.isfinite(alpha) and alpha > 0:
        e = problem.energy(x + alpha * p)
        if e <= e0:
            return alpha, e
    else:
        alpha = alpha_trial
        if phi_trial <= e0:
            return alpha, phi_trial
    for _ in range(max_halvings):
        alpha *= 0.5
        e = problem.energy(x + alpha * p)
        if e <= e0:
            return alpha, e
    return None


def _wolfe_step(problem: _Problem, x, p, g, e0, c1, c2):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", optimize.OptimizeWarning)
        res = optimize.line_search(problem.energy, problem.gradient, x, p, gfk=g,
                                   old_fval=e0, c1=c1, c2=c2)
    alpha = res[0]
    if alpha is None or not alpha > 0:
        return None
    return alpha, res[3]


def _canonical_angles(x, p, ni, nb):
    """Reflect theta back into [0, pi] (adjusting phi and the direction), then clamp/wrap."""
    th = x[3 * ni:3 * ni + nb]
    ph = x[3 * ni + nb:]
    out = x.copy()
    p = p.copy()
    over = (th < 0) | (th > np.pi)
    if np.any(over):
        th = np.where(th < 0, -th, np.where(th > np.pi, 2 * np.pi - th, th))
        ph = np.where(over, ph + np.pi, ph)
        p[3 * ni:3 * ni + nb][over] *= -1
    th, ph = normalize_angles(th, ph)
    out[3 * ni:3 * ni + nb] = th
    out[3 * ni + nb:] = ph
    return out, p


def cg_minimize(mesh: TetMesh, f0, cfg: SolverConfig | None = None,
                precond: Preconditioner | None = None):
    """Minimize the isovolumetric energy from ``f0``.

    Each iteration computes the gradient ``g``, ``h = M^-1 g``, a
    Fletcher-Reeves direction in the ``M^-1`` inner product (restarted with
    ``-h`` if it is not a descent direction), and a step length from
    quadratic interpolation of ``alpha -> E_I(x + alpha p)`` through the
    previous step length. Stops when the energy decrease is at most
    ``cfg.tol_epsilon`` or after ``cfg.cg_max_iters`` iterations.

    Parameters
    ----------
    mesh : TetMesh
    f0 : np.ndarray
        Starting map (n, 3); boundary rows are read as points on the sphere.
    cfg : SolverConfig, optional
    precond : Preconditioner, optional
        Built from ``L_V(f0)`` when omitted.

    Returns
    -------
    (np.ndarray, SolverReport)

    Raises
    ------
    LineSearchFailure, DegenerateImageTet, NotPositiveDefinite
    """
    cfg = cfg or SolverConfig()
    t_start = time.perf_counter()
    problem = _Problem(mesh)
    ni, nb = problem.ni, len(mesh.idx_boundary)
    f0 = np.asarray(f0, dtype=float)
    sb = to_spherical(f0[mesh.idx_boundary])
    th, ph = normalize_angles(sb.theta, sb.phi)
    x = pack(f0[mesh.idx_interior], SphericalBoundary(th, ph))
    f, L, e_v, v_f, energy = problem.state(x)
    if precond is None:
        precond = factor_preconditioner(L, mesh.idx_interior, mesh.idx_boundary)

    report = SolverReport()
    g = problem.gradient(x, f, L, e_v, v_f)
    h = precond.apply(g)
    lam = float(g @ h)
    report.records.append(IterationRecord(0, energy, math.nan, math.nan, math.sqrt(max(lam, 0.0)),
                                          folding_count_of(mesh, f)))
    p = None
    lam_prev = None
    alpha_prev = None
    report.termination = "max_iters"
    for k in range(1, cfg.cg_max_iters + 1):
        e0 = energy
        if lam == 0.0:
            report.termination = "tol_reached"
            break
        if p is None:
            p, beta, restarted = -h, math.nan, True
        else:
            beta = lam / lam_prev
            p = -h + beta * p
            restarted = False
            if not p @ g < 0:
                p, restarted = -h, True
        lam_prev = lam
        if alpha_prev is None:
            alpha_prev = cfg.alpha0 / np.abs(p).max()

        step = None
        for attempt in range(2):
            dphi0 = float(p @ g)
            if cfg.safeguard == "strong_wolfe":
                step = _wolfe_step(problem, x, p, g, e0, cfg.c1, cfg.c2)
            if step is None:
                step = _guarded_step(problem, x, p, e0, dphi0, alpha_prev, cfg.max_halvings)
            if step is not None or attempt == 1 or restarted:
                break
            p, restarted = -h, True
        if step is None:
            report.termination = "linesearch_failure"
            report.wall_time = time.perf_counter() - t_start
            raise LineSearchFailure(f"no decrease along the search direction at iteration {k}")
        alpha, _ = step
        x, p = _canonical_angles(x + alpha * p, p, ni, nb)
        alpha_prev = alpha
        f, L, e_v, v_f, energy = problem.state(x)
        if cfg.refresh_preconditioner:
            precond = factor_preconditioner(L, mesh.idx_interior, mesh.idx_boundary)
        g = problem.gradient(x, f, L, e_v, v_f)
        h = precond.apply(g)
        lam = float(g @ h)
        report.records.append(IterationRecord(k, energy, alpha, beta, math.sqrt(max(lam, 0.0)),
                                              folding_count_of(mesh, f)))
        if e0 - energy <= cfg.tol_epsilon:
            report.termination = "tol_reached"
            break
    report.wall_time = time.perf_counter() - t_start
    return f, report


def warm_start(mesh: TetMesh, cfg: SolverConfig):
    """Boundary initialization plus fixed-point warm start."""
    sb = init_boundary_sphere(mesh, method=cfg.init_method)
    return vsem_fixed_point(mesh, from_spherical(sb), cfg.vsem_warm_steps)


def parameterize(mesh: TetMesh, cfg: SolverConfig | None = None):
    """Volume-preserving map of ``mesh`` onto the unit ball.

    Returns
    -------
    f : np.ndarray
        Map (n, 3) of the pose-normalized mesh.
    transform : AstTransform
        Pose normalization applied first (identity if disabled).
    report : SolverReport
    """
    cfg = cfg or SolverConfig()
    if cfg.ast_enabled:
        work, transform = ast_normalize(mesh)
    else:
        work, transform = mesh, AstTransform.identity()
    f0 = warm_start(work, cfg)
    precond = factor_preconditioner(assembler_for(work)(f0), work.idx_interior, work.idx_boundary)
    f, report = cg_minimize(work, f0, cfg, precond)
    logger.info("parameterize: %s after %d iterations, E_I=%.3e, foldings=%d",
                report.termination, report.iterations, report.records[-1].energy,
                report.records[-1].foldings)
    return f, transform, report


def normalized_mesh(mesh: TetMesh, cfg: SolverConfig | None = None) -> TetMesh:
    """The mesh :func:`parameterize` actually maps (after optional AST)."""
    cfg = cfg or SolverConfig()
    return ast_normalize(mesh)[0] if cfg.ast_enabled else mesh


__all__ = [
    "SolverConfig", "SolverReport", "IterationRecord", "Preconditioner", "BlockCholesky",
    "factor_preconditioner", "vsem_fixed_point", "quadratic_step", "cg_minimize",
    "parameterize", "warm_start", "normalized_mesh", "DegenerateImageTet",
]
