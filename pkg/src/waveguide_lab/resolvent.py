"""Helmholtz resolvent solves, exact energy identities, and z-sweeps."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverBreakdown, SpectrumHit, ZeroSource
from .fields import GridFunction, bracket_weight, gradient_x, weighted_l2
from .mcnorms import norm_report, xstar_norm
from .operators import LatticeOperator

DIRECT_LIMIT = 150_000      # unknowns; beyond this fall back to Krylov
TOL_SOLVE = 1e-10


@dataclass(frozen=True)
class SpectralPoint:
    lam: float
    eps: float

    @property
    def z(self) -> complex:
        return complex(self.lam, self.eps)

    @property
    def abs_z(self) -> float:
        return abs(self.z)


@dataclass
class ResolventSolve:
    operator: LatticeOperator
    z: SpectralPoint
    f: GridFunction
    u: GridFunction
    residual: float
    iterations: int
    method: str


@dataclass(frozen=True)
class SweepRecord:
    lam: float
    eps: float
    ratio: float
    x_norm_u: float
    x1_norm_u: float
    x_norm_grad: float
    xstar_f: float
    weighted_interp: float   # |<x>^{-1-e} u| / |<x>^{1+e} f|
    weighted_grad: float     # |<x>^{-1/2-e} grad_x u| / |<x>^{1/2+e} f|
    weighted_z: float        # |z|^{1/2} |<x>^{-1/2-e} u| / |<x>^{1/2+e} f|
    residual: float
    iterations: int
    source: int = 0


@dataclass
class SweepSummary:
    records: list
    lambda_grid: np.ndarray
    eps_grid: np.ndarray
    max_ratio: float
    trend: float
    per_z: dict                      # (lam, eps) -> aggregated ratio
    eps_floor: float | None = None
    trend_reliable: float | None = None
    errors: list = field(default_factory=list)


class ResolventFactorization:
    """One factorization of (T - z), reusable across right-hand sides."""

    def __init__(self, op: LatticeOperator, z: complex, tol: float = TOL_SOLVE,
                 method: str = "auto"):
        self.op = op
        self.z = z
        self.tol = tol
        n = op.n
        A = (op.matrix - z * sp.identity(n, format="csr")).tocsc()
        if method == "auto":
            method = "splu" if n <= DIRECT_LIMIT else "lgmres+ilu"
        self.method = method
        if self.method == "splu":
            try:
                self._lu = spla.splu(A.astype(np.complex128))
            except RuntimeError as exc:  # singular factorization
                raise SpectrumHit(f"factorization failed at z = {z}: {exc}")
            self._A = A
        else:
            self._A = A.astype(np.complex128)
            self._ilu = spla.spilu(self._A, drop_tol=1e-5, fill_factor=20)

    def solve_w(self, rhs_w: np.ndarray) -> tuple[np.ndarray, int]:
        if self.method == "splu":
            return self._lu.solve(rhs_w), 1
        M = spla.LinearOperator(self._A.shape, self._ilu.solve)
        w, info = spla.lgmres(self._A, rhs_w, M=M, rtol=self.tol / 10,
                              maxiter=2000)
        if info != 0:
            raise SolverBreakdown(f"lgmres stalled (info={info}) at z = {self.z}")
        return w, abs(info) if info else 2000


def solve_resolvent(op: LatticeOperator, z: SpectralPoint | complex,
                    f: GridFunction, tol: float = TOL_SOLVE,
                    fact: ResolventFactorization | None = None) -> ResolventSolve:
    """Solve (H - z) u = f to the requested relative residual.

    For eps = 0 the point must lie off the discrete spectrum (H >= 0 makes
    every z < 0 safe); a singular or inaccurate factorization raises.
    """
    if not isinstance(z, SpectralPoint):
        z = SpectralPoint(float(np.real(z)), float(np.imag(z)))
    if fact is None:
        fact = ResolventFactorization(op, z.z, tol)
    rhs = op.to_symmetrized(f).astype(np.complex128)
    nrhs = np.linalg.norm(rhs)
    if nrhs == 0.0:
        return ResolventSolve(op, z, f, GridFunction.zeros(op.domain), 0.0, 0,
                              fact.method)
    w, iters = fact.solve_w(rhs)
    res = np.linalg.norm((op.matrix @ w) - z.z * w - rhs) / nrhs
    if res > tol:
        if z.eps == 0.0:
            raise SpectrumHit(
                f"residual {res:.2e} at real z = {z.lam:g}; point is in or near "
                "the discrete spectrum")
        raise SolverBreakdown(f"residual {res:.2e} exceeds tol {tol:g}")
    return ResolventSolve(op, z, f, op.from_symmetrized(w), float(res),
                          iters, fact.method)


def energy_identity_check(solve: ResolventSolve) -> dict:
    """Defects of the exact discrete energy identities.

    For exactly symmetric H both vanish identically; residual propagation is
    the only source, so defects O(residual * |f| * |u|) certify the solve.
    """
    op, z = solve.operator, solve.z
    u, f = solve.u, solve.f
    nu2 = u.l2_norm() ** 2
    pair = f.inner(u)                     # sum w f conj(u)
    hq = op.quadratic_form(u)
    im_defect = abs(z.eps * nu2 + pair.imag)
    re_defect = abs(hq - z.lam * nu2 - pair.real)
    return {"im_defect": float(im_defect), "re_defect": float(re_defect),
            "norm_u": float(np.sqrt(nu2)), "norm_f": f.l2_norm()}


def resolvent_ratio(solve: ResolventSolve, weight_eps: float = 0.1,
                    source: int = 0) -> SweepRecord:
    """Morrey-Campanato ratio of one solve plus the weighted variants."""
    u, f, z = solve.u, solve.f, solve.z
    xs_f = xstar_norm(f)
    if xs_f == 0.0:
        raise ZeroSource("source has zero X* norm")
    rep_u = norm_report(u)
    grad = GridFunction(u.domain, gradient_x(u))
    x_grad = norm_report(grad).X
    num = x_grad ** 2 + rep_u.X1 ** 2 + (abs(z.lam) + abs(z.eps)) * rep_u.X ** 2
    dom = u.domain
    e = weight_eps
    f_half = weighted_l2(f, bracket_weight(dom, 0.5 + e))
    f_one = weighted_l2(f, bracket_weight(dom, 1.0 + e))
    u_half = weighted_l2(u, bracket_weight(dom, -(0.5 + e)))
    u_one = weighted_l2(u, bracket_weight(dom, -(1.0 + e)))
    g_half = weighted_l2(grad, bracket_weight(dom, -(0.5 + e)))
    return SweepRecord(
        lam=z.lam, eps=z.eps, ratio=float(num / xs_f ** 2),
        x_norm_u=rep_u.X, x1_norm_u=rep_u.X1, x_norm_grad=x_grad,
        xstar_f=xs_f,
        weighted_interp=float(u_one / f_one),
        weighted_grad=float(g_half / f_half),
        weighted_z=float(np.sqrt(z.abs_z) * u_half / f_half),
        residual=solve.residual, iterations=solve.iterations, source=source)


def _sweep_point(op, lam, eps, sources, weight_eps, tol):
    z = SpectralPoint(float(lam), float(eps))
    recs, errs = [], []
    try:
        fact = ResolventFactorization(op, z.z, tol)
    except Exception as exc:              # recorded, not fatal
        return recs, [(float(lam), float(eps), repr(exc))]
    for isrc, f in enumerate(sources):
        try:
            sv = solve_resolvent(op, z, f, tol, fact)
            recs.append(resolvent_ratio(sv, weight_eps, source=isrc))
        except Exception as exc:
            errs.append((float(lam), float(eps), repr(exc)))
    return recs, errs


def sweep_uniformity(op: LatticeOperator, lambda_grid, eps_grid,
                     sources: list[GridFunction], weight_eps: float = 0.1,
                     eps_floor: float | None = None,
                     tol: float = TOL_SOLVE, jobs: int = 1) -> SweepSummary:
    """Measure the resolvent-estimate ratio over a (lambda, eps) grid.

    Aggregates per z by the worst source.  The trend statistic (smallest
    over largest eps, maximized over lambda) is reported twice when an eps
    floor is supplied: over all points, and over the reliable points with
    eps >= floor, where Dirichlet truncation is known not to pollute.
    Solver failures are recorded per point, never fatal.  jobs > 1 caps a
    thread pool over z points; each task owns its factorization and results
    merge in z-grid order, so the output is independent of scheduling.
    """
    lambda_grid = np.asarray(lambda_grid, dtype=float)
    eps_grid = np.asarray(eps_grid, dtype=float)
    if np.any(eps_grid <= 0):
        raise ValueError("eps grid must be strictly positive")
    zpts = [(float(lam), float(eps)) for lam in lambda_grid
            for eps in eps_grid]
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(
                lambda p: _sweep_point(op, p[0], p[1], sources, weight_eps,
                                       tol), zpts))
    else:
        results = [_sweep_point(op, lam, eps, sources, weight_eps, tol)
                   for lam, eps in zpts]
    records, errors = [], []
    per_z = {}
    for (lam, eps), (recs, errs) in zip(zpts, results):
        records.extend(recs)
        errors.extend(errs)
        if recs or not errs:
            per_z[(lam, eps)] = max((r.ratio for r in recs), default=0.0)
    max_ratio = max(per_z.values()) if per_z else 0.0
    trend = _trend(per_z, lambda_grid, float(eps_grid.min()), float(eps_grid.max()))
    trend_rel = None
    if eps_floor is not None:
        ok = eps_grid[eps_grid >= eps_floor]
        if len(ok) >= 2:
            trend_rel = _trend(per_z, lambda_grid, float(ok.min()), float(ok.max()))
    return SweepSummary(records, lambda_grid, eps_grid, float(max_ratio),
                        float(trend), per_z, eps_floor, trend_rel, errors)


def _trend(per_z, lambda_grid, eps_small, eps_large) -> float:
    worst = 0.0
    for lam in lambda_grid:
        a = per_z.get((float(lam), eps_small))
        b = per_z.get((float(lam), eps_large))
        if a is None or b is None or b == 0.0:
            continue
        worst = max(worst, a / b)
    return worst


def calibrate_eps_floor(op_small: LatticeOperator, op_doubled: LatticeOperator,
                        lambda_probe, eps_ladder, sources_small, sources_doubled,
                        threshold: float = 0.02) -> float:
    """Smallest eps whose ratios move < threshold under extent doubling.

    Implements the truncation-vs-eps design rule: below the returned floor
    the Dirichlet wall, not the estimate, controls the measurement.
    """
    eps_ladder = sorted(np.asarray(eps_ladder, float), reverse=True)
    floor = eps_ladder[0]
    for eps in eps_ladder:
        worst = 0.0
        for lam in np.asarray(lambda_probe, float):
            z = SpectralPoint(float(lam), float(eps))
            r1 = max(resolvent_ratio(solve_resolvent(op_small, z, f)).ratio
                     for f in sources_small)
            r2 = max(resolvent_ratio(solve_resolvent(op_doubled, z, f)).ratio
                     for f in sources_doubled)
            worst = max(worst, abs(r2 - r1) / max(r1, 1e-300))
        if worst < threshold:
            floor = eps
        else:
            break
    return float(floor)
