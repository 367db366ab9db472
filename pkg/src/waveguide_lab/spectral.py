"""Cross-section modes, spectral thresholds, and eigenvalue scans."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import eigh_tridiagonal

from .errors import EigenIterationStall, UnderResolved
from .geometry import Disk, Interval, WaveguideDomain
from .operators import LatticeOperator


@dataclass(frozen=True)
class ModeBasis:
    """Dirichlet eigenpairs of -Laplace_y on a cross-section grid."""
    coords: np.ndarray          # 1-D cross-section grid (centers)
    h: float
    eigenvalues: np.ndarray     # lambda_j^2, ascending
    vectors: np.ndarray         # (ncell, J), orthonormal under quadrature
    weights: np.ndarray         # quadrature weights of the section grid
    sector: tuple = ()          # (k,) labels for disk sections, per mode
    sup_norms: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def count(self) -> int:
        return len(self.eigenvalues)

    def gram(self) -> np.ndarray:
        return (self.vectors * self.weights[:, None]).T @ self.vectors

    def residuals(self, matrix) -> np.ndarray:
        out = np.zeros(self.count)
        for j in range(self.count):
            v = self.vectors[:, j]
            out[j] = np.linalg.norm(matrix @ v - self.eigenvalues[j] * v) \
                / np.linalg.norm(v)
        return out


@dataclass
class EigenRecord:
    value: float
    residual: float
    localization_radius: float
    embedded: bool = False
    sector: tuple = ()
    stable: bool | None = None   # box-doubling verdict, None if not tested


@dataclass
class EigenReport:
    window: tuple
    records: list
    scan_params: dict
    certificate: dict | None = None

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([r.value for r in self.records])


def _interval_tridiag(a: float, ncell: int):
    h = a / ncell
    main = np.full(ncell, 2.0 / h ** 2)
    main[0] += 1.0 / h ** 2
    main[-1] += 1.0 / h ** 2
    off = np.full(ncell - 1, -1.0 / h ** 2)
    return main, off, (np.arange(ncell) + 0.5) * h, h


def disk_sector_tridiag(radius: float, ncell: int, k: int):
    """FV radial reduction of -Laplace on a disk, angular sector k."""
    h = radius / ncell
    rho = (np.arange(ncell) + 0.5) * h
    faces = np.arange(ncell + 1) * h
    main = (faces[:-1] + faces[1:]) / (h ** 2 * rho)
    main[-1] += faces[-1] / (h ** 2 * rho[-1])   # Dirichlet wall half-cell
    if k:
        main = main + k ** 2 / rho ** 2
    off = -faces[1:-1] / (h ** 2 * np.sqrt(rho[:-1] * rho[1:]))
    return main, off, rho, h


def cross_section_modes(omega, count: int, h: float | None = None,
                        ncell: int | None = None,
                        max_sector: int = 8) -> ModeBasis:
    """Dirichlet eigenpairs of the cross-section Laplacian.

    Interval sections use the 1-D wall-closed operator; disk sections merge
    the radial angular sectors k = 0..max_sector and report each mode with
    its sector label.  Modes whose transverse wavelength would fall under
    four cells are refused.
    """
    if isinstance(omega, Interval):
        if ncell is None:
            ncell = int(round(omega.length / (h or omega.length / 64)))
        if count > ncell // 4:
            raise UnderResolved(f"{count} modes need at least {4 * count} cells")
        main, off, coords, hh = _interval_tridiag(omega.length, ncell)
        vals, vecs = eigh_tridiagonal(main, off,
                                      select="i", select_range=(0, count - 1))
        w = np.full(ncell, hh)
        vecs = vecs / np.sqrt(hh)
        return ModeBasis(coords, hh, vals, vecs, w, ("y",) * count,
                         np.max(np.abs(vecs), axis=0))
    if isinstance(omega, Disk):
        if ncell is None:
            ncell = int(round(omega.radius / (h or omega.radius / 64)))
        per = min(count, max(2, ncell // 4))
        cand = []
        for k in range(max_sector + 1):
            main, off, rho, hh = disk_sector_tridiag(omega.radius, ncell, k)
            nv = min(per, ncell - 1)
            vals, vecs = eigh_tridiagonal(main, off, select="i",
                                          select_range=(0, nv - 1))
            for j in range(nv):
                cand.append((float(vals[j]), k, vecs[:, j]))
        cand.sort(key=lambda t: t[0])
        cand = cand[:count]
        if len(cand) < count:
            raise UnderResolved("disk grid resolves fewer modes than requested")
        w = 2 * np.pi * rho * hh
        vecs = np.stack([c[2] for c in cand], axis=1)
        # sector vectors are plain-orthonormal; renormalize to quadrature
        vecs = vecs / np.sqrt(w)[:, None] * np.sqrt(hh) / np.sqrt(hh)
        vecs = vecs / np.sqrt(np.sum(w[:, None] * vecs ** 2, axis=0))
        vals = np.array([c[0] for c in cand])
        return ModeBasis(rho, hh, vals, vecs, w,
                         tuple(c[1] for c in cand),
                         np.max(np.abs(vecs), axis=0))
    from .geometry import RasterMask
    if isinstance(omega, RasterMask):
        return _raster_modes(omega, count)
    raise NotImplementedError("mode solver supports interval, disk, and raster sections")


def _raster_modes(omega, count: int) -> ModeBasis:
    """2-D FD Dirichlet eigenpairs on a rasterized cross-section."""
    mask = np.asarray(omega.mask, dtype=bool)
    hh = omega.h
    if count > mask.sum() // 8:
        raise UnderResolved("raster mask resolves fewer modes than requested")
    idx = -np.ones(mask.shape, int)
    cells = np.argwhere(mask)
    idx[tuple(cells.T)] = np.arange(len(cells))
    n = len(cells)
    diag = np.zeros(n)
    rows, cols, vals = [], [], []
    for d in (0, 1):
        for direction in (1, -1):
            nbr = cells.copy()
            nbr[:, d] += direction
            ok = (nbr[:, d] >= 0) & (nbr[:, d] < mask.shape[d])
            inside = np.zeros(n, bool)
            inside[ok] = mask[tuple(nbr[ok].T)]
            diag[inside] += 1.0 / hh ** 2
            diag[~inside] += 2.0 / hh ** 2      # Dirichlet wall half cell
            rows.append(np.where(inside)[0])
            cols.append(idx[tuple(nbr[inside].T)])
            vals.append(np.full(inside.sum(), -1.0 / hh ** 2))
    T = sp.coo_matrix((np.concatenate(vals),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr() + sp.diags(diag)
    vals_, vecs = spla.eigsh(T.tocsc(), k=count, sigma=0.0, which="LM",
                             v0=np.random.default_rng(0).standard_normal(n))
    order = np.argsort(vals_)
    w = np.full(n, hh ** 2)
    vecs = vecs[:, order] / hh
    return ModeBasis(cells.astype(float) * hh, hh, vals_[order], vecs, w,
                     ("raster",) * count, np.max(np.abs(vecs), axis=0))


def essential_threshold(basis: ModeBasis) -> float:
    """Bottom of the essential spectrum of the flat-tail operator."""
    if basis.count == 0:
        raise ValueError("empty mode basis")
    return float(basis.eigenvalues[0])


def scan_eigenvalues(op: LatticeOperator, window: tuple,
                     shift_count: int = 20, krylov_dim: int = 30,
                     tol_eig: float = 1e-8, merge_rtol: float = 1e-6,
                     doubled: LatticeOperator | None = None,
                     stability_rtol: float = 1e-3) -> EigenReport:
    """Shift-invert scan of a window, with localization and box filtering.

    A ladder of shifts covers [a, b]; converged Ritz pairs are kept when
    their residual meets tol_eig, merged by relative proximity, and tagged
    with the 90 percent x-mass radius.  When a doubled-extent operator is
    supplied, eigenvalues that fail to reappear within stability_rtol are
    marked unstable and dropped as truncation artifacts.
    """
    a, b = float(window[0]), float(window[1])
    if not (np.isfinite(a) and np.isfinite(b) and b > a):
        raise ValueError("window must be a finite nonempty interval")
    if a < 0:
        raise ValueError("scan window starts below 0")
    found = _ladder_scan(op, a, b, shift_count, krylov_dim, tol_eig, merge_rtol)
    extent = op.domain.spec.extent_x
    records = []
    for val, res, vec in found:
        loc = _localization_radius(op.domain, vec)
        records.append(EigenRecord(val, res, loc, sector=_sector_of(op)))
    # localization cap: anything spread past half the box is a box mode
    records = [r for r in records if r.localization_radius <= extent / 2]
    if doubled is not None:
        ref = _ladder_scan(doubled, a, b, shift_count, krylov_dim, tol_eig,
                           merge_rtol)
        ref_vals = np.array([v for v, _, _ in ref])
        kept = []
        for r in records:
            ok = len(ref_vals) > 0 and np.min(
                np.abs(ref_vals - r.value)) <= stability_rtol * max(abs(r.value), 1.0)
            r.stable = bool(ok)
            if ok:
                kept.append(r)
        records = kept
    records.sort(key=lambda r: r.value)
    params = {"window": [a, b], "shift_count": shift_count,
              "krylov_dim": krylov_dim, "tol_eig": tol_eig,
              "doubling_filter": doubled is not None,
              "extent_x": extent}
    return EigenReport((a, b), records, params)


def _sector_of(op) -> tuple:
    ell = getattr(op, "ell_x", None)
    k = getattr(op, "k_y", None)
    return (ell, k) if ell is not None else ()


def _ladder_scan(op, a, b, shift_count, krylov_dim, tol_eig, merge_rtol):
    T = op.matrix.tocsc()
    n = T.shape[0]
    shifts = a + (np.arange(shift_count) + 0.5) * (b - a) / shift_count
    out = []
    nev = max(4, min(10, n - 2))
    v0 = np.random.default_rng(0).standard_normal(n)   # reproducible start
    for sig in shifts:
        try:
            vals, vecs = spla.eigsh(T, k=nev, sigma=float(sig), which="LM",
                                    ncv=min(n - 1, max(krylov_dim, 2 * nev + 1)),
                                    maxiter=3000, v0=v0)
        except spla.ArpackNoConvergence as exc:
            if len(getattr(exc, "eigenvalues", [])) == 0:
                raise EigenIterationStall(f"no convergence at shift {sig:g}")
            vals, vecs = exc.eigenvalues, exc.eigenvectors
        for j, val in enumerate(vals):
            if not (a <= val <= b):
                continue
            v = vecs[:, j]
            res = float(np.linalg.norm(T @ v - val * v) / np.linalg.norm(v))
            if res <= tol_eig:
                out.append((float(val), res, v))
    out.sort(key=lambda t: t[0])
    merged = []
    for val, res, v in out:
        if merged and abs(val - merged[-1][0]) <= merge_rtol * max(abs(val), 1.0):
            if res < merged[-1][1]:
                merged[-1] = (val, res, v)
        else:
            merged.append((val, res, v))
    return merged


def _localization_radius(domain: WaveguideDomain, vec: np.ndarray,
                         level: float = 0.9) -> float:
    mass = np.abs(vec) ** 2
    radii, inv = domain.radial_order()
    byr = np.zeros(len(radii))
    np.add.at(byr, inv, mass)
    c = np.cumsum(byr) / mass.sum()
    return float(radii[int(np.searchsorted(c, level))])


def classify_embedded(report: EigenReport, global_threshold: float,
                      tol: float = 1e-6, repulsive: bool = False) -> EigenReport:
    """Set embedded flags; emit an absence certificate on empty repulsive scans."""
    for r in report.records:
        r.embedded = bool(r.value > global_threshold + tol)
    if repulsive and not report.records:
        report.certificate = {
            "kind": "absence_of_eigenvalues",
            "window": list(report.window),
            "global_threshold": float(global_threshold),
            "scan_params": dict(report.scan_params),
        }
    return report
