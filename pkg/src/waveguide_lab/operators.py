"""Sparse symmetric discretizations of H = -Laplace + V with Dirichlet walls.

Assembly is a conservative finite-volume scheme on the active mask.  Each
direction contributes flux differences with its own 1-D metric factor
(r^{n-1} for the radial x axis, rho for the radial y axis, 1 for cartesian
axes); the transverse factors cancel.  Matrices are stored in symmetrized
coordinates w = sqrt(quadrature weight) * u, so they are exactly symmetric
and all energy identities are algebraic.  Dirichlet walls enter as
half-cell fluxes (ghost value -u), which keeps second-order consistency for
data that vanishes on the wall; the r = 0 faces of radial axes carry zero
metric and need no special casing.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import NegativePotential, NotRadial
from .fields import GridFunction
from .geometry import GridMode, WaveguideDomain


@dataclass(frozen=True)
class RadialPotential:
    """Analytic x-radial descriptor V(r) with optional derivative."""
    v: Callable[[np.ndarray], np.ndarray]
    dvdr: Callable[[np.ndarray], np.ndarray] | None = None
    label: str = "radial potential"


class PotentialField:
    """Nonnegative potential sampled on the active cells."""

    def __init__(self, domain: WaveguideDomain, values: np.ndarray,
                 descriptor: RadialPotential | None = None):
        values = np.asarray(values, dtype=float)
        if values.shape != (domain.n_cells,):
            raise ValueError("potential must have one value per active cell")
        self.domain = domain
        self.values = values
        self.descriptor = descriptor

    @classmethod
    def zero(cls, domain: WaveguideDomain) -> "PotentialField":
        return cls(domain, np.zeros(domain.n_cells))

    @classmethod
    def from_radial(cls, domain: WaveguideDomain,
                    desc: RadialPotential) -> "PotentialField":
        return cls(domain, np.asarray(desc.v(domain.r_cells), float), desc)


@dataclass(frozen=True)
class PotentialReport:
    nonneg: bool
    radial_repulsive: bool
    min_value: float
    min_slack: float


@dataclass(frozen=True)
class Diagnostics:
    symmetric: bool
    max_asymmetry: float
    min_ritz: float
    stencil_local: bool
    notes: tuple


class LatticeOperator:
    """Sparse symmetric operator in symmetrized coordinates.

    matrix acts on w = S u with S = sqrt(quadrature weights); apply() maps
    physical fields.  Spectra and quadratic forms agree with the physical
    weighted inner product by similarity.
    """

    def __init__(self, domain: WaveguideDomain, matrix: sp.csr_matrix,
                 metadata: dict):
        self.domain = domain
        self.matrix = matrix
        self.scaling = np.sqrt(domain.weights)
        self.metadata = metadata

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def to_symmetrized(self, f: GridFunction) -> np.ndarray:
        return self.scaling * f.values

    def from_symmetrized(self, w: np.ndarray) -> GridFunction:
        return GridFunction(self.domain, w / self.scaling)

    def apply(self, f: GridFunction) -> GridFunction:
        return self.from_symmetrized(self.matrix @ self.to_symmetrized(f))

    def quadratic_form(self, f: GridFunction) -> float:
        w = self.to_symmetrized(f)
        return float(np.real(np.vdot(w, self.matrix @ w)))

    def export_coo_text(self, path) -> None:
        """Row, col, value per line with 17 significant digits."""
        coo = self.matrix.tocoo()
        with open(path, "w") as fh:
            for i, j, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{i} {j} {v:.17g}\n")


class DirichletOperator(LatticeOperator):
    pass


class SectorOperator(LatticeOperator):
    def __init__(self, domain, matrix, metadata, ell_x: int, k_y: int):
        super().__init__(domain, matrix, metadata)
        self.ell_x = ell_x
        self.k_y = k_y


def _fv_matrix(domain: WaveguideDomain) -> sp.csr_matrix:
    axes = domain.axes
    act = domain.active
    idx = domain.cell_index
    n = domain.n_cells
    diag = np.zeros(n)
    rows, cols, vals = [], [], []
    for d, ax in enumerate(axes):
        h2 = ax.h ** 2
        mu_c = ax.mu_cell
        for direction in (+1, -1):
            nbr_act = np.roll(act, -direction, axis=d)
            sl = [slice(None)] * act.ndim
            sl[d] = -1 if direction == 1 else 0
            nbr_act[tuple(sl)] = False
            # face metric per cell along axis d
            ci = domain.cells[:, d]
            face = ax.mu_face[ci + 1] if direction == 1 else ax.mu_face[ci]
            here = domain.cells
            nbr_ok = nbr_act[tuple(here.T)]
            c = face / (h2 * mu_c[ci])
            # interior faces: diag + symmetric off-diagonal
            w_int = np.where(nbr_ok)[0]
            if len(w_int):
                nbr_cells = here[w_int].copy()
                nbr_cells[:, d] += direction
                nbr_lin = idx[tuple(nbr_cells.T)]
                mu_n = mu_c[nbr_cells[:, d]]
                diag[w_int] += c[w_int]
                rows.append(w_int)
                cols.append(nbr_lin)
                vals.append(-face[w_int] / (h2 * np.sqrt(mu_c[ci[w_int]] * mu_n)))
            # wall faces: Dirichlet half-cell flux; zero-metric faces vanish
            w_wall = np.where(~nbr_ok)[0]
            if len(w_wall):
                diag[w_wall] += 2.0 * c[w_wall]
    rows = np.concatenate(rows) if rows else np.zeros(0, int)
    cols = np.concatenate(cols) if cols else np.zeros(0, int)
    vals = np.concatenate(vals) if vals else np.zeros(0)
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    mat = mat + sp.diags(diag)
    return mat.tocsr()


_LAP_CACHE: dict = {}


def _laplacian_cached(domain: WaveguideDomain) -> sp.csr_matrix:
    key = id(domain)
    if key not in _LAP_CACHE:
        _LAP_CACHE.clear()          # hold at most one, domains are large
        _LAP_CACHE[key] = _fv_matrix(domain)
    return _LAP_CACHE[key]


def assemble_hamiltonian(domain: WaveguideDomain,
                         V: PotentialField | None = None) -> DirichletOperator:
    """H = -Laplace + V on the active cells, Dirichlet on all walls."""
    if V is None:
        V = PotentialField.zero(domain)
    if np.min(V.values) < 0:
        raise NegativePotential(f"min V = {np.min(V.values):g}")
    mat = _laplacian_cached(domain)
    if V.values.any():
        mat = (mat + sp.diags(V.values)).tocsr()
    meta = {"kind": "dirichlet", "mode": domain.spec.mode.value,
            "profile": type(domain.profile).__name__,
            "potential": V.descriptor.label if V.descriptor else
            ("zero" if not V.values.any() else "sampled")}
    return DirichletOperator(domain, mat, meta)


def assemble_sector(domain: WaveguideDomain, ell_x: int = 0, k_y: int = 0,
                    V: PotentialField | None = None) -> SectorOperator:
    """Angular-sector reduction with centrifugal diagonals.

    Adds l(l + n - 2)/r^2 for the x sector and k^2/rho^2 for the y sector of
    a disk cross-section; requires the corresponding radial axes.
    """
    spec = domain.spec
    if spec.mode == GridMode.FULL_TENSOR:
        raise NotRadial("sector reduction needs a radial grid mode")
    if k_y and spec.mode != GridMode.RADIAL_X_RADIAL_Y:
        raise NotRadial("y sector requires radial-y mode (m = 2 disk)")
    if ell_x < 0 or k_y < 0:
        raise ValueError("sector indices must be nonnegative")
    if V is None:
        V = PotentialField.zero(domain)
    if np.min(V.values) < 0:
        raise NegativePotential(f"min V = {np.min(V.values):g}")
    extra = V.values.copy()
    if ell_x:
        extra = extra + ell_x * (ell_x + spec.n - 2) / domain.r_cells ** 2
    if k_y:
        rho = domain.axes[1].coords[domain.cells[:, 1]]
        extra = extra + k_y ** 2 / rho ** 2
    mat = _laplacian_cached(domain)
    if extra.any():
        mat = (mat + sp.diags(extra)).tocsr()
    meta = {"kind": "sector", "ell_x": ell_x, "k_y": k_y,
            "mode": spec.mode.value, "profile": type(domain.profile).__name__}
    return SectorOperator(domain, mat, meta, ell_x, k_y)


def audit_potential(V: PotentialField, domain: WaveguideDomain | None = None
                    ) -> PotentialReport:
    """Check V >= 0 and the radial hypothesis -x . grad_x(|x| V) >= 0.

    Uses the analytic descriptor when available; otherwise centered
    differences of r V along the x radius (one-sided at the mask edge), so
    derivative noise cannot flip a clean sign.
    """
    dom = domain or V.domain
    min_v = float(np.min(V.values)) if len(V.values) else 0.0
    r = dom.r_cells
    if V.descriptor is not None:
        rr = np.unique(r)
        v = np.asarray(V.descriptor.v(rr), float)
        if V.descriptor.dvdr is not None:
            dv = np.asarray(V.descriptor.dvdr(rr), float)
        else:
            d = 1e-6 * np.maximum(rr, 1.0)
            dv = (np.asarray(V.descriptor.v(rr + d), float)
                  - np.asarray(V.descriptor.v(np.maximum(rr - d, rr * 1e-12)), float)) / (2 * d)
        slack = -rr * (v + rr * dv)
        min_slack = float(np.min(slack))
    else:
        min_slack = _grid_radial_slack(V, dom)
    tol = 1e-9 * max(1.0, float(np.max(np.abs(V.values))) if len(V.values) else 1.0)
    return PotentialReport(min_v >= -tol, min_slack >= -tol, min_v, min_slack)


def _grid_radial_slack(V: PotentialField, dom: WaveguideDomain) -> float:
    if dom.spec.mode == GridMode.FULL_TENSOR:
        g = dom.grid_view(dom.r_cells * V.values, fill=np.nan)
        slack_min = np.inf
        grad = np.zeros(dom.shape)
        for d in dom.x_axes:
            h = dom.axes[d].h
            up = np.roll(g, -1, axis=d)
            dn = np.roll(g, 1, axis=d)
            gd = np.where(np.isnan(up) | np.isnan(dn), 0.0, (up - dn) / (2 * h))
            gd = np.where(np.isnan(up) & ~np.isnan(dn), (g - dn) / h, gd)
            gd = np.where(np.isnan(dn) & ~np.isnan(up), (up - g) / h, gd)
            coords = dom.axes[d].coords
            shape = [1] * g.ndim
            shape[d] = len(coords)
            grad += coords.reshape(shape) * np.nan_to_num(gd)
        slack = -dom.gather(grad)
        slack_min = float(np.min(slack))
        return slack_min
    # radial modes: d/dr of (r V) along axis 0, per transverse line
    g = dom.grid_view(dom.r_cells * V.values, fill=np.nan)
    h = dom.axes[0].h
    up = np.roll(g, -1, axis=0)
    dn = np.roll(g, 1, axis=0)
    dd = np.where(np.isnan(up) | np.isnan(dn), np.nan, (up - dn) / (2 * h))
    dd = np.where(np.isnan(dd) & ~np.isnan(up), (up - g) / h, dd)
    dd = np.where(np.isnan(dd) & ~np.isnan(dn), (g - dn) / h, dd)
    slack = -dom.r_cells * dom.gather(np.nan_to_num(dd))
    return float(np.min(slack))


def operator_selfcheck(op: LatticeOperator, probe_dim: int = 32,
                       seed: int = 0) -> Diagnostics:
    """Symmetry, nonnegativity probe, and stencil locality; never raises."""
    notes = []
    mat = op.matrix
    asym = sp.csr_matrix(abs(mat - mat.T))
    max_asym = float(asym.max()) if asym.nnz else 0.0
    symmetric = max_asym == 0.0
    if not symmetric:
        notes.append(f"asymmetry {max_asym:g}")

    rng = np.random.default_rng(seed)
    v = rng.standard_normal(op.n)
    v /= np.linalg.norm(v)
    basis = [v]
    alphas, betas = [], []
    vprev = np.zeros_like(v)
    beta = 0.0
    for _ in range(min(probe_dim, op.n)):
        w = mat @ basis[-1] - beta * vprev
        alpha = float(basis[-1] @ w)
        w -= alpha * basis[-1]
        for b in basis:        # full reorthogonalization, probe is small
            w -= (b @ w) * b
        beta = float(np.linalg.norm(w))
        alphas.append(alpha)
        betas.append(beta)
        if beta < 1e-12:
            break
        vprev = basis[-1]
        basis.append(w / beta)
    Tk = np.diag(alphas) + np.diag(betas[:len(alphas) - 1], 1) \
        + np.diag(betas[:len(alphas) - 1], -1)
    ritz = np.linalg.eigvalsh(Tk)
    min_ritz = float(ritz[0])
    if min_ritz < -1e-10:
        notes.append(f"negative Ritz value {min_ritz:g}")

    local = _stencil_local(op)
    if not local:
        notes.append("stencil couples non-neighbor cells")
    return Diagnostics(symmetric, max_asym, min_ritz, local, tuple(notes))


def _stencil_local(op: LatticeOperator) -> bool:
    coo = op.matrix.tocoo()
    off = coo.row != coo.col
    if not off.any():
        return True
    a = op.domain.cells[coo.row[off]]
    b = op.domain.cells[coo.col[off]]
    d = np.abs(a - b)
    return bool(np.all(d.sum(axis=1) == 1))
