"""Schrodinger and wave flows, fractional x-derivatives, and trace measures.

Sign convention u(t) = exp(itH) f throughout, so the smoothing and
Strichartz statements transfer verbatim.  Schrodinger stepping is
Crank-Nicolson on the symmetrized matrix (exactly unitary up to the linear
solve); the wave half-flow exp(it sqrt(H + mu^2)) uses a full spectral
decomposition on small instances and leapfrog with a Lanczos square root
start on larger ones.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import BoxTooSmall, EigenbasisIncomplete, UnstableTimestep
from .fields import GridFunction, bracket_weight, gradient_x
from .geometry import GridMode, audit_flat_tail
from .operators import LatticeOperator, PotentialField
from .spectral import ModeBasis

SPECTRAL_LIMIT = 20_000


@dataclass
class Trajectory:
    """Snapshots of one flow plus its conservation ledger."""
    domain: object
    times: np.ndarray
    snapshots: np.ndarray        # (nsnap, ncell) complex, physical field
    scheme: str
    mass: np.ndarray             # per recorded step (Schrodinger)
    energy: np.ndarray           # per recorded step (wave)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    def snapshot(self, k: int) -> GridFunction:
        return GridFunction(self.domain, self.snapshots[k])

    def mass_drift(self) -> float:
        if len(self.mass) < 2 or self.mass[0] == 0:
            return 0.0
        return float(np.max(np.abs(self.mass - self.mass[0])) / self.mass[0])

    def energy_drift(self) -> float:
        if len(self.energy) < 2 or self.energy[0] == 0:
            return 0.0
        return float(np.max(np.abs(self.energy - self.energy[0])) / self.energy[0])


@dataclass
class EvolutionTrace:
    """Time-accumulated smoothing and Strichartz functionals."""
    times: np.ndarray
    S1: np.ndarray
    S2: np.ndarray
    S3: np.ndarray
    St: np.ndarray
    eps: float
    norm_f: float
    norm_half_f: float

    def at(self, T: float, which: str = "S1") -> float:
        arr = getattr(self, which)
        k = int(np.argmin(np.abs(self.times - T)))
        return float(arr[k])


def _cn_operators(op: LatticeOperator, dt: float):
    n = op.n
    ident = sp.identity(n, format="csc")
    A = (ident - 0.5j * dt * op.matrix).tocsc()
    B = (ident + 0.5j * dt * op.matrix).tocsr()
    return spla.splu(A), B


def evolve_schrodinger(op: LatticeOperator, f: GridFunction, T: float,
                       dt: float, store_every: int = 1) -> Trajectory:
    """Crank-Nicolson evolution of exp(itH) f with per-step mass ledger."""
    nsteps = int(round(T / dt))
    lu, B = _cn_operators(op, dt)
    w = op.to_symmetrized(f).astype(np.complex128)
    times = [0.0]
    snaps = [w / op.scaling]
    mass = [float(np.vdot(w, w).real)]
    for k in range(1, nsteps + 1):
        w = lu.solve(B @ w)
        mass.append(float(np.vdot(w, w).real))
        if k % store_every == 0 or k == nsteps:
            times.append(k * dt)
            snaps.append(w / op.scaling)
    return Trajectory(op.domain, np.array(times), np.array(snaps),
                      "crank_nicolson", np.array(mass), np.zeros(0))


def _lanczos_function(op: LatticeOperator, v: np.ndarray, fn, dim: int = 60):
    """fn(T) v by a reorthogonalized Lanczos projection."""
    nv = np.linalg.norm(v)
    if nv == 0:
        return v.copy()
    dim = min(dim, op.n)
    V = np.zeros((op.n, dim), dtype=np.complex128)
    V[:, 0] = v / nv
    alphas, betas = [], []
    for j in range(dim):
        w = op.matrix @ V[:, j]
        if j > 0:
            w -= betas[-1] * V[:, j - 1]
        a = np.real(np.vdot(V[:, j], w))
        w -= a * V[:, j]
        w -= V[:, : j + 1] @ (V[:, : j + 1].conj().T @ w)
        b = np.linalg.norm(w)
        alphas.append(a)
        betas.append(b)
        if b < 1e-13 or j == dim - 1:
            k = j + 1
            break
        V[:, j + 1] = w / b
    Tk = np.diag(alphas[:k]) + np.diag(betas[:k - 1], 1) + np.diag(betas[:k - 1], -1)
    evals, evecs = np.linalg.eigh(Tk)
    e1 = np.zeros(k)
    e1[0] = 1.0
    coef = evecs @ (fn(evals) * (evecs.T @ e1))
    return nv * (V[:, :k] @ coef)


def evolve_wave(op: LatticeOperator, mu: float, f: GridFunction, T: float,
                dt: float, store_every: int = 1,
                method: str = "auto", basis_tol: float = 1e-8) -> Trajectory:
    """Half-flow exp(it sqrt(H + mu^2)) f.

    Spectral route (small instances): full dense eigenbasis, exact in time.
    Leapfrog route: second-order central stepping of u_tt + (H + mu^2) u = 0
    with initial velocity i sqrt(H + mu^2) f, which reproduces the half-flow
    from the (u, u_t) pair.
    """
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    if method == "auto":
        method = "spectral" if op.n <= min(SPECTRAL_LIMIT, 4000) else "leapfrog"
    nsteps = int(round(T / dt))
    w0 = op.to_symmetrized(f).astype(np.complex128)
    if method == "spectral":
        if op.n > SPECTRAL_LIMIT:
            raise EigenbasisIncomplete("instance too large for the spectral route")
        dense = op.matrix.toarray()
        evals, vecs = np.linalg.eigh(dense)
        c = vecs.conj().T @ w0
        tail = 1.0 - np.sum(np.abs(c) ** 2) / max(np.vdot(w0, w0).real, 1e-300)
        if tail > basis_tol:
            raise EigenbasisIncomplete(f"basis tail mass {tail:.2e}")
        om = np.sqrt(np.maximum(evals, 0.0) + mu ** 2)
        times, snaps, energy = [], [], []
        for k in range(0, nsteps + 1, store_every):
            t = k * dt
            wk = vecs @ (np.exp(1j * om * t) * c)
            times.append(t)
            snaps.append(wk / op.scaling)
            energy.append(float(np.sum((om * np.abs(c)) ** 2)))
        if times[-1] < nsteps * dt:
            t = nsteps * dt
            wk = vecs @ (np.exp(1j * om * t) * c)
            times.append(t)
            snaps.append(wk / op.scaling)
            energy.append(float(np.sum((om * np.abs(c)) ** 2)))
        return Trajectory(op.domain, np.array(times), np.array(snaps),
                          "wave_spectral", np.zeros(0), np.array(energy))
    # leapfrog
    lam_max = float(spla.eigsh(
        op.matrix, k=1, which="LA", return_eigenvectors=False, maxiter=5000,
        tol=1e-6, v0=np.random.default_rng(0).standard_normal(op.n))[0]) + mu ** 2
    if dt * np.sqrt(lam_max) >= 2.0:
        raise UnstableTimestep(
            f"dt = {dt:g} violates dt * sqrt(lambda_max) < 2 "
            f"(lambda_max ~ {lam_max:g})")
    A = (op.matrix + mu ** 2 * sp.identity(op.n, format="csr")).tocsr()
    v0 = 1j * _lanczos_function(op, w0, lambda e: np.sqrt(np.maximum(e, 0.0) + mu ** 2))
    u_prev = w0
    u_cur = w0 + dt * v0 - 0.5 * dt ** 2 * (A @ w0)    # u(dt), third order
    times = [0.0]
    snaps = [w0 / op.scaling]
    e0 = float(np.vdot(v0, v0).real + np.real(np.vdot(w0, A @ w0)))
    energy = [e0]
    for k in range(1, nsteps + 1):
        # loop invariant: u_cur = u(k dt), u_prev = u((k-1) dt)
        if k % store_every == 0 or k == nsteps:
            times.append(k * dt)
            snaps.append(u_cur / op.scaling)
            ut = (u_cur - u_prev) / dt     # staggered by dt/2, drift only
            energy.append(float(np.vdot(ut, ut).real
                                + np.real(np.vdot(u_cur, A @ u_prev))))
        if k < nsteps:
            u_next = 2 * u_cur - u_prev - dt ** 2 * (A @ u_cur)
            u_prev, u_cur = u_cur, u_next
    return Trajectory(op.domain, np.array(times), np.array(snaps),
                      "wave_leapfrog", np.zeros(0), np.array(energy))


# ---------------------------------------------------------------------------
# fractional x-derivative by zero extension to a doubled periodic box
# ---------------------------------------------------------------------------

def half_derivative_x(f: GridFunction, power: float = 0.5,
                      powers: tuple | None = None) -> GridFunction:
    """|D_x|^power f via extension by zero and a Fourier multiplier.

    The field is extended by zero to a periodic x-box of twice the domain
    extent and |xi|^power is applied there.  On x-radial grids (n = 3) the
    exact unitary reduction u -> r u maps the radial Laplacian to the 1-D
    operator on odd functions, so the multiplier acts on the odd extension
    of r f; full tensor grids use the n-dimensional transform.  `powers`
    applies several multipliers on the box before restricting, which is how
    the composition identity |D_x|^{1/2} |D_x|^{1/2} = |D_x| is exact.
    """
    dom = f.domain
    if powers is None:
        powers = (power,)
    if dom.spec.mode == GridMode.FULL_TENSOR:
        return _half_derivative_full(f, powers)
    if dom.spec.n != 3:
        raise NotImplementedError("radial |D_x|^s requires n = 3")
    ax = dom.axes[0]
    ncell = ax.size
    h = ax.h
    npad = 2 * ncell                          # doubled extent
    grid = dom.grid_view(f.values.astype(complex))
    w = grid * ax.coords.reshape((-1,) + (1,) * (grid.ndim - 1))
    # odd periodic extension on 4*ncell nodes centered at 0
    m = 2 * npad
    buf = np.zeros((m,) + grid.shape[1:], dtype=complex)
    buf[npad: npad + ncell] = w
    buf[npad - ncell: npad] = -w[::-1]
    xi = 2 * np.pi * np.fft.fftfreq(m, d=h)
    spec_ax = np.fft.fft(buf, axis=0)
    for p in powers:
        spec_ax = spec_ax * (np.abs(xi) ** p).reshape((-1,) + (1,) * (grid.ndim - 1))
    out = np.fft.ifft(spec_ax, axis=0)[npad: npad + ncell]
    out = out / ax.coords.reshape((-1,) + (1,) * (grid.ndim - 1))
    return GridFunction(dom, dom.gather(out))


def _half_derivative_full(f: GridFunction, powers: tuple) -> GridFunction:
    dom = f.domain
    grid = dom.grid_view(f.values.astype(complex))
    xdims = dom.x_axes
    pads = []
    buf = grid
    for d in xdims:
        ncell = dom.axes[d].size
        pad = [(0, 0)] * buf.ndim
        pad[d] = (ncell // 2, ncell - ncell // 2)
        buf = np.pad(buf, pad)
        pads.append((ncell // 2, ncell))
    spec = np.fft.fftn(buf, axes=xdims)
    mult2 = np.zeros(buf.shape)
    for d in xdims:
        xi = 2 * np.pi * np.fft.fftfreq(buf.shape[d], d=dom.axes[d].h)
        shape = [1] * buf.ndim
        shape[d] = len(xi)
        mult2 = mult2 + (xi ** 2).reshape(shape)
    for p in powers:
        spec = spec * np.sqrt(mult2) ** p
    out = np.fft.ifftn(spec, axes=xdims)
    for d, (lo, ncell) in zip(xdims, pads):
        out = np.take(out, np.arange(lo, lo + ncell), axis=d)
    return GridFunction(dom, dom.gather(out))


# ---------------------------------------------------------------------------
# trace accumulators
# ---------------------------------------------------------------------------

def _trapezoid_accumulate(times: np.ndarray, g: np.ndarray) -> np.ndarray:
    out = np.zeros_like(g)
    if len(times) > 1:
        dts = np.diff(times)
        out[1:] = np.cumsum(0.5 * dts * (g[1:] + g[:-1]))
    return out


def smoothing_trace(traj: Trajectory, eps: float = 0.1) -> EvolutionTrace:
    """Accumulated smoothing functionals S1, S2, S3 of a trajectory.

    S1 weights by <x>^{-1-eps}, S2 applies |D_x|^{1/2} under <x>^{-1/2-eps},
    S3 uses the measured x-gradient; all use the trapezoid rule on the
    stored snapshot times, which makes the accumulators exactly additive
    over interval splits.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    dom = traj.domain
    w1 = bracket_weight(dom, -(1.0 + eps))
    wh = bracket_weight(dom, -(0.5 + eps))
    qw = dom.weights
    n = len(traj.times)
    g1, g2, g3 = np.zeros(n), np.zeros(n), np.zeros(n)
    for k in range(n):
        u = traj.snapshot(k)
        g1[k] = float(np.sum(qw * np.abs(w1 * u.values) ** 2))
        half = half_derivative_x(u)
        g2[k] = float(np.sum(qw * np.abs(wh * half.values) ** 2))
        g3[k] = float(np.sum(qw * (wh * gradient_x(u)) ** 2))
    f0 = traj.snapshot(0)
    return EvolutionTrace(traj.times.copy(),
                          _trapezoid_accumulate(traj.times, g1),
                          _trapezoid_accumulate(traj.times, g2),
                          _trapezoid_accumulate(traj.times, g3),
                          np.zeros(n), eps, f0.l2_norm(),
                          half_derivative_x(f0).l2_norm())


def strichartz_norm(traj: Trajectory, V: PotentialField | None = None,
                    eps: float = 0.1) -> dict:
    """Endpoint mixed-norm accumulator and its theorem-normalized ratio.

    Requires a flat-tail domain; the inner x-norm is L^{2n/(n-2)} by p-norm
    quadrature, then L^2 in y and accumulated in t by the trapezoid rule.
    """
    dom = traj.domain
    report = audit_flat_tail(dom)          # raises NoFlatTail when absent
    n = len(traj.times)
    g = np.zeros(n)
    for k in range(n):
        g[k] = _mixed_sq(traj.snapshot(k))
    St = np.sqrt(_trapezoid_accumulate(traj.times, g))
    f0 = traj.snapshot(0)
    denom_f = f0.l2_norm() + half_derivative_x(f0).l2_norm()
    vfac = 1.0
    if V is not None and np.any(V.values):
        vfac = 1.0 + _potential_mixed_norm(V, eps)
    ratio = St / max(vfac * denom_f, 1e-300)
    return {"times": traj.times.copy(), "St": St, "ratio": ratio,
            "v_factor": float(vfac), "flat_tail_M": report.M}


def _mixed_sq(u: GridFunction) -> float:
    """|u|^2 in L^2_y L^{2n/(n-2)}_x on a reduced grid."""
    dom = u.domain
    nsp = dom.spec.n
    p = 2.0 * nsp / (nsp - 2.0)
    grid = np.abs(dom.grid_view(u.values.astype(complex), fill=0.0)) ** p
    ax = dom.axes[0]
    from .geometry import sphere_area
    xw = sphere_area(nsp) * ax.mu_cell * ax.h
    lp2 = np.tensordot(xw, grid, axes=([0], [0])) ** (2.0 / p)
    out = lp2
    for d in range(1, len(dom.axes)):
        ywt = dom.axes[d].mu_cell * dom.axes[d].h
        if dom.axes[d].radial:
            ywt = ywt * 2 * np.pi
        out = np.tensordot(out, ywt, axes=([0], [0]))
    return float(out)


def _potential_mixed_norm(V: PotentialField, eps: float) -> float:
    """|<x>^{1+eps} V| in L^2_y L^n_x on a reduced grid."""
    dom = V.domain
    nsp = dom.spec.n
    from .geometry import sphere_area
    vals = bracket_weight(dom, 1.0 + eps) * np.abs(V.values)
    grid = dom.grid_view(vals, fill=0.0) ** nsp
    ax = dom.axes[0]
    xw = sphere_area(nsp) * ax.mu_cell * ax.h
    ln2 = np.tensordot(xw, grid, axes=([0], [0])) ** (2.0 / nsp)
    out = ln2
    for d in range(1, len(dom.axes)):
        ywt = dom.axes[d].mu_cell * dom.axes[d].h
        if dom.axes[d].radial:
            ywt = ywt * 2 * np.pi
        out = np.tensordot(out, ywt, axes=([0], [0]))
    return float(np.sqrt(out))


# ---------------------------------------------------------------------------
# exact flat-waveguide reference propagator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecayFit:
    slope: float
    intercept: float
    residual: float
    t_range: tuple


def flat_reference_propagator(modes: ModeBasis, f: GridFunction, times,
                              box_pad: float = 4.0, tail_tol: float = 1e-8,
                              guard_tol: float = 1e-6,
                              fit_range: tuple = (1.0, 30.0)) -> tuple:
    """Exact modal evolution on the flat product guide plus a decay fit.

    f is expanded over the cross-section modes; each coefficient evolves by
    the free x-space propagator (Fourier multiplier on a large periodic
    box picked so wrap-around mass stays under guard_tol) times the gauge
    phase exp(i lambda_j^2 t), whose modulus one leaves every x-norm of the
    mode untouched.  Returns (snapshots, DecayFit).
    """
    dom = f.domain
    if dom.spec.mode != GridMode.RADIAL_X:
        raise NotImplementedError("reference propagator runs on radial-x grids")
    if dom.spec.n != 3:
        raise NotImplementedError("free radial propagator requires n = 3")
    times = np.asarray(times, dtype=float)
    ax = dom.axes[0]
    ncell = ax.size
    grid = dom.grid_view(f.values.astype(complex), fill=0.0)
    yshape = grid.shape[1:]
    flat_y = grid.reshape(ncell, -1)
    ywts = modes.weights
    if flat_y.shape[1] != len(ywts):
        raise ValueError("mode basis does not match the domain cross-section grid")
    coeffs = flat_y @ (ywts[:, None] * modes.vectors)     # (ncell, J)
    recon = coeffs @ modes.vectors.T
    tail = np.linalg.norm(recon - flat_y) / max(np.linalg.norm(flat_y), 1e-300)
    if tail > np.sqrt(tail_tol):
        raise ValueError(f"modal tail mass {tail ** 2:.2e} exceeds {tail_tol:g}")

    h = ax.h
    tmax = float(np.max(times))
    box = float(ax.faces[-1] + box_pad + 16.0 * max(tmax, 1.0))
    mcell = int(np.ceil(box / h))
    m = 2 * mcell
    w = coeffs * ax.coords[:, None]
    buf = np.zeros((2 * m, coeffs.shape[1]), dtype=complex)
    buf[m: m + ncell] = w
    buf[m - ncell: m] = -w[::-1]
    xi = 2 * np.pi * np.fft.fftfreq(2 * m, d=h)
    spec0 = np.fft.fft(buf, axis=0)
    snaps = []
    sup = np.zeros(len(times))
    for it, t in enumerate(times):
        phase = np.exp(1j * t * xi ** 2)[:, None] \
            * np.exp(1j * t * modes.eigenvalues)[None, :]
        wt = np.fft.ifft(spec0 * phase, axis=0)
        band = wt[2 * m - max(4, ncell // 8): 2 * m]
        guard_mass = float(np.sum(np.abs(band) ** 2)) if t > 0 else 0.0
        total = float(np.sum(np.abs(wt) ** 2)) + 1e-300
        if guard_mass / total > guard_tol:
            raise BoxTooSmall(f"wrap-around mass {guard_mass / total:.2e} "
                              f"at t = {t:g}")
        ur = wt[m: m + ncell] / ax.coords[:, None]
        full = (ur @ modes.vectors.T).reshape((ncell,) + yshape)
        vals = dom.gather(full)
        snaps.append(GridFunction(dom, vals))
        sup[it] = float(np.max(np.abs(vals)))
    fit = _decay_fit(times, sup, fit_range)
    return snaps, fit


def _decay_fit(times, sup, fit_range) -> DecayFit:
    lo, hi = fit_range
    sel = (times >= lo) & (times <= hi) & (sup > 0)
    if sel.sum() < 2:
        return DecayFit(0.0, 0.0, np.inf, tuple(fit_range))
    lt = np.log(times[sel])
    ls = np.log(sup[sel])
    A = np.stack([lt, np.ones_like(lt)], axis=1)
    coef, res, *_ = np.linalg.lstsq(A, ls, rcond=None)
    resid = float(np.sqrt(res[0] / len(lt))) if len(res) else 0.0
    return DecayFit(float(coef[0]), float(coef[1]), resid, tuple(fit_range))


# ---------------------------------------------------------------------------
# Duhamel evolution
# ---------------------------------------------------------------------------

def duhamel_evolve(op: LatticeOperator, F, T: float, dt: float,
                   store_every: int = 1) -> Trajectory:
    """Crank-Nicolson integral of exp(i(t-s)H) F(s) ds with midpoint source.

    F is a callable t -> GridFunction (sampled at step midpoints) or an
    array of midpoint samples with one row per step.
    """
    nsteps = int(round(T / dt))
    lu, B = _cn_operators(op, dt)
    w = np.zeros(op.n, dtype=np.complex128)
    times = [0.0]
    snaps = [w / op.scaling]
    mass = [0.0]
    for k in range(nsteps):
        tm = (k + 0.5) * dt
        if callable(F):
            fv = F(tm)
            fw = op.to_symmetrized(fv) if isinstance(fv, GridFunction) \
                else op.scaling * np.asarray(fv)
        else:
            fw = op.scaling * np.asarray(F[k])
        w = lu.solve(B @ w + dt * fw)
        mass.append(float(np.vdot(w, w).real))
        if (k + 1) % store_every == 0 or k + 1 == nsteps:
            times.append((k + 1) * dt)
            snaps.append(w / op.scaling)
    return Trajectory(op.domain, np.array(times), np.array(snaps),
                      "duhamel_cn", np.array(mass), np.zeros(0))


def inhomogeneous_ratio(traj: Trajectory, F_samples, eps: float = 0.1) -> float:
    """|<x>^{-1-eps} u|_{L2t L2} over |<x>^{1+eps} F|_{L2t L2}."""
    dom = traj.domain
    w_in = bracket_weight(dom, -(1.0 + eps))
    w_out = bracket_weight(dom, 1.0 + eps)
    qw = dom.weights
    gu = np.array([float(np.sum(qw * np.abs(w_in * traj.snapshot(k).values) ** 2))
                   for k in range(len(traj.times))])
    num = np.sqrt(_trapezoid_accumulate(traj.times, gu)[-1])
    gf = np.array([float(np.sum(qw * np.abs(w_out * np.asarray(fv)) ** 2))
                   for fv in F_samples])
    tm = 0.5 * (traj.times[:-1] + traj.times[1:]) if len(gf) != len(traj.times) \
        else traj.times
    den = np.sqrt(np.sum(gf * np.gradient(tm)) if len(gf) > 1 else gf[0])
    return float(num / max(den, 1e-300))
