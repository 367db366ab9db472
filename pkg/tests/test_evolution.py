import numpy as np
import pytest
import scipy.sparse.linalg as spla

import waveguide_lab as wl
from waveguide_lab.errors import BoxTooSmall, NoFlatTail
from waveguide_lab.evolution import _trapezoid_accumulate
from waveguide_lab.fields import GridFunction, bump_source, gradient_x


def eigpair(op, sigma=1.1):
    vals, vecs = spla.eigsh(op.matrix.tocsc(), k=1, sigma=sigma, which="LM")
    return float(vals[0]), vecs[:, 0]


def test_cn_eigenvector_phase(flat_small_operator):
    H = flat_small_operator
    E, w = eigpair(H)
    f = H.from_symmetrized(w.astype(complex))
    dt = 0.05
    traj = wl.evolve_schrodinger(H, f, 0.5, dt)
    cn_phase = (1 + 0.5j * dt * E) / (1 - 0.5j * dt * E)
    for k, t in enumerate(traj.times):
        steps = int(round(t / dt))
        expect = cn_phase ** steps * f.values
        assert np.linalg.norm(traj.snapshots[k] - expect) < 1e-10


def test_cn_mass_conservation_long_run():
    spec = wl.GridSpec(3, 1, wl.GridMode.RADIAL_X, 8.0, np.pi, 0.25, np.pi / 12)
    dom = wl.build_domain(wl.FlatProduct(wl.Interval(np.pi)), spec)
    H = wl.assemble_hamiltonian(dom)
    f = bump_source(dom, 2.0, 1.0, y_coeffs=[1.0], momentum=1.5)
    traj = wl.evolve_schrodinger(H, f, 100.0, 0.01, store_every=10_000)
    assert len(traj.mass) == 10_001
    assert traj.mass_drift() <= 1e-10


def test_cn_temporal_order(flat_small_operator):
    # Richardson triple dt, dt/2, dt/4: consecutive differences give the
    # order.  The datum is band-limited in the discrete eigenbasis so the
    # dt^2 term dominates; raw grid samples carry an O(h^2) high-energy
    # tail whose wrapped phases would mask the convergence.
    H = flat_small_operator
    vals, vecs = spla.eigsh(H.matrix.tocsc(), k=6, sigma=1.5, which="LM")
    w0 = vecs @ np.array([1.0, 0.7, -0.5, 0.4, -0.2, 0.1])
    f = H.from_symmetrized(w0.astype(complex))
    T = 1.0
    u = {}
    for dt in (0.04, 0.02, 0.01):
        u[dt] = wl.evolve_schrodinger(H, f, T, dt, store_every=10 ** 9).snapshots[-1]
    order = np.log2(np.linalg.norm(u[0.04] - u[0.02])
                    / np.linalg.norm(u[0.02] - u[0.01]))
    assert 1.8 <= order <= 2.2


def test_time_reversal(flat_small_operator):
    H = flat_small_operator
    f = bump_source(H.domain, 2.0, 1.0, y_coeffs=[1.0, 0.3], momentum=1.0)
    fwd = wl.evolve_schrodinger(H, f, 1.0, 0.01, store_every=10 ** 9)
    back = wl.evolve_schrodinger(
        H, GridFunction(H.domain, np.conj(fwd.snapshots[-1])), 1.0, 0.01,
        store_every=10 ** 9)
    err = np.linalg.norm(back.snapshots[-1] - np.conj(f.values)) \
        / np.linalg.norm(f.values)
    assert err <= 1e-8


def test_wave_eigenvector_phases(flat_small_operator):
    H = flat_small_operator
    E, w = eigpair(H)
    f = H.from_symmetrized(w.astype(complex))
    for mu in (0.0, 0.7):
        traj = wl.evolve_wave(H, mu, f, 1.0, 0.25, method="spectral")
        om = np.sqrt(E + mu ** 2)
        expect = np.exp(1j * om * traj.times[-1]) * f.values
        assert np.linalg.norm(traj.snapshots[-1] - expect) \
            <= 1e-9 * np.linalg.norm(f.values)
    assert traj.energy_drift() <= 1e-8


def test_wave_leapfrog_second_order(flat_small_operator):
    H = flat_small_operator
    dom = H.domain
    f = GridFunction(dom, (np.exp(-(dom.r_cells - 2.0) ** 2 / 2.25)
                           * np.exp(0.5j * dom.r_cells)).astype(complex))
    T = 1.0
    ref = wl.evolve_wave(H, 0.0, f, T, 0.02, method="spectral",
                         store_every=10 ** 9)
    errs = []
    dts = (0.02, 0.01, 0.005)
    for dt in dts:
        lf = wl.evolve_wave(H, 0.0, f, T, dt, method="leapfrog",
                            store_every=10 ** 9)
        errs.append(np.linalg.norm(lf.snapshots[-1] - ref.snapshots[-1]))
    cfit = max(e / dt ** 2 for e, dt in zip(errs, dts))
    assert all(e <= cfit * dt ** 2 + 1e-12 for e, dt in zip(errs, dts))
    order = np.log2(errs[0] / errs[1])
    assert 1.7 <= order <= 2.3
    lf = wl.evolve_wave(H, 0.0, f, T, 0.01, method="leapfrog")
    assert lf.energy_drift() <= 10.0 * 0.01 ** 2


def test_wave_unstable_timestep_rejected(flat_small_operator):
    H = flat_small_operator
    f = bump_source(H.domain, 2.0, 1.0, y_coeffs=[1.0])
    from waveguide_lab.errors import UnstableTimestep
    with pytest.raises(UnstableTimestep):
        wl.evolve_wave(H, 0.0, f, 1.0, 1.0, method="leapfrog")


# ---------------------------------------------------------------------------
# fractional derivative
# ---------------------------------------------------------------------------

def test_half_derivative_quadrature_oracle(flat_small):
    # centered Gaussian: w = r exp(-r^2/2) has the closed-form sine
    # transform sqrt(pi/2) xi exp(-xi^2/2), so |D_x|^{1/2} f follows from a
    # 1-D quadrature, independent of the FFT pathway
    dom = flat_small
    r = dom.r_cells
    f = GridFunction(dom, np.exp(-r ** 2 / 2).astype(complex))
    got = wl.half_derivative_x(f)
    xi = np.linspace(0.0, 16.0, 8001)
    Sxi = np.sqrt(np.pi / 2) * xi * np.exp(-xi ** 2 / 2)
    integ = xi ** 0.5 * Sxi
    rr = np.unique(r)
    oracle_w = (2 / np.pi) * np.trapezoid(
        integ[None, :] * np.sin(np.outer(rr, xi)), xi, axis=1)
    oracle = dict(zip(rr, oracle_w / rr))
    expect = np.array([oracle[v] for v in r])
    # the doubled-extent box resolves the |xi|^{1/2} kink to ~1e-4 relative;
    # the quadrature oracle itself is far more accurate
    assert np.linalg.norm(got.values - expect) <= 5e-4 * np.linalg.norm(expect)


def test_half_derivative_composition_on_box(flat_small):
    f = bump_source(flat_small, 3.0, 1.0, y_coeffs=[1.0])
    twice = wl.half_derivative_x(f, powers=(0.5, 0.5))
    once = wl.half_derivative_x(f, power=1.0)
    assert (twice - once).l2_norm() <= 1e-10 * f.l2_norm()


def test_half_derivative_plancherel(flat_domain):
    f = bump_source(flat_domain, 4.0, 1.5, y_coeffs=[1.0])
    d1 = wl.half_derivative_x(f, power=1.0).l2_norm()
    grad = GridFunction(flat_domain, gradient_x(f).astype(complex)).l2_norm()
    assert abs(d1 - grad) <= 0.01 * grad


# ---------------------------------------------------------------------------
# traces
# ---------------------------------------------------------------------------

def test_trace_zero_data(flat_small_operator):
    H = flat_small_operator
    traj = wl.evolve_schrodinger(H, GridFunction.zeros(H.domain), 0.2, 0.05)
    tr = wl.smoothing_trace(traj, 0.1)
    assert np.all(tr.S1 == 0) and np.all(tr.S2 == 0) and np.all(tr.S3 == 0)


def test_eigenstate_linear_growth_exact_slope(bulge_domain):
    # trapped state: |u(t)| is t-independent, so S1 grows exactly linearly
    # with slope ||<x>^{-1-eps} f||^2
    op = wl.assemble_sector(bulge_domain, 0, 0)
    E, w = eigpair(op, sigma=0.96)
    f = op.from_symmetrized(w.astype(complex))
    traj = wl.evolve_schrodinger(op, f, 2.0, 0.1)
    tr = wl.smoothing_trace(traj, 0.1)
    from waveguide_lab.fields import bracket_weight, weighted_l2
    slope = weighted_l2(f, bracket_weight(bulge_domain, -(1.1))) ** 2
    expect = slope * tr.times
    assert np.max(np.abs(tr.S1 - expect)) <= 1e-8 * expect[-1]


def test_trace_additivity(flat_small_operator):
    H = flat_small_operator
    f = bump_source(H.domain, 2.0, 1.0, y_coeffs=[1.0], momentum=1.0)
    traj = wl.evolve_schrodinger(H, f, 2.0, 0.05)
    tr = wl.smoothing_trace(traj, 0.1)
    k = len(tr.times) // 2
    # accumulate the tail segment alone and compare
    traj_tail = wl.Trajectory(traj.domain, traj.times[k:] - traj.times[k],
                              traj.snapshots[k:], traj.scheme, traj.mass,
                              traj.energy)
    tr_tail = wl.smoothing_trace(traj_tail, 0.1)
    total = tr.S1[k] + tr_tail.S1[-1]
    assert abs(total - tr.S1[-1]) <= 1e-13 * max(tr.S1[-1], 1.0)


def test_flat_oracle_agreement_cn():
    # CN on the flat guide matches the exact modal propagator to 2% at t = 5
    # for resolved (low-momentum) data
    spec = wl.GridSpec(3, 1, wl.GridMode.RADIAL_X, 20.0, np.pi, 0.1, np.pi / 16)
    dom = wl.build_domain(wl.FlatProduct(wl.Interval(np.pi)), spec)
    H = wl.assemble_hamiltonian(dom)
    modes = wl.cross_section_modes(wl.Interval(np.pi), 3,
                                   ncell=dom.axes[1].size)
    y = dom.axes[1].coords[dom.cells[:, 1]]
    phi1 = np.interp(y, modes.coords, modes.vectors[:, 0])
    f = GridFunction(dom, (np.exp(-(dom.r_cells - 3.0) ** 2 / 4.0)
                           * np.exp(1j * 0.8 * dom.r_cells)) * phi1)
    t_final = 5.0
    traj = wl.evolve_schrodinger(H, f, t_final, 0.01, store_every=10 ** 9)
    snaps, _ = wl.flat_reference_propagator(modes, f, [0.0, t_final],
                                            fit_range=(1.0, 5.0))
    num = np.linalg.norm(traj.snapshots[-1] - snaps[-1].values)
    assert num <= 0.02 * np.linalg.norm(snaps[-1].values)


def test_strichartz_zero_and_flat_oracle(flat_domain):
    H = wl.assemble_hamiltonian(flat_domain)
    zero = wl.evolve_schrodinger(H, GridFunction.zeros(flat_domain), 0.2, 0.05)
    st0 = wl.strichartz_norm(zero)
    assert np.all(st0["St"] == 0.0)
    # single-mode Gaussian: CN mixed norm vs the exact modal propagator
    modes = wl.cross_section_modes(wl.Interval(np.pi), 3,
                                   ncell=flat_domain.axes[1].size)
    y = flat_domain.axes[1].coords[flat_domain.cells[:, 1]]
    phi1 = np.interp(y, modes.coords, modes.vectors[:, 0])
    f = GridFunction(flat_domain,
                     np.exp(-(flat_domain.r_cells - 2.0) ** 2 / 2.0) * phi1)
    T, dt = 3.0, 0.05
    traj = wl.evolve_schrodinger(H, f, T, dt)
    st = wl.strichartz_norm(traj)
    snaps, _ = wl.flat_reference_propagator(modes, f, traj.times,
                                            fit_range=(1.0, 3.0))
    from waveguide_lab.evolution import _mixed_sq
    g = np.array([_mixed_sq(s) for s in snaps])
    st_oracle = np.sqrt(_trapezoid_accumulate(traj.times, g))
    assert abs(st["St"][-1] - st_oracle[-1]) <= 0.02 * st_oracle[-1]


def test_strichartz_requires_flat_tail():
    prof = wl.RadialProfile(lambda r: 1.0 + 0.5 * np.tanh(np.asarray(r, float)),
                            wl.Interval(np.pi), declared_max_scale=1.5)
    spec = wl.GridSpec(3, 1, wl.GridMode.RADIAL_X, 10.0, 1.5 * np.pi, 0.2,
                       1.5 * np.pi / 24)
    dom = wl.build_domain(prof, spec)
    H = wl.assemble_hamiltonian(dom)
    f = bump_source(dom, 2.0, 1.0, y_coeffs=[1.0])
    traj = wl.evolve_schrodinger(H, f, 0.2, 0.1)
    with pytest.raises(NoFlatTail):
        wl.strichartz_norm(traj)


# ---------------------------------------------------------------------------
# flat reference propagator
# ---------------------------------------------------------------------------

def test_gaussian_closed_form_and_decay(flat_domain):
    modes = wl.cross_section_modes(wl.Interval(np.pi), 3,
                                   ncell=flat_domain.axes[1].size)
    y = flat_domain.axes[1].coords[flat_domain.cells[:, 1]]
    phi1 = np.interp(y, modes.coords, modes.vectors[:, 0])
    r = flat_domain.r_cells
    f = GridFunction(flat_domain, np.exp(-r ** 2 / 2).astype(complex) * phi1)
    ts = np.concatenate([[0.0], np.geomspace(1.0, 30.0, 16)])
    snaps, fit = wl.flat_reference_propagator(modes, f, ts)
    # closed form: free evolution of the x Gaussian times the shared grid
    # y-mode and its gauge phase
    for t_target in (1.0, 5.0, 10.0):
        k = int(np.argmin(np.abs(ts - t_target)))
        a = 1.0 - 2.0j * ts[k]
        exact = (a ** -1.5 * np.exp(-r ** 2 / (2 * a))
                 * np.exp(1j * modes.eigenvalues[0] * ts[k]) * phi1)
        err = np.linalg.norm(snaps[k].values - exact) / np.linalg.norm(exact)
        assert err <= 1e-6
    # gauge factor has modulus one: the mixed x-norms see only the free part
    assert -1.65 <= fit.slope <= -1.35


def test_gauge_leaves_lp_norms_unchanged(flat_domain):
    # |exp(i lambda_j^2 t)| = 1: compare sup norms with a mode-2 datum whose
    # gauge phase differs
    modes = wl.cross_section_modes(wl.Interval(np.pi), 3,
                                   ncell=flat_domain.axes[1].size)
    y = flat_domain.axes[1].coords[flat_domain.cells[:, 1]]
    r = flat_domain.r_cells
    sup = {}
    for j in (0, 1):
        phi = np.interp(y, modes.coords, modes.vectors[:, j])
        f = GridFunction(flat_domain, np.exp(-r ** 2 / 2).astype(complex) * phi)
        snaps, _ = wl.flat_reference_propagator(modes, f, [0.0, 2.0],
                                                fit_range=(1.0, 2.0))
        ratio = (np.max(np.abs(snaps[1].values))
                 / np.max(np.abs(snaps[0].values)))
        sup[j] = ratio
    # identical x data: the decay ratio is gauge independent mode to mode
    assert abs(sup[0] - sup[1]) <= 0.02 * sup[0]


def test_box_too_small_detected(flat_small):
    modes = wl.cross_section_modes(wl.Interval(np.pi), 2,
                                   ncell=flat_small.axes[1].size)
    y = flat_small.axes[1].coords[flat_small.cells[:, 1]]
    phi1 = np.interp(y, modes.coords, modes.vectors[:, 0])
    r = flat_small.r_cells
    # fast packet: group speed ~ 2 (k0 + spread) outruns the 16 t padding
    f = GridFunction(flat_small, (np.exp(-(r - 2) ** 2)
                                  * np.exp(12.0j * r)) * phi1)
    with pytest.raises(BoxTooSmall):
        wl.flat_reference_propagator(modes, f, [0.0, 8.0], box_pad=0.0,
                                     fit_range=(1.0, 8.0))


# ---------------------------------------------------------------------------
# Duhamel
# ---------------------------------------------------------------------------

def test_duhamel_zero_source(flat_small_operator):
    H = flat_small_operator
    traj = wl.duhamel_evolve(H, lambda t: GridFunction.zeros(H.domain), 0.5, 0.1)
    assert np.linalg.norm(traj.snapshots[-1]) == 0.0


def test_duhamel_semigroup_identity():
    # F(s) = exp(isH) g  =>  u(t) = t exp(itH) g, checked to 1e-6 relative
    spec = wl.GridSpec(3, 1, wl.GridMode.RADIAL_X, 8.0, np.pi, 0.25, np.pi / 10)
    dom = wl.build_domain(wl.FlatProduct(wl.Interval(np.pi)), spec)
    H = wl.assemble_hamiltonian(dom)
    dense = H.matrix.toarray()
    evals, vecs = np.linalg.eigh(dense)
    c = np.zeros(H.n)
    c[:4] = [1.0, 0.6, -0.4, 0.2]      # smooth low-energy combination

    def F(t):
        return H.from_symmetrized(vecs @ (np.exp(1j * evals * t) * c))

    T, dt = 0.5, 0.00025
    traj = wl.duhamel_evolve(H, F, T, dt, store_every=10 ** 9)
    expect = T * F(T).values
    err = np.linalg.norm(traj.snapshots[-1] - expect) / np.linalg.norm(expect)
    assert err <= 1e-6


def test_trace_nondecreasing(flat_small_operator):
    H = flat_small_operator
    f = bump_source(H.domain, 2.0, 1.0, y_coeffs=[1.0], momentum=1.0)
    tr = wl.smoothing_trace(wl.evolve_schrodinger(H, f, 1.0, 0.05), 0.1)
    for arr in (tr.S1, tr.S2, tr.S3):
        assert np.all(np.diff(arr) >= -1e-15)


def test_field_snapshot_roundtrip(tmp_path, flat_small):
    from waveguide_lab.fields import save_field, load_field
    f = bump_source(flat_small, 2.0, 1.0, y_coeffs=[1.0], momentum=0.7)
    save_field(f, tmp_path / "f.wgf")
    g = load_field(flat_small, tmp_path / "f.wgf")
    assert np.array_equal(f.values.astype(np.complex128), g.values)


def test_flat_reference_rejects_modal_tail(flat_domain):
    # y-profile orthogonal to the supplied basis: the expansion tail is the
    # whole datum and the propagator must refuse
    modes = wl.cross_section_modes(wl.Interval(np.pi), 2,
                                   ncell=flat_domain.axes[1].size)
    y = flat_domain.axes[1].coords[flat_domain.cells[:, 1]]
    f = GridFunction(flat_domain,
                     np.exp(-flat_domain.r_cells ** 2) * np.sin(5 * y))
    with pytest.raises(ValueError):
        wl.flat_reference_propagator(modes, f, [0.0, 1.0],
                                     fit_range=(0.5, 1.0))
