import numpy as np
import pytest

import waveguide_lab as wl
from waveguide_lab.errors import NoFlatTail, ProfileOutOfBounds
from waveguide_lab.geometry import domain_r_max


def spec_radial(extent=12.0, h=0.1, ey=np.pi, hy=np.pi / 32):
    return wl.GridSpec(3, 1, wl.GridMode.RADIAL_X, extent, ey, h, hy)


def test_flat_product_mask_is_full_product():
    dom = wl.build_domain(wl.FlatProduct(wl.Interval(np.pi)), spec_radial())
    # every (r, y) cell with y in (0, pi) is active: the mask is the product
    assert dom.active.all()


def test_radial_profile_unit_scale_degenerates_to_product():
    prof = wl.RadialProfile(lambda r: np.ones_like(np.asarray(r, float)),
                            wl.Interval(np.pi), declared_max_scale=1.0)
    a = wl.build_domain(prof, spec_radial())
    b = wl.build_domain(wl.FlatProduct(wl.Interval(np.pi)), spec_radial())
    assert np.array_equal(a.active, b.active)


def test_witsch_bump_gains_cells_over_product():
    # oracle: direct indicator evaluation cell by cell
    spec = wl.GridSpec(3, 2, wl.GridMode.RADIAL_X_RADIAL_Y, 16.0, 1.6, 0.1, 0.04)
    bump = wl.build_domain(wl.WitschBump(0.5, 2.0, wl.Disk(1.0)), spec)
    flat = wl.build_domain(wl.FlatProduct(wl.Disk(1.0)), spec)
    r = (np.arange(160) + 0.5) * 0.1
    rho = (np.arange(40) + 0.5) * 0.04
    wall = wl.WitschBump(0.5, 2.0, wl.Disk(1.0)).scale(r)
    expected = int((rho[None, :] < wall[:, None]).sum())
    assert bump.n_cells == expected
    assert bump.n_cells > flat.n_cells


def test_unit_normals(flat_domain, witsch_disk_domain):
    for dom in (flat_domain, witsch_disk_domain):
        norms = np.linalg.norm(dom.boundary.normal, axis=1)
        assert np.max(np.abs(norms - 1.0)) < 1e-12


def test_flat_repulsivity_slack_exactly_zero(flat_domain):
    rep = wl.audit_repulsivity(flat_domain)
    assert rep.min_slack == 0.0
    assert rep.violating_fraction == 0.0
    assert rep.verdict


def test_expanding_profile_is_repulsive():
    # level-set oracle: nu . (x,0) has the sign of -g'(r) r
    prof = wl.RadialProfile(lambda r: 1.0 + 0.3 * np.tanh(np.asarray(r, float)),
                            wl.Interval(np.pi), declared_max_scale=1.3)
    dom = wl.build_domain(prof, spec_radial(ey=1.3 * np.pi, hy=1.3 * np.pi / 40))
    rep = wl.audit_repulsivity(dom)
    assert rep.verdict
    assert rep.min_slack >= 0.0


def test_witsch_bump_not_repulsive(witsch_disk_domain):
    rep = wl.audit_repulsivity(witsch_disk_domain)
    assert not rep.verdict
    assert rep.violating_fraction > 0.0
    # violations sit exactly where the wall slope is negative: every
    # violating sample must carry a negative scale derivative
    prof = witsch_disk_domain.profile
    bad = witsch_disk_domain.boundary.slack < -1e-10
    assert np.all(prof.scale_derivative(
        witsch_disk_domain.boundary.point_r[bad]) < 0)


def test_flat_tail_flat_product(flat_domain):
    rep = wl.audit_flat_tail(flat_domain)
    assert rep.M == 0.0
    assert rep.holds


def test_flat_tail_witsch(witsch_disk_domain):
    rep = wl.audit_flat_tail(witsch_disk_domain)
    # bump radius b = 2, mask comparison resolves it to within one cell
    assert abs(rep.M - 2.0) <= 0.1


def test_flat_tail_tanh_never_stabilizes():
    prof = wl.RadialProfile(lambda r: 1.0 + 0.5 * np.tanh(np.asarray(r, float)),
                            wl.Interval(np.pi), declared_max_scale=1.5)
    dom = wl.build_domain(prof, spec_radial(extent=14.0, ey=1.5 * np.pi,
                                            hy=1.5 * np.pi / 40))
    with pytest.raises(NoFlatTail):
        wl.audit_flat_tail(dom)


def test_profile_out_of_bounds():
    with pytest.raises(ProfileOutOfBounds):
        # perturbation radius 2 needs extent_x >= 16
        wl.build_domain(wl.WitschBump(0.5, 2.0, wl.Interval(np.pi)),
                        spec_radial(extent=10.0, ey=1.5 * np.pi))
    with pytest.raises(ProfileOutOfBounds):
        # cross-section taller than extent_y
        wl.build_domain(wl.FlatProduct(wl.Interval(2 * np.pi)), spec_radial())


def test_refinement_stability_of_min_slack():
    # |min_slack(h) - min_slack(h/2)| = O(h) with fitted constant
    prof = wl.WitschBump(0.5, 2.0, wl.Disk(1.0))
    slacks = []
    hs = [0.2, 0.1, 0.05]
    for h in hs:
        spec = wl.GridSpec(3, 2, wl.GridMode.RADIAL_X_RADIAL_Y, 16.0, 1.6, h,
                           h / 2.5)
        dom = wl.build_domain(prof, spec)
        slacks.append(wl.audit_repulsivity(dom).min_slack)
    d1 = abs(slacks[1] - slacks[0])
    d2 = abs(slacks[2] - slacks[1])
    cfit = max(d1 / hs[0], d2 / hs[1])
    assert d1 <= cfit * hs[0] + 1e-12
    assert d2 <= cfit * hs[1] + 1e-12
    # and the constant is not absurd: slack scale is O(1)
    assert cfit < 10.0


def test_full_tensor_rotation_invariance():
    # quarter-turn rotations are exact symmetries of the x grid sampling
    spec = wl.GridSpec(3, 1, wl.GridMode.FULL_TENSOR, 3.0, 1.2 * np.pi, 0.5,
                       1.2 * np.pi / 8)
    bump = wl.WitschBump(0.2, 0.1875, wl.Interval(np.pi))  # tiny bump
    prof = wl.RadialProfile(bump.scale, wl.Interval(np.pi),
                            dg=bump.scale_derivative,
                            declared_max_scale=1.2,
                            declared_perturbation_radius=bump.radius)
    dom = wl.build_domain(prof, spec)
    rep = wl.audit_repulsivity(dom)
    rot = np.rot90(dom.active, k=1, axes=(0, 1))
    assert np.array_equal(dom.active, rot)
    dom2 = wl.build_domain(prof, spec)
    rep2 = wl.audit_repulsivity(dom2)
    assert rep.min_slack == rep2.min_slack


def test_mask_roundtrip(tmp_path, flat_small):
    path = tmp_path / "mask.bin"
    flat_small.save_mask(path)
    mask = wl.WaveguideDomain.load_mask(path)
    assert np.array_equal(mask, flat_small.active)


def test_connectivity_and_r_max(flat_small):
    assert flat_small.n_cells > 0
    assert domain_r_max(flat_small, flat_small.active) <= 8.0
