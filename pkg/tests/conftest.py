import numpy as np
import pytest

import waveguide_lab as wl


@pytest.fixture(scope="session")
def flat_domain():
    """Flat product guide, n=3 radial, omega=(0,pi): the workhorse grid."""
    spec = wl.GridSpec(3, 1, wl.GridMode.RADIAL_X, 20.0, np.pi, 0.1, np.pi / 32)
    return wl.build_domain(wl.FlatProduct(wl.Interval(np.pi)), spec)


@pytest.fixture(scope="session")
def flat_small():
    spec = wl.GridSpec(3, 1, wl.GridMode.RADIAL_X, 8.0, np.pi, 0.2, np.pi / 16)
    return wl.build_domain(wl.FlatProduct(wl.Interval(np.pi)), spec)


@pytest.fixture(scope="session")
def flat_operator(flat_domain):
    return wl.assemble_hamiltonian(flat_domain)


@pytest.fixture(scope="session")
def flat_small_operator(flat_small):
    return wl.assemble_hamiltonian(flat_small)


@pytest.fixture(scope="session")
def witsch_disk_domain():
    """Witsch bump over a unit disk, n=3 radial, m=2 radial: embedded-state host."""
    spec = wl.GridSpec(3, 2, wl.GridMode.RADIAL_X_RADIAL_Y, 20.0, 1.6, 0.1, 0.04)
    return wl.build_domain(wl.WitschBump(0.5, 2.0, wl.Disk(1.0)), spec)


@pytest.fixture(scope="session")
def bulge_domain():
    """Outward interval bulge: hosts a below-threshold bound state.

    The x motion is 3-D radial, so a weak narrow bulge does not bind; the
    0.3-amplitude bump needs radius ~5 before a state drops below the
    threshold (binding there is still only ~0.03).
    """
    bump = wl.WitschBump(0.3, 5.0, wl.Interval(np.pi))
    prof = wl.RadialProfile(bump.scale, wl.Interval(np.pi),
                            dg=bump.scale_derivative,
                            declared_max_scale=1.3,
                            declared_perturbation_radius=5.0)
    spec = wl.GridSpec(3, 1, wl.GridMode.RADIAL_X, 40.0, 1.3 * np.pi, 0.1,
                       1.3 * np.pi / 42)
    return wl.build_domain(prof, spec)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def bulge_scan(bulge_domain):
    """Bulge sector scan with box-doubling filter (shared: it is expensive)."""
    op = wl.assemble_sector(bulge_domain, 0, 0)
    dom2 = wl.build_domain(bulge_domain.profile, bulge_domain.spec.doubled())
    op2 = wl.assemble_sector(dom2, 0, 0)
    report = wl.scan_eigenvalues(op, (0.0, 0.99), shift_count=8, doubled=op2)
    return bulge_domain, op, report


@pytest.fixture(scope="session")
def witsch_scan(witsch_disk_domain):
    """Witsch k=1 sector scan with box-doubling filter (shared)."""
    op = wl.assemble_sector(witsch_disk_domain, 0, 1)
    dom2 = wl.build_domain(witsch_disk_domain.profile,
                           witsch_disk_domain.spec.doubled())
    op2 = wl.assemble_sector(dom2, 0, 1)
    report = wl.scan_eigenvalues(op, (6.0, 14.5), shift_count=10, doubled=op2)
    return witsch_disk_domain, report
