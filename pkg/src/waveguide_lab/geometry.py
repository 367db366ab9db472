"""Waveguide domains: profiles, tensor grids, masks, and geometric audits.

A domain lives in R^n_x x R^m_y and is always of graph type
{(x, y) : y in s(|x|) * omega} for a bounded cross-section omega and a
positive radial scale s.  Grids are cell-centered tensor products; reduced
modes replace the x block (and for m = 2 the y block) by an offset radial
axis with nodes (i + 1/2) h, so no node sits on the coordinate singularity.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum
from math import gamma, pi
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from .errors import EmptyDomain, InvalidDomain, NoFlatTail, ProfileOutOfBounds

TOL_GEOM = 1e-10          # slack tolerance of the repulsivity sign test
_SCALE_EQ_RTOL = 1e-14    # "exactly flat" tolerance for the analytic tail probe


class GridMode(str, Enum):
    FULL_TENSOR = "full_tensor"
    RADIAL_X = "radial_x"
    RADIAL_X_RADIAL_Y = "radial_x_radial_y"


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere S^{n-1} in R^n."""
    return 2.0 * pi ** (n / 2.0) / gamma(n / 2.0)


# ---------------------------------------------------------------------------
# cross-sections
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Interval:
    """1-D cross-section (0, length)."""
    length: float = pi

    dim = 1

    def required_extent(self, smax: float) -> float:
        return self.length * smax

    def contains(self, ys: Sequence[np.ndarray], s) -> np.ndarray:
        y = ys[0]
        return (y > 0.0) & (y < s * self.length)

    def walls(self):
        return ("interval_low", "interval_high")


@dataclass(frozen=True)
class Disk:
    """2-D disk cross-section of given radius, centered at the origin."""
    radius: float = 1.0

    dim = 2

    def required_extent(self, smax: float) -> float:
        return self.radius * smax

    def contains(self, ys: Sequence[np.ndarray], s) -> np.ndarray:
        if len(ys) == 1:      # reduced radial-y coordinate
            rho = ys[0]
        else:
            rho = np.sqrt(ys[0] ** 2 + ys[1] ** 2)
        return rho < s * self.radius

    def walls(self):
        return ("disk",)


@dataclass(frozen=True)
class RasterMask:
    """Rasterized 2-D cross-section; indicator only, no analytic normals."""
    mask: np.ndarray
    h: float
    origin: tuple[float, float] = (0.0, 0.0)

    dim = 2

    def required_extent(self, smax: float) -> float:
        spans = [max(abs(self.origin[d]),
                     abs(self.origin[d] + self.mask.shape[d] * self.h))
                 for d in (0, 1)]
        return max(spans) * smax

    def contains(self, ys, s):
        y0, y1, sc = np.broadcast_arrays(ys[0], ys[1], np.asarray(s))
        iy = np.floor((y0 / sc - self.origin[0]) / self.h).astype(int)
        jy = np.floor((y1 / sc - self.origin[1]) / self.h).astype(int)
        ok = ((iy >= 0) & (iy < self.mask.shape[0])
              & (jy >= 0) & (jy < self.mask.shape[1]))
        out = np.zeros(y0.shape, dtype=bool)
        out[ok] = self.mask[iy[ok], jy[ok]]
        return out

    def walls(self):
        return ()


CrossSection = Interval | Disk | RasterMask


# ---------------------------------------------------------------------------
# profiles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FlatProduct:
    """Product waveguide R^n x omega."""
    cross_section: CrossSection = field(default_factory=Interval)

    def scale(self, r):
        return np.ones_like(np.asarray(r, dtype=float))

    def scale_derivative(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    def max_scale(self) -> float:
        return 1.0

    def perturbation_radius(self):
        return 0.0


@dataclass(frozen=True)
class RadialProfile:
    """Graph-type domain y in g(|x|) * omega for a user-supplied scale g."""
    g: Callable[[np.ndarray], np.ndarray]
    cross_section: CrossSection = field(default_factory=Interval)
    dg: Callable[[np.ndarray], np.ndarray] | None = None
    declared_max_scale: float | None = None
    declared_perturbation_radius: float | None = None

    def scale(self, r):
        return np.asarray(self.g(np.asarray(r, dtype=float)), dtype=float)

    def scale_derivative(self, r):
        r = np.asarray(r, dtype=float)
        if self.dg is not None:
            return np.asarray(self.dg(r), dtype=float)
        d = 1e-6 * np.maximum(np.abs(r), 1.0)
        return (self.scale(r + d) - self.scale(np.maximum(r - d, 0.0))) / (d + np.minimum(r, d))

    def max_scale(self) -> float:
        if self.declared_max_scale is not None:
            return self.declared_max_scale
        probe = np.linspace(0.0, 1000.0, 20001)
        return float(np.max(self.scale(probe)))

    def perturbation_radius(self):
        return self.declared_perturbation_radius


@dataclass(frozen=True)
class WitschBump:
    """Compact smooth bump scale 1 + a*exp(1 - 1/(1 - (r/b)^2)), flat past b.

    The scale equals 1 exactly for r >= b and attains max 1 + a > 1 at r = 0,
    so the domain is a compactly supported outward perturbation of the
    product guide; the outer slope is negative, which breaks repulsivity and
    is what traps the embedded sector states.
    """
    amplitude: float = 0.5
    radius: float = 2.0
    cross_section: CrossSection = field(default_factory=Disk)

    def __post_init__(self):
        if self.amplitude <= 0:
            raise ValueError("bump amplitude must be positive")

    def scale(self, r):
        r = np.asarray(r, dtype=float)
        out = np.ones_like(r)
        s2 = np.clip((r / self.radius) ** 2, 0.0, None)
        inside = s2 < 1.0
        with np.errstate(divide="ignore", over="ignore"):
            out[inside] = 1.0 + self.amplitude * np.exp(1.0 - 1.0 / (1.0 - s2[inside]))
        return out

    def scale_derivative(self, r):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        s = r / self.radius
        inside = (s < 1.0) & (s > 0.0)
        si = s[inside]
        q = 1.0 - si ** 2
        out[inside] = self.amplitude * np.exp(1.0 - 1.0 / q) * (-2.0 * si / q ** 2) / self.radius
        return out

    def max_scale(self) -> float:
        return 1.0 + self.amplitude

    def perturbation_radius(self):
        return self.radius


Profile = FlatProduct | RadialProfile | WitschBump


# ---------------------------------------------------------------------------
# grid spec and axes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Tensor-grid parameters for a waveguide discretization."""
    n: int
    m: int
    mode: GridMode
    extent_x: float
    extent_y: float
    h_x: float
    h_y: float

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("n must be >= 3")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.h_x <= 0 or self.h_y <= 0:
            raise ValueError("grid spacings must be positive")
        if self.extent_x <= 0 or self.extent_y <= 0:
            raise ValueError("extents must be positive")
        if self.mode == GridMode.RADIAL_X_RADIAL_Y and self.m != 2:
            raise ValueError("radial y reduction requires m = 2")

    def doubled(self) -> "GridSpec":
        """Same grid with doubled x extent (truncation sensitivity runs)."""
        return GridSpec(self.n, self.m, self.mode, 2.0 * self.extent_x,
                        self.extent_y, self.h_x, self.h_y)


@dataclass(frozen=True)
class Axis:
    """One tensor direction: cell centers, face coordinates, metric factor."""
    name: str
    block: str                 # 'x' or 'y'
    radial: bool
    coords: np.ndarray         # cell centers
    faces: np.ndarray          # len(coords) + 1 face coordinates
    h: float
    mu_cell: np.ndarray        # metric factor at centers (1 for cartesian)
    mu_face: np.ndarray        # metric factor at faces

    @property
    def size(self) -> int:
        return len(self.coords)


def _radial_axis(name: str, block: str, extent: float, h: float, power: int) -> Axis:
    ncell = int(round(extent / h))
    if ncell < 2:
        raise ValueError(f"extent too small for axis {name}")
    faces = np.arange(ncell + 1) * h
    coords = (np.arange(ncell) + 0.5) * h
    return Axis(name, block, True, coords, faces, h,
                coords ** power, faces ** power)


def _cart_axis(name: str, block: str, lo: float, hi: float, h: float) -> Axis:
    ncell = int(round((hi - lo) / h))
    if ncell < 2:
        raise ValueError(f"extent too small for axis {name}")
    faces = lo + np.arange(ncell + 1) * h
    coords = lo + (np.arange(ncell) + 0.5) * h
    ones = np.ones(ncell)
    return Axis(name, block, False, coords, faces, h, ones, np.ones(ncell + 1))


# ---------------------------------------------------------------------------
# domain
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundaryFaces:
    """Physical boundary faces with analytic normals sampled on the wall."""
    cell: np.ndarray           # active-cell index
    axis: np.ndarray           # axis index of the face
    direction: np.ndarray      # +1 / -1
    point_r: np.ndarray        # |x| at the wall crossing
    normal: np.ndarray         # (nfaces, naxes) unit normal, reduced coords
    slack: np.ndarray          # -nu . (x, 0) at the crossing

    def __len__(self):
        return len(self.cell)


class WaveguideDomain:
    """Discretized waveguide: active cells, quadrature, boundary samples."""

    def __init__(self, spec: GridSpec, profile: Profile, axes: list[Axis],
                 active: np.ndarray, boundary: BoundaryFaces,
                 truncation_faces: int):
        self.spec = spec
        self.profile = profile
        self.axes = axes
        self.active = active
        self.boundary = boundary
        self.truncation_faces = truncation_faces

        self.shape = active.shape
        self.cell_index = -np.ones(active.shape, dtype=np.int64)
        cells = np.argwhere(active)
        self.cell_index[tuple(cells.T)] = np.arange(len(cells))
        self.cells = cells
        self.n_cells = len(cells)

        angular = 1.0
        if spec.mode in (GridMode.RADIAL_X, GridMode.RADIAL_X_RADIAL_Y):
            angular *= sphere_area(spec.n)
        if spec.mode == GridMode.RADIAL_X_RADIAL_Y:
            angular *= 2.0 * pi
        w = np.full(self.n_cells, angular)
        for d, ax in enumerate(axes):
            w = w * ax.mu_cell[cells[:, d]] * ax.h
        self.weights = w

        self.x_axes = [d for d, ax in enumerate(axes) if ax.block == "x"]
        self.y_axes = [d for d, ax in enumerate(axes) if ax.block == "y"]
        if spec.mode == GridMode.FULL_TENSOR:
            r2 = np.zeros(self.n_cells)
            for d in self.x_axes:
                r2 += axes[d].coords[cells[:, d]] ** 2
            self.r_cells = np.sqrt(r2)
        else:
            self.r_cells = axes[0].coords[cells[:, 0]].copy()

        self._radial_cache = None

    # -- radial mass machinery (shared by the Morrey-Campanato norms) -------

    def radial_order(self):
        """Sorted unique cell radii and the map active cell -> radius bin."""
        if self._radial_cache is None:
            uniq, inv = np.unique(self.r_cells, return_inverse=True)
            self._radial_cache = (uniq, inv)
        return self._radial_cache

    def mass_profile(self, density: np.ndarray) -> np.ndarray:
        """Sum a per-cell nonnegative density into the unique-radius bins."""
        uniq, inv = self.radial_order()
        out = np.zeros(len(uniq))
        np.add.at(out, inv, density)
        return out

    # -- helpers -------------------------------------------------------------

    def grid_view(self, values: np.ndarray, fill=0.0) -> np.ndarray:
        """Scatter active-cell values onto the full tensor grid."""
        out = np.full(self.shape, fill, dtype=np.result_type(values.dtype, type(fill)))
        out[tuple(self.cells.T)] = values
        return out

    def gather(self, grid_values: np.ndarray) -> np.ndarray:
        return grid_values[tuple(self.cells.T)]

    def save_mask(self, path) -> None:
        """Binary mask cache: little-endian u32 rank + dims, packed bits."""
        with open(path, "wb") as fh:
            fh.write(struct.pack("<I", len(self.shape)))
            fh.write(struct.pack(f"<{len(self.shape)}I", *self.shape))
            fh.write(np.packbits(self.active.ravel()).tobytes())

    @staticmethod
    def load_mask(path) -> np.ndarray:
        with open(path, "rb") as fh:
            (rank,) = struct.unpack("<I", fh.read(4))
            dims = struct.unpack(f"<{rank}I", fh.read(4 * rank))
            raw = np.frombuffer(fh.read(), dtype=np.uint8)
        flat = np.unpackbits(raw)[: int(np.prod(dims))]
        return flat.astype(bool).reshape(dims)


@dataclass(frozen=True)
class RepulsivityReport:
    min_slack: float
    violating_fraction: float
    verdict: bool
    n_samples: int


@dataclass(frozen=True)
class FlatTailReport:
    M: float
    tail_cross_section: np.ndarray
    holds: bool


# ---------------------------------------------------------------------------
# build
# ---------------------------------------------------------------------------

def _make_axes(spec: GridSpec, profile: Profile) -> list[Axis]:
    cs = profile.cross_section
    axes: list[Axis] = []
    if spec.mode == GridMode.FULL_TENSOR:
        for d in range(spec.n):
            axes.append(_cart_axis(f"x{d}", "x", -spec.extent_x, spec.extent_x, spec.h_x))
    else:
        axes.append(_radial_axis("r", "x", spec.extent_x, spec.h_x, spec.n - 1))
    if spec.mode == GridMode.RADIAL_X_RADIAL_Y:
        axes.append(_radial_axis("rho", "y", spec.extent_y, spec.h_y, 1))
    else:
        for d in range(spec.m):
            if isinstance(cs, Interval):
                axes.append(_cart_axis(f"y{d}", "y", 0.0, spec.extent_y, spec.h_y))
            else:
                axes.append(_cart_axis(f"y{d}", "y", -spec.extent_y, spec.extent_y, spec.h_y))
    return axes


def _indicator(profile: Profile, spec: GridSpec, axes, coord_list) -> np.ndarray:
    xs = [coord_list[d] for d, ax in enumerate(axes) if ax.block == "x"]
    ys = [coord_list[d] for d, ax in enumerate(axes) if ax.block == "y"]
    if spec.mode == GridMode.FULL_TENSOR:
        r = np.sqrt(sum(x ** 2 for x in xs))
    else:
        r = xs[0]
    return profile.cross_section.contains(ys, profile.scale(r))


def _wall_slack_and_normal(profile, spec, axes, points, face_axis=None,
                           face_dir=None):
    """Analytic outward normal and repulsivity slack at boundary points.

    points: (k, naxes) reduced coordinates on (or very near) the wall.
    Returns (normal (k, naxes), slack (k,)).  The wall is selected per point
    as the level function with the smallest absolute value.  Rasterized
    cross-sections carry no analytic wall, but on an unscaled product every
    wall is a y-wall, so the slack is exactly zero and the face direction
    stands in for the normal.
    """
    cs = profile.cross_section
    if isinstance(cs, RasterMask):
        if not isinstance(profile, FlatProduct):
            raise NotImplementedError(
                "analytic normals for scaled raster cross-sections")
        normals = np.zeros((len(points), len(axes)))
        if face_axis is not None:
            normals[np.arange(len(points)), face_axis] = face_dir
        return normals, np.zeros(len(points))
    naxes = len(axes)
    xs_idx = [d for d, ax in enumerate(axes) if ax.block == "x"]
    ys_idx = [d for d, ax in enumerate(axes) if ax.block == "y"]
    if spec.mode == GridMode.FULL_TENSOR:
        r = np.sqrt(sum(points[:, d] ** 2 for d in xs_idx))
        xhat = np.zeros((len(points), naxes))
        safe = r > 0
        for d in xs_idx:
            xhat[safe, d] = points[safe, d] / r[safe]
    else:
        r = points[:, 0]
        xhat = np.zeros((len(points), naxes))
        xhat[:, 0] = 1.0
    s = profile.scale(r)
    ds = profile.scale_derivative(r)

    normals = np.zeros((len(points), naxes))
    slack = np.zeros(len(points))

    if isinstance(cs, Interval):
        y = points[:, ys_idx[0]]
        phi_low = -y
        phi_high = y - s * cs.length
        use_high = np.abs(phi_high) <= np.abs(phi_low)
        # low wall: nu = -e_y, slack exactly 0
        normals[~use_high, ys_idx[0]] = -1.0
        # high wall: grad Phi = (-s' L xhat, 1)
        gx = -ds[use_high] * cs.length
        nrm = np.sqrt(1.0 + gx ** 2)
        normals[use_high] = (xhat[use_high] * (gx / nrm)[:, None])
        normals[use_high, ys_idx[0]] = 1.0 / nrm
        slack[use_high] = ds[use_high] * cs.length * r[use_high] / nrm
    elif isinstance(cs, Disk):
        if len(ys_idx) == 1:
            rho = points[:, ys_idx[0]]
            yhat = np.zeros((len(points), naxes))
            yhat[:, ys_idx[0]] = 1.0
        else:
            rho = np.sqrt(points[:, ys_idx[0]] ** 2 + points[:, ys_idx[1]] ** 2)
            yhat = np.zeros((len(points), naxes))
            ok = rho > 0
            for d in ys_idx:
                yhat[ok, d] = points[ok, d] / rho[ok]
        gx = -ds * cs.radius
        nrm = np.sqrt(1.0 + gx ** 2)
        normals = xhat * (gx / nrm)[:, None] + yhat / nrm[:, None]
        slack = ds * cs.radius * r / nrm
    else:
        raise NotImplementedError("analytic normals require an interval or disk cross-section")
    return normals, slack


def build_domain(profile: Profile, spec: GridSpec) -> WaveguideDomain:
    """Rasterize a profile onto the grid and sample its analytic boundary.

    The active mask is the profile indicator at cell centers.  Boundary
    normals are evaluated on the analytic wall (bisection along the segment
    joining the two cell centers), never on the staircase, because the
    repulsivity audit is a sign condition on the true geometry.
    """
    smax = profile.max_scale()
    cs = profile.cross_section
    if cs.required_extent(smax) > spec.extent_y + 1e-12:
        raise ProfileOutOfBounds(
            f"cross-section needs extent_y >= {cs.required_extent(smax):g}")
    pert = profile.perturbation_radius()
    if pert is not None and pert > 0 and spec.extent_x < 8.0 * pert - 1e-12:
        raise ProfileOutOfBounds(
            f"extent_x must be >= 8 * perturbation radius = {8 * pert:g}")

    axes = _make_axes(spec, profile)
    mesh = np.meshgrid(*[ax.coords for ax in axes], indexing="ij", sparse=True)
    active = _indicator(profile, spec, axes, mesh)
    active = np.broadcast_to(active, tuple(ax.size for ax in axes)).copy()
    if not active.any():
        raise EmptyDomain("profile indicator is empty on this grid")
    labels, ncomp = ndimage.label(active)
    if ncomp != 1:
        raise InvalidDomain(f"active set has {ncomp} connected components")

    # physical boundary faces: active cell with inactive (or out-of-grid)
    # neighbor where the analytic indicator actually changes sign
    cell_idx = -np.ones(active.shape, dtype=np.int64)
    acells = np.argwhere(active)
    cell_idx[tuple(acells.T)] = np.arange(len(acells))

    b_cell, b_axis, b_dir, seg_a, seg_b = [], [], [], [], []
    truncation = 0
    naxes = len(axes)
    for d in range(naxes):
        for direction in (+1, -1):
            shifted = np.roll(active, -direction, axis=d)
            sl = [slice(None)] * naxes
            sl[d] = -1 if direction == 1 else 0
            shifted[tuple(sl)] = False          # out-of-grid counts as inactive
            frontier = active & ~shifted
            if axes[d].radial and direction == -1:
                # the r = 0 face is the coordinate axis, not a wall
                inner = [slice(None)] * naxes
                inner[d] = 0
                frontier[tuple(inner)] = False
            cs_cells = np.argwhere(frontier)
            if len(cs_cells) == 0:
                continue
            pa = np.stack([axes[e].coords[cs_cells[:, e]] for e in range(naxes)], axis=1)
            pb = pa.copy()
            pb[:, d] += direction * axes[d].h
            # classify: physical wall iff the indicator is false at the
            # neighbor center; otherwise it is the artificial truncation wall
            ind_b = _indicator(profile, spec, axes,
                               [pb[:, e] for e in range(naxes)])
            phys = ~ind_b
            truncation += int(np.sum(~phys))
            if not phys.any():
                continue
            b_cell.append(cell_idx[tuple(cs_cells[phys].T)])
            b_axis.append(np.full(phys.sum(), d))
            b_dir.append(np.full(phys.sum(), direction))
            seg_a.append(pa[phys])
            seg_b.append(pb[phys])

    if b_cell:
        cell = np.concatenate(b_cell)
        axd = np.concatenate(b_axis)
        dird = np.concatenate(b_dir)
        pa = np.concatenate(seg_a)
        pb = np.concatenate(seg_b)
        # bisection for the wall crossing along each segment
        lo = np.zeros(len(pa))
        hi = np.ones(len(pa))
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            pm = pa + mid[:, None] * (pb - pa)
            ins = _indicator(profile, spec, axes, [pm[:, e] for e in range(naxes)])
            lo = np.where(ins, mid, lo)
            hi = np.where(ins, hi, mid)
        pm = pa + (0.5 * (lo + hi))[:, None] * (pb - pa)
        normal, slack = _wall_slack_and_normal(profile, spec, axes, pm, axd, dird)
        if spec.mode == GridMode.FULL_TENSOR:
            pr = np.sqrt(sum(pm[:, e] ** 2 for e in range(naxes)
                             if axes[e].block == "x"))
        else:
            pr = pm[:, 0]
        boundary = BoundaryFaces(cell, axd, dird, pr, normal, slack)
    else:
        boundary = BoundaryFaces(np.zeros(0, int), np.zeros(0, int),
                                 np.zeros(0, int), np.zeros(0),
                                 np.zeros((0, naxes)), np.zeros(0))

    return WaveguideDomain(spec, profile, axes, active, boundary, truncation)


# ---------------------------------------------------------------------------
# audits
# ---------------------------------------------------------------------------

def audit_repulsivity(domain: WaveguideDomain) -> RepulsivityReport:
    """Sign test -nu.(x,0) >= 0 over all physical boundary samples."""
    slack = domain.boundary.slack
    if len(slack) == 0:
        return RepulsivityReport(0.0, 0.0, True, 0)
    min_slack = float(np.min(slack))
    violating = float(np.mean(slack < -TOL_GEOM))
    return RepulsivityReport(min_slack, violating, min_slack >= -TOL_GEOM, len(slack))


def audit_flat_tail(domain: WaveguideDomain) -> FlatTailReport:
    """Smallest M past which the mask and the analytic scale are the tail's.

    Both conditions are required: the rasterized mask stabilizes long before
    a slowly varying profile does, so mask agreement alone would certify
    spurious flat tails.
    """
    spec, profile, axes = domain.spec, domain.profile, domain.axes
    r_probe = np.arange(0.0, spec.extent_x + spec.h_x / 4, spec.h_x / 4)[1:]
    s_probe = profile.scale(r_probe)
    s_tail = s_probe[-1]
    differs = np.abs(s_probe - s_tail) > _SCALE_EQ_RTOL * max(abs(s_tail), 1.0)
    m_scale = float(r_probe[differs].max()) if differs.any() else 0.0

    # mask disagreement radius against the tail product mask
    if spec.mode == GridMode.FULL_TENSOR:
        tail_profile = FlatProduct(_scaled_cs(profile.cross_section, s_tail))
        mesh = np.meshgrid(*[ax.coords for ax in axes], indexing="ij", sparse=True)
        tail_active = np.broadcast_to(
            _indicator(tail_profile, spec, axes, mesh), domain.shape)
        disagree = domain.active != tail_active
        m_mask = float(domain_r_max(domain, disagree))
        ymesh = np.meshgrid(*[axes[d].coords for d in domain.y_axes],
                            indexing="ij", sparse=True)
        tail_section = np.broadcast_to(
            profile.cross_section.contains(ymesh, s_tail),
            tuple(axes[d].size for d in domain.y_axes)).copy()
    else:
        tail_row = domain.active[-1]
        disagree_rows = np.any(domain.active != tail_row[None, ...],
                               axis=tuple(range(1, domain.active.ndim)))
        r = axes[0].coords
        m_mask = float(r[disagree_rows].max()) if disagree_rows.any() else 0.0
        tail_section = tail_row

    M = max(m_scale, m_mask)
    if M >= spec.extent_x / 2:
        raise NoFlatTail(f"profile still varies at |x| = {M:g} >= extent_x/2")
    return FlatTailReport(M, tail_section, True)


def domain_r_max(domain: WaveguideDomain, grid_mask: np.ndarray) -> float:
    if not grid_mask.any():
        return 0.0
    idx = np.argwhere(grid_mask)
    if domain.spec.mode == GridMode.FULL_TENSOR:
        r2 = np.zeros(len(idx))
        for d in domain.x_axes:
            r2 += domain.axes[d].coords[idx[:, d]] ** 2
        return float(np.sqrt(r2).max())
    return float(domain.axes[0].coords[idx[:, 0]].max())


def _scaled_cs(cs: CrossSection, s: float) -> CrossSection:
    if isinstance(cs, Interval):
        return Interval(cs.length * s)
    if isinstance(cs, Disk):
        return Disk(cs.radius * s)
    raise NotImplementedError
