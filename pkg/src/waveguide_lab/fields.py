"""Complex scalar fields on the active cells, quadrature, and weights."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import GridMode, WaveguideDomain


@dataclass
class GridFunction:
    """Complex field sampled at active cell centers.

    All inner products use the domain quadrature weights; numpy's pairwise
    reductions keep them reproducible for a fixed cell order.
    """
    domain: WaveguideDomain
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != (self.domain.n_cells,):
            raise ValueError("values must be one entry per active cell")

    @classmethod
    def zeros(cls, domain: WaveguideDomain, dtype=complex) -> "GridFunction":
        return cls(domain, np.zeros(domain.n_cells, dtype=dtype))

    @classmethod
    def from_callable(cls, domain: WaveguideDomain, fn) -> "GridFunction":
        """Sample fn(r, *y_coords) at cell centers (r = |x|)."""
        ys = [domain.axes[d].coords[domain.cells[:, d]] for d in domain.y_axes]
        return cls(domain, np.asarray(fn(domain.r_cells, *ys)))

    def copy(self) -> "GridFunction":
        return GridFunction(self.domain, self.values.copy())

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(self.domain.weights * np.abs(self.values) ** 2)))

    def inner(self, other: "GridFunction") -> complex:
        """Quadrature pairing sum w * self * conj(other)."""
        return complex(np.sum(self.domain.weights * self.values * np.conj(other.values)))

    def scaled(self, c) -> "GridFunction":
        return GridFunction(self.domain, c * self.values)

    def __add__(self, other):
        return GridFunction(self.domain, self.values + other.values)

    def __sub__(self, other):
        return GridFunction(self.domain, self.values - other.values)


def bracket_weight(domain: WaveguideDomain, s: float) -> np.ndarray:
    """<x>^s = (1 + |x|^2)^{s/2} at cell centers."""
    return (1.0 + domain.r_cells ** 2) ** (s / 2.0)


def bracket_r_weight(domain: WaveguideDomain, s: float, R: float) -> np.ndarray:
    """<x>_R^s = (R + |x|^2 / R)^{s/2} at cell centers."""
    if R <= 0:
        raise ValueError("R must be positive")
    return (R + domain.r_cells ** 2 / R) ** (s / 2.0)


def weighted_l2(f: GridFunction, pointwise: np.ndarray) -> float:
    return float(np.sqrt(np.sum(f.domain.weights * np.abs(pointwise * f.values) ** 2)))


def gradient_x(f: GridFunction) -> np.ndarray:
    """|grad_x f| per cell: centered differences, one-sided at mask edges.

    This is a measurement stencil, not part of any exact identity; the O(h)
    closure at staircase boundaries is covered by refinement tests.
    """
    dom = f.domain
    grid = dom.grid_view(f.values.astype(complex))
    act = dom.active
    total = np.zeros(dom.shape)
    for d in dom.x_axes:
        h = dom.axes[d].h
        up = np.roll(grid, -1, axis=d)
        dn = np.roll(grid, 1, axis=d)
        aup = np.roll(act, -1, axis=d)
        adn = np.roll(act, 1, axis=d)
        sl_hi = [slice(None)] * grid.ndim
        sl_hi[d] = -1
        sl_lo = [slice(None)] * grid.ndim
        sl_lo[d] = 0
        aup[tuple(sl_hi)] = False
        adn[tuple(sl_lo)] = False
        g = np.zeros_like(grid)
        both = aup & adn
        g[both] = (up[both] - dn[both]) / (2 * h)
        only_up = aup & ~adn
        g[only_up] = (up[only_up] - grid[only_up]) / h
        only_dn = adn & ~aup
        g[only_dn] = (grid[only_dn] - dn[only_dn]) / h
        total += np.abs(g) ** 2
    # on x-radial grids the single term is |df/dr|, which equals |grad_x f|
    return dom.gather(np.sqrt(total))


def random_field(domain: WaveguideDomain, rng: np.random.Generator) -> GridFunction:
    v = rng.standard_normal(domain.n_cells) + 1j * rng.standard_normal(domain.n_cells)
    return GridFunction(domain, v)


def bump_source(domain: WaveguideDomain, center_r: float, width: float,
                y_coeffs=None, momentum: float = 0.0) -> GridFunction:
    """Compactly supported radial bump times a low-mode y profile."""
    r = domain.r_cells
    prof = np.exp(-(((r - center_r) / width) ** 2)).astype(complex)
    prof[np.abs(r - center_r) > 4 * width] = 0.0
    if momentum:
        prof = prof * np.exp(1j * momentum * r)
    vals = prof
    if y_coeffs is not None:
        dom = domain
        if dom.spec.mode == GridMode.RADIAL_X_RADIAL_Y:
            rho = dom.axes[1].coords[dom.cells[:, 1]]
            wall = dom.profile.scale(r) * dom.profile.cross_section.radius
            yprof = sum(c * np.cos((k + 0.5) * np.pi * rho / wall)
                        for k, c in enumerate(y_coeffs))
        else:
            y = dom.axes[dom.y_axes[0]].coords[dom.cells[:, dom.y_axes[0]]]
            ylen = dom.axes[dom.y_axes[0]].faces[-1]
            yprof = sum(c * np.sin((k + 1) * np.pi * y / ylen)
                        for k, c in enumerate(y_coeffs))
        vals = vals * yprof
    return GridFunction(domain, vals)


FIELD_MAGIC = b"WGF1"


def save_field(f: GridFunction, path) -> None:
    """Binary field snapshot: magic, little-endian u64 count, complex128."""
    vals = np.ascontiguousarray(f.values, dtype=np.complex128)
    with open(path, "wb") as fh:
        fh.write(FIELD_MAGIC)
        fh.write(np.uint64(len(vals)).tobytes())
        fh.write(vals.tobytes())


def load_field(domain: WaveguideDomain, path) -> GridFunction:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != FIELD_MAGIC:
            raise ValueError("not a field snapshot file")
        (count,) = np.frombuffer(fh.read(8), dtype=np.uint64)
        vals = np.frombuffer(fh.read(), dtype=np.complex128)
    if int(count) != domain.n_cells or len(vals) != int(count):
        raise ValueError("snapshot does not match the domain")
    return GridFunction(domain, vals.copy())
