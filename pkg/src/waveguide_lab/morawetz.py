"""Closed-form Morawetz multiplier weights and their derivative ladder.

Two radial weight families drive the uniform resolvent estimate: the
positive-energy pair (psi with linear growth, phi = 1/R inside the ball)
and the nonpositive-energy weight built from the bounded slope alpha with
sup |grad psi| = 1/n.  All Laplacians and bilaplacians below are the exact
derivatives of the stated psi branches; evaluation exactly at the gluing
radius r = R is routed to the inside branch by convention.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class WeightEval:
    """Per-radius values of one weight family."""
    kind: str                  # 'positive_lambda' | 'nonpositive_lambda'
    R: float
    n: int
    radii: np.ndarray
    psi: np.ndarray
    phi: np.ndarray
    grad_psi: np.ndarray       # radial derivative
    lap_psi: np.ndarray
    bilap_psi: np.ndarray
    d2_radial: np.ndarray      # D^2 psi quadratic form, radial coefficient
    d2_tangential: np.ndarray  # and tangential coefficient grad psi / r
    grad_sup: float            # analytic sup of |grad psi|
    x_lap_minus_phi_sup: float # analytic sup of | |x| (lap psi - phi) |


def _check_args(kind, R, radii, n):
    if kind not in ("positive_lambda", "nonpositive_lambda"):
        raise ValueError(f"unknown weight kind {kind!r}")
    if R <= 0:
        raise ValueError("R must be positive")
    if n < 3:
        raise ValueError("weights are defined for n >= 3")
    radii = np.asarray(radii, dtype=float)
    if np.any(radii <= 0):
        raise ValueError("radii must be positive")
    return radii


def alpha_slope(r: np.ndarray, R: float, n: int) -> np.ndarray:
    """Radial slope of the nonpositive-energy weight; sup = 1/n at infinity."""
    r = np.asarray(r, dtype=float)
    inner = r <= R
    out = np.empty_like(r)
    ri = r[inner]
    out[inner] = (1.0 / (2 * n) + ri / (2 * n * R)
                  - ri ** 3 / (2 * n * (n + 2) * R ** 3))
    ro = r[~inner]
    out[~inner] = 1.0 / n - R ** (n - 1) / (2 * n * (n + 2) * ro ** (n - 1))
    return out


def _psi_nonpositive(r: np.ndarray, R: float, n: int) -> np.ndarray:
    """Integral of alpha from 0, branch-wise in closed form (n >= 3)."""
    r = np.asarray(r, dtype=float)
    inner = r <= R
    out = np.empty_like(r)
    ri = np.minimum(r, R)
    psi_in = (ri / (2 * n) + ri ** 2 / (4 * n * R)
              - ri ** 4 / (8 * n * (n + 2) * R ** 3))
    out[inner] = psi_in[inner]
    ro = r[~inner]
    base = R / (2 * n) + R / (4 * n) - R / (8 * n * (n + 2))
    c = 1.0 / (2 * n * (n + 2))
    tail = (ro - R) / n - c * R ** (n - 1) * (R ** (2 - n) - ro ** (2 - n)) / (n - 2)
    out[~inner] = base + tail
    return out


def morawetz_weights(kind: str, R: float, radii, n: int = 3) -> WeightEval:
    """Evaluate one weight family on sample radii.

    kind 'positive_lambda': psi = |x| glued to R/2 + |x|^2/(2R), phi = (1/R)
    inside the ball; sup |grad psi| = 1.  kind 'nonpositive_lambda': psi
    integrates the bounded slope alpha, phi = 0; sup |grad psi| = 1/n and
    -lap^2 psi >= R^{-3} inside the ball for every n >= 3.
    """
    radii = _check_args(kind, R, radii, n)
    mu = (n - 1) * (n - 3)
    inner = radii <= R          # r = R routes to the inside branch
    outer = ~inner
    ri, ro = radii[inner], radii[outer]

    if kind == "positive_lambda":
        psi = np.where(inner, R / 2.0 + radii ** 2 / (2 * R), radii)
        phi = np.where(inner, 1.0 / R, 0.0)
        grad = np.where(inner, radii / R, 1.0)
        lap = np.empty_like(radii)
        lap[inner] = n / R
        lap[outer] = (n - 1) / ro
        bilap = np.zeros_like(radii)
        bilap[outer] = -mu / ro ** 3
        d2r = np.where(inner, 1.0 / R, 0.0)
        d2t = np.where(inner, 1.0 / R, 1.0 / radii)
        grad_sup = 1.0
        xlp_sup = float(n - 1)       # |x| (lap psi - phi) peaks at n - 1
    else:
        psi = _psi_nonpositive(radii, R, n)
        phi = np.zeros_like(radii)
        grad = alpha_slope(radii, R, n)
        lap = np.empty_like(radii)
        lap[inner] = 1.0 / (2 * R) + (n - 1) / (2 * n * ri) - ri ** 2 / (2 * n * R ** 3)
        lap[outer] = (n - 1) / (n * ro)
        bilap = np.empty_like(radii)
        bilap[inner] = -1.0 / R ** 3 - mu / (2 * n * ri ** 3)
        bilap[outer] = -mu / (n * ro ** 3)
        d2r = np.empty_like(radii)   # alpha'
        d2r[inner] = 1.0 / (2 * n * R) - 3.0 * ri ** 2 / (2 * n * (n + 2) * R ** 3)
        d2r[outer] = (n - 1) * R ** (n - 1) / (2 * n * (n + 2) * ro ** n)
        d2t = grad / radii
        grad_sup = 1.0 / n            # approached as r -> infinity
        xlp_sup = 1.0 - 1.0 / n       # attained at r = R

    return WeightEval(kind, float(R), int(n), radii, psi, phi, grad, lap,
                      bilap, d2r, d2t, grad_sup, xlp_sup)
