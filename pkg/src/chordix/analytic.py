"""Closed forms and quadratures for spheres and sphere pairs.

Correlation functions here are unnormalized: the self-covariogram at zero
shift equals the volume.
"""

from __future__ import annotations

import math
import warnings
from typing import NamedTuple

import numpy as np
from scipy import integrate

from .errors import QuadratureFailure

EPSREL = 1e-8


def sphere_volume(r: float) -> float:
    return 4.0 / 3.0 * math.pi * r ** 3


def lens_volume(r1: float, r2: float, d: float) -> float:
    """Overlap volume of two balls with center distance d."""
    d = abs(d)
    if d >= r1 + r2:
        return 0.0
    if d <= abs(r1 - r2):
        return sphere_volume(min(r1, r2))
    return (math.pi * (r1 + r2 - d) ** 2
            * (d * d + 2 * d * (r1 + r2) - 3 * (r1 - r2) ** 2) / (12 * d))


def sphere_covariogram(R: float, d: float) -> float:
    if d < 0:
        raise ValueError("shift must be >= 0")
    if d >= 2 * R:
        return 0.0
    return math.pi / 12.0 * (4 * R + d) * (2 * R - d) ** 2


def _quad(f, a, b, points=None, abs_floor=0.0):
    pts = None
    if points:
        pts = sorted({p for p in points if a < p < b})
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, _ = integrate.quad(f, a, b, points=pts or None, epsrel=EPSREL,
                                    epsabs=abs_floor, limit=200)
        except integrate.IntegrationWarning as exc:
            raise QuadratureFailure(str(exc)) from exc
    return val


def pair_cross_gamma(r1: float, r2: float, D: float, l: float) -> float:
    """Spherical average over shift directions of the overlap of ball 1 with
    ball 2 translated by a vector of length l; ball centers D apart."""
    if l < 0:
        raise ValueError("l must be >= 0")
    if D == 0.0:
        return lens_volume(r1, r2, l)
    if l == 0.0:
        return lens_volume(r1, r2, D)
    lo, hi = abs(D - l), D + l
    top = r1 + r2
    if lo >= top:
        return 0.0
    hi_eff = min(hi, top)
    floor = 1e-14 * sphere_volume(r1) * sphere_volume(r2)
    val = _quad(lambda s: lens_volume(r1, r2, s) * s, lo, hi_eff,
                points=[abs(r1 - r2)], abs_floor=floor)
    return val / (2.0 * D * l)


def pair_gamma_support(r1: float, r2: float, D: float) -> tuple[float, float]:
    return max(0.0, D - r1 - r2), D + r1 + r2


def pair_gamma_kinks(r1: float, r2: float, D: float) -> list[float]:
    t, s = r1 + r2, abs(r1 - r2)
    return [p for p in (abs(D - t), abs(D - s), D + s, D + t) if p > 0]


class SphereDensities(NamedTuple):
    eta: float
    iota: float
    mu: float
    gamma_dd: float


def sphere_signed_densities(R: float, l: float) -> SphereDensities:
    """Distance, radii and chord densities of a ball and the unnormalized
    second derivative of its covariogram.  Supported on [0, 2R)."""
    if l < 0:
        raise ValueError("l must be >= 0")
    if l >= 2 * R:
        return SphereDensities(0.0, 0.0, 0.0, 0.0)
    gbar = 1 - 3 * l / (4 * R) + l ** 3 / (16 * R ** 3)
    return SphereDensities(
        eta=3 * l * l / R ** 3 * gbar,
        iota=3 / (4 * R) - 3 * l * l / (16 * R ** 3),
        mu=l / (2 * R * R),
        gamma_dd=sphere_volume(R) * 3 * l / (8 * R ** 3),
    )


def sphere_cdfs(R: float, l) -> dict[str, np.ndarray]:
    """Antiderivatives from 0 of the three sphere densities, clipped to [0, 2R]."""
    x = np.clip(np.asarray(l, dtype=float), 0.0, 2 * R) / R
    return {
        "eta": x ** 3 - 9 * x ** 4 / 16 + x ** 6 / 32,
        "iota": 3 * x / 4 - x ** 3 / 16,
        "mu": x * x / 4,
    }


def sphere_bin_means(R: float, edges: np.ndarray) -> dict[str, np.ndarray]:
    """Exact bin averages of the sphere densities over the given edges."""
    cdf = sphere_cdfs(R, edges)
    w = np.diff(edges)
    return {k: np.diff(v) / w for k, v in cdf.items()}


def gamma_bin_moment(gamma, a: float, b: float, kinks=()) -> float:
    """Integral of 4 pi l^2 gamma(l) over [a, b]."""
    return _quad(lambda l: 4 * math.pi * l * l * gamma(l), a, b, points=list(kinks))
