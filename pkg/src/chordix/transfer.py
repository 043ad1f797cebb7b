"""Six routes to the transfer integral J_ij = int_Bi int_Bj phi(R)/(4 pi R^2).

direct   V_i V_j * mean of phi(R)/(4 pi R^2) over uniform point pairs
eta      the same weight integrated against the binned distance matrix
gamma    quadrature of gamma_ij(l) phi(l) with the sphere-pair oracle
radii    V_i * mean over rays from B_i of the signed sum of phi1 at crossings
chords   (pi Rb^2 / 2) * mean over lines of the quadruplet sums of phi2
lambda   (3 V_i V_j / pi) * sum of lambda_ij(x)/x^4 phi2(x) over bins

The radii and chords routes report both the streaming estimate (exact
antiderivatives at each event) and the binned one (antiderivatives at bin
centers) from the same events.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import analytic
from . import geometry as geo
from .errors import (BinningWarning, OverlappingScene, SingularDiagonal,
                     UnsupportedGeometry, ZeroMass)
from .estimators import DEFAULT_BINS, SKIP_BINS, line_sampler, quadruplets, radii_deposits
from .kernels import Kernel
from .scene import DISJOINT, Scene
from .signed_hist import MatrixDensity, SignedHistogram
from .streams import RandomStream, run_chunks, uniform_directions

ROUTES = ("direct", "eta", "gamma", "radii", "chords", "lambda")


@dataclass
class TransferResult:
    route: str
    value: float
    stderr: float
    n_samples: int = 0
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.value = float(self.value)
        self.stderr = float(self.stderr)
        if not math.isfinite(self.value) or self.stderr < 0:
            raise ValueError("transfer result must be finite with stderr >= 0")

    def as_dict(self) -> dict:
        return {"route": self.route, "value": self.value, "stderr": self.stderr,
                "n_samples": self.n_samples, "wall_time": self.wall_time, **self.extra}


class _Moments:
    """Running sum and sum of squares of per-event values, merged in chunk order."""

    def __init__(self, values: np.ndarray | None = None):
        self.n = 0 if values is None else len(values)
        self.s = 0.0 if values is None else float(np.sum(values))
        self.q = 0.0 if values is None else float(np.sum(values * values))

    def __iadd__(self, other):
        self.n += other.n
        self.s += other.s
        self.q += other.q
        return self

    def mean_err(self) -> tuple[float, float]:
        mean = self.s / self.n
        var = max(self.q / self.n - mean * mean, 0.0)
        return mean, math.sqrt(var / max(self.n - 1, 1))


def _sum_moments(parts) -> _Moments:
    tot = _Moments()
    for p in parts:
        tot += p
    return tot


def _fold(a, b):
    """Merge (moments, histogram) chunk results."""
    mom, hist = a
    mom += b[0]
    hist.merge(b[1])
    return mom, hist


def _check_pair(scene: Scene, i: int, j: int, need_disjoint: bool):
    if need_disjoint and i != j and scene.pair_status[i, j] != DISJOINT:
        raise OverlappingScene(f"bodies {i} and {j} are not disjoint")


# --------------------------------------------------------------------------
# direct and nonuniform


def _pair_values(scene, i, j, kernel, n, rng, threads, weighted):
    si, sj = scene.shapes[i], scene.shapes[j]
    ri, rj = scene.bodies[i].density, scene.bodies[j].density

    def work(gen, m):
        p = geo.sample_points(si, gen, m)
        q = geo.sample_points(sj, gen, m)
        val = kernel.transfer_weight(np.linalg.norm(p - q, axis=1))
        if weighted:
            w = ri(p) * rj(q)
            return _Moments(w * val), _Moments(w)
        return _Moments(val), None

    parts = run_chunks(work, n, rng, threads)
    ball = _sum_moments([b for _, b in parts]) if weighted else None
    return _sum_moments([a for a, _ in parts]), ball


def transfer_direct(scene: Scene, i: int, j: int, kernel: Kernel, n: int,
                    rng: RandomStream, threads: int | None = None) -> TransferResult:
    if i == j and kernel.singular_at_zero:
        raise SingularDiagonal(f"kernel {kernel.spec} has phi(0) != 0; diagonal variance is unbounded")
    t0 = time.perf_counter()
    mom, _ = _pair_values(scene, i, j, kernel, n, rng, threads, weighted=False)
    mean, err = mom.mean_err()
    vv = scene.volumes[i] * scene.volumes[j]
    return TransferResult("direct", vv * mean, vv * err, n, time.perf_counter() - t0)


def transfer_nonuniform(scene: Scene, i: int, j: int, kernel: Kernel, n: int,
                        rng: RandomStream, threads: int | None = None) -> TransferResult:
    """Uniform point pairs weighted by rho_i(r) rho_j(r').

    The same pairs give the ball-kernel integral M_i M_j, from which the
    lambda-dot constant 3 M_i M_j / pi is estimated and compared with the
    masses of the scene."""
    masses = scene.masses
    if masses[i] <= 0 or masses[j] <= 0:
        raise ZeroMass("bodies must have positive mass")
    if i == j and kernel.singular_at_zero:
        raise SingularDiagonal(f"kernel {kernel.spec} has phi(0) != 0")
    t0 = time.perf_counter()
    mom, ball = _pair_values(scene, i, j, kernel, n, rng, threads, weighted=True)
    vv = scene.volumes[i] * scene.volumes[j]
    mean, err = mom.mean_err()
    bmean, berr = ball.mean_err()
    c_est, c_err = 3.0 / math.pi * vv * bmean, 3.0 / math.pi * vv * berr
    c_exp = 3.0 / math.pi * masses[i] * masses[j]
    mi_err, mj_err = scene.measures[i].mass_err, scene.measures[j].mass_err
    c_exp_err = 3.0 / math.pi * math.hypot(masses[j] * mi_err, masses[i] * mj_err)
    denom = math.hypot(c_err, c_exp_err)
    extra = {
        "c_lambda_estimate": c_est, "c_lambda_stderr": c_err,
        "c_lambda_expected": c_exp, "c_lambda_expected_stderr": c_exp_err,
        "c_lambda_z": (c_est - c_exp) / denom if denom > 0 else 0.0,
    }
    return TransferResult("nonuniform", vv * mean, vv * err, n, time.perf_counter() - t0, extra)


# --------------------------------------------------------------------------
# binned routes


def _binned_sum(h: SignedHistogram, f: np.ndarray, skip: int = 0) -> tuple[float, float]:
    f = np.array(f, dtype=float)
    f[:skip] = 0.0
    return h.functional(f)


def transfer_via_eta(scene: Scene, i: int, j: int, kernel: Kernel,
                     eta_matrix: MatrixDensity) -> TransferResult:
    """V_union^2 * sum of eta-check_ij(l) phi(l)/(4 pi l^2) over bins >= 2.

    The skipped bins' contribution is reported as ``skipped``; it bounds the
    truncation bias (zero for pairs separated by more than two bins)."""
    t0 = time.perf_counter()
    h = eta_matrix[i, j]
    c = h.centers
    f = kernel.transfer_weight(c)
    if not np.any(h.sums):
        warnings.warn("empty distance cell; pair lies beyond l_max or was never sampled",
                      BinningWarning, stacklevel=2)
    v2 = scene.v_union ** 2
    val, err = _binned_sum(h, f, SKIP_BINS)
    skipped = float(np.sum(h.weights[:SKIP_BINS] * f[:SKIP_BINS]) * h.width)
    extra = {"skipped": v2 * skipped, "overflow_weight": h.overflow_weight}
    return TransferResult("eta", v2 * val, v2 * err, h.n_events, time.perf_counter() - t0, extra)


def transfer_via_lambda(scene: Scene, i: int, j: int, kernel: Kernel,
                        lambda_matrix: MatrixDensity) -> TransferResult:
    t0 = time.perf_counter()
    h = lambda_matrix[i, j]
    x = h.centers
    c_lambda = 3.0 * scene.volumes[i] * scene.volumes[j] / math.pi
    val, err = _binned_sum(h, kernel.phi2(x) / x ** 4)
    return TransferResult("lambda", c_lambda * val, c_lambda * err, h.n_events,
                          time.perf_counter() - t0, {"c_lambda": c_lambda})


def chords_binned(scene: Scene, i: int, j: int, kernel: Kernel,
                  mu_matrix: MatrixDensity) -> tuple[float, float]:
    """(S_union/4) * sum of mu-check_ij(x) phi2(x) over bins."""
    h = mu_matrix[i, j]
    val, err = _binned_sum(h, kernel.phi2(h.centers))
    q = scene.s_union / 4.0
    return q * val, q * err


# --------------------------------------------------------------------------
# gamma quadrature


def _sphere_pair(scene: Scene, i: int, j: int):
    bi, bj = scene.bodies[i], scene.bodies[j]
    for b in (bi, bj):
        if not isinstance(b.shape, geo.Sphere):
            raise UnsupportedGeometry("gamma route needs sphere bodies")
        if not isinstance(b.density, geo.ConstantDensity):
            raise UnsupportedGeometry("gamma route needs constant densities")
    return bi, bj


def transfer_via_gamma(scene: Scene, i: int, j: int, kernel: Kernel) -> TransferResult:
    """Quadrature of gamma_ij(l) phi(l); the reference for every other route."""
    t0 = time.perf_counter()
    bi, bj = _sphere_pair(scene, i, j)
    r1, r2 = bi.shape.radius, bj.shape.radius
    rho = bi.density.value * bj.density.value
    if i == j:
        lo, hi, kinks = 0.0, 2 * r1, []
        gamma = lambda l: analytic.sphere_covariogram(r1, l)  # noqa: E731
    else:
        D = float(np.linalg.norm(bi.shape.center - bj.shape.center))
        lo, hi = analytic.pair_gamma_support(r1, r2, D)
        kinks = analytic.pair_gamma_kinks(r1, r2, D)
        gamma = lambda l: analytic.pair_cross_gamma(r1, r2, D, l)  # noqa: E731
    floor = 1e-14 * analytic.sphere_volume(r1) * analytic.sphere_volume(r2)
    val = analytic._quad(lambda l: gamma(l) * float(kernel.phi(np.array([l]))[0]),
                         lo, hi, points=kinks, abs_floor=floor) if hi > lo else 0.0
    return TransferResult("gamma", rho * val, 0.0, 0, time.perf_counter() - t0)


# --------------------------------------------------------------------------
# streaming radii and chords


def _radii_work(scene, i, j, kernel, n, rng, threads, n_bins, l_max):
    si, sj = scene.shapes[i], scene.shapes[j]

    def work(gen, m):
        origins = geo.sample_points(si, gen, m)
        dirs = uniform_directions(gen, m)
        iv = geo.ray_intervals_batch(sj, origins, dirs)
        vals, signs, ev = radii_deposits(iv, np.full(m, i == j))
        per_ray = np.bincount(ev, weights=signs * kernel.phi1(vals), minlength=m)
        h = SignedHistogram(l_max, n_bins, 1.0 / n)
        h.accumulate(vals, signs, ev, m)
        return _Moments(per_ray), h

    return run_chunks(work, n, rng, threads, reduce=_fold)


def transfer_via_radii(scene: Scene, i: int, j: int, kernel: Kernel, n_rays: int,
                       rng: RandomStream, bins: int | None = None, l_max: float | None = None,
                       threads: int | None = None) -> TransferResult:
    _check_pair(scene, i, j, True)
    t0 = time.perf_counter()
    n_bins = bins or DEFAULT_BINS
    l_max = l_max or scene.default_l_max()
    mom, hist = _radii_work(scene, i, j, kernel, n_rays, rng, threads, n_bins, l_max)
    mean, err = mom.mean_err()
    vi = scene.volumes[i]
    hv, _ = _binned_sum(hist, kernel.phi1(hist.centers))
    hist_value = vi * hv
    extra = {"hist_value": hist_value, "hist_agrees": abs(hist_value - vi * mean) <= 3 * vi * err,
             "overflow_weight": hist.overflow_weight}
    return TransferResult("radii", vi * mean, vi * err, n_rays, time.perf_counter() - t0, extra)


def transfer_via_chords(scene: Scene, i: int, j: int, kernel: Kernel, n_lines: int,
                        rng: RandomStream, bins: int | None = None, l_max: float | None = None,
                        threads: int | None = None) -> TransferResult:
    _check_pair(scene, i, j, True)
    t0 = time.perf_counter()
    n_bins = bins or DEFAULT_BINS
    l_max = l_max or scene.default_l_max()
    shapes = scene.shapes
    center, rb = geo.enclosing_sphere([shapes[i], shapes[j]])
    measure = 0.5 * math.pi * rb * rb

    def work(gen, m):
        feet, dirs = line_sampler(center, rb)(gen, m)
        ivi = geo.line_intervals_batch(shapes[i], feet, dirs)
        ivj = ivi if i == j else geo.line_intervals_batch(shapes[j], feet, dirs)
        lengths, signs, ev, _ = quadruplets(ivi, ivj, i == j)
        per_line = np.bincount(ev, weights=signs * kernel.phi2(lengths), minlength=m)
        h = SignedHistogram(l_max, n_bins, measure / n_lines)
        h.accumulate(lengths, signs, ev, m)
        return _Moments(per_line), h

    mom, hist = run_chunks(work, n_lines, rng, threads, reduce=_fold)
    mean, err = mom.mean_err()
    hv, _ = _binned_sum(hist, kernel.phi2(hist.centers))
    extra = {"hist_value": hv, "hist_agrees": abs(hv - measure * mean) <= 3 * measure * err,
             "rb": rb, "overflow_weight": hist.overflow_weight}
    return TransferResult("chords", measure * mean, measure * err, n_lines,
                          time.perf_counter() - t0, extra)


def chord_combination(terms, kernel: Kernel, n_lines: int, rng: RandomStream,
                      center, rb: float, threads: int | None = None) -> tuple[float, float]:
    """sum_t c_t J(a_t, b_t) on one shared set of lines.

    ``terms`` holds ``(coeff, shape_a, shape_b)``; a term whose two shapes are
    the same object is a diagonal integral.  The error comes from the per-line
    combined value, so correlations between terms are accounted for."""
    measure = 0.5 * math.pi * rb * rb
    sample = line_sampler(center, rb)

    def work(gen, m):
        feet, dirs = sample(gen, m)
        cache = {}

        def iv(s):
            if id(s) not in cache:
                cache[id(s)] = geo.line_intervals_batch(s, feet, dirs)
            return cache[id(s)]

        per_line = np.zeros(m)
        for coeff, a, b in terms:
            lengths, signs, ev, _ = quadruplets(iv(a), iv(b), a is b)
            per_line += coeff * np.bincount(ev, weights=signs * kernel.phi2(lengths), minlength=m)
        return _Moments(per_line)

    mean, err = _sum_moments(run_chunks(work, n_lines, rng, threads)).mean_err()
    return measure * mean, measure * err
