"""Identity and oracle verification reports.

Each check produces an :class:`Entry` with status EXACT_PASS (equality of
quantities built from the same events), STAT_PASS (|z| below the report
threshold) or FAIL.  The threshold is the two-sided 3 sigma level corrected
for the number of statistical comparisons in the report (Bonferroni), where a
bin-wise comparison counts once per compared bin.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from . import analytic
from . import geometry as geo
from . import estimators as est
from . import transfer as tr
from .errors import UnsupportedGeometry
from .kernels import Kernel, ball, exponential
from .scene import DISJOINT, Scene, decompose_overlaps, scene_from_bodies
from .signed_hist import SignedHistogram, integral, linear_combine, matrix_sum, moment
from .streams import RandomStream, run_chunks

EXACT_PASS, STAT_PASS, FAIL = "EXACT_PASS", "STAT_PASS", "FAIL"
ALPHA = 2 * norm.sf(3.0)
QUADRUPLET_TOL = 1e-9
RESCALE_RTOL = 1e-12


@dataclass
class Budgets:
    pairs: int = 1 << 20
    rays: int = 1 << 20
    lines: int = 1 << 20
    bins: int | None = None
    l_max: float | None = None

    @classmethod
    def uniform(cls, n: int, bins: int | None = None, l_max: float | None = None) -> "Budgets":
        return cls(n, n, n, bins, l_max)


@dataclass
class Entry:
    identity: str
    status: str | None
    z: float | None
    lhs: float
    rhs: float
    stderr: float
    n_tests: int = 1
    detail: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {"identity": self.identity, "status": self.status,
               "z": _num(self.z), "lhs": _num(self.lhs), "rhs": _num(self.rhs),
               "stderr": _num(self.stderr)}
        if self.detail:
            out["detail"] = {k: _num(v) for k, v in self.detail.items()}
        return out


def _num(x):
    if x is None:
        return None
    if isinstance(x, (bool, str)):
        return x
    if isinstance(x, (list, tuple)):
        return [_num(v) for v in x]
    x = float(x)
    if not math.isfinite(x):
        return None
    return float(f"{x:.9g}")


@dataclass
class VerificationReport:
    entries: list
    threshold: float
    meta: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(e.status != FAIL for e in self.entries)

    def __getitem__(self, identity: str) -> Entry:
        for e in self.entries:
            if e.identity == identity:
                return e
        raise KeyError(identity)

    def find(self, prefix: str) -> list:
        return [e for e in self.entries if e.identity.startswith(prefix)]

    def to_json(self) -> str:
        return json.dumps([e.as_dict() for e in self.entries], indent=1)

    def table(self) -> str:
        rows = [f"{'identity':<28} {'status':<11} {'z':>9} {'lhs':>16} {'rhs':>16} {'stderr':>12}"]
        for e in self.entries:
            z = "" if e.z is None or not math.isfinite(e.z) else f"{e.z:9.3f}"
            rows.append(f"{e.identity:<28} {e.status:<11} {z:>9} {e.lhs:16.9g} "
                        f"{e.rhs:16.9g} {e.stderr:12.4g}")
        rows.append(f"threshold |z| < {self.threshold:.3f} over "
                    f"{self.meta.get('n_tests', 0)} statistical comparisons")
        return "\n".join(rows)


def bonferroni_threshold(n_tests: int) -> float:
    return float(norm.isf(ALPHA / 2 / max(n_tests, 1)))


def finalize(entries: list, **meta) -> VerificationReport:
    m = sum(e.n_tests for e in entries if e.status is None)
    thr = bonferroni_threshold(m)
    for e in entries:
        if e.status is None:
            e.status = STAT_PASS if (e.z is not None and abs(e.z) < thr) else FAIL
    return VerificationReport(entries, thr, {"n_tests": m, **meta})


# --------------------------------------------------------------------------
# entry builders


def _stat(identity, lhs, rhs, err, atol: float = 0.0, **detail) -> Entry:
    """Statistical comparison; differences within ``atol`` (floating-point
    rounding of quantities that vanish per event) count as z = 0."""
    lhs, rhs, err = float(lhs), float(rhs), float(err)
    d = lhs - rhs
    if abs(d) <= atol or math.isclose(lhs, rhs, rel_tol=1e-12, abs_tol=1e-300):
        z = 0.0
    elif err > 0:
        z = d / err
    else:
        z = math.inf
    return Entry(identity, None, z, lhs, rhs, err, 1, detail)


def _rounding(h: SignedHistogram) -> float:
    """Rounding scale of a functional of ``h``: 1e-12 times its total
    absolute weight."""
    return 1e-12 * float(np.sum(np.abs(h.weights)) * h.width * max(1.0, h.l_max))


def counting_variance(h: SignedHistogram, expected: np.ndarray, k: float,
                      factor: np.ndarray | float = 1.0) -> np.ndarray:
    """Model variance of a density whose events each put weight ``k`` into at
    most one bin, given the expected density ``expected`` (before ``factor``)."""
    n = max(h.n_events, 1)
    step = abs(h.scale * k) / h.width
    p = np.clip(np.asarray(expected) / (step * n), 0.0, 1.0)
    return (step ** 2) * n * p * (1 - p) * np.asarray(factor) ** 2


def _exact(identity, ok: bool, lhs, rhs, **detail) -> Entry:
    return Entry(identity, EXACT_PASS if ok else FAIL, None, float(lhs), float(rhs), 0.0, 0, detail)


def bin_z(lhs: SignedHistogram, rhs: SignedHistogram, skip: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Per-bin z of lhs - rhs for independent histograms and the compared mask."""
    d = lhs.weights - rhs.weights
    var = lhs.variance() + rhs.variance()
    mask = np.ones(lhs.n_bins, bool)
    mask[:skip] = False
    z = np.zeros(lhs.n_bins)
    pos = var > 0
    z[pos] = d[pos] / np.sqrt(var[pos])
    # bins with no events on either side must agree exactly
    z[~pos & (d != 0)] = np.inf
    mask &= pos | (d != 0)
    return z, mask


def _binwise(identity, lhs: SignedHistogram, rhs: SignedHistogram, skip: int = 0, **detail) -> Entry:
    z, mask = bin_z(lhs, rhs, skip)
    if not mask.any():
        return Entry(identity, None, 0.0, 0.0, 0.0, 0.0, 1, detail)
    idx = np.nonzero(mask)[0]
    b = idx[np.argmax(np.abs(z[idx]))]
    err = math.sqrt(lhs.variance()[b] + rhs.variance()[b])
    detail = {"bin": int(b), "l": float(lhs.centers[b]), **detail}
    return Entry(identity, None, float(z[b]), float(lhs.weights[b]), float(rhs.weights[b]),
                 err, int(mask.sum()), detail)


def _constancy(identity, lhs: SignedHistogram, ref: SignedHistogram, expected: float,
               skip: int = 0) -> Entry:
    """Fit lhs(l) = 2 C ref(l) and test the residuals bin-wise.

    C is the weighted least-squares constant (errors in both histograms);
    a constant that works for every bin is the content of the identity."""
    y, vy = lhs.weights, lhs.variance()
    x, vx = 2.0 * ref.weights, 4.0 * ref.variance()
    mask = np.ones(lhs.n_bins, bool)
    mask[:skip] = False
    mask &= (vy + vx) > 0
    if not np.any(mask & (x != 0)):
        return Entry(identity, None, 0.0, 0.0, 0.0, 0.0, 1, {"c_expected": expected})
    y, vy, x, vx = y[mask], vy[mask], x[mask], vx[mask]
    # ratio of totals as a start: robust when some bins carry no lhs variance
    c = float(np.sum(y) / np.sum(x)) if np.sum(x) != 0 else 0.0
    floor = 1e-300 + 1e-30 * float(np.max(vy + vx))
    for _ in range(20):
        w = 1.0 / np.maximum(vy + c * c * vx, floor)
        c_new = float(np.sum(w * x * y) / np.sum(w * x * x))
        if math.isclose(c_new, c, rel_tol=1e-12):
            c = c_new
            break
        c = c_new
    w = 1.0 / np.maximum(vy + c * c * vx, floor)
    c_err = 1.0 / math.sqrt(float(np.sum(w * x * x)))
    z = (y - c * x) * np.sqrt(w)
    k = int(np.argmax(np.abs(z)))
    bins = np.nonzero(mask)[0]
    detail = {"c_fit": c, "c_err": c_err, "c_expected": expected, "bin": int(bins[k]),
              "l": float(lhs.centers[bins[k]])}
    return Entry(identity, None, float(z[k]), float(y[k]), float(c * x[k]),
                 float(1.0 / math.sqrt(w[k])), int(mask.sum()), detail)


def _tag(name: str, *idx) -> str:
    return f"{name}[{','.join(str(i) for i in idx)}]" if idx else name


# --------------------------------------------------------------------------
# union histograms replayed from the same draws as the matrix estimators


def union_eta(scene: Scene, n_pairs: int, rng: RandomStream, n_bins: int, l_max: float,
              threads=None) -> SignedHistogram:
    def work(gen, m):
        p1, _, p2, _ = est.draw_pairs(scene, gen, m)
        h = SignedHistogram(l_max, n_bins, 1.0 / n_pairs)
        return h.accumulate(np.linalg.norm(p1 - p2, axis=1), 1.0, np.arange(m), m)
    return run_chunks(work, n_pairs, rng, threads, reduce=SignedHistogram.merge)


def union_radii(scene: Scene, n_rays: int, rng: RandomStream, n_bins: int, l_max: float,
                threads=None) -> SignedHistogram:
    union = scene.union_scene().shapes[0]

    def work(gen, m):
        origins, _, dirs = est.draw_rays(scene, gen, m)
        iv = geo.ray_intervals_batch(union, origins, dirs)
        vals, signs, ev = est.radii_deposits(iv, np.ones(m, bool))
        h = SignedHistogram(l_max, n_bins, 1.0 / n_rays)
        return h.accumulate(vals, signs, ev, m)
    return run_chunks(work, n_rays, rng, threads, reduce=SignedHistogram.merge)


def union_chords(scene: Scene, n_lines: int, rng: RandomStream, n_bins: int, l_max: float,
                 threads=None) -> SignedHistogram:
    union = scene.union_scene().shapes[0]
    center, rb = scene.bounding_sphere
    sample = est.line_sampler(center, rb)
    scale = 0.5 * math.pi * rb * rb * 4.0 / scene.s_union / n_lines

    def work(gen, m):
        feet, dirs = sample(gen, m)
        iv = geo.line_intervals_batch(union, feet, dirs)
        lengths, signs, ev, _ = est.quadruplets(iv, iv, True)
        h = SignedHistogram(l_max, n_bins, scale)
        return h.accumulate(lengths, signs, ev, m)
    return run_chunks(work, n_lines, rng, threads, reduce=SignedHistogram.merge)


def _same_events(identity, summed: SignedHistogram, union: SignedHistogram) -> Entry:
    ok = (np.array_equal(summed.sums, union.sums) and summed.scale == union.scale
          and summed.overflow == union.overflow)
    diff = float(np.max(np.abs(summed.sums - union.sums)) * abs(union.scale) / union.width)
    return _exact(identity, ok, integral(summed)[0], integral(union)[0], max_bin_diff=diff)


# --------------------------------------------------------------------------
# identities


def _resolve(scene: Scene, b: Budgets) -> tuple[int, float]:
    return (b.bins or est.DEFAULT_BINS), (b.l_max or scene.default_l_max())


def matrix_identities(scene: Scene, b: Budgets, rng: RandomStream, kernel: Kernel,
                      threads=None) -> list:
    """Matrix sums, normalizations, zero laws and the lambda rescaling."""
    n_bins, l_max = _resolve(scene, b)
    n = len(scene)
    vols, v_union, s_union = scene.volumes, scene.v_union, scene.s_union
    eta, _ = est.estimate_eta(scene, b.pairs, rng.derive(1), n_bins, l_max, threads)
    iota, bal_r = est.estimate_radii(scene, b.rays, rng.derive(2), n_bins, l_max, threads)
    mu, bal_c = est.estimate_chords(scene, b.lines, rng.derive(3), n_bins, l_max, threads)
    out = [
        _same_events("Eq3.9", matrix_sum(eta), union_eta(scene, b.pairs, rng.derive(1), n_bins, l_max, threads)),
        _same_events("Eq3.13", matrix_sum(iota), union_radii(scene, b.rays, rng.derive(2), n_bins, l_max, threads)),
        _same_events("Eq3.16", matrix_sum(mu), union_chords(scene, b.lines, rng.derive(3), n_bins, l_max, threads)),
    ]
    for i, j in eta.pairs():
        val, err = integral(eta[i, j])
        out.append(_stat(_tag("Eq3.10", i, j), val, vols[i] * vols[j] / v_union ** 2, err))
    for i in range(n):
        single = scene.subscene([i])
        ref, _ = est.estimate_radii(single, b.rays, rng.derive(4, i), n_bins, l_max, threads)
        val, err = integral(iota[i, i])
        out.append(_stat(_tag("Eq3.12:norm", i), val, vols[i] / v_union, err))
        out.append(_binwise(_tag("Eq3.12", i), iota[i, i], ref[0, 0].scaled(vols[i] / v_union)))
    r_ok = bal_r.unbalanced_events == 0 and all(
        bal_r.balance(i, j) == 0 for i in range(n) for j in range(n) if i != j)
    c_ok = all(bal_c.balance(i, j) == 0 for i in range(n) for j in range(n) if i != j)
    plus = sum(v for (i, j), v in bal_r.n_plus.items() if i != j)
    minus = sum(v for (i, j), v in bal_r.n_minus.items() if i != j)
    out.append(_exact("Eq3.31:balance-radii", r_ok, plus, minus,
                      unbalanced_events=bal_r.unbalanced_events))
    plus = sum(v for (i, j), v in bal_c.n_plus.items() if i != j)
    minus = sum(v for (i, j), v in bal_c.n_minus.items() if i != j)
    out.append(_exact("Eq3.31:balance-chords", c_ok, plus, minus))
    out.append(_exact("Eq3.31:quadruplet", bal_c.max_quadruplet_residual <= QUADRUPLET_TOL,
                      bal_c.max_quadruplet_residual, 0.0))
    for i in range(n):
        for j in range(i + 1, n):
            val, err = integral(iota[i, j])
            out.append(_stat(_tag("Eq3.31:iota", i, j), val, 0.0, err, _rounding(iota[i, j])))
            val, err = integral(mu[i, j])
            out.append(_stat(_tag("Eq3.31:mu", i, j), val, 0.0, err, _rounding(mu[i, j])))
            val, err = moment(mu[i, j], 1)
            out.append(_stat(_tag("Eq3.31:mu-l", i, j), val, 0.0, err, _rounding(mu[i, j])))
    lam = est.lambda_from_mu(mu, scene)
    for i, j in mu.pairs():
        # integral of lambda_ij equals a rescaled fourth moment of mu-check_ij
        f = math.pi * s_union / (12.0 * vols[i] * vols[j])
        val4, err4 = moment(mu[i, j], 4)
        lam_int = float(np.sum(lam[i, j].weights) * lam[i, j].width)
        out.append(_stat(_tag("Eq3.33b", i, j), lam_int, 1.0, f * err4, moment4=f * val4))
        via_lambda = tr.transfer_via_lambda(scene, i, j, kernel, lam).value
        via_chords, _ = tr.chords_binned(scene, i, j, kernel, mu)
        ok = math.isclose(via_lambda, via_chords, rel_tol=RESCALE_RTOL, abs_tol=1e-300)
        out.append(_exact(_tag("Eq3.35", i, j), ok, via_lambda, via_chords))
    return out


def pair_identities(scene: Scene, b: Budgets, rng: RandomStream, kernel: Kernel,
                    threads=None, label=(0, 1)) -> list:
    """Union identities for a two-body disjoint scene."""
    n_bins, l_max = _resolve(scene, b)
    v1, v2 = scene.volumes
    s1, s2 = scene.surfaces
    sh1, sh2 = scene.shapes
    uni = scene.union_scene()
    singles = [scene.subscene([0]), scene.subscene([1])]
    center, rb = scene.bounding_sphere
    out = []

    # twice the cross integral from the union and single-body integrals
    direct = tr.transfer_direct(scene, 0, 1, kernel, b.pairs, rng.derive(10), threads)
    u = uni.shapes[0]
    rhs, rhs_err = tr.chord_combination([(1.0, u, u), (-1.0, sh1, sh1), (-1.0, sh2, sh2)],
                                        kernel, b.lines, rng.derive(11), center, rb, threads)
    out.append(_stat(_tag("Eq1.3", *label), 2 * direct.value, rhs,
                     math.hypot(2 * direct.stderr, rhs_err), kernel=kernel.spec))

    # Dirac integral of the union against its decomposition
    d_union = tr.transfer_via_radii(uni, 0, 0, kernel, b.rays, rng.derive(12), n_bins, l_max, threads)
    cross = tr.transfer_via_chords(scene, 0, 1, kernel, b.lines, rng.derive(13), n_bins, l_max, threads)
    d1 = tr.transfer_via_radii(singles[0], 0, 0, kernel, b.rays, rng.derive(14), n_bins, l_max, threads)
    d2 = tr.transfer_via_radii(singles[1], 0, 0, kernel, b.rays, rng.derive(15), n_bins, l_max, threads)
    rhs = 2 * cross.value + d1.value + d2.value
    err = math.sqrt(d_union.stderr ** 2 + 4 * cross.stderr ** 2 + d1.stderr ** 2 + d2.stderr ** 2)
    out.append(_stat(_tag("Eq3.3", *label), d_union.value, rhs, err, kernel=kernel.spec))

    # distance distributions and correlation functions
    eu, _ = est.estimate_eta(uni, b.pairs, rng.derive(16), n_bins, l_max, threads)
    e1, _ = est.estimate_eta(singles[0], b.pairs, rng.derive(17), n_bins, l_max, threads)
    e2, _ = est.estimate_eta(singles[1], b.pairs, rng.derive(18), n_bins, l_max, threads)
    ep, _ = est.estimate_eta(scene, b.pairs, rng.derive(19), n_bins, l_max, threads)
    lhs = eu[0, 0].scaled((v1 + v2) ** 2)
    rhs = linear_combine([v1 * v1, 2 * v1 * v2, v2 * v2],
                         [e1[0, 0], est.eta_full(ep, 0, 1), e2[0, 0]])
    out.append(_binwise(_tag("Eq2.2", *label), lhs, rhs, est.SKIP_BINS))
    gu, g1, g2 = (est.gamma_from_eta(m, s) for m, s in ((eu, uni), (e1, singles[0]), (e2, singles[1])))
    gp = est.gamma_from_eta(ep, scene)
    rhs = linear_combine([1.0, 2.0, 1.0], [g1[0, 0], gp[0, 1], g2[0, 0]])
    out.append(_binwise(_tag("Eq2.7", *label), gu[0, 0], rhs, est.SKIP_BINS))

    # radii of the union against the single bodies and a cross term
    iu, _ = est.estimate_radii(uni, b.rays, rng.derive(20), n_bins, l_max, threads)
    i1, _ = est.estimate_radii(singles[0], b.rays, rng.derive(21), n_bins, l_max, threads)
    i2, _ = est.estimate_radii(singles[1], b.rays, rng.derive(22), n_bins, l_max, threads)
    ip, _ = est.estimate_radii(scene, b.rays, rng.derive(23), n_bins, l_max, threads)
    lhs = linear_combine([v1 + v2, -v1, -v2], [iu[0, 0], i1[0, 0], i2[0, 0]])
    # cross radii normalized per ray launched from body 0
    ref = ip.meta["ordered"][(0, 1)].scaled(scene.v_union / v1)
    out.append(_constancy(_tag("Eq3.6", *label), lhs, ref, v1))

    # chords of the union, cross term normalized on lines meeting both
    mu_u, _ = est.estimate_chords(uni, b.lines, rng.derive(24), n_bins, l_max, threads)
    mu_1, _ = est.estimate_chords(singles[0], b.lines, rng.derive(25), n_bins, l_max, threads)
    mu_2, _ = est.estimate_chords(singles[1], b.lines, rng.derive(26), n_bins, l_max, threads)
    mu_p, _ = est.estimate_chords(scene, b.lines, rng.derive(27), n_bins, l_max, threads)
    area, _ = est.mutual_projection_area(scene.bodies[0], scene.bodies[1], b.lines,
                                         rng.derive(28), threads)
    lhs = linear_combine([s1 + s2, -s1, -s2], [mu_u[0, 0], mu_1[0, 0], mu_2[0, 0]])
    ref = mu_p[0, 1].scaled(scene.s_union / 4.0 / area)
    out.append(_constancy(_tag("Eq3.7", *label), lhs, ref, 4.0 * area))
    return out


def overlap_identities(scene: Scene, b: Budgets, rng: RandomStream, kernel: Kernel,
                       threads=None) -> list:
    """Cross integral of overlapping bodies against the four-term sum over
    their disjoint decomposition (shared lines for the four terms)."""
    out = []
    n = len(scene)
    for i in range(n):
        for j in range(i + 1, n):
            if scene.pair_status[i, j] == DISJOINT:
                continue
            sub = scene.subscene([i, j])
            dec = decompose_overlaps(sub, rng.derive(30, i, j))
            b1, b2, b3 = dec.shapes
            center, rb = dec.bounding_sphere
            rhs, rhs_err = tr.chord_combination(
                [(1.0, b1, b2), (1.0, b1, b3), (1.0, b3, b2), (1.0, b3, b3)],
                kernel, b.lines, rng.derive(31, i, j), center, rb, threads)
            try:
                lhs = tr.transfer_via_gamma(sub, 0, 1, kernel)
                route = "gamma"
            except UnsupportedGeometry:
                lhs = tr.transfer_direct(sub, 0, 1, kernel, b.pairs, rng.derive(32, i, j), threads)
                route = "direct"
            out.append(_stat(_tag("Eq1.4", i, j), lhs.value, rhs,
                             math.hypot(lhs.stderr, rhs_err), lhs_route=route, kernel=kernel.spec))
    return out


def verify_identities(scene: Scene, budgets: Budgets | None = None,
                      rng: RandomStream | None = None, kernel: Kernel | None = None,
                      threads: int | None = None, finalize_report: bool = True):
    """Run every identity that applies to ``scene``.

    Overlapping scenes get the overlap decomposition check only; disjoint
    scenes get the matrix identities plus the union identities for each pair."""
    b = budgets or Budgets()
    rng = rng or RandomStream(42)
    kernel = kernel or exponential(1.0)
    if not scene.disjoint:
        entries = overlap_identities(scene, b, rng.derive(1000), kernel, threads)
    else:
        entries = matrix_identities(scene, b, rng.derive(1001), kernel, threads)
        for i in range(len(scene)):
            for j in range(i + 1, len(scene)):
                entries += pair_identities(scene.subscene([i, j]), b, rng.derive(1002, i, j),
                                           kernel, threads, (i, j))
    if not finalize_report:
        return entries
    return finalize(entries, suite="identities", kernel=kernel.spec, seed=rng.seed)


# --------------------------------------------------------------------------
# oracles


def unit_sphere_scene() -> Scene:
    return scene_from_bodies([geo.Body(geo.Sphere((0.0, 0.0, 0.0), 1.0))], ["unit"])


def sphere_oracles(b: Budgets, rng: RandomStream, threads=None, bins: int = 100) -> list:
    """Unit-sphere eta, iota and mu against exact bin averages of the closed
    forms, the Cauchy mean chord and the lambda normalization."""
    sc = unit_sphere_scene()
    l_max = 2.0
    exact = analytic.sphere_bin_means(1.0, np.linspace(0.0, l_max, bins + 1))
    runs = {
        "eta": est.estimate_eta(sc, b.pairs, rng.derive(1), bins, l_max, threads)[0],
        "iota": est.estimate_radii(sc, b.rays, rng.derive(2), bins, l_max, threads)[0],
        "mu": est.estimate_chords(sc, b.lines, rng.derive(3), bins, l_max, threads)[0],
    }
    # per event: one deposit for pairs and rays, two equal +L segments per line
    mult = {"eta": 1.0, "iota": 1.0, "mu": 2.0}
    out = []
    for kind, m in runs.items():
        h = m[0, 0]
        ref = SignedHistogram(l_max, bins, 1.0, exact[kind] * h.width,
                              var=counting_variance(h, exact[kind], mult[kind]))
        obs = _observed(h)
        out.append(_binwise(f"oracle:sphere-{kind}", obs, ref, peak=float(exact[kind].max())))
    val, err = moment(runs["mu"][0, 0], 1)
    out.append(_stat("oracle:cauchy", val, 4.0 / 3.0, err))
    val4, err4 = moment(runs["mu"][0, 0], 4)
    f = math.pi * sc.s_union / (12.0 * sc.volumes[0] ** 2)
    out.append(_stat("oracle:lambda-norm", f * val4, 1.0, f * err4))
    return out


def _observed(h: SignedHistogram) -> SignedHistogram:
    """Observed densities with zero variance; the model variance of the
    oracle side carries the comparison."""
    return SignedHistogram(h.l_max, h.n_bins, 1.0, h.weights * h.width, var=np.zeros(h.n_bins))


def _is_sphere_pair(scene: Scene, i: int, j: int) -> bool:
    return all(isinstance(scene.bodies[k].shape, geo.Sphere)
               and isinstance(scene.bodies[k].density, geo.ConstantDensity) for k in (i, j))


def gamma_oracle(scene: Scene, i: int, j: int, eta, n_skip: int = est.SKIP_BINS) -> Entry:
    """MC cross-correlation against the sphere-pair quadrature, compared on
    bins from the gap plus ``n_skip`` bins up to l_max."""
    bi, bj = scene.bodies[i].shape, scene.bodies[j].shape
    r1, r2 = bi.radius, bj.radius
    D = float(np.linalg.norm(bi.center - bj.center))
    g = est.gamma_from_eta(eta, scene)[i, j]
    edges = g.edges
    lo, hi = analytic.pair_gamma_support(r1, r2, D)
    kinks = analytic.pair_gamma_kinks(r1, r2, D)
    c = g.centers
    exact = np.zeros(g.n_bins)
    for k in range(g.n_bins):
        a, bnd = max(edges[k], lo), min(edges[k + 1], hi)
        if bnd > a:
            m = analytic.gamma_bin_moment(lambda l: analytic.pair_cross_gamma(r1, r2, D, l),
                                          a, bnd, kinks)
            exact[k] = m / (g.width * 4 * math.pi * c[k] ** 2)
    first = int(math.floor(lo / g.width)) + n_skip
    # each pair with labels {i, j} puts 1/2 into the symmetric cell
    factor = scene.v_union ** 2 / (4 * math.pi * c * c)
    model = counting_variance(eta[i, j], exact / factor, 0.5, factor)
    ref = SignedHistogram(g.l_max, g.n_bins, 1.0, exact * g.width, var=model)
    return _binwise(_tag("oracle:gamma", i, j), _observed(g), ref, first, peak=float(exact.max()))


def pair_oracles(scene: Scene, i: int, j: int, b: Budgets, rng: RandomStream,
                 threads=None) -> list:
    """Ball-kernel universality for every route and, for sphere pairs,
    exp(1) route agreement with the quadrature reference."""
    out = []
    n_bins, l_max = _resolve(scene, b)
    spheres = _is_sphere_pair(scene, i, j)
    eta, _ = est.estimate_eta(scene, b.pairs, rng.derive(1), n_bins, l_max, threads)
    mu, _ = est.estimate_chords(scene, b.lines, rng.derive(2), n_bins, l_max, threads)
    lam = est.lambda_from_mu(mu, scene)
    vv = scene.volumes[i] * scene.volumes[j]
    for k, kernel in enumerate((ball(), exponential(1.0))):
        if kernel.name == "ball":
            ref, ref_err = vv, 0.0
        elif spheres:
            ref, ref_err = tr.transfer_via_gamma(scene, i, j, kernel).value, 0.0
        else:
            continue
        r = rng.derive(10 + k)
        results = [
            tr.transfer_direct(scene, i, j, kernel, b.pairs, r.derive(1), threads),
            tr.transfer_via_eta(scene, i, j, kernel, eta),
            tr.transfer_via_radii(scene, i, j, kernel, b.rays, r.derive(2), n_bins, l_max, threads),
            tr.transfer_via_chords(scene, i, j, kernel, b.lines, r.derive(3), n_bins, l_max, threads),
            tr.transfer_via_lambda(scene, i, j, kernel, lam),
        ]
        if spheres and kernel.name == "ball":
            g = tr.transfer_via_gamma(scene, i, j, kernel)
            out.append(_exact(_tag(f"oracle:{kernel.name}:gamma", i, j),
                              math.isclose(g.value, vv, rel_tol=1e-6), g.value, vv))
        for res in results:
            out.append(_stat(_tag(f"oracle:{kernel.name}:{res.route}", i, j), res.value, ref,
                             math.hypot(res.stderr, ref_err), rel_dev=res.value / ref - 1.0))
    if spheres:
        out.append(gamma_oracle(scene, i, j, eta))
    return out


def nonuniform_oracles(scene: Scene, b: Budgets, rng: RandomStream, threads=None) -> list:
    out = []
    n = len(scene)
    if n < 2 or np.any(scene.masses <= 0):
        return out
    for i in range(n):
        for j in range(i + 1, n):
            res = tr.transfer_nonuniform(scene, i, j, ball(), b.pairs, rng.derive(i, j), threads)
            x = res.extra
            err = math.hypot(x["c_lambda_stderr"], x.get("c_lambda_expected_stderr", 0.0))
            out.append(_stat(_tag("Eq4.2b", i, j), x["c_lambda_estimate"],
                             x["c_lambda_expected"], err))
    return out


def verify_oracles(scene: Scene | None = None, budgets: Budgets | None = None,
                   rng: RandomStream | None = None, threads: int | None = None,
                   finalize_report: bool = True):
    b = budgets or Budgets()
    rng = rng or RandomStream(42)
    entries = sphere_oracles(b, rng.derive(2000), threads)
    if scene is not None and scene.disjoint:
        for i in range(len(scene)):
            for j in range(i + 1, len(scene)):
                entries += pair_oracles(scene, i, j, b, rng.derive(2001, i, j), threads)
        entries += nonuniform_oracles(scene, b, rng.derive(2002), threads)
    if not finalize_report:
        return entries
    return finalize(entries, suite="oracles", seed=rng.seed)


def verify_all(scene: Scene, budgets: Budgets | None = None, rng: RandomStream | None = None,
               kernel: Kernel | None = None, threads: int | None = None) -> VerificationReport:
    rng = rng or RandomStream(42)
    entries = verify_identities(scene, budgets, rng, kernel, threads, finalize_report=False)
    entries += verify_oracles(scene, budgets, rng, threads, finalize_report=False)
    return finalize(entries, suite="all", seed=rng.seed)
