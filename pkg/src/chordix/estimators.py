"""Monte Carlo estimators of the matrix distributions.

* point pairs -> distance matrix (eta-check) and correlation matrix (gamma)
* rays        -> signed radii matrix (iota-check)
* lines       -> signed chord matrix (mu-check) and its l^4 reweighting (lambda)

Sign rules.  A ray from body i crossing the boundary of body j deposits -1 on
entry and +1 on exit at the crossing distance; when j == i the origin itself
is the first crossing at distance 0 and is not deposited.  A line meeting body
i in [A, B] and body j in [C, D] yields the quadruplet +|D-A|, +|C-B|,
-|C-A|, -|D-B|; for i == j and the same interval only the two +L segments
remain (the two zero-length segments carry nothing).

Normalizations.  Points and ray origins are uniform over the union, pair
labels drawn with probability V_i/V_union.  Lines are isotropic: direction
uniform on the sphere and foot point uniform on the disk of radius Rb through
the scene's bounding center, for which the double volume integral of
f(|r - r'|)/(4 pi |r - r'|^2) equals (pi Rb^2 / 2) E[sum over interval pairs of
int int f(|x - x'|) dx dx'].  Off-diagonal radii and distance cells are the
mean of the two ordered accumulators; chord cells are symmetric per line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .errors import OverlappingScene, ZeroMass
from .scene import Scene, sample_union_points
from .signed_hist import MatrixDensity, SignedHistogram, integral
from .streams import RandomStream, run_chunks, uniform_directions

DEFAULT_BINS = 200
SKIP_BINS = 2


@dataclass
class EventBalance:
    """Signed deposit counts per ordered pair (i, j), overflow included."""

    n_plus: dict = field(default_factory=dict)
    n_minus: dict = field(default_factory=dict)
    # radii: rays where some off-diagonal target had unequal entries/exits
    unbalanced_events: int = 0
    # chords: largest |(+ lengths) - (- lengths)| over off-diagonal quadruplets
    max_quadruplet_residual: float = 0.0

    def add(self, i: int, j: int, plus: int, minus: int):
        self.n_plus[(i, j)] = self.n_plus.get((i, j), 0) + int(plus)
        self.n_minus[(i, j)] = self.n_minus.get((i, j), 0) + int(minus)

    def balance(self, i: int, j: int) -> int:
        return self.n_plus.get((i, j), 0) - self.n_minus.get((i, j), 0)

    def merge(self, other: "EventBalance") -> "EventBalance":
        for (i, j), v in other.n_plus.items():
            self.add(i, j, v, 0)
        for (i, j), v in other.n_minus.items():
            self.add(i, j, 0, v)
        self.unbalanced_events += other.unbalanced_events
        self.max_quadruplet_residual = max(self.max_quadruplet_residual,
                                           other.max_quadruplet_residual)
        return self


def _binning(scene: Scene, bins: int | None, l_max: float | None) -> tuple[int, float]:
    n_bins = DEFAULT_BINS if bins is None else int(bins)
    return n_bins, float(l_max) if l_max is not None else scene.default_l_max()


def _require_disjoint(scene: Scene):
    if not scene.disjoint:
        raise OverlappingScene("estimator requires pairwise disjoint bodies")


class _Accumulators:
    """Per-chunk histogram set: symmetric cells, ordered cells and a joint one."""

    def __init__(self, n: int, n_bins: int, l_max: float, scale: float, stream):
        self.n = n
        mk = lambda: SignedHistogram(l_max, n_bins, scale, stream=stream)  # noqa: E731
        self.cells = {(i, j): mk() for i in range(n) for j in range(i, n)}
        self.ordered = {(i, j): mk() for i in range(n) for j in range(n)}
        self.joint = mk()
        self.balance = EventBalance()

    def add(self, i, j, values, signs, events, n_events, symmetric_half=True):
        """Deposit ordered-pair (i, j) events with integer signs."""
        self.ordered[(i, j)].accumulate(values, signs, events, 0)
        w = signs * 0.5 if (i != j and symmetric_half) else signs
        self.cells[MatrixDensity.key(i, j)].accumulate(values, w, events, 0)
        self.joint.accumulate(values, signs, events, 0)
        plus = int(np.count_nonzero(signs > 0))
        self.balance.add(i, j, plus, int(np.size(signs)) - plus)

    def close(self, n_events: int):
        for h in (*self.cells.values(), *self.ordered.values(), self.joint):
            h.n_events += n_events
        return self

    def merge(self, other: "_Accumulators"):
        for k in self.cells:
            self.cells[k].merge(other.cells[k])
        for k in self.ordered:
            self.ordered[k].merge(other.ordered[k])
        self.joint.merge(other.joint)
        self.balance.merge(other.balance)
        return self


def _matrix(scene: Scene, kind: str, acc: _Accumulators, **meta) -> MatrixDensity:
    m = MatrixDensity(len(scene), kind, dict(acc.cells), tuple(scene.volumes),
                      tuple(scene.surfaces), tuple(scene.masses),
                      {"ordered": acc.ordered, "joint": acc.joint, **meta})
    return m


# --------------------------------------------------------------------------
# point pairs


def draw_pairs(scene: Scene, gen, n: int):
    """Two independent labelled points uniform over the union."""
    p1, lab1 = sample_union_points(scene, gen, n)
    p2, lab2 = sample_union_points(scene, gen, n)
    return p1, lab1, p2, lab2


def estimate_eta(scene: Scene, n_pairs: int, rng: RandomStream, bins: int | None = None,
                 l_max: float | None = None, threads: int | None = None):
    """Distance matrix eta-check: cell (i, j) integrates to V_i V_j / V_union^2."""
    n_bins, l_max = _binning(scene, bins, l_max)
    n = len(scene)

    def work(gen, m):
        p1, lab1, p2, lab2 = draw_pairs(scene, gen, m)
        d = np.linalg.norm(p1 - p2, axis=1)
        ev = np.arange(m)
        acc = _Accumulators(n, n_bins, l_max, 1.0 / n_pairs, rng)
        for i in range(n):
            for j in range(n):
                sel = (lab1 == i) & (lab2 == j)
                acc.add(i, j, d[sel], np.ones(int(sel.sum())), ev[sel], m)
        return acc.close(m)

    acc = run_chunks(work, n_pairs, rng, threads, reduce=_Accumulators.merge)
    return _matrix(scene, "eta", acc, seed=rng.seed), acc.balance


def eta_full(m: MatrixDensity, i: int, j: int) -> SignedHistogram:
    """Per-pair unit-normalized eta_ij = V_union^2/(V_i V_j) * eta-check_ij."""
    return m[i, j].scaled(m.v_union ** 2 / (m.volumes[i] * m.volumes[j]))


def gamma_from_eta(m: MatrixDensity, scene: Scene | None = None) -> MatrixDensity:
    """gamma_ij(l) = V_union^2 eta-check_ij(l) / (4 pi l^2) at bin centers.

    The first SKIP_BINS bins are flagged unreliable (1/l^2 amplification)."""
    v_union = m.v_union if scene is None else scene.v_union
    first = next(iter(m.cells.values()))
    c = first.centers
    factor = v_union ** 2 / (4.0 * math.pi * c * c)
    out = MatrixDensity(m.n, "gamma_weighted" if m.kind == "eta_weighted" else "gamma",
                        {k: h.reweighted(factor) for k, h in m.cells.items()},
                        m.volumes, m.surfaces, m.masses,
                        {"unreliable_bins": list(range(SKIP_BINS)), "source": m})
    return out


def estimate_eta_weighted(scene: Scene, n_pairs: int, rng: RandomStream,
                          bins: int | None = None, l_max: float | None = None,
                          threads: int | None = None) -> MatrixDensity:
    """Density-weighted correlation matrix (gamma-dot).

    Pairs are drawn exactly as in :func:`estimate_eta` and each deposit is
    weighted by rho_i(r) rho_j(r'); with unit densities the raw sums coincide
    with the unweighted estimator's.  ``meta['source']`` holds the weighted
    distance matrix whose cell (i, j) integrates to M_i M_j / V_union^2."""
    if np.any(scene.masses <= 0):
        raise ZeroMass("all bodies need positive mass")
    n_bins, l_max = _binning(scene, bins, l_max)
    n = len(scene)
    dens = [b.density for b in scene.bodies]

    def work(gen, m):
        p1, lab1, p2, lab2 = draw_pairs(scene, gen, m)
        d = np.linalg.norm(p1 - p2, axis=1)
        rho1 = np.empty(m)
        rho2 = np.empty(m)
        for k in range(n):
            s1, s2 = lab1 == k, lab2 == k
            rho1[s1] = dens[k](p1[s1])
            rho2[s2] = dens[k](p2[s2])
        w = rho1 * rho2
        ev = np.arange(m)
        acc = _Accumulators(n, n_bins, l_max, 1.0 / n_pairs, rng)
        for i in range(n):
            for j in range(n):
                sel = (lab1 == i) & (lab2 == j)
                acc.add(i, j, d[sel], w[sel], ev[sel], m)
        return acc.close(m)

    acc = run_chunks(work, n_pairs, rng, threads, reduce=_Accumulators.merge)
    eta_w = _matrix(scene, "eta_weighted", acc, seed=rng.seed)
    return gamma_from_eta(eta_w, scene)


def weighted_mass_product(gamma_w: MatrixDensity, i: int, j: int) -> tuple[float, float]:
    """Integral of 4 pi l^2 gamma-dot_ij dl, an estimate of M_i M_j."""
    src = gamma_w.meta["source"]
    v2 = src.v_union ** 2
    val, err = integral(src[i, j])
    return v2 * val, v2 * err


# --------------------------------------------------------------------------
# rays


def draw_rays(scene: Scene, gen, m: int):
    """Labelled ray origins uniform over the union and isotropic directions."""
    origins, labels = sample_union_points(scene, gen, m)
    return origins, labels, uniform_directions(gen, m)


def radii_deposits(iv: np.ndarray, source_is_target: np.ndarray):
    """Crossing distances and signs from padded ray intervals.

    Returns (values, signs, event_index).  ``source_is_target`` marks rays
    whose origin lies in this body, for which the zero-distance origin
    crossing is dropped."""
    m, k, _ = iv.shape
    enter, leave = iv[..., 0], iv[..., 1]
    ev = np.broadcast_to(np.arange(m)[:, None], (m, k))
    ok_in = ~np.isnan(enter)
    ok_in &= ~(source_is_target[:, None] & (enter == 0.0) & (np.arange(k)[None, :] == 0))
    ok_out = ~np.isnan(leave)
    values = np.concatenate((enter[ok_in], leave[ok_out]))
    signs = np.concatenate((-np.ones(int(ok_in.sum())), np.ones(int(ok_out.sum()))))
    events = np.concatenate((ev[ok_in], ev[ok_out]))
    return values, signs, events


def estimate_radii(scene: Scene, n_rays: int, rng: RandomStream, bins: int | None = None,
                   l_max: float | None = None, threads: int | None = None):
    """Signed radii matrix iota-check; cell (i, i) integrates to V_i/V_union,
    off-diagonal cells to zero."""
    _require_disjoint(scene)
    n_bins, l_max = _binning(scene, bins, l_max)
    n = len(scene)

    def work(gen, m):
        origins, labels, dirs = draw_rays(scene, gen, m)
        ivs = [geo.ray_intervals_batch(s, origins, dirs) for s in scene.shapes]
        acc = _Accumulators(n, n_bins, l_max, 1.0 / n_rays, rng)
        for i in range(n):
            src = labels == i
            if not src.any():
                continue
            idx = np.nonzero(src)[0]
            for j in range(n):
                sub = ivs[j][src]
                vals, signs, ev = radii_deposits(sub, np.full(len(idx), i == j))
                if i != j:
                    counts = np.bincount(ev, weights=signs, minlength=len(idx))
                    acc.balance.unbalanced_events += int(np.count_nonzero(counts))
                acc.add(i, j, vals, signs, idx[ev], m)
        return acc.close(m)

    acc = run_chunks(work, n_rays, rng, threads, reduce=_Accumulators.merge)
    return _matrix(scene, "iota", acc, seed=rng.seed), acc.balance


# --------------------------------------------------------------------------
# lines


def line_sampler(center: np.ndarray, rb: float):
    def sample(gen, m):
        dirs = uniform_directions(gen, m)
        feet = geo.disk_points(gen, dirs, center, rb)
        return feet, dirs
    return sample


def quadruplets(iv_i: np.ndarray, iv_j: np.ndarray, same_body: bool):
    """Signed chord segments for every interval pair of one line batch.

    Returns (lengths, signs, event_index, residual) where residual is the
    largest per-quadruplet |sum(+) - sum(-)| among pairs of distinct
    intervals (zero in exact arithmetic)."""
    m, ki, _ = iv_i.shape
    kj = iv_j.shape[1]
    a = iv_i[:, :, None, 0]
    b = iv_i[:, :, None, 1]
    c = iv_j[:, None, :, 0]
    d = iv_j[:, None, :, 1]
    shape = (m, ki, kj)
    ok = np.broadcast_to(~np.isnan(a) & ~np.isnan(c), shape)
    ev = np.broadcast_to(np.arange(m)[:, None, None], shape)
    pos1, pos2 = np.abs(d - a), np.abs(c - b)
    neg1, neg2 = np.abs(c - a), np.abs(d - b)
    diag = np.zeros(shape, bool)
    if same_body:
        diag = np.broadcast_to(np.eye(ki, kj, dtype=bool)[None], shape)
    resid_mask = ok & ~diag
    residual = 0.0
    if resid_mask.any():
        r = np.abs((pos1 + pos2) - (neg1 + neg2))[resid_mask]
        residual = float(r.max())
    neg_ok = ok & ~diag
    lengths = np.concatenate((pos1[ok], pos2[ok], neg1[neg_ok], neg2[neg_ok]))
    n_pos = 2 * int(ok.sum())
    n_neg = 2 * int(neg_ok.sum())
    signs = np.concatenate((np.ones(n_pos), -np.ones(n_neg)))
    events = np.concatenate((ev[ok], ev[ok], ev[neg_ok], ev[neg_ok]))
    return lengths, signs, events, residual


def estimate_chords(scene: Scene, n_lines: int, rng: RandomStream, bins: int | None = None,
                    l_max: float | None = None, threads: int | None = None):
    """Signed chord matrix mu-check: weight of each segment is
    (pi Rb^2/2) (4/S_union) / n_lines.  For one convex body this is the
    ordinary chord length density."""
    _require_disjoint(scene)
    n_bins, l_max = _binning(scene, bins, l_max)
    n = len(scene)
    center, rb = scene.bounding_sphere
    sample = line_sampler(center, rb)
    scale = 0.5 * math.pi * rb * rb * 4.0 / scene.s_union / n_lines

    def work(gen, m):
        feet, dirs = sample(gen, m)
        ivs = [geo.line_intervals_batch(s, feet, dirs) for s in scene.shapes]
        acc = _Accumulators(n, n_bins, l_max, scale, rng)
        for i in range(n):
            for j in range(i, n):
                lengths, signs, ev, resid = quadruplets(ivs[i], ivs[j], i == j)
                if i != j:
                    acc.balance.max_quadruplet_residual = max(
                        acc.balance.max_quadruplet_residual, resid)
                    acc.add(i, j, lengths, signs, ev, m, symmetric_half=False)
                    acc.ordered[(j, i)].accumulate(lengths, signs, ev, 0)
                    acc.joint.accumulate(lengths, signs, ev, 0)
                    plus = int(np.count_nonzero(signs > 0))
                    acc.balance.add(j, i, plus, len(signs) - plus)
                else:
                    acc.add(i, i, lengths, signs, ev, m)
        return acc.close(m)

    acc = run_chunks(work, n_lines, rng, threads, reduce=_Accumulators.merge)
    return _matrix(scene, "mu", acc, seed=rng.seed, rb=rb), acc.balance


def lambda_from_mu(m: MatrixDensity, scene: Scene | None = None) -> MatrixDensity:
    """lambda_ij(x) = pi x^4 (S_union/4) mu-check_ij(x) / (3 V_i V_j) at bin centers."""
    vols = m.volumes if scene is None else tuple(scene.volumes)
    s_union = m.s_union if scene is None else scene.s_union
    first = next(iter(m.cells.values()))
    x = first.centers
    cells = {}
    for (i, j), h in m.cells.items():
        factor = math.pi * x ** 4 * (s_union / 4.0) / (3.0 * vols[i] * vols[j])
        cells[(i, j)] = h.reweighted(factor)
    return MatrixDensity(m.n, "lambda", cells, m.volumes, m.surfaces, m.masses, {"source": m})


def mutual_projection_area(body_i, body_j, n_lines: int, rng: RandomStream,
                           threads: int | None = None) -> tuple[float, float]:
    """pi Rb^2 times the fraction of isotropic lines meeting both bodies."""
    si = body_i.shape if isinstance(body_i, geo.Body) else body_i
    sj = body_j.shape if isinstance(body_j, geo.Body) else body_j
    center, rb = geo.enclosing_sphere([si, sj])
    sample = line_sampler(center, rb)

    def work(gen, m):
        feet, dirs = sample(gen, m)
        hi = ~np.isnan(geo.line_intervals_batch(si, feet, dirs)[:, 0, 0])
        hj = hi if sj is si else ~np.isnan(geo.line_intervals_batch(sj, feet, dirs)[:, 0, 0])
        return int(np.count_nonzero(hi & hj))

    hits = sum(run_chunks(work, n_lines, rng, threads))
    p = hits / n_lines
    area = math.pi * rb * rb
    return area * p, area * math.sqrt(p * (1 - p) / n_lines)
