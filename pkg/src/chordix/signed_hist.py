"""Signed (quasi-density) histograms and symmetric matrices of them.

A :class:`SignedHistogram` stores raw per-bin sums of deposit weights; the
reported density is ``scale * sums / width``.  Estimators deposit integer
signed weights (+1, -1, or +-1/2 for symmetrized cells) and carry the
normalization in ``scale``, so sums are exact in floating point and merges of
chunk histograms are bit-reproducible regardless of accumulation order.

Errors are event-level: deposits from one primary event (a ray, a line, a
point pair) are first summed per bin.  Besides the per-bin sums of squares the
histogram keeps the bin cross-moment matrix sum_e x_e x_e^T, so any linear
functional (an integral, a moment, a transfer-route sum) gets its exact
standard error including the strong anticorrelation between the signed
deposits of one event.  The matrix is skipped above ``CROSS_MAX_BINS`` bins,
where functionals fall back to treating bins as independent.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from .errors import BinningMismatch, NegativeValue, SharedStreamWarning

KINDS = ("eta", "iota", "mu", "gamma", "lambda", "eta_weighted", "gamma_weighted")
CROSS_MAX_BINS = 512


@dataclass
class SignedHistogram:
    l_max: float
    n_bins: int
    scale: float = 1.0
    sums: np.ndarray = None
    sumsq: np.ndarray = None
    n_events: int = 0
    overflow: float = 0.0
    # raw sum over events of outer(x_e, x_e); None when not tracked
    cross: np.ndarray = None
    stream: object = None
    # explicit density variance / covariance for derived (combined) histograms
    var: np.ndarray = None
    cov: np.ndarray = None

    def __post_init__(self):
        if not (self.n_bins >= 1 and self.l_max > 0):
            raise ValueError("need n_bins >= 1 and l_max > 0")
        if self.sums is None:
            self.sums = np.zeros(self.n_bins)
        if self.sumsq is None:
            self.sumsq = np.zeros(self.n_bins)
        if self.cross is None and self.n_bins <= CROSS_MAX_BINS and self.var is None:
            self.cross = np.zeros((self.n_bins, self.n_bins))

    # ---- geometry of the binning

    @property
    def width(self) -> float:
        return self.l_max / self.n_bins

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(0.0, self.l_max, self.n_bins + 1)

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n_bins) + 0.5) * self.width

    # ---- values

    @property
    def weights(self) -> np.ndarray:
        """Signed density per bin (1/length units)."""
        return self.scale * self.sums / self.width

    @property
    def overflow_weight(self) -> float:
        return self.scale * self.overflow

    @property
    def derived(self) -> bool:
        return self.var is not None or self.cov is not None

    def variance(self) -> np.ndarray:
        """Per-bin variance of :attr:`weights`."""
        if self.var is not None:
            return self.var
        if self.cov is not None:
            return np.diag(self.cov).copy()
        n = max(self.n_events, 1)
        var_raw = np.maximum(self.sumsq - self.sums ** 2 / n, 0.0)
        return (self.scale / self.width) ** 2 * var_raw

    def covariance(self) -> np.ndarray | None:
        """Bin covariance of :attr:`weights`, or None when not tracked."""
        if self.cov is not None:
            return self.cov
        if self.var is not None or self.cross is None:
            return None
        n = max(self.n_events, 1)
        raw = self.cross - np.outer(self.sums, self.sums) / n
        return (self.scale / self.width) ** 2 * raw

    def stderr(self) -> np.ndarray:
        return np.sqrt(self.variance())

    def functional(self, f: np.ndarray) -> tuple[float, float]:
        """sum_b f_b * density_b * width with its standard error."""
        f = np.broadcast_to(np.asarray(f, dtype=float), (self.n_bins,))
        w = self.width
        val = float(np.sum(f * self.weights) * w)
        cov = self.covariance()
        if cov is not None:
            var = float(f @ cov @ f)
        else:
            var = float(np.sum(f * f * self.variance()))
        return val, math.sqrt(max(var, 0.0)) * w

    def same_binning(self, other: "SignedHistogram") -> bool:
        return self.n_bins == other.n_bins and math.isclose(self.l_max, other.l_max, rel_tol=1e-12)

    # ---- accumulation

    def deposit(self, value: float, signed_weight: float) -> "SignedHistogram":
        """Single deposit counted as its own event."""
        self.accumulate(np.array([value]), np.array([signed_weight]), np.array([0]), 1)
        return self

    def accumulate(self, values: np.ndarray, weights: np.ndarray, events: np.ndarray,
                   n_events: int) -> "SignedHistogram":
        """Add a batch of deposits; ``events`` labels each deposit with its
        primary event in ``range(n_events)``; all ``n_events`` count toward N
        whether they deposit anything or not."""
        if self.derived:
            raise ValueError("cannot deposit into a derived histogram")
        values = np.asarray(values, dtype=float)
        if values.size and values.min() < 0:
            raise NegativeValue("histogram values must be >= 0")
        weights = np.broadcast_to(np.asarray(weights, dtype=float), values.shape)
        nb = self.n_bins
        self.n_events += int(n_events)
        if values.size == 0:
            return self
        bins = np.minimum((values / self.width).astype(np.int64), nb)
        bins[values >= self.l_max] = nb
        key = np.asarray(events, dtype=np.int64) * (nb + 1) + bins
        uniq, inv = np.unique(key, return_inverse=True)
        agg = np.bincount(inv, weights=weights, minlength=len(uniq))
        ubins = uniq % (nb + 1)
        uevents = uniq // (nb + 1)
        full_s = np.bincount(ubins, weights=agg, minlength=nb + 1)
        full_q = np.bincount(ubins, weights=agg * agg, minlength=nb + 1)
        self.sums += full_s[:nb]
        self.sumsq += full_q[:nb]
        self.overflow += full_s[nb]
        if self.cross is not None:
            inside = ubins < nb
            ev = uevents[inside]
            if ev.size:
                _, rows = np.unique(ev, return_inverse=True)
                x = sparse.csr_matrix((agg[inside], (rows, ubins[inside])),
                                      shape=(int(rows.max()) + 1, nb))
                self.cross += (x.T @ x).toarray()
        return self

    def merge(self, other: "SignedHistogram") -> "SignedHistogram":
        """Bin-wise addition of an independent partition of the same run."""
        if not self.same_binning(other) or self.scale != other.scale:
            raise BinningMismatch("cannot merge histograms with different binning or scale")
        if self.derived or other.derived:
            raise ValueError("cannot merge derived histograms")
        self.sums = self.sums + other.sums
        self.sumsq = self.sumsq + other.sumsq
        self.n_events += other.n_events
        self.overflow += other.overflow
        if self.cross is not None and other.cross is not None:
            self.cross = self.cross + other.cross
        else:
            self.cross = None
        return self

    def empty_like(self) -> "SignedHistogram":
        return SignedHistogram(self.l_max, self.n_bins, self.scale, stream=self.stream)

    def copy(self) -> "SignedHistogram":
        cp = lambda a: None if a is None else a.copy()  # noqa: E731
        return replace(self, sums=self.sums.copy(), sumsq=self.sumsq.copy(),
                       cross=cp(self.cross), var=cp(self.var), cov=cp(self.cov))

    def scaled(self, factor: float) -> "SignedHistogram":
        out = self.copy()
        out.scale = self.scale * factor
        if out.var is not None:
            out.var = out.var * factor * factor
        if out.cov is not None:
            out.cov = out.cov * factor * factor
        return out

    def reweighted(self, factor: np.ndarray) -> "SignedHistogram":
        """Derived histogram with density multiplied bin-wise by ``factor``."""
        factor = np.asarray(factor, dtype=float)
        cov = self.covariance()
        out = SignedHistogram(self.l_max, self.n_bins, self.scale, self.sums * factor,
                              self.sumsq * factor * factor, self.n_events,
                              self.overflow, None, self.stream,
                              var=self.variance() * factor * factor,
                              cov=None if cov is None else cov * np.outer(factor, factor))
        return out


def moment(hist: SignedHistogram, k: int) -> tuple[float, float]:
    """sum_b c_b^k * density_b * width, with standard error from the bin
    covariance when it is tracked."""
    if k < 0:
        raise ValueError("moment order must be >= 0")
    return hist.functional(hist.centers ** k)


def integral(hist: SignedHistogram) -> tuple[float, float]:
    """Integral over [0, l_max); overflow excluded (see ``overflow_weight``)."""
    return moment(hist, 0)


def linear_combine(coeffs: Sequence[float], hists: Sequence[SignedHistogram]) -> SignedHistogram:
    """Bin-wise sum c_i h_i.  Variances add as for independent inputs; a
    :class:`SharedStreamWarning` is emitted when two inputs carry the same
    stream tag, since their covariance is then ignored."""
    if len(coeffs) != len(hists) or not hists:
        raise ValueError("need one coefficient per histogram")
    first = hists[0]
    for h in hists[1:]:
        if not first.same_binning(h):
            raise BinningMismatch("histograms must share l_max and n_bins")
    tags = [h.stream for h in hists if h.stream is not None]
    if len(tags) != len(set(tags)):
        warnings.warn("linear_combine inputs share a sample stream; error bars ignore covariance",
                      SharedStreamWarning, stacklevel=2)
    nb = first.n_bins
    dens = np.zeros(nb)
    var = np.zeros(nb)
    cov = np.zeros((nb, nb))
    ovf = 0.0
    for c, h in zip(coeffs, hists):
        dens = dens + c * h.weights
        var = var + c * c * h.variance()
        hc = h.covariance()
        cov = None if (cov is None or hc is None) else cov + c * c * hc
        ovf += c * h.overflow_weight
    out = SignedHistogram(first.l_max, nb, 1.0, dens * first.width, var=var, cov=cov)
    out.overflow = ovf
    return out


@dataclass
class MatrixDensity:
    """Symmetric n x n matrix of histograms; only i <= j is stored."""

    n: int
    kind: str
    cells: dict = field(default_factory=dict)
    volumes: tuple = ()
    surfaces: tuple = ()
    masses: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")

    @staticmethod
    def key(i: int, j: int) -> tuple[int, int]:
        return (i, j) if i <= j else (j, i)

    def __getitem__(self, ij) -> SignedHistogram:
        return self.cells[self.key(*ij)]

    def __setitem__(self, ij, hist: SignedHistogram):
        self.cells[self.key(*ij)] = hist

    def pairs(self) -> Iterable[tuple[int, int]]:
        return sorted(self.cells)

    @property
    def v_union(self) -> float:
        return float(sum(self.volumes))

    @property
    def s_union(self) -> float:
        return float(sum(self.surfaces))

    @property
    def l_max(self) -> float:
        return next(iter(self.cells.values())).l_max

    @property
    def n_bins(self) -> int:
        return next(iter(self.cells.values())).n_bins


def matrix_sum(m: MatrixDensity) -> SignedHistogram:
    """Sum over all (i, j) with off-diagonal cells counted twice.

    Cells built from the same events are combined by summing raw sums, so the
    result equals the directly binned union histogram of those events.
    """
    pairs = list(m.pairs())
    first = m[pairs[0]]
    out = first.empty_like()
    out.n_events = first.n_events
    for i, j in pairs:
        h = m[i, j]
        if not h.same_binning(first) or h.scale != first.scale or h.derived:
            raise BinningMismatch("matrix cells must share binning and scale")
        f = 1.0 if i == j else 2.0
        out.sums = out.sums + f * h.sums
        out.overflow += f * h.overflow
    # event-level errors of the union come from the joint accumulator when present
    joint = m.meta.get("joint")
    if joint is not None:
        out.sumsq = joint.sumsq.copy()
        out.cross = None if joint.cross is None else joint.cross.copy()
    else:
        out.sumsq = sum((1.0 if i == j else 4.0) * m[i, j].sumsq for i, j in pairs)
        out.cross = None
    return out


def to_csv(hist: SignedHistogram, kind: str, pair: tuple[int, int], seed: int,
           values: np.ndarray | None = None, errors: np.ndarray | None = None) -> str:
    """CSV export; ``values``/``errors`` override density (e.g. for gamma)."""
    vals = hist.weights if values is None else values
    errs = hist.stderr() if errors is None else errors
    e = hist.edges
    lines = [f"# kind={kind} pair={pair[0]},{pair[1]} l_max={hist.l_max:.9g} "
             f"bins={hist.n_bins} seed={seed}"]
    lines += [f"{e[b]:.9g},{e[b + 1]:.9g},{vals[b]:.9g},{errs[b]:.9g}" for b in range(hist.n_bins)]
    return "\n".join(lines) + "\n"
