"""Primitive bodies, CSG composition and their interval algebra.

All intersection routines are batched: they take ``(n, 3)`` arrays of origins
and unit directions and return padded interval arrays of shape ``(n, k, 2)``
holding ``(t_enter, t_exit)`` pairs, left-justified and sorted, with NaN in
unused slots.  The scalar API (:func:`ray_intervals`, :func:`line_intervals`,
:func:`interval_bool`) wraps the batched code with ``n = 1`` so there is a
single implementation of every sign-relevant computation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import EmptyBody, RejectionOverflow
from .streams import RandomStream, uniform_directions

TOL = 1e-12
GRAZING = 1e-12
REJECTION_LIMIT = 1_000_000
VOLUME_POINTS = 1 << 22
SURFACE_LINES = 1 << 20

Vec = np.ndarray


def _vec(v) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(3)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite coordinates {v!r}")
    return a


# --------------------------------------------------------------------------
# shapes


@dataclass(frozen=True, eq=False)
class Sphere:
    center: Vec
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center))
        if not self.radius > 0:
            raise ValueError("sphere radius must be positive")
        object.__setattr__(self, "radius", float(self.radius))


@dataclass(frozen=True, eq=False)
class AxisBox:
    min: Vec
    max: Vec

    def __post_init__(self):
        object.__setattr__(self, "min", _vec(self.min))
        object.__setattr__(self, "max", _vec(self.max))
        if not np.all(self.min < self.max):
            raise ValueError("box min must be < max componentwise")


CSG_OPS = ("union", "intersect", "subtract")


@dataclass(frozen=True, eq=False)
class Csg:
    op: str
    left: "Shape"
    right: "Shape"

    def __post_init__(self):
        if self.op not in CSG_OPS:
            raise ValueError(f"unknown CSG op {self.op!r}")


Shape = Union[Sphere, AxisBox, Csg]


@dataclass(frozen=True)
class ConstantDensity:
    value: float = 1.0

    def __post_init__(self):
        if not self.value >= 0:
            raise ValueError("density must be nonnegative")

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return np.full(len(pts), float(self.value))


@dataclass(frozen=True, eq=False)
class RadialLinearDensity:
    """rho(r) = max(0, a + b |r - center|)."""

    center: Vec
    a: float
    b: float

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center))

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(pts - self.center, axis=1)
        return np.maximum(0.0, self.a + self.b * r)


DensityField = Union[ConstantDensity, RadialLinearDensity]


@dataclass(frozen=True, eq=False)
class Body:
    shape: Shape
    density: DensityField = field(default_factory=ConstantDensity)


# --------------------------------------------------------------------------
# containment


def contains_batch(shape: Shape, pts: np.ndarray) -> np.ndarray:
    if isinstance(shape, Sphere):
        d = pts - shape.center
        return np.einsum("ij,ij->i", d, d) < shape.radius * shape.radius
    if isinstance(shape, AxisBox):
        return np.all((pts > shape.min) & (pts < shape.max), axis=1)
    a = contains_batch(shape.left, pts)
    b = contains_batch(shape.right, pts)
    if shape.op == "union":
        return a | b
    if shape.op == "intersect":
        return a & b
    return a & ~b


def contains(body: Body | Shape, point) -> bool:
    shape = body.shape if isinstance(body, Body) else body
    return bool(contains_batch(shape, _vec(point)[None, :])[0])


# --------------------------------------------------------------------------
# padded interval arrays


def _empty(n: int, k: int = 1) -> np.ndarray:
    return np.full((n, k, 2), np.nan)


def _compact(values: np.ndarray, mask: np.ndarray, width: int) -> np.ndarray:
    """Left-justify ``values[mask]`` row by row into an (n, width) NaN array."""
    n = values.shape[0]
    out = np.full((n, max(width, 1)), np.nan)
    rows, cols = np.nonzero(mask)
    if rows.size:
        pos = np.cumsum(mask, axis=1)[rows, cols] - 1
        out[rows, pos] = values[rows, cols]
    return out


def _clean(iv: np.ndarray, tol: float) -> np.ndarray:
    """Drop intervals of length <= tol and merge gaps <= tol."""
    s, e = iv[..., 0], iv[..., 1]
    keep = (e - s) > tol  # NaN compares False
    k = iv.shape[1]
    s = _compact(s, keep, k)
    e = _compact(e, keep, k)
    valid = ~np.isnan(s)
    gap = s[:, 1:] - e[:, :-1]
    joined = valid[:, 1:] & (gap <= tol)
    start_keep = valid.copy()
    start_keep[:, 1:] &= ~joined
    end_keep = valid.copy()
    end_keep[:, :-1] &= ~joined
    width = max(int(start_keep.sum(axis=1).max(initial=0)), 1)
    out = np.empty((iv.shape[0], width, 2))
    out[..., 0] = _compact(s, start_keep, k)[:, :width]
    out[..., 1] = _compact(e, end_keep, k)[:, :width]
    return out


def bool_batch(op: str, a: np.ndarray, b: np.ndarray, tol: float = TOL) -> np.ndarray:
    """Boolean combination of two padded interval arrays by an endpoint sweep."""
    n, ka, kb = a.shape[0], a.shape[1], b.shape[1]
    vals = np.concatenate((a.reshape(n, -1), b.reshape(n, -1)), axis=1)
    valid = ~np.isnan(vals)
    vals = np.where(valid, vals, np.inf)
    step = np.tile([1.0, -1.0], ka + kb)
    from_a = np.concatenate((np.ones(2 * ka, bool), np.zeros(2 * kb, bool)))
    da = np.where(valid & from_a, step, 0.0)
    db = np.where(valid & ~from_a, step, 0.0)
    # at equal parameter, entries sort before exits
    is_exit = np.broadcast_to(step < 0, vals.shape)
    order = np.lexsort((is_exit, vals), axis=-1)
    vals = np.take_along_axis(vals, order, axis=1)
    in_a = np.cumsum(np.take_along_axis(da, order, axis=1), axis=1) > 0.5
    in_b = np.cumsum(np.take_along_axis(db, order, axis=1), axis=1) > 0.5
    if op == "union":
        state = in_a | in_b
    elif op == "intersect":
        state = in_a & in_b
    elif op == "subtract":
        state = in_a & ~in_b
    else:
        raise ValueError(f"unknown op {op!r}")
    prev = np.zeros_like(state)
    prev[:, 1:] = state[:, :-1]
    width = ka + kb
    out = np.empty((n, width, 2))
    out[..., 0] = _compact(vals, state & ~prev, width)
    out[..., 1] = _compact(vals, ~state & prev, width)
    return _clean(out, tol)


def _sphere_lines(sp: Sphere, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    oc = origins - sp.center
    b = np.einsum("ij,ij->i", dirs, oc)
    c = np.einsum("ij,ij->i", oc, oc) - sp.radius * sp.radius
    disc = b * b - c
    hit = disc >= GRAZING
    root = np.sqrt(np.where(hit, disc, 0.0))
    # stable roots of t^2 + 2bt + c = 0
    q = -(b + np.copysign(root, b))
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = q
        t2 = np.where(q != 0.0, c / q, -q)
    out = _empty(len(origins))
    out[hit, 0, 0] = np.minimum(t1, t2)[hit]
    out[hit, 0, 1] = np.maximum(t1, t2)[hit]
    return out


def _box_lines(bx: AxisBox, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    n = len(origins)
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    for ax in range(3):
        o, d = origins[:, ax], dirs[:, ax]
        par = d == 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (bx.min[ax] - o) / d
            tb = (bx.max[ax] - o) / d
        near = np.where(par, -np.inf, np.minimum(ta, tb))
        far = np.where(par, np.inf, np.maximum(ta, tb))
        outside = par & ((o <= bx.min[ax]) | (o >= bx.max[ax]))
        near = np.where(outside, np.inf, near)
        far = np.where(outside, -np.inf, far)
        lo = np.maximum(lo, near)
        hi = np.minimum(hi, far)
    out = _empty(n)
    hit = hi - lo > TOL
    out[hit, 0, 0] = lo[hit]
    out[hit, 0, 1] = hi[hit]
    return out


def line_intervals_batch(shape: Shape, origins: np.ndarray, dirs: np.ndarray,
                         tol: float = TOL) -> np.ndarray:
    if isinstance(shape, Sphere):
        return _sphere_lines(shape, origins, dirs)
    if isinstance(shape, AxisBox):
        return _box_lines(shape, origins, dirs)
    a = line_intervals_batch(shape.left, origins, dirs, tol)
    b = line_intervals_batch(shape.right, origins, dirs, tol)
    return bool_batch(shape.op, a, b, tol)


def ray_intervals_batch(shape: Shape, origins: np.ndarray, dirs: np.ndarray,
                        tol: float = TOL) -> np.ndarray:
    iv = line_intervals_batch(shape, origins, dirs, tol).copy()
    s, e = iv[..., 0], iv[..., 1]
    gone = e <= tol
    s[gone] = np.nan
    e[gone] = np.nan
    np.maximum(s, 0.0, out=s, where=~np.isnan(s))
    if iv.shape[1] == 1:
        return iv
    return _clean(iv, tol)


# --------------------------------------------------------------------------
# scalar interval API


@dataclass(frozen=True)
class IntervalList:
    entries: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        prev = -math.inf
        for t0, t1 in self.entries:
            if not prev < t0 < t1:
                raise ValueError(f"invalid interval list {self.entries!r}")
            prev = t1

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def as_array(self) -> np.ndarray:
        if not self.entries:
            return _empty(1)
        return np.asarray(self.entries, dtype=float)[None, :, :]

    @classmethod
    def from_array(cls, row: np.ndarray) -> "IntervalList":
        ok = ~np.isnan(row[:, 0])
        return cls(tuple((float(a), float(b)) for a, b in row[ok]))


def _unit(direction) -> np.ndarray:
    d = _vec(direction)
    if abs(np.linalg.norm(d) - 1.0) > 1e-12:
        raise ValueError("direction must be a unit vector")
    return d


def _shape(body: Body | Shape) -> Shape:
    return body.shape if isinstance(body, Body) else body


def ray_intervals(body: Body | Shape, origin, direction) -> IntervalList:
    iv = ray_intervals_batch(_shape(body), _vec(origin)[None], _unit(direction)[None])
    return IntervalList.from_array(iv[0])


def line_intervals(body: Body | Shape, point_on_line, direction) -> IntervalList:
    iv = line_intervals_batch(_shape(body), _vec(point_on_line)[None], _unit(direction)[None])
    return IntervalList.from_array(iv[0])


def interval_bool(op: str, a: IntervalList, b: IntervalList, tol: float = TOL) -> IntervalList:
    return IntervalList.from_array(bool_batch(op, a.as_array(), b.as_array(), tol)[0])


# --------------------------------------------------------------------------
# bounds


def _enclose(c1, r1, c2, r2) -> tuple[np.ndarray, float]:
    d = float(np.linalg.norm(c2 - c1))
    if d + r2 <= r1:
        return c1, r1
    if d + r1 <= r2:
        return c2, r2
    big = 0.5 * (d + r1 + r2)
    return c1 + (big - r1) / d * (c2 - c1), big


def bounding_sphere(body: Body | Shape) -> tuple[np.ndarray, float]:
    shape = _shape(body)
    if isinstance(shape, Sphere):
        return shape.center.copy(), shape.radius
    if isinstance(shape, AxisBox):
        return 0.5 * (shape.min + shape.max), 0.5 * float(np.linalg.norm(shape.max - shape.min))
    cl, rl = bounding_sphere(shape.left)
    if shape.op == "subtract":
        return cl, rl
    cr, rr = bounding_sphere(shape.right)
    if shape.op == "intersect":
        return (cl, rl) if rl <= rr else (cr, rr)
    return _enclose(cl, rl, cr, rr)


def enclosing_sphere(shapes) -> tuple[np.ndarray, float]:
    shapes = list(shapes)
    c, r = bounding_sphere(shapes[0])
    for s in shapes[1:]:
        c2, r2 = bounding_sphere(s)
        c, r = _enclose(c, r, c2, r2)
    return c, r


def bounding_box(body: Body | Shape) -> tuple[np.ndarray, np.ndarray]:
    shape = _shape(body)
    if isinstance(shape, Sphere):
        return shape.center - shape.radius, shape.center + shape.radius
    if isinstance(shape, AxisBox):
        return shape.min.copy(), shape.max.copy()
    lo1, hi1 = bounding_box(shape.left)
    if shape.op == "subtract":
        return lo1, hi1
    lo2, hi2 = bounding_box(shape.right)
    if shape.op == "union":
        return np.minimum(lo1, lo2), np.maximum(hi1, hi2)
    lo, hi = np.maximum(lo1, lo2), np.minimum(hi1, hi2)
    if np.any(lo >= hi):
        raise EmptyBody("intersection of disjoint bounding boxes")
    return lo, hi


# --------------------------------------------------------------------------
# sampling


def sample_points(shape: Shape, gen: np.random.Generator, n: int) -> np.ndarray:
    """``n`` points uniform over the interior, by rejection from the bounding box."""
    lo, hi = bounding_box(shape)
    out = np.empty((n, 3))
    filled = 0
    misses = 0
    while filled < n:
        want = n - filled
        batch = max(64, int(want * 1.25) + 16)
        pts = lo + (hi - lo) * gen.random((batch, 3))
        ok = pts[contains_batch(shape, pts)]
        if len(ok) == 0:
            misses += batch
            if misses >= REJECTION_LIMIT:
                raise RejectionOverflow("no accepted sample in 1e6 consecutive draws")
            continue
        misses = 0
        take = min(want, len(ok))
        out[filled:filled + take] = ok[:take]
        filled += take
    return out


def sample_point(body: Body | Shape, rng: RandomStream | np.random.Generator) -> np.ndarray:
    gen = rng.generator() if isinstance(rng, RandomStream) else rng
    return sample_points(_shape(body), gen, 1)[0]


# --------------------------------------------------------------------------
# measures


@dataclass(frozen=True)
class Measures:
    volume: float
    surface: float
    mass: float
    volume_err: float = 0.0
    surface_err: float = 0.0
    mass_err: float = 0.0

    def __post_init__(self):
        for name in ("volume", "surface", "mass", "volume_err", "surface_err", "mass_err"):
            object.__setattr__(self, name, float(getattr(self, name)))


def _sphere_radial_mass(radius: float, a: float, b: float) -> float:
    """Integral of max(0, a + b r) 4 pi r^2 over r in [0, radius]."""
    lo, hi = 0.0, radius
    if b == 0.0:
        return max(a, 0.0) * 4.0 / 3.0 * math.pi * radius ** 3
    root = -a / b
    if b > 0:
        lo = min(max(root, 0.0), radius)
    else:
        hi = min(max(root, 0.0), radius)
    if hi <= lo:
        return 0.0

    def prim(r):
        return 4.0 * math.pi * (a * r ** 3 / 3.0 + b * r ** 4 / 4.0)

    return prim(hi) - prim(lo)


def surface_cauchy(shape: Shape, n_lines: int = SURFACE_LINES,
                   rng: RandomStream | None = None) -> tuple[float, float]:
    """Surface area from isotropic lines: S = 4 * pi Rb^2 * E[#intervals].

    Each line meets the boundary 2*(number of intervals) times, and Crofton's
    formula gives S = pi Rb^2 * E[crossings] * 2 for lines drawn uniformly
    over directions and over the disk of radius Rb.  For convex bodies the
    interval count is the hit indicator, which is the mean-projection form.
    Returns (estimate, standard error).
    """
    rng = rng or RandomStream(42, 0, (7,))
    gen = rng.generator()
    center, rb = bounding_sphere(shape)
    dirs = uniform_directions(gen, n_lines)
    feet = disk_points(gen, dirs, center, rb)
    iv = line_intervals_batch(shape, feet, dirs)
    counts = (~np.isnan(iv[..., 0])).sum(axis=1).astype(float)
    scale = 4.0 * math.pi * rb * rb
    return scale * counts.mean(), scale * counts.std(ddof=1) / math.sqrt(n_lines)


def disk_points(gen, dirs, center, rb):
    """Uniform points on the disk of radius rb through center, normal to each dir."""
    n = len(dirs)
    helper = np.where(np.abs(dirs[:, :1]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    e1 = np.cross(dirs, helper)
    e1 /= np.linalg.norm(e1, axis=1)[:, None]
    e2 = np.cross(dirs, e1)
    rad = rb * np.sqrt(gen.random(n))
    ang = gen.uniform(0.0, 2.0 * np.pi, n)
    return center + (rad * np.cos(ang))[:, None] * e1 + (rad * np.sin(ang))[:, None] * e2


def measures(body: Body, n_points: int = VOLUME_POINTS, n_lines: int = SURFACE_LINES,
             rng: RandomStream | None = None) -> Measures:
    """Volume, surface area and mass; closed forms for primitives, MC for CSG."""
    shape, rho = body.shape, body.density
    rng = rng or RandomStream(42, 0, (11,))
    if isinstance(shape, Sphere):
        vol = 4.0 / 3.0 * math.pi * shape.radius ** 3
        surf = 4.0 * math.pi * shape.radius ** 2
        if isinstance(rho, ConstantDensity):
            return Measures(vol, surf, rho.value * vol)
        if np.allclose(rho.center, shape.center, rtol=0, atol=1e-15):
            return Measures(vol, surf, _sphere_radial_mass(shape.radius, rho.a, rho.b))
        mass, mass_err = _mc_mass(shape, rho, n_points, rng)
        return Measures(vol, surf, mass, mass_err=mass_err)
    if isinstance(shape, AxisBox):
        ext = shape.max - shape.min
        vol = float(np.prod(ext))
        surf = 2.0 * float(ext[0] * ext[1] + ext[1] * ext[2] + ext[0] * ext[2])
        if isinstance(rho, ConstantDensity):
            return Measures(vol, surf, rho.value * vol)
        mass, mass_err = _mc_mass(shape, rho, n_points, rng)
        return Measures(vol, surf, mass, mass_err=mass_err)

    lo, hi = bounding_box(shape)
    box_vol = float(np.prod(hi - lo))
    pts = lo + (hi - lo) * rng.generator(0).random((n_points, 3))
    inside = contains_batch(shape, pts)
    p = inside.mean()
    vol = box_vol * p
    vol_err = box_vol * math.sqrt(max(p * (1 - p), 0.0) / n_points)
    if vol <= 3.0 * vol_err:
        raise EmptyBody("MC volume estimate is within 3 sigma of zero")
    w = np.where(inside, rho(pts), 0.0)
    mass = box_vol * w.mean()
    mass_err = box_vol * w.std(ddof=1) / math.sqrt(n_points)
    surf, surf_err = surface_cauchy(shape, n_lines, rng.derive(1))
    return Measures(vol, surf, mass, vol_err, surf_err, mass_err)


def _mc_mass(shape, rho, n_points, rng) -> tuple[float, float]:
    lo, hi = bounding_box(shape)
    box_vol = float(np.prod(hi - lo))
    pts = lo + (hi - lo) * rng.generator(0).random((n_points, 3))
    w = np.where(contains_batch(shape, pts), rho(pts), 0.0)
    return box_vol * w.mean(), box_vol * w.std(ddof=1) / math.sqrt(n_points)
