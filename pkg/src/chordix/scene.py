"""Validated collections of bodies, union aggregates and overlap decomposition."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import geometry as geo
from .errors import DuplicateId, ParseError, SharedBoundary, UnsupportedOverlapChain
from .streams import RandomStream

DISJOINT, OVERLAPPING, IDENTICAL = "disjoint", "overlapping", "identical"
OVERLAP_POINTS = 1 << 20


@dataclass(frozen=True, eq=False)
class Scene:
    bodies: tuple[geo.Body, ...]
    ids: tuple[str, ...]
    measures: tuple[geo.Measures, ...]
    pair_status: np.ndarray

    def __len__(self) -> int:
        return len(self.bodies)

    @property
    def shapes(self) -> list[geo.Shape]:
        return [b.shape for b in self.bodies]

    @property
    def volumes(self) -> np.ndarray:
        return np.array([m.volume for m in self.measures])

    @property
    def surfaces(self) -> np.ndarray:
        return np.array([m.surface for m in self.measures])

    @property
    def masses(self) -> np.ndarray:
        return np.array([m.mass for m in self.measures])

    @property
    def v_union(self) -> float:
        return float(sum(m.volume for m in self.measures))

    @property
    def s_union(self) -> float:
        return float(sum(m.surface for m in self.measures))

    @property
    def bounding_sphere(self) -> tuple[np.ndarray, float]:
        return geo.enclosing_sphere(self.shapes)

    @property
    def diameter(self) -> float:
        """Largest farthest-point distance between any two bodies' bounds."""
        balls = [geo.bounding_sphere(s) for s in self.shapes]
        return max(float(np.linalg.norm(c1 - c2)) + r1 + r2
                   for c1, r1 in balls for c2, r2 in balls)

    def default_l_max(self) -> float:
        return 1.05 * self.diameter

    @property
    def disjoint(self) -> bool:
        n = len(self)
        return all(self.pair_status[i, j] == DISJOINT
                   for i in range(n) for j in range(n) if i != j)

    def index(self, key: int | str) -> int:
        if isinstance(key, str):
            return self.ids.index(key)
        return int(key)

    def subscene(self, indices: Sequence[int]) -> "Scene":
        idx = list(indices)
        return Scene(tuple(self.bodies[i] for i in idx), tuple(self.ids[i] for i in idx),
                     tuple(self.measures[i] for i in idx), self.pair_status[np.ix_(idx, idx)])

    def union_scene(self) -> "Scene":
        """The whole scene as one (generally nonconvex) body.

        Aggregates are the plain sums, valid because bodies are pairwise
        disjoint and share no boundary."""
        shape = self.shapes[0]
        for s in self.shapes[1:]:
            shape = geo.Csg("union", shape, s)
        m = geo.Measures(self.v_union, self.s_union, float(self.masses.sum()))
        return Scene((geo.Body(shape),), ("union",), (m,), np.array([[IDENTICAL]], dtype=object))


# --------------------------------------------------------------------------
# parsing


def _parse_vec(obj, name) -> np.ndarray:
    try:
        v = np.asarray(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{name}: expected 3 numbers") from exc
    if v.shape != (3,):
        raise ParseError(f"{name}: expected 3 numbers")
    return v


def parse_shape(obj) -> geo.Shape:
    if not isinstance(obj, dict) or "type" not in obj:
        raise ParseError(f"shape must be an object with a 'type': {obj!r}")
    kind = obj["type"]
    try:
        if kind == "sphere":
            return geo.Sphere(_parse_vec(obj["center"], "center"), float(obj["radius"]))
        if kind == "box":
            return geo.AxisBox(_parse_vec(obj["min"], "min"), _parse_vec(obj["max"], "max"))
        if kind == "csg":
            return geo.Csg(obj["op"], parse_shape(obj["left"]), parse_shape(obj["right"]))
    except KeyError as exc:
        raise ParseError(f"{kind}: missing field {exc}") from exc
    except ValueError as exc:
        raise ParseError(str(exc)) from exc
    raise ParseError(f"unknown shape type {kind!r}")


def parse_density(obj) -> geo.DensityField:
    if obj is None:
        return geo.ConstantDensity(1.0)
    try:
        kind = obj["type"]
        if kind == "constant":
            return geo.ConstantDensity(float(obj.get("value", 1.0)))
        if kind == "radial_linear":
            return geo.RadialLinearDensity(_parse_vec(obj["center"], "center"),
                                           float(obj["a"]), float(obj["b"]))
    except (KeyError, TypeError) as exc:
        raise ParseError(f"bad density {obj!r}") from exc
    except ValueError as exc:
        raise ParseError(str(exc)) from exc
    raise ParseError(f"unknown density type {kind!r}")


def parse_scene(doc) -> tuple[list[str], list[geo.Body]]:
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("bodies"), list) or not doc["bodies"]:
        raise ParseError("scene needs a non-empty 'bodies' list")
    ids, bodies = [], []
    for k, entry in enumerate(doc["bodies"]):
        if not isinstance(entry, dict) or "shape" not in entry:
            raise ParseError(f"body {k}: missing 'shape'")
        bid = str(entry.get("id", f"b{k}"))
        if bid in ids:
            raise DuplicateId(f"duplicate body id {bid!r}")
        ids.append(bid)
        bodies.append(geo.Body(parse_shape(entry["shape"]), parse_density(entry.get("density"))))
    return ids, bodies


def load_scene(path: str | Path, rng: RandomStream | None = None) -> "Scene":
    return build_scene(Path(path).read_text(encoding="utf-8"), rng)


# --------------------------------------------------------------------------
# pair classification


def _classify_spheres(a: geo.Sphere, b: geo.Sphere, tol: float) -> str:
    d = float(np.linalg.norm(a.center - b.center))
    if d <= tol and abs(a.radius - b.radius) <= tol:
        return IDENTICAL
    if abs(d - (a.radius + b.radius)) <= tol or abs(d - abs(a.radius - b.radius)) <= tol:
        raise SharedBoundary(f"spheres touch (center distance {d:.12g})")
    return DISJOINT if d > a.radius + b.radius else OVERLAPPING


def _classify_boxes(a: geo.AxisBox, b: geo.AxisBox, tol: float) -> str:
    if np.all(np.abs(a.min - b.min) <= tol) and np.all(np.abs(a.max - b.max) <= tol):
        return IDENTICAL
    gap = np.maximum(a.min, b.min) - np.minimum(a.max, b.max)
    if np.any(gap > tol):
        return DISJOINT
    if np.any(np.abs(gap) <= tol):
        raise SharedBoundary("boxes touch")
    return OVERLAPPING


def _classify_sphere_box(s: geo.Sphere, b: geo.AxisBox, tol: float) -> str:
    nearest = np.clip(s.center, b.min, b.max)
    dist = float(np.linalg.norm(s.center - nearest))
    if abs(dist - s.radius) <= tol:
        raise SharedBoundary("sphere touches box")
    return DISJOINT if dist > s.radius else OVERLAPPING


def _classify_mc(a: geo.Shape, b: geo.Shape, rng: RandomStream) -> str:
    lo1, hi1 = geo.bounding_box(a)
    lo2, hi2 = geo.bounding_box(b)
    lo, hi = np.maximum(lo1, lo2), np.minimum(hi1, hi2)
    if np.any(lo >= hi):
        return DISJOINT
    pts = lo + (hi - lo) * rng.generator().random((OVERLAP_POINTS, 3))
    both = geo.contains_batch(a, pts) & geo.contains_batch(b, pts)
    k = int(both.sum())
    p = k / OVERLAP_POINTS
    sigma = math.sqrt(p * (1 - p) / OVERLAP_POINTS)
    return OVERLAPPING if p > 3.0 * sigma and k > 0 else DISJOINT


def classify_pair(a: geo.Shape, b: geo.Shape, tol: float, rng: RandomStream) -> str:
    if isinstance(a, geo.Sphere) and isinstance(b, geo.Sphere):
        return _classify_spheres(a, b, tol)
    if isinstance(a, geo.AxisBox) and isinstance(b, geo.AxisBox):
        return _classify_boxes(a, b, tol)
    if isinstance(a, geo.Sphere) and isinstance(b, geo.AxisBox):
        return _classify_sphere_box(a, b, tol)
    if isinstance(a, geo.AxisBox) and isinstance(b, geo.Sphere):
        return _classify_sphere_box(b, a, tol)
    return _classify_mc(a, b, rng)


def build_scene(spec, rng: RandomStream | None = None) -> Scene:
    """Scene from a JSON document (string or parsed dict) or from a list of
    ``(id, Body)`` pairs."""
    rng = rng or RandomStream(42, 0, (101,))
    if isinstance(spec, list):
        ids = [i for i, _ in spec]
        bodies = [b for _, b in spec]
        if len(set(ids)) != len(ids):
            raise DuplicateId("duplicate body ids")
    else:
        ids, bodies = parse_scene(spec)
    ms = tuple(geo.measures(b, rng=rng.derive(k)) for k, b in enumerate(bodies))
    n = len(bodies)
    balls = [geo.bounding_sphere(b) for b in bodies]
    diam = max(float(np.linalg.norm(c1 - c2)) + r1 + r2 for c1, r1 in balls for c2, r2 in balls)
    tol = 1e-9 * diam
    status = np.full((n, n), IDENTICAL, dtype=object)
    for i in range(n):
        for j in range(i + 1, n):
            s = classify_pair(bodies[i].shape, bodies[j].shape, tol, rng.derive(1000 + i, j))
            status[i, j] = status[j, i] = s
    return Scene(tuple(bodies), tuple(ids), ms, status)


def decompose_overlaps(scene: Scene, rng: RandomStream | None = None) -> Scene:
    """Split each overlapping pair V1, V2 into V1 minus V2, V2 minus V1 and V1 & V2.

    Only isolated pairs are supported: a body overlapping two or more others
    raises :class:`UnsupportedOverlapChain`.  The common part inherits the
    density of the first body (exact only for uniform densities).
    """
    rng = rng or RandomStream(42, 0, (102,))
    n = len(scene)
    partners = [[j for j in range(n) if j != i and scene.pair_status[i, j] != DISJOINT]
                for i in range(n)]
    if all(not p for p in partners):
        return scene
    if any(len(p) > 1 for p in partners):
        raise UnsupportedOverlapChain("a body overlaps two or more others")
    bodies, ids, ms = [], [], []
    done = set()
    k = 0
    for i in range(n):
        if i in done:
            continue
        if not partners[i]:
            bodies.append(scene.bodies[i])
            ids.append(scene.ids[i])
            ms.append(scene.measures[i])
            continue
        j = partners[i][0]
        done.update((i, j))
        bi, bj = scene.bodies[i], scene.bodies[j]
        common = geo.Csg("intersect", bi.shape, bj.shape)
        parts = [
            (f"{scene.ids[i]}-{scene.ids[j]}", geo.Body(geo.Csg("subtract", bi.shape, common), bi.density)),
            (f"{scene.ids[j]}-{scene.ids[i]}", geo.Body(geo.Csg("subtract", bj.shape, common), bj.density)),
            (f"{scene.ids[i]}&{scene.ids[j]}", geo.Body(common, bi.density)),
        ]
        for pid, body in parts:
            ms.append(geo.measures(body, rng=rng.derive(k)))
            k += 1
            ids.append(pid)
            bodies.append(body)
    m = len(bodies)
    status = np.full((m, m), DISJOINT, dtype=object)
    np.fill_diagonal(status, IDENTICAL)
    return Scene(tuple(bodies), tuple(ids), tuple(ms), status)


def pick_bodies(scene: Scene, gen: np.random.Generator, n: int) -> np.ndarray:
    """Body labels drawn with probability V_k / V_union."""
    if len(scene) == 1:
        return np.zeros(n, dtype=np.int64)
    p = scene.volumes / scene.v_union
    return gen.choice(len(scene), size=n, p=p)


def pick_body(scene: Scene, rng: RandomStream | np.random.Generator) -> int:
    gen = rng.generator() if isinstance(rng, RandomStream) else rng
    return int(pick_bodies(scene, gen, 1)[0])


def sample_union_points(scene: Scene, gen: np.random.Generator, n: int):
    """Points uniform over the union with their source-body labels."""
    labels = pick_bodies(scene, gen, n)
    pts = np.empty((n, 3))
    for k, shape in enumerate(scene.shapes):
        sel = labels == k
        cnt = int(sel.sum())
        if cnt:
            pts[sel] = geo.sample_points(shape, gen, cnt)
    return pts, labels


def scene_from_bodies(bodies: Sequence[geo.Body], ids: Sequence[str] | None = None,
                      rng: RandomStream | None = None) -> Scene:
    ids = list(ids) if ids is not None else [f"b{k}" for k in range(len(bodies))]
    return build_scene(list(zip(ids, bodies)), rng)
