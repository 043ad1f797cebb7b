import math

import numpy as np
import pytest
from scipy.integrate import quad

from chordix import estimators as est
from chordix import transfer as tr
from chordix.errors import (BinningWarning, OverlappingScene, SingularDiagonal,
                            UnsupportedGeometry, ZeroMass)
from chordix.kernels import ball, const, exponential
from chordix.scene import build_scene
from chordix.streams import RandomStream

V = 4 * math.pi / 3
N = 1 << 18


def sphere(cx, r=1.0, **extra):
    return {"shape": {"type": "sphere", "center": [cx, 0, 0], "radius": r}, **extra}


def scene(*bodies):
    return build_scene({"bodies": list(bodies)})


@pytest.fixture(scope="module")
def pair():
    return scene(sphere(0), sphere(3))


def agrees(res, ref, k=3.0):
    return abs(res.value - ref) <= k * res.stderr + 1e-12 * abs(ref)


def test_ball_kernel_gives_volume_product(pair):
    d = tr.transfer_direct(pair, 0, 1, ball(), 1000, RandomStream(1))
    # phi(R)/(4 pi R^2) is 1 for every pair of points
    assert d.value == pytest.approx(V * V, rel=1e-12) and d.stderr < 1e-12
    g = tr.transfer_via_gamma(pair, 0, 1, ball())
    assert g.value == pytest.approx(V * V, rel=1e-8)


@pytest.mark.parametrize("route", ["direct", "radii", "chords"])
def test_streaming_routes_match_gamma(pair, route):
    k = exponential(1.0)
    ref = tr.transfer_via_gamma(pair, 0, 1, k).value
    fn = {"direct": tr.transfer_direct, "radii": tr.transfer_via_radii,
          "chords": tr.transfer_via_chords}[route]
    res = fn(pair, 0, 1, k, N, RandomStream(2))
    assert res.route == route
    assert agrees(res, ref)


def test_radii_histogram_agrees_with_streaming(pair):
    res = tr.transfer_via_radii(pair, 0, 1, exponential(1.0), N, RandomStream(3), bins=200)
    assert res.extra["hist_agrees"]
    assert abs(res.extra["hist_value"] - res.value) < 3 * res.stderr


def test_chords_diagonal_ball_is_volume_squared():
    unit = scene(sphere(0))
    res = tr.transfer_via_chords(unit, 0, 0, ball(), N, RandomStream(4))
    assert agrees(res, V * V)
    assert abs(res.value / (V * V) - 1) < 0.01


def test_radii_diagonal_const_matches_gamma():
    unit = scene(sphere(0))
    ref = tr.transfer_via_gamma(unit, 0, 0, const()).value
    # covariogram of the unit sphere integrated over [0, 2]
    expect, _ = quad(lambda l: math.pi / 12 * (4 + l) * (2 - l) ** 2, 0.0, 2.0)
    assert ref == pytest.approx(expect, rel=1e-10)
    res = tr.transfer_via_radii(unit, 0, 0, const(), N, RandomStream(5))
    assert agrees(res, ref)


def test_singular_diagonal(pair):
    with pytest.raises(SingularDiagonal):
        tr.transfer_direct(pair, 0, 0, const(), 100, RandomStream(1))
    with pytest.raises(SingularDiagonal):
        tr.transfer_direct(pair, 1, 1, exponential(2.0), 100, RandomStream(1))
    # the ball kernel vanishes at zero
    tr.transfer_direct(pair, 0, 0, ball(), 100, RandomStream(1))


def test_const_kernel_far_apart():
    far = scene(sphere(0), sphere(100))
    res = tr.transfer_direct(far, 0, 1, const(), 100_000, RandomStream(6))
    # point-mass limit V^2 / (4 pi D^2), corrections of order (R/D)^2
    assert res.value == pytest.approx(V * V / (4 * math.pi * 1e4), rel=2e-3)
    near = tr.transfer_direct(scene(sphere(0), sphere(3)), 0, 1, const(), 100_000, RandomStream(6))
    assert res.value < 1e-3 * near.value


def test_radii_far_apart_is_zero():
    far = scene(sphere(0), sphere(100))
    res = tr.transfer_via_radii(far, 0, 1, exponential(1.0), N, RandomStream(7))
    assert abs(res.value) < 1e-12


def test_eta_route_and_empty_cell():
    sc = scene(sphere(0), sphere(3))
    m, _ = est.estimate_eta(sc, N, RandomStream(8), bins=200)
    res = tr.transfer_via_eta(sc, 0, 1, exponential(1.0), m)
    ref = tr.transfer_via_gamma(sc, 0, 1, exponential(1.0)).value
    assert abs(res.value - ref) < 3 * res.stderr + 0.01 * ref
    assert res.extra["skipped"] == 0.0
    far = scene(sphere(0), sphere(10))
    m, _ = est.estimate_eta(far, 1000, RandomStream(8), bins=50, l_max=5.0)
    with pytest.warns(BinningWarning):
        res = tr.transfer_via_eta(far, 0, 1, exponential(1.0), m)
    assert res.value == 0.0


def test_lambda_route_is_binned_chords(pair):
    m, _ = est.estimate_chords(pair, N, RandomStream(9), bins=100)
    lam = est.lambda_from_mu(m, pair)
    k = exponential(1.0)
    res = tr.transfer_via_lambda(pair, 0, 1, k, lam)
    assert res.extra["c_lambda"] == pytest.approx(16 * math.pi / 3, rel=1e-15)
    val, err = tr.chords_binned(pair, 0, 1, k, m)
    assert res.value == pytest.approx(val, rel=1e-12)
    assert res.stderr == pytest.approx(err, rel=1e-9)


def test_gamma_route_rejects_boxes():
    sc = build_scene({"bodies": [
        {"shape": {"type": "box", "min": [0, 0, 0], "max": [1, 1, 1]}},
        sphere(3)]})
    with pytest.raises(UnsupportedGeometry):
        tr.transfer_via_gamma(sc, 0, 1, exponential(1.0))
    graded = scene(sphere(0, density={"type": "radial_linear", "center": [0, 0, 0], "a": 1, "b": 1}),
                   sphere(3))
    with pytest.raises(UnsupportedGeometry):
        tr.transfer_via_gamma(graded, 0, 1, exponential(1.0))


def test_overlapping_pair_rejected_for_line_routes():
    sc = scene(sphere(0), sphere(1))
    with pytest.raises(OverlappingScene):
        tr.transfer_via_radii(sc, 0, 1, exponential(1.0), 100, RandomStream(1))
    with pytest.raises(OverlappingScene):
        tr.transfer_via_chords(sc, 0, 1, exponential(1.0), 100, RandomStream(1))


def test_nonuniform():
    sc = scene(sphere(0, density={"type": "constant", "value": 0}), sphere(3))
    with pytest.raises(ZeroMass):
        tr.transfer_nonuniform(sc, 0, 1, exponential(1.0), 100, RandomStream(1))
    sc = scene(sphere(0, density={"type": "constant", "value": 2.0}), sphere(3))
    res = tr.transfer_nonuniform(sc, 0, 1, exponential(1.0), N, RandomStream(10))
    plain = tr.transfer_direct(sc, 0, 1, exponential(1.0), N, RandomStream(10))
    assert res.value == pytest.approx(2 * plain.value, rel=1e-12)
    assert res.extra["c_lambda_expected"] == pytest.approx(3 / math.pi * 2 * V * V)
    assert res.extra["c_lambda_estimate"] == pytest.approx(res.extra["c_lambda_expected"], rel=1e-12)


def test_transfer_result_validation():
    with pytest.raises(ValueError):
        tr.TransferResult("direct", float("nan"), 0.0)
    with pytest.raises(ValueError):
        tr.TransferResult("direct", 1.0, -1.0)
    d = tr.TransferResult("direct", 1, 0, 5, 0.1, {"x": 1}).as_dict()
    assert d == {"route": "direct", "value": 1.0, "stderr": 0.0, "n_samples": 5,
                 "wall_time": 0.1, "x": 1}
