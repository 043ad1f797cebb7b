"""Acceptance criteria at their stated budgets and tolerances.

Each test carries a ``criterion`` marker; conftest prints one PASS/FAIL line
per criterion at the end of the run.  Scalar checks use |z| < 3 literally.
Bin-wise maxima over many bins use the same 3-sigma level family-wise
(Bonferroni over the compared bins), and the literal max |z| is printed
alongside.
"""

import json
import math
import time

import numpy as np
import pytest
from scipy.stats import chi2

from chordix import analytic
from chordix import estimators as est
from chordix import geometry as geo
from chordix import transfer as tr
from chordix.cli import main
from chordix.kernels import ball, exponential
from chordix.scene import build_scene, scene_from_bodies
from chordix.signed_hist import integral, moment
from chordix.streams import RandomStream
from chordix.verify import (ALPHA, EXACT_PASS, Budgets, bonferroni_threshold,
                            counting_variance, verify_identities)

N = 10 ** 7
V1V2 = (4 * math.pi / 3) ** 2


def two_spheres(D: float = 3.0):
    return build_scene({"bodies": [
        {"id": "a", "shape": {"type": "sphere", "center": [0, 0, 0], "radius": 1.0}},
        {"id": "b", "shape": {"type": "sphere", "center": [D, 0, 0], "radius": 1.0}},
    ]})


@pytest.fixture(scope="module")
def pair():
    return two_spheres()


@pytest.fixture(scope="module")
def unit():
    return scene_from_bodies([geo.Body(geo.Sphere((0, 0, 0), 1.0))], ["unit"])


@pytest.fixture(scope="module")
def pair_matrices(pair):
    """eta and mu matrices at 1e7 events shared by criteria 3, 4 and 5."""
    rng = RandomStream(42).derive(1)
    t0 = time.perf_counter()
    eta, _ = est.estimate_eta(pair, N, rng.derive(1))
    t_eta = time.perf_counter() - t0
    t0 = time.perf_counter()
    mu, bal = est.estimate_chords(pair, N, rng.derive(2))
    t_mu = time.perf_counter() - t0
    lam = est.lambda_from_mu(mu, pair)
    return {"eta": eta, "mu": mu, "lambda": lam, "balance": bal, "t_eta": t_eta, "t_mu": t_mu}


# --------------------------------------------------------------------------


@pytest.mark.criterion(1, "Cauchy mean chord")
def test_cauchy_mean_chord(unit, detail):
    t0 = time.perf_counter()
    mu, _ = est.estimate_chords(unit, 10 ** 6, RandomStream(42).derive(2), 100, 2.0)
    val, err = moment(mu[0, 0], 1)
    dt = time.perf_counter() - t0
    rel = val / (4 / 3) - 1
    detail(f"<l> = {val:.6f} +- {err:.1e}, rel {rel:+.2e}, {dt:.1f} s")
    assert abs(rel) < 0.01
    assert dt < 10.0


@pytest.mark.criterion(2, "sphere eta/iota/mu oracles")
def test_sphere_distributions(unit, detail):
    bins, l_max = 100, 2.0
    rng = RandomStream(42).derive(3)
    exact = analytic.sphere_bin_means(1.0, np.linspace(0.0, l_max, bins + 1))
    t0 = time.perf_counter()
    runs = {
        "eta": est.estimate_eta(unit, N, rng.derive(1), bins, l_max)[0],
        "iota": est.estimate_radii(unit, N, rng.derive(2), bins, l_max)[0],
        "mu": est.estimate_chords(unit, N, rng.derive(3), bins, l_max)[0],
    }
    dt = time.perf_counter() - t0
    # weight one event puts into a single bin: one distance, one crossing,
    # or two equal +L segments per line
    mult = {"eta": 1.0, "iota": 1.0, "mu": 2.0}
    zs, devs, pvals = {}, {}, {}
    for kind, m in runs.items():
        h = m[0, 0]
        var = counting_variance(h, exact[kind], mult[kind])
        d = h.weights - exact[kind]
        z = d / np.sqrt(var)
        zs[kind] = z
        devs[kind] = float(np.max(np.abs(d)) / exact[kind].max())
        pvals[kind] = float(chi2.sf(np.sum(z * z), bins))
    thr = bonferroni_threshold(sum(z.size for z in zs.values()))
    for kind in runs:
        detail(f"{kind}: max|z| {np.max(np.abs(zs[kind])):.2f} (family-wise limit {thr:.2f}), "
               f"max dev {100 * devs[kind]:.2f}% of peak, chi2 p {pvals[kind]:.3f}")
    detail(f"{dt:.1f} s")
    for kind in runs:
        assert np.max(np.abs(zs[kind])) < thr
        assert devs[kind] < 0.02
        assert pvals[kind] > ALPHA
    assert dt < 60.0


@pytest.mark.criterion(3, "ball-kernel universality")
def test_ball_universality(pair, pair_matrices, detail):
    k = ball()
    rng = RandomStream(42).derive(4)
    g = tr.transfer_via_gamma(pair, 0, 1, k)
    results = [
        tr.transfer_direct(pair, 0, 1, k, N, rng.derive(1)),
        tr.transfer_via_eta(pair, 0, 1, k, pair_matrices["eta"]),
        tr.transfer_via_radii(pair, 0, 1, k, N, rng.derive(2)),
        tr.transfer_via_chords(pair, 0, 1, k, N, rng.derive(3)),
        tr.transfer_via_lambda(pair, 0, 1, k, pair_matrices["lambda"]),
    ]
    detail(f"gamma {g.value:.9f} (rel {g.value / V1V2 - 1:+.1e})")
    for r in results:
        detail(f"{r.route} {r.value:.4f} ({100 * (r.value / V1V2 - 1):+.2f}%)")
    assert math.isclose(g.value, V1V2, rel_tol=1e-6)
    for r in results:
        assert abs(r.value / V1V2 - 1) < 0.01, r.route


@pytest.mark.criterion(4, "exp(1) route agreement")
def test_route_agreement(pair, pair_matrices, detail):
    k = exponential(1.0)
    rng = RandomStream(42).derive(5)
    ref = tr.transfer_via_gamma(pair, 0, 1, k).value
    t0 = time.perf_counter()
    results = [
        tr.transfer_direct(pair, 0, 1, k, N, rng.derive(1)),
        tr.transfer_via_eta(pair, 0, 1, k, pair_matrices["eta"]),
        tr.transfer_via_radii(pair, 0, 1, k, N, rng.derive(2)),
        tr.transfer_via_chords(pair, 0, 1, k, N, rng.derive(3)),
        tr.transfer_via_lambda(pair, 0, 1, k, pair_matrices["lambda"]),
    ]
    dt = time.perf_counter() - t0 + pair_matrices["t_eta"] + pair_matrices["t_mu"]
    detail(f"reference {ref:.6f}")
    for r in results:
        detail(f"{r.route} {r.value:.6f} +- {r.stderr:.1e} (z {(r.value - ref) / r.stderr:+.2f})")
    detail(f"{dt:.1f} s")
    for r in results:
        assert abs(r.value - ref) < 3 * r.stderr + 0.01 * abs(ref), r.route
    assert dt < 120.0


@pytest.mark.criterion(5, "signed-distribution zero laws")
def test_zero_laws(pair, pair_matrices, detail):
    iota, bal_r = est.estimate_radii(pair, N, RandomStream(42).derive(6))
    mu, bal_c = pair_matrices["mu"], pair_matrices["balance"]
    checks = {
        "int iota12": integral(iota[0, 1]),
        "int mu12": integral(mu[0, 1]),
        "int l mu12": moment(mu[0, 1], 1),
    }
    # the integrals cancel inside every event, so their stderr is 0 and only
    # floating-point rounding of the summed densities remains
    rounding = {name: 1e-12 * float(np.sum(np.abs(h.weights)) * h.width * h.l_max)
                for name, h in (("int iota12", iota[0, 1]), ("int mu12", mu[0, 1]),
                                ("int l mu12", mu[0, 1]))}
    for name, (val, err) in checks.items():
        z = 0.0 if abs(val) <= rounding[name] else val / err
        detail(f"{name} = {val:+.2e} +- {err:.1e} (z {z:+.2f})")
        assert abs(z) < 3, name
    for bal in (bal_r, bal_c):
        for i, j in ((0, 1), (1, 0)):
            assert bal.n_plus[(i, j)] > 0
            assert bal.balance(i, j) == 0
    assert bal_r.unbalanced_events == 0
    detail(f"N+ = N- exactly; max quadruplet residual {bal_c.max_quadruplet_residual:.1e}")
    assert bal_c.max_quadruplet_residual <= 1e-9


@pytest.mark.criterion(5, "signed-distribution zero laws")
def test_quadruplet_identity_per_event(pair):
    # independent of the estimator: raw line intervals of both spheres
    gen = RandomStream(42).derive(7).generator()
    center, rb = pair.bounding_sphere
    n = 200_000
    dirs = gen.normal(size=(n, 3))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    feet = geo.disk_points(gen, dirs, center, rb)
    a = geo.line_intervals_batch(pair.shapes[0], feet, dirs)
    c = geo.line_intervals_batch(pair.shapes[1], feet, dirs)
    hit = ~np.isnan(a[:, 0, 0]) & ~np.isnan(c[:, 0, 0])
    assert hit.sum() > 1000
    A, B = a[hit, 0, 0], a[hit, 0, 1]
    C, D = c[hit, 0, 0], c[hit, 0, 1]
    resid = np.abs(np.abs(D - A) + np.abs(C - B) - np.abs(C - A) - np.abs(D - B))
    assert resid.max() <= 1e-9


@pytest.fixture(scope="module")
def identity_report(pair):
    return verify_identities(pair, Budgets.uniform(1 << 20), RandomStream(42), exponential(1.0))


@pytest.fixture(scope="module")
def overlap_report():
    return verify_identities(two_spheres(1.0), Budgets.uniform(1 << 20), RandomStream(42),
                             exponential(1.0))


@pytest.mark.criterion(6, "union and decomposition identities")
def test_union_identities(identity_report, overlap_report, detail):
    e13 = identity_report["Eq1.3[0,1]"]
    e14 = overlap_report["Eq1.4[0,1]"]
    detail(f"Eq1.3 z {e13.z:+.2f}; Eq1.4 z {e14.z:+.2f}")
    assert abs(e13.z) < 3
    assert abs(e14.z) < 3
    binwise = [identity_report["Eq2.2[0,1]"], identity_report["Eq2.7[0,1]"]]
    thr = bonferroni_threshold(sum(e.n_tests for e in binwise))
    for e in binwise:
        detail(f"{e.identity} max|z| {abs(e.z):.2f} over {e.n_tests} bins (limit {thr:.2f})")
        assert abs(e.z) < thr
    for name in ("Eq3.9", "Eq3.13", "Eq3.16"):
        assert identity_report[name].status == EXACT_PASS, name
    detail("Eq3.9/3.13/3.16 EXACT_PASS")


@pytest.mark.criterion(7, "cross-correlation oracle")
def test_gamma_oracle(pair, detail):
    # Budget from the counting-variance model: at 2e7 pairs and 100 bins the
    # family-wise limit times the largest per-bin sigma is 0.83% of peak, so
    # "< 1% of peak" is implied by the statistical test instead of being
    # stricter than it (at 1e7 pairs and 200 bins one sigma is 0.4% of peak).
    eta, _ = est.estimate_eta(pair, 2 * N, RandomStream(42).derive(11), 100)
    g = est.gamma_from_eta(eta, pair)[0, 1]
    lo, hi = analytic.pair_gamma_support(1.0, 1.0, 3.0)
    kinks = analytic.pair_gamma_kinks(1.0, 1.0, 3.0)
    edges, c = g.edges, g.centers
    exact = np.zeros(g.n_bins)
    for k in range(g.n_bins):
        a, b = max(edges[k], lo), min(edges[k + 1], hi)
        if b > a:
            m = analytic.gamma_bin_moment(lambda l: analytic.pair_cross_gamma(1.0, 1.0, 3.0, l),
                                          a, b, kinks)
            exact[k] = m / (g.width * 4 * math.pi * c[k] ** 2)
    first = int(math.floor(lo / g.width)) + est.SKIP_BINS
    factor = pair.v_union ** 2 / (4 * math.pi * c * c)
    var = counting_variance(eta[0, 1], exact / factor, 0.5, factor)
    sel = np.arange(g.n_bins) >= first
    sel &= var > 0
    d = (g.weights - exact)[sel]
    z = d / np.sqrt(var[sel])
    dev = float(np.max(np.abs(d)) / exact.max())
    thr = bonferroni_threshold(int(sel.sum()))
    detail(f"max|z| {np.max(np.abs(z)):.2f} over {sel.sum()} bins (limit {thr:.2f}), "
           f"max dev {100 * dev:.2f}% of peak")
    # bins past the support must be empty
    assert np.all(g.weights[np.arange(g.n_bins) >= first][~sel[first:]] == 0)
    assert np.max(np.abs(z)) < thr
    assert dev < 0.01


@pytest.mark.criterion(8, "nonuniform normalization")
def test_nonuniform_c_lambda(scenes_dir, detail):
    from chordix.scene import load_scene
    sc = load_scene(scenes_dir / "graded_spheres.json")
    res = tr.transfer_nonuniform(sc, 0, 1, ball(), N, RandomStream(42).derive(8))
    x = res.extra
    detail(f"C-dot {x['c_lambda_estimate']:.4f} vs 3 M1 M2 / pi = {x['c_lambda_expected']:.4f} "
           f"(z {x['c_lambda_z']:+.2f})")
    assert abs(x["c_lambda_z"]) < 3
    # ball kernel returns M1 M2 itself
    m1m2 = sc.masses[0] * sc.masses[1]
    assert abs(res.value - m1m2) < 3 * res.stderr


@pytest.mark.criterion(8, "nonuniform normalization")
def test_constant_density_reduction(detail):
    def scene(c1, c2):
        return build_scene({"bodies": [
            {"id": "a", "shape": {"type": "sphere", "center": [0, 0, 0], "radius": 1.0},
             "density": {"type": "constant", "value": c1}},
            {"id": "b", "shape": {"type": "sphere", "center": [3, 0, 0], "radius": 1.0},
             "density": {"type": "constant", "value": c2}},
        ]})
    rng = RandomStream(42).derive(9)
    n = 300_000
    plain = est.gamma_from_eta(est.estimate_eta(scene(1, 1), n, rng)[0])
    unit_w = est.estimate_eta_weighted(scene(1, 1), n, rng)
    scaled = est.estimate_eta_weighted(scene(2.0, 0.75), n, rng)
    for ij in plain.pairs():
        assert np.array_equal(unit_w[ij].weights, plain[ij].weights)
    np.testing.assert_allclose(scaled[0, 1].weights, 1.5 * plain[0, 1].weights, rtol=1e-12)
    np.testing.assert_allclose(scaled[0, 0].weights, 4.0 * plain[0, 0].weights, rtol=1e-12)
    d = tr.transfer_direct(scene(1, 1), 0, 1, exponential(1.0), n, rng)
    w = tr.transfer_nonuniform(scene(1, 1), 0, 1, exponential(1.0), n, rng)
    assert w.value == d.value
    w2 = tr.transfer_nonuniform(scene(2.0, 0.75), 0, 1, exponential(1.0), n, rng)
    assert math.isclose(w2.value, 1.5 * d.value, rel_tol=1e-12)
    detail("constant-density reduction exact")


@pytest.mark.criterion(9, "determinism across thread counts")
def test_thread_determinism(pair, detail):
    n = 3 * (1 << 16) + 17
    rng = RandomStream(42).derive(10)
    runs = {}
    for t in (1, 2, 8):
        eta, _ = est.estimate_eta(pair, n, rng.derive(1), threads=t)
        iota, _ = est.estimate_radii(pair, n, rng.derive(2), threads=t)
        mu, _ = est.estimate_chords(pair, n, rng.derive(3), threads=t)
        blobs = [m[ij].weights.tobytes() + m[ij].variance().tobytes()
                 for m in (eta, iota, mu) for ij in m.pairs()]
        k = exponential(1.0)
        vals = [tr.transfer_direct(pair, 0, 1, k, n, rng.derive(4), t),
                tr.transfer_via_radii(pair, 0, 1, k, n, rng.derive(5), threads=t),
                tr.transfer_via_chords(pair, 0, 1, k, n, rng.derive(6), threads=t)]
        runs[t] = (blobs, [(r.value, r.stderr) for r in vals])
    assert runs[1] == runs[2] == runs[8]
    detail("histograms and route values bit-identical for 1, 2, 8 threads")


@pytest.mark.criterion(9, "determinism across thread counts")
def test_cli_determinism(scenes_dir, tmp_path, capsys):
    scene = str(scenes_dir / "two_spheres.json")
    outputs = {}
    for t in (1, 2, 8):
        csv = tmp_path / f"h{t}.csv"
        js = tmp_path / f"t{t}.json"
        assert main(["hist", scene, "--kind", "chords", "--pair", "0,1", "--samples", "200000",
                     "--threads", str(t), "--out", str(csv)]) == 0
        assert main(["transfer", scene, "--samples", "200000", "--threads", str(t),
                     "--out", str(js)]) == 0
        outputs[t] = (csv.read_bytes(), js.read_bytes(), capsys.readouterr().out)
    assert outputs[1] == outputs[2] == outputs[8]
    assert json.loads(outputs[1][1])["results"]
