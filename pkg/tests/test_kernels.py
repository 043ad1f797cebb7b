import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chordix.kernels import ball, builtin_kernels, const, exponential, parse_kernel

XS = np.linspace(0.1, 4.0, 100)


def probe_points(kernel, xs=XS):
    # in units of the decay length; far out phi is too small next to phi2 for
    # a second difference to resolve in double precision
    return xs / dict(kernel.params).get("sigma", 1.0)


def test_builtin_set():
    assert [k.name for k in builtin_kernels()] == ["ball", "exp", "const"]


@pytest.mark.parametrize("kernel", builtin_kernels(1.0) + [exponential(2.5)], ids=lambda k: k.spec)
def test_antiderivatives_vanish_at_zero(kernel):
    assert kernel.phi1(np.zeros(1))[0] == 0.0
    assert kernel.phi2(np.zeros(1))[0] == 0.0


@pytest.mark.parametrize("kernel", builtin_kernels(1.0) + [exponential(2.5)], ids=lambda k: k.spec)
def test_phi2_second_difference_is_phi(kernel):
    h = 1e-4
    x = probe_points(kernel)
    dd = (kernel.phi2(x + h) - 2 * kernel.phi2(x) + kernel.phi2(x - h)) / h ** 2
    np.testing.assert_allclose(dd, kernel.phi(x), rtol=1e-5)


@pytest.mark.parametrize("kernel", builtin_kernels(1.0) + [exponential(2.5)], ids=lambda k: k.spec)
def test_phi2_derivative_is_phi1(kernel):
    x = probe_points(kernel, np.linspace(0.01, 4.0, 1000))
    h = 1e-6
    d = (kernel.phi2(x + h) - kernel.phi2(x - h)) / (2 * h)
    np.testing.assert_allclose(d, kernel.phi1(x), rtol=1e-6)


def test_examples():
    assert ball().phi2(np.array([2.0]))[0] == pytest.approx(16 * math.pi / 3, rel=1e-15)
    assert const().phi1(np.array([3.0]))[0] == 3.0
    # small-sigma limit of the exponential is the constant kernel
    x = np.array([0.01])
    assert exponential(1e-3).phi2(x)[0] == pytest.approx(x[0] ** 2 / 2, rel=1e-4)
    # series u^2/2 - u^3/6 + u^4/24 at sigma = 1, no cancellation
    u = 0.01
    assert exponential(1.0).phi2(x)[0] == pytest.approx(u * u / 2 - u ** 3 / 6 + u ** 4 / 24, rel=1e-10)


def test_transfer_weight():
    r = np.array([0.5, 2.0])
    np.testing.assert_allclose(ball().transfer_weight(r), 1.0)
    np.testing.assert_allclose(const().transfer_weight(r), 1 / (4 * math.pi * r * r))


def test_singularity_flag():
    assert not ball().singular_at_zero
    assert const().singular_at_zero and exponential(1.0).singular_at_zero


def test_parse_specs():
    assert parse_kernel("ball").name == "ball"
    assert parse_kernel("const").name == "const"
    k = parse_kernel("exp:sigma=1.5")
    assert k.params == (("sigma", 1.5),)
    assert k.spec == "exp:sigma=1.5"
    assert parse_kernel("exp").spec == "exp:sigma=1"


@pytest.mark.parametrize("bad", ["gauss", "ball:r=1", "exp:tau=1", "exp:sigma=-1", "exp:sigma=x", ""])
def test_parse_rejects(bad):
    with pytest.raises(ValueError):
        parse_kernel(bad)


@given(st.floats(min_value=1e-6, max_value=1e6, allow_nan=False, allow_infinity=False))
def test_spec_round_trip(sigma):
    k = exponential(sigma)
    again = parse_kernel(k.spec)
    assert again.params == k.params
    assert again.spec == k.spec
