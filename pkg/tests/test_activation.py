import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sigmanet.activation import (Sigma, SigmaParams, compute_delta, envelope_h, piece_data, sigma,
                                 sigma_local, sigma_piece_exact, sigma_table, transition)
from sigmanet.enumeration import TreeIndex

P = SigmaParams(3.0, 0.5)

# published table of sigma(t), t = 0..49, s = 3, lambda = 1/2
TABLE = [
    0.25941, 0.36008, 0.57848, 0.91514, 0.91514, 0.91514, 0.91514, 0.91198, 0.91105, 0.90650,
    0.91169, 0.92728, 0.95325, 0.93437, 0.92551, 0.91549, 0.92958, 0.94366, 0.95775, 0.95532,
    0.94932, 0.94074, 0.93635, 0.93635, 0.94074, 0.93278, 0.93177, 0.92482, 0.92900, 0.94153,
    0.96241, 0.94506, 0.94003, 0.92771, 0.92905, 0.93842, 0.96385, 0.94692, 0.93923, 0.92999,
    0.94166, 0.95333, 0.96499, 0.95602, 0.94295, 0.93186, 0.93943, 0.95079, 0.96593, 0.95800,
]


def test_table_matches_published():
    got = [float(v) for _, v in sigma_table(P, 0, 49, 1)]
    assert len(got) == 50
    assert max(abs(g - w) for g, w in zip(got, TABLE)) <= 1e-4
    for t in (0, 7, 8, 9):
        assert abs(got[t] - TABLE[t]) <= 5e-6


def test_envelope_values():
    # DERIVED: 1 - 0.5/(1 + ln 7) and 1 - 0.5/(1 + ln 13)
    assert envelope_h(9, P) == pytest.approx(1 - 0.5 / (1 + math.log(7)), abs=1e-15)
    assert envelope_h(9, P) == pytest.approx(0.83027, abs=5e-6)
    assert envelope_h(15, P) == pytest.approx(0.85975, abs=5e-6)
    with pytest.raises(ValueError):
        envelope_h(2.0, P)


def test_piece_two():
    d = piece_data(2, P)
    assert str(d.u_n) == "x^2"
    assert (d.B_1, d.B_2) == (0, 1)
    assert d.a_n == pytest.approx(0.90650, abs=5e-6)
    assert d.b_n == pytest.approx(0.04675, abs=5e-6)
    assert d.a_n == pytest.approx((1 + 2 * d.M_n) / 3, abs=1e-15)


def test_delta_examples():
    # DERIVED: delta_bar for n = 1 is s/2 whether or not the clamp applies
    assert compute_delta(1, "right", P) == pytest.approx(1.5)
    # u_4 = x^2 - x under the coefficient bound gives C = 4 and delta = 0.75
    assert compute_delta(4, "left", P) == pytest.approx(0.75)
    assert compute_delta(4, "left", SigmaParams(3.0, 0.5, c_bound="exact")) == pytest.approx(1.5)
    with pytest.raises(ValueError):
        compute_delta(1, "up", P)


@pytest.mark.parametrize("s", [1.0, 3.0])
def test_sigma_at_s_closed_form(s):
    p = SigmaParams(s, 0.5)
    assert float(sigma(s, p)) == pytest.approx((1 + float(envelope_h(3 * s, p))) / 2, abs=1e-14)


def test_transition_function():
    # a decreasing C-infinity step from 1 to 0
    assert transition(0.0, 1.0, -1.0) == 1.0
    assert transition(0.0, 1.0, 2.0) == 0.0
    assert transition(0.0, 1.0, 0.5) == pytest.approx(0.5)
    xs = np.linspace(0.01, 0.99, 50)
    vals = [transition(0.0, 1.0, x) for x in xs]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        transition(1.0, 1.0, 0.5)


@pytest.mark.parametrize("s,lam", [(1.0, 0.75), (3.0, 0.5), (3.0, 0.1)])
def test_sandwich_and_limits(s, lam):
    p = SigmaParams(s, lam)
    sig = Sigma(p)
    for x in np.linspace(s, 100 * s, 600):
        h, v = sig.envelope(x), sig(x)
        assert h < v < 1
        assert 0 < v - h <= lam
    assert float(sig(-1e6)) < 1e-6


@pytest.mark.parametrize("s,lam", [(1.0, 0.5), (3.0, 0.1)])
def test_strictly_increasing_left_of_s(s, lam):
    sig = Sigma(SigmaParams(s, lam))
    vals = [sig(x) for x in np.linspace(s - 50, s, 400)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_piece_identity():
    sig = Sigma(P)
    for n in (1, 2, 5, 17, 50):
        for t in np.linspace(0, 1, 9):
            exact = sigma_piece_exact(n, float(t), P)
            assert abs(sig(3 * t + (2 * n - 1) * 3) - exact) <= 1e-12 * abs(exact)


def test_local_matches_absolute():
    sig = Sigma(P)
    for n in range(1, 51, 7):
        for t in (-1.9, -0.7, 0.0, 0.3, 1.2, 1.7, 2.6):
            x = 3 * (t + 2 * n - 1)
            assert sigma_local(n, t, P) == pytest.approx(sig(x), abs=1e-13)
    with pytest.raises(ValueError):
        sigma_local(3, 3.5, P)


def test_junctions_smooth_at_high_precision():
    sig = Sigma(SigmaParams(3.0, 0.5, precision=160))
    ctx = sig.ctx
    # rounding noise is about 2^-160 / h, truncation about h^2
    h = ctx.mpf(2) ** -60
    for n in (1, 2, 4, 9):
        for j in (2 * n - 1, 2 * n):
            x = ctx.mpf(3 * j)
            assert abs(sig(x - h) - sig(x + h)) < 1e-10
            left = (3 * sig(x) - 4 * sig(x - h) + sig(x - 2 * h)) / (2 * h)
            right = (-3 * sig(x) + 4 * sig(x + h) - sig(x + 2 * h)) / (2 * h)
            assert abs(left - right) < 1e-12


def test_huge_piece_evaluates():
    n = TreeIndex.from_int(2**300 + 12345)
    sig = Sigma(SigmaParams(3.0, 0.5, precision=400))
    v = sig.local(n, Fraction(1, 3))
    exact = sig.piece_exact(n, Fraction(1, 3))
    assert abs(v - exact) < mpmath.mpf(10) ** -100
    assert 0.5 < float(v) < 1


def test_precision_consistency():
    lo = Sigma(P)
    hi = Sigma(SigmaParams(3.0, 0.5, precision=120))
    for x in (0.0, 4.0, 13.3, 25.0, 100.0, 1000.5):
        assert float(hi(x)) == pytest.approx(lo(x), abs=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=3.0, max_value=3000.0), st.floats(min_value=1e-3, max_value=1.0))
def test_between_envelope_and_one(x, lam):
    p = SigmaParams(3.0, lam)
    v = sigma(x, p)
    h = envelope_h(x, p)
    assert h < v < 1
    assert v - h <= lam


def test_params_validation():
    with pytest.raises(ValueError):
        SigmaParams(0.0, 0.5)
    with pytest.raises(ValueError):
        SigmaParams(3.0, 0.0)
    with pytest.raises(ValueError):
        SigmaParams(3.0, 0.5, c_bound="loose")
