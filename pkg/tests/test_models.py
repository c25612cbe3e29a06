import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from mpmath import mpf

from phiorder import models as M
from phiorder import scales as S
from phiorder.errors import InvalidInput, InvalidParameter, NotEntire, TruncationInsufficient, UnsupportedVariant

from conftest import builtin_phi


def squares_product():
    """Canonical product with zeros e^{n^2} on the positive axis."""
    return M.CanonicalProduct(M.ZeroSequence(lambda n: mpf(n) ** 2, name="e^{n^2}"))


def brute_product(log_moduli, L, theta):
    z = mpmath.exp(mpf(L)) * mpmath.expjpi(mpf(theta) / mpmath.pi)
    return mpmath.fsum(mpmath.log(abs(1 - z / mpmath.exp(a))) for a in log_moduli)


# --- evaluate -------------------------------------------------------------

def test_evaluate_identity():
    v = M.evaluate(M.polynomial([0, 1]), 1, 0.0)
    assert mpmath.almosteq(v.log_abs, 1, abs_eps=mpf(10) ** -60)
    assert v.error_bound >= 0


def test_evaluate_simple_pole_reciprocal():
    f = M.rational([1], [-1, 1])
    v = M.evaluate(f, 1, 0.0)
    assert abs(v.log_abs + mpmath.log(mpmath.e - 1)) < 1e-14


def test_evaluate_pole_flag():
    v = M.evaluate(M.rational([1], [-1, 1]), 0, 0.0)
    assert v.pole and v.log_abs == mpf("inf")


def test_evaluate_exact_zero():
    v = M.evaluate(M.polynomial([-1, 1]), 0, 0.0)
    assert v.log_abs == mpf("-inf")


def test_product_on_negative_axis():
    v = M.evaluate(squares_product(), 1, math.pi)
    reference = mpmath.fsum(mpmath.log(1 + mpmath.exp(1 - n * n)) for n in range(1, 12))
    assert abs(v.log_abs - reference) < 1e-12
    assert abs(v.log_abs - mpf("0.7420702444466089")) < 1e-13
    assert v.error_bound < 1e-6


def test_truncation_error_carries_achieved_bound():
    # zeros at the integers: no majorant of the tail exists
    seq = M.ZeroSequence(lambda n: mpmath.log(n))
    P = M.CanonicalProduct(seq)
    with pytest.raises(TruncationInsufficient) as exc:
        M.evaluate(P, 1, 0.5)
    assert exc.value.achieved_bound == float("inf")


@settings(max_examples=40, deadline=None)
@given(L=st.floats(min_value=-3, max_value=40), theta=st.floats(min_value=0.05, max_value=3.1),
       kind=st.sampled_from(["squares", "powers"]))
def test_product_error_bound_is_sound(L, theta, kind):
    if kind == "squares":
        P, logs = squares_product(), [mpf(n) ** 2 for n in range(1, 40)]
    else:
        P = M.CanonicalProduct(M.ZeroSequence(lambda n: mpf(2) ** n))
        logs = [mpf(2) ** n for n in range(1, 12)]
    v = M.evaluate(P, L, theta)
    assert abs(v.log_abs - brute_product(logs, L, theta)) <= v.error_bound + 1e-12


@settings(max_examples=40, deadline=None)
@given(L=st.floats(min_value=-2, max_value=30), theta=st.floats(min_value=0.01, max_value=3.1))
def test_conjugate_symmetry(L, theta):
    P = squares_product()
    a, b = M.evaluate(P, L, theta), M.evaluate(P, L, -theta)
    assert abs(a.log_abs - b.log_abs) <= a.error_bound + b.error_bound
    assert a.arg == pytest.approx(-b.arg, abs=1e-9)


def test_series_matches_rational():
    f = M.polynomial([2, -3, 1])
    g = M.power_series([2, -3, 1])
    for L in (-1, 0.3, 2):
        a, b = M.evaluate(f, L, 0.7), M.evaluate(g, L, 0.7)
        assert abs(a.log_abs - b.log_abs) < 1e-14


def test_series_circle_fft_matches_pointwise():
    g = M.power_series([mpf(1) / mpmath.factorial(k) for k in range(60)])
    th = 2 * np.pi * np.arange(64) / 64
    cv = M.evaluate_circle(g, mpf(1), th)
    direct = np.array([float(M.evaluate(g, 1, t).log_abs) for t in th])
    assert np.allclose(cv.log_abs, direct, atol=1e-12)
    assert np.allclose(cv.log_abs, np.e * np.cos(th), atol=1e-12)


def test_rational_normalization_cancels_common_roots():
    f = M.rational([-1, 0, 1], [-1, 1])
    assert f.numer == (1, 1) and f.denom == (1,)
    assert f.is_entire


def test_rational_rejects_zero_denominator():
    with pytest.raises(InvalidInput):
        M.rational([1], [0, 0])


# --- examples F and G -------------------------------------------------------

def test_example_F_log_scale(log_phi):
    F = M.make_example_F(log_phi, 0.5)
    assert [F.zeros.term(n)[0] for n in range(1, 5)] == [1, 4, 9, 16]
    assert F.zeros.counting(100) == 10
    zs = M.zeros_upto(F, 5)
    assert [(float(r), k) for r, k in zs] == [(pytest.approx(math.e), 1), (pytest.approx(math.e ** 4), 1)]


def test_example_F_linear_scale():
    F = M.make_example_F(S.make_builtin_phi("power", 1), 0.5)
    assert [float(mpmath.exp(F.zeros.term(n)[0])) for n in (1, 2, 3)] == pytest.approx([1, 4, 9])
    total, rem = F.zeros.sum_reciprocals_bound()
    assert 0 < mpmath.pi ** 2 / 6 - total <= rem


def test_example_G(log_phi):
    G = M.make_example_G(log_phi, 2)
    assert [G.zeros.term(n)[0] for n in range(1, 5)] == [2, 4, 8, 16]
    assert G.zeros.counting(17) == 4


@pytest.mark.parametrize("logR", [0.5, 3, 17.2, 99.9, 100, 250, 1000])
def test_counts_agree_with_closed_form(log_phi, logR):
    F = M.make_example_F(log_phi, 0.5)
    G = M.make_example_G(log_phi, 3)
    assert F.zeros.counting(logR) == math.isqrt(int(math.floor(logR)))
    expected = 0
    while 3 ** (expected + 1) <= logR:
        expected += 1
    assert G.zeros.counting(logR) == expected


def test_example_parameter_errors(log_phi):
    with pytest.raises(InvalidParameter):
        M.make_example_F(log_phi, 0)
    with pytest.raises(InvalidParameter):
        M.make_example_G(log_phi, 1)


def test_divergent_sequence_is_not_entire():
    with pytest.raises(NotEntire):
        M.make_example_F(S.make_builtin_phi("power", 1), 1)


@pytest.mark.parametrize("kappa", [0.25, 0.5, 0.75])
def test_reciprocal_sums_converge(log_phi, kappa):
    F = M.make_example_F(log_phi, kappa)
    total, rem = F.zeros.sum_reciprocals_bound()
    assert rem < 1e-9 and total < 1


def test_zero_sequence_rejects_decreasing_moduli():
    seq = M.ZeroSequence(lambda n: mpf(10 - n))
    with pytest.raises(InvalidInput):
        seq.upto(20)


# --- differentiate ------------------------------------------------------------

def test_differentiate_series_identity():
    d = M.differentiate(M.power_series([0, 1]))
    assert list(d.coeffs) == [1]


def test_differentiate_simple_pole():
    d = M.differentiate(M.rational([1], [-1, 1]))
    assert d == M.rational([-1], [1, -2, 1])


def test_differentiate_theta_series():
    cs = [mpf(2) ** (-k * (k + 1) / 2) for k in range(30)]
    d = M.differentiate(M.power_series(cs))
    for k in range(29):
        assert d.coeffs[k] == (k + 1) * mpf(2) ** (-(k + 1) * (k + 2) / 2)


def test_differentiate_product_unsupported():
    with pytest.raises(UnsupportedVariant):
        M.differentiate(squares_product())


# --- zeros and poles ------------------------------------------------------------

def test_simple_pole_lists():
    f = M.rational([1], [-1, 1])
    assert [(float(r), k) for r, k in M.poles_upto(f, math.log(2))] == [(1.0, 1)]
    assert list(M.zeros_upto(f, math.log(2))) == []


def test_quotient_origin_multiplicity():
    P = squares_product()
    Q = M.Quotient(1, 2, P, M.CanonicalProduct(M.ZeroSequence(lambda n: mpf(2) ** n)))
    zs = M.zeros_upto(Q, 4.5)
    assert zs[0] == (0, 2)
    assert [k for _, k in zs[1:]] == [1, 1]
    assert len(M.poles_upto(Q, 4.5)) == 2


def test_exact_rational_roots():
    f = M.rational([Fraction(1, 2), -3, 1], [4, 0, 0, 1])
    zs = sorted(float(r) for r, _ in M.zeros_upto(f, 3))
    assert zs == pytest.approx(sorted(abs(np.roots([1, -3, 0.5]))))
    assert sum(k for _, k in M.poles_upto(f, 3)) == 3


def test_series_roots_by_argument_principle():
    g = M.power_series([6, -5, 1])  # (z-2)(z-3)
    zs = M.zeros_upto(g, math.log(4))
    assert zs.complete
    # cluster moduli are annulus midpoints, resolved to about 1e-4
    assert [float(r) for r, _ in zs] == pytest.approx([2, 3], rel=1e-4)
    assert M.winding_number(g, math.log(2.5)) == 1
