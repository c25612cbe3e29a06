import dataclasses
import math

import mpmath
import pytest
from hypothesis import given, settings, strategies as st
from mpmath import mpf

from phiorder import models as M
from phiorder import nevanlinna as NV
from phiorder import qdiff as Q
from phiorder.errors import IllConditionedWarning, InconsistentEquation, InvalidParameter, UnsupportedVariant
from phiorder.numeric import linear_log_grid


@pytest.fixture(scope="module")
def theta_solution():
    return Q.solve_series(Q.q_theta_equation(2), 600, c0=1)


def theta_coefficient(k, q=2):
    return mpf(q) ** (-mpf(k) * (k + 1) / 2)


# --- solver -----------------------------------------------------------------

def test_theta_coefficients_closed_form(theta_solution):
    assert theta_solution.resonance_indices == []
    for k in (0, 1, 7, 100, 600):
        assert mpmath.almosteq(theta_solution.coeffs[k], theta_coefficient(k), rel_eps=mpf(10) ** -60)


def test_homogeneous_form_with_imposed_constant_term():
    eq = Q.QDifferenceEquation(2, (M.polynomial([0, -1]), M.polynomial([1])))
    with pytest.warns(IllConditionedWarning):
        sol = Q.solve_series(eq, 40, c0=1)
    assert sol.normalization_defect == 1
    assert all(mpmath.almosteq(sol.coeffs[k], theta_coefficient(k)) for k in range(41))
    # the series solves the equation with its constant term shifted by the defect
    assert Q.residual(eq, sol, 0) < -100
    assert Q.residual(eq, sol, 0, include_defect=False) == 0


def test_constant_coefficients_resonate_once():
    eq = Q.QDifferenceEquation(2, (M.polynomial([1]), M.polynomial([-1])))
    sol = Q.solve_series(eq, 30, c0=5)
    assert sol.resonance_indices == [0]
    assert sol.coeffs[0] == 5 and all(c == 0 for c in sol.coeffs[1:])
    assert Q.solve_series(eq, 30).coeffs[0] == 0


def test_resonance_with_nonzero_right_side_is_inconsistent():
    eq = Q.QDifferenceEquation(2, (M.polynomial([1]), M.polynomial([-1])), M.polynomial([1]))
    with pytest.raises(InconsistentEquation) as exc:
        Q.solve_series(eq, 10)
    assert exc.value.index == 0


def test_right_side_only_equation():
    eq = Q.QDifferenceEquation(3, (M.polynomial([1]),), M.polynomial([3, 4]))
    sol = Q.solve_series(eq, 5)
    assert sol.coeffs[:2] == [3, 4] and all(c == 0 for c in sol.coeffs[2:])


def test_resonance_later_in_the_recurrence():
    # E(k, 0) = 4 - 2^k vanishes at k = 2
    eq = Q.QDifferenceEquation(2, (M.polynomial([4, 1]), M.polynomial([-1])), M.polynomial([1]))
    with pytest.raises(InconsistentEquation) as exc:
        Q.solve_series(eq, 10)
    assert exc.value.index == 2


def test_zero_q_rejected():
    with pytest.raises(InvalidParameter):
        Q.QDifferenceEquation(0, (M.polynomial([1]),))


def test_precision_covers_q_powers():
    eq = Q.q_theta_equation(2)
    assert Q.working_precision(eq, 1000) >= 4 * 1000 + 128


# --- clearing denominators ----------------------------------------------------------

def test_clear_simple_denominator():
    eq = Q.QDifferenceEquation(2, (M.rational([1], [-1, 1]), M.polynomial([1])))
    cleared = Q.clear_denominators(eq)
    assert cleared.coeffs[0] == M.polynomial([1])
    assert cleared.coeffs[1] == M.polynomial([-1, 1])
    assert cleared.max_degree == 1


def test_clear_polynomial_equation_is_identity():
    eq = Q.q_theta_equation(2)
    assert Q.clear_denominators(eq) is eq


def test_cleared_equation_has_the_same_solution():
    eq = Q.QDifferenceEquation(2, (M.rational([1], [-1, 1]), M.polynomial([2])), M.rational([1], [3, 1]))
    a = Q.solve_series(eq, 60)
    b = Q.solve_series(Q.clear_denominators(eq), 60)
    for x, y, e in zip(a.coeffs, b.coeffs, a.errors):
        assert abs(x - y) <= 2 * e + mpf(10) ** -70 * abs(x)


def test_clearing_rejects_series_coefficients():
    eq = Q.QDifferenceEquation(2, (M.power_series([1, 1]), M.rational([1], [2, 1])))
    with pytest.raises(UnsupportedVariant):
        Q.clear_denominators(eq)


# --- residual ------------------------------------------------------------------------

def test_residual_at_precision_floor(theta_solution):
    assert Q.residual(Q.q_theta_equation(2), theta_solution, 0) < math.log(1e-60)


def test_residual_detects_corruption(theta_solution):
    coeffs = list(theta_solution.coeffs)
    coeffs[5] += mpf("1e-10")
    bad = dataclasses.replace(theta_solution, coeffs=coeffs)
    assert Q.residual(Q.q_theta_equation(2), bad, 0) >= math.log(1e-12)


def test_residual_of_zero_solution():
    eq = Q.homogeneous_theta_equation(2)
    sol = Q.solve_series(eq, 40)
    assert all(c == 0 for c in sol.coeffs)
    assert Q.residual(eq, sol, 0) == mpf("-inf")


@settings(max_examples=20, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), c1=st.floats(0.1, 4), c2=st.floats(0.1, 4))
def test_homogeneous_solutions_form_a_linear_space(a, b, c1, c2):
    eq = Q.homogeneous_theta_equation(2)
    s1, s2 = Q.solve_series(eq, 80, c0=c1), Q.solve_series(eq, 80, c0=c2)
    combo = M.power_series([a * x + b * y for x, y in zip(s1.coeffs, s2.coeffs)])
    scale = max(abs(a * c1 + b * c2), mpf(1))
    assert Q.residual(eq, combo, 0) < math.log(scale) - 150


# --- variable change and scaling ----------------------------------------------------------

def test_inverted_equation_has_the_same_solution(theta_solution):
    inv = Q.invert_q(Q.q_theta_equation(2))
    assert M._is_exact(inv.q) and inv.q_mp == mpf("0.5")
    sol = Q.solve_series(inv, 100, c0=1)
    for k in range(101):
        assert mpmath.almosteq(sol.coeffs[k], theta_solution.coeffs[k], rel_eps=mpf(10) ** -60)


def test_inverted_order_matches_direct(log_phi, theta_solution):
    grid = linear_log_grid(10, 400, 40)
    direct = Q.solution_order(theta_solution, log_phi, grid).rho
    inv = Q.solve_series(Q.invert_q(Q.q_theta_equation(2)), 600, c0=1)
    assert abs(Q.solution_order(inv, log_phi, grid).rho - direct) < 0.1


@pytest.mark.parametrize("C", [3, 0.25, 10 + 5j])
def test_order_invariant_under_argument_scaling(log_phi, theta_solution, C):
    g = theta_solution.model
    grid = linear_log_grid(10, 300, 40)
    shift = math.log(abs(C))
    T = [NV.proximity(g, L, tol=1e-6).value for L in grid]
    Ts = [NV.proximity(g, L + shift, tol=1e-6).value for L in grid]
    a = NV.order_estimate(grid, T, log_phi)
    b = NV.order_estimate(grid, Ts, log_phi)
    assert abs(a.rho - b.rho) <= max(a.tol(), b.tol())


def test_scale_argument_exact():
    f = M.rational([1, 2], [3, 0, 1])
    g = Q.scale_argument(f, 2)
    assert g == M.rational([1, 4], [3, 0, 4])


# --- theorem verification ------------------------------------------------------------

def test_verify_theta_square_scale(log_phi, square_s, theta_solution):
    eq = Q.QDifferenceEquation(2, (M.polynomial([0, -1]), M.polynomial([1])))
    sol = dataclasses.replace(theta_solution, normalization_defect=1)
    rep = Q.verify_theorems(eq, sol, log_phi, square_s, linear_log_grid(10, 1100, 120))
    assert abs(rep.rho_f_hat.rho - 2) < 0.15
    cor = rep.record("corollary_equality")
    assert abs(cor.estimate - cor.bound_value) < 0.15
    assert not rep.failures
    for r in rep.records:
        assert r.status in ("pass", "not-applicable")
        if r.status == "not-applicable":
            assert r.failed_predicate


def test_verify_branch_b(log_phi, two_r):
    eq = Q.homogeneous_theta_equation(2)
    sol = Q.solve_series(eq, 800, c0=1)
    rep = Q.verify_theorems(eq, sol, log_phi, two_r, linear_log_grid(10, 500, 60))
    assert rep.branch == "b" and rep.dominant_index == 0
    rec = rep.record("lower_rho_a_branch_b")
    assert rec.status == "pass" and rec.estimate - rec.bound_value > 0.8
    assert rep.record("lower_alpha_rho_a").status == "not-applicable"


def test_verify_constant_coefficients(log_phi, square_s):
    eq = Q.QDifferenceEquation(2, (M.polynomial([1]), M.polynomial([-1])))
    sol = Q.solve_series(eq, 50, c0=1)
    rep = Q.verify_theorems(eq, sol, log_phi, square_s, linear_log_grid(10, 200, 40))
    rec = rep.record("upper_constant_coefficients")
    assert rec.status == "pass" and rec.estimate == 0
    assert rep.record("upper_rho_over_alpha2").status == "not-applicable"


def test_report_serializes(log_phi, square_s):
    eq = Q.QDifferenceEquation(2, (M.polynomial([1]), M.polynomial([-1])))
    rep = Q.verify_theorems(eq, Q.solve_series(eq, 20, c0=1), log_phi, square_s, linear_log_grid(10, 200, 40))
    assert "corollary_equality" in rep.to_json()
    assert "upper_constant_coefficients" in rep.table()


# --- pole-count lemma ------------------------------------------------------------

def test_hei_entire_solution(theta_solution):
    rep = Q.hei_check(Q.q_theta_equation(2), theta_solution, linear_log_grid(0.5, 5, 10))
    assert rep.holds and rep.C == 0


def test_hei_manufactured_rational_solution():
    f = M.rational([1], [-1, 1])
    coeffs = (M.polynomial([1]), M.polynomial([-3]))
    rhs = Q.rational_rhs_for_solution(coeffs, 2, f)
    eq = Q.QDifferenceEquation(2, coeffs, rhs)
    z = mpf("0.3")
    assert mpmath.almosteq(Q._eval_model_mp(rhs, z), 1 / (z - 1) - 3 / (2 * z - 1))
    rep = Q.hei_check(eq, f, linear_log_grid(0.2, 6, 15))
    assert rep.holds and 0 < rep.C < math.inf


def test_hei_polynomial_solution():
    f = M.polynomial([1, 0, 1])
    coeffs = (M.polynomial([2]), M.polynomial([1]))
    eq = Q.QDifferenceEquation(2, coeffs, Q.rational_rhs_for_solution(coeffs, 2, f))
    rep = Q.hei_check(eq, f, linear_log_grid(0.2, 6, 15))
    assert rep.holds and all(row[1] == 0 and row[2] == 0 for row in rep.rows)


# --- circle ladder ------------------------------------------------------------------

def test_ladder_definition():
    lad = Q.mk_circle_ladder(0.5, 1.3, k_max=10)
    assert lad.t == pytest.approx(1.3) and lad.attempts == 1
    assert [float(mpmath.exp(L)) for L in lad.radii_log[:4]] == pytest.approx([1.3, 2.6, 5.2, 10.4])


def test_ladder_avoids_planted_pole():
    eq = Q.QDifferenceEquation(0.5, (M.rational([1], [-2.6, 1]), M.polynomial([1])))
    lad = Q.mk_circle_ladder(0.5, 1.3, k_max=10, eq=eq)
    assert lad.t != pytest.approx(1.3) and 1 < lad.t < 2
    assert all(abs(L - math.log(2.6)) > 1e-3 for L in lad.radii_log)
    assert lad.attempts > 1


def test_ladder_pole_at_two_is_not_on_the_default_ladder():
    eq = Q.QDifferenceEquation(0.5, (M.rational([1], [-2, 1]), M.polynomial([1])))
    assert Q.mk_circle_ladder(0.5, 1.3, k_max=10, eq=eq).t == pytest.approx(1.3)


def test_ladder_transforms_large_q(log_phi, theta_solution):
    eq = Q.q_theta_equation(2)
    lad = Q.mk_circle_ladder(2, 1.3, k_max=40, eq=eq)
    assert lad.transformed is not None and lad.transformed.q_mp == mpf("0.5")
    ratios, bounded = Q.ladder_growth_check(theta_solution, lad, log_phi, J0=1)
    assert bounded and len(ratios) >= 3


def test_ladder_rejects_unit_modulus():
    with pytest.raises(InvalidParameter):
        Q.mk_circle_ladder(1j, 1.3)


# --- coefficient files -------------------------------------------------------------

def test_coefficient_csv_round_trip(tmp_path, theta_solution):
    p = tmp_path / "c.csv"
    Q.write_coefficients_csv(theta_solution, p)
    back = Q.read_coefficients_csv(p)
    assert back.K == theta_solution.K
    for a, b in zip(back.coeffs, theta_solution.coeffs):
        assert abs(a - b) <= mpf(10) ** -28 * abs(b)


def test_complex_coefficient_csv_round_trip(tmp_path):
    eq = Q.QDifferenceEquation(1j + 1, (M.polynomial([0, -1]), M.polynomial([1])), M.polynomial([1]))
    sol = Q.solve_series(eq, 20, c0=None)
    p = tmp_path / "c.csv"
    Q.write_coefficients_csv(sol, p)
    back = Q.read_coefficients_csv(p)
    for a, b in zip(back.coeffs, sol.coeffs):
        assert abs(a - b) <= mpf(10) ** -28 * max(abs(b), mpf(10) ** -300)
