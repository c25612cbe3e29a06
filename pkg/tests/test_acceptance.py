"""Exit criteria for the package, at the stated tolerances and runtime budgets.

Each test prints one ``criterion N: PASS|FAIL`` line; the lines are also collected
into the terminal summary.  Run them alone with ``pytest -m acceptance``.
"""
import csv
import json
import time
from contextlib import contextmanager

import mpmath
import numpy as np
import pytest
from mpmath import mpf

from phiorder import cli
from phiorder import config as C
from phiorder import models as M
from phiorder import nevanlinna as NV
from phiorder import qdiff as Q
from phiorder import scales as S
from phiorder.numeric import iterated_grid, linear_log_grid

from conftest import ACCEPTANCE_LINES, builtin_phi

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

TEST_PHI = {"log": ("log_power", 1), "sqrt": ("power", 0.5), "exp_sqrt_log": ("exp_log_power", 0.5),
            "r": ("power", 1)}


class Criterion:
    def __init__(self, number, budget):
        self.number, self.budget = number, budget
        self.checks = []

    def check(self, label, ok, detail=""):
        self.checks.append((label, bool(ok), detail))


@contextmanager
def criterion(number, budget):
    c = Criterion(number, budget)
    t0 = time.perf_counter()
    yield c
    elapsed = time.perf_counter() - t0
    c.check(f"runtime < {budget} s", elapsed < budget, f"{elapsed:.1f} s")
    bad = [f"{label} ({detail})" if detail else label for label, ok, detail in c.checks if not ok]
    line = f"criterion {number}: {'PASS' if not bad else 'FAIL'} [{elapsed:.1f} s]"
    if bad:
        line += " failed: " + "; ".join(bad)
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert not bad, line


def bounds_suite_run(tmp_path, names):
    cfg = C.validate(cli.suite_config("bounds-suite"))
    rep = cli.run_config(cfg, tmp_path, only=names)
    return {r.name: r for r in rep.results}


def test_criterion_1_growth_parameter_matrix():
    with criterion(1, 10) as c:
        for (p, s), oracle in cli.PARAMS_ORACLE.items():
            phi = builtin_phi(*TEST_PHI[p])
            s_scale = _s(s)
            got = S.growth_params(phi, s_scale, cli._param_grid(phi, s_scale))
            vals = (got.alpha, got.beta, got.gamma)
            c.check(f"({p}, {s})", all(abs(v - o) <= 0.05 for v, o in zip(vals, oracle)),
                    f"{tuple(round(v, 3) for v in vals)} vs {oracle}")


def _s(name):
    spec = cli.TEST_S[name]
    return S.make_builtin_s(spec["kind"], spec.get("param"))


def F_orders():
    phi = builtin_phi("log_power", 1)
    F = M.make_example_F(phi, 0.5)
    grid = linear_log_grid(10, 2000, 200)
    counts = [NV.counting(F, L, "zeros") for L in grid]
    rho_n = NV.order_estimate(grid, [n for n, _ in counts], phi, "n").rho
    rho_N = NV.order_estimate(grid, [N for _, N in counts], phi, "N").rho
    return rho_n, rho_N


def test_criterion_2_example_F():
    with criterion(2, 30) as c:
        rho_n, rho_N = F_orders()
        c.check("rho(n) = 0.5 +- 0.05", abs(rho_n - 0.5) <= 0.05, f"{rho_n:.4f}")
        c.check("rho(N) = 1.5 +- 0.1", abs(rho_N - 1.5) <= 0.1, f"{rho_N:.4f}")


def test_criterion_3_example_G():
    with criterion(3, 30) as c:
        phi = builtin_phi("log_power", 1)
        G = M.make_example_G(phi, 2)
        ex = NV.phi_exponent(G.zeros, phi)
        c.check("lambda = 0 (bracket upper end < 0.05)", ex.lam_hi < 0.05 and ex.lam_lo <= 0,
                f"[{ex.lam_lo:.3f}, {ex.lam_hi:.3f}]")
        grid = iterated_grid(2, 150, 300)
        rho_N = NV.order_estimate(grid, [NV.counting(G, L, "zeros")[1] for L in grid], phi, "N").rho
        c.check("rho(N) = 1.0 +- 0.1", abs(rho_N - 1) <= 0.1, f"{rho_N:.4f}")


def test_criterion_4_q_theta():
    with criterion(4, 60) as c:
        phi, s = builtin_phi("log_power", 1), S.make_builtin_s("power", 2)
        eq = Q.q_theta_equation(2)
        sol = Q.solve_series(eq, 2000, c0=1)
        with mpmath.workprec(sol.prec + 64):
            worst = max(abs(ck / mpf(2) ** (-k * (k + 1) // 2) - 1) for k, ck in enumerate(sol.coeffs))
        c.check("coefficients equal 2^(-k(k+1)/2), k <= 2000", worst <= mpf(2) ** (10 - sol.prec),
                f"max rel err {mpmath.nstr(worst, 3)} at {sol.prec} bits")
        res = Q.residual(eq, sol, 0)
        c.check("residual < 1e-50 at r = 1", res < mpmath.log(mpf(10) ** -50), f"log residual {mpmath.nstr(res, 5)}")
        rep = Q.verify_theorems(eq, sol, phi, s, linear_log_grid(10, 1100, 120))
        rho = rep.rho_f_hat.rho
        c.check("rho_log(f) = 2 +- 0.15", abs(rho - 2) <= 0.15, f"{rho:.4f}")
        cor = rep.record("corollary_equality")
        gap = abs(cor.estimate - cor.bound_value)
        c.check("corollary margin <= 0.15", gap <= 0.15, f"{gap:.4f}")


def test_criterion_5_lemma_A_dominance(tmp_path):
    with criterion(5, 300) as c:
        res = bounds_suite_run(tmp_path, ["lemma_a"])["lemma_a"]
        with open(tmp_path / "lemma_a.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        c.check(">= 200 configurations", len(rows) >= 200, str(len(rows)))
        c.check("q in {2, 1/2, i} all exercised", len({r["q"] for r in rows}) == 3, str(sorted({r["q"] for r in rows})))
        c.check("delta in {0.25, 0.5, 0.75} all exercised", len({r["delta"] for r in rows}) == 3)
        c.check("product model exercised", any(r["model"] == "finite_product" for r in rows))
        violations = [r["trial"] for r in rows if r["holds"] != "True"]
        c.check("m <= bound in 100% of cases", not violations and res.status == "pass", f"violations {violations}")


def test_criterion_6_integral_dichotomy():
    with criterion(6, 10) as c:
        grid = linear_log_grid(10, 2000, 100)
        wrong = []
        cells = 0
        for name, spec in TEST_PHI.items():
            phi = builtin_phi(*spec)
            for rho in (0.5, 1, 2):
                T = [phi.at_log(L) ** rho for L in grid]
                for mu, want in ((rho + 0.5, "convergent"), (rho - 0.5, "divergent"), (0, "divergent"),
                                 (-1, "divergent")):
                    cells += mu == rho + 0.5 or mu == rho - 0.5
                    got = NV.integral_dichotomy(grid, T, phi, mu).verdict
                    if got != want:
                        wrong.append(f"{name} rho={rho} mu={mu}: {got}")
        c.check(f"all {cells} rho +- 0.5 cells and mu <= 0 correct", not wrong, "; ".join(wrong))


def test_criterion_7_quadrature_oracle():
    with criterion(7, 5) as c:
        expz = M.power_series([mpf(1) / mpmath.factorial(k) for k in range(80)])
        m = NV.proximity(expz, 0).value
        rel = abs(m * mpmath.pi - 1)
        c.check("m(1, e^z) = 1/pi, rel err < 1e-6", rel < 1e-6, mpmath.nstr(rel, 3))
        z = M.polynomial([0, 1])
        errs = [abs(NV.proximity(z, L).value - L) for L in (mpf("0.5"), mpf(1), mpf(3), mpf(10))]
        c.check("m(r, z) = log r within rounding", max(errs) < mpf(2) ** -200, mpmath.nstr(max(errs), 3))


def test_criterion_8_uvw():
    with criterion(8, 5) as c:
        rng = np.random.default_rng(0)
        for name in ("square", "r_log_r"):
            s = _s(name)
            triple = S.auxiliary_uvw(s)
            radii = rng.uniform(triple.valid_from, triple.r_max - 2, 1000)
            props = S.check_uvw_properties(triple, s, radii)
            for k, v in props.items():
                c.check(f"{name}: {k}", v.all(), f"{v.mean():.3f}")


def test_criterion_9_psi():
    with criterion(9, 10) as c:
        phi = builtin_phi("log_power", 1)
        worst = mpf(0)
        for mu in (-0.5, 0, 1, 2.5):
            for L in (5, 50, 500, 2000):
                t = mpmath.exp(mpf(L))
                worst = max(worst, abs(S.psi_mu(phi, mu, t) * t * phi(t) / (mpf(mu) + 1) - 1))
        c.check("psi_mu(t) t phi(t) = mu + 1, rel err < 1e-12", worst < 1e-12, mpmath.nstr(worst, 3))
        rho_n, rho_N = F_orders()
        c.check("|rho(N) - rho(n) - 1| <= 0.1", abs(rho_N - rho_n - 1) <= 0.1, f"{rho_N - rho_n:.4f}")


def test_criterion_10_order_relations(tmp_path):
    with criterion(10, 300) as c:
        names = [f"relations_{n}" for n, *_ in cli.RELATION_CATALOG]
        results = bounds_suite_run(tmp_path, names)
        c.check("catalog of 10 models", len(names) == 10)
        for n in names:
            rels = json.loads((tmp_path / f"{n}.json").read_text())["relations"]
            bad = [r["name"] for r in rels if r["status"] == "fail" or (r["status"] == "pass" and r["margin"] < 0)]
            c.check(n, results[n].status == "pass" and not bad, ", ".join(bad) or results[n].message)


def test_criterion_11_minimum_modulus():
    with criterion(11, 120) as c:
        phi, s = builtin_phi("log_power", 1), S.make_builtin_s("power", 2)
        G = M.make_example_G(phi, 2)
        rep = NV.product_min_modulus_check(G, phi, s, mpf("0.5"), linear_log_grid(10, 300, 120))
        c.check("finite empirical sup", rep.finite and np.isfinite(rep.sup_ratio), f"{rep.sup_ratio:.4g}")
        c.check("tail slope < 0.1", rep.tail_slope < 0.1, f"{rep.tail_slope:.4f}")
