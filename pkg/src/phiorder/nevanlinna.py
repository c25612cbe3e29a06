"""Nevanlinna functionals, phi-order estimators and order-relation checks.

Radii are ``log r`` values throughout.  ``m(r, f)`` is computed by the
trapezoidal rule on the circle (exponentially accurate for smooth periodic
integrands, with Richardson extrapolation to absorb the kinks of ``log+``);
``N(r, f)`` is summed exactly from the certified pole (or zero) list.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import mpmath
import numpy as np
from mpmath import mp, mpf

from . import models as M
from .errors import (
    CapabilityError,
    DomainError,
    InsufficientGrid,
    InvalidInput,
    PoleOnCircle,
    RadiusOutOfRange,
    UncertifiedRoots,
    UnsupportedVariant,
)
from .numeric import fmt, log_plus, tail_half
from .scales import PhiScale, SScale, check_psi_bounds, growth_params, psi_mu

QUAD_MIN_POINTS = 1 << 10
QUAD_MAX_POINTS = 1 << 16
QUAD_TOL = 1e-10
POLE_CLEARANCE_FACTOR = 10
MAX_NUDGES = 100
ENVELOPE_DOMINANCE = 0.8
DEFAULT_BINS = 12
MIN_ORDER_SAMPLES = 30
MIN_LOG_PHI_SPREAD = 3
LOW_CONFIDENCE_SPREAD = 0.5
DICHOTOMY_DELTA = 0.05
EXPONENT_DELTA = 0.02
ORDER_TOL_FLOOR = 0.1


# ---------------------------------------------------------------------------
# proximity and counting
# ---------------------------------------------------------------------------

@dataclass
class QuadResult:
    value: mpf
    error: float
    points: int
    converged: bool


def _pole_log_moduli(model, log_r):
    try:
        return [mpmath.log(p) if p > 0 else M.NEG_INF for p, _ in M.poles_upto(model, mpf(log_r) + 1)]
    except UnsupportedVariant:
        return []


def check_pole_clearance(model, log_r, points=QUAD_MAX_POINTS, extra_radii=()):
    """Raise PoleOnCircle when a pole lies within ``10 * 2pi/points`` (in
    ``log r``) of one of the integration circles.

    The suggestion nudges ``log r`` upward in steps of the clearance width,
    at most 100 times.
    """
    width = POLE_CLEARANCE_FACTOR * 2 * math.pi / points
    shifts = [mpf(0)] + [mpf(x) for x in extra_radii]
    poles = _pole_log_moduli(model, mpf(log_r) + max(shifts))

    def clear(L):
        return all(abs(P - (L + s)) >= width for P in poles for s in shifts if not mpmath.isinf(P))

    L = mpf(log_r)
    if clear(L):
        return
    for k in range(1, MAX_NUDGES + 1):
        cand = L + k * width
        if clear(cand):
            raise PoleOnCircle(f"pole within {width:.2e} of |z| = exp({mpmath.nstr(L, 10)})",
                               suggested_log_r=cand)
    raise PoleOnCircle(f"pole within {width:.2e} of |z| = exp({mpmath.nstr(L, 10)}); no nearby clear radius")


def _trapezoid(integrand_mean: Callable[[int], mpf], tol=QUAD_TOL, min_points=QUAD_MIN_POINTS,
               max_points=QUAD_MAX_POINTS) -> QuadResult:
    """Dyadic trapezoid refinement with Richardson extrapolation.

    ``integrand_mean(N)`` returns the N-point trapezoid value.
    """
    N = min_points
    T_prev = integrand_mean(N)
    R_prev = None
    while True:
        N *= 2
        if N > max_points:
            err = abs(R_prev - T_prev) if R_prev is not None else float("inf")
            return QuadResult(R_prev if R_prev is not None else T_prev, float(err), N // 2, False)
        T = integrand_mean(N)
        R = T + (T - T_prev) / 3
        if R_prev is not None and abs(R - R_prev) < tol:
            return QuadResult(R, float(abs(R - R_prev)), N, True)
        if R_prev is None and abs(T - T_prev) < tol * 1e-3:
            return QuadResult(R, float(abs(T - T_prev)), N, True)
        T_prev, R_prev = T, R


def _angles(N):
    return 2 * np.pi * np.arange(N) / N


def proximity(model, log_r, tol=QUAD_TOL, min_points=QUAD_MIN_POINTS, max_points=QUAD_MAX_POINTS,
              check_poles=True) -> QuadResult:
    """``m(r, f) = (1/2pi) int log+ |f(r e^{i theta})| d theta``."""
    L = mpf(log_r)
    if check_poles:
        check_pole_clearance(model, L, max_points)

    def mean(N):
        return M.evaluate_circle(model, L, _angles(N)).log_plus_mean()

    return _trapezoid(mean, tol, min_points, max_points)


def counting(model, log_r, target: str = "poles"):
    """``(n(r), N(r))`` for the poles (``target='poles'``) or zeros.

    ``N(r) = sum mult * log(r/|a|) + n(0) log r`` over ``0 < |a| <= r``.
    """
    L = mpf(log_r)
    if target == "poles":
        roots = M.poles_upto(model, L)
    elif target == "zeros":
        roots = M.zeros_upto(model, L)
    else:
        raise InvalidInput(f"unknown counting target {target!r}")
    if isinstance(roots, M.RootList) and not roots.complete:
        raise UncertifiedRoots(f"{target} list is not certified up to exp({mpmath.nstr(L, 8)})")
    n = 0
    N = mpf(0)
    for mod, mult in roots:
        n += mult
        N += mult * (L if mod == 0 else L - mpmath.log(mod))
    return n, N


def counting_seq(seq: M.ZeroSequence, log_r):
    """Counting functions straight from a zero sequence (no model needed)."""
    L = mpf(log_r)
    terms = seq.upto(L)
    n = sum(t[2] for t in terms)
    N = mpmath.fsum(t[2] * (L - t[0]) for t in terms)
    return n, N


# ---------------------------------------------------------------------------
# characteristic and maximum modulus
# ---------------------------------------------------------------------------

@dataclass
class CharacteristicSample:
    log_r: mpf
    m: mpf
    n_poles: int
    N_poles: mpf
    T: mpf
    log_M: Optional[mpf]
    quadrature_error: float

    def row(self, digits=20) -> dict:
        return {
            "log_r": fmt(self.log_r, digits),
            "m": fmt(self.m, digits),
            "n": str(self.n_poles),
            "N": fmt(self.N_poles, digits),
            "T": fmt(self.T, digits),
            "logM": "" if self.log_M is None else fmt(self.log_M, digits),
            "err": fmt(self.quadrature_error, 6),
        }


def characteristic(model, grid, tol=QUAD_TOL, with_log_M=None, max_points=QUAD_MAX_POINTS):
    """``CharacteristicSample`` per grid point; ``log M`` for entire models."""
    grid = [mpf(L) for L in grid]
    if isinstance(model, M.PowerSeries):
        check_envelope_range(model, grid)
    if with_log_M is None:
        with_log_M = M.is_entire(model)
    out = []
    for L in grid:
        q = proximity(model, L, tol=tol, max_points=max_points)
        n, N = counting(model, L, "poles")
        logM = max_modulus(model, [L])[0] if with_log_M else None
        out.append(CharacteristicSample(L, q.value, n, N, q.value + N, logM, q.error))
    return out


def usable_log_r(model: M.PowerSeries, lo=mpf(-50), hi=None):
    """Largest ``log r`` with the envelope maximiser ``k* <= 0.8 K``."""
    K = model.K
    limit = ENVELOPE_DOMINANCE * K

    def ok(L):
        return M.series_envelope(model, L)[1] <= limit

    if hi is None:
        hi = mpf(10)
        while ok(hi) and hi < mpf(10) ** 8:
            hi *= 2
    if not ok(lo):
        return None
    if ok(hi):
        return hi
    for _ in range(80):
        mid = (lo + hi) / 2
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def check_envelope_range(model: M.PowerSeries, grid):
    top = max(mpf(L) for L in grid)
    _, kstar = M.series_envelope(model, top)
    if kstar > ENVELOPE_DOMINANCE * model.K:
        mx = usable_log_r(model)
        raise RadiusOutOfRange(
            f"envelope maximiser k*={kstar} exceeds {ENVELOPE_DOMINANCE}K at log r = {mpmath.nstr(top, 8)}",
            max_log_r=mx)


def _golden_max(func, a, b, iters=40):
    g = (math.sqrt(5) - 1) / 2
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = func(c), func(d)
    for _ in range(iters):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = func(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = func(d)
    return max(fc, fd)


def max_modulus(model, grid, samples=256):
    """``log M(r, f)`` per grid point.

    Series: Cauchy envelope ``max_k log|c_k| + k log r`` plus ``log(K+1)``
    (an upper bound; the envelope itself is a lower bound).  Other models:
    the maximum over ``samples`` angles, polished by golden-section search.
    """
    out = []
    if isinstance(model, M.PowerSeries):
        check_envelope_range(model, [mpf(L) for L in grid])
        for L in grid:
            env, _ = M.series_envelope(model, mpf(L))
            out.append(env + mpmath.log(model.K + 1))
        return out
    if not M.is_entire(model):
        raise UnsupportedVariant("maximum modulus is only defined here for entire models")
    th = _angles(samples)
    for L in grid:
        L = mpf(L)
        cv = M.evaluate_circle(model, L, th)
        j = int(np.argmax(cv.offsets))
        h = 2 * np.pi / samples

        # offsets share the base, which depends on L only
        def f(t):
            return float(M.evaluate_circle(model, L, np.array([t])).offsets[0])

        best = _golden_max(f, th[j] - h, th[j] + h)
        best = max(best, float(cv.offsets[j]))
        out.append(cv.base + mpf(best))
    return out


# ---------------------------------------------------------------------------
# order estimation
# ---------------------------------------------------------------------------

@dataclass
class OrderEstimate:
    rho: float
    fit_points: list
    envelope_slope: float
    intercept: float
    residual_spread: float
    quantity: str
    low_confidence: bool = False
    infinite: bool = False
    note: str = ""

    def tol(self) -> float:
        return max(ORDER_TOL_FLOOR, 3 * self.residual_spread)


def order_estimate(log_r_values, X_values, phi: PhiScale, quantity: str = "T",
                   bins: int = DEFAULT_BINS, min_samples=MIN_ORDER_SAMPLES,
                   min_spread=MIN_LOG_PHI_SPREAD) -> OrderEstimate:
    """Upper-envelope regression of ``log X`` against ``log phi(r)``.

    Samples are binned over ``log phi``; the bin maxima (a limsup surrogate)
    are fitted by least squares.  ``residual_spread`` is the RMS residual of
    the bin maxima; above 0.5, or for a negative slope, the estimate is
    flagged as low confidence.  Non-positive ``X`` samples are dropped.
    """
    xs, ys = [], []
    for L, X in zip(log_r_values, X_values):
        X = mpf(X)
        if not X > 0:
            continue
        if mpmath.isinf(X):
            return OrderEstimate(float("inf"), [], float("inf"), 0.0, 0.0, quantity, True, True,
                                 "infinite sample")
        xs.append(float(phi.log_phi(mpf(L))))
        ys.append(float(mpmath.log(X)))
    if len(xs) < min_samples:
        raise InsufficientGrid(f"{len(xs)} usable samples, need >= {min_samples}")
    xs, ys = np.array(xs), np.array(ys)
    if xs.max() - xs.min() < min_spread:
        raise InsufficientGrid(f"log phi spread {xs.max() - xs.min():.3g} below {min_spread}")
    edges = np.linspace(xs.min(), xs.max(), bins + 1)
    idx = np.clip(np.searchsorted(edges, xs, side="right") - 1, 0, bins - 1)
    px, py = [], []
    for b in range(bins):
        sel = np.nonzero(idx == b)[0]
        if len(sel) == 0:
            continue
        k = sel[np.argmax(ys[sel])]
        px.append(xs[k])
        py.append(ys[k])
    px, py = np.array(px), np.array(py)
    if len(px) < 3:
        raise InsufficientGrid("fewer than three populated bins")
    slope, intercept = np.polyfit(px, py, 1)
    resid = py - (slope * px + intercept)
    spread = float(np.sqrt(np.mean(resid ** 2)))
    low = spread > LOW_CONFIDENCE_SPREAD or slope < 0
    note = "negative envelope slope" if slope < 0 else ("non-linear envelope" if low else "")
    return OrderEstimate(
        rho=float(max(slope, 0.0)), fit_points=list(zip(px.tolist(), py.tolist())),
        envelope_slope=float(slope), intercept=float(intercept), residual_spread=spread,
        quantity=quantity, low_confidence=bool(low), note=note,
    )


# ---------------------------------------------------------------------------
# phi-exponent of convergence
# ---------------------------------------------------------------------------

@dataclass
class ExponentEstimate:
    lam: float
    lam_lo: float
    lam_hi: float
    method: str
    mu_scan: list = field(default_factory=list)
    order_of_n: Optional[OrderEstimate] = None

    @property
    def bracket(self):
        return (self.lam_lo, self.lam_hi)


def _local_exponents(seq: M.ZeroSequence, phi: PhiScale, terms: int):
    """``(log n, log phi(r_n))`` over the materialized terms (n counted with
    multiplicity, first occurrence of each modulus)."""
    logn, logphi = [], []
    count = 0
    for k in range(1, terms + 1):
        if not seq._has(k):
            break
        Lk, _, mult = seq.term(k)
        count += mult
        if Lk <= 0:
            continue
        logn.append(math.log(count))
        logphi.append(float(phi.log_phi(Lk)))
    return np.array(logn), np.array(logphi)


def phi_exponent(seq: M.ZeroSequence, phi: PhiScale, mu_range=(0.01, 3.0), step=0.01,
                 terms: int = 2000, delta=EXPONENT_DELTA) -> ExponentEstimate:
    """phi-exponent of convergence by two routes.

    ``sum_dichotomy``: for each scanned ``mu`` the terms
    ``phi(r_n)^-mu`` are fitted by a power law ``n^-p`` over the tail half;
    ``p > 1 + delta`` is read as convergent, ``p < 1 - delta`` as divergent.
    ``lambda`` is bracketed between the last divergent and the first
    convergent ``mu`` of the final convergent run.  ``order_of_n``: the
    phi-order of ``n(r)`` sampled at the zeros themselves.
    """
    logn, logphi = _local_exponents(seq, phi, terms)
    if len(logn) < 20:
        raise InsufficientGrid("need at least 20 terms with r_n > 1")
    if seq.length is not None and seq.length <= terms:
        # finite sequences converge for every mu
        return ExponentEstimate(0.0, 0.0, 0.0, "finite", [], None)
    h = len(logn) // 2
    tn, tp = logn[h:], logphi[h:]
    # log a_n = -mu log phi(r_n); power-law exponent p = mu * d log phi / d log n
    if tn[-1] - tn[0] <= 0:
        raise InsufficientGrid("tail has no spread in n")
    growth = float(np.polyfit(tn, tp, 1)[0])
    mus = np.round(np.arange(mu_range[0], mu_range[1] + step / 2, step), 10)
    scan = []
    for mu in mus:
        p = mu * growth
        verdict = "convergent" if p > 1 + delta else ("divergent" if p < 1 - delta else "indeterminate")
        scan.append((float(mu), verdict))
    last_div = max((mu for mu, v in scan if v == "divergent"), default=0.0)
    conv_after = [mu for mu, v in scan if v == "convergent" and mu > last_div]
    if not conv_after:
        lam_lo, lam_hi = last_div, float("inf")
        lam = float("inf")
    else:
        lam_hi = min(conv_after)
        lam_lo = last_div
        lam = 0.0 if lam_lo == 0.0 and lam_hi == scan[0][0] else (lam_lo + lam_hi) / 2
    # order of n(r) at the zero radii
    order = None
    try:
        Ls = [seq.term(k)[0] for k in range(1, len(logn) + 1)]
        counts = []
        c = 0
        for k in range(1, len(Ls) + 1):
            c += seq.term(k)[2]
            counts.append(c)
        order = order_estimate(Ls, counts, phi, quantity="n")
    except (InsufficientGrid, InvalidInput):
        order = None
    return ExponentEstimate(lam, lam_lo, lam_hi, "sum_dichotomy", scan, order)


# ---------------------------------------------------------------------------
# integral dichotomy
# ---------------------------------------------------------------------------

@dataclass
class DichotomyVerdict:
    verdict: str
    slope: float
    tail_integral: float


def integral_dichotomy(log_r_values, T_values, phi: PhiScale, mu, delta=DICHOTOMY_DELTA) -> DichotomyVerdict:
    """Convergence of ``int phi'(t) T(t) / phi(t)^(mu+1) dt``.

    After ``u = phi(t)`` the integrand is ``T / u^(mu+1)``; its log-log
    slope against ``log u`` is fitted over the tail half of the samples.
    ``mu <= 0`` is always divergent for unbounded non-decreasing ``T``.
    """
    Ts = [mpf(t) for t in T_values]
    if any(b < a for a, b in zip(Ts, Ts[1:])):
        raise InvalidInput("T samples must be non-decreasing")
    us = [phi.at_log(mpf(L)) for L in log_r_values]
    if any(b < a for a, b in zip(us, us[1:])):
        raise InvalidInput("radii must be increasing")
    if phi.deriv is None:
        raise CapabilityError("integral dichotomy needs phi'", skipped=["integral_dichotomy"])
    mu = mpf(mu)
    lu = [float(mpmath.log(u)) for u in us]
    lg = [float(mpmath.log(T) - (mu + 1) * mpmath.log(u)) if T > 0 else -np.inf for T, u in zip(Ts, us)]
    tx, ty = np.array(tail_half(lu)), np.array(tail_half(lg))
    ok = np.isfinite(ty)
    slope = float(np.polyfit(tx[ok], ty[ok], 1)[0]) if ok.sum() >= 2 else float("nan")
    # tail integral in u by the trapezoid rule on the samples
    # (in mpf: for fast scales the integrand overflows a double)
    uu = [mpmath.log(u) for u in tail_half(us)]
    gi = [mpmath.exp(mpf(y) + x) for y, x in zip(ty, uu)]  # integrand * u, so integrate over log u
    integral = float(mpmath.fsum((gi[i] + gi[i + 1]) * (uu[i + 1] - uu[i]) / 2 for i in range(len(uu) - 1)))
    if mu <= 0:
        return DichotomyVerdict("divergent", slope, integral)
    if slope < -1 - delta:
        v = "convergent"
    elif slope > -1 + delta:
        v = "divergent"
    else:
        v = "indeterminate"
    return DichotomyVerdict(v, slope, integral)


# ---------------------------------------------------------------------------
# logarithmic q-difference
# ---------------------------------------------------------------------------

def lemma_A_bound(n_f, n_1f, T_lam, log_f0, r, lam, q, delta) -> mpf:
    """Explicit right-hand side of the q-difference logarithmic-derivative bound.

    ``n_f``/``n_1f`` are the pole and zero counts at radius ``lam``,
    ``T_lam = T(lam, f)`` and ``log_f0 = log|f(0)|``.
    """
    r, lam, delta = mpf(r), mpf(lam), mpf(delta)
    qa = abs(mpmath.mpmathify(q))
    if not (0 < delta < 1):
        raise DomainError("delta must lie in (0, 1)")
    if not lam > max(r, qa * r):
        raise DomainError("lambda must exceed max(r, |q| r)")
    d = abs(mpmath.mpmathify(q) - 1)
    first = (d ** delta * (qa ** delta + 1) / (delta * (1 - delta) * qa ** delta)
             + d * r / (lam - qa * r) + d * r / (lam - r))
    second = 4 * d * r * lam / ((lam - r) * (lam - qa * r))
    return (mpf(n_f) + mpf(n_1f)) * first + second * (mpf(T_lam) + log_plus(-mpf(log_f0)))


def log_q_difference(model, q, log_r, tol=QUAD_TOL, min_points=QUAD_MIN_POINTS,
                     max_points=QUAD_MAX_POINTS, check_poles=True) -> QuadResult:
    """``m(r, f(qz)/f(z))`` by quadrature of log-space differences."""
    L = mpf(log_r)
    qc = mpmath.mpmathify(q)
    lq = mpmath.log(abs(qc))
    aq = float(mpmath.arg(qc))
    if check_poles:
        check_pole_clearance(model, L, max_points, extra_radii=[lq])

    def mean(N):
        th = _angles(N)
        a = M.evaluate_circle(model, L + lq, th + aq)
        b = M.evaluate_circle(model, L, th)
        if mpmath.isinf(a.base) or mpmath.isinf(b.base):
            raise InvalidInput("log q-difference of the zero function")
        diff = float(a.base - b.base) + (a.offsets - b.offsets)
        diff = np.where(np.isnan(diff), 0.0, diff)
        return mpf(float(np.mean(np.where(diff > 0, diff, 0.0))))

    return _trapezoid(mean, tol, min_points, max_points)


# ---------------------------------------------------------------------------
# relation checks
# ---------------------------------------------------------------------------

@dataclass
class Relation:
    name: str
    lhs: Optional[float]
    rhs: Optional[float]
    margin: Optional[float]
    status: str  # pass | fail | skipped | not-applicable
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "pass"


@dataclass
class RelationReport:
    relations: list = field(default_factory=list)
    orders: dict = field(default_factory=dict)
    params: Optional[dict] = None

    def add(self, rel: Relation):
        self.relations.append(rel)

    def get(self, name):
        for r in self.relations:
            if r.name == name:
                return r
        return None

    @property
    def failures(self):
        return [r for r in self.relations if r.status == "fail"]

    def to_json(self) -> str:
        payload = {
            "relations": [
                {"name": r.name, "lhs": r.lhs, "rhs": r.rhs, "margin": r.margin,
                 "pass": r.status == "pass", "status": r.status, "note": r.note}
                for r in self.relations
            ],
            "orders": self.orders,
            "params": self.params,
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def _leq(name, lhs, rhs, tol, note=""):
    """``lhs <= rhs`` with slack ``tol``; margin ``rhs + tol - lhs``."""
    margin = rhs + tol - lhs
    return Relation(name, float(lhs), float(rhs), float(margin), "pass" if margin >= 0 else "fail",
                    note or f"tol={tol:.3g}, raw gap={rhs - lhs:.4g}")


def _safe_order(log_rs, values, phi, quantity):
    try:
        return order_estimate(log_rs, values, phi, quantity)
    except InsufficientGrid:
        return None


def _counting_series(model, grid, target):
    ns, Ns = [], []
    for L in grid:
        n, N = counting(model, L, target)
        ns.append(n)
        Ns.append(N)
    return ns, Ns


def _zero_sequence_of(model, target):
    if isinstance(model, M.CanonicalProduct):
        return model.zeros if target == "zeros" else None
    if isinstance(model, M.Quotient):
        P = model.P1 if target == "zeros" else model.P2
        return P.zeros if P is not None else None
    return None


def _T_series(model, grid, tol):
    """T(r, f) per grid point; ``m`` by quadrature, N exact."""
    out = []
    for L in grid:
        m = proximity(model, L, tol=tol, max_points=1 << 14).value
        _, N = counting(model, L, "poles")
        out.append(m + N)
    return out


def relation_checks(model, phi: PhiScale, s: SScale, grid, params=None, psi_mu_value=1.0,
                    quad_tol=1e-8, chuang=True) -> RelationReport:
    """Order relations between n, N, T, lambda and the growth parameters.

    ``params`` are the growth parameters of (phi, s) (computed on a default
    iterated grid when omitted).  Checks whose inputs are unavailable are
    recorded as ``skipped`` with the reason.
    """
    from .numeric import iterated_grid

    grid = [mpf(L) for L in grid]
    rep = RelationReport()
    if params is None:
        lo = float(mpmath.log(mpmath.log(max(phi.R0, s.R0, mpf(3))))) + 0.5
        params = growth_params(phi, s, iterated_grid(max(lo, 1.0), 600, 120))
    a, b, g = params.alpha, params.beta, params.gamma
    rep.params = params.as_row()

    T = _T_series(model, grid, quad_tol)
    oT = _safe_order(grid, T, phi, "T")
    rep.orders["T"] = None if oT is None else oT.rho

    for target in ("zeros", "poles"):
        try:
            ns, Ns = _counting_series(model, grid, target)
        except UncertifiedRoots as exc:
            rep.add(Relation(f"counting[{target}]", None, None, None, "skipped", str(exc)))
            continue
        if max(ns) == 0:
            rep.add(Relation(f"N_le_n_plus_beta[{target}]", 0.0, 0.0, 0.0, "pass",
                             f"no {target}: n = N = 0"))
            rep.add(Relation(f"N_ge_alpha_n_plus_alpha_gamma[{target}]", 0.0, 0.0, 0.0,
                             "not-applicable", f"no {target}"))
            continue
        on = _safe_order(grid, ns, phi, "n")
        oN = _safe_order(grid, Ns, phi, "N")
        if on is None or oN is None:
            rep.add(Relation(f"orders[{target}]", None, None, None, "skipped", "too few positive samples"))
            continue
        rep.orders[f"n_{target}"] = on.rho
        rep.orders[f"N_{target}"] = oN.rho
        tol = max(ORDER_TOL_FLOOR, 3 * (on.residual_spread + oN.residual_spread))
        rep.add(_leq(f"N_le_n_plus_beta[{target}]", oN.rho, on.rho + b, tol))
        rep.add(_leq(f"N_ge_alpha_n_plus_alpha_gamma[{target}]", a * on.rho + a * g, oN.rho, tol))

        # psi criterion: fit tau, accept only when the bounds hold
        if phi.deriv is not None and phi.deriv2 is not None:
            tau = _fit_tau(phi, psi_mu_value, grid)
            pb = check_psi_bounds(phi, psi_mu_value, tau, grid) if tau is not None else None
            if pb is not None and pb.ok:
                gap = oN.rho - on.rho - tau
                margin = tol - abs(gap)
                rep.add(Relation(f"psi_N_eq_n_plus_tau[{target}]", oN.rho - on.rho, tau, float(margin),
                                 "pass" if margin >= 0 else "fail", f"tau={tau:.3g}, raw gap={gap:.4g}"))
            else:
                rep.add(Relation(f"psi_N_eq_n_plus_tau[{target}]", None, None, None, "not-applicable",
                                 "psi bounds fail for every tau in [0, 1]"))

        seq = _zero_sequence_of(model, target)
        if seq is not None and oT is not None and seq.length is None:
            try:
                ex = phi_exponent(seq, phi)
                lam = ex.lam_lo
                tolc = max(tol, 3 * oT.residual_spread)
                rep.add(_leq(f"rho_ge_alpha_lambda_plus_alpha_gamma[{target}]", a * lam + a * g,
                             oT.rho, tolc, f"lambda in [{ex.lam_lo:.3g}, {ex.lam_hi:.3g}]"))
            except InsufficientGrid as exc:
                rep.add(Relation(f"rho_ge_alpha_lambda_plus_alpha_gamma[{target}]", None, None, None,
                                 "skipped", str(exc)))
        elif oT is not None:
            lam = 0.0 if max(ns) < 1e9 else None
            rep.add(_leq(f"rho_ge_alpha_lambda_plus_alpha_gamma[{target}]", a * lam + a * g, oT.rho,
                         max(tol, 3 * oT.residual_spread), "finite root set: lambda = 0"))

    # two counting functions: T <= N(r,0) + N(r,inf) + O(phi^(rho-beta+eps)) + O(log r)
    if oT is not None and isinstance(model, (M.CanonicalProduct, M.Quotient, M.Rational)):
        eps = 0.1
        ratios = []
        for L, t in zip(grid, T):
            _, N0 = counting(model, L, "zeros")
            _, Ninf = counting(model, L, "poles")
            err = phi.at_log(L) ** (mpf(oT.rho) - b + eps) + L
            ratios.append(float((t - N0 - Ninf) / err))
        head = max(ratios[: len(ratios) // 2])
        tail = max(tail_half(ratios))
        finite = tail <= 4 * max(head, 1.0)
        note = "bounded error-term ratio" if finite else "error-term ratio grows"
        if b == 0 and not finite:
            rep.add(Relation("two_counting_bound", tail, 4 * max(head, 1.0), None, "not-applicable",
                             "beta = 0: the error term need not be small"))
        else:
            rep.add(Relation("two_counting_bound", tail, 4 * max(head, 1.0),
                             4 * max(head, 1.0) - tail, "pass" if finite else "fail", note))

    # derivative order and Chuang's inequality
    if isinstance(model, (M.Rational, M.PowerSeries)) and oT is not None:
        try:
            d = M.differentiate(model)
            Td = _T_series(d, grid, quad_tol)
            od = _safe_order(grid, Td, phi, "T'")
            if od is not None:
                tol = max(ORDER_TOL_FLOOR, 3 * (oT.residual_spread + od.residual_spread))
                gap = od.rho - oT.rho
                rep.add(Relation("derivative_order", od.rho, oT.rho, float(tol - abs(gap)),
                                 "pass" if abs(gap) <= tol else "fail", f"raw gap={gap:.4g}"))
            if chuang:
                rep.add(_chuang(model, d, grid, T, quad_tol))
        except (UnsupportedVariant, PoleOnCircle, RadiusOutOfRange) as exc:
            rep.add(Relation("derivative_order", None, None, None, "skipped", str(exc)))
    else:
        rep.add(Relation("derivative_order", None, None, None, "skipped",
                         f"no derivative for {type(model).__name__}"))
    return rep


def guarded_relation_checks(model, phi: PhiScale, s: SScale, grid, params=None, **kw) -> RelationReport:
    """``relation_checks`` with the reproduction guard.

    A failing relation is re-evaluated with the grid span and the working
    precision doubled; it stays ``fail`` only when the failure reproduces,
    otherwise it is re-labelled ``pass`` with a note.
    """
    rep = relation_checks(model, phi, s, grid, params=params, **kw)
    if not rep.failures:
        return rep
    grid = [mpf(L) for L in grid]
    lo, hi, n = grid[0], grid[-1], len(grid)
    grid2 = [lo + (2 * hi - lo) * k / (2 * n - 1) for k in range(2 * n)]
    with mp.workprec(2 * mp.prec):
        try:
            rep2 = relation_checks(model, phi, s, grid2, params=params, **kw)
        except (RadiusOutOfRange, InsufficientGrid):
            rep2 = relation_checks(model, phi, s, grid, params=params, **kw)
    for r in rep.failures:
        r2 = rep2.get(r.name)
        if r2 is None or r2.status != "fail":
            r.status = "pass"
            r.note += "; failure did not reproduce under doubled span/precision"
        else:
            r.note += "; reproduced under doubled span/precision"
    return rep


def _fit_tau(phi, mu, grid):
    """Exponent tau in ``psi_mu(t) t ~ phi(t)^-tau``, clamped to [0, 1]."""
    xs, ys = [], []
    for L in grid:
        t = mpmath.exp(mpf(L))
        v = psi_mu(phi, mu, t) * t
        if v <= 0:
            return None
        xs.append(float(phi.log_phi(L)))
        ys.append(float(mpmath.log(v)))
    xs, ys = tail_half(xs), tail_half(ys)
    slope = float(np.polyfit(xs, ys, 1)[0])
    tau = min(max(-slope, 0.0), 1.0)
    return round(tau * 20) / 20


def _chuang(model, deriv, grid, T, quad_tol):
    """Empirical constant in ``T(r,f) <~ c(R) T(R,f') + log+ R + 1`` with R = 2r."""
    ratios = []
    for L, t in zip(grid, T):
        R = L + mpmath.log(2)
        factor = 2 * (1 + mpmath.log(2))
        try:
            Td = proximity(deriv, R, tol=quad_tol, max_points=1 << 14).value + counting(deriv, R, "poles")[1]
        except PoleOnCircle:
            continue
        lhs = t - log_plus(R) - 1
        if Td > 0:
            ratios.append(float(lhs / (factor * Td)))
    if len(ratios) < 4:
        return Relation("chuang", None, None, None, "skipped", "too few usable radii")
    head = max(ratios[: len(ratios) // 2])
    tail = max(tail_half(ratios))
    bound = 4 * max(head, 1.0)
    return Relation("chuang", tail, bound, bound - tail, "pass" if tail <= bound else "fail",
                    f"empirical constant {max(ratios):.3g}")


# ---------------------------------------------------------------------------
# minimum modulus of canonical products
# ---------------------------------------------------------------------------

@dataclass
class MinModReport:
    sup_ratio: float
    tail_slope: float
    finite: bool
    per_radius: list
    skipped: list
    lam: float
    eps: float
    rejected_points: int

    @property
    def passed(self) -> bool:
        return self.finite and self.tail_slope < 0.1


def in_exclusion_disc(z_log_r, theta, zeros, lam, eps) -> bool:
    """Is ``z`` inside some ``D_n = {|z - z_n| <= r_n^-(lam+eps)}``?"""
    L = mpf(z_log_r)
    z = mpmath.exp(L) * mpmath.expjpi(mpf(theta) / mpmath.pi)
    for Ln, thn, _ in zeros:
        rad_log = -(mpf(lam) + eps) * Ln
        if abs(L - Ln) > 1 and rad_log < min(L, Ln):
            continue
        zn = mpmath.exp(Ln) * mpmath.expjpi(mpf(thn) / mpmath.pi)
        if abs(z - zn) <= mpmath.exp(rad_log):
            return True
    return False


def _product_log_abs_at_stress(P: M.CanonicalProduct, n: int, lam, eps):
    """``(log r, log|P|)`` at ``z_n (1 + 2 r_n^-(1+lam+eps))``, just outside ``D_n``."""
    seq = P.zeros
    Ln, thn, mult = seq.term(n)
    log_eta = mpmath.log(2) - (1 + mpf(lam) + eps) * Ln
    others, tail = M._product_terms(P, Ln)
    others = [t for k, t in enumerate(others, start=1) if k != n]
    base, off, _, _ = M._roots_contribution(Ln, others, np.array([thn]), +1)
    val = base + mpf(float(off[0])) + mult * log_eta
    return Ln, val


def product_min_modulus_check(P: M.CanonicalProduct, phi: PhiScale, s: SScale, eps, grid,
                              thetas=None, lam=None) -> MinModReport:
    """Empirical sup of ``-log|P(z)| / (phi(s(r))^(lam+eps) log r)`` off the discs.

    Samples every grid radius at ``thetas`` plus stress points just outside
    the exclusion discs of zeros inside the grid range.  The tail slope is
    the least-squares slope of the per-radius sup against ``log log r`` over
    the top decade of ``log r``.
    """
    eps = mpf(eps)
    if lam is None:
        lam = phi_exponent(P.zeros, phi).lam_hi
    lam = mpf(lam)
    thetas = np.linspace(-np.pi, np.pi, 64, endpoint=False) if thetas is None else np.asarray(thetas)
    grid = [mpf(L) for L in grid]
    lo, hi = min(grid), max(grid)
    rows, skipped = [], []
    rejected = 0

    def denom(L):
        sr = s(mpmath.exp(L))
        return phi(sr) ** (lam + eps) * L

    for L in grid:
        zeros_near = P.zeros.upto(L + 1)
        keep = np.array([not in_exclusion_disc(L, t, zeros_near, lam, eps) for t in thetas])
        rejected += int((~keep).sum())
        if not keep.any():
            skipped.append(float(L))
            continue
        cv = M.evaluate_circle(P, L, thetas[keep])
        worst = -(cv.base + mpf(float(np.min(cv.offsets))))
        rows.append((float(L), float(worst / denom(L))))
    k = P.zeros.count_indices(hi)
    for n in range(1, k + 1):
        Ln = P.zeros.term(n)[0]
        if Ln < lo:
            continue
        L, val = _product_log_abs_at_stress(P, n, lam, eps)
        rows.append((float(L), float(-val / denom(L))))
    rows.sort()
    ratios = np.array([r for _, r in rows])
    finite = bool(np.all(np.isfinite(ratios)))
    top = [(L, r) for L, r in rows if L >= float(hi) / 10]
    if len(top) >= 3:
        x = np.log([L for L, _ in top])
        y = np.array([r for _, r in top])
        slope = float(np.polyfit(x, y, 1)[0])
    else:
        slope = float("nan")
    return MinModReport(float(np.max(ratios)), slope, finite, rows, skipped, float(lam), float(eps),
                        rejected)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

SAMPLE_COLUMNS = ["log_r", "m", "n", "N", "T", "logM", "err"]


def write_samples_csv(samples: Sequence[CharacteristicSample], path, digits=20):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SAMPLE_COLUMNS, lineterminator="\n")
        w.writeheader()
        for smp in samples:
            w.writerow(smp.row(digits))


def write_relation_json(report: RelationReport, path):
    with open(path, "w") as fh:
        fh.write(report.to_json())
        fh.write("\n")
