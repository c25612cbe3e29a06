"""Evaluable meromorphic function models in log space.

Four variants are supported:

* ``Rational``: quotient of two polynomials (ascending coefficient lists);
* ``PowerSeries``: a truncated Taylor series at the origin;
* ``CanonicalProduct``: a genus-0 product ``prod (1 - z/z_n)`` over a
  ``ZeroSequence``;
* ``Quotient``: ``C z**m P1 / P2`` with two canonical products.

Points are given as ``(log r, theta)``.  Rational, product and quotient
models share one factored representation
``log|f| = log|C| + m log r + sum log|1 - z/a| - sum log|1 - z/b|`` whose
terms are split into an exactly tracked ``mpf`` part (``log(r/|a|)`` for
roots inside the circle) and small float corrections.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence, Union

import mpmath
import numpy as np
import sympy
from mpmath import mp, mpc, mpf

from .errors import (
    InvalidInput,
    InvalidParameter,
    NotEntire,
    TruncationInsufficient,
    UncertifiedRoots,
    UnsupportedVariant,
)

DEFAULT_TAIL_TOL = 1e-12
# |w| <= e^-2  =>  |log|1 - w|| <= |w| / (1 - |w|) <= 1.157 |w|
TAIL_FACTOR = 1.16
MATERIALIZE_MARGIN = 2
MAX_MATERIALIZED = 2_000_000
FLOAT_EPS = 2.3e-16
NEG_INF = mpf("-inf")
POS_INF = mpf("inf")


# ---------------------------------------------------------------------------
# values
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LogValue:
    """``log|f(z)|``, ``arg f(z)`` and a bound on the error of ``log_abs``."""

    log_abs: mpf
    arg: float
    error_bound: float
    pole: bool = False


@dataclass
class CircleValues:
    """Values of ``log|f|`` on a circle, stored as ``base + offsets[i]``.

    ``base`` is an ``mpf`` carrying the (possibly huge) common part, the
    offsets are float64.  ``poles``/``zeros`` mark sample points that hit a
    pole or zero exactly.
    """

    base: mpf
    offsets: np.ndarray
    args: np.ndarray
    error_bound: float

    @property
    def log_abs(self) -> np.ndarray:
        return float(self.base) + self.offsets

    def log_plus_mean(self) -> mpf:
        """Mean of ``log+|f|`` over the samples, keeping ``base`` exact."""
        vals = self.offsets + float(0)
        b = self.base
        if mpmath.isinf(b):
            return POS_INF if b > 0 else mpf(0)
        # split so the float part is well scaled
        if abs(b) < 1e15:
            x = float(b) + vals
            return mpf(float(np.mean(np.where(x > 0, x, 0.0))))
        if b > 0:
            return b + mpf(float(np.mean(vals)))
        return mpf(0)


# ---------------------------------------------------------------------------
# zero sequences
# ---------------------------------------------------------------------------

class ZeroSequence:
    """Moduli (as ``log r_n``), arguments and multiplicities of a sequence.

    ``log_modulus(n)`` is called for ``n = 1, 2, ...`` and must be
    non-decreasing.  Optional closed forms speed things up and tighten
    bounds: ``count_upto(L)`` returns the number of indices with
    ``log r_n <= L`` (an initial guess is fine, it is corrected locally) and
    ``tail_sum(N, L)`` bounds ``sum_{n>N} mult_n * r/r_n`` at ``log r = L``.
    Terms are cached; the object is otherwise immutable.
    """

    def __init__(self, log_modulus: Callable[[int], mpf], argument: Callable[[int], float] = None,
                 multiplicity: Callable[[int], int] = None, length: Optional[int] = None,
                 count_upto: Optional[Callable] = None, tail_sum: Optional[Callable] = None,
                 name: str = "zeros"):
        self._log_modulus = log_modulus
        self._argument = argument or (lambda n: 0.0)
        self._multiplicity = multiplicity or (lambda n: 1)
        self.length = length
        self._count_upto = count_upto
        self._tail_sum = tail_sum
        self.name = name
        self._cache: list = []

    @classmethod
    def from_entries(cls, entries: Sequence, name: str = "zeros") -> "ZeroSequence":
        """Finite sequence from ``(log_modulus, argument, multiplicity)`` rows."""
        rows = sorted((mpf(e[0]), float(e[1]) if len(e) > 1 else 0.0,
                       int(e[2]) if len(e) > 2 else 1) for e in entries)
        for row in rows:
            if row[2] < 1:
                raise InvalidInput("multiplicities must be positive integers")
        return cls(lambda n: rows[n - 1][0], lambda n: rows[n - 1][1], lambda n: rows[n - 1][2],
                   length=len(rows), name=name)

    def term(self, n: int):
        """``(log r_n, theta_n, mult_n)`` for ``n >= 1``."""
        while len(self._cache) < n:
            k = len(self._cache) + 1
            L = mpf(self._log_modulus(k))
            if self._cache and L < self._cache[-1][0]:
                raise InvalidInput(f"{self.name}: moduli decrease at index {k}")
            self._cache.append((L, float(self._argument(k)), int(self._multiplicity(k))))
        return self._cache[n - 1]

    def _has(self, n: int) -> bool:
        return self.length is None or n <= self.length

    def count_indices(self, log_R) -> int:
        """Number of indices ``n`` with ``log r_n <= log_R``."""
        L = mpf(log_R)
        if self.length == 0:
            return 0
        if self._count_upto is not None:
            k = max(0, int(self._count_upto(L)))
            if self.length is not None:
                k = min(k, self.length)
            while self._has(k + 1) and self.term(k + 1)[0] <= L:
                k += 1
            while k > 0 and self.term(k)[0] > L:
                k -= 1
            return k
        k = 0
        while self._has(k + 1) and self.term(k + 1)[0] <= L:
            k += 1
            if k > MAX_MATERIALIZED:
                raise TruncationInsufficient(f"{self.name}: more than {MAX_MATERIALIZED} terms below radius")
        return k

    def upto(self, log_R):
        """Materialized terms with ``log r_n <= log_R``."""
        k = self.count_indices(log_R)
        return [self.term(n) for n in range(1, k + 1)]

    def counting(self, log_R) -> int:
        """``n(R)``: count with multiplicity."""
        return sum(t[2] for t in self.upto(log_R))

    def tail_bound(self, N: int, log_r) -> mpf:
        """Bound on ``sum_{n>N} mult_n r/r_n``.

        Uses the closed form when given; otherwise a geometric majorant from
        the next terms, valid when the gaps ``log r_{n+1} - log r_n`` keep
        growing beyond the inspected window (checked on the window only).
        """
        if not self._has(N + 1):
            return mpf(0)
        best = POS_INF
        if self._tail_sum is not None:
            best = mpf(self._tail_sum(N, mpf(log_r)))
        geo = self._geometric_tail(N, mpf(log_r))
        best = min(best, geo)
        if self.length is None and N > 0:
            best = min(best, self._dyadic_tail(N, mpf(log_r)))
        return best

    def _dyadic_tail(self, N, L, blocks=5):
        """Majorant for polynomially spaced moduli.

        Block ``j`` holds indices ``(2^j N, 2^(j+1) N]`` and is bounded by
        ``2^j N mult / r_(2^j N + 1)``; when the block ratios are below one
        and, extrapolated one window ahead, still below one, the tail is
        bounded by a geometric series with that ratio.  Terms are evaluated
        directly (not cached), so large ``N`` costs nothing.
        """
        S = []
        for j in range(blocks):
            k = N * 2 ** j + 1
            Lk = mpf(self._log_modulus(k))
            mult = max(int(self._multiplicity(k)), int(self._multiplicity(2 * k - 1)))
            S.append(mult * N * 2 ** j * mpmath.exp(L - Lk))
        ratios = [b / a for a, b in zip(S, S[1:])]
        # extrapolate one window ahead to guard against ratios creeping to 1
        t = max(ratios[-1] + max(mpf(0), ratios[-1] - ratios[0]), max(ratios))
        if not t < 1:
            return POS_INF
        return S[0] / (1 - t)

    def _geometric_tail(self, N, L, window=6):
        terms = []
        for n in range(N + 1, N + 1 + window):
            if not self._has(n):
                break
            Ln, _, m = self.term(n)
            terms.append((Ln, m))
        if len(terms) < window:
            # finite sequence ending inside the window: sum exactly
            if self.length is not None and N + len(terms) >= self.length:
                return mpmath.fsum(m * mpmath.exp(L - Ln) for Ln, m in terms)
            return POS_INF
        gaps = [b[0] - a[0] for a, b in zip(terms, terms[1:])]
        mults = [m for _, m in terms]
        if any(g2 < g1 for g1, g2 in zip(gaps, gaps[1:])) or gaps[-1] <= 0 or len(set(mults)) > 1:
            return POS_INF
        ratio = mpmath.exp(-gaps[0])
        first = mults[0] * mpmath.exp(L - terms[0][0])
        if ratio >= 1:
            return POS_INF
        return first / (1 - ratio)

    def sum_reciprocals_bound(self, max_terms=100_000, tol=1e-12):
        """Partial sum of ``1/r_n`` with a certified remainder (convergence test)."""
        total = mpf(0)
        tb = POS_INF
        for n in range(1, max_terms + 1):
            if not self._has(n):
                return total, mpf(0)
            Ln, _, m = self.term(n)
            total += m * mpmath.exp(-Ln)
            if n % 8 == 0 or (self.length is not None and n == self.length):
                tb = self.tail_bound(n, 0)
                if tb <= tol * max(total, mpf(1)):
                    return total, tb
        return total, tb


# ---------------------------------------------------------------------------
# model variants
# ---------------------------------------------------------------------------

def _is_exact(c) -> bool:
    if isinstance(c, bool):
        return False
    if isinstance(c, (int, Fraction)):
        return True
    if isinstance(c, sympy.Basic):
        return bool(c.is_number) and all(
            isinstance(part, (sympy.Integer, sympy.Rational)) for part in c.as_real_imag())
    return False


def _to_sym(c):
    if isinstance(c, Fraction):
        return sympy.Rational(c.numerator, c.denominator)
    return sympy.sympify(c)


def _to_mp(c):
    if isinstance(c, sympy.Basic):
        re, im = c.as_real_imag()
        re = mpf(sympy.Float(re, mp.dps + 10)) if re != 0 else mpf(0)
        im = mpf(sympy.Float(im, mp.dps + 10)) if im != 0 else mpf(0)
        return mpc(re, im) if im != 0 else re
    if isinstance(c, Fraction):
        return mpf(c.numerator) / c.denominator
    if isinstance(c, complex):
        return mpc(c)
    if isinstance(c, str):
        return mpmath.mpmathify(c)
    if isinstance(c, (mpc, mpf)):
        return c
    return mpf(c)


def _trim(coeffs):
    cs = list(coeffs)
    while len(cs) > 1 and cs[-1] == 0:
        cs.pop()
    return cs


@dataclass(frozen=True)
class Rational:
    """``numer(z) / denom(z)``; coefficient lists start with the constant term.

    Exact coefficients (ints, fractions, sympy rationals) are normalized by
    an exact gcd and their roots are isolated by sympy; other coefficients
    are converted to ``mpf``/``mpc`` and rooted numerically with an error
    estimate.
    """

    numer: tuple
    denom: tuple = (1,)
    exact: bool = True
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @classmethod
    def make(cls, numer, denom=(1,)) -> "Rational":
        numer, denom = _trim(numer), _trim(denom)
        if all(c == 0 for c in denom):
            raise InvalidInput("denominator is identically zero")
        exact = all(_is_exact(c) for c in list(numer) + list(denom))
        if exact:
            z = sympy.Symbol("z")
            pn = sympy.Poly(list(reversed([_to_sym(c) for c in numer])), z)
            pd = sympy.Poly(list(reversed([_to_sym(c) for c in denom])), z)
            if not pn.is_zero:
                g = sympy.gcd(pn, pd)
                if g.degree() > 0:
                    pn = sympy.div(pn, g)[0]
                    pd = sympy.div(pd, g)[0]
            return cls(tuple(reversed(pn.all_coeffs())), tuple(reversed(pd.all_coeffs())), True)
        return cls(tuple(_to_mp(c) for c in numer), tuple(_to_mp(c) for c in denom), False)

    @property
    def is_zero(self) -> bool:
        return all(c == 0 for c in self.numer)

    @property
    def is_entire(self) -> bool:
        return len(self.denom) == 1

    def mp_coeffs(self, which: str):
        return [_to_mp(c) for c in getattr(self, which)]


@dataclass(frozen=True)
class PowerSeries:
    """Truncated series ``sum_{k<=K} c_k z^k`` with per-coefficient error bounds."""

    coeffs: tuple
    errors: tuple = ()
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @classmethod
    def make(cls, coeffs, errors=None) -> "PowerSeries":
        cs = tuple(_to_mp(c) for c in coeffs)
        if not cs:
            raise InvalidInput("a power series needs at least one coefficient")
        errs = tuple(mpf(e) for e in errors) if errors is not None else tuple(mpf(0) for _ in cs)
        if len(errs) != len(cs):
            raise InvalidInput("errors must match coefficients in length")
        return cls(cs, errs)

    @property
    def K(self) -> int:
        return len(self.coeffs) - 1

    def log_abs_coeffs(self) -> list:
        if "logc" not in self._cache:
            self._cache["logc"] = [mpmath.log(abs(c)) if c != 0 else NEG_INF for c in self.coeffs]
        return self._cache["logc"]


@dataclass(frozen=True)
class CanonicalProduct:
    zeros: ZeroSequence
    tail_tol: float = DEFAULT_TAIL_TOL


@dataclass(frozen=True)
class Quotient:
    """``C z**m P1 / P2``: the genus-0 form of a meromorphic function of order < 1."""

    C: complex
    m: int
    P1: Optional[CanonicalProduct] = None
    P2: Optional[CanonicalProduct] = None


FunctionModel = Union[Rational, PowerSeries, CanonicalProduct, Quotient]


def polynomial(coeffs) -> Rational:
    return Rational.make(coeffs, (1,))


def rational(numer, denom=(1,)) -> Rational:
    return Rational.make(numer, denom)


def power_series(coeffs, errors=None) -> PowerSeries:
    return PowerSeries.make(coeffs, errors)


def is_entire(model: FunctionModel) -> bool:
    if isinstance(model, Rational):
        return model.is_entire
    if isinstance(model, Quotient):
        return model.P2 is None and model.m >= 0
    return True


# ---------------------------------------------------------------------------
# roots of rational models
# ---------------------------------------------------------------------------

def _poly_roots(coeffs, exact: bool, what: str):
    """Nonzero roots of a polynomial as ``(root: mpc, multiplicity)`` plus the
    multiplicity of the root at the origin."""
    cs = list(coeffs)
    m0 = 0
    while len(cs) > 1 and cs[0] == 0:
        cs.pop(0)
        m0 += 1
    if len(cs) <= 1:
        return [], m0
    if exact:
        z = sympy.Symbol("z")
        p = sympy.Poly(list(reversed([_to_sym(c) for c in cs])), z)
        out = []
        try:
            _, factors = p.sqf_list()
            for fac, mult in factors:
                for root in fac.all_roots():
                    v = sympy.N(root, mp.dps + 10)
                    re, im = v.as_real_imag()
                    out.append((mpc(mpf(str(re)), mpf(str(im))), mult))
            return out, m0
        except (NotImplementedError, sympy.PolynomialError):
            pass
    mcs = [_to_mp(c) for c in cs]
    try:
        with mp.workprec(mp.prec + 64):
            roots, err = mpmath.polyroots(list(reversed(mcs)), maxsteps=400, extraprec=2 * mp.prec,
                                          error=True)
    except mpmath.libmp.libhyper.NoConvergence as exc:
        raise UncertifiedRoots(f"{what}: root finding did not converge") from exc
    scale = max(abs(r) for r in roots)
    if err > mpf(10) ** (-(mp.dps // 2)) * max(scale, 1):
        raise UncertifiedRoots(f"{what}: root error estimate {mpmath.nstr(err, 3)} too large")
    # cluster numerically coincident roots
    out = []
    for r in sorted(roots, key=lambda x: (abs(x), mpmath.arg(x))):
        for i, (s, m) in enumerate(out):
            if abs(r - s) <= mpf(10) ** (-(mp.dps // 3)) * max(abs(s), 1):
                out[i] = (s, m + 1)
                break
        else:
            out.append((r, 1))
    return out, m0


def _rational_factored(model: Rational):
    """``(logC, argC, m, zeros, poles)`` with roots as ``(log|a|, arg a, mult)``."""
    if "factored" in model._cache:
        return model._cache["factored"]
    if model.is_zero:
        raise InvalidInput("the zero function has no factored form")
    zn, mn = _poly_roots(model.numer, model.exact, "numerator")
    zd, md = _poly_roots(model.denom, model.exact, "denominator")
    num = model.mp_coeffs("numer")
    den = model.mp_coeffs("denom")
    lead = num[mn] / den[md]
    # p(z) = c_m z^m prod(1 - z/a): lowest coefficient gives C
    zeros = sorted((mpmath.log(abs(a)), float(mpmath.arg(a)), k) for a, k in zn)
    poles = sorted((mpmath.log(abs(b)), float(mpmath.arg(b)), k) for b, k in zd)
    out = (mpmath.log(abs(lead)), float(mpmath.arg(lead)), mn - md, zeros, poles)
    model._cache["factored"] = out
    return out


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def _roots_contribution(L: mpf, roots, thetas: np.ndarray, sign: int):
    """Sum of ``sign * log|1 - z/a|`` over the listed roots.

    Returns ``(exact_part, offsets, args, hit)``; ``hit`` flags sample points
    lying exactly on a root.
    """
    base = mpf(0)
    off = np.zeros_like(thetas)
    args = np.zeros_like(thetas)
    hit = np.zeros(thetas.shape, dtype=bool)
    for La, tha, mult in roots:
        d = L - La
        df = float(d)
        phase = thetas - tha
        if d > 0:
            # 1 - z/a = -(z/a)(1 - a/z)
            base += sign * mult * d
            x = math.exp(-df) if df < 745 else 0.0
            arg_extra = math.pi + phase
            phase = -phase
        else:
            x = math.exp(df) if df > -745 else 0.0
            arg_extra = 0.0
        re = x * np.cos(phase)
        im = x * np.sin(phase)
        with np.errstate(divide="ignore", invalid="ignore"):
            term = 0.5 * np.log1p(x * x - 2 * re)
        hit |= np.isneginf(term)
        off += sign * mult * np.where(np.isfinite(term), term, 0.0)
        args += sign * mult * (arg_extra + np.arctan2(-im, 1 - re))
    return base, off, args, hit


def _product_terms(P: CanonicalProduct, L: mpf):
    """Materialized zeros for evaluation at radius ``e^L`` and the tail bound."""
    seq = P.zeros
    k = seq.count_indices(L + MATERIALIZE_MARGIN)
    tb = seq.tail_bound(k, L)
    while TAIL_FACTOR * tb > P.tail_tol:
        if not seq._has(k + 1):
            tb = mpf(0)
            break
        k += 1
        if k > MAX_MATERIALIZED:
            raise TruncationInsufficient(
                f"{seq.name}: tail bound {mpmath.nstr(TAIL_FACTOR * tb, 3)} above tolerance",
                achieved_bound=float(TAIL_FACTOR * tb))
        if k % 16 == 0 or k < 64:
            tb = seq.tail_bound(k, L)
        if tb == POS_INF and k > 100_000:
            raise TruncationInsufficient(f"{seq.name}: no usable tail bound", achieved_bound=float("inf"))
    return [seq.term(n) for n in range(1, k + 1)], float(TAIL_FACTOR * tb)


def _factored_parts(model: FunctionModel, L: mpf):
    """``(logC, argC, m, zeros, poles, tail_err)`` for a non-series model."""
    if isinstance(model, Rational):
        logC, argC, m, zeros, poles = _rational_factored(model)
        return logC, argC, m, zeros, poles, 0.0
    if isinstance(model, CanonicalProduct):
        zeros, err = _product_terms(model, L)
        return mpf(0), 0.0, 0, zeros, [], err
    if isinstance(model, Quotient):
        if model.C == 0:
            raise InvalidInput("quotient with C = 0 is identically zero")
        zeros, e1 = _product_terms(model.P1, L) if model.P1 is not None else ([], 0.0)
        poles, e2 = _product_terms(model.P2, L) if model.P2 is not None else ([], 0.0)
        C = _to_mp(model.C)
        return mpmath.log(abs(C)), float(mpmath.arg(C)), int(model.m), zeros, poles, e1 + e2
    raise UnsupportedVariant(f"no factored form for {type(model).__name__}")


def evaluate_circle(model: FunctionModel, log_r, thetas) -> CircleValues:
    """``log|f|`` and ``arg f`` at ``r e^{i theta}`` for an array of angles."""
    L = mpf(log_r)
    th = np.asarray(thetas, dtype=float)
    if isinstance(model, PowerSeries):
        return _series_circle(model, L, th)
    if isinstance(model, Rational) and model.is_zero:
        return CircleValues(NEG_INF, np.zeros_like(th), np.zeros_like(th), 0.0)
    logC, argC, m, zeros, poles, tail_err = _factored_parts(model, L)
    bz, oz, az, hz = _roots_contribution(L, zeros, th, +1)
    bp, op, ap, hp = _roots_contribution(L, poles, th, -1)
    base = logC + m * L + bz + bp
    off = oz + op
    off = np.where(hz & ~hp, -np.inf, off)
    off = np.where(hp & ~hz, np.inf, off)
    args = np.mod(argC + m * th + az + ap + np.pi, 2 * np.pi) - np.pi
    nterms = sum(t[2] for t in zeros) + sum(t[2] for t in poles)
    err = tail_err + FLOAT_EPS * (4 * nterms + 4) + FLOAT_EPS * float(
        np.max(np.abs(np.where(np.isfinite(off), off, 0.0)), initial=0.0))
    if m != 0 and L == NEG_INF:
        raise InvalidInput("cannot evaluate at the origin in log form")
    return CircleValues(base, off, args, err)


def evaluate(model: FunctionModel, log_r, theta=0.0, tol=None) -> LogValue:
    """``log|f(z)|`` at ``z = exp(log_r + i theta)`` with an error bound.

    Poles give ``log_abs = +inf`` with ``pole=True``; exact zeros ``-inf``.
    ``tol`` (if given) caps the allowed error bound.
    """
    if isinstance(model, PowerSeries):
        val = _series_point(model, mpf(log_r), float(theta))
    else:
        cv = evaluate_circle(model, log_r, np.array([float(theta)]))
        off = cv.offsets[0]
        pole = bool(np.isposinf(off))
        if np.isinf(off):
            la = POS_INF if off > 0 else NEG_INF
        else:
            la = cv.base + mpf(float(off))
        val = LogValue(la, float(cv.args[0]), cv.error_bound, pole)
    if tol is not None and val.error_bound > tol:
        raise TruncationInsufficient(f"error bound {val.error_bound:.3g} exceeds {tol:.3g}",
                                     achieved_bound=val.error_bound)
    return val


# --- power series -----------------------------------------------------------

def _series_point(model: PowerSeries, L: mpf, theta: float) -> LogValue:
    z = mpmath.exp(L) * mpmath.expjpi(mpf(theta) / mpmath.pi)
    with mp.workprec(mp.prec + 32):
        total = mpmath.polyval(list(reversed(model.coeffs)), z)
        r = mpmath.exp(L)
        errs = mpmath.fsum(e * r ** k for k, e in enumerate(model.errors))
        rounding = mpmath.fsum(abs(c) * r ** k for k, c in enumerate(model.coeffs)) * mpf(2) ** (-mp.prec + 8)
    absval = abs(total)
    bound = errs + rounding
    if absval == 0:
        return LogValue(NEG_INF, 0.0, float("inf") if bound > 0 else 0.0)
    rel = bound / absval
    err = float(-mpmath.log(1 - rel)) if rel < 0.5 else float("inf")
    return LogValue(mpmath.log(absval), float(mpmath.arg(total)), err)


def series_envelope(model: PowerSeries, L: mpf):
    """``(max_k log|c_k| + k L, argmax k)``: the Cauchy envelope.

    The maximiser is located in float64 and the value recomputed in ``mpf``
    at the neighbouring indices.
    """
    logc = model.log_abs_coeffs()
    if "logc_f" not in model._cache:
        model._cache["logc_f"] = np.array([float(v) for v in logc])
    lf = model._cache["logc_f"]
    k = np.arange(len(lf), dtype=float)
    Lf = float(L)
    with np.errstate(invalid="ignore"):
        vals = lf + k * Lf
    if not np.any(np.isfinite(vals)):
        return NEG_INF, 0
    j = int(np.nanargmax(np.where(np.isfinite(vals), vals, -np.inf)))
    best, kstar = NEG_INF, 0
    for i in range(max(0, j - 2), min(len(lf), j + 3)):
        if logc[i] == NEG_INF:
            continue
        v = logc[i] + i * L
        if v > best:
            best, kstar = v, i
    return best, kstar


def _series_circle(model: PowerSeries, L: mpf, th: np.ndarray) -> CircleValues:
    """Circle values by FFT of envelope-scaled coefficients.

    Only used on uniform angle grids ``2 pi j / N``; other angle sets fall
    back to pointwise evaluation.  Points whose FFT value is too small
    relative to the absolute error are recomputed in ``mpf``.
    """
    N = len(th)
    uniform = N > 0 and np.allclose(th, 2 * np.pi * np.arange(N) / N, rtol=0, atol=1e-12)
    if not uniform:
        vals = [_series_point(model, L, float(t)) for t in th]
        base = max((v.log_abs for v in vals), default=mpf(0))
        if mpmath.isinf(base):
            base = mpf(0)
        off = np.array([float(v.log_abs - base) for v in vals])
        return CircleValues(base, off, np.array([v.arg for v in vals]), max(v.error_bound for v in vals))
    logc = model.log_abs_coeffs()
    M, _ = series_envelope(model, L)
    if M == NEG_INF:
        return CircleValues(NEG_INF, np.zeros(N), np.zeros(N), 0.0)
    K = model.K
    scaled = np.zeros(K + 1, dtype=complex)
    for k, (c, lc) in enumerate(zip(model.coeffs, logc)):
        if lc == NEG_INF:
            continue
        e = float(lc + k * L - M)
        if e < -745:
            continue
        ph = float(mpmath.arg(c))
        scaled[k] = math.exp(e) * complex(math.cos(ph), math.sin(ph))
    folded = np.zeros(N, dtype=complex)
    np.add.at(folded, np.arange(K + 1) % N, scaled)
    vals = np.fft.ifft(folded) * N
    abs_err = FLOAT_EPS * (K + 1) * 4 + FLOAT_EPS * math.log2(max(N, 2)) * float(np.sum(np.abs(scaled)))
    # coefficient error bounds, scaled the same way
    ce = mpmath.fsum(e * mpmath.exp(k * L - M) for k, e in enumerate(model.errors) if e != 0)
    abs_err += float(ce)
    mag = np.abs(vals)
    with np.errstate(divide="ignore"):
        off = np.log(mag)
    args = np.angle(vals)
    weak = mag < 1e3 * abs_err
    for j in np.nonzero(weak)[0]:
        v = _series_point(model, L, float(th[j]))
        off[j] = float(v.log_abs - M) if not mpmath.isinf(v.log_abs) else -np.inf
        args[j] = v.arg
    good = ~weak
    rel = abs_err / np.min(mag[good]) if good.any() else 0.0
    err = float(-math.log1p(-rel)) if rel < 0.5 else float("inf")
    return CircleValues(M, off, args, err)


# ---------------------------------------------------------------------------
# examples F and G
# ---------------------------------------------------------------------------

def _check_entire(seq: ZeroSequence):
    # any finite majorant of the tail settles convergence; p-series tails
    # decay too slowly to ask for a small remainder
    total, rem = seq.sum_reciprocals_bound(max_terms=4096)
    if not rem < POS_INF:
        raise NotEntire(f"{seq.name}: sum of 1/r_n does not converge numerically")


def make_example_F(phi, kappa) -> CanonicalProduct:
    """Product with zeros ``phi^-1(n^(1/kappa))`` on the positive axis.

    Its phi-order (and that of its integrated counting function) is
    ``kappa + beta_phi``.
    """
    if not kappa > 0:
        raise InvalidParameter("kappa must be positive")
    k = mpf(kappa)
    inv_k = 1 / k

    def log_mod(n):
        return phi.log_inv(mpf(n) ** inv_k)

    def count(L):
        return int(mpmath.floor(phi.at_log(L) ** k))

    def tail(N, L):
        # phi(r) <= r gives r_n >= n^(1/kappa)
        if inv_k <= 1:
            return POS_INF
        return mpmath.exp(L) * mpf(N) ** (1 - inv_k) / (inv_k - 1) if N > 0 else POS_INF

    seq = ZeroSequence(log_mod, count_upto=count, tail_sum=tail, name=f"F[{phi.name}, kappa={kappa}]")
    _check_entire(seq)
    return CanonicalProduct(seq)


def make_example_G(phi, c) -> CanonicalProduct:
    """Product with zeros ``phi^-1(c^n)``; zero phi-exponent, phi-order ``beta_phi``."""
    if not c > 1:
        raise InvalidParameter("c must exceed 1")
    cm = mpf(c)

    def log_mod(n):
        return phi.log_inv(cm ** n)

    def count(L):
        v = phi.at_log(L)
        return int(mpmath.floor(mpmath.log(v) / mpmath.log(cm))) if v >= 1 else 0

    def tail(N, L):
        # r_n >= c^n
        return mpmath.exp(L) * cm ** (-N) / (cm - 1)

    seq = ZeroSequence(log_mod, count_upto=count, tail_sum=tail, name=f"G[{phi.name}, c={c}]")
    _check_entire(seq)
    return CanonicalProduct(seq)


# ---------------------------------------------------------------------------
# derivative, zeros and poles
# ---------------------------------------------------------------------------

def _poly_mul(a, b):
    out = [0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] += x * y
    return out


def _poly_sub(a, b):
    n = max(len(a), len(b))
    a = list(a) + [0] * (n - len(a))
    b = list(b) + [0] * (n - len(b))
    return [x - y for x, y in zip(a, b)]


def _poly_der(a):
    return [k * a[k] for k in range(1, len(a))] or [0]


def differentiate(model: FunctionModel) -> FunctionModel:
    """Exact derivative of a rational or power-series model."""
    if isinstance(model, Rational):
        if model.exact:
            n = [_to_sym(c) for c in model.numer]
            d = [_to_sym(c) for c in model.denom]
        else:
            n, d = list(model.numer), list(model.denom)
        numer = _poly_sub(_poly_mul(_poly_der(n), d), _poly_mul(n, _poly_der(d)))
        return Rational.make(numer, _poly_mul(d, d))
    if isinstance(model, PowerSeries):
        if model.K == 0:
            return PowerSeries.make([0])
        cs = [k * model.coeffs[k] for k in range(1, model.K + 1)]
        es = [k * model.errors[k] for k in range(1, model.K + 1)]
        return PowerSeries.make(cs, es)
    raise UnsupportedVariant(f"differentiation of {type(model).__name__} is not supported")


class RootList(list):
    """List of ``(modulus, multiplicity)`` with a completeness flag."""

    complete: bool = True


def _as_modulus_list(entries, log_R, m0=0):
    out = RootList()
    if m0 > 0:
        out.append((mpf(0), m0))
    L = mpf(log_R)
    for La, _, k in entries:
        if La <= L:
            out.append((mpmath.exp(La), k))
    return out


def log_zeros_upto(model: FunctionModel, log_R):
    """Zeros with ``|z| <= R`` as ``(log modulus, mult)``; origin as ``-inf``."""
    return [(mpmath.log(m) if m > 0 else NEG_INF, k) for m, k in zeros_upto(model, log_R)]


def zeros_upto(model: FunctionModel, log_R) -> RootList:
    L = mpf(log_R)
    if isinstance(model, Rational):
        if model.is_zero:
            raise InvalidInput("the zero function has no discrete zero set")
        _, _, m, zeros, _ = _rational_factored(model)
        return _as_modulus_list(zeros, L, max(m, 0))
    if isinstance(model, CanonicalProduct):
        return _as_modulus_list(model.zeros.upto(L), L)
    if isinstance(model, Quotient):
        zs = model.P1.zeros.upto(L) if model.P1 is not None else []
        return _as_modulus_list(zs, L, max(model.m, 0))
    if isinstance(model, PowerSeries):
        return _series_zeros(model, L)
    raise UnsupportedVariant(type(model).__name__)


def poles_upto(model: FunctionModel, log_R) -> RootList:
    L = mpf(log_R)
    if isinstance(model, Rational):
        _, _, m, _, poles = _rational_factored(model)
        return _as_modulus_list(poles, L, max(-m, 0))
    if isinstance(model, Quotient):
        ps = model.P2.zeros.upto(L) if model.P2 is not None else []
        return _as_modulus_list(ps, L, max(-model.m, 0))
    return RootList()


def winding_number(model: PowerSeries, log_r, N=1024, max_N=1 << 16) -> int:
    """Zeros of a series inside ``|z| < r`` by the argument principle.

    The sample count is doubled until every step of ``arg f`` is below
    ``pi/4``; an uncertifiable circle raises UncertifiedRoots.
    """
    L = mpf(log_r)
    while N <= max_N:
        th = 2 * np.pi * np.arange(N) / N
        cv = _series_circle(model, L, th)
        if np.any(np.isneginf(cv.offsets)) or not np.isfinite(cv.error_bound) or cv.error_bound > 0.1:
            raise UncertifiedRoots(f"series vanishes (numerically) on |z| = exp({mpmath.nstr(L, 8)})")
        steps = np.diff(np.concatenate([cv.args, cv.args[:1]]))
        steps = (steps + np.pi) % (2 * np.pi) - np.pi
        if np.max(np.abs(steps)) < np.pi / 4:
            return int(round(float(np.sum(steps)) / (2 * np.pi)))
        N *= 2
    raise UncertifiedRoots("argument principle did not resolve within the sample budget")


def _series_zeros(model: PowerSeries, L: mpf, rel_width=mpf("1e-6"), log_r_min=mpf(-30)) -> RootList:
    """Annulus bisection on winding numbers, returning cluster moduli."""
    out = RootList()
    c0 = model.coeffs[0]
    m0 = 0
    while m0 <= model.K and model.coeffs[m0] == 0:
        m0 += 1
    if m0 > model.K:
        raise InvalidInput("the zero series has no discrete zero set")
    if m0:
        out.append((mpf(0), m0))
    lo = max(log_r_min, L - 60) if c0 == 0 else log_r_min

    def count(x):
        return winding_number(model, x) - m0

    try:
        total = count(L)
        base = count(lo)
    except UncertifiedRoots:
        out.complete = False
        return out
    if base > 0:
        out.complete = False
    stack = [(lo, L, base, total)]
    while stack:
        a, b, ca, cb = stack.pop()
        if cb == ca:
            continue
        if b - a < rel_width:
            out.append((mpmath.exp((a + b) / 2), cb - ca))
            continue
        cm = None
        for frac in ("0.5", "0.3", "0.7"):
            mid = a + (b - a) * mpf(frac)
            try:
                cm = count(mid)
                break
            except UncertifiedRoots:
                continue
        if cm is None:
            # the end circles are certified, so the annulus count stands
            out.append((mpmath.exp((a + b) / 2), cb - ca))
            continue
        stack.append((mid, b, cm, cb))
        stack.append((a, mid, ca, cm))
    head = [e for e in out if e[0] == 0]
    rest = sorted(e for e in out if e[0] != 0)
    res = RootList(head + rest)
    res.complete = out.complete
    return res
