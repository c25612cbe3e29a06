"""Growth scales phi(r) and s(r), growth parameters and admissibility checks.

A ``PhiScale`` measures growth (``rho_phi(T) = limsup log T(r) / log phi(r)``),
an ``SScale`` is the comparison radius ``s(r)`` with ``r < s(r) <= r**2``.
All scale callables take and return ``mpf`` so that radii far beyond the
float range can be used; builtin scales additionally carry a numpy version
for bulk float sampling.
"""

from __future__ import annotations

import csv
import math
import warnings
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import mpmath
import numpy as np
from mpmath import mpf

from .errors import (
    CapabilityError,
    ConstructionInapplicable,
    DivisionSingularity,
    InadmissibleScale,
    InsufficientGrid,
    InvalidInput,
    InvalidParameter,
    ParameterRangeWarning,
)
from .numeric import decades_spanned, limit_if_exists, tail_half

MIN_GRID_POINTS = 50
MIN_GRID_DECADES = 10
LIMIT_SPREAD = 1e-3
# tail max may grow by at most this factor over the head max to count as bounded
BOUNDED_GROWTH_FACTOR = 4


@dataclass(frozen=True)
class PhiScale:
    """A growth scale ``phi`` on ``(R0, inf)``.

    ``of_log`` optionally evaluates ``phi(exp(log_r))`` without forming ``r``.
    ``np_func`` is an optional float64 vectorised version used by sampling
    checks.  ``breakpoints`` is set for tabulated and polygonal scales, and
    ``valid_upto`` (a radius) marks a partial scale.
    """

    name: str
    func: Callable
    R0: mpf
    deriv: Optional[Callable] = None
    deriv2: Optional[Callable] = None
    inverse: Optional[Callable] = None
    log_inverse: Optional[Callable] = None
    claims_subadditive: bool = False
    claims_concave: bool = False
    claims_differentiable: bool = False
    of_log: Optional[Callable] = None
    np_func: Optional[Callable] = None
    kind: str = "custom"
    param: Optional[float] = None
    warning: Optional[str] = None
    breakpoints: Optional[tuple] = None
    valid_upto: Optional[mpf] = None

    def __call__(self, r):
        return self.func(mpf(r))

    def at_log(self, log_r):
        if self.of_log is not None:
            return self.of_log(mpf(log_r))
        return self.func(mpmath.exp(mpf(log_r)))

    def log_phi(self, log_r):
        return mpmath.log(self.at_log(log_r))

    def log_inv(self, y):
        """``log(phi^-1(y))``, avoiding the overflow-prone round trip when possible."""
        if self.log_inverse is not None:
            return self.log_inverse(mpf(y))
        if self.inverse is None:
            raise CapabilityError(f"scale {self.name} has no inverse", skipped=["inverse"])
        return mpmath.log(self.inverse(mpf(y)))


@dataclass(frozen=True)
class SScale:
    """Comparison radius function ``s(r)``."""

    name: str
    func: Callable
    R0: mpf
    deriv: Optional[Callable] = None
    claims_convex: bool = False
    claims_differentiable: bool = False
    np_func: Optional[Callable] = None
    kind: str = "custom"
    param: Optional[float] = None

    def __call__(self, r):
        return self.func(mpf(r))


@dataclass
class GrowthParams:
    alpha: float
    beta: float
    gamma: float
    zeta: Optional[float] = None
    kappa: Optional[float] = None
    raw: dict = field(default_factory=dict)
    tail_diagnostics: dict = field(default_factory=dict)
    limits: dict = field(default_factory=dict)

    def as_row(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
            "zeta": self.zeta,
            "kappa": self.kappa,
        }


# ---------------------------------------------------------------------------
# builtin scales
# ---------------------------------------------------------------------------

def _lambert_start(beta: float) -> mpf:
    """Smallest x with exp(beta*x) >= x for all larger x (x >= 1)."""
    if beta >= 1 / math.e:
        return mpf(1)
    return -mpmath.lambertw(-mpf(beta), -1).real / beta


def make_builtin_phi(kind: str, param: float) -> PhiScale:
    """Closed-form test scales.

    ``log_power`` is ``log(r)**a``, ``exp_log_power`` is ``exp(log(r)**b)``
    and ``power`` is ``r**b``.  The domain start is chosen so that
    ``log r <= phi(r) <= r`` holds and phi is concave with a non-negative
    tangent intercept from there on, which makes the sampled subadditivity
    check exact for the builtins.
    """
    if param is None or not param > 0:
        raise InvalidParameter(f"{kind} scale needs a positive parameter, got {param!r}")
    p = mpf(param)
    warning = None

    if kind == "log_power":
        if not (1 < param <= 2):
            warning = f"log_power exponent {param} outside (1, 2]"

        def of_log(L):
            return L ** p

        def func(r):
            return mpmath.log(r) ** p

        def deriv(r):
            L = mpmath.log(r)
            return p * L ** (p - 1) / r

        def deriv2(r):
            L = mpmath.log(r)
            return p * L ** (p - 2) * (p - 1 - L) / r ** 2

        def inverse(y):
            return mpmath.exp(mpf(y) ** (1 / p))

        def log_inverse(y):
            return y ** (1 / p)

        def np_func(r):
            return np.log(r) ** param

        R0 = mpmath.exp(max(p, mpf(1)))
        name = "log r" if param == 1 else f"log(r)^{param:g}"

    elif kind == "power":
        if not (0 < param <= 1):
            warning = f"power exponent {param} outside (0, 1]"

        def of_log(L):
            return mpmath.exp(p * L)

        def func(r):
            return r ** p

        def deriv(r):
            return p * r ** (p - 1)

        def deriv2(r):
            return p * (p - 1) * r ** (p - 2)

        def inverse(y):
            return mpf(y) ** (1 / p)

        def log_inverse(y):
            return mpmath.log(y) / p

        def np_func(r):
            return r ** param

        R0 = mpmath.exp(max(_lambert_start(param), mpf(1)))
        name = "r" if param == 1 else f"r^{param:g}"

    elif kind == "exp_log_power":
        if not (0 < param <= 1):
            warning = f"exp_log_power exponent {param} outside (0, 1]"

        def of_log(L):
            return mpmath.exp(L ** p)

        def func(r):
            return mpmath.exp(mpmath.log(r) ** p)

        def deriv(r):
            L = mpmath.log(r)
            return mpmath.exp(L ** p) * p * L ** (p - 1) / r

        def deriv2(r):
            L = mpmath.log(r)
            phi = mpmath.exp(L ** p)
            return phi * p * L ** (p - 2) / r ** 2 * (p * L ** p + p - 1 - L)

        def inverse(y):
            return mpmath.exp(mpmath.log(mpf(y)) ** (1 / p))

        def log_inverse(y):
            return mpmath.log(y) ** (1 / p)

        def np_func(r):
            return np.exp(np.log(r) ** param)

        R0 = mpmath.exp(mpmath.exp(max(_lambert_start(param), mpf(0))))
        R0 = max(R0, mpmath.e)
        name = f"exp(log(r)^{param:g})"

    else:
        raise InvalidParameter(f"unknown phi kind {kind!r}")

    if warning:
        warnings.warn(warning, ParameterRangeWarning, stacklevel=2)
    return PhiScale(
        name=name,
        func=func,
        R0=mpf(R0),
        deriv=deriv,
        deriv2=deriv2,
        inverse=inverse,
        log_inverse=log_inverse,
        claims_subadditive=True,
        claims_concave=True,
        claims_differentiable=True,
        of_log=of_log,
        np_func=np_func,
        kind=kind,
        param=float(param),
        warning=warning,
    )


def make_builtin_s(kind: str, param: Optional[float] = None) -> SScale:
    """Comparison radii: ``linear`` (c*r), ``power`` (r**eta), ``r_log_r``,
    ``exp`` (e**r, fails the doubling test) and ``near_identity``
    (r + r**-k, violates liminf s/r > 1)."""
    if kind == "linear":
        c = mpf(2 if param is None else param)
        if c <= 1:
            raise InvalidParameter("linear s(r) = c r needs c > 1")
        return SScale(f"{param or 2:g}r", lambda r: c * r, mpf(1) if c <= 1 else mpf(c),
                      deriv=lambda r: c, claims_convex=True, claims_differentiable=True,
                      np_func=lambda r: float(c) * r, kind=kind, param=float(c))
    if kind == "power":
        eta = mpf(2 if param is None else param)
        if not (1 < eta <= 2):
            raise InvalidParameter("power s(r) = r**eta needs eta in (1, 2]")
        e = float(eta)
        name = "r^2" if e == 2 else f"r^{e:g}"
        return SScale(name, lambda r: r ** eta, mpf(2), deriv=lambda r: eta * r ** (eta - 1),
                      claims_convex=True, claims_differentiable=True,
                      np_func=lambda r: r ** e, kind=kind, param=e)
    if kind == "r_log_r":
        return SScale("r log r", lambda r: r * mpmath.log(r), mpf(3),
                      deriv=lambda r: mpmath.log(r) + 1, claims_convex=True,
                      claims_differentiable=True, np_func=lambda r: r * np.log(r), kind=kind)
    if kind == "exp":
        return SScale("e^r", mpmath.exp, mpf(1), deriv=mpmath.exp, claims_convex=True,
                      claims_differentiable=True, np_func=np.exp, kind=kind)
    if kind == "near_identity":
        k = mpf(1 if param is None else param)
        return SScale(f"r + r^-{float(k):g}", lambda r: r + r ** (-k), mpf(2),
                      deriv=lambda r: 1 - k * r ** (-k - 1), claims_convex=True,
                      claims_differentiable=True, np_func=lambda r: r + r ** (-float(k)),
                      kind=kind, param=float(k))
    raise InvalidParameter(f"unknown s kind {kind!r}")


def tabulated_phi(rows: Sequence[dict], name: str = "table") -> PhiScale:
    """Piecewise-linear scale from breakpoint rows ``{r, phi_r[, dphi, d2phi]}``."""
    pts = sorted((mpf(row["r"]), mpf(row["phi_r"])) for row in rows)
    if len(pts) < 2:
        raise InvalidInput("a tabulated scale needs at least two rows")
    rs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    if any(b < a for a, b in zip(ys, ys[1:])):
        raise InvalidInput("tabulated phi must be non-decreasing")
    has_d = all(row.get("dphi") not in (None, "") for row in rows)
    has_d2 = all(row.get("d2phi") not in (None, "") for row in rows)
    dmap = {mpf(row["r"]): mpf(row["dphi"]) for row in rows} if has_d else None
    d2map = {mpf(row["r"]): mpf(row["d2phi"]) for row in rows} if has_d2 else None

    def interp(xs, vs, x):
        i = min(max(bisect_right(xs, x) - 1, 0), len(xs) - 2)
        x0, x1 = xs[i], xs[i + 1]
        return vs[i] + (vs[i + 1] - vs[i]) * (x - x0) / (x1 - x0)

    func = lambda r: interp(rs, ys, mpf(r))
    deriv = (lambda r: interp(rs, [dmap[x] for x in rs], mpf(r))) if dmap else None
    deriv2 = (lambda r: interp(rs, [d2map[x] for x in rs], mpf(r))) if d2map else None
    strictly = all(b > a for a, b in zip(ys, ys[1:]))
    inverse = (lambda y: interp(ys, rs, mpf(y))) if strictly else None
    fr, fy = np.array([float(x) for x in rs]), np.array([float(y) for y in ys])
    return PhiScale(
        name=name, func=func, R0=rs[0], deriv=deriv, deriv2=deriv2, inverse=inverse,
        claims_differentiable=dmap is not None,
        np_func=lambda r: np.interp(r, fr, fy),
        kind="table", breakpoints=tuple(pts), valid_upto=rs[-1],
    )


def load_phi_csv(path, name: Optional[str] = None) -> PhiScale:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return tabulated_phi(rows, name=name or str(path))


def make_polygonal_adversary(s: SScale, r1, log_r_cap=mpf("1e100")) -> PhiScale:
    """Piecewise-linear scale with ``alpha_{phi,s} = 0``.

    The path alternates between the points ``(r_n, log r_n)`` on ``y = log x``
    and ``(s(r_n), s(r_n))`` on ``y = x``, with ``log r_{n+1} = s(r_n) + 1``.
    Breakpoints stop once ``log r_{n+1}`` would exceed ``log_r_cap``; the
    result is then only valid up to the last ``s(r_n)`` (``valid_upto``).
    """
    r = mpf(r1)
    if r <= s.R0:
        raise InvalidParameter("r1 must exceed the domain start of s")
    pts = []
    while True:
        sr = s(r)
        if not sr > r:
            raise InadmissibleScale(f"s(r) <= r at r = {r}")
        pts.append((r, mpmath.log(r)))
        pts.append((sr, sr))
        next_log = sr + 1
        if next_log > log_r_cap:
            break
        r = mpmath.exp(next_log)
    rs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    valid_upto = rs[-1]
    partial = f"breakpoints stop at log r_(n+1) > {mpmath.nstr(log_r_cap, 5)}; valid up to s(r_{len(pts)//2})"

    def func(x):
        x = mpf(x)
        if x < rs[0] or x > valid_upto:
            raise InvalidInput("radius outside the constructed range of the polygonal scale")
        i = min(max(bisect_right(rs, x) - 1, 0), len(rs) - 2)
        return ys[i] + (ys[i + 1] - ys[i]) * (x - rs[i]) / (rs[i + 1] - rs[i])

    def inverse(y):
        y = mpf(y)
        i = min(max(bisect_right(ys, y) - 1, 0), len(ys) - 2)
        return rs[i] + (rs[i + 1] - rs[i]) * (y - ys[i]) / (ys[i + 1] - ys[i])

    return PhiScale(
        name=f"polygonal[{s.name}]", func=func, R0=rs[0], inverse=inverse,
        claims_subadditive=False, kind="polygonal", breakpoints=tuple(pts),
        valid_upto=valid_upto, warning=partial,
    )


# ---------------------------------------------------------------------------
# growth parameters
# ---------------------------------------------------------------------------

def param_ratios(phi: PhiScale, s: SScale, log_radii: Sequence) -> dict:
    """Ratio sequences behind alpha, beta, gamma, zeta and kappa.

    No grid-size preconditions: usable on a handful of special radii such
    as the breakpoints of the polygonal adversary.
    """
    out = {"alpha": [], "beta": [], "gamma": [], "zeta": [], "kappa": [], "s_over_r": []}
    for L in log_radii:
        L = mpf(L)
        r = mpmath.exp(L)
        sr = s(r)
        log_phi_r = phi.log_phi(L)
        out["s_over_r"].append(sr / r)
        out["alpha"].append(log_phi_r / mpmath.log(phi(sr)))
        out["beta"].append(mpmath.log(L) / log_phi_r)
        ratio = sr / r
        out["gamma"].append(mpmath.log(mpmath.log(ratio)) / log_phi_r if ratio > 1 else mpf("-inf"))
        if phi.valid_upto is None or 2 * L <= mpmath.log(phi.valid_upto):
            out["zeta"].append(log_phi_r / phi.log_phi(2 * L))
        out["kappa"].append(L / log_phi_r)
    return out


def _check_grid(grid, R0):
    if len(grid) < MIN_GRID_POINTS:
        raise InsufficientGrid(f"grid has {len(grid)} points, need >= {MIN_GRID_POINTS}")
    if decades_spanned(grid, R0) < MIN_GRID_DECADES:
        raise InsufficientGrid(f"grid spans fewer than {MIN_GRID_DECADES} decades beyond R0")
    if mpmath.exp(mpf(grid[0])) < R0 * (1 - mpf(10) ** -20):
        raise InsufficientGrid("grid starts below the domain start R0")


def growth_params(phi: PhiScale, s: SScale, grid: Sequence, limit_spread=LIMIT_SPREAD) -> GrowthParams:
    """Finite-radius surrogates of alpha_{phi,s}, beta_phi, gamma_{phi,s}.

    liminf/limsup are replaced by the running min/max over the tail half of
    the grid; raw values are kept in ``raw`` and the clamped values in
    ``[0, 1]`` are returned.  zeta and kappa are reported only when their
    ratio sequences settle (spread below ``limit_spread``).
    """
    R0 = max(phi.R0, s.R0)
    _check_grid(grid, R0)
    tail = tail_half(list(grid))
    ratios = param_ratios(phi, s, tail)
    for L, q in zip(tail, ratios["s_over_r"]):
        if not q > 1:
            raise InadmissibleScale(f"s(r)/r <= 1 at log r = {mpmath.nstr(L, 8)}")
    raw_alpha = min(ratios["alpha"])
    raw_beta = max(ratios["beta"])
    raw_gamma = min(ratios["gamma"])

    def clamp(x):
        return float(min(max(x, mpf(0)), mpf(1)))

    zeta = limit_if_exists(ratios["zeta"], limit_spread) if ratios["zeta"] else None
    kappa = limit_if_exists(ratios["kappa"], limit_spread)
    limits = {
        "zeta": zeta is not None,
        "beta": limit_if_exists(ratios["beta"], limit_spread) is not None,
        "kappa": kappa is not None,
    }
    if phi.deriv is not None:
        elast = [phi.deriv(mpmath.exp(L)) * mpmath.exp(L) / phi.at_log(L) for L in tail]
        limits["elasticity"] = limit_if_exists(elast, limit_spread) is not None
        ratios["elasticity"] = elast
    return GrowthParams(
        alpha=clamp(raw_alpha),
        beta=clamp(raw_beta),
        gamma=clamp(raw_gamma),
        zeta=None if zeta is None else float(zeta),
        kappa=None if kappa is None else float(kappa),
        raw={"alpha": float(raw_alpha), "beta": float(raw_beta), "gamma": float(raw_gamma)},
        tail_diagnostics={k: [float(v) for v in vals] for k, vals in ratios.items()},
        limits=limits,
    )


# ---------------------------------------------------------------------------
# admissibility
# ---------------------------------------------------------------------------

@dataclass
class Check:
    name: str
    holds: Optional[bool]
    value: Optional[float] = None
    witness_log_r: Optional[float] = None
    note: str = ""


@dataclass
class AdmissibilityReport:
    checks: dict = field(default_factory=dict)
    skipped: list = field(default_factory=list)

    def add(self, check: Check):
        self.checks[check.name] = check

    def holds(self, name: str) -> Optional[bool]:
        c = self.checks.get(name)
        return None if c is None else c.holds

    def as_rows(self):
        return [
            {"check": c.name, "holds": c.holds, "value": c.value,
             "witness_log_r": c.witness_log_r, "note": c.note}
            for c in self.checks.values()
        ]


def _bounded(seq) -> tuple[bool, mpf]:
    """Sampled boundedness of a positive sequence (tail vs head maximum)."""
    head = seq[: len(seq) // 2] or seq
    tail = tail_half(seq)
    tmax = max(tail)
    if mpmath.isinf(tmax) or mpmath.isnan(tmax):
        return False, tmax
    return bool(tmax <= BOUNDED_GROWTH_FACTOR * max(max(head), mpf(1))), tmax


def sample_subadditivity(phi: PhiScale, log_r_lo, log_r_hi, pairs_per_decade=10_000,
                         max_decades=30, seed=0, rel_tol=1e-12):
    """Random pairs (a, b) log-uniform in the range; returns (holds, witness).

    Uses the float path when the scale has one; otherwise evaluates in mpf
    on a reduced sample.
    """
    rng = np.random.default_rng(seed)
    lo = float(log_r_lo)
    hi = float(min(mpf(log_r_hi), mpf(700)))
    if hi <= lo:
        hi = lo + 1.0
    decades = max(1, min(max_decades, int(math.ceil((hi - lo) / math.log(10)))))
    n = pairs_per_decade * decades
    # doubles overflow past log r ~ 709; such ranges go through mpf
    use_float = phi.np_func is not None and hi < 700
    if not use_float:
        n = min(n, 2000)
    la = rng.uniform(lo, hi, n)
    lb = rng.uniform(lo, hi, n)
    if use_float:
        a, b = np.exp(la), np.exp(lb)
        with np.errstate(over="ignore", invalid="ignore"):
            lhs = phi.np_func(a + b)
            rhs = phi.np_func(a) + phi.np_func(b)
        ok = np.isfinite(lhs) & np.isfinite(rhs)
        bad = ok & (lhs > rhs * (1 + rel_tol))
        if bad.any():
            i = int(np.argmax(bad))
            return False, (float(la[i]), float(lb[i]))
        return True, None
    for x, y in zip(la, lb):
        a, b = mpmath.exp(mpf(x)), mpmath.exp(mpf(y))
        if phi(a + b) > (phi(a) + phi(b)) * (1 + mpf(rel_tol)):
            return False, (float(x), float(y))
    return True, None


def check_admissibility(phi: PhiScale, s: SScale, grid: Sequence, lam=None,
                        young_a=2, subadditivity_pairs=10_000, seed=0,
                        strict=True) -> AdmissibilityReport:
    """Sampled versions of every standing hypothesis on (phi, s).

    ``lam`` is the phi-exponent of convergence used by the ``limsup < 1/lam``
    and ``liminf >= 1/lam`` alternatives; ``lam == 0`` is read as
    ``1/lam = inf``.  With ``strict`` a CapabilityError is raised when
    derivative-based checks had to be skipped (the partial report rides on
    the exception).
    """
    rep = AdmissibilityReport()
    grid = [mpf(L) for L in grid]
    R0 = max(phi.R0, s.R0)
    grid = [L for L in grid if mpmath.exp(L) >= R0 * (1 - mpf(10) ** -20)]
    if not grid:
        raise InsufficientGrid("no grid point beyond the domain start")
    rel = mpf(10) ** -20

    # log r <= phi(r) <= r
    witness = None
    for L in grid:
        val = phi.at_log(L)
        if val < L * (1 - rel) or mpmath.log(val) > L * (1 + rel):
            witness = L
            break
    rep.add(Check("restriction", witness is None, witness_log_r=None if witness is None else float(witness)))

    # r < s(r) <= r^2
    witness = None
    ratios = []
    for L in grid:
        r = mpmath.exp(L)
        sr = s(r)
        ratios.append(sr / r)
        if not (sr > r and sr <= r * r * (1 + rel)):
            witness = L
            break
    rep.add(Check("s_bounds", witness is None, witness_log_r=None if witness is None else float(witness)))

    tail_min = min(tail_half(ratios)) if ratios else mpf(0)
    rep.add(Check("liminf_s_over_r_gt_1", bool(tail_min > 1 + mpf("1e-6")), float(tail_min)))
    s_over_r_tail = float(max(tail_half(ratios))) if ratios else None
    rep.add(Check("s_over_r_tail", None, s_over_r_tail, note="max of s(r)/r over the tail half"))

    ok, wit = sample_subadditivity(phi, grid[0], grid[-1], subadditivity_pairs, seed=seed)
    rep.add(Check("subadditive", ok, note="" if ok else f"violating pair log(a), log(b) = {wit}"))

    # s(r) <= 2 s(r - 1)
    witness = None
    for L in grid:
        r = mpmath.exp(L)
        if r - 1 < s.R0:
            continue
        if s(r) > 2 * s(r - 1) * (1 + rel):
            witness = L
            break
    rep.add(Check("s_doubling", witness is None, witness_log_r=None if witness is None else float(witness)))

    # s(ar)/s(r) bounded
    q = [s(young_a * mpmath.exp(L)) / s(mpmath.exp(L)) for L in grid]
    ok, tmax = _bounded(q)
    rep.add(Check("young_s_ar_over_s", ok, float(tmax)))

    skipped = []
    if s.deriv is not None:
        young = []
        elast = []
        for L in grid:
            r = mpmath.exp(L)
            sr, ds = s(r), s.deriv(r)
            young.append(r * r * ds / (sr * sr))
            elast.append(r * ds / sr)
        ok, tmax = _bounded(young)
        rep.add(Check("young_r2_ds_over_s2", ok, float(tmax)))
        ok, tmax = _bounded(elast)
        rep.add(Check("young_r_ds_over_s", ok, float(tmax)))
    else:
        skipped += ["young_r2_ds_over_s2", "young_r_ds_over_s"]

    if phi.deriv is not None and s.deriv is not None:
        vals = []
        for L in grid:
            r = mpmath.exp(L)
            sr = s(r)
            vals.append(phi.deriv(sr) * s.deriv(r) * r / phi(sr))
        tail = tail_half(vals)
        sup, inf = max(tail), min(tail)
        rep.add(Check("chain_elasticity_limsup", None, float(sup)))
        rep.add(Check("chain_elasticity_liminf", None, float(inf)))
        if lam is not None:
            lam = mpf(lam)
            inv = mpf("inf") if lam == 0 else 1 / lam
            rep.add(Check("limsup_lt_inv_lambda", bool(sup < inv), float(sup)))
            rep.add(Check("liminf_ge_inv_lambda", bool(inf >= inv), float(inf)))
    else:
        skipped += ["chain_elasticity", "limsup_lt_inv_lambda", "liminf_ge_inv_lambda"]

    rep.skipped = skipped
    if skipped and strict:
        raise CapabilityError(f"derivative-based checks skipped: {', '.join(skipped)}",
                              skipped=skipped, partial=rep)
    return rep


# ---------------------------------------------------------------------------
# auxiliary step functions u, v, w
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepTriple:
    """Step functions built from ``h(r) = s(r)/r``.

    ``w(r) = s(n)`` and ``u(r) = n log h(n)`` on ``[n, n+1)``;
    ``v(x) = h(m)/log h(m) * x`` on ``[m log h(m), (m+1) log h(m+1))``.
    Arrays are float64: index ``i`` corresponds to ``n = n0 + i``.
    """

    n0: int
    n: np.ndarray
    w: np.ndarray
    u: np.ndarray
    v_starts: np.ndarray
    v_slopes: np.ndarray
    valid_from: float
    r_max: float

    def _index(self, r):
        idx = np.floor(np.asarray(r, dtype=float)).astype(np.int64) - self.n0
        if np.any(idx < 0) or np.any(idx >= len(self.n)):
            raise InvalidInput("radius outside the constructed step range")
        return idx

    def eval_u(self, r):
        return self.u[self._index(r)]

    def eval_w(self, r):
        return self.w[self._index(r)]

    def eval_v(self, x):
        x = np.asarray(x, dtype=float)
        j = np.searchsorted(self.v_starts, x, side="right") - 1
        if np.any(j < 0):
            raise InvalidInput("argument below the first v breakpoint")
        return self.v_slopes[j] * x

    @property
    def u_breakpoints(self):
        return list(zip(self.n.tolist(), self.u.tolist()))

    @property
    def v_breakpoints(self):
        return list(zip(self.v_starts.tolist(), self.v_slopes.tolist()))


def _s_array(s: SScale, x: np.ndarray) -> np.ndarray:
    if s.np_func is not None:
        return np.asarray(s.np_func(x), dtype=float)
    return np.array([float(s(mpf(float(t)))) for t in x])


def auxiliary_uvw(s: SScale, R0=None, r_max=1e5) -> StepTriple:
    """Build the step triple on integer points ``[n0, r_max + 1]``.

    ``valid_from`` is the first radius from which all four properties are
    expected (``log h >= 2`` and ``r`` beyond the first v breakpoint).
    Raises ConstructionInapplicable when ``s(r)/r`` does not grow; the
    bounded-``s/r`` branch needs no such functions.
    """
    start = int(math.ceil(float(max(mpf(R0) if R0 is not None else s.R0, s.R0, mpf(3)))))
    n = np.arange(start, int(math.floor(r_max)) + 3, dtype=np.int64)
    nf = n.astype(float)
    sv = _s_array(s, nf)
    h = sv / nf
    tail = h[len(h) // 2:]
    # sampled "increasing and unbounded": non-decreasing tail that still grows
    if np.any(np.diff(tail) < 0) or not tail[-1] > 1.01 * tail[0] or not h[-1] > math.e:
        raise ConstructionInapplicable("s(r)/r is not increasing and unbounded on the tail")
    good = np.nonzero(np.log(np.maximum(h, 1.0)) >= 2.0)[0]
    if len(good) == 0:
        raise ConstructionInapplicable("log h(n) never reaches 2 below r_max")
    first = int(good[0])
    n, nf, sv, h = n[first:], nf[first:], sv[first:], h[first:]
    logh = np.log(h)
    u = nf * logh
    v_starts = nf * logh
    v_slopes = h / logh
    triple = StepTriple(
        n0=int(n[0]), n=n, w=sv, u=u, v_starts=v_starts, v_slopes=v_slopes,
        valid_from=float(max(v_starts[0], nf[0])), r_max=float(r_max),
    )
    # v(u(n)) = w(n) at integer points
    vu = triple.eval_v(u[:-1])
    if not np.allclose(vu, sv[:-1], rtol=1e-12, atol=0):
        raise ConstructionInapplicable("v(u(n)) != w(n): breakpoints are not increasing")
    return triple


def check_uvw_properties(triple: StepTriple, s: SScale, radii) -> dict:
    """Evaluate properties (1)-(4) at each radius; returns boolean arrays.

    Property (2) (``u/r, v/r -> inf``) is checked pointwise against the
    divergent minorant ``log h(r) / 4``.
    """
    r = np.asarray(radii, dtype=float)
    sr = _s_array(s, r)
    h = sr / r
    u = triple.eval_u(r)
    v = triple.eval_v(r)
    vu = triple.eval_v(u)
    eps = 1e-12
    p1 = (r < u) & (u < sr) & (r < v) & (v < sr)
    minorant = np.log(h) / 4
    p2 = (u / r >= minorant) & (v / r >= minorant)
    p3 = (sr / 2 <= vu * (1 + eps)) & (vu <= sr * (1 + eps))
    lhs = 2 * np.log(u / r)
    mid = np.log(sr / r)
    p4 = (lhs <= mid * (1 + eps)) & (mid <= 2 * u / r * (1 + eps))
    return {"p1": p1, "p2": p2, "p3": p3, "p4": p4}


# ---------------------------------------------------------------------------
# psi_mu
# ---------------------------------------------------------------------------

def psi_mu(phi: PhiScale, mu, t):
    """``(mu+1) phi'/phi - 1/t - phi''/phi'`` at ``t``."""
    if phi.deriv is None or phi.deriv2 is None:
        raise CapabilityError("psi_mu needs both derivatives of phi", skipped=["psi_mu"])
    t = mpf(t)
    d1 = phi.deriv(t)
    if d1 == 0:
        raise DivisionSingularity(f"phi'(t) = 0 at t = {t}")
    return (mpf(mu) + 1) * d1 / phi(t) - 1 / t - phi.deriv2(t) / d1


@dataclass
class PsiBounds:
    ok: bool
    C1: float
    C2: float
    tail_log_slope: float
    reason: str = ""


def check_psi_bounds(phi: PhiScale, mu, tau, grid, slope_tol=0.05) -> PsiBounds:
    """Empirical (C1, C2) for ``C1 phi^-tau <= psi_mu(t) t <= C2 phi^-tau``.

    Fails when some product is non-positive or when the products drift
    (log-slope against log phi beyond ``slope_tol``), i.e. when no positive
    constant can bound them from below or above.
    """
    vals, xs = [], []
    for L in grid:
        t = mpmath.exp(mpf(L))
        ph = phi.at_log(L)
        vals.append(psi_mu(phi, mu, t) * t * ph ** mpf(tau))
        xs.append(mpmath.log(ph))
    c1, c2 = min(vals), max(vals)
    if c1 <= 0:
        return PsiBounds(False, float(c1), float(c2), float("nan"), "non-positive product")
    tx = [float(x) for x in tail_half(xs)]
    ty = [float(mpmath.log(v)) for v in tail_half(vals)]
    slope = float(np.polyfit(tx, ty, 1)[0]) if len(tx) > 1 and max(tx) > min(tx) else 0.0
    if abs(slope) > slope_tol:
        return PsiBounds(False, float(c1), float(c2), slope, "products drift to 0 or infinity")
    return PsiBounds(True, float(c1), float(c2), slope)
