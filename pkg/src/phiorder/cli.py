"""Command-line experiment runner.

``phiorder run --config exp.yaml`` executes every run of a config file;
``phiorder <op> --config exp.yaml`` executes only the runs of one op;
``phiorder repro <suite>`` runs a built-in reproduction suite.  Artifacts are
written with a temp-file rename, so a crashed run never leaves a partial
file behind, and their content depends only on the config.

Exit status is 0 iff every assertion run passed or is marked
``expect: fail``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import random
import sys
import tempfile
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

import mpmath
import numpy as np
from mpmath import mp, mpf

from . import config as C
from . import models as M
from . import nevanlinna as NV
from . import qdiff as Q
from . import scales as S
from .errors import ConfigError, PhiOrderError, PoleOnCircle
from .numeric import (fmt, geometric_grid, iterated_grid, linear_log_grid, log_geometric_grid)

SUITES = ("example-F", "example-G", "q-theta", "params-matrix", "bounds-suite")
JSON_DIGITS = 20


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def jsonable(x):
    """Convert numbers to ``<mantissa>e<exponent>`` text, recursively."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)) or x is None or isinstance(x, str):
        return bool(x) if isinstance(x, np.bool_) else x
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, mpmath.mpc):
        return {"re": fmt(x.real, JSON_DIGITS), "im": fmt(x.imag, JSON_DIGITS)}
    if isinstance(x, (float, np.floating, mpf)):
        return fmt(mpf(float(x)) if not isinstance(x, mpf) else x, JSON_DIGITS)
    return str(x)


def dump_json(payload) -> str:
    return json.dumps(jsonable(payload), indent=2, sort_keys=True) + "\n"


def dump_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, (str, int, bool)) or v is None else fmt(v, JSON_DIGITS)
                    for v in row])
    return buf.getvalue()


def atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix="." + path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def _number(v):
    """Config numbers: ints and fraction strings stay exact; ``[re, im]`` is complex."""
    if isinstance(v, bool):
        raise ConfigError(f"boolean {v!r} is not a number", path="<value>")
    if isinstance(v, int):
        return v
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return mpmath.mpc(_number(v[0]), _number(v[1]))
    if isinstance(v, str):
        try:
            return Fraction(v)
        except ValueError:
            try:
                return mpmath.mpmathify(v)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"cannot read number {v!r}", path="<value>") from exc
    return mpf(v)


class Context:
    """Resolves names in a config, caching built objects."""

    def __init__(self, cfg: C.ExperimentConfig):
        self.cfg = cfg
        self._phi, self._s, self._models, self._eq, self._sol = {}, {}, {}, {}, {}

    def phi(self, name) -> S.PhiScale:
        if name not in self._phi:
            spec = self.cfg.scales["phi"][name]
            kind = spec["kind"]
            if kind == "csv":
                self._phi[name] = S.load_phi_csv(C.resolve_path(self.cfg, spec["path"]), name=name)
            elif kind == "polygonal":
                self._phi[name] = S.make_polygonal_adversary(self.s(spec["s"]), mpf(spec.get("r1", 10)))
            else:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", S.ParameterRangeWarning)
                    self._phi[name] = S.make_builtin_phi(kind, spec["param"])
        return self._phi[name]

    def s(self, name) -> S.SScale:
        if name not in self._s:
            spec = self.cfg.scales["s"][name]
            self._s[name] = S.make_builtin_s(spec["kind"], spec.get("param"))
        return self._s[name]

    def model(self, spec):
        if isinstance(spec, str):
            if spec not in self._models:
                self._models[spec] = self.model(self.cfg.models[spec])
            return self._models[spec]
        kind = spec["kind"]
        if kind == "polynomial":
            return M.polynomial([_number(c) for c in spec["coeffs"]])
        if kind == "rational":
            return M.rational([_number(c) for c in spec["numer"]], [_number(c) for c in spec.get("denom", [1])])
        if kind == "series":
            return M.power_series([_number(c) for c in spec["coeffs"]], spec.get("errors"))
        if kind == "series_csv":
            return Q.read_coefficients_csv(C.resolve_path(self.cfg, spec["path"]))
        if kind == "example_F":
            return M.make_example_F(self.phi(spec["phi"]), mpf(spec["kappa"]))
        if kind == "example_G":
            return M.make_example_G(self.phi(spec["phi"]), mpf(spec["c"]))
        if kind == "product":
            return M.CanonicalProduct(M.ZeroSequence.from_entries(spec["zeros"]))
        if kind == "quotient":
            P1 = self.model(spec["P1"]) if spec.get("P1") is not None else None
            P2 = self.model(spec["P2"]) if spec.get("P2") is not None else None
            return M.Quotient(_number(spec.get("C", 1)), int(spec.get("m", 0)), P1, P2)
        if kind == "solution":
            return self.solution(spec["equation"]).model
        raise ConfigError(f"unknown model kind {kind!r}", path="models")

    def equation(self, name) -> Q.QDifferenceEquation:
        if name not in self._eq:
            spec = self.cfg.equations[name]
            coeffs = tuple(self.model(c) for c in spec["coeffs"])
            rhs = self.model(spec["rhs"]) if spec.get("rhs") is not None else None
            self._eq[name] = Q.QDifferenceEquation(_number(spec["q"]), coeffs, rhs, name)
        return self._eq[name]

    def solution(self, name) -> Q.SeriesSolution:
        if name not in self._sol:
            spec = self.cfg.equations[name]
            c0 = spec.get("c0")
            self._sol[name] = Q.solve_series(self.equation(name), int(spec.get("K", 200)),
                                             c0=None if c0 is None else _number(c0))
        return self._sol[name]


def build_grid(spec, default=None):
    spec = spec or default
    if spec is None:
        raise ConfigError("run needs a grid (none given and no default)", path="grid")
    kind = spec.get("kind", "linear_log")
    if kind == "linear_log":
        return linear_log_grid(spec["lo"], spec["hi"], int(spec["points"]))
    if kind == "iterated":
        return iterated_grid(spec["lo"], spec["hi"], int(spec["points"]))
    if kind == "log_geometric":
        return log_geometric_grid(spec["lo"], spec["hi"], int(spec["points"]))
    if kind == "geometric":
        return geometric_grid(_number(spec.get("R0", "2.718281828459045")), spec.get("ratio", 1.25),
                              int(spec.get("points", 200)))
    return tuple(mpf(v) for v in spec["values"])


def _param_grid(phi, s, top=1000, points=200):
    lo = float(mpmath.log(mpmath.log(max(phi.R0, s.R0, mpf(3))))) + 0.5
    return iterated_grid(max(lo, 1.0), top, points)


# ---------------------------------------------------------------------------
# ops: each returns (passed or None, {suffix: text}, summary dict)
# ---------------------------------------------------------------------------

def _within(value, expected, tol):
    return value is not None and abs(float(value) - float(expected)) <= float(tol)


def op_params(ctx, run, inputs, tol):
    phi, s = ctx.phi(inputs["phi"]), ctx.s(inputs["s"])
    grid = build_grid(run["grid"]) if run.get("grid") else _param_grid(phi, s)
    p = S.growth_params(phi, s, grid)
    row = p.as_row()
    text = dump_csv(["phi", "s", "alpha", "beta", "gamma", "zeta", "kappa"],
                    [[inputs["phi"], inputs["s"], row["alpha"], row["beta"], row["gamma"],
                      "" if row["zeta"] is None else row["zeta"], "" if row["kappa"] is None else row["kappa"]]])
    passed = None
    exp = run.get("expected")
    if exp:
        passed = all(_within(row[k], v, tol.get("abs", 0.05)) for k, v in exp.items())
    return passed, {"": text}, row


def op_admissible(ctx, run, inputs, tol):
    phi, s = ctx.phi(inputs["phi"]), ctx.s(inputs["s"])
    grid = build_grid(run.get("grid")) if run.get("grid") else _param_grid(phi, s, 600, 120)
    rep = S.check_admissibility(phi, s, grid, lam=inputs.get("lam"), seed=int(inputs.get("seed", 0)),
                                strict=False)
    rows = [[r["check"], r["holds"], r["value"] if r["value"] is not None else "",
             r["witness_log_r"] if r["witness_log_r"] is not None else "", r["note"]] for r in rep.as_rows()]
    text = dump_csv(["check", "holds", "value", "witness_log_r", "note"], rows)
    passed = all(c.holds is not False for c in rep.checks.values())
    return passed, {"": text}, {"failed": [c.name for c in rep.checks.values() if c.holds is False],
                                "skipped": rep.skipped}


def _quantity_series(model, grid, quantity, target):
    if quantity in ("n", "N"):
        vals = [NV.counting(model, L, target) for L in grid]
        return [v[0] if quantity == "n" else v[1] for v in vals]
    if quantity == "logM":
        return NV.max_modulus(model, grid)
    return [c.T for c in NV.characteristic(model, grid, tol=1e-8, max_points=1 << 14)]


def op_order(ctx, run, inputs, tol):
    model, phi = ctx.model(inputs["model"]), ctx.phi(inputs["phi"])
    grid = build_grid(run.get("grid"), ctx.cfg.grid)
    quantity = inputs.get("quantity", "T")
    X = _quantity_series(model, grid, quantity, inputs.get("target", "zeros"))
    est = NV.order_estimate(grid, X, phi, quantity)
    out = {"rho": est.rho, "residual_spread": est.residual_spread, "quantity": quantity,
           "low_confidence": est.low_confidence, "note": est.note, "fit_points": est.fit_points}
    passed = None
    if "rho" in (run.get("expected") or {}):
        passed = _within(est.rho, run["expected"]["rho"], tol.get("abs", est.tol()))
    return passed, {"": dump_json(out)}, {"rho": est.rho}


def op_exponent(ctx, run, inputs, tol):
    model, phi = ctx.model(inputs["model"]), ctx.phi(inputs["phi"])
    seq = NV._zero_sequence_of(model, inputs.get("target", "zeros"))
    if seq is None:
        raise PhiOrderError("exponent needs a product or quotient model with a zero sequence")
    ex = NV.phi_exponent(seq, phi, terms=int(inputs.get("terms", 2000)))
    out = {"lam": ex.lam, "lam_lo": ex.lam_lo, "lam_hi": ex.lam_hi, "method": ex.method,
           "order_of_n": None if ex.order_of_n is None else ex.order_of_n.rho}
    exp = run.get("expected") or {}
    passed = None
    if exp:
        passed = True
        if "lam" in exp:
            passed &= _within(ex.lam, exp["lam"], tol.get("abs", 0.05))
        if "lam_hi_below" in exp:
            passed &= ex.lam_hi < float(exp["lam_hi_below"])
    return passed, {"": dump_json(out)}, {"lam": ex.lam, "bracket": [ex.lam_lo, ex.lam_hi]}


def op_product_check(ctx, run, inputs, tol):
    P, phi, s = ctx.model(inputs["model"]), ctx.phi(inputs["phi"]), ctx.s(inputs["s"])
    grid = build_grid(run.get("grid"), ctx.cfg.grid)
    rep = NV.product_min_modulus_check(P, phi, s, mpf(inputs.get("eps", 0.5)), grid, lam=inputs.get("lam"))
    out = {"sup_ratio": rep.sup_ratio, "tail_slope": rep.tail_slope, "finite": rep.finite,
           "passed": rep.passed, "lam": rep.lam, "eps": rep.eps, "rejected_points": rep.rejected_points,
           "per_radius": rep.per_radius}
    return rep.passed, {"": dump_json(out)}, {"sup_ratio": rep.sup_ratio, "tail_slope": rep.tail_slope}


def op_solve(ctx, run, inputs, tol):
    sol = ctx.solution(inputs["equation"])
    fd, tmp = tempfile.mkstemp(suffix=".csv")
    os.close(fd)
    try:
        Q.write_coefficients_csv(sol, tmp)
        text = Path(tmp).read_text()
    finally:
        os.unlink(tmp)
    return None, {"": text}, {"K": sol.K, "prec": sol.prec, "resonance_indices": sol.resonance_indices}


def op_residual(ctx, run, inputs, tol):
    eq, sol = ctx.equation(inputs["equation"]), ctx.solution(inputs["equation"])
    radii = inputs.get("log_r", [0])
    vals = [Q.residual(eq, sol, L) for L in radii]
    worst = max(vals)
    log10 = worst / mpmath.log(10) if worst != M.NEG_INF else worst
    out = {"log_r": radii, "log_residual": vals, "max_log10_residual": log10}
    passed = None
    if "max_log10" in tol:
        passed = bool(log10 < float(tol["max_log10"]))
    return passed, {"": dump_json(out)}, {"max_log10_residual": float(log10)}


def op_verify(ctx, run, inputs, tol):
    eq, sol = ctx.equation(inputs["equation"]), ctx.solution(inputs["equation"])
    phi, s = ctx.phi(inputs["phi"]), ctx.s(inputs["s"])
    grid = build_grid(run.get("grid"), ctx.cfg.grid)
    rep = Q.verify_theorems(eq, sol, phi, s, grid, eps=float(inputs.get("eps", Q.DEFAULT_EPS)))
    passed = not rep.failures
    cor = rep.record("corollary_equality")
    gap = abs(cor.estimate - cor.bound_value)
    if "corollary_gap" in tol:
        passed = passed and gap <= float(tol["corollary_gap"])
    payload = json.loads(rep.to_json())
    payload["corollary_gap"] = gap
    return passed, {"": dump_json(payload), ".txt": rep.table() + "\n"}, \
        {"rho_f_hat": rep.rho_f_hat.rho, "corollary_gap": gap, "failures": [r.name for r in rep.failures]}


def lemma_a_trial(model, q, delta, log_r, lam_frac):
    """One comparison of m(r, f(qz)/f(z)) with its explicit bound; returns (m, bound, log_r, log_lam) or None if f(0) is 0 or a pole."""
    v0 = M.evaluate(model, mpf(-60), 0.0)
    if v0.pole or mpmath.isinf(v0.log_abs):
        return None
    qa = abs(mpmath.mpmathify(q))
    L = mpf(log_r)
    for _ in range(20):
        lo = mpmath.log(max(mpf(1), qa)) + L
        log_lam = lo + (2 * L - lo) * mpf(lam_frac)
        try:
            m = NV.log_q_difference(model, q, L, tol=1e-10).value
            n_f, N_f = NV.counting(model, log_lam, "poles")
            n_1f, _ = NV.counting(model, log_lam, "zeros")
            T_lam = NV.proximity(model, log_lam, tol=1e-10).value + N_f
            break
        except PoleOnCircle as exc:
            L = mpf(exc.suggested_log_r) if exc.suggested_log_r is not None else L * mpf("1.001")
    else:
        return None
    # f(0) for models vanishing nowhere at 0: log|f(0)| as limit of log|f(z)|
    log_f0 = v0.log_abs
    bound = NV.lemma_A_bound(n_f, n_1f, T_lam, log_f0, mpmath.exp(L), mpmath.exp(log_lam), q, delta)
    return m, bound, L, log_lam


def op_lemma_a(ctx, run, inputs, tol):
    names = inputs.get("models") or [inputs["model"]]
    models = [ctx.model(n) for n in names]
    qs = [_number(q) for q in inputs.get("q", [2, "1/2", [0, 1]])]
    qs = [mpf(q.numerator) / q.denominator if isinstance(q, Fraction) else q for q in qs]
    deltas = inputs.get("delta", [0.25, 0.5, 0.75])
    n = int(inputs.get("configurations", 200))
    rng = random.Random(int(inputs.get("seed", 0)))
    lo, hi = inputs.get("log_r_range", [0.1, 6.0])
    rows, ok = [], True
    k = 0
    attempts = 0
    while k < n and attempts < 5 * n:
        attempts += 1
        i = rng.randrange(len(models))
        q = rng.choice(qs)
        delta = rng.choice(deltas)
        # r must satisfy r^2 > |q| r for the lambda range to be non-empty
        lo_q = max(lo, float(mpmath.log(abs(mpmath.mpmathify(q)))) + 0.05)
        res = lemma_a_trial(models[i], q, delta, rng.uniform(lo_q, max(hi, lo_q + 1)), rng.uniform(0.05, 1.0))
        if res is None:
            continue
        m, bound, L, log_lam = res
        holds = bool(m <= bound)
        ok &= holds
        qtxt = fmt(q, 6) if not isinstance(q, mpmath.mpc) else f"{fmt(q.real, 6)}+{fmt(q.imag, 6)}i"
        rows.append([k, names[i], qtxt, delta, L, log_lam, m, bound, holds])
        k += 1
    text = dump_csv(["trial", "model", "q", "delta", "log_r", "log_lambda", "m", "bound", "holds"], rows)
    if k < n:
        ok = False
    return ok, {"": text}, {"trials": k, "violations": sum(1 for r in rows if not r[-1])}


def op_relations(ctx, run, inputs, tol):
    model, phi, s = ctx.model(inputs["model"]), ctx.phi(inputs["phi"]), ctx.s(inputs["s"])
    grid = build_grid(run.get("grid"), ctx.cfg.grid)
    rep = NV.guarded_relation_checks(model, phi, s, grid, chuang=bool(inputs.get("chuang", True)))
    return not rep.failures, {"": rep.to_json() + "\n"}, {"failures": [r.name for r in rep.failures]}


def op_uvw(ctx, run, inputs, tol):
    s = ctx.s(inputs["s"])
    triple = S.auxiliary_uvw(s, r_max=float(inputs.get("r_max", 1e5)))
    rng = np.random.default_rng(int(inputs.get("seed", 0)))
    lo = max(triple.valid_from, float(inputs.get("r_min", triple.valid_from)))
    radii = np.sort(rng.uniform(lo, triple.r_max - 2, int(inputs.get("samples", 1000))))
    props = S.check_uvw_properties(triple, s, radii)
    rows = [[k, int(v.sum()), len(v), float(v.mean())] for k, v in props.items()]
    passed = all(bool(v.all()) for v in props.values())
    return passed, {"": dump_csv(["property", "holds", "samples", "fraction"], rows)}, \
        {k: float(v.mean()) for k, v in props.items()}


def op_psi(ctx, run, inputs, tol):
    phi = ctx.phi(inputs["phi"])
    grid = build_grid(run.get("grid"), ctx.cfg.grid)
    pb = S.check_psi_bounds(phi, mpf(inputs.get("mu", 1)), float(inputs.get("tau", 1)), grid)
    out = {"ok": pb.ok, "C1": pb.C1, "C2": pb.C2, "tail_log_slope": pb.tail_log_slope, "reason": pb.reason}
    return pb.ok, {"": dump_json(out)}, {"ok": pb.ok}


OP_TABLE = {
    "params": op_params, "admissible": op_admissible, "order": op_order, "exponent": op_exponent,
    "product-check": op_product_check, "solve": op_solve, "residual": op_residual, "verify": op_verify,
    "lemma-a": op_lemma_a, "relations": op_relations, "uvw": op_uvw, "psi": op_psi,
}


# ---------------------------------------------------------------------------
# runner
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    name: str
    op: str
    status: str  # pass | fail | done | error | expected-fail | unexpected-pass
    wall_time: float
    artifacts: list
    summary: dict = field(default_factory=dict)
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status in ("pass", "done", "expected-fail", "unexpected-pass")


@dataclass
class RunReport:
    results: list

    @property
    def exit_code(self) -> int:
        return 0 if all(r.ok for r in self.results) else 1

    def to_json(self) -> str:
        """Deterministic report (wall times are left out)."""
        return dump_json({"runs": [{"name": r.name, "op": r.op, "status": r.status, "artifacts": r.artifacts,
                                    "summary": r.summary, "message": r.message} for r in self.results],
                          "exit_code": self.exit_code})

    def table(self) -> str:
        lines = [f"{'run':<32}{'op':<15}{'status':<17}{'time [s]':>9}"]
        for r in self.results:
            lines.append(f"{r.name:<32}{r.op:<15}{r.status:<17}{r.wall_time:9.2f}"
                         + (f"  {r.message}" if r.message else ""))
        return "\n".join(lines)


def execute_run(cfg: C.ExperimentConfig, run: dict, out_dir: Path, precision_bits: Optional[int] = None,
                ctx: Optional[Context] = None) -> RunResult:
    ctx = ctx or Context(cfg)
    t0 = time.perf_counter()
    prec = precision_bits or run.get("precision_bits") or cfg.precision_bits
    artifacts, summary, message = [], {}, ""
    old = mp.prec
    mp.prec = int(prec)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            passed, files, summary = OP_TABLE[run["op"]](ctx, run, run.get("inputs") or {},
                                                         run.get("tolerances") or {})
        base = out_dir / run["outputs"]
        for suffix, text in sorted(files.items()):
            path = base if not suffix else base.with_name(base.name + suffix) if base.suffix else \
                Path(str(base) + suffix)
            atomic_write(path, text)
            artifacts.append(str(path.relative_to(out_dir)))
        status = "done" if passed is None else ("pass" if passed else "fail")
    except (PhiOrderError, ValueError, ArithmeticError) as exc:
        status, message = "error", f"{type(exc).__name__}: {exc}"
    finally:
        mp.prec = old
    if run.get("expect") == "fail":
        status = "expected-fail" if status in ("fail", "error") else "unexpected-pass"
    return RunResult(run["name"], run["op"], status, time.perf_counter() - t0, artifacts,
                     jsonable(summary), message)


def _worker(args):
    raw, source, run_name, out_dir, prec = args
    cfg = C.validate(raw)
    cfg.source = source
    return execute_run(cfg, cfg.run(run_name), Path(out_dir), prec)


def run_config(cfg: C.ExperimentConfig, out_dir, only=None, ops=None, precision_bits=None,
               parallel=False) -> RunReport:
    out_dir = Path(out_dir)
    runs = [r for r in cfg.runs if (not only or r["name"] in only) and (not ops or r["op"] in ops)]
    if only:
        missing = set(only) - {r["name"] for r in cfg.runs}
        if missing:
            raise ConfigError(f"--only names unknown runs {sorted(missing)}", path="runs")
    if parallel and len(runs) > 1:
        raw = cfg.to_dict()
        jobs = [(raw, cfg.source, r["name"], str(out_dir), precision_bits) for r in runs]
        with ProcessPoolExecutor() as pool:
            results = list(pool.map(_worker, jobs))
    else:
        ctx = Context(cfg)
        results = [execute_run(cfg, r, out_dir, precision_bits, ctx) for r in runs]
    report = RunReport(results)
    atomic_write(out_dir / "run_report.json", report.to_json())
    return report


# ---------------------------------------------------------------------------
# built-in suites
# ---------------------------------------------------------------------------

LOG = {"kind": "log_power", "param": 1}
TEST_PHI = {"log": LOG, "sqrt": {"kind": "power", "param": 0.5},
            "exp_sqrt_log": {"kind": "exp_log_power", "param": 0.5}, "r": {"kind": "power", "param": 1}}
TEST_S = {"two_r": {"kind": "linear", "param": 2}, "square": {"kind": "power", "param": 2},
          "r_log_r": {"kind": "r_log_r"}}
# closed-form (alpha, beta, gamma) over TEST_PHI x TEST_S
PARAMS_ORACLE = {
    ("log", "two_r"): (1, 1, 0), ("log", "square"): (1, 1, 1), ("log", "r_log_r"): (1, 1, 0),
    ("sqrt", "two_r"): (1, 0, 0), ("sqrt", "square"): (0.5, 0, 0), ("sqrt", "r_log_r"): (1, 0, 0),
    ("exp_sqrt_log", "two_r"): (1, 0, 0), ("exp_sqrt_log", "square"): (2 ** -0.5, 0, 0),
    ("exp_sqrt_log", "r_log_r"): (1, 0, 0),
    ("r", "two_r"): (1, 0, 0), ("r", "square"): (0.5, 0, 0), ("r", "r_log_r"): (1, 0, 0),
}

# ten models for the order-relation suite: (name, model spec, phi, s, grid)
RELATION_CATALOG = [
    ("F_log_half", {"kind": "example_F", "phi": "log", "kappa": 0.5}, "log", "square",
     {"kind": "linear_log", "lo": 10, "hi": 400, "points": 60}),
    ("F_log_quarter", {"kind": "example_F", "phi": "log", "kappa": 0.25}, "log", "square",
     {"kind": "linear_log", "lo": 10, "hi": 400, "points": 60}),
    ("G_log_2", {"kind": "example_G", "phi": "log", "c": 2}, "log", "square",
     {"kind": "linear_log", "lo": 10, "hi": 400, "points": 60}),
    ("G_log_3", {"kind": "example_G", "phi": "log", "c": 3}, "log", "square",
     {"kind": "linear_log", "lo": 10, "hi": 400, "points": 60}),
    ("F_exp_sqrt_log_half", {"kind": "example_F", "phi": "exp_sqrt_log", "kappa": 0.5}, "exp_sqrt_log", "two_r",
     {"kind": "linear_log", "lo": 10, "hi": 200, "points": 60}),
    ("F_over_G", {"kind": "quotient", "C": 1, "m": 0,
                  "P1": {"kind": "example_F", "phi": "log", "kappa": 0.5},
                  "P2": {"kind": "example_G", "phi": "log", "c": 2}}, "log", "square",
     {"kind": "linear_log", "lo": 10, "hi": 400, "points": 60}),
    ("cubic", {"kind": "polynomial", "coeffs": [5, -2, 0, 1]}, "log", "square",
     {"kind": "linear_log", "lo": 3, "hi": 200, "points": 60}),
    ("rational_2_2", {"kind": "rational", "numer": [1, 0, 1], "denom": [2, -3, 1]}, "log", "square",
     {"kind": "linear_log", "lo": 3, "hi": 200, "points": 60}),
    ("inverse_quadratic", {"kind": "rational", "numer": [1], "denom": [-3, 0, 1]}, "log", "two_r",
     {"kind": "linear_log", "lo": 3, "hi": 200, "points": 60}),
    ("finite_product", {"kind": "product", "zeros": [[0.5, 0.0, 1], [1.5, 1.0, 2], [3.0, 2.0, 1]]}, "log",
     "square", {"kind": "linear_log", "lo": 5, "hi": 200, "points": 60}),
]


def suite_config(name: str) -> dict:
    if name not in SUITES:
        raise ConfigError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}", path="suite")
    scales = {"phi": dict(TEST_PHI), "s": dict(TEST_S)}
    if name == "example-F":
        grid = {"kind": "linear_log", "lo": 10, "hi": 2000, "points": 200}
        return {"scales": scales, "models": {"F": {"kind": "example_F", "phi": "log", "kappa": 0.5}},
                "runs": [
                    {"name": "F_order_n", "op": "order", "inputs": {"model": "F", "phi": "log", "quantity": "n"},
                     "grid": grid, "expected": {"rho": 0.5}, "tolerances": {"abs": 0.05},
                     "outputs": "F_order_n.json"},
                    {"name": "F_order_N", "op": "order", "inputs": {"model": "F", "phi": "log", "quantity": "N"},
                     "grid": grid, "expected": {"rho": 1.5}, "tolerances": {"abs": 0.1},
                     "outputs": "F_order_N.json"},
                    {"name": "F_exponent", "op": "exponent", "inputs": {"model": "F", "phi": "log"},
                     "expected": {"lam": 0.5}, "tolerances": {"abs": 0.05}, "outputs": "F_exponent.json"},
                ]}
    if name == "example-G":
        return {"scales": scales, "models": {"G": {"kind": "example_G", "phi": "log", "c": 2}},
                "runs": [
                    {"name": "G_exponent", "op": "exponent", "inputs": {"model": "G", "phi": "log"},
                     "expected": {"lam_hi_below": 0.05}, "outputs": "G_exponent.json"},
                    {"name": "G_order_N", "op": "order", "inputs": {"model": "G", "phi": "log", "quantity": "N"},
                     "grid": {"kind": "iterated", "lo": 2, "hi": 150, "points": 300},
                     "expected": {"rho": 1.0}, "tolerances": {"abs": 0.1}, "outputs": "G_order_N.json"},
                    {"name": "G_min_modulus", "op": "product-check",
                     "inputs": {"model": "G", "phi": "log", "s": "square", "eps": 0.5},
                     "grid": {"kind": "linear_log", "lo": 10, "hi": 300, "points": 120},
                     "outputs": "G_min_modulus.json"},
                ]}
    if name == "q-theta":
        eq = {"q": 2, "coeffs": [{"kind": "polynomial", "coeffs": [0, -1]}, {"kind": "polynomial", "coeffs": [1]}],
              "K": 2000, "c0": 1}
        grid = {"kind": "linear_log", "lo": 10, "hi": 1100, "points": 120}
        return {"scales": scales, "equations": {"theta": eq},
                "runs": [
                    {"name": "theta_solve", "op": "solve", "inputs": {"equation": "theta"},
                     "outputs": "theta_coefficients.csv"},
                    {"name": "theta_residual", "op": "residual", "inputs": {"equation": "theta", "log_r": [0]},
                     "tolerances": {"max_log10": -50}, "outputs": "theta_residual.json"},
                    {"name": "theta_verify", "op": "verify",
                     "inputs": {"equation": "theta", "phi": "log", "s": "square"}, "grid": grid,
                     "tolerances": {"corollary_gap": 0.15}, "outputs": "theta_verify.json"},
                ]}
    if name == "params-matrix":
        runs = []
        for (p, s), (a, b, g) in PARAMS_ORACLE.items():
            runs.append({"name": f"params_{p}_{s}", "op": "params", "inputs": {"phi": p, "s": s},
                         "expected": {"alpha": a, "beta": b, "gamma": g}, "tolerances": {"abs": 0.05},
                         "outputs": f"params_{p}_{s}.csv"})
        return {"scales": scales, "runs": runs}
    # bounds-suite
    models = {name: spec for name, spec, *_ in RELATION_CATALOG}
    models["G"] = {"kind": "example_G", "phi": "log", "c": 2}
    runs = [{"name": f"relations_{n}", "op": "relations", "inputs": {"model": n, "phi": p, "s": s},
             "grid": g, "outputs": f"relations_{n}.json"} for n, _, p, s, g in RELATION_CATALOG]
    runs += [
        {"name": "lemma_a", "op": "lemma-a",
         "inputs": {"models": ["rational_2_2", "inverse_quadratic", "cubic", "finite_product"],
                    "configurations": 200, "seed": 7}, "outputs": "lemma_a.csv"},
        {"name": "uvw_square", "op": "uvw", "inputs": {"s": "square", "samples": 1000}, "outputs": "uvw_square.csv"},
        {"name": "uvw_r_log_r", "op": "uvw", "inputs": {"s": "r_log_r", "samples": 1000},
         "outputs": "uvw_r_log_r.csv"},
        {"name": "psi_log", "op": "psi", "inputs": {"phi": "log", "mu": 1, "tau": 1},
         "grid": {"kind": "linear_log", "lo": 10, "hi": 2000, "points": 100}, "outputs": "psi_log.json"},
        {"name": "G_min_modulus", "op": "product-check",
         "inputs": {"model": "G", "phi": "log", "s": "square", "eps": 0.5},
         "grid": {"kind": "linear_log", "lo": 10, "hi": 300, "points": 120}, "outputs": "G_min_modulus.json"},
    ]
    return {"scales": scales, "models": models, "runs": runs}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _common(p, config_required=True):
    if config_required:
        p.add_argument("--config", required=True, help="YAML or JSON experiment file")
    p.add_argument("--only", action="append", metavar="RUN", help="run only the named run (repeatable)")
    p.add_argument("--precision-bits", type=int, help="override the working precision of every run")
    p.add_argument("--out-dir", default="out", help="artifact directory (default: out)")
    p.add_argument("--parallel", action="store_true", help="execute independent runs in worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phiorder", description="phi-order growth laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("run", help="execute every run of a config"))
    for op in C.OPS:
        _common(sub.add_parser(op, help=f"execute only the '{op}' runs of a config"))
    rp = sub.add_parser("repro", help="run a built-in reproduction suite")
    rp.add_argument("suite", choices=SUITES)
    _common(rp, config_required=False)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "repro":
            cfg = C.validate(suite_config(args.suite))
            out_dir = args.out_dir if args.out_dir != "out" else f"out/{args.suite}"
        else:
            cfg = C.load(args.config)
            out_dir = args.out_dir
        ops = None if args.command in ("run", "repro") else [args.command]
        report = run_config(cfg, out_dir, only=args.only, ops=ops, precision_bits=args.precision_bits,
                            parallel=args.parallel)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    print(report.table())
    print(f"exit code {report.exit_code}")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
