"""Declarative experiment configuration (YAML or JSON).

A config has five sections::

    precision_bits: 256
    grid: {kind: linear_log, lo: 10, hi: 2000, points: 200}
    scales:
      phi: {log: {kind: log_power, param: 1}}
      s:   {square: {kind: power, param: 2}}
    models:
      F: {kind: example_F, phi: log, kappa: 0.5}
    equations:
      theta: {q: 2, coeffs: [{kind: polynomial, coeffs: [0, -1]}, {kind: polynomial, coeffs: [1]}],
              K: 2000, c0: 1}
    runs:
      - {name: p1, op: params, inputs: {phi: log, s: square}, outputs: p1.csv}

Every run needs a unique ``name`` and an ``outputs`` path.  Model, scale
and equation references are checked at load time; a dangling reference
raises ConfigError naming its location (``runs[3].inputs.model``).
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .errors import ConfigError

OPS = ("params", "admissible", "order", "exponent", "product-check", "solve", "residual", "verify",
       "lemma-a", "relations", "uvw", "psi")

PHI_KINDS = ("log_power", "power", "exp_log_power", "csv", "polygonal")
S_KINDS = ("linear", "power", "r_log_r", "exp", "near_identity")
MODEL_KINDS = ("polynomial", "rational", "series", "series_csv", "example_F", "example_G", "product",
               "quotient", "solution")
GRID_KINDS = ("linear_log", "iterated", "geometric", "log_geometric", "explicit")

# input keys that refer to another section
_REF_KEYS = {"phi": "phi", "s": "s", "model": "models", "equation": "equations"}


@dataclass
class ExperimentConfig:
    precision_bits: int = 256
    grid: Optional[dict] = None
    scales: dict = field(default_factory=lambda: {"phi": {}, "s": {}})
    models: dict = field(default_factory=dict)
    equations: dict = field(default_factory=dict)
    runs: list = field(default_factory=list)
    source: Optional[str] = None

    def to_dict(self) -> dict:
        out = {
            "precision_bits": self.precision_bits,
            "scales": copy.deepcopy(self.scales),
            "models": copy.deepcopy(self.models),
            "equations": copy.deepcopy(self.equations),
            "runs": copy.deepcopy(self.runs),
        }
        if self.grid is not None:
            out["grid"] = copy.deepcopy(self.grid)
        return out

    def dumps(self, fmt: str = "yaml") -> str:
        if fmt == "json":
            return json.dumps(self.to_dict(), indent=2, sort_keys=True)
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def run(self, name: str) -> dict:
        for r in self.runs:
            if r["name"] == name:
                return r
        raise ConfigError(f"no run named {name!r}", path="runs")


def _require(cond, msg, path):
    if not cond:
        raise ConfigError(msg, path=path)


def _check_grid(g, path):
    if g is None:
        return
    _require(isinstance(g, dict), "grid must be a mapping", path)
    kind = g.get("kind", "linear_log")
    _require(kind in GRID_KINDS, f"unknown grid kind {kind!r}", f"{path}.kind")
    if kind == "explicit":
        _require(isinstance(g.get("values"), list) and len(g["values"]) >= 2,
                 "explicit grid needs a 'values' list", f"{path}.values")


def _check_model(spec, path, cfg):
    """Validate an inline model spec; strings are references."""
    if isinstance(spec, str):
        _require(spec in cfg["models"], f"unresolved model reference {spec!r}", path)
        return
    _require(isinstance(spec, dict), "model must be a mapping or a name", path)
    kind = spec.get("kind")
    _require(kind in MODEL_KINDS, f"unknown model kind {kind!r}", f"{path}.kind")
    if kind in ("example_F", "example_G"):
        _require(spec.get("phi") in cfg["scales"]["phi"], f"unresolved phi reference {spec.get('phi')!r}",
                 f"{path}.phi")
    if kind == "quotient":
        for key in ("P1", "P2"):
            if spec.get(key) is not None:
                _check_model(spec[key], f"{path}.{key}", cfg)
    if kind == "solution":
        _require(spec.get("equation") in cfg["equations"],
                 f"unresolved equation reference {spec.get('equation')!r}", f"{path}.equation")


def validate(raw: dict) -> ExperimentConfig:
    _require(isinstance(raw, dict), "config root must be a mapping", "<root>")
    unknown = set(raw) - {"precision_bits", "grid", "scales", "models", "equations", "runs"}
    _require(not unknown, f"unknown top-level keys {sorted(unknown)}", "<root>")
    cfg = {
        "precision_bits": raw.get("precision_bits", 256),
        "grid": raw.get("grid"),
        "scales": raw.get("scales") or {},
        "models": raw.get("models") or {},
        "equations": raw.get("equations") or {},
        "runs": raw.get("runs") or [],
    }
    _require(isinstance(cfg["precision_bits"], int) and cfg["precision_bits"] >= 53,
             "precision_bits must be an integer >= 53", "precision_bits")
    cfg["scales"].setdefault("phi", {})
    cfg["scales"].setdefault("s", {})
    _check_grid(cfg["grid"], "grid")
    for name, spec in cfg["scales"]["phi"].items():
        _require(isinstance(spec, dict), "phi spec must be a mapping", f"scales.phi.{name}")
        _require(spec.get("kind") in PHI_KINDS, f"unknown phi kind {spec.get('kind')!r}",
                 f"scales.phi.{name}.kind")
        if spec["kind"] == "polygonal":
            _require(spec.get("s") in cfg["scales"]["s"], f"unresolved s reference {spec.get('s')!r}",
                     f"scales.phi.{name}.s")
    for name, spec in cfg["scales"]["s"].items():
        _require(isinstance(spec, dict), "s spec must be a mapping", f"scales.s.{name}")
        _require(spec.get("kind") in S_KINDS, f"unknown s kind {spec.get('kind')!r}", f"scales.s.{name}.kind")
    for name, spec in cfg["models"].items():
        _check_model(spec, f"models.{name}", cfg)
    for name, spec in cfg["equations"].items():
        path = f"equations.{name}"
        _require(isinstance(spec, dict) and "q" in spec, "equation needs 'q'", path)
        _require(isinstance(spec.get("coeffs"), list) and spec["coeffs"], "equation needs a 'coeffs' list",
                 f"{path}.coeffs")
        for j, c in enumerate(spec["coeffs"]):
            _check_model(c, f"{path}.coeffs[{j}]", cfg)
        if spec.get("rhs") is not None:
            _check_model(spec["rhs"], f"{path}.rhs", cfg)
    _require(isinstance(cfg["runs"], list), "runs must be a list", "runs")
    seen = set()
    for i, run in enumerate(cfg["runs"]):
        path = f"runs[{i}]"
        _require(isinstance(run, dict), "run must be a mapping", path)
        name = run.get("name")
        _require(isinstance(name, str) and name, "run needs a name", f"{path}.name")
        _require(name not in seen, f"duplicate run name {name!r}", f"{path}.name")
        seen.add(name)
        _require(run.get("op") in OPS, f"unknown op {run.get('op')!r}", f"{path}.op")
        _require(isinstance(run.get("outputs"), str) and run["outputs"], "run needs an 'outputs' path",
                 f"{path}.outputs")
        _require(run.get("expect", "pass") in ("pass", "fail"), "expect must be 'pass' or 'fail'",
                 f"{path}.expect")
        _check_grid(run.get("grid"), f"{path}.grid")
        for key, value in (run.get("inputs") or {}).items():
            section = _REF_KEYS.get(key)
            if section is None:
                continue
            ipath = f"{path}.inputs.{key}"
            if section in ("phi", "s"):
                _require(value in cfg["scales"][section], f"unresolved {section} reference {value!r}", ipath)
            elif section == "models":
                _check_model(value, ipath, cfg)
            else:
                _require(value in cfg["equations"], f"unresolved equation reference {value!r}", ipath)
    return ExperimentConfig(**cfg)


def loads(text: str, fmt: Optional[str] = None) -> ExperimentConfig:
    try:
        raw = json.loads(text) if fmt == "json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"config does not parse: {exc}", path="<root>") from exc
    return validate(raw if raw is not None else {})


def load(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found", path=str(path))
    fmt = "json" if path.suffix.lower() == ".json" else None
    cfg = loads(path.read_text(), fmt)
    cfg.source = str(path)
    return cfg


def resolve_path(cfg: ExperimentConfig, p: Any) -> Path:
    """Input file paths are relative to the config file."""
    p = Path(str(p))
    if p.is_absolute() or cfg.source is None:
        return p
    return Path(cfg.source).parent / p
