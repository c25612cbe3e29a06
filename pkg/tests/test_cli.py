import csv
import json
import subprocess
import sys

import pytest
import yaml

from phiorder import cli
from phiorder import config as C
from phiorder.errors import ConfigError

SCALES = {"phi": {"log": {"kind": "log_power", "param": 1}, "r": {"kind": "power", "param": 1}},
          "s": {"square": {"kind": "power", "param": 2}, "two_r": {"kind": "linear", "param": 2}}}


def write_config(tmp_path, raw, name="exp.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(raw))
    return p


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def as_float(text):
    mantissa, _, exponent = text.partition("e")
    return float(mantissa) * 10 ** int(exponent or 0)


def test_params_run_log_square(tmp_path):
    raw = {"scales": SCALES, "runs": [{"name": "p", "op": "params", "inputs": {"phi": "log", "s": "square"},
                                       "expected": {"alpha": 1, "beta": 1, "gamma": 1}, "outputs": "p.csv"}]}
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(write_config(tmp_path, raw)), "--out-dir", str(out)]) == 0
    row = read_csv(out / "p.csv")[0]
    assert [as_float(row[k]) for k in ("alpha", "beta", "gamma")] == pytest.approx([1, 1, 1], abs=0.05)


def test_empty_runs_succeed(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(write_config(tmp_path, {"runs": []})), "--out-dir", str(out)]) == 0
    assert json.loads((out / "run_report.json").read_text())["runs"] == []


def test_verify_run_on_theta_equation(tmp_path):
    raw = {"scales": SCALES,
           "equations": {"theta": {"q": 2, "coeffs": [{"kind": "polynomial", "coeffs": [0, -1]},
                                                      {"kind": "polynomial", "coeffs": [1]}],
                                   "rhs": {"kind": "polynomial", "coeffs": [1]}, "K": 1600, "c0": 1}},
           "runs": [{"name": "v", "op": "verify", "inputs": {"equation": "theta", "phi": "log", "s": "square"},
                     "grid": {"kind": "linear_log", "lo": 10, "hi": 1000, "points": 100},
                     "tolerances": {"corollary_gap": 0.15}, "outputs": "v.json"}]}
    out = tmp_path / "out"
    assert cli.main(["verify", "--config", str(write_config(tmp_path, raw)), "--out-dir", str(out)]) == 0
    rep = json.loads((out / "v.json").read_text())
    cor = next(r for r in rep["records"] if r["name"] == "corollary_equality")
    assert abs(as_float(cor["estimate"]) - 2) < 0.15
    assert (out / "v.json.txt").exists() or any(p.suffix == ".txt" for p in out.iterdir())


# --- config handling ------------------------------------------------------------

def test_config_round_trip(tmp_path):
    raw = cli.suite_config("bounds-suite")
    cfg = C.validate(raw)
    for fmt in ("yaml", "json"):
        again = C.loads(cfg.dumps(fmt), fmt)
        assert again.to_dict() == cfg.to_dict()
        assert again.dumps(fmt) == cfg.dumps(fmt)


def test_unresolved_reference_names_its_location():
    raw = {"scales": SCALES, "runs": [
        {"name": "a", "op": "params", "inputs": {"phi": "log", "s": "square"}, "outputs": "a.csv"},
        {"name": "b", "op": "order", "inputs": {"model": "nope", "phi": "log"}, "outputs": "b.json"}]}
    with pytest.raises(ConfigError) as exc:
        C.validate(raw)
    assert exc.value.path == "runs[1].inputs.model"


@pytest.mark.parametrize("run,path", [
    ({"name": "a", "op": "params", "inputs": {}}, "runs[0].outputs"),
    ({"name": "a", "op": "bogus", "outputs": "x"}, "runs[0].op"),
    ({"name": "a", "op": "params", "outputs": "x", "expect": "maybe"}, "runs[0].expect"),
])
def test_run_validation(run, path):
    with pytest.raises(ConfigError) as exc:
        C.validate({"runs": [run]})
    assert exc.value.path == path


def test_config_error_exit_code(tmp_path, capsys):
    p = write_config(tmp_path, {"runs": [{"name": "x", "op": "params", "inputs": {"phi": "nope", "s": "nope"},
                                          "outputs": "x.csv"}]})
    assert cli.main(["run", "--config", str(p), "--out-dir", str(tmp_path / "o")]) == 2
    assert "runs[0].inputs" in capsys.readouterr().err


def test_unknown_suite():
    with pytest.raises(SystemExit) as exc:
        cli.main(["repro", "no-such-suite"])
    assert exc.value.code == 2
    with pytest.raises(ConfigError):
        cli.suite_config("no-such-suite")


# --- exit-code contract and determinism -------------------------------------------------

def failing_params_run(expect=None):
    run = {"name": "wrong", "op": "params", "inputs": {"phi": "r", "s": "two_r"},
           "expected": {"alpha": 0.2}, "outputs": "wrong.csv"}
    if expect:
        run["expect"] = expect
    return run


def test_failed_assertion_sets_exit_code(tmp_path):
    p = write_config(tmp_path, {"scales": SCALES, "runs": [failing_params_run()]})
    assert cli.main(["run", "--config", str(p), "--out-dir", str(tmp_path / "o")]) == 1


def test_expected_failure_keeps_exit_code_zero(tmp_path):
    p = write_config(tmp_path, {"scales": SCALES, "runs": [failing_params_run("fail")]})
    assert cli.main(["run", "--config", str(p), "--out-dir", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "run_report.json").read_text())
    assert rep["runs"][0]["status"] == "expected-fail"


def test_numerical_error_is_reported_per_run(tmp_path):
    raw = {"scales": SCALES, "models": {"harmonic": {"kind": "example_F", "phi": "r", "kappa": 1}},
           "runs": [{"name": "bad", "op": "exponent", "inputs": {"model": "harmonic", "phi": "r"},
                     "outputs": "bad.json"},
                    {"name": "good", "op": "params", "inputs": {"phi": "log", "s": "square"},
                     "outputs": "good.csv"}]}
    cfg = C.validate(raw)
    rep = cli.run_config(cfg, tmp_path / "o")
    status = {r.name: r.status for r in rep.results}
    assert status == {"bad": "error", "good": "done"}
    assert "NotEntire" in rep.results[0].message
    assert rep.exit_code == 1


def small_suite():
    raw = cli.suite_config("params-matrix")
    raw["runs"] = raw["runs"][:3]
    return raw


def test_artifacts_are_byte_identical(tmp_path):
    p = write_config(tmp_path, small_suite())
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", "--config", str(p), "--out-dir", str(a)]) == 0
    assert cli.main(["run", "--config", str(p), "--out-dir", str(b), "--parallel"]) == 0
    names = sorted(f.name for f in a.iterdir())
    assert names == sorted(f.name for f in b.iterdir())
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()


def test_only_filter(tmp_path):
    raw = small_suite()
    p = write_config(tmp_path, raw)
    name = raw["runs"][1]["name"]
    out = tmp_path / "o"
    assert cli.main(["run", "--config", str(p), "--out-dir", str(out), "--only", name]) == 0
    rep = json.loads((out / "run_report.json").read_text())
    assert [r["name"] for r in rep["runs"]] == [name]
    with pytest.raises(ConfigError):
        cli.run_config(C.validate(raw), out, only=["missing"])


def test_op_subcommand_filters_runs(tmp_path):
    raw = small_suite()
    raw["runs"].append({"name": "psi", "op": "psi", "inputs": {"phi": "log", "mu": 1, "tau": 1},
                        "grid": {"kind": "linear_log", "lo": 10, "hi": 200, "points": 20}, "outputs": "psi.json"})
    p = write_config(tmp_path, raw)
    out = tmp_path / "o"
    assert cli.main(["psi", "--config", str(p), "--out-dir", str(out)]) == 0
    assert [r["op"] for r in json.loads((out / "run_report.json").read_text())["runs"]] == ["psi"]


def test_precision_override(tmp_path):
    raw = {"scales": SCALES, "equations": {"t": {"q": 2, "K": 50, "c0": 1,
                                                 "coeffs": [{"kind": "polynomial", "coeffs": [0, -1]},
                                                            {"kind": "polynomial", "coeffs": [1]}],
                                                 "rhs": {"kind": "polynomial", "coeffs": [1]}}},
           "runs": [{"name": "s", "op": "solve", "inputs": {"equation": "t"}, "outputs": "s.csv"}]}
    cfg = C.validate(raw)
    rep = cli.run_config(cfg, tmp_path / "o", precision_bits=512)
    assert rep.results[0].status == "done"


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "phiorder.cli", "repro", "params-matrix", "--out-dir",
                          str(tmp_path / "pm")], capture_output=True, text=True, timeout=600)
    assert res.returncode == 0, res.stdout + res.stderr
    assert "exit code 0" in res.stdout
    assert len(list((tmp_path / "pm").glob("params_*.csv"))) == 12
