import json
import os

import numpy as np
import pytest

from nldp.cli import main


@pytest.fixture
def desk_config(tmp_path):
    cfg = {
        "seed": 42,
        "problem": {
            "s": 0.6, "t": 0.5, "p": 2.0, "q": 2.2,
            "coefficient": {"type": "indicator-of-halfspace", "M": 1.0},
            "f": {"type": "gaussian", "amplitude": 0.002},
        },
        "solve": {"N": 97, "residual_tol": 1e-7},
        "eval": {"points": [0.0, 0.5]},
        "output_dir": str(tmp_path / "out"),
    }
    path = tmp_path / "desk.json"
    path.write_text(json.dumps(cfg))
    return str(path), str(tmp_path / "out")


def test_validate_ok(desk_config):
    path, out = desk_config
    assert main(["validate", "--config", path]) == 0
    with open(os.path.join(out, "validate.json")) as fh:
        rep = json.load(fh)
    assert rep["ok"] is True
    assert "config_sha256" in rep and "toolkit_version" in rep


def test_validate_reports_violations(desk_config):
    path, out = desk_config
    rc = main(["validate", "--config", path, "--set", "problem.q=3.0"])
    assert rc == 0  # violations are data, not failures
    with open(os.path.join(out, "validate.json")) as fh:
        rep = json.load(fh)
    assert rep["ok"] is False and rep["violations"]


def test_eval_inside_and_outside_margin(desk_config):
    path, out = desk_config
    assert main(["eval", "--config", path]) == 0
    rc = main(["eval", "--config", path, "--set", "eval.points=[1.999]"])
    assert rc == 1
    with open(os.path.join(out, "error.json")) as fh:
        err = json.load(fh)
    assert err["kind"] == "config"


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    assert main(["validate", "--config", str(bad)]) == 1


def test_unknown_key_rejected(desk_config):
    path, _ = desk_config
    assert main(["validate", "--config", path, "--set", "problem.zz=1"]) == 1


def test_solve_artifacts(desk_config):
    path, out = desk_config
    assert main(["solve", "--config", path]) == 0
    for name in ("solution.csv", "solution.json", "solve_report.json",
                 "residual_history.csv"):
        assert os.path.exists(os.path.join(out, name)), name
    with open(os.path.join(out, "solve_report.json")) as fh:
        rep = json.load(fh)
    assert rep["flags"] == "converged"


def test_check_inequalities_artifact(desk_config, tmp_path):
    path, out = desk_config
    rc = main(["check-inequalities", "--config", path,
               "--set", "seed=7"])
    assert rc == 0
    with open(os.path.join(out, "inequalities.json")) as fh:
        rep = json.load(fh)
    for key in ("difference_bound", "superlinear_bound", "singular_bound"):
        assert rep[key]["violations"] == 0


def test_scaling_subcommand(desk_config):
    path, out = desk_config
    assert main(["scaling-test", "--config", path]) == 0
    with open(os.path.join(out, "scaling.json")) as fh:
        rep = json.load(fh)
    by_ctx = {(c["lambda"], c["mu"]): c["max_rel_discrepancy"]
              for c in rep["checks"]}
    assert by_ctx[(1.0, 1.0)] == 0.0
    assert all(v <= 1e-5 for v in by_ctx.values())


def test_holder_subcommand(desk_config):
    path, out = desk_config
    rc = main(["holder", "--config", path, "--set", "reglab.levels=4",
               "--set", "solve.N=257"])
    assert rc == 0
    assert os.path.exists(os.path.join(out, "oscillation.csv"))
    with open(os.path.join(out, "holder.json")) as fh:
        rep = json.load(fh)
    assert 0.0 < rep["gamma_hat"] <= 1.5


def test_reproducibility_bit_identical(desk_config, tmp_path):
    path, _ = desk_config
    out1 = str(tmp_path / "r1")
    out2 = str(tmp_path / "r2")
    assert main(["solve", "--config", path, "--seed", "7", "--out", out1]) == 0
    assert main(["solve", "--config", path, "--seed", "7", "--out", out2]) == 0
    for name in ("solve_report.json", "residual_history.csv", "solution.csv"):
        with open(os.path.join(out1, name)) as fh:
            a = fh.read()
        with open(os.path.join(out2, name)) as fh:
            b = fh.read()
        # the config hash embeds the output dir; mask it out
        a = a.replace(out1, "OUT").replace(_sha_line(a), "SHA")
        b = b.replace(out2, "OUT").replace(_sha_line(b), "SHA")
        assert a == b, name


def _sha_line(text: str) -> str:
    for line in text.splitlines():
        if "config_sha256" in line:
            return line
    return "\x00"
