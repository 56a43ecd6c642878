from __future__ import annotations

import json
import math

import numpy as np
import pytest

from tzgirsanov.cli import main
from tzgirsanov.paths import read_path_csv


def _simulate(tmp_path, *extra):
    assert main(["simulate", "--paths", "1", "--n", "64", "--out", str(tmp_path), *extra]) == 0
    return tmp_path / "path_000000.csv"


def test_simulate_is_deterministic(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    a = read_path_csv(str(_simulate(tmp_path / "a")))
    b = read_path_csv(str(_simulate(tmp_path / "b")))
    assert np.array_equal(a.values, b.values)
    meta = json.loads((tmp_path / "a" / "path.json").read_text())
    assert meta["config"]["seed"] == 42 and meta["config"]["n_steps"] == 64


def test_zero_tanh_drift_matches_bm(tmp_path):
    (tmp_path / "bm").mkdir()
    (tmp_path / "th").mkdir()
    a = read_path_csv(str(_simulate(tmp_path / "bm")))
    b = read_path_csv(str(_simulate(tmp_path / "th", "--kind", "tanh", "--mu", "0")))
    assert np.array_equal(a.values, b.values)


def test_long_format_and_bessel_sampler(tmp_path, capsys):
    rc = main(["simulate", "--kind", "besselk", "--mu", "0.5", "--paths", "3", "--format", "long",
               "--n", "32", "--out", str(tmp_path)])
    assert rc == 0
    rows = (tmp_path / "path.csv").read_text().splitlines()
    assert rows[0] == "ordinal,s,phi" and len(rows) == 1 + 3 * 33


def test_transform_chain(tmp_path):
    src = _simulate(tmp_path)
    path = read_path_csv(str(src))
    zero = tmp_path / "zero.csv"
    assert main(["transform", str(src), "--op", "tz", "--z", "0", "--output", str(zero)]) == 0
    assert np.array_equal(read_path_csv(str(zero)).values, path.values)

    once, twice = tmp_path / "c1.csv", tmp_path / "c2.csv"
    assert main(["transform", str(src), "--op", "c", "--output", str(once)]) == 0
    assert main(["transform", str(once), "--op", "c", "--output", str(twice)]) == 0
    np.testing.assert_allclose(read_path_csv(str(twice)).values, path.values, atol=1e-12)
    side = json.loads((tmp_path / "c1.json").read_text())
    assert side["endpoint_after"] == pytest.approx(-path.endpoint, abs=1e-12)
    assert side["A_t_ratio"] == pytest.approx(math.exp(-side["z_used"]), rel=1e-12)
    assert json.loads((tmp_path / "c2.json").read_text())["input_profile"].endswith("c1.json")


@pytest.mark.parametrize("op", [["clambda", "--weight", "cosh"], ["smu", "--mu", "0.5"]])
def test_weighted_transforms_run(tmp_path, op):
    src = _simulate(tmp_path)
    out = tmp_path / "o.csv"
    assert main(["transform", str(src), "--op", *op, "--output", str(out)]) == 0
    assert read_path_csv(str(out)).values.shape == (65,)


def test_hlam_and_bessel_print(capsys):
    assert main(["hlam", "--xi", "0.3", "--zeta", "0.7", "--weight", "quadratic-variation"]) == 0
    assert "0.82436291641" in capsys.readouterr().out
    assert main(["hlam", "--xi", "0.5", "--zeta", "1", "--kmu", "0.5"]) == 0
    assert "k_mu" in capsys.readouterr().out
    assert main(["bessel", "--nu", "0", "--x", "1"]) == 0
    assert "0.42102443824" in capsys.readouterr().out


def test_usage_and_domain_errors(tmp_path, capsys):
    assert main(["simulate", "--bogus"]) == 2
    assert main(["simulate", "--pat", "2"]) == 2  # abbreviations are refused
    assert main(["hlam", "--xi", "0", "--zeta", "-1"]) == 2
    assert main(["verify", "--spec", "nope", "--N", "200", "--n", "16"]) == 2
    assert main(["transform", str(tmp_path / "missing.csv"), "--op", "c"]) == 2
    src = _simulate(tmp_path)
    assert main(["transform", str(src), "--op", "tz"]) == 2
    assert "error:" in capsys.readouterr().err


def test_verify_list_and_single_spec(tmp_path, capsys):
    assert main(["verify", "--list"]) == 0
    listing = capsys.readouterr().out.splitlines()
    assert len(listing) >= 18
    rc = main(["verify", "--spec", "reflection", "--N", "500", "--n", "32", "--out", str(tmp_path)])
    assert rc == 0
    report = json.loads((tmp_path / "verify-report.json").read_text())
    assert report["passed"] and report["config"]["specs"] == ["reflection"]
    assert "deterministic" not in report


def test_verify_report_only_with_output_dir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("TZG_OUTPUT_DIR", raising=False)
    assert main(["verify", "--spec", "reflection", "--N", "200", "--n", "16"]) == 0
    assert not (tmp_path / "verify-report.json").exists()
    monkeypatch.setenv("TZG_OUTPUT_DIR", str(tmp_path))
    assert main(["verify", "--spec", "reflection", "--N", "200", "--n", "16"]) == 0
    assert (tmp_path / "verify-report.json").exists()


def test_verify_failure_exit_code(monkeypatch):
    import tzgirsanov.cli as cli
    from tzgirsanov.verify import SuiteConfig, run_suite

    def failing(cfg):
        return run_suite(SuiteConfig(N=200, n_steps=16, specs=cfg.specs, z_max=-1.0, rerun=False))

    monkeypatch.setattr(cli, "run_suite", failing)
    assert main(["verify", "--spec", "reflection", "--N", "200", "--n", "16"]) == 1
