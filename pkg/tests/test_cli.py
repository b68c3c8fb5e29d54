"""Config parsing, report emission, experiment orchestration, exit
codes, and byte-level determinism of the emitted artifacts."""
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from mhl.cli import boundary_recipe, main, run_experiment
from mhl.config import (ConfigError, build_config, load_config,
                        parse_config_text, parse_value)
from mhl.evi import CheckReport
from mhl.reporting import (emit_report, read_report, report_row,
                           row_counts_as_failure)
from mhl.space import make_space
from mhl.verify import make_report


# -- config parsing ---------------------------------------------------------

def test_parse_value_types():
    assert parse_value("3") == 3
    assert parse_value("3.5") == 3.5
    assert parse_value("true") is True
    assert parse_value("false") is False
    assert parse_value("0.2, 0.1, 0.05") == [0.2, 0.1, 0.05]
    assert parse_value("hello") == "hello"


def test_parse_config_text_comments_and_blanks():
    flat = parse_config_text(
        "# a comment\n\nseed = 9  # trailing\nspace.id = euclid-linear\n")
    assert flat == {"seed": 9, "space.id": "euclid-linear"}


def test_parse_config_text_rejects_malformed_line():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config_text("seed = 1\nnot a pair\n")


def test_parse_config_text_rejects_duplicate_key():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_text("seed = 1\nseed = 2\n")


def test_build_config_defaults_and_overrides():
    cfg = build_config("harmonic", {})
    assert cfg.kind == "harmonic" and cfg.dim == 2 and cfg.n == 17
    assert cfg.space_id == "euclid-quadratic"
    cfg = build_config("harmonic", {"domain.n": 33, "seed": 5})
    assert cfg.n == 33 and cfg.seed == 5


def test_build_config_rejects_unknown_key():
    with pytest.raises(ConfigError, match="unknown key"):
        build_config("harmonic", {"evi.samples": 10})


def test_build_config_rejects_kind_mismatch():
    with pytest.raises(ConfigError, match="experiment"):
        build_config("harmonic", {"experiment": "ipp"})


def test_build_config_rejects_bad_domain():
    with pytest.raises(ConfigError):
        build_config("harmonic", {"domain.dim": 3})
    with pytest.raises(ConfigError):
        build_config("harmonic", {"domain.n": 2})


def test_build_config_splits_space_params():
    cfg = build_config("harmonic", {"space.id": "quantile-entropy",
                                    "space.m": 16, "space.tau": 1e-4})
    assert cfg.space_params == {"m": 16, "tau": 1e-4}


def test_load_config_override_semantics(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("experiment = ipp\ndomain.n = 81\nipp.eps = 0.2, 0.1\n")
    cfg = load_config(str(path), "ipp", {"seed": 3, "out": None})
    assert cfg.n == 81 and cfg.seed == 3
    assert cfg.option("ipp.eps") == [0.2, 0.1]


def test_load_config_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        load_config("/nonexistent/run.cfg", "ipp", {})


# -- report emission --------------------------------------------------------

def _passing_report(name="demo", slack=1.0):
    return make_report(name, lhs=0.0, rhs=slack, tolerance=0.0, metadata={})


def test_emit_empty_reports_writes_headers(tmp_path):
    emit_report([], str(tmp_path))
    assert (tmp_path / "report.jsonl").read_text() == ""
    assert (tmp_path / "summary.csv").read_text() \
        == "check,slack,tolerance,passed\n"


def test_emit_single_row_schema(tmp_path):
    emit_report([_passing_report()], str(tmp_path))
    row = json.loads((tmp_path / "report.jsonl").read_text())
    assert set(row) == {"check", "lhs", "rhs", "slack", "tolerance",
                        "passed", "metadata"}
    assert row["passed"] is True
    assert "passed" in (tmp_path / "summary.csv").read_text().splitlines()[0]


def test_emit_study_dat_sorted_descending(tmp_path):
    emit_report([], str(tmp_path),
                studies=[("conv", [(0.05, 3.0), (0.2, 1.0), (0.1, 2.0)])])
    lines = (tmp_path / "conv.dat").read_text().splitlines()
    params = [float(line.split()[0]) for line in lines]
    assert params == [0.2, 0.1, 0.05]


def test_emitted_infinities_survive_round_trip(tmp_path):
    rep = make_report("inf-case", lhs=float("inf"), rhs=1.0, tolerance=0.0,
                      metadata={"applicable": False})
    emit_report([rep], str(tmp_path))
    text = (tmp_path / "report.jsonl").read_text()
    assert "Infinity" in text
    back = read_report(str(tmp_path / "report.jsonl"))[0]
    assert back["slack"] == -float("inf")


def test_report_row_for_check_report():
    rep = CheckReport("contraction", 8, -0.5, 1.0, True, {"t": 0.1})
    row = report_row(rep)
    assert row["check"] == "contraction"
    assert row["slack"] == -0.5 and row["tolerance"] == 1.0
    assert row["metadata"]["samples"] == 8


def test_row_counts_as_failure_cases():
    ok = report_row(_passing_report())
    assert not row_counts_as_failure(ok)
    bad = report_row(make_report("x", lhs=2.0, rhs=0.0, tolerance=0.0,
                                 metadata={}))
    assert row_counts_as_failure(bad)
    soft = report_row(make_report("x", lhs=2.0, rhs=0.0, tolerance=0.0,
                                  metadata={"indicative": True}))
    assert not row_counts_as_failure(soft)
    skipped = report_row(make_report("x", lhs=2.0, rhs=0.0, tolerance=0.0,
                                     metadata={"applicable": False}))
    assert not row_counts_as_failure(skipped)


def test_emission_is_numpy_free(tmp_path):
    rep = make_report("np-case", lhs=np.float64(1.0), rhs=np.float64(2.0),
                      tolerance=np.float64(0.0),
                      metadata={"vec": np.array([1.0, 2.0]),
                                "n": np.int64(3)})
    emit_report([rep], str(tmp_path))
    row = read_report(str(tmp_path / "report.jsonl"))[0]
    assert row["metadata"]["vec"] == [1.0, 2.0]
    assert row["metadata"]["n"] == 3


# -- boundary recipes -------------------------------------------------------

def test_recipes_build_valid_points():
    euclid = make_space("euclid-quadratic", dim=2)
    c = np.array([0.25, 0.75])
    for name in ("coordinate", "smooth"):
        p = boundary_recipe(name, euclid, 2)(c)
        euclid.validate_point(p)
    q = make_space("quantile-entropy", m=8)
    q.validate_point(boundary_recipe("quantile-plates", q, 2)(c))
    t = make_space("tripod-quadratic")
    t.validate_point(boundary_recipe("tripod-branches", t, 2)(c))


def test_recipe_space_mismatch():
    q = make_space("quantile-entropy", m=8)
    with pytest.raises(ConfigError):
        boundary_recipe("coordinate", q, 2)
    with pytest.raises(ConfigError):
        boundary_recipe("no-such-recipe", q, 2)


# -- experiment runs --------------------------------------------------------

def test_run_ipp_experiment_writes_artifacts(tmp_path):
    cfg = build_config("ipp", {"domain.n": 81, "ipp.eps": [0.2, 0.1],
                               "out": str(tmp_path)})
    assert run_experiment(cfg) == 0
    rows = read_report(str(tmp_path / "report.jsonl"))
    assert rows[0]["check"] == "ipp_convergence"
    assert (tmp_path / "ipp_linear-x1.dat").exists()


def test_run_harmonic_interval_skips_lp(tmp_path):
    cfg = build_config("harmonic", {"domain.dim": 1, "domain.n": 17,
                                    "boundary.recipe": "coordinate",
                                    "space.dim": 1,
                                    "out": str(tmp_path)})
    assert run_experiment(cfg) == 0
    names = [r["check"] for r in read_report(str(tmp_path / "report.jsonl"))]
    assert "lp_gain" not in names
    assert "subharmonic" in names and "weak_inequality" in names


def test_run_experiment_propagates_failures(tmp_path, monkeypatch):
    import mhl.cli as cli
    bad = make_report("forced", lhs=1.0, rhs=0.0, tolerance=0.0, metadata={})
    monkeypatch.setitem(cli._RUNNERS, "ipp", lambda cfg, th: ([bad], []))
    cfg = build_config("ipp", {"out": str(tmp_path)})
    assert run_experiment(cfg) == 1


def test_main_exit_codes_triple(tmp_path, capsys):
    # 0: a real passing run
    out0 = str(tmp_path / "ok")
    assert main(["ipp", "--n", "81", "--out", out0]) == 0
    # 1: report subcommand over a failing row
    out1 = str(tmp_path / "bad")
    emit_report([make_report("forced", lhs=1.0, rhs=0.0, tolerance=0.0,
                             metadata={})], out1)
    assert main(["report", out1]) == 1
    # 2: unusable configuration
    assert main(["harmonic", "--space", "no-such-space",
                 "--out", str(tmp_path / "x")]) == 2
    capsys.readouterr()


def test_main_evi_suite_seed7_all_nine_pass(tmp_path):
    """evi-suite on the quadratic target with seed 7: nine passing
    checks and a clean exit."""
    out = str(tmp_path / "evi")
    code = main(["evi-suite", "--seed", "7", "--out", out])
    assert code == 0
    rows = read_report(os.path.join(out, "report.jsonl"))
    assert len(rows) == 9
    assert all(r["passed"] for r in rows)


def test_report_subcommand_reads_directory_or_file(tmp_path, capsys):
    emit_report([_passing_report()], str(tmp_path))
    assert main(["report", str(tmp_path)]) == 0
    assert main(["report", str(tmp_path / "report.jsonl")]) == 0
    capsys.readouterr()


# -- determinism ------------------------------------------------------------

def test_repeat_run_byte_identical(tmp_path):
    cfgs = {"space.id": "euclid-linear", "evi.samples": 40}
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    run_experiment(build_config("evi-suite", {**cfgs, "out": a}))
    run_experiment(build_config("evi-suite", {**cfgs, "out": b}))
    assert (tmp_path / "a/report.jsonl").read_bytes() \
        == (tmp_path / "b/report.jsonl").read_bytes()


def test_thread_count_does_not_change_bytes(tmp_path):
    cfgs = {"space.id": "euclid-linear", "evi.samples": 40}
    a, b = str(tmp_path / "t1"), str(tmp_path / "t4")
    run_experiment(build_config("evi-suite", {**cfgs, "out": a}), threads=1)
    run_experiment(build_config("evi-suite", {**cfgs, "out": b}), threads=4)
    assert (tmp_path / "t1/report.jsonl").read_bytes() \
        == (tmp_path / "t4/report.jsonl").read_bytes()


def test_mhl_threads_env_through_subprocess(tmp_path):
    """End-to-end: the installed entry point honors MHL_THREADS without
    perturbing any emitted byte."""
    cfg = tmp_path / "run.cfg"
    cfg.write_text("experiment = evi-suite\nspace.id = euclid-linear\n"
                   "evi.samples = 25\nseed = 11\n")
    outs = []
    for threads in ("1", "4"):
        out = tmp_path / f"thr{threads}"
        env = dict(os.environ, MHL_THREADS=threads)
        res = subprocess.run(
            [sys.executable, "-m", "mhl.cli", "evi-suite",
             "--config", str(cfg), "--out", str(out)],
            capture_output=True, env=env)
        assert res.returncode == 0, res.stderr.decode()
        outs.append((out / "report.jsonl").read_bytes())
    assert outs[0] == outs[1]


def test_mhl_threads_must_be_integer(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("MHL_THREADS", "many")
    assert main(["ipp", "--n", "81", "--out", str(tmp_path)]) == 2
    capsys.readouterr()
