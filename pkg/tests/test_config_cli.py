import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from tamedexp import ConfigError, SchemeKind, Taming
from tamedexp.cli import main, run_converge
from tamedexp.config import ExperimentConfig, effective_levels, load_config, parse_config

SMALL = """
[problem]
dim = 1
beta1 = 0.1
beta2 = 0.0

[run]
schemes = GbmTamed, ExpTamed
estimators = MLMCSR, MLMCL0, MLMC, Trad   ; all four
reference = ExpTamed
master_seed = 31
output_dir = {out}

[levels]
n0 = 4
finest_level = 4
samples_per_level = 1500
"""


def write(tmp_path, text, name="exp.ini", **fmt):
    path = tmp_path / name
    path.write_text(text.format(out=tmp_path / "out", **fmt))
    return path


def read_csv(path):
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    return [dict(zip(header, line.split(","))) for line in lines[1:]]


# --- config parsing ------------------------------------------------------------

def test_defaults():
    cfg = parse_config("")
    assert cfg == ExperimentConfig()
    assert cfg.levels.n0 == 4 and cfg.levels.finest_level == 8
    assert cfg.taming is Taming.RECIPROCAL_NORM


def test_parse_all_keys(tmp_path):
    cfg = load_config(write(tmp_path, SMALL))
    assert cfg.schemes == (SchemeKind.GBM_TAMED, SchemeKind.EXP_TAMED)
    assert cfg.estimators == ("MLMCSR", "MLMCL0", "MLMC", "Trad")
    assert cfg.master_seed == 31
    assert cfg.levels.samples_per_level == (1500,) * 5
    text = "[problem]\ndim = 3\nx0 = 0.1, 0.2, 0.3\nlaplacian_scaling = fd\nnonlinear_drift = no\n" \
           "[run]\ntaming = none\ndt_max = 0.3\nrepeats = 3\n[levels]\nsamples_per_level = 9,8,7\n" \
           "finest_level = 2\ntarget_level = 2\n"
    cfg = parse_config(text)
    assert cfg.problem.x0 == [0.1, 0.2, 0.3] and not cfg.problem.nonlinear_drift
    assert cfg.taming is Taming.NONE and cfg.dt_max == 0.3 and cfg.repeats == 3
    assert cfg.levels.samples_per_level == (9, 8, 7) and cfg.levels.target_level == 2


@pytest.mark.parametrize("text, line, fragment", [
    ("[run]\nschemes = GbmTamed\nfoo = 1\n", 3, "unknown key"),
    ("[problem]\ndim = 1\n[extra]\nx = 1\n", 3, "unknown section"),
    ("[problem]\n\ndim = two\n", 3, "dim"),
    ("[run]\nschemes = Heun\n", 2, "unknown scheme"),
    ("[run]\nestimators = MLMCSR, Fancy\n", 2, "unknown estimator"),
    ("[run]\nestimators =\n", 2, "must not be empty"),
    ("[run]\nmaster_seed = -3\n", 2, "unsigned"),
    ("[levels]\nn0 = 4\nn0 = 8\n", 3, "duplicate"),
    ("dim = 1\n", 1, "section"),
    ("[levels]\nfinest_level = 3\nsamples_per_level = 1, 2\n", 1, "samples_per_level"),
    ("[run]\ndt_max = 0.01\n[levels]\nn0 = 1\nfinest_level = 4\n", 2, "no usable levels"),
])
def test_config_errors_are_line_anchored(text, line, fragment):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == line
    assert str(info.value).startswith(f"line {line}: ")
    assert fragment in str(info.value)


def test_dt_max_coarsens_level_ladder():
    cfg = parse_config("[run]\ndt_max = 0.02\n[levels]\nn0 = 8\nfinest_level = 9\nsamples_per_level = 10\n")
    spec = effective_levels(cfg)
    assert spec.n0 == 64 and spec.finest_level == 6 and spec.target_level == 5
    assert 1.0 / spec.n0 <= 0.02


# --- command line ----------------------------------------------------------------

def test_unknown_key_exits_1_without_output(tmp_path, capsys):
    cfg = write(tmp_path, "[run]\noutput_dir = {out}\nbogus = 1\n")
    assert main(["converge", "--config", str(cfg)]) == 1
    assert "line 3" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_usage_errors_exit_1(tmp_path):
    assert main(["converge"]) == 1
    assert main(["converge", "--config", str(tmp_path / "missing.ini")]) == 1
    assert main(["frobnicate"]) == 1
    cfg = write(tmp_path, "[run]\noutput_dir = {out}\nestimators = \n")
    assert main(["compare", "--config", str(cfg)]) == 1
    assert not (tmp_path / "out").exists()


def test_converge_outputs_and_determinism(tmp_path):
    cfg = write(tmp_path, SMALL)
    out1, out4 = tmp_path / "t1", tmp_path / "t4"
    assert main(["converge", "--config", str(cfg), "--out", str(out1), "--threads", "1"]) == 0
    assert main(["converge", "--config", str(cfg), "--out", str(out4), "--threads", "4"]) == 0
    names = sorted(p.name for p in out1.iterdir())
    assert names == sorted(p.name for p in out4.iterdir())
    assert "converge_GbmTamed_MLMCSR.csv" in names and "converge_summary.csv" in names
    for name in names:
        assert (out1 / name).read_bytes() == (out4 / name).read_bytes(), name

    rows = read_csv(out1 / "converge_GbmTamed_MLMCSR.csv")
    assert [r["n_steps"] for r in rows] == ["4", "8", "16", "32"]
    assert float(rows[1]["dt"]) == 0.125
    summary = {(r["scheme"], r["estimator"]): r for r in read_csv(out1 / "converge_summary.csv")}
    assert summary[("GbmTamed", "MLMCSR")]["reference"] == "GbmTamed"
    assert summary[("GbmTamed", "MLMC")]["reference"] == "ExpTamed"
    assert 0.5 < float(summary[("GbmTamed", "MLMCSR")]["slope"]) < 1.5

    meta = json.loads((out1 / "run_meta.json").read_text())
    assert meta["command"] == "converge" and meta["master_seed"] == 31
    assert meta["levels"]["n0"] == 4 and "numpy" in meta["versions"]
    assert len(meta["config_sha256"]) == 64


def test_seed_override_changes_results(tmp_path):
    cfg = write(tmp_path, SMALL.replace("MLMCSR, MLMCL0, MLMC, Trad", "MLMCSR"))
    main(["converge", "--config", str(cfg), "--out", str(tmp_path / "a")])
    main(["converge", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "32"])
    a = (tmp_path / "a" / "converge_GbmTamed_MLMCSR.csv").read_text()
    b = (tmp_path / "b" / "converge_GbmTamed_MLMCSR.csv").read_text()
    assert a != b
    assert json.loads((tmp_path / "b" / "run_meta.json").read_text())["master_seed"] == 32


def test_linear_config_gives_zero_error_and_undefined_slope(tmp_path):
    text = "[problem]\nbeta2 = 0\nnonlinear_drift = false\n[run]\nschemes = GbmTamed\n" \
           "estimators = MLMCSR, MLMCL0\nreference = GbmTamed\n[levels]\nn0 = 2\nfinest_level = 4\n" \
           "samples_per_level = 500\n"
    cfg = parse_config(text)
    code, curves = run_converge(cfg, out_dir=tmp_path)
    assert code == 0
    for curve in curves.values():
        assert np.all(curve.error < 1e-10)
    for row in read_csv(tmp_path / "converge_summary.csv"):
        assert row["slope"] == "undefined" and row["n_fit_points"] == "0"


def test_compare_shares_ladder_rows(tmp_path):
    cfg = write(tmp_path, SMALL.replace("GbmTamed, ExpTamed", "GbmTamed"))
    assert main(["compare", "--config", str(cfg), "--repeats", "2"]) == 0
    out = tmp_path / "out"
    ladder = {}
    for est in ("MLMC", "MLMCL0"):
        rows = read_csv(out / f"ladder_GbmTamed_{est}.csv")
        ladder[est] = [r for r in rows if r["piece"].endswith("ladder")]
    assert ladder["MLMC"] == ladder["MLMCL0"] and len(ladder["MLMC"]) == 4 + 3
    a = np.array([float(r["error"]) for r in read_csv(out / "compare_GbmTamed_MLMC.csv")])
    summary = {r["estimator"]: int(r["path_steps"]) for r in read_csv(out / "compare_summary.csv")}
    assert summary["Trad"] > summary["MLMC"] >= summary["MLMCL0"]
    assert a.shape == (4,)
    report = (out / "compare_report.txt").read_text()
    assert "MLMCSR" in report


def test_moments_csv(tmp_path):
    cfg = write(tmp_path, SMALL.replace("GbmTamed, ExpTamed", "GbmTamed, TamedEuler"))
    assert main(["moments", "--config", str(cfg)]) == 0
    rows = read_csv(tmp_path / "out" / "moments.csv")
    assert len(rows) == 10
    assert {r["scheme"] for r in rows} == {"GbmTamed", "TamedEuler"}
    for r in rows:
        assert float(r["discard_fraction"]) == 0.0
        assert float(r["p4_moment"]) >= float(r["p2_moment"]) ** 2


def test_moments_flags_divergent_scheme(tmp_path):
    text = "[problem]\nx0 = 1000\n[run]\nschemes = EulerMaruyama, TamedEuler\noutput_dir = {out}\n" \
           "[levels]\nn0 = 4\nfinest_level = 1\nsamples_per_level = 200\n"
    assert main(["moments", "--config", str(write(tmp_path, text))]) == 2
    rows = {(r["scheme"], r["dt"]): r for r in read_csv(tmp_path / "out" / "moments.csv")}
    assert float(rows[("EulerMaruyama", "0.25")]["discard_fraction"]) == 1.0
    assert rows[("EulerMaruyama", "0.25")]["p4_moment"] == "nan"
    assert float(rows[("TamedEuler", "0.25")]["discard_fraction"]) == 0.0


def test_selftest(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") == 6
    assert main(["selftest", "--fault", "pade"]) != 0
    assert "FAIL  mat_exp" in capsys.readouterr().out


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "tamedexp", "selftest"], capture_output=True, text=True)
    assert res.returncode == 0 and "selftest passed" in res.stdout


def test_converge_failed_estimate_exits_2(tmp_path):
    text = "[problem]\nx0 = 1000\n[run]\nschemes = EulerMaruyama, GbmTamed\nestimators = MLMCSR\n" \
           "output_dir = {out}\n[levels]\nn0 = 4\nfinest_level = 2\nsamples_per_level = 100\n"
    assert main(["converge", "--config", str(write(tmp_path, text))]) == 2
    summary = {r["scheme"]: r for r in read_csv(tmp_path / "out" / "converge_summary.csv")}
    assert summary["EulerMaruyama"]["status"].startswith("failed")
    assert summary["GbmTamed"]["status"] == "ok"
    assert (tmp_path / "out" / "converge_GbmTamed_MLMCSR.csv").exists()


def test_moments_euler_maruyama_blow_up_example(tmp_path):
    text = "[problem]\nx0 = 3\n[run]\nschemes = EulerMaruyama\noutput_dir = {out}\n" \
           "[levels]\nn0 = 2\nfinest_level = 1\nsamples_per_level = 1000\n"
    main(["moments", "--config", str(write(tmp_path, text))])
    row = read_csv(tmp_path / "out" / "moments.csv")[0]
    assert float(row["dt"]) == 0.5
    assert float(row["discard_fraction"]) > 0.5 or float(row["p4_moment"]) > 1e10


def test_moments_deterministic_flow(tmp_path):
    from tamedexp import IncrementGrid, integrate, make_cubic_problem, phi_sq_norm
    from tamedexp.cli import run_moments

    cfg = parse_config("[problem]\nbeta1 = 0\nnonlinear_drift = false\n[run]\nschemes = GbmTamed, TamedEuler\n"
                       "[levels]\nn0 = 2\nfinest_level = 2\nsamples_per_level = 50\n")
    code, rows = run_moments(cfg, out_dir=tmp_path)
    assert code == 0
    problem = make_cubic_problem(cfg.problem)
    for scheme, dt, p2, p4, frac in rows:
        n = round(1 / dt)
        flow = phi_sq_norm(integrate(problem, scheme, IncrementGrid(dt, np.zeros((1, n)))).terminal)
        assert p2 == pytest.approx(flow, rel=1e-14)
        assert p4 == pytest.approx(flow**2, rel=1e-14)
        assert frac == 0


def test_selftest_report_is_deterministic(capsys):
    main(["selftest"])
    first = capsys.readouterr().out
    main(["selftest"])
    assert capsys.readouterr().out == first
