import json
import subprocess
import sys
from pathlib import Path

import pytest

from choicepa import config as cfgmod
from choicepa.cli import main
from choicepa.config import ConfigError

MINIMAL = """\
[model]
alpha = 0.5
gamma = 0.5
c_d = 1.0

[m_dist]
kind = "deterministic"
value = 1

[run]
seed = 7
horizon = 1000
"""

VERIFY = """
[verify]
slope_tol = 0.05
critical_tol = 0.05
supercritical_threshold = 0.9
chi2_p = 0.001
ks_p = 0.01
cv_horizon = 2000
cv_replicates = 10
cv_draws = 20000
"""


def write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def run_dir(out: Path) -> Path:
    dirs = [d for d in out.iterdir() if d.is_dir()]
    assert len(dirs) == 1
    return dirs[0]


def snapshot(d: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_simulate_minimal(tmp_path):
    cfg = write(tmp_path, MINIMAL)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"]) == 0
    d = run_dir(tmp_path / "o")
    lines = (d / "trace_r000.csv").read_text().splitlines()
    assert lines[0].startswith("# choicepa")
    assert lines[1].startswith("# config {")
    assert lines[2].split(",")[:6] == ["n", "M", "L", "D", "E", "S"]
    assert lines[-1].split(",")[0] == "1000"
    summary = json.loads((d / "summary.json").read_text())
    assert summary["seed"] == 7 and summary["final"][0]["n"] == 1000


def test_simulate_twice_identical(tmp_path):
    cfg = write(tmp_path, MINIMAL)
    for o in ("a", "b"):
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / o), "--quiet"]) == 0
    assert snapshot(run_dir(tmp_path / "a")) == snapshot(run_dir(tmp_path / "b"))


def test_override_is_echoed(tmp_path):
    cfg = write(tmp_path, MINIMAL)
    out = tmp_path / "o"
    assert main(["simulate", "--config", str(cfg), "--out", str(out), "--set", "model.alpha=0.7",
                 "--quiet"]) == 0
    summary = json.loads((run_dir(out) / "summary.json").read_text())
    assert summary["params"]["alpha"] == 0.7
    assert summary["config"]["model"]["alpha"] == 0.7
    assert summary["prediction"]["regime"] == "Supercritical"


def test_jobs_do_not_change_outputs(tmp_path):
    cfg = write(tmp_path, MINIMAL.replace("horizon = 1000", "horizon = 20000\nreplicates = 6"))
    for jobs, o in (("1", "a"), ("8", "b")):
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / o),
                     "--jobs", jobs, "--quiet"]) == 0
    a, b = snapshot(run_dir(tmp_path / "a")), snapshot(run_dir(tmp_path / "b"))
    assert len(a) == 6 + 3 and a == b


def test_rerun_from_embedded_config(tmp_path):
    cfg = write(tmp_path, MINIMAL.replace("seed = 7", "seed = 8\nreplicates = 2"))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a"), "--quiet"]) == 0
    first = run_dir(tmp_path / "a")
    for source in ("summary.json", "report.json"):
        out = tmp_path / source
        assert main(["simulate", "--config", str(first / source), "--out", str(out), "--quiet"]) == 0
        assert snapshot(run_dir(out)) == snapshot(first)


def test_json_config(tmp_path):
    doc = {"model": {"alpha": 0.5, "gamma": 0.25}, "run": {"horizon": 200}}
    cfg = write(tmp_path, json.dumps(doc), "cfg.json")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"]) == 0


@pytest.mark.parametrize("sets,regime,constant", [
    (["model.alpha=0.7", "m_dist.value=2"], "Supercritical", 2.0),
    (["model.gamma=0.25"], "Subcritical", 4.0),
    ([], "Critical", 0.5106),
])
def test_predict(tmp_path, capsys, sets, regime, constant):
    cfg = write(tmp_path, MINIMAL)
    argv = ["predict", "--config", str(cfg), "--quiet"]
    for s in sets:
        argv += ["--set", s]
    assert main(argv) == 0
    doc = json.loads(capsys.readouterr().out)
    pr = doc["prediction"]
    assert pr["regime"] == regime
    assert pr["constant"] == pytest.approx(constant, abs=1e-4)
    if regime == "Subcritical":
        assert pr["exponent"] == 0.5 and pr["alt_constant"] == pytest.approx(4.0)


def test_predict_writes_file(tmp_path, capsys):
    cfg = write(tmp_path, MINIMAL)
    assert main(["predict", "--config", str(cfg), "--out", str(tmp_path / "p"), "--quiet"]) == 0
    assert json.loads((tmp_path / "p" / "prediction.json").read_text()) == json.loads(capsys.readouterr().out)


def test_verify_supercritical_passes(tmp_path):
    text = MINIMAL.replace("alpha = 0.5", "alpha = 0.7").replace("horizon = 1000",
                                                                "horizon = 100000\nreplicates = 3")
    cfg = write(tmp_path, text + VERIFY)
    out = tmp_path / "o"
    assert main(["verify", "--config", str(cfg), "--out", str(out), "--quiet"]) == 0
    report = json.loads((run_dir(out) / "report.json").read_text())
    names = [v["name"] for v in report["verdicts"]]
    assert names == ["condensation", "naive sampler vs class law", "naive vs fast ensembles"]
    assert all(v["passed"] for v in report["verdicts"])


def test_verify_zero_tolerance_fails(tmp_path):
    text = MINIMAL.replace("horizon = 1000", "horizon = 10000\nreplicates = 2")
    cfg = write(tmp_path, text + VERIFY.replace("critical_tol = 0.05", "critical_tol = 0.0"))
    out = tmp_path / "o"
    assert main(["verify", "--config", str(cfg), "--out", str(out), "--set",
                 "verify.cross_validate=false", "--quiet"]) == 1
    assert (run_dir(out) / "report.txt").read_text().count("FAIL") == 1


def test_verify_missing_tolerance_key(tmp_path, capsys):
    cfg = write(tmp_path, MINIMAL + VERIFY.replace("slope_tol = 0.05\n", ""))
    assert main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "verify.slope_tol" in err


def test_verify_without_section(tmp_path, capsys):
    cfg = write(tmp_path, MINIMAL)
    assert main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "verify.slope_tol" in capsys.readouterr().err


def test_verify_partial_exits_runtime(tmp_path):
    text = MINIMAL.replace('kind = "deterministic"\nvalue = 1',
                           'kind = "zeta"\nbeta = 1.02\nallow_infinite_variance = true')
    text = text.replace("horizon = 1000", "horizon = 1000000")
    cfg = write(tmp_path, text + VERIFY)
    out = tmp_path / "o"
    assert main(["verify", "--config", str(cfg), "--out", str(out),
                 "--set", "verify.cross_validate=false", "--quiet"]) == 3
    report = json.loads((run_dir(out) / "report.json").read_text())
    assert report["partial"] and report["failures"]


@pytest.mark.parametrize("text,needle,line", [
    (MINIMAL.replace("c_d = 1.0", "c_d = 1.0\nfoo = 2"), "unknown key model.foo", 5),
    (MINIMAL.replace("gamma = 0.5", 'gamma = "x"'), "model.gamma must be number", 3),
    (MINIMAL + "\n[extra]\nx = 1\n", "unknown section [extra]", 14),
    (MINIMAL.replace("alpha = 0.5\n", ""), "missing required key model.alpha", 1),
    (MINIMAL.replace("gamma = 0.5", "gamma = "), "", 3),
])
def test_config_errors_are_line_anchored(tmp_path, capsys, text, needle, line):
    cfg = write(tmp_path, text)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert f"{cfg}:{line}:" in err
    assert needle in err


def test_invalid_parameters_are_config_errors(tmp_path, capsys):
    cfg = write(tmp_path, MINIMAL.replace("alpha = 0.5", "alpha = 1.5"))
    assert main(["predict", "--config", str(cfg)]) == 2
    assert "alpha must lie in (0, 1)" in capsys.readouterr().err


def test_unknown_override(tmp_path, capsys):
    cfg = write(tmp_path, MINIMAL)
    assert main(["predict", "--config", str(cfg), "--set", "model.foo=1"]) == 2
    assert "model.foo" in capsys.readouterr().err
    assert main(["predict", "--config", str(cfg), "--set", "alpha=1"]) == 2


def test_missing_config_file(tmp_path, capsys):
    assert main(["predict", "--config", str(tmp_path / "nope.toml")]) == 2


SWEEP = """
[sweep]
alpha = [0.4, 0.7]
gamma = [0.3, 0.5]
"""


def test_sweep_grid(tmp_path):
    cfg = write(tmp_path, MINIMAL.replace("horizon = 1000", "horizon = 500") + SWEEP)
    out = tmp_path / "o"
    assert main(["sweep", "--config", str(cfg), "--out", str(out), "--quiet"]) == 0
    index = json.loads((out / "index.json").read_text())
    regimes = {(p["alpha"], p["gamma"]): p["regime"] for p in index["points"]}
    assert regimes == {(0.4, 0.3): "Subcritical", (0.4, 0.5): "Subcritical",
                       (0.7, 0.3): "Critical", (0.7, 0.5): "Supercritical"}
    assert len([d for d in out.iterdir() if d.is_dir()]) == 4
    for p in index["points"]:
        assert (out / p["path"] / "report.json").exists() and p["exit_code"] == 0


def test_sweep_empty_grid(tmp_path, capsys):
    cfg = write(tmp_path, MINIMAL + "\n[sweep]\nalpha = []\n")
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "empty" in capsys.readouterr().err


def test_sweep_continues_past_bad_points(tmp_path):
    text = MINIMAL.replace("horizon = 1000", "horizon = 300") + "\n[sweep]\nalpha = [0.5, 1.5]\n"
    out = tmp_path / "o"
    assert main(["sweep", "--config", str(write(tmp_path, text)), "--out", str(out), "--quiet"]) == 2
    points = json.loads((out / "index.json").read_text())["points"]
    assert [p["exit_code"] for p in points] == [0, 2]
    assert "alpha" in points[1]["error"]


@pytest.mark.parametrize("alphas,gammas,labels", [
    ([0.3, 0.5, 0.7], [0.5], {"Subcritical", "Critical", "Supercritical"}),
    ([0.3, 0.45], [0.5], {"Subcritical"}),
    ([0.6, 0.7], [0.5], {"Supercritical"}),
])
def test_sweep_regime_labels(tmp_path, alphas, gammas, labels):
    cfg = cfgmod.resolve({"model": {"alpha": 0.5, "gamma": 0.5}, "run": {"horizon": 10},
                          "sweep": {"alpha": alphas, "gamma": gammas}})
    from choicepa.theory import classify_regime
    got = {classify_regime(p["model"]["alpha"], p["model"]["gamma"]).value
           for p in cfgmod.sweep_points(cfg)}
    assert got == labels


def test_sweep_over_m_dist():
    cfg = cfgmod.resolve({"model": {"alpha": 0.5, "gamma": 0.5}, "run": {"horizon": 10},
                          "sweep": {"m_dist": [{"kind": "deterministic", "value": 2},
                                               {"kind": "zeta", "beta": 4.0}]}})
    points = cfgmod.sweep_points(cfg)
    assert [cfgmod.params_from(p).m_dist.kind for p in points] == ["deterministic", "zeta"]


def test_override_parsing():
    assert cfgmod.parse_override("model.alpha=0.7") == ("model", "alpha", 0.7)
    assert cfgmod.parse_override("model.sampler=naive") == ("model", "sampler", "naive")
    assert cfgmod.parse_override("run.k_list=[1,2]") == ("run", "k_list", [1, 2])
    with pytest.raises(ConfigError):
        cfgmod.parse_override("model.alpha")


def test_resolve_fills_defaults():
    cfg = cfgmod.resolve({"model": {"alpha": 0.5, "gamma": 0.5}, "run": {"horizon": 10}})
    assert cfg["model"]["c_d"] == 1.0 and cfg["m_dist"]["kind"] == "deterministic"
    assert cfg["run"]["k_list"] == [1, 2, 3] and "verify" not in cfg
    assert cfgmod.resolve(cfg) == cfg


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path, MINIMAL)
    res = subprocess.run([sys.executable, "-m", "choicepa", "predict", "--config", str(cfg), "--quiet"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert json.loads(res.stdout)["prediction"]["regime"] == "Critical"
