import json
import subprocess
import sys
from importlib import resources

import pytest

from asymkam.cli import main
from asymkam.scenario import bundled_scenarios


def bundled(name):
    return json.loads(resources.files("asymkam").joinpath("scenarios", f"{name}.json").read_text())


def run(tmp_path, *args):
    out = tmp_path / "out"
    code = main([*args, "--out", str(out)])
    summary = json.loads((out / "summary.json").read_text()) if (out / "summary.json").exists() else None
    return code, out, summary


def write_scn(tmp_path, rec, name="scn.json"):
    path = tmp_path / name
    path.write_text(json.dumps(rec))
    return str(path)


@pytest.mark.parametrize("name", bundled_scenarios())
def test_bundled_scenarios_pass(tmp_path, name):
    code, out, summary = run(tmp_path, "run", name)
    assert code == 0, [c for c in summary["checks"] if not c["passed"]]
    assert summary["passed"] and summary["checks"]
    assert list((out / "curves").glob("*.csv"))
    assert {p.stem for p in (out / "plots").glob("*.svg")} == {p.stem for p in (out / "curves").glob("*.csv")}


def test_solve_summary_fields(tmp_path):
    code, out, s = run(tmp_path, "solve", "exp-model")
    assert code == 0
    solve = s["solve"]
    for key in ("status", "iterations", "residual", "ratios", "C_u", "C_v", "upsilon_prime", "Lambda"):
        assert key in solve
    assert solve["residual"] < 1e-8 and solve["iterations"] <= 15
    assert (out / "curves" / "residual.csv").exists()


def test_check_decay(tmp_path):
    code, _, s = run(tmp_path, "check-decay", "exp-model")
    assert code == 0 and s["decay"]["holds"]
    rec = bundled("exp-model")
    rec["hamiltonian"]["b_envelope"] = {"kind": "exponential", "rate": 3.0}
    code, _, s = run(tmp_path, "check-decay", write_scn(tmp_path, rec))
    assert code == 1 and not s["decay"]["holds"]


def test_counterexample_command(tmp_path):
    code, out, s = run(tmp_path, "counterexample", "counterexample")
    assert code == 0
    assert "divergent" in s["verdict"]
    names = {c["check"] for c in s["checks"]}
    assert {"rejects_non_integrable", "counterexample_match", "counterexample_diverges"} <= names


def test_failed_check_exits_1(tmp_path):
    rec = bundled("unperturbed")
    rec["verify"] = [{"check": "residual", "max": -1.0}]
    code, _, s = run(tmp_path, "verify", write_scn(tmp_path, rec))
    assert code == 1 and not s["passed"]


def test_input_errors_exit_2(tmp_path, capsys):
    assert main(["solve", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 2
    assert main(["solve", "exp-model", "--nodes", "3", "--out", str(tmp_path / "o")]) == 2
    bad = write_scn(tmp_path, {"name": "x", "dim": 1})
    assert main(["solve", bad, "--out", str(tmp_path / "o")]) == 2
    rec = bundled("unperturbed")
    rec["verify"] = [{"check": "nonsense"}]
    assert main(["verify", write_scn(tmp_path, rec), "--out", str(tmp_path / "o")]) == 2
    assert "input error" in capsys.readouterr().err
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2


def test_numerical_failure_exits_3(tmp_path, capsys):
    rec = bundled("exp-model")
    rec["solver"].update(max_iter=1, max_escalations=0)
    code = main(["solve", write_scn(tmp_path, rec), "--out", str(tmp_path / "o")])
    assert code == 3
    assert "numerical failure" in capsys.readouterr().err


def test_overrides_and_json(tmp_path, capsys):
    code = main(["solve", "exp-model", "--band", "12", "--nodes", "150", "--tol", "1e-7",
                 "--seed", "3", "--json", "--out", str(tmp_path / "o")])
    assert code == 0
    s = json.loads(capsys.readouterr().out)
    assert s["solve"]["residual"] < 1e-7
    assert s["solver"]["band"] == 12 and s["solver"]["nodes"] == 150 and s["seed"] == 3


def test_reproducible_outputs(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    for d in (a, b):
        assert main(["verify", "torus-field", "--out", str(d)]) == 0
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert files
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes(), f


def test_report(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["solve", "torus-field", "--out", str(out)]) == 0
    for svg in (out / "plots").glob("*.svg"):
        svg.unlink()
    capsys.readouterr()
    assert main(["report", str(out)]) == 0
    assert "PASS" in capsys.readouterr().out
    assert list((out / "plots").glob("*.svg"))
    assert main(["report", str(tmp_path / "nowhere")]) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "asymkam", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("check-decay", "solve", "verify", "counterexample", "report"):
        assert cmd in res.stdout
