import csv
import json
import math
import subprocess
import sys

import pytest

from homarea.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    report = json.loads(out.out) if out.out.strip() else None
    return code, report, out.err


def test_validate_fixture(capsys):
    code, rep, _ = run(capsys, "validate", "--group", "heisenberg1", "--couple", "W=vertical", "V=horizontal")
    assert code == 0
    assert rep["pass"] and rep["results"]["couple"]["layer_table"] == [[1, 1], [1, 0]]
    assert rep["config"]["group"] == "heisenberg1"


def test_validate_malformed_json(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"layers": [2, 1],\n  "brackets": [}\n')
    code, rep, err = run(capsys, "validate", "--group", str(path))
    assert code == 2 and rep is None
    assert "line 2" in err and "column" in err


def test_validate_non_graded_subgroup(tmp_path, capsys):
    path = tmp_path / "g.json"
    path.write_text(json.dumps({
        "layers": [2, 1],
        "brackets": [{"i": 1, "j": 2, "k": 3, "c": 1.0}],
        "subgroups": {"mixed": [[0, 1, 0], [1, 0, 1]]},
    }))
    code, rep, _ = run(capsys, "validate", "--group", str(path), "--couple", "W=mixed", "V=horizontal")
    assert code == 1
    viol = rep["results"]["subgroup_W"]["violations"][0]
    assert viol["kind"] == "graded" and viol["vector"] == 1


def test_project(capsys):
    code, rep, _ = run(capsys, "project", "--point", "1,2,3")
    assert code == 0
    assert rep["results"]["w"] == pytest.approx([0, 2, 4])
    assert rep["results"]["v"] == pytest.approx([1, 0, 0])


@pytest.mark.parametrize("phi,at,expected", [
    ("zero", "0,0,0", 1.0),
    ("linear:1", "0,1,0", math.sqrt(2)),
    ("parabola", "0,1,0", math.sqrt(5)),
])
def test_jacobian(capsys, phi, at, expected):
    code, rep, _ = run(capsys, "jacobian", "--phi", phi, "--at", at, "--seed", "1")
    assert code == 0
    res = rep["results"]
    assert res["wedge"] == pytest.approx(expected, abs=1e-9)
    assert res["minors"] == pytest.approx(expected, abs=1e-9)
    mc = res["monte_carlo"]
    assert abs(mc["value"] - expected) <= 3 * mc["std_error"]


def test_missing_seed_is_usage_error(capsys):
    for cmd in ("jacobian", "blowup", "area"):
        with pytest.raises(SystemExit) as exc:
            main([cmd, "--phi", "zero"])
        assert exc.value.code == 2
    capsys.readouterr()


def test_bad_inputs_exit_2(capsys):
    assert main(["project", "--point", "1,2"]) == 2
    assert main(["jacobian", "--phi", "cubic", "--seed", "0"]) == 2
    assert main(["level-set", "--f", "sin(x)"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["jacobian", "--seed", "0", "--samples", "-5"])
    assert exc.value.code == 2
    capsys.readouterr()


def test_spherical_factor(capsys, tmp_path):
    out = tmp_path / "sf.json"
    code, _, _ = run(capsys, "spherical-factor", "--subspace", "vertical", "--dist", "dinf",
                     "--samples", "250000", "--out", str(out))
    assert code == 0
    res = json.loads(out.read_text())["results"]
    assert abs(res["value"] - 4.0) <= max(res["error"], res["center_error"])


def test_blowup_writes_csv(capsys, tmp_path):
    table = tmp_path / "t.csv"
    code, rep, _ = run(capsys, "blowup", "--phi", "zero", "--point", "0,0,0", "--dist", "dinf",
                       "--seed", "3", "--samples", "8192", "--csv", str(table))
    assert code == 0
    assert rep["results"]["relative_gap"] <= 0.10
    rows = list(csv.reader(table.open()))
    assert rows[0] == ["t", "value", "std_error"]
    assert len(rows) == 1 + len(rep["results"]["t_schedule"])


def test_level_set(capsys):
    code, rep, _ = run(capsys, "level-set", "--f", "x+y^2", "--at", "0,1,0")
    assert code == 0
    res = rep["results"]
    assert res["ratio"] == pytest.approx(math.sqrt(5), abs=1e-6)
    assert res["minors"] == pytest.approx(math.sqrt(5), abs=1e-4)
    assert res["phi"] == pytest.approx([-1, 0, 0], abs=1e-12)


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "homarea", "project", "--point", "0,0,1"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["pass"] is True
