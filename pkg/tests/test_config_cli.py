import csv
import json
import shutil
import subprocess
import sys

import pytest

from carnot_hconv.cli import EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_OK, main
from carnot_hconv.config import apply_override, parse_config, parse_probes, resolve
from carnot_hconv.errors import ConfigError

SMALL_HCONV = """
task = "hconv"
seed = 1
group = "euclidean:2"

[grid]
shape = 17

[operator]
p = 2.0
coefficient = "laminate:1,4"

[hconv]
scales = [1, 2, 4]
reference = "none"

[membership]
samples = 100
"""

IDENTITY = """
task = "check-class"
seed = 7
group = "heisenberg1"

[grid]
shape = 5

[operator]
kind = "identity"
p = 2.0

[membership]
samples = 2000
"""

SOLVE = """
task = "solve"
group = "heisenberg1"

[grid]
shape = 7

[operator]
p = 4.0
"""


def write(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def run(tmp_path, text, *extra, stem="report"):
    out = tmp_path / f"{stem}.json"
    code = main(["run", "--config", write(tmp_path, text), "--out", str(out), *extra])
    return code, (json.loads(out.read_text()) if out.exists() else None)


def test_check_class_identity(tmp_path, capsys):
    code, rep = run(tmp_path, IDENTITY)
    assert code == EXIT_OK
    m = rep["result"]["membership"]
    assert m["empirical_alpha"] == pytest.approx(1.0, abs=1e-12)
    assert m["violations"] == 0
    assert rep["task"] == "check-class" and rep["config"]["kernel_backend"] in ("numba", "numpy")
    assert "check-class:" in capsys.readouterr().out


def test_missing_p_names_the_key(tmp_path, capsys):
    code, rep = run(tmp_path, SOLVE.replace("p = 4.0", ""))
    assert code == EXIT_CONFIG and rep is None
    assert "operator.p" in capsys.readouterr().err


def test_unknown_keys_are_listed(tmp_path, capsys):
    code, _ = run(tmp_path, SOLVE + "\n[solver]\ntoll = 1e-8\nmaxiter = 3\n")
    assert code == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "solver.maxiter" in err and "solver.toll" in err


def test_malformed_number_reports_position(tmp_path, capsys):
    code, _ = run(tmp_path, SOLVE.replace("p = 4.0", "p = 4.0.1"))
    assert code == EXIT_CONFIG
    assert "line" in capsys.readouterr().err


def test_missing_seed_for_sampling_task(tmp_path, capsys):
    code, _ = run(tmp_path, IDENTITY.replace("seed = 7", ""))
    assert code == EXIT_CONFIG
    assert "seed" in capsys.readouterr().err
    code, rep = run(tmp_path, IDENTITY.replace("seed = 7", ""), "--seed", "7")
    assert code == EXIT_OK and rep["config"]["seed"] == 7


def test_missing_config_file(tmp_path, capsys):
    assert main(["solve", "--config", str(tmp_path / "nope.toml"), "--out", str(tmp_path / "r.json")]) == EXIT_CONFIG


def test_solve_with_field_dump(tmp_path):
    code, rep = run(tmp_path, SOLVE, "--dump-field", "csv")
    assert code == EXIT_OK
    assert rep["result"]["solve"]["converged"]
    assert rep["result"]["apriori"]["solution_ok"]
    with open(tmp_path / "report.field.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x1", "x2", "x3", "value"]
    assert len(rows) == 1 + 7**3


def test_nonconvergence_exit_code(tmp_path):
    code, rep = run(tmp_path, SOLVE, "--set", "solver.max_iter=1")
    assert code == EXIT_NONCONVERGED
    assert rep["result"]["solve"]["converged"] is False


def test_hconv_series(tmp_path):
    code, rep = run(tmp_path, SMALL_HCONV)
    assert code == EXIT_OK
    assert [r["scale"] for r in rep["result"]["hconv"]["scales"]] == [1, 2, 4]
    with open(tmp_path / "report.series.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["scale", "k", "pairing"]
    assert sorted({r[0] for r in rows[1:]}) == ["1", "2", "4"]


def test_overrides_last_wins(tmp_path):
    code, rep = run(tmp_path, SMALL_HCONV, "--set", "hconv.scales=[1,2]", "--set", "hconv.scales=[1,2,4,8]")
    assert code == EXIT_OK
    assert rep["config"]["hconv"]["scales"] == [1, 2, 4, 8]
    assert len(rep["result"]["hconv"]["scales"]) == 4


def test_subcommand_overrides_task(tmp_path):
    out = tmp_path / "r.json"
    code = main(["divcurl", "--config", write(tmp_path, SMALL_HCONV), "--out", str(out)])
    assert code == EXIT_OK
    assert json.loads(out.read_text())["task"] == "divcurl"


def test_effective_probes_flag(tmp_path):
    text = SMALL_HCONV.replace("shape = 17", "shape = 33")
    out = tmp_path / "r.json"
    code = main(["effective", "--config", write(tmp_path, text), "--out", str(out), "--probes", "1,0;0,1"])
    assert code == EXIT_OK
    rep = json.loads(out.read_text())
    assert len(rep["result"]["estimates"]) == 2
    assert "membership" in rep["result"]


def test_reports_deterministic_modulo_timing(tmp_path):
    _, a = run(tmp_path, SMALL_HCONV, stem="a")
    _, b = run(tmp_path, SMALL_HCONV, stem="b")
    a.pop("timing"), b.pop("timing")
    assert a == b


def test_parse_helpers():
    data = parse_config('group = "euclidean:2"\n[grid]\nshape = 9\n')
    data = apply_override(data, "operator.p=3")
    assert data["operator"]["p"] == 3
    data = apply_override(data, "operator.coefficient=laminate:1,2")
    assert data["operator"]["coefficient"] == "laminate:1,2"
    r = resolve(data, "solve")
    assert r.spec.p == 3.0 and r.grid.shape == (9, 9)
    with pytest.raises(ConfigError):
        apply_override(data, "operator.q=1")
    with pytest.raises(ConfigError):
        apply_override(data, "novalue")
    assert parse_probes("1,0; 0,2", 2) == [[1.0, 0.0], [0.0, 2.0]]
    with pytest.raises(ConfigError):
        parse_probes("1,0,0", 2)


@pytest.mark.skipif(shutil.which("carnot-hconv") is None, reason="console script not installed")
def test_console_script(tmp_path):
    cfg = write(tmp_path, IDENTITY)
    proc = subprocess.run(["carnot-hconv", "check-class", "--config", cfg, "--out", str(tmp_path / "r.json")],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "carnot_hconv", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "carnot-hconv" in proc.stdout
