import csv
import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from halfline_weyl import serialize
from halfline_weyl._parallel import pmap, worker_count
from halfline_weyl.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def run(tmp_path, name, *extra):
    out = tmp_path / name
    code = main(["run", "--config", str(CONFIGS / f"{name}.toml"), "--out", str(out), *extra])
    return code, out


def results(out):
    return json.loads((out / "results.json").read_text())


def test_eigs_example(tmp_path):
    code, out = run(tmp_path, "eigs_harmonic")
    assert code == 0
    res = results(out)
    assert res["task"] == "eigs" and res["diagnostics"]["status"] == 0
    rows = list(csv.DictReader(open(out / "eigenvalues.csv")))
    got = sorted(float(r["re"]) for r in rows)
    assert got == pytest.approx([3, 7, 11], abs=1e-6)


def test_weyl_example(tmp_path):
    code, out = run(tmp_path, "weyl_constant")
    assert code == 0
    mu = results(out)["results"]["weyl"]["mu"]
    assert complex(*mu) == pytest.approx(-1, abs=1e-9)
    radii = [float(r["radius"]) for r in csv.DictReader(open(out / "disks.csv"))]
    assert all(b <= a for a, b in zip(radii, radii[1:]))
    assert (out / "eta.csv").exists()


def test_precondition_exit(tmp_path):
    code, out = run(tmp_path, "check_a_fail")
    assert code == 3
    assert results(out)["diagnostics"]["status"] == 3


@pytest.mark.parametrize("name", ["region_airy", "bounds_constant", "resolvent_harmonic",
                                  "oracle_harmonic"])
def test_other_examples(tmp_path, name):
    code, out = run(tmp_path, name)
    assert code == 0
    assert results(out)["diagnostics"]["status"] == 0


def test_json_round_trip(tmp_path):
    _, out = run(tmp_path, "weyl_constant")
    text = (out / "results.json").read_text()
    assert serialize.dumps(serialize.loads(text)) == text


def test_determinism(tmp_path):
    _, a = run(tmp_path / "a", "eigs_harmonic")
    _, b = run(tmp_path / "b", "eigs_harmonic")
    for f in ("results.json", "eigenvalues.csv"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_serialize_values():
    text = serialize.dumps({"b": 1 + 2j, "a": [1.0, float("nan")], "c": 3})
    assert text.index('"a"') < text.index('"b"')
    back = serialize.loads(text)
    assert back["b"] == [1.0, 2.0] and back["a"] == [1.0, "nan"] and back["c"] == 3
    with pytest.raises(TypeError):
        serialize.dumps({"x": object()})


def test_validate(capsys):
    assert main(["validate", "--config", str(CONFIGS / "eigs_airy.toml")]) == 0
    assert "ok" in capsys.readouterr().out


@pytest.mark.parametrize("body", [
    'task = "nope"\n[potential]\nfamily = "constant"\nc = 1.0\n',
    'task = "weyl"\n[potential]\nfamily = "quartic"\n',
    'task = "weyl"\n[potential]\nfamily = "constant"\nc = 1.0\n[numerics]\ntol = -1.0\n',
    'task = "weyl"\n[potential]\nfamily = "constant"\nc = "one"\n',
    'task = [\n',
])
def test_config_errors(tmp_path, body):
    p = tmp_path / "bad.toml"
    p.write_text(body)
    assert main(["validate", "--config", str(p)]) == 1
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 1


def test_missing_config(tmp_path):
    assert main(["validate", "--config", str(tmp_path / "absent.toml")]) == 1


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("HALFLINE_WEYL_THREADS", "1")
    assert worker_count() == 1
    monkeypatch.setenv("HALFLINE_WEYL_THREADS", "3")
    assert worker_count() == 3
    assert pmap(lambda v: v * v, range(10)) == [v * v for v in range(10)]


def test_module_entry(tmp_path):
    env = dict(os.environ, HALFLINE_WEYL_THREADS="1")
    r = subprocess.run([sys.executable, "-m", "halfline_weyl", "validate", "--config",
                        str(CONFIGS / "weyl_constant.toml")], capture_output=True, text=True,
                       env=env)
    assert r.returncode == 0, r.stderr
