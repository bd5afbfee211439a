import csv
import io
import json
import math
import os

import pytest

from wavebend import cli

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIGS = os.path.join(ROOT, "configs")
GOLDEN = os.path.join(os.path.dirname(os.path.abspath(__file__)), "golden")


def run(argv):
    buf = io.StringIO()
    code = cli.run(argv, stdout=buf)
    return code, buf.getvalue()


def config(name):
    return os.path.join(CONFIGS, f"{name}.json")


def _close(a, b):
    try:
        x, y = float(a), float(b)
    except (TypeError, ValueError):
        return a == b
    if math.isnan(x) or math.isnan(y):
        return math.isnan(x) and math.isnan(y)
    return math.isclose(x, y, rel_tol=1e-9, abs_tol=1e-12)


def _same_json(a, b):
    if isinstance(a, dict):
        return isinstance(b, dict) and a.keys() == b.keys() and all(_same_json(a[k], b[k]) for k in a)
    if isinstance(a, list):
        return isinstance(b, list) and len(a) == len(b) and all(map(_same_json, a, b))
    if isinstance(a, bool) or a is None or isinstance(a, str):
        return a == b
    return _close(a, b)


def _same_csv(a, b):
    ra, rb = list(csv.reader(io.StringIO(a))), list(csv.reader(io.StringIO(b)))
    return len(ra) == len(rb) and all(len(x) == len(y) and all(map(_close, x, y)) for x, y in zip(ra, rb))


@pytest.mark.parametrize("fmt", ["csv", "json"])
@pytest.mark.parametrize("command", cli.COMMANDS)
def test_golden(command, fmt, update_golden):
    code, out = run([command, "--config", config(command), "--format", fmt])
    assert code == 0
    path = os.path.join(GOLDEN, f"{command}.{fmt}")
    if update_golden:
        os.makedirs(GOLDEN, exist_ok=True)
        with open(path, "w", newline="") as f:
            f.write(out)
        pytest.skip("golden file updated")
    with open(path, newline="") as f:
        ref = f.read()
    if fmt == "json":
        assert _same_json(json.loads(out), json.loads(ref))
    else:
        assert _same_csv(out, ref)
        assert out.endswith("\n") and "\r" not in out


def test_repeat_runs_identical(tmp_path):
    outs = []
    for i in range(2):
        path = tmp_path / f"out{i}.csv"
        assert cli.run(["tamm", "--config", config("tamm"), "--out", str(path)]) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1] and len(outs[0]) > 0


def test_free_lattice_bands_has_only_touching_gaps():
    code, out = run(["bands", "--config", config("bands_free")])
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    gaps = [r for r in rows if r["kind"] == "gap"]
    assert all(float(r["width"]) < 1e-9 for r in gaps)


def test_bsec_default_matches_construction():
    code, out = run(["bsec", "--config", config("bsec"), "--format", "json"])
    doc = json.loads(out)
    assert code == 0 and doc["passed"]
    assert doc["params"]["g0"] == pytest.approx(1 / (1 + math.exp(-math.pi)), rel=1e-15)


def test_transparent_overrides():
    code, out = run(["transparent", "--config", config("transparent"), "--variant", "b", "--energies", "0.3,1,5"])
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [float(r["E"]) for r in rows] == [0.3, 1.0, 5.0]
    assert all(r["pass"] == "true" for r in rows)


def _write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj) if not isinstance(obj, str) else obj)
    return str(p)


def test_config_errors_exit_one(tmp_path, capsys):
    comb = {"type": "builtin", "name": "dirac_comb", "args": {"g": 2, "a": "pi"}}
    cases = [
        {"schema": 1, "spec": comb, "bogus": 1},
        {"schema": 2, "spec": comb},
        {"spec": comb},
        {"schema": 1, "spec": {"type": "lattice", "period": 2, "cell": [{"kind": "const", "width": 1}]}},
        {"schema": 1, "spec": comb, "emin": 5, "emax": 1},
        {"schema": 1, "spec": {"type": "builtin", "name": "nope"}},
        {"schema": 1, "spec": "missing.json"},
    ]
    for cfg in cases:
        assert cli.run(["bands", "--config", _write(tmp_path, cfg)], stdout=io.StringIO()) == 1
    assert cli.run(["bands", "--config", _write(tmp_path, "{not json")], stdout=io.StringIO()) == 1
    assert cli.run(["bands", "--config", str(tmp_path / "absent.json")], stdout=io.StringIO()) == 1
    assert cli.run(["bands"], stdout=io.StringIO()) == 1
    assert cli.run(["frobnicate", "--config", config("bands")], stdout=io.StringIO()) == 1
    err = capsys.readouterr().err
    assert "period mismatch" in err and "unknown field(s) bogus" in err


def test_numeric_errors_exit_two(tmp_path, capsys):
    comb = {"type": "builtin", "name": "dirac_comb", "args": {"g": 2, "a": "pi"}}
    beats = _write(tmp_path, {"schema": 1, "spec": comb, "energies": [1.5]})
    assert cli.run(["beats", "--config", beats], stdout=io.StringIO()) == 2
    assert "NotAGap" in capsys.readouterr().err
    scat = _write(tmp_path, {"schema": 1, "spec": {"type": "builtin", "name": "soliton"}, "energies": [-1]})
    assert cli.run(["scatter", "--config", scat], stdout=io.StringIO()) == 2
    assert "NoOpenChannels" in capsys.readouterr().err


def test_numbers():
    assert cli.number("pi") == math.pi
    assert cli.number("2*pi") == 2 * math.pi
    assert cli.number("-pi/2") == -math.pi / 2
    assert cli.number("0.5pi") == 0.5 * math.pi
    assert cli.number("1e-3") == 1e-3
    with pytest.raises(cli.ConfigError):
        cli.number("tau")
    with pytest.raises(cli.ConfigError):
        cli.number(True)


def test_output_format():
    assert cli.to_csv(["a", "b"], [{"a": 0.1, "b": -0.0}]) == "a,b\n0.10000000000000001,0\n"
    assert cli.to_json({"b": float("nan"), "a": [1, True]}) == '{\n  "a": [\n    1,\n    true\n  ],\n  "b": null\n}\n'


def test_out_file(tmp_path):
    path = tmp_path / "bands.json"
    assert cli.run(["bands", "--config", config("bands"), "--format", "json", "--out", str(path)]) == 0
    assert json.loads(path.read_text())["zones"][0]["kind"] == "gap"
