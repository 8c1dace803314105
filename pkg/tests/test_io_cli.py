import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from tubekit.cli import main
from tubekit.constructions import small_cap_configuration, standard_configuration
from tubekit.errors import SchemaError
from tubekit.io import (NotFoundError, check_family_dict, family_from_dict, family_to_dict, load_family,
                        load_json, save_family, validate_file)
from tubekit.xray import ball_set, dumps_vox


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def fam(tmp_path):
    p = tmp_path / "f.json"
    save_family(small_cap_configuration(2, 1 / 64, 64), p)
    return p


def test_family_roundtrip(fam):
    f = load_family(fam)
    g = family_from_dict(family_to_dict(f))
    assert np.array_equal(f.centers, g.centers) and np.array_equal(f.axes, g.axes)
    assert f.delta == g.delta and len(f) == 64


@pytest.mark.parametrize("doc,path", [
    ([], "$"),
    ({"n": 2, "delta": 0.1}, "$.tubes"),
    ({"n": 1, "delta": 0.1, "tubes": []}, "$.n"),
    ({"n": 2, "delta": -1, "tubes": []}, "$.delta"),
    ({"n": 2, "delta": 0.1, "c0": 2, "tubes": []}, "$.c0"),
    ({"n": 2, "delta": 0.1, "tubes": [{"center": [0, 0], "direction": [0, 0, 1]}]}, "$.tubes[0].direction"),
    ({"n": 2, "delta": 0.1, "tubes": [{"center": [0, 0], "direction": [0, 0]}]}, "$.tubes[0].direction"),
    ({"n": 2, "delta": 0.1, "tubes": [{"center": [0, "x"], "direction": [0, 1]}]}, "$.tubes[0].center"),
    ({"n": 2, "delta": 0.1, "tubes": [{"center": [0, 0], "direction": [0, 1], "height": 0}]},
     "$.tubes[0].height"),
])
def test_schema_violations(doc, path):
    assert check_family_dict(doc)["path"] == path
    with pytest.raises(SchemaError):
        family_from_dict(doc)


def test_dimension_message():
    bad = check_family_dict({"n": 3, "delta": 0.1,
                             "tubes": [{"center": [0, 0, 0], "direction": [0, 1]}]})
    assert bad["message"] == "direction has dimension 2, expected 3" and bad["tube"] == 0


def test_load_errors(tmp_path):
    with pytest.raises(NotFoundError):
        load_json(tmp_path / "missing.json")
    p = tmp_path / "bad.json"
    p.write_text('{"a":\n  1,,}')
    with pytest.raises(SchemaError) as ei:
        load_json(p)
    assert ei.value.details["line"] == 2


def test_validate_file(tmp_path, fam):
    assert validate_file(fam)["ok"]
    v = tmp_path / "e.vox"
    v.write_text(dumps_vox(ball_set(2, 0.3, 0.1)))
    assert validate_file(v)["ok"]
    b = tmp_path / "b.vox"
    b.write_text("VOX1 2 2 2 0.5 0 0\n10\n1x\n")
    r = validate_file(b)
    assert not r["ok"] and r["violation"]["line"] == 3


def test_cli_construct_and_volume(tmp_path, capsys):
    out = tmp_path / "f.json"
    code, text, _ = run(capsys, "construct", "--kind", "standard", "--n", "2", "--delta", "0.0625",
                        "--out", str(out))
    assert code == 0 and out.exists() and json.loads(text)["N"] == len(load_family(out))
    r1 = run(capsys, "volume", "--family", str(out), "--seed", "1", "--budget", "1e5")
    r2 = run(capsys, "volume", "--family", str(out), "--seed", "1", "--budget", "1e5", "--threads", "4")
    assert r1[0] == 0 and r1[1] == r2[1]
    assert set(json.loads(r1[1])) >= {"value", "abs_error_95", "samples"}


def test_cli_error_paths(tmp_path, capsys):
    code, _, err = run(capsys, "cindex", "--set", str(tmp_path / "missing.vox"))
    assert code == 1 and json.loads(err.splitlines()[0])["error"]["code"] == "io.not_found"
    code, _, err = run(capsys, "frobnicate")
    assert code == 2 and json.loads(err.splitlines()[0])["error"]["code"] == "usage"
    code, _, _ = run(capsys, "volume", "--family", "x", "--budget", "1.5")
    assert code == 2
    code, _, err = run(capsys, "construct", "--kind", "small_cap", "--n", "2", "--delta", "0.01")
    assert code == 1 and json.loads(err)["error"]["code"] == "domain.precondition"


def test_cli_csv_and_validate(tmp_path, fam, capsys):
    code, text, _ = run(capsys, "lemma53", "--random", "5", "--seed", "3", "--format", "csv")
    (row,) = list(csv.DictReader(io.StringIO(text)))
    assert code == 0 and row["violations"] == "0" and row["instances"] == "5"
    b = tmp_path / "b.vox"
    b.write_text("VOX1 2 1 1\n")
    code, text, _ = run(capsys, "validate", str(fam), str(b))
    assert code == 1 and json.loads(text)["files"][0]["ok"]


def test_cli_goodcfg_certificate(tmp_path, capsys):
    fam = tmp_path / "std.json"
    save_family(standard_configuration(2, 1 / 32), fam)
    code, text, _ = run(capsys, "goodcfg", "--family", str(fam))
    assert code == 0
    cert = tmp_path / "c.json"
    cert.write_text(json.dumps(json.loads(text)["certificate"]))
    code, text, _ = run(capsys, "goodcfg", "--family", str(fam), "--certificate", str(cert))
    assert code == 0 and json.loads(text)["accepted"]
    cert.write_text('{"O": [0, 0]}')
    code, _, err = run(capsys, "goodcfg", "--family", str(fam), "--certificate", str(cert))
    assert code == 1 and json.loads(err)["error"]["code"] == "io.schema"


def test_cli_lemma_instances(tmp_path, capsys):
    inst = tmp_path / "s.json"
    inst.write_text(json.dumps({"A": [[a] for a in range(10)], "B": [[b] for b in range(10)],
                                "G": [[[a], [b]] for a in range(10) for b in range(10) if a + b <= 9]}))
    code, text, _ = run(capsys, "lemma53", "--instance", str(inst))
    d = json.loads(text)
    assert code == 0 and d["lhs"] == 55 and d["M"] == 5 and d["witness"] == [0]
    code, text, _ = run(capsys, "lemma51", "--random", "3", "--cells", "40", "--universe", "16")
    assert code == 0 and json.loads(text)["all_verified"]


def test_console_script_runs():
    r = subprocess.run([sys.executable, "-m", "tubekit.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "tubekit" in r.stdout
