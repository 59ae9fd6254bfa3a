import csv
import hashlib
import json
import math
import os

import pytest

from gltau.cli import KINDS, ConfigError, load_config, main
from oracles import free_unitary_second_moment, unitary_second_moment


def _write(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def _run(capsys, argv):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def _ok(capsys, argv):
    code, out, err = _run(capsys, argv)
    assert code == 0, err
    return json.loads(out.strip().splitlines()[-1])


def _rows(directory, name):
    with open(os.path.join(directory, name), newline="") as fh:
        return list(csv.DictReader(fh))


MOMENTS = {"kind": "moments", "model": {"lambda": 1, "tau": 0}, "sizes": {"N": [8, "inf"], "t": [0, 1]},
           "polynomial": "tr(g1 g1)", "seed": 3}


def test_moments_closed_form(tmp_path, capsys):
    res = _ok(capsys, ["moments", "--config", _write(tmp_path, MOMENTS), "--out", str(tmp_path / "runs")])
    rows = _rows(res["directory"], "moments.csv")
    assert list(rows[0]) == ["N", "t", "re_value", "im_value", "method"]
    got = {(r["N"], float(r["t"])): complex(float(r["re_value"]), float(r["im_value"])) for r in rows}
    assert abs(got[("8", 1.0)] - unitary_second_moment(8, 1.0)) < 1e-10
    assert abs(got[("inf", 1.0)] - free_unitary_second_moment(1.0)) < 1e-10
    assert got[("8", 0.0)] == 1 and got[("inf", 0.0)] == 1


def test_manifest_digests_and_byte_identical_reruns(tmp_path, capsys):
    cfg = {"kind": "compare", "model": {"lambda": 1, "tau": [0.5, 0.3]}, "sizes": {"N": [4], "t": [0.5], "dt": 0.05},
           "polynomial": "tr(g1 g1*) + tr(g1)*tr(g1^-1)", "replicas": 40, "seed": 3}
    path = _write(tmp_path, cfg)
    a = _ok(capsys, ["compare", "--config", path, "--out", str(tmp_path / "a"), "--workers", "1"])
    b = _ok(capsys, ["compare", "--config", path, "--out", str(tmp_path / "a"), "--workers", "3"])
    assert a["directory"] != b["directory"]
    manifest = json.loads(open(os.path.join(a["directory"], "manifest.json")).read())
    assert manifest["seeds"] and manifest["config"]["kind"] == "compare"
    for entry in manifest["files"]:
        data = open(os.path.join(a["directory"], entry["name"]), "rb").read()
        assert hashlib.sha256(data).hexdigest() == entry["sha256"]
        assert data == open(os.path.join(b["directory"], entry["name"]), "rb").read()
    c = _ok(capsys, ["compare", "--config", path, "--out", str(tmp_path / "c"), "--seed", "4"])
    assert open(os.path.join(c["directory"], "compare.csv")).read() != open(
        os.path.join(a["directory"], "compare.csv")).read()


def test_dry_run_predicts_without_writing(tmp_path, capsys):
    out = tmp_path / "never"
    cfg = dict(MOMENTS, sizes={"N": [8], "d": 4, "p": 1})
    code, text, _ = _run(capsys, ["moments", "--config", _write(tmp_path, cfg), "--out", str(out), "--dry-run"])
    assert code == 0 and not out.exists()
    pred = json.loads(text)
    assert pred["basis_dimension"] == 465 and pred["fits"]
    sim = {"kind": "simulate", "model": {"a": 1, "b": 0.5, "theta": 0.2}, "sizes": {"N": [4, 8], "t": [1]},
           "polynomial": "tr(g1)", "replicas": 10}
    code, text, _ = _run(capsys, ["simulate", "--config", _write(tmp_path, sim), "--dry-run"])
    assert code == 0 and json.loads(text)["replica_count"] == 20


@pytest.mark.parametrize("data,reason", [
    ({"kind": "moments"}, "model"),
    ({**MOMENTS, "polynomial": "tr(g1 q2)"}, "line 1, column 7"),
    ({**MOMENTS, "model": {"lambda": 1, "tau": 3}}, "exceeds"),
    ({**MOMENTS, "model": {"lambda": 1, "tau": 0, "a": 1}}, "model"),
])
def test_config_errors_exit_2(tmp_path, capsys, data, reason):
    code, _, err = _run(capsys, ["moments", "--config", _write(tmp_path, data)])
    line = json.loads(err.strip())
    assert code == 2 and line["exit_code"] == 2 and line["status"] == "error"
    assert reason in line["reason"]


def test_malformed_and_missing_files_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"kind": ')
    assert _run(capsys, ["moments", "--config", str(bad)])[0] == 2
    assert _run(capsys, ["moments", "--config", str(tmp_path / "missing.json")])[0] == 2


def test_numerical_error_exit_3(tmp_path, capsys):
    cfg = {"kind": "simulate", "model": {"lambda": 4, "tau": 0}, "sizes": {"N": [8], "t": [50], "dt": 0.5},
           "polynomial": "tr(g1)", "replicas": 1, "seed": 1, "scheme": "ito-euler"}
    code, _, err = _run(capsys, ["simulate", "--config", _write(tmp_path, cfg), "--out", str(tmp_path)])
    assert code == 3 and json.loads(err)["class"] == "numerical"


def test_resource_error_exit_4(tmp_path, capsys):
    cfg = dict(MOMENTS, sizes={"N": [4], "d": 12, "p": 1}, polynomial="tr(g1)")
    code, _, err = _run(capsys, ["moments", "--config", _write(tmp_path, cfg), "--out", str(tmp_path)])
    assert code == 4 and json.loads(err)["class"] == "resource"


def test_output_directory_precedence(tmp_path, monkeypatch):
    monkeypatch.setenv("GLTAU_OUT", str(tmp_path / "env"))
    assert load_config(MOMENTS).output_dir == str(tmp_path / "env")
    assert load_config({**MOMENTS, "output_dir": "cfgdir"}).output_dir == "cfgdir"
    assert load_config({**MOMENTS, "output_dir": "cfgdir"}, out="flag").output_dir == "flag"
    monkeypatch.delenv("GLTAU_OUT")
    assert load_config(MOMENTS).output_dir == "gltau-runs"


def test_flags_override_config():
    cfg = load_config(MOMENTS, seed=99, workers=2)
    assert cfg.seed == 99 and cfg.workers == 2
    with pytest.raises(ConfigError):
        load_config(MOMENTS, kind="simulate")
    with pytest.raises(ConfigError):
        load_config({**MOMENTS, "kind": "simulate", "sizes": {"N": ["inf"], "t": [1]}, "replicas": 2})


@pytest.mark.parametrize("kind,cfg,table", [
    ("simulate", {"model": {"a": 1, "b": 0.5, "theta": 0.2, "sigmas": [1, 2]}, "sizes": {"N": [4], "t": [0.5, 1]},
                  "polynomial": "tr(g1 g2^-1) + tr(a1 g2*)", "replicas": 2, "seed": 1, "deterministic": "signs",
                  "save_matrices": True}, "values.csv"),
    ("variance-scan", {"model": {"lambda": 1, "tau": 1}, "sizes": {"N": [2, 3, 4], "t": 0.3, "dt": 0.05},
                       "polynomial": "g1 + g1*", "replicas": 20, "seed": 1,
                       "function": {"kind": "mollified-indicator", "support": [[-1, 9]], "delta": 0.5}},
     "variances.csv"),
    ("convergence-scan", {"model": {"lambda": 1, "tau": 0}, "sizes": {"N": [8, 16, 32], "t": [1]},
                          "polynomial": "tr(g1 g1)"}, "gaps.csv"),
    ("spectrum-check", {"model": {"lambda": 1, "tau": 0}, "sizes": {"N": [4, 8], "t": 1}, "polynomial": "g1",
                        "trials": 2, "delta": 0.1, "seed": 1}, "inclusion.csv"),
    ("hs-check", {"model": {"lambda": 1, "tau": 1}, "sizes": {"N": [4], "t": 0.3}, "polynomial": "g1",
                  "replicas": 1, "seed": 1, "function": {"kind": "bump", "center": 1, "width": 1}}, "hs.csv"),
    ("bracket-check", {"model": {"lambda": 1, "tau": [0.5, 0.3]}, "sizes": {"N": [4], "dt": 0.001},
                       "replicas": 50, "seed": 1, "cells": [["X", "X*"]]}, "bracket.csv"),
])
def test_every_kind_runs(tmp_path, capsys, kind, cfg, table):
    res = _ok(capsys, [kind, "--config", _write(tmp_path, {"kind": kind, **cfg}), "--out", str(tmp_path)])
    assert table in res["files"] and "manifest.json" in os.listdir(res["directory"])
    assert os.path.basename(res["directory"]).startswith(kind + "-")
    assert _rows(res["directory"], table)


def test_kinds_are_complete():
    assert set(KINDS) == {"simulate", "moments", "compare", "variance-scan", "convergence-scan", "spectrum-check",
                          "hs-check", "bracket-check"}
