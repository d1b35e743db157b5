import csv
import json
from pathlib import Path

import numpy as np
import pytest

from ks_orbits import cli

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write_config(tmp_path, **solver):
    text = (CONFIGS / "desk_e0.ini").read_text()
    for key, value in solver.items():
        lines = [f"{key} = {value}" if ln.startswith(f"{key} =") else ln for ln in text.splitlines()]
        text = "\n".join(lines) + "\n"
    text = text.replace("db = orbits_e0.jsonl", f"db = {tmp_path / 'db.jsonl'}")
    text = text.replace("report = validation_e0.json", f"report = {tmp_path / 'report.json'}")
    path = tmp_path / "run.ini"
    path.write_text(text)
    return path


def test_load_shipped_configs():
    cfg = cli.load_config(CONFIGS / "desk_e0.ini")
    assert cfg.k_list == [9, 10, 11] and cfg.l_target == 3 and cfg.e0 == 0.0
    cfg5 = cli.load_config(CONFIGS / "desk_e05.ini")
    assert cfg5.e0 == 0.5 and cfg5.k_list == [26, 27, 28]


@pytest.mark.parametrize("key,value", [("eps", "0.5"), ("l_target", "0"), ("k_list", "")])
def test_bad_config_values(tmp_path, key, value):
    with pytest.raises(cli.ConfigError):
        cli.load_config(write_config(tmp_path, **{key: value}))


def test_missing_config(tmp_path):
    with pytest.raises(cli.ConfigError):
        cli.load_config(tmp_path / "nope.ini")


def test_lift_command(tmp_path, capsys):
    out = tmp_path / "lift.csv"
    assert cli.main(["lift", str(CONFIGS / "lift_circle.json"), str(out)]) == cli.EXIT_OK
    rows = list(csv.reader(open(out)))
    assert rows[0] == ["t", "G0", "G1", "G2", "G3", "fiber_residual", "horiz_residual"]
    data = np.array(rows[1:], dtype=float)
    assert data[:, 5].max() < 1e-8 and data[:, 6].max() < 1e-8
    angle = float(capsys.readouterr().out.split(":")[1].split()[0])
    assert angle == pytest.approx(-np.pi * (1 - np.cos(1.0)), abs=1e-7)


def test_lift_malformed_input(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"samples": []}))
    assert cli.main(["lift", str(bad), str(tmp_path / "o.csv")]) == cli.EXIT_INPUT


def test_lift_without_free_pole(tmp_path):
    # the pole search samples bin midpoints; put every candidate pole on one
    from ks_orbits.pathlift import ICOSPHERE

    n = 256
    t = np.concatenate([[0.0], (np.arange(n) + 0.5) / n, [1.0]])
    pts = np.vstack([ICOSPHERE[:1], ICOSPHERE[np.arange(n) % len(ICOSPHERE)], ICOSPHERE[:1]])
    doc = {"partition": [0.0, 1.0],
           "samples": [{"t": a, "gamma": list(b), "gamma_dot": [0.0, 0.0, 0.0]} for a, b in zip(t, pts)]}
    path = tmp_path / "dense.json"
    path.write_text(json.dumps(doc))
    assert cli.main(["lift", str(path), str(tmp_path / "o.csv")]) == cli.EXIT_POLE


@pytest.fixture(scope="module")
def found_db(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("find")
    cfg = write_config(tmp, k_list="2", l_target="1")
    code = cli.main(["find", "--config", str(cfg), "--workers", "1"])
    return code, cfg, tmp / "db.jsonl"


def test_find_writes_db(found_db):
    code, _, db = found_db
    assert code == cli.EXIT_OK
    lines = db.read_text().splitlines()
    assert len(lines) == 1 and json.loads(lines[0])["k"] == 2


def test_find_target_not_reached(tmp_path, capsys):
    cfg = write_config(tmp_path, k_list="1", l_target="1")
    assert cli.main(["find", "--config", str(cfg), "--workers", "1"]) == cli.EXIT_TARGET
    assert "SeedOutsideDomain" in capsys.readouterr().out


def test_validate_and_sample(found_db, tmp_path):
    _, cfg, db = found_db
    report = tmp_path / "rep.json"
    assert cli.main(["validate", str(db), "--config", str(cfg), "--report", str(report)]) == cli.EXIT_OK
    rep = json.loads(report.read_text())
    assert rep["n"] == 1 and rep["failures"] == 0
    assert rep["records"][0]["energy_identity"] < 1e-9
    out = tmp_path / "sample.csv"
    assert cli.main(["sample", str(db), "0", "--dt", "0.01", "--out", str(out), "--config", str(cfg)]) == 0
    rows = list(csv.reader(open(out)))
    assert rows[0] == cli.SAMPLE_COLUMNS and len(rows) == 102
    data = np.array(rows[1:], dtype=float)
    # periodic: the last row repeats the first
    assert np.allclose(data[-1, 1:4], data[0, 1:4], atol=1e-9)


def test_validate_flags_broken_record(found_db, tmp_path):
    _, cfg, db = found_db
    doc = json.loads(db.read_text())
    doc["X0"][0] = str(float(doc["X0"][0]) * 1.001)
    bad = tmp_path / "bad.jsonl"
    bad.write_text(json.dumps(doc) + "\n")
    assert cli.main(["validate", str(bad), "--config", str(cfg),
                     "--report", str(tmp_path / "r.json")]) == cli.EXIT_INVALID


def test_sample_unknown_id(found_db, tmp_path):
    _, cfg, db = found_db
    assert cli.main(["sample", str(db), "5", "--dt", "0.1", "--out", str(tmp_path / "x.csv"),
                     "--config", str(cfg)]) == cli.EXIT_INPUT
