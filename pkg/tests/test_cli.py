import csv
import json
import subprocess
import sys

import pytest

from so3fm.cli import blob_hash, main
from so3fm.training import CSV_HEADER, SCHEMA
from so3fm.viz import read_ppm

TINY = {
    "schema": SCHEMA,
    "seed": 3,
    "n_labeled": 20,
    "n_unlabeled": 40,
    "n_test": 25,
    "hidden": 16,
    "pretrain_steps": 30,
    "pretrain_batch": 8,
    "batch_labeled": 8,
    "batch_unlabeled": 16,
    "ssl_steps": 20,
    "snapshot_every": 10,
}


def write_config(tmp_path, name="cfg.json", **over):
    path = tmp_path / name
    path.write_text(json.dumps({**TINY, **over}))
    return path


def run_cli(*args):
    return subprocess.run([sys.executable, "-m", "so3fm", *args], capture_output=True, text=True)


def test_blob_hash_matches_git():
    # `printf 'hello\n' | git hash-object --stdin`
    assert blob_hash(b"hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a"


def test_verify_fast_is_deterministic():
    a = run_cli("verify", "--fast", "--seed", "7")
    b = run_cli("verify", "--fast", "--seed", "7")
    assert a.returncode == 0, a.stdout + a.stderr
    assert a.stdout == b.stdout
    assert "FAIL" not in a.stdout
    assert a.stdout.splitlines()[0].split()[:5] == ["quantity", "analytic", "oracle", "sigma", "verdict"]


def test_train_and_eval(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
    report = json.loads(capsys.readouterr().out)
    with open(out / "metrics.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == CSV_HEADER
    assert [int(r[0]) for r in rows[1:]] == [0, 10, 20]
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["inputs"][str(cfg)] == blob_hash(cfg.read_bytes())
    assert manifest["config"]["seed"] == 3
    assert manifest["outputs"]["model.bin"] == blob_hash((out / "model.bin").read_bytes())
    assert (out / "training.png").exists()
    assert main(["eval", "--model", str(out / "model.bin"), "--config", str(cfg)]) == 0
    again = json.loads(capsys.readouterr().out)
    assert again["mean_error_deg"] == report["mean_error_deg"]
    assert float(rows[-1][1]) == report["mean_error_deg"]


def test_lambda_zero_matches_supervised_csv(tmp_path, capsys):
    a = write_config(tmp_path, "a.json", lambda_u=0.0)
    b = write_config(tmp_path, "b.json", mode="supervised")
    main(["train", "--config", str(a), "--out", str(tmp_path / "a")])
    main(["train", "--config", str(b), "--out", str(tmp_path / "b")])
    capsys.readouterr()
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()
    assert (tmp_path / "a" / "model.bin").read_bytes() == (tmp_path / "b" / "model.bin").read_bytes()


@pytest.mark.parametrize("bad", [
    {"learning_rate": 0.1},
    {"schema": "so3fm.train/0"},
    {"batch_labeled": 0},
])
def test_bad_config_rejected(tmp_path, bad):
    cfg = write_config(tmp_path, **bad)
    r = run_cli("train", "--config", str(cfg), "--out", str(tmp_path / "x"))
    assert r.returncode != 0 and "error" in r.stderr


def test_missing_schema_and_bad_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({k: v for k, v in TINY.items() if k != "schema"}))
    assert run_cli("train", "--config", str(p)).returncode != 0
    p.write_text("{not json")
    r = run_cli("eval", "--model", "nope.bin", "--config", str(p))
    assert r.returncode != 0 and "invalid JSON" in r.stderr


def test_viz(tmp_path, capsys):
    prefix = tmp_path / "d5"
    assert main(["viz", "--A", "5,0,0,0,5,0,0,0,5", "--out", str(prefix), "--width", "64",
                 "--height", "32", "--png"]) == 0
    for ax in "xyz":
        px = read_ppm(f"{prefix}_{ax}.ppm")
        assert px.shape == (32, 64, 3)
    assert (tmp_path / "d5.png").exists()
    first = (tmp_path / "d5_x.ppm").read_bytes()
    main(["viz", "--A", "5,0,0,0,5,0,0,0,5", "--out", str(prefix), "--width", "64", "--height", "32"])
    assert (tmp_path / "d5_x.ppm").read_bytes() == first


@pytest.mark.parametrize("A", ["1,2,3", "1,2,3,4,5,6,7,8,x", "nan,0,0,0,0,0,0,0,0"])
def test_viz_bad_matrix(tmp_path, A):
    r = run_cli("viz", "--A", A, "--out", str(tmp_path / "z"))
    assert r.returncode != 0


def test_viz_out_of_range(tmp_path):
    r = run_cli("viz", "--A", "900,0,0,0,1,0,0,0,1", "--out", str(tmp_path / "z"))
    assert r.returncode != 0 and "error" in r.stderr


def test_eval_head_mismatch(tmp_path, capsys):
    cfg = write_config(tmp_path)
    main(["train", "--config", str(cfg), "--out", str(tmp_path / "r")])
    capsys.readouterr()
    other = write_config(tmp_path, "o.json", head="bingham")
    with pytest.raises(SystemExit, match="outputs"):
        main(["eval", "--model", str(tmp_path / "r" / "model.bin"), "--config", str(other)])
