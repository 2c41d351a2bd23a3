import json

import numpy as np
import pytest

from pilir import cli
from pilir import evaluation as ev
from pilir.training import TrainResult

TINY = {"epochs": 4, "eval_every": 2, "n_interior": 32, "n_ic": 8, "n_bc": 8, "eval_sizes": [16, 9],
        "model_params": {"resolution": 4, "num_grids": 2}}


def write_config(tmp_path, **kw):
    raw = {"problem": "convection", "seeds": [1, 2], "out": str(tmp_path / "out")} | TINY | kw
    path = tmp_path / "c.json"
    path.write_text(json.dumps(raw))
    return path


def test_train_writes_run_tree(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert cli.main(["train", "--config", str(cfg)]) == 0
    exp = tmp_path / "out" / "convection-pilir"
    for seed in ("1", "2"):
        run = exp / seed
        assert (run / "metrics.csv").read_text().splitlines()[0] == "epoch,lr,loss,loss_r,loss_ic,loss_bc,rel_l2"
        assert len((run / "metrics.csv").read_text().splitlines()) == 3
        assert (run / "final.ckpt").read_bytes()[:8] == b"PILIRCKP"
        assert (run / "fields" / "final.csv").exists()
        assert ev.read_pgm(run / "fields" / "final_pred.pgm").shape == (16, 9)
        assert (run / "spectra" / "final.csv").exists()
    rows = (exp / "summary.csv").read_text().splitlines()
    assert rows[0] == "seed,status,final_rel_l2" and rows[3].startswith("mean,,") and rows[4].startswith("std,,")
    errs = [float(r.split(",")[2]) for r in rows[1:3]]
    assert float(rows[4].split(",")[2]) == pytest.approx(np.std(errs, ddof=1))
    assert "seed 1: ok" in capsys.readouterr().out


def test_artifact_snapshots(tmp_path):
    cfg = write_config(tmp_path, seeds=[3], artifact_every=2)
    assert cli.main(["train", "--config", str(cfg)]) == 0
    assert (tmp_path / "out" / "convection-pilir" / "3" / "spectra" / "epoch000002.csv").exists()


def test_metrics_are_byte_identical_across_runs(tmp_path):
    a = write_config(tmp_path, seeds=[5], out=str(tmp_path / "a"))
    assert cli.main(["train", "--config", str(a)]) == 0
    b = write_config(tmp_path, seeds=[5], out=str(tmp_path / "b"))
    assert cli.main(["train", "--config", str(b)]) == 0
    ra, rb = tmp_path / "a" / "convection-pilir" / "5", tmp_path / "b" / "convection-pilir" / "5"
    assert (ra / "metrics.csv").read_bytes() == (rb / "metrics.csv").read_bytes()
    assert (ra / "final.ckpt").read_bytes() == (rb / "final.ckpt").read_bytes()


def test_flags_override_config(tmp_path):
    cfg = write_config(tmp_path)
    assert cli.main(["train", "--config", str(cfg), "--seed", "7", "--epochs", "2", "--resolution", "3",
                     "--weighting", "multilinear", "--experiment", "x"]) == 0
    saved = json.loads((tmp_path / "out" / "x" / "config.json").read_text())
    assert saved["seeds"] == [7] and saved["epochs"] == 2
    assert saved["model_params"]["resolution"] == 3 and saved["model_params"]["weighting"] == "multilinear"


def test_eval_spectrum_and_mismatch(tmp_path, capsys):
    cfg = write_config(tmp_path, seeds=[1])
    assert cli.main(["train", "--config", str(cfg)]) == 0
    ckpt = tmp_path / "out" / "convection-pilir" / "1" / "final.ckpt"
    capsys.readouterr()
    assert cli.main(["eval", str(ckpt), "--grid", "16x9", "--out", str(tmp_path / "ev")]) == 0
    err = float(capsys.readouterr().out.strip())
    summary = (tmp_path / "out" / "convection-pilir" / "summary.csv").read_text().splitlines()[1]
    assert err == float(summary.split(",")[2])
    assert (tmp_path / "ev" / "field.csv").exists()

    assert cli.main(["spectrum", str(ckpt), "--n", "64", "--out", str(tmp_path / "s.csv")]) == 0
    assert (tmp_path / "s.csv").read_text().startswith("t,k,amp_truth,amp_pred\n")

    other = tmp_path / "o.json"
    other.write_text(json.dumps({"problem": "convection", "model_params": {"resolution": 6, "num_grids": 2}}))
    assert cli.main(["eval", str(ckpt), "--config", str(other)]) == 4
    assert "error[mismatch]" in capsys.readouterr().err
    assert cli.main(["eval", str(ckpt), "--problem", "helmholtz2d"]) == 4


def test_reference_command(tmp_path):
    out = tmp_path / "ref.csv"
    assert cli.main(["reference", "--problem", "convection", "--modes", "32", "--dt", "0.01", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "x,t,u" and len(lines) == 1 + 101 * 32
    assert ev.read_pgm(out.with_suffix(".pgm")).shape == (32, 101)
    assert cli.main(["reference", "--problem", "helmholtz2d"]) == 1


def test_sweep(tmp_path):
    cfg = write_config(tmp_path, seeds=[1], epochs=2)
    assert cli.main(["sweep", "--config", str(cfg), "--resolutions", "3,5"]) == 0
    text = (tmp_path / "out" / "convection-pilir" / "sweep.csv").read_text().splitlines()
    assert text[0] == "resolution,seed,status,final_rel_l2"
    assert [t.split(",")[0] for t in text[1:]] == ["3", "5"]


def test_nan_exit_code(tmp_path, monkeypatch, capsys):
    def fake_train(problem, model, cfg, evaluate=None, on_eval=None):
        return TrainResult(model, [], "nan", "non-finite loss at epoch 0", 0)

    monkeypatch.setattr(cli, "train", fake_train)
    cfg = write_config(tmp_path, seeds=[1])
    assert cli.main(["train", "--config", str(cfg)]) == 3
    assert "error[nan]" in capsys.readouterr().err
    assert (tmp_path / "out" / "convection-pilir" / "1" / "final.ckpt").exists()


@pytest.mark.parametrize("argv,code,kind", [
    ([], 2, "usage"),
    (["train"], 2, "config"),
    (["train", "--problem", "nope"], 2, "config"),
    (["train", "--config", "/nonexistent.json"], 2, "config"),
    (["eval", "/nonexistent.ckpt"], 1, "checkpoint"),
    (["eval", "x.ckpt", "--grid", "ab"], 1, "checkpoint"),
    (["frobnicate"], 2, "usage"),
])
def test_error_paths(argv, code, kind, capsys):
    assert cli.main(argv) == code
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith(f"pilir: error[{kind}]")


def test_bad_checkpoint_file(tmp_path, capsys):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage" * 5)
    assert cli.main(["eval", str(bad)]) == 1
    assert "bad magic" in capsys.readouterr().err
