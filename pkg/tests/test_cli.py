import json
import shutil
import subprocess

import pytest

from spgc.cli import main
from spgc.propagation import load_cache


def _train(bundle_dir, out, *extra):
    return main(["train", "--data", str(bundle_dir), "--variant", "lgc", "--op",
                 "renormalized_adjacency", "--k", "2", "--lr", "0.05", "--dropout", "0.3",
                 "--epochs", "30", "--patience", "10", "--seed", "3", "--out", str(out), *extra])


def test_prep_byte_identical_and_manifest(bundle_dir, tmp_path):
    a, b = tmp_path / "a.spgc", tmp_path / "b.spgc"
    for p in (a, b):
        assert main(["prep", "--data", str(bundle_dir), "--k", "3", "--out", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert load_cache(a).k == 3
    m = json.loads((tmp_path / "a.spgc.manifest.json").read_text())
    assert m["status"] == "ok" and m["outputs"] == [str(a)]
    assert m["config"]["op"] == "laplacian" and m["finished"] is not None


def test_prep_k_zero_and_default_location(bundle_dir, tmp_path, monkeypatch):
    monkeypatch.setenv("SPGC_CACHE_DIR", str(tmp_path / "cc"))
    assert main(["prep", "--data", str(bundle_dir), "--k", "0", "--op",
                 "normalized_adjacency"]) == 0
    [path] = (tmp_path / "cc").glob("*.spgc")
    assert path.name.endswith("__normalized_adjacency__k0.spgc")
    assert load_cache(path).k == 0


def test_prep_without_destination_fails(bundle_dir, monkeypatch, capsys):
    monkeypatch.delenv("SPGC_CACHE_DIR")
    assert main(["prep", "--data", str(bundle_dir), "--k", "1"]) == 1
    assert "SPGC_CACHE_DIR" in capsys.readouterr().err


def test_train_outputs_deterministic(bundle_dir, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _train(bundle_dir, a) == 0 and _train(bundle_dir, b) == 0
    for name in ("history.csv", "checkpoint.spgck", "summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    summary = json.loads((a / "summary.json").read_text())
    assert "mean_epoch_ms" not in summary and summary["operator"] == "renormalized_adjacency"
    manifest = json.loads((a / "manifest.json").read_text())
    assert set(manifest["outputs"]) == {str(a / f) for f in
                                        ("summary.json", "history.csv", "checkpoint.spgck")}
    assert manifest["status"] == "ok"


def test_train_multiple_runs_and_timing(bundle_dir, tmp_path):
    out = tmp_path / "t"
    assert _train(bundle_dir, out, "--runs", "2", "--timing") == 0
    assert (out / "history_run0.csv").exists() and (out / "checkpoint_run1.spgck").exists()
    summary = json.loads((out / "summary.json").read_text())
    assert len(summary["runs"]) == 2 and summary["mean_epoch_ms"] >= 0


def test_train_with_precomputed_cache(bundle_dir, tmp_path):
    cache = tmp_path / "c.spgc"
    assert main(["prep", "--data", str(bundle_dir), "--op", "renormalized_adjacency",
                 "--k", "4", "--out", str(cache)]) == 0
    assert _train(bundle_dir, tmp_path / "x", "--cache", str(cache)) == 0
    assert _train(bundle_dir, tmp_path / "y") == 0
    assert ((tmp_path / "x" / "history.csv").read_bytes()
            == (tmp_path / "y" / "history.csv").read_bytes())


def test_train_cache_mismatch_rejected(bundle_dir, tmp_path, capsys):
    cache = tmp_path / "c.spgc"
    main(["prep", "--data", str(bundle_dir), "--k", "1", "--out", str(cache)])
    assert _train(bundle_dir, tmp_path / "x", "--cache", str(cache)) == 1
    assert "error" in capsys.readouterr().err


def test_missing_data_nonzero(tmp_path, capsys):
    code = main(["train", "--data", str(tmp_path / "nope"), "--variant", "sgc",
                 "--out", str(tmp_path / "o")])
    assert code == 1
    assert "missing" in capsys.readouterr().err


def test_coeffs(bundle_dir, tmp_path, capsys):
    out = tmp_path / "t"
    _train(bundle_dir, out)
    csv_path = tmp_path / "coeffs.csv"
    assert main(["coeffs", "--checkpoint", str(out / "checkpoint.spgck"),
                 "--out", str(csv_path), "--plot"]) == 0
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "hop,coefficient,variance" and len(lines) == 4
    assert csv_path.with_suffix(".png").stat().st_size > 0

    sgc = tmp_path / "s"
    main(["train", "--data", str(bundle_dir), "--variant", "sgc", "--epochs", "3",
          "--out", str(sgc)])
    assert main(["coeffs", "--checkpoint", str(sgc / "checkpoint.spgck"),
                 "--out", str(tmp_path / "x.csv")]) == 1
    assert "SGC" in capsys.readouterr().err


def test_bounds_commands(capsys):
    assert main(["bounds", "--model", "lgc", "--k", "1", "--l1", "2", "--L", "4"]) == 0
    assert json.loads(capsys.readouterr().out)["bound"] == 1.5
    assert main(["bounds", "--model", "truncation", "--beta", "1", "--spec-norm", "2",
                 "--k", "10", "--xtheta", "1"]) == 0
    assert json.loads(capsys.readouterr().out)["bound"] == pytest.approx(6.1568e-5, rel=1e-4)
    assert main(["bounds", "--model", "truncation", "--beta", "1"]) == 1


def test_oracle_check_reproducible(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    args = ["oracle-check", "--seed", "2", "--graphs", "5", "--mc-samples", "30"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert json.loads(a.read_text())["violations"] == 0


def test_gridsearch(bundle_dir, tmp_path):
    grid = tmp_path / "g.grid"
    grid.write_text("lr = 0.05\nwd = 5e-4\ndropout = 0, 0.3\nk = 1, 2\nruns = 2\n")
    out = tmp_path / "gs"
    base = ["gridsearch", "--data", str(bundle_dir), "--variant", "egc", "--grid", str(grid),
            "--op", "renormalized_adjacency", "--epochs", "20", "--patience", "5",
            "--seed", "1"]
    assert main(base + ["--out", str(out), "--plot"]) == 0
    sel = json.loads((out / "selection.json").read_text())
    assert sel["biased"] is False and sel["n_cells"] == 4
    assert (out / "selection.png").stat().st_size > 0
    assert str(out / "selection.png") in json.loads((out / "manifest.json").read_text())["outputs"]

    assert main(base + ["--out", str(tmp_path / "b"), "--protocol", "test_selected"]) == 0
    assert json.loads((tmp_path / "b" / "selection.json").read_text())["biased"] is True


def test_gridsearch_single_cell_equals_train(bundle_dir, tmp_path):
    grid = tmp_path / "g.grid"
    grid.write_text("lr = 0.05\nwd = 5e-4\ndropout = 0.3\nk = 2\nruns = 2\n")
    main(["gridsearch", "--data", str(bundle_dir), "--variant", "lgc", "--grid", str(grid),
          "--op", "renormalized_adjacency", "--epochs", "30", "--patience", "10", "--seed", "3",
          "--out", str(tmp_path / "gs")])
    _train(bundle_dir, tmp_path / "tr", "--runs", "2")
    sel = json.loads((tmp_path / "gs" / "selection.json").read_text())
    tr = json.loads((tmp_path / "tr" / "summary.json").read_text())
    assert (sel["test_mean"], sel["test_std"]) == (tr["test_mean"], tr["test_std"])


def test_train_plot(bundle_dir, tmp_path):
    out = tmp_path / "p"
    assert _train(bundle_dir, out, "--plot") == 0
    png = out / "history.png"
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_validate(bundle_dir, capsys):
    assert main(["validate", "--data", str(bundle_dir)]) == 0
    assert json.loads(capsys.readouterr().out)["n"] == 120


def test_console_script_installed():
    exe = shutil.which("spgc")
    if exe is None:
        pytest.skip("spgc entry point not on PATH")
    res = subprocess.run([exe, "--version"], capture_output=True, text=True, check=True)
    assert res.stdout.strip().startswith("spgc ")
