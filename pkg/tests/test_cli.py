import json
import subprocess
import sys

import numpy as np
import pytest

from egrd import io
from egrd.cli import run
from egrd.compare import RdSamplePair
from egrd.grid import SampleSet, rmse


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert run(["synth", "--seed", "1", "--count", "4", "--out", str(root / "ds")]) == 0
    assert run(["train", "--dataset", str(root / "ds"), "--n", "3", "--out", str(root / "basis.json")]) == 0
    return root


def test_synth_train_reconstruct_round_trip(pipeline, capsys):
    grid = io.load_dataset(pipeline / "ds")[2]
    io.save_samples(SampleSet.from_grid(grid, range(grid.axes.size)), pipeline / "all.csv")
    args = ["reconstruct", "--basis", str(pipeline / "basis.json"), "--samples", str(pipeline / "all.csv")]
    assert run(args + ["--n", "3", "--out", str(pipeline / "est.json")]) == 0
    est = io.load_grid(pipeline / "est.json")
    assert rmse(est, grid) < 1e-6
    diag = json.loads((pipeline / "est_diagnostics.json").read_text())
    assert diag["membership_passed"] is True


def test_train_prints_energy_table(pipeline, capsys):
    assert run(["train", "--dataset", str(pipeline / "ds"), "--n", "3", "--out", str(pipeline / "b2.json")]) == 0
    out = capsys.readouterr().out
    assert "energy" in out and "components=3" in out


def test_eval_on_training_set_is_exact(pipeline):
    out = pipeline / "eval.json"
    assert run(["eval", "--dataset", str(pipeline / "ds"), "--n", "3", "--s-values", "540", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["test_count"] == report["train_count"] == 4
    rows = {r["label"]: r for r in report["approximation"]}
    assert rows[3]["rmse_mean"] < 1e-6
    assert report["reconstruction"][0]["rmse_mean"] < 1e-6
    assert [r["label"] for r in report["approximation"]] == [0, 1, 2, 3]


def test_eval_random_splits_csv(pipeline):
    out = pipeline / "eval.csv"
    args = ["eval", "--dataset", str(pipeline / "ds"), "--n", "match", "--s-values", "1,3", "--splits", "2"]
    assert run(args + ["--train-fraction", "0.75", "--format", "csv", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("table,label,") and "mean_rmse_median" in lines[0]
    assert sum(line.startswith("reconstruction,") for line in lines) == 2


def test_sample_order_from_dataset_and_basis(pipeline):
    out = pipeline / "order.json"
    assert run(["sample-order", "--basis-or-dataset", str(pipeline / "ds"), "--count", "5", "--out", str(out)]) == 0
    order = json.loads(out.read_text())
    assert len(order["indices"]) == 5 and len(order["cells"]) == 5
    assert run(["sample-order", "--basis-or-dataset", str(pipeline / "basis.json"), "--count", "3", "--out", str(out)]) == 0
    assert len(json.loads(out.read_text())["indices"]) == 3
    args = ["sample-order", "--basis-or-dataset", str(pipeline / "ds"), "--uniform-resolution", "0", "--count", "4"]
    assert run(args + ["--out", str(out)]) == 0
    assert [c[0] for c in json.loads(out.read_text())["cells"]] == [100, 400, 2000, 9000]


def test_reruns_are_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert run(["synth", "--seed", "5", "--count", "3", "--axes", "desk", "--out", str(tmp_path / name)]) == 0
        assert run(["train", "--dataset", str(tmp_path / name), "--n", "2", "--out", str(tmp_path / f"{name}.json")]) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_unknown_flag(tmp_path, capsys):
    code = run(["synth", "--seed", "1", "--bogus", "--out", str(tmp_path / "x")])
    err = capsys.readouterr().err
    assert code != 0 and "usage:" in err
    assert json.loads(err.strip().splitlines()[-1])["exit_code"] == code
    assert not list(tmp_path.iterdir())


def test_error_codes(tmp_path, capsys, pipeline):
    code = run(["train", "--dataset", str(tmp_path / "missing"), "--out", str(tmp_path / "b.json")])
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert code == 3 and err["error"] == "io"
    (tmp_path / "bad.json").write_text("{")
    assert run(["reconstruct", "--basis", str(tmp_path / "bad.json"), "--samples", str(tmp_path / "bad.json"), "--out", str(tmp_path / "o.json")]) == 4
    (tmp_path / "s.csv").write_text("bitrate_kbps,resolution_diag,quality\n123.4,400,3\n")
    assert run(["reconstruct", "--basis", str(pipeline / "basis.json"), "--samples", str(tmp_path / "s.csv"), "--out", str(tmp_path / "o.json")]) == 5
    assert not (tmp_path / "o.json").exists()


def test_compare_command(tmp_path):
    x = [150.0, 400.0, 1100.0, 3000.0, 7000.0]
    a = tuple((r, 20 + 10 * np.log10(r)) for r in x)
    b = tuple((r, 22 + 10 * np.log10(r)) for r in x)
    (tmp_path / "pairs.csv").write_text(io.pairs_to_csv([RdSamplePair("clip 1", a, b)]))
    out = tmp_path / "rep.json"
    assert run(["compare", "--fitter", "pchip", "--samples", str(tmp_path / "pairs.csv"), "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["delta_q"] == pytest.approx(2.0, abs=1e-5)
    curves = list((tmp_path / "rep_curves").glob("*.csv"))
    assert len(curves) == 1 and curves[0].read_text().startswith("codec,curve,kbps,quality")
    assert run(["compare", "--fitter", "egrd", "--samples", str(tmp_path / "pairs.csv"), "--out", str(out)]) != 0


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "egrd.cli", "compare", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "--dr-mode" in proc.stdout
