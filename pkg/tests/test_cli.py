import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from choicenet.cli import EXIT_DATA, EXIT_DIVERGED, EXIT_OK, EXIT_USAGE, main
from choicenet.data import Schema, load_csv
from choicenet.hpo import HyperSpace
from choicenet.synth import DgpSpec, oracle_probabilities

from conftest import SCHEMAS, train_csv_path


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.is_file()}


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--dgp", "linear", "--n", "300", "--seed", "1", "--out", str(out)]) == EXIT_OK
    return out


@pytest.fixture(scope="module")
def tiny_space(tmp_path_factory):
    path = tmp_path_factory.mktemp("space") / "space.json"
    HyperSpace(depth=(1, 2), width=(8,), pre_depth=(0, 1), post_depth=(1,), pre_width=(4,), post_width=(4, 6),
               l1=(1e-5,), l2=(1e-5, 1e-3), dropout=(0.01,), batch_norm=(False, True),
               learning_rate=(0.1, 0.01), num_iterations=(30,), batch_size=(32,)).save(path)
    return path


def _data_args(d):
    return ["--data", str(d / "data.csv"), "--schema", str(d / "schema.json")]


# ---------------------------------------------------------------- synth

def test_synth_writes_dataset_schema_and_oracle(synth_dir):
    assert set(_files(synth_dir)) == {"manifest.json", "data.csv", "schema.json", "dgp.json"}
    ds = load_csv(synth_dir / "data.csv", Schema.load(synth_dir / "schema.json"))
    assert ds.n == 300 and ds.k == 5
    manifest = json.loads((synth_dir / "manifest.json").read_text())
    assert manifest["command"] == "synth" and manifest["seed"] == 1


def test_synth_is_deterministic(synth_dir, tmp_path):
    assert main(["synth", "--dgp", "linear", "--n", "300", "--seed", "1", "--out", str(tmp_path)]) == EXIT_OK
    assert _files(tmp_path) == _files(synth_dir)


def test_synth_shares_follow_oracle(tmp_path):
    assert main(["synth", "--dgp", "nonlinear-asu", "--n", "20000", "--seed", "2", "--out", str(tmp_path)]) == 0
    spec = DgpSpec.load(tmp_path / "dgp.json")
    ds = load_csv(tmp_path / "data.csv", Schema.load(tmp_path / "schema.json"))
    P = oracle_probabilities(spec, ds.x, ds.z)
    sigma = np.sqrt((P * (1 - P)).sum(axis=0)) / ds.n
    assert np.all(np.abs(ds.shares() - P.mean(axis=0)) <= 3 * sigma)


def test_synth_unknown_preset(tmp_path, capsys):
    assert main(["synth", "--dgp", "probit", "--n", "10", "--out", str(tmp_path)]) == EXIT_DATA
    assert "probit" in capsys.readouterr().err


# ---------------------------------------------------------------- train

def test_train_smoke_and_determinism(synth_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"arch": {"family": "asudnn", "pre_depth": 1, "post_depth": 1, "pre_width": 6,
                                        "post_width": 6}, "dropout": 0.1, "batch_norm": True,
                               "num_iterations": 200, "batch_size": 32}))
    argv = ["train", *_data_args(synth_dir), "--family", "asudnn", "--config", str(cfg), "--seed", "3"]
    assert main(argv + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(argv + ["--out", str(tmp_path / "b")]) == EXIT_OK
    a = _files(tmp_path / "a")
    assert set(a) == {"manifest.json", "weights.json", "history.csv", "eval.json"}
    assert a == _files(tmp_path / "b")
    report = json.loads(a["eval.json"])
    assert 0 <= report["accuracy"] <= 1 and report["test"]["n"] == 50
    assert sum(map(sum, report["test"]["confusion"])) == 50


def test_train_with_preset_config(synth_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"arch": {"family": "fdnn", "depth": 1, "width": 4}, "num_iterations": 20,
                               "batch_size": 16}))
    assert main(["train", *_data_args(synth_dir), "--family", "fdnn", "--config", str(cfg),
                 "--out", str(tmp_path / "o")]) == EXIT_OK
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["config"]["num_iterations"] == 20 and "config" in manifest["inputs"]


def test_missing_schema_names_path(synth_dir, tmp_path, capsys):
    missing = tmp_path / "nowhere" / "schema.json"
    code = main(["train", "--data", str(synth_dir / "data.csv"), "--schema", str(missing),
                 "--family", "mnl", "--out", str(tmp_path / "o")])
    assert code == EXIT_DATA
    err = capsys.readouterr().err
    assert str(missing) in err and "data stage" in err


def test_usage_errors(synth_dir, tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["train", "--family", "mnl"])
    assert info.value.code == EXIT_USAGE
    assert main(["search", *_data_args(synth_dir), "--family", "svm", "--out", str(tmp_path)]) == EXIT_USAGE
    assert main(["train", *_data_args(synth_dir), "--family", "mnl", "--config", "fdnn-top1",
                 "--out", str(tmp_path)]) == EXIT_USAGE


def test_divergence_exit_code(synth_dir, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"arch": {"family": "fdnn", "depth": 1, "width": 4}, "l2": 1.0,
                               "learning_rate": 10.0, "num_iterations": 1000, "batch_size": 16}))
    code = main(["train", *_data_args(synth_dir), "--family", "fdnn", "--config", str(cfg),
                 "--out", str(tmp_path / "o")])
    assert code == EXIT_DIVERGED
    assert "iteration" in capsys.readouterr().err


@pytest.mark.skipif(train_csv_path() is None, reason="TRAIN csv not supplied")
def test_train_on_train_dataset(tmp_path):
    code = main(["train", "--data", str(train_csv_path()), "--schema", str(SCHEMAS / "train.json"),
                 "--family", "mnl", "--out", str(tmp_path)])
    assert code == EXIT_OK
    assert 0.5 < json.loads((tmp_path / "eval.json").read_text())["accuracy"] < 0.8


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "choicenet.cli", "synth", "--dgp", "linear", "--n", "0",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == EXIT_USAGE and "--n" in proc.stderr


# ---------------------------------------------------------------- search

def test_single_trial_search(synth_dir, tiny_space, tmp_path):
    assert main(["search", *_data_args(synth_dir), "--family", "fdnn", "--space", str(tiny_space),
                 "--trials", "1", "--out", str(tmp_path)]) == EXIT_OK
    with open(tmp_path / "fdnn_summary.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 1
    reports = json.loads((tmp_path / "fdnn_reports.json").read_text())
    assert reports["depth"]["insufficient_support"]


def test_search_identical_across_parallelism(synth_dir, tiny_space, tmp_path):
    argv = ["search", *_data_args(synth_dir), "--family", "asudnn,fdnn", "--space", str(tiny_space),
            "--trials", "4", "--seed", "5"]
    assert main(argv + ["--parallel", "1", "--out", str(tmp_path / "p1")]) == EXIT_OK
    assert main(argv + ["--parallel", "8", "--out", str(tmp_path / "p8")]) == EXIT_OK
    a = _files(tmp_path / "p1")
    assert a == _files(tmp_path / "p8")
    assert {"sorted_curves.csv", "asudnn_folds.csv", "fdnn_summary.csv", "asudnn_reports.json"} <= set(a)


# ---------------------------------------------------------------- interpret

@pytest.fixture(scope="module")
def trained(synth_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("model")
    assert main(["train", *_data_args(synth_dir), "--family", "mnl", "--seed", "0", "--out", str(out)]) == 0
    return out / "weights.json"


@pytest.mark.parametrize("what", [["--sweep", "bus:cost:0.5:20:15"], ["--elasticity"], ["--iia", "--probes", "200"]])
def test_interpret_is_deterministic(what, synth_dir, trained, tmp_path):
    argv = ["interpret", "--model", str(trained), *_data_args(synth_dir), *what]
    assert main(argv + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(argv + ["--out", str(tmp_path / "b")]) == EXIT_OK
    assert _files(tmp_path / "a") == _files(tmp_path / "b")


def test_interpret_outputs(synth_dir, trained, tmp_path):
    assert main(["interpret", "--model", str(trained), *_data_args(synth_dir), "--iia",
                 "--out", str(tmp_path / "i")]) == EXIT_OK
    assert json.loads((tmp_path / "i" / "iia.json").read_text())["iia_consistent"] is True
    assert main(["interpret", "--model", str(trained), str(trained), *_data_args(synth_dir), "--elasticity",
                 "--out", str(tmp_path / "e")]) == EXIT_OK
    e = json.loads((tmp_path / "e" / "elasticity.json").read_text())
    assert all(e["cross_equal"])
    s = json.loads((tmp_path / "i" / "manifest.json").read_text())
    assert "model0" in s["inputs"]


def test_interpret_validation(synth_dir, trained, tmp_path, capsys):
    base = ["interpret", "--model", str(trained), *_data_args(synth_dir), "--out", str(tmp_path)]
    assert main(base + ["--sweep", "bus:cost:1:2"]) == EXIT_USAGE
    assert main(base + ["--sweep", "bus:colour:1:2:3"]) == EXIT_DATA
    assert "colour" in capsys.readouterr().err
    assert main(["interpret", "--model", str(tmp_path / "none.json"), *_data_args(synth_dir), "--iia",
                 "--out", str(tmp_path)]) == EXIT_DATA
