import csv
import json

import numpy as np
import pytest

from grip.cli import main
from grip.dataset import load_csv as _load_csv, resolve_csv


def load_csv(path):
    return _load_csv(resolve_csv(path))

SMALL = ["--set", "epochs=6", "--set", "warmup=2", "--set", "alpha_ramp=2", "--set", "batch_size=32",
         "--set", "hidden=16"]


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def data_dirs(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert run("gen-data", "--classes", 4, "--per-class", 50, "--dim", 4, "--sep", 6.0, "--seed", 2,
               "--out", root / "clean", "--test-out", root / "test") == 0
    assert run("inject-noise", "--data", root / "clean", "--kind", "symmetric", "--ratio", 0.3,
               "--seed", 2, "--out", root / "noisy") == 0
    return root


def test_gen_data_counts_and_bytes(tmp_path):
    args = ["gen-data", "--classes", 10, "--per-class", 500, "--dim", 8, "--sep", 8.0, "--seed", 0,
            "--out", tmp_path / "a"]
    assert run(*args) == 0
    d = load_csv(tmp_path / "a" / "data.csv")
    assert len(d) == 5000
    assert np.bincount(d.given_labels).tolist() == [500] * 10
    first = (tmp_path / "a" / "data.csv").read_bytes()
    assert run(*args) == 2  # existing output without --force
    assert run(*args, "--force") == 0
    assert (tmp_path / "a" / "data.csv").read_bytes() == first
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["command"] == "gen-data" and manifest["seed"] == 0


def test_gen_data_rejects_one_class(tmp_path, capsys):
    assert run("gen-data", "--classes", 1, "--per-class", 5, "--dim", 2, "--sep", 1.0, "--out", tmp_path / "x") == 2
    assert "--classes" in capsys.readouterr().err


def test_inject_noise(tmp_path):
    assert run("gen-data", "--classes", 10, "--per-class", 500, "--dim", 2, "--sep", 1.0, "--out", tmp_path / "c") == 0
    clean = load_csv(tmp_path / "c")
    assert run("inject-noise", "--data", tmp_path / "c", "--kind", "symmetric", "--ratio", 0.5,
               "--seed", 4, "--out", tmp_path / "s") == 0
    noisy = load_csv(tmp_path / "s")
    assert abs(np.mean(noisy.given_labels != clean.given_labels) - 0.5) < 0.02
    np.testing.assert_array_equal(noisy.features, clean.features)

    assert run("inject-noise", "--data", tmp_path / "c", "--kind", "symmetric", "--ratio", 0.0,
               "--out", tmp_path / "z") == 0
    assert load_csv(tmp_path / "z").given_labels.tolist() == clean.given_labels.tolist()

    assert run("inject-noise", "--data", tmp_path / "c", "--kind", "asymmetric", "--ratio", 0.4,
               "--out", tmp_path / "a") == 0
    asym = load_csv(tmp_path / "a")
    moved = asym.given_labels != asym.true_labels
    assert np.all(asym.given_labels[moved] == (asym.true_labels[moved] + 1) % 10)

    assert run("inject-noise", "--data", tmp_path / "c", "--kind", "symmetric", "--ratio", 1.0,
               "--out", tmp_path / "bad") == 2


def test_train_eval_and_structure(tmp_path, data_dirs):
    out = tmp_path / "run"
    assert run("train", "--preset", "cifar-like", *SMALL, "--data", data_dirs / "noisy",
               "--test", data_dirs / "test", "--out", out) == 0
    lines = (out / "epochs.jsonl").read_text().splitlines()
    assert len(lines) == 6
    first = json.loads(lines[0])
    for key in ("epoch", "lr", "loss_total", "counts", "test_aca", "thr", "alpha"):
        assert key in first
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["preset"] == "cifar-like" and cfg["epochs"] == 6
    assert json.loads((out / "manifest.json").read_text())["config"]["warmup"] == 2

    assert run("eval", "--params", out, "--data", data_dirs / "test", "--out", tmp_path / "ev") == 0
    ev = json.loads((tmp_path / "ev" / "eval.json").read_text())
    assert ev["aca"] == json.loads(lines[-1])["test_aca"]
    assert run("eval", "--params", tmp_path / "nothing", "--data", data_dirs / "test") == 2


def test_train_degenerate_set(tmp_path, data_dirs):
    out = tmp_path / "ce"
    assert run("train", *SMALL, "--set", "w=0", "--set", "gamma=0", "--set", "warmup=6",
               "--data", data_dirs / "noisy", "--out", out) == 0
    logs = [json.loads(x) for x in (out / "epochs.jsonl").read_text().splitlines()]
    assert not any(e["purified"] for e in logs)
    assert all(e["loss_discard"] == 0 and e["thr"] is None for e in logs)
    assert not list(out.glob("purify_epoch_*.csv"))


def test_train_resume(tmp_path, data_dirs):
    common = ["--data", data_dirs / "noisy", "--test", data_dirs / "test", *SMALL, "--set", "checkpoint_every=3"]
    assert run("train", *common, "--out", tmp_path / "full") == 0
    assert run("train", *common, "--resume", tmp_path / "full" / "checkpoint_3.bin", "--out", tmp_path / "res") == 0
    full = (tmp_path / "full" / "epochs.jsonl").read_text().splitlines()
    resumed = (tmp_path / "res" / "epochs.jsonl").read_text().splitlines()
    assert resumed == full


def test_train_unknown_key(tmp_path, data_dirs, capsys):
    assert run("train", "--set", "bogus_key=1", "--data", data_dirs / "noisy", "--out", tmp_path / "u") == 2
    assert "bogus_key" in capsys.readouterr().err


def test_train_abort_exit_code(tmp_path, data_dirs):
    rc = run("train", *SMALL, "--set", "alpha_start=-100", "--set", "alpha_end=-100", "--set", "tau=0",
             "--data", data_dirs / "noisy", "--out", tmp_path / "ab")
    assert rc == 3
    assert (tmp_path / "ab" / "checkpoint_lastgood.bin").exists()


def test_config_precedence(tmp_path, data_dirs, monkeypatch):
    (tmp_path / "cfg.json").write_text(json.dumps({"epochs": 4, "lr": 0.01, "tau": 0.05}))
    monkeypatch.setenv("GRIP_LR", "0.03")
    assert run("train", "--preset", "webfg-like", "--config", tmp_path / "cfg.json", "--set", "tau=0.02",
               "--set", "warmup=1", "--data", data_dirs / "noisy", "--out", tmp_path / "p") == 0
    cfg = json.loads((tmp_path / "p" / "config.json").read_text())
    assert cfg["epochs"] == 4  # file over preset
    assert cfg["lr"] == 0.03  # env over file
    assert cfg["tau"] == 0.02  # --set over file
    assert cfg["gamma"] == 0.5  # preset over defaults


@pytest.fixture(scope="module")
def two_runs(tmp_path_factory, data_dirs):
    root = tmp_path_factory.mktemp("runs")
    base = ["--data", data_dirs / "noisy", "--test", data_dirs / "test", *SMALL]
    assert run("train", *base, "--out", root / "grip") == 0
    assert run("train", *base, "--set", "warmup=6", "--set", "w=0", "--set", "gamma=0", "--out", root / "ce") == 0
    return root


def test_report_single_run(tmp_path, two_runs, data_dirs):
    assert run("report", two_runs / "grip", "--out", tmp_path / "r") == 0
    summary = json.loads((tmp_path / "r" / "summary.json").read_text())
    s = summary["grip"]
    logs = [json.loads(x) for x in (two_runs / "grip" / "epochs.jsonl").read_text().splitlines()]
    assert s["final_test_aca"] == logs[-1]["test_aca"]
    assert s["last10_mean_test_aca"] == pytest.approx(np.mean([e["test_aca"] for e in logs[-10:]]))
    assert s["purification"]["first_epoch"] == 2
    hist = list(csv.reader(open(tmp_path / "r" / "d_histogram_grip_epoch_2.csv")))
    assert len(hist) == 21
    assert sum(int(r[2]) for r in hist[1:]) == len(load_csv(data_dirs / "noisy"))
    assert (tmp_path / "r" / "softlabel_heatmap_grip_epoch_0.csv").exists()


def test_report_comparison_and_absent_purification(tmp_path, two_runs):
    assert run("report", two_runs / "grip", two_runs / "ce", "--out", tmp_path / "r") == 0
    rows = list(csv.reader(open(tmp_path / "r" / "comparison.csv")))
    assert rows[0] == ["metric", "grip", "ce"]
    assert [r[0] for r in rows[1:]] == ["final_test_aca", "last10_mean_test_aca", "final_f1", "final_relabel_accuracy"]
    assert json.loads((tmp_path / "r" / "summary.json").read_text())["ce"]["purification"] is None
    curves = list(csv.reader(open(tmp_path / "r" / "accuracy_curves.csv")))
    assert len(curves) == 7 and curves[0] == ["epoch", "grip", "ce"]


def test_report_missing_files(tmp_path):
    (tmp_path / "empty").mkdir()
    assert run("report", tmp_path / "empty", "--out", tmp_path / "r") == 2
