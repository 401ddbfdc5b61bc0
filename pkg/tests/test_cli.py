import json
import subprocess
import sys

import pytest

from gaitdetect.cli import main

TINY = ["--n-normal", "2", "--n-abnormal", "2", "--duration", "16"]


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def raw(tmp_path_factory):
    d = tmp_path_factory.mktemp("raw")
    assert run("synth", *TINY, "--duration", "22", "--raw-dir", d / "logs", "--out", d / "synth.csv") == 0
    return d


def test_ingest_manifest_and_idempotent(raw, tmp_path):
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    manifest = raw / "logs" / "manifest.csv"
    args = ["ingest", "--manifest", manifest, "--allow-variable-length"]
    assert run(*args, "--out", out1) == 0
    assert run(*args, "--out", out2) == 0
    assert out1.read_bytes() == out2.read_bytes()
    # 22 s trimmed by 3 s each side
    assert len(out1.read_text().splitlines()) == 1 + 4 * 16 * 50


def test_ingest_length_check(raw, tmp_path, capsys):
    rc = run("ingest", "--manifest", raw / "logs" / "manifest.csv", "--out", tmp_path / "x.csv")
    assert rc == 1
    assert "expected 3000" in capsys.readouterr().err


def test_ingest_named_files(raw, tmp_path):
    logs = raw / "logs"
    out = tmp_path / "named.csv"
    assert run("ingest", "--normal", logs / "N01.csv", "--abnormal", logs / "A01.csv",
               "--allow-variable-length", "--out", out, "--windows-out", tmp_path / "w.csv") == 0
    lines = out.read_text().splitlines()
    assert lines[1].startswith("N01,normal,") and lines[-1].startswith("A01,abnormal,")
    assert (tmp_path / "w.csv").read_text().splitlines()[0].endswith("window_id,start_index")


def test_ingest_malformed_names_file_and_line(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2,3,4,5,6\n1,2,3,4,5\n")
    assert run("ingest", "--normal", bad, "--out", tmp_path / "o.csv") == 1
    err = capsys.readouterr().err
    assert f"{bad}:2" in err


def test_ingest_usage(capsys):
    assert run("ingest") == 2


def test_synth_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run("synth", *TINY, "--out", a)
    run("synth", *TINY, "--out", b)
    assert a.read_bytes() == b.read_bytes()


def test_train_predict_evaluate(raw, tmp_path, capsys):
    data = raw / "synth.csv"
    bundle = tmp_path / "m.json"
    assert run("train", "--data", data, "--model", "gnb", "--out", bundle) == 0
    b = json.loads(bundle.read_text())
    assert b["model"]["kind"] == "gnb" and b["feature_dim"] == 1200
    assert b["data_fingerprint"].startswith("sha256:")

    assert run("predict", "--bundle", bundle, raw / "logs" / "A01.csv", "--trim") == 0
    out = json.loads(capsys.readouterr().out)
    assert out["verdict"] == "abnormal"
    assert sum(out["votes"].values()) == len(out["windows"]) == 4

    report = tmp_path / "r.json"
    assert run("evaluate", "--data", data, "--models", "gnb,knn", "--mode", "subject",
               "--protocol", "kfold", "--config", _cfg(tmp_path, {"split": {"k_folds": 2}}), "--out", report) == 0
    captured = capsys.readouterr()
    table = captured.out.splitlines()
    assert table[0] == "algorithm,f1_normal,f1_abnormal,accuracy"
    assert [r.split(",")[0] for r in table[1:]] == ["gnb", "knn"]
    rep = json.loads(report.read_text())
    acc = rep["models"]["gnb"]["pooled"]["metrics"]["accuracy"]
    assert table[1].split(",")[3] == f"{acc:.4f}"
    assert "protocol=kfold mode=subject" in captured.err


def _cfg(tmp_path, data):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(data))
    return p


def test_train_cnn_loss_history(raw, tmp_path):
    cfg = _cfg(tmp_path, {"model": {"kind": "cnn", "params": {"epochs": 2}}})
    hist = tmp_path / "loss.csv"
    assert run("train", "--data", raw / "synth.csv", "--config", cfg, "--out", tmp_path / "c.json",
               "--loss-history", hist) == 0
    lines = hist.read_text().splitlines()
    assert lines[0] == "epoch,loss" and len(lines) == 3


def test_train_missing_data_is_usage_error(tmp_path, capsys):
    assert run("train", "--data", tmp_path / "nope.csv") == 2
    assert "does not exist" in capsys.readouterr().err
    assert run("train") == 2


def test_bad_config_is_data_error(raw, tmp_path):
    assert run("train", "--data", raw / "synth.csv", "--config", _cfg(tmp_path, {"bogus": 1})) == 1


def test_predict_short_recording(raw, tmp_path, capsys):
    bundle = tmp_path / "m.json"
    run("train", "--data", raw / "synth.csv", "--model", "gnb", "--out", bundle)
    short = tmp_path / "short.csv"
    short.write_text("1,2,3,4,5,6\n" * 150)
    assert run("predict", "--bundle", bundle, short) == 1
    assert "shorter than one window" in capsys.readouterr().err
    assert run("predict", "--bundle", tmp_path / "none.json", short) == 2
    assert run("predict", short) == 2


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "gaitdetect", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "gaitdetect" in r.stdout
    r = subprocess.run([sys.executable, "-m", "gaitdetect", "frobnicate"], capture_output=True, text=True)
    assert r.returncode == 2
