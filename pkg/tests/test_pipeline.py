import json

import numpy as np
import pytest

from gaitdetect.config import ConfigError, PipelineConfig, config_from_dict, load_config
from gaitdetect.ingest import GaitLabel, Recording
from gaitdetect.pipeline import (BundleError, bundle_from_dict, bundle_to_dict, dataset_fingerprint,
                                 dumps_bundle, fit_pipeline, majority_verdict, partition_tag,
                                 samples_under_windows)
from gaitdetect.scaling import LeakageError
from gaitdetect.synthgen import abnormal_profile, generate_benchmark, generate_recording


def test_config_defaults_valid():
    cfg = PipelineConfig().validate()
    assert cfg.model.kind == "svm" and cfg.split.mode == "window" and cfg.pca.variance_fraction == 0.95
    assert config_from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()


@pytest.mark.parametrize("data, fragment", [
    ({"colour": 1}, "unknown key"),
    ({"filter": {"cutof_hz": 3}}, "unknown key"),
    ({"filter": {"cutoff_hz": 30}}, "Nyquist"),
    ({"model": {"kind": "knn", "params": {"k": 4}}}, "odd"),
    ({"model": {"kind": "svm", "params": {"degree": 3}}}, "unknown key"),
    ({"model": {"kind": "tree"}}, "model.kind"),
    ({"pca": {"n_components": 5}}, "either"),
    ({"split": {"mode": "session"}}, "split.mode"),
    ({"split": {"k_folds": 1}}, "k_folds"),
    ({"window": {"hop": 0}}, "hop"),
    ({"scaler": "minmax"}, "minmax"),
    ({"trim": []}, "must be an object"),
])
def test_config_rejects(data, fragment):
    with pytest.raises(ConfigError, match=fragment):
        config_from_dict(data)


def test_load_config(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seed": 3, "model": {"kind": "knn", "params": {"k": 3}}}))
    cfg = load_config(p)
    assert cfg.seed == 3 and cfg.model_params() == {"k": 3}
    p.write_text("{")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(p)


def test_cnn_params_fill_architecture():
    params = PipelineConfig().with_model("cnn").model_params()
    assert params["architecture"][0]["type"] == "Conv2D"


def test_majority_verdict():
    assert majority_verdict(np.array([1, 1, 1])) is GaitLabel.ABNORMAL
    assert majority_verdict(np.array([0, 0, 1])) is GaitLabel.NORMAL
    assert majority_verdict(np.array([0, 1])) is GaitLabel.ABNORMAL
    assert majority_verdict(np.array([0, 1]), tie="normal") is GaitLabel.NORMAL


def test_partition_tag_order_free():
    assert partition_tag("x", [3, 1, 2]) == partition_tag("x", [1, 2, 3])
    assert partition_tag("x", [1, 2]) != partition_tag("x", [1, 3])


def test_samples_under_windows_counts_once():
    recs = [Recording("a", GaitLabel.NORMAL, 50, np.arange(60.0).reshape(10, 6))]
    out = samples_under_windows(recs, np.array([0, 0]), np.array([0, 2]), 4)
    np.testing.assert_array_equal(out, recs[0].samples[:6])


@pytest.fixture(scope="module")
def tiny():
    return generate_benchmark(3, 3, seed=11, duration_s=12.0)


@pytest.mark.parametrize("kind", ["knn", "logreg", "gnb", "svm"])
def test_bundle_round_trip(kind, tiny):
    cfg = PipelineConfig().with_model(kind)
    fp = fit_pipeline(tiny, cfg)
    d = bundle_to_dict(fp, dataset_fingerprint(tiny), created_at="t0")
    back = bundle_from_dict(json.loads(dumps_bundle(d)))
    windows = np.random.default_rng(0).normal(size=(5, 200, 6))
    np.testing.assert_array_equal(back.predict_windows(windows), fp.predict_windows(windows))
    assert d["feature_dim"] == 1200
    assert dumps_bundle(bundle_to_dict(back, d["data_fingerprint"], created_at="t0")) == dumps_bundle(d)


def test_bundle_predicts_abnormal_recording(tiny):
    fp = fit_pipeline(tiny, PipelineConfig())
    rec = generate_recording(abnormal_profile(seed=999), 12.0)
    ws, labels, verdict = fp.predict_recording(rec)
    assert len(ws) == 3 and verdict is GaitLabel.ABNORMAL


def test_predict_rejects_foreign_scaler(tiny):
    fp = fit_pipeline(tiny, PipelineConfig().with_model("gnb"))
    fp.train_partition = "fold0:other"
    with pytest.raises(LeakageError):
        fp.predict_windows(np.zeros((1, 200, 6)))


def test_bad_bundles():
    with pytest.raises(BundleError, match="not a model bundle"):
        bundle_from_dict({"format": "x"})
    with pytest.raises(BundleError, match="malformed"):
        bundle_from_dict({"format": "gaitdetect-bundle/1"})
