import xml.etree.ElementTree as ET

import numpy as np
import pytest
from sklearn.base import clone

from qrlab import bench, cnn, datagen, raster
from qrlab.cli import main
from qrlab.encoder import encode, render
from qrlab.estimators import DecoderBaselineClassifier, NoiseTransformer, ResidualCNNClassifier


def test_encode_degrade_decode(tmp_path, capsys):
    clean, noisy = str(tmp_path / "a.pgm"), str(tmp_path / "b.pgm")
    assert main(["encode", "--text", "approuvé/ANNA/LEE/01/01/1990", "--ec", "H", "--out", clean]) == 0
    assert main(["degrade", "--in", clean, "--noise", "rdist:sigma=5", "--seed", "2", "--out", noisy]) == 0
    assert main(["decode", "--in", noisy, "--expect-constants", "approuvé,invalide"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out == ["approuvé/ANNA/LEE/01/01/1990", "class 0 (approuvé)"]


def test_decode_failure_exit_code(tmp_path, capsys):
    path = str(tmp_path / "blank.pgm")
    raster.write_pgm(path, np.ones((40, 40)))
    assert main(["decode", "--in", path]) == 1
    assert "failure: NoFindersFound" in capsys.readouterr().err


def test_missing_input_is_io_error(tmp_path, capsys):
    assert main(["decode", "--in", str(tmp_path / "missing.pgm")]) == 3
    assert "io failure" in capsys.readouterr().err


def test_bad_noise_is_usage_error(tmp_path):
    clean = str(tmp_path / "a.pgm")
    main(["encode", "--text", "x", "--out", clean])
    assert main(["degrade", "--in", clean, "--noise", "blur:r=3", "--out", clean]) == 1


def test_gen_dataset_manifest_only(tmp_path):
    assert main(["gen-dataset", "--preset", "paper", "--no-images", "--out", str(tmp_path)]) == 0
    records = datagen.read_manifest(tmp_path / "manifest.jsonl")
    assert len(records) == 15840 and records[0].image_path is None


def test_train_sweep_plot_ablate(tmp_path, capsys, monkeypatch):
    monkeypatch.setitem(datagen.PRESETS, "tiny", {"configs": ["inversion:p=0", "fgbg"], "n_per_cell": 3})
    data = tmp_path / "data"
    assert main(["gen-dataset", "--preset", "tiny", "--out", str(data), "--seed", "1"]) == 0
    ckpt = str(tmp_path / "m.ckpt")
    assert main(["train", "--manifest", str(data / "manifest.jsonl"), "--out", ckpt, "--epochs", "1"]) == 0
    model, extra = cnn.load_checkpoint(ckpt)
    assert extra["template"] == "constant_first" and len(extra["history"]) == 1
    csv_path = str(tmp_path / "s.csv")
    assert main(["sweep", "--model", ckpt, "--percents", "0,50", "--n", "4", "--out-csv", csv_path,
                 "--out-svg", str(tmp_path / "s.svg")]) == 0
    assert len(bench.read_sweep_csv(csv_path).rows) == 2
    ET.parse(tmp_path / "s.svg")
    assert main(["plot", "--csv", csv_path, csv_path, "--labels", "a,b", "--out-svg", str(tmp_path / "p.svg")]) == 0
    assert len(ET.parse(tmp_path / "p.svg").getroot().findall("{http://www.w3.org/2000/svg}polyline")) == 4
    capsys.readouterr()
    assert main(["ablate", "--run", "first", "constant_first", "approuvé,invalide", ckpt,
                 "--run", "last", "constant_last", "approuvé,invalide", ckpt,
                 "--percents", "0", "--n", "2", "--out-dir", str(tmp_path / "ab")]) == 0
    out = capsys.readouterr().out
    assert "first\tclassifier_auc=" in out and (tmp_path / "ab" / "last.csv").exists()
    assert main(["eval", "--n", "2", "--out-csv", str(tmp_path / "t.csv")]) == 0
    assert "fgbg:mean" in (tmp_path / "t.csv").read_text()


def test_decoder_baseline_estimator():
    images = [render(encode(datagen.gen_payload("constant_first", ("approuvé", "invalide"), k % 2, k), "M"))
              for k in range(6)]
    est = DecoderBaselineClassifier(("approuvé", "invalide"))
    assert est.predict(images).tolist() == [0, 1, 0, 1, 0, 1]
    assert est.fit().score(images, [0, 1, 0, 1, 0, 1]) == 1.0
    assert clone(est).get_params() == est.get_params()


def test_noise_transformer_is_seeded():
    images = [render(encode("abc", "L")) for _ in range(3)]
    a = NoiseTransformer("inversion:p=10", 4).fit_transform(images)
    b = NoiseTransformer("inversion:p=10", 4).fit_transform(images)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not np.array_equal(a[0], a[1])


def test_cnn_estimator_fit_predict():
    rng = np.random.default_rng(0)
    X = rng.random((12, 16, 16))
    y = np.array([0, 1] * 6)
    est = ResidualCNNClassifier(input_side=16, widths=(2, 2), epochs=2, batch_size=4, learning_rate=1e-3)
    est.fit(X, y)
    assert len(est.history_) == 2
    p = est.predict_proba(X)
    assert p.shape == (12, 2) and np.allclose(p.sum(1), 1)
    assert set(est.predict(X)) <= {0, 1}
    assert 0 <= est.score(X, y) <= 1
    again = clone(est).fit(X, y)
    assert np.array_equal(again.predict_proba(X), p)
    assert ResidualCNNClassifier.from_preset("desk").batch_size == 64
    with pytest.raises(ValueError):
        est.fit(X, np.array([0, 2] * 6))
