import xml.etree.ElementTree as ET
from fractions import Fraction

import numpy as np
import pytest

from qrlab import bench
from qrlab.bench import SweepResult, SweepRow


class Constant:
    """Stub classifier that always answers one class."""

    def __init__(self, label):
        self.label = label

    def predict(self, images):
        return np.full(len(images), self.label)


@pytest.fixture(scope="module")
def small_sweep():
    return bench.sweep_inversion(Constant(0), percents=[0, 1, 5, 20, 60], n=10, seed=3)


def test_sweep_rows(small_sweep):
    assert [r.percent for r in small_sweep.rows] == [0, 1, 5, 20, 60]
    assert all(r.n == 10 for r in small_sweep.rows)
    # labels alternate, so a constant answer is right half the time
    assert all(r.classifier_acc == Fraction(1, 2) for r in small_sweep.rows)
    assert small_sweep.rows[0].decoder_acc == 1
    assert small_sweep.rows[-1].decoder_acc == 0


def test_failures_are_recorded(small_sweep):
    fails = [f for f in small_sweep.failures if f[0] == 60]
    assert len(fails) == 10 and all(f[3] for f in fails)
    assert not [f for f in small_sweep.failures if f[0] == 0]


def test_sweep_is_deterministic(small_sweep):
    again = bench.sweep_inversion(Constant(0), percents=[0, 1, 5, 20, 60], n=10, seed=3)
    assert bench.sweep_csv(again) == bench.sweep_csv(small_sweep)


def test_decoder_only_sweep_writes_nan():
    res = bench.sweep_inversion(None, percents=[0], n=4)
    text = bench.sweep_csv(res)
    assert text.splitlines() == ["percent,decoder_acc,classifier_acc,n", "0,1.0000,nan,4"]


def test_csv_roundtrip_byte_identical(tmp_path, small_sweep):
    path = tmp_path / "sweep.csv"
    bench.emit(small_sweep, csv_path=str(path))
    text = path.read_text()
    assert text.splitlines()[0] == ",".join(bench.CSV_HEADER)
    back = bench.read_sweep_csv(path)
    assert bench.sweep_csv(back) == text


def test_read_rejects_bad_header(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n")
    with pytest.raises(ValueError):
        bench.read_sweep_csv(p)


def test_auc():
    flat = SweepResult([SweepRow(p, 10, 10, 10) for p in range(0, 101, 10)])
    assert flat.auc() == pytest.approx(1.0) and flat.auc("decoder") == pytest.approx(1.0)
    ramp = SweepResult([SweepRow(p, 0, 100 - p, 100) for p in range(101)])
    assert ramp.auc() == pytest.approx(0.5)


def test_ablation_orders_by_auc():
    configs = {"a": ("constant_first", None, Constant(0)), "b": ("url", None, Constant(1))}
    curves, order = bench.ablate_constants(configs, percents=[0, 50], n=4)
    assert set(order) == {"a", "b"} and curves["a"].auc() == curves["b"].auc()
    assert order == ["a", "b"]


def test_svg_parses_and_is_deterministic(small_sweep):
    svg = bench.sweep_svg({"first <x>": small_sweep, "other": small_sweep})
    root = ET.fromstring(svg)
    lines = root.findall("{http://www.w3.org/2000/svg}polyline")
    assert len(lines) == 4
    assert svg == bench.sweep_svg({"first <x>": small_sweep, "other": small_sweep})
    decoder_only = bench.sweep_svg(bench.sweep_inversion(None, percents=[0, 50], n=2))
    assert len(ET.fromstring(decoder_only).findall("{http://www.w3.org/2000/svg}polyline")) == 1


def test_eval_realistic_table():
    fams = {"fgbg": ("fgbg",), "rdist": ("rdist:sigma=2", "rdist:sigma=20")}
    table = bench.eval_realistic(Constant(1), fams, n=6, seed=1)
    a, b = "rdist:sigma=2,maxdelta=5", "rdist:sigma=20,maxdelta=5"
    assert set(table.configs) == {"fgbg", a, b}
    cls, dec = table.families["rdist"]
    assert cls == Fraction(1, 2)
    assert dec == (table.configs[a][1] + table.configs[b][1]) / 2
    text = bench.table_csv(table)
    assert text.splitlines()[0] == "config,classifier_acc,decoder_acc,n"
    assert "rdist:mean" in text


def test_write_failure_is_io_failure(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(bench.IoFailure):
        bench.write_text(str(blocker / "sub" / "x.csv"), "x")


def test_bad_n():
    with pytest.raises(ValueError):
        bench.sweep_inversion(None, n=0)
