import datetime as dt
import re
from collections import Counter

import numpy as np
import pytest

from qrlab import datagen, raster

FIRST = re.compile(r"^approuvé/[A-Z]+/[A-Z]+/\d{2}/\d{2}/\d{4}$")
LAST = re.compile(r"^[A-Z]+/[A-Z]+/\d{2}/\d{2}/\d{4}/invalide$")
URL = re.compile(r"^https://Twitter/[a-z0-9]{5,20}$")


def test_name_lists():
    first, last = datagen.first_names(), datagen.last_names()
    assert len(set(first)) >= 500 and len(set(last)) >= 1000
    assert all(re.fullmatch(r"[A-Z]+", n) for n in first + last)


@pytest.mark.parametrize("seed", range(200))
def test_templates_match_shape(seed):
    c = datagen.DEFAULT_CONSTANTS
    assert FIRST.match(datagen.gen_payload("constant_first", c["constant_first"], 0, seed))
    assert LAST.match(datagen.gen_payload("constant_last", c["constant_last"], 1, seed))
    assert URL.match(datagen.gen_payload("url", c["url"], 1, seed))


def test_dates_within_range():
    rng = np.random.default_rng(0)
    dates = [datagen.random_date(rng) for _ in range(20000)]
    assert min(dates) >= dt.date(1921, 1, 1) and max(dates) <= dt.date(2021, 1, 1)
    for seed in range(500):
        text = datagen.gen_payload("constant_first", ("approuvé", "invalide"), 0, seed)
        day = dt.datetime.strptime("/".join(text.split("/")[-3:]), "%d/%m/%Y").date()
        assert dt.date(1921, 1, 1) <= day <= dt.date(2021, 1, 1)


def test_username_lengths_cover_range():
    lengths = {len(datagen.gen_payload("url", ("a", "b"), 0, s).split("/")[-1]) for s in range(2000)}
    assert lengths == set(range(5, 21))


def test_same_seed_same_payload():
    a = datagen.gen_payload("constant_first", ("approuvé", "invalide"), 1, 99)
    assert a == datagen.gen_payload("constant_first", ("approuvé", "invalide"), 1, 99)


def test_unknown_template():
    with pytest.raises(ValueError):
        datagen.gen_payload("nope", ("a", "b"), 0, 0)


def test_paper_counts():
    recs = datagen.plan("paper")
    assert len(recs) == 15840
    assert Counter(r.label for r in recs) == {0: 7920, 1: 7920}
    assert set(Counter(r.ec for r in recs).values()) == {1980 * 2}
    per_class_ec = Counter((r.label, r.ec) for r in recs)
    assert set(per_class_ec.values()) == {1980}
    cells = Counter((r.label, r.ec, r.noise) for r in recs)
    assert len(cells) == 2 * 4 * 12 and set(cells.values()) == {165}


def test_desk_and_test_presets():
    assert len(datagen.plan("desk")) == 768
    test = datagen.plan("test")
    assert len(test) == 2000 and Counter(r.label for r in test) == {0: 1000, 1: 1000}


def test_split_sizes_and_properties():
    recs = datagen.plan("paper")
    train, val = datagen.split_train_val(recs, 0.2, seed=3)
    assert (len(train), len(val)) == (12672, 3168)
    assert Counter(r.label for r in val) == {0: 1584, 1: 1584}
    key = lambda r: r.seed  # noqa: E731
    assert sorted(map(key, train + val)) == sorted(map(key, recs))
    assert not set(map(key, train)) & set(map(key, val))
    again, _ = datagen.split_train_val(recs, 0.2, seed=3)
    assert [r.seed for r in again] == [r.seed for r in train]
    with pytest.raises(ValueError):
        datagen.split_train_val(recs, 1.0)


def test_record_seeds_follow_the_splitting_rule():
    recs = datagen.plan("desk", master_seed=7)
    k = 0
    for label in (0, 1):
        for e in range(4):
            for c in range(12):
                for i in range(8):
                    assert recs[k].seed == datagen.derive_seed(7, label, e, c, i)
                    k += 1
    assert datagen.derive_seed(7, 1, 2, 3, 4) != datagen.derive_seed(8, 1, 2, 3, 4)
    assert len({r.seed for r in recs}) == len(recs)


def test_build_and_regenerate(tmp_path):
    recs = datagen.build_dataset(tmp_path, "desk", n_per_cell=1)
    assert len(recs) == 96
    back = datagen.read_manifest(tmp_path / "manifest.jsonl")
    assert [r.to_json() for r in back] == [r.to_json() for r in recs]
    for rec in back[::7]:
        payload, img = datagen.sample_for(rec)
        assert payload == rec.payload
        stored = raster.read_pgm(tmp_path / rec.image_path)
        assert np.array_equal(np.rint(img * 255), np.rint(stored * 255))


def test_manifest_is_utf8_jsonl(tmp_path):
    datagen.build_dataset(tmp_path, "desk", n_per_cell=1, configs=["inversion:p=0"])
    lines = (tmp_path / "manifest.jsonl").read_text("utf-8").splitlines()
    assert len(lines) == 8 and "approuvé" in lines[0]


def test_constants_validated():
    with pytest.raises(ValueError):
        datagen.plan("desk", constants=("same", "same"))
