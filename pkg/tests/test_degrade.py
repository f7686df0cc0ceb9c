import numpy as np
import pytest

from qrlab import raster
from qrlab.degrade import (NoiseSpec, NonBinaryInput, apply_noise, distortion_field, fgbg_selection,
                           invert_modules, random_distortion, ruled_field, ruled_surface)
from qrlab.encoder import encode, render


@pytest.fixture
def v4():
    m = encode("x" * 40, "M", version=4)
    assert m.side == 33
    return m


def test_inversion_counts(v4):
    assert invert_modules(v4, 0, 1) == v4
    full = invert_modules(v4, 100, 1)
    assert np.array_equal(full.cells, ~v4.cells)
    ten = invert_modules(v4, 10, 1)
    assert np.count_nonzero(ten.cells != v4.cells) == 109


def test_inversion_budget_exact_for_every_percent(v4):
    for p in range(101):
        out = invert_modules(v4, p, p)
        assert np.count_nonzero(out.cells != v4.cells) == int(np.floor(p / 100 * 1089 + 0.5))


def test_inversion_on_binary_image(v4):
    img = render(v4, 1, 0)
    out = invert_modules(img, 10, 3)
    assert out.dtype == np.float64 and raster.is_binary(out)
    assert np.array_equal(out < 0.5, invert_modules(v4, 10, 3).cells)
    with pytest.raises(NonBinaryInput):
        invert_modules(img * 0.5 + 0.1, 10, 3)


def test_seed_changes_output(v4):
    a = invert_modules(v4, 5, 1)
    assert a == invert_modules(v4, 5, 1)
    assert a != invert_modules(v4, 5, 2)


def test_random_distortion_contract(v4):
    img = render(v4, 8, 4)
    assert np.array_equal(random_distortion(img, 5, 0, 1), img)
    dx, dy = distortion_field(img.shape, 5, 5, 1)
    assert abs(np.abs(dx).max() - 5) < 1e-9 and abs(np.abs(dy).max() - 5) < 1e-9
    a = random_distortion(img, 5, 5, 9)
    assert np.array_equal(a, random_distortion(img, 5, 5, 9))
    assert not np.array_equal(a, random_distortion(img, 5, 5, 10))
    assert a.min() >= 0 and a.max() <= 1


def test_ruled_columns_are_vertical_shifts():
    stripes = np.tile((np.arange(120) // 6 % 2).astype(float)[:, None], (1, 60))
    stripes = raster.gaussian_blur(stripes, 1.0)
    out = ruled_surface(stripes, 20, 4)
    dy = ruled_field(60, 20, 4)
    assert abs(np.abs(dy).max() - 20) < 1e-9
    rows = np.arange(120, dtype=float)
    for c in range(60):
        expect = np.interp(np.clip(rows + dy[c], 0, 119), rows, stripes[:, c])
        assert np.allclose(out[:, c], expect, atol=1e-9)
    assert np.array_equal(ruled_surface(stripes, 0, 4), stripes)
    assert np.array_equal(out, ruled_surface(stripes, 20, 4))


def test_fgbg_bands_and_otsu_recovery():
    rng = np.random.default_rng(0)
    for k in range(100):
        text = "".join(chr(c) for c in rng.integers(0x41, 0x5A, int(rng.integers(5, 40))))
        img = render(encode(text, "LMQH"[k % 4]), 2, 2)
        out = fgbg_selection(img, k)
        dark = img < 0.5
        assert out[dark].max() < 0.5 < out[~dark].min()
        assert 0.45 < raster.otsu_threshold(out) < 0.55
        assert np.array_equal(raster.binarize(out), img)
    assert np.array_equal(fgbg_selection(img, 3), fgbg_selection(img, 3))
    with pytest.raises(NonBinaryInput):
        fgbg_selection(out, 1)


def test_noise_spec_parse_and_format():
    assert str(NoiseSpec.parse("inversion:p=12")) == "inversion:p=12"
    assert str(NoiseSpec.parse("rdist:sigma=5")) == "rdist:sigma=5,maxdelta=5"
    assert str(NoiseSpec.parse("ruled:mag=20")) == "ruled:mag=20"
    assert str(NoiseSpec.parse("fgbg")) == "fgbg"
    assert NoiseSpec.parse("inversion:p=12.5").params["p"] == 12.5
    for bad in ("blur:s=1", "rdist:foo=2", "inversion:p=120", "ruled:mag=-1"):
        with pytest.raises(ValueError):
            NoiseSpec.parse(bad)


def test_apply_noise_dispatch(v4):
    spec = NoiseSpec.parse("inversion:p=10")
    assert spec.on_matrix and not NoiseSpec.parse("fgbg").on_matrix
    assert apply_noise(spec, v4, 5) == invert_modules(v4, 10, 5)
    img = render(v4, 8, 4)
    assert np.array_equal(apply_noise(NoiseSpec.parse("ruled:mag=10"), img, 5), ruled_surface(img, 10, 5))
