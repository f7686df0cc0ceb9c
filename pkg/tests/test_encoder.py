import numpy as np
import pytest

from qrlab import tables
from qrlab.decoder import decode_image, read_format
from qrlab.encoder import (ModuleMatrix, PayloadTooLarge, QrSpec, encode, encode_matrix, penalty,
                           render, select_version)


def naive_penalty(g):
    g = np.asarray(g, dtype=bool)
    n = g.shape[0]
    score = 0
    for lines in (g, g.T):
        for line in lines:
            run = 1
            for i in range(1, n + 1):
                if i < n and line[i] == line[i - 1]:
                    run += 1
                else:
                    if run >= 5:
                        score += 3 + (run - 5)
                    run = 1
            s = "".join("1" if b else "0" for b in line)
            for pat in ("10111010000", "00001011101"):
                score += 40 * sum(1 for i in range(n - 10) if s[i:i + 11] == pat)
    for r in range(n - 1):
        for c in range(n - 1):
            if g[r, c] == g[r + 1, c] == g[r, c + 1] == g[r + 1, c + 1]:
                score += 3
    ratio = g.sum() * 100.0 / (n * n)
    score += 10 * int(abs(ratio - 50) // 5)
    return score


def test_select_version_boundaries():
    assert select_version(7, "L") == 1
    assert select_version(17, "L") == 1
    assert select_version(18, "L") == 2
    with pytest.raises(PayloadTooLarge):
        select_version(3000, "H")
    with pytest.raises(PayloadTooLarge):
        encode_matrix(QrSpec(b"x" * 100, "H", version=1))


def test_penalty_matches_naive_oracle(rng):
    for _ in range(30):
        g = rng.random((25, 25)) < rng.uniform(0.2, 0.8)
        assert penalty(g) == naive_penalty(g)
    m = encode("approuvé/JOHN/SMITH/01/01/1980", "Q")
    assert penalty(m.cells) == naive_penalty(m.cells)


def test_auto_mask_is_minimum_penalty():
    text = "invalide/ANNA/LEE/12/12/1999"
    auto = encode(text, "M")
    scores = [penalty(encode(text, "M", mask=k).cells) for k in range(8)]
    assert penalty(auto.cells) == min(scores)


def test_deterministic():
    a = encode_matrix(QrSpec("approuvé/JOHN/SMITH/01/01/1980", "H"))
    b = encode_matrix(QrSpec("approuvé/JOHN/SMITH/01/01/1980", "H"))
    assert a == b


@pytest.mark.parametrize("ec", tables.EC_LEVELS)
@pytest.mark.parametrize("mask", range(8))
def test_format_info_reads_back(ec, mask):
    m = encode("format check", ec, mask=mask)
    assert read_format(m.cells) == (ec, mask)


def test_version_info_present_from_v7():
    m = encode("v7", "L", version=7)
    side = m.side
    word = tables.version_word(7)
    block = m.cells[:6, side - 11:side - 8]
    bits = [(word >> i) & 1 for i in range(18)]
    expect = np.array(bits, dtype=bool).reshape(6, 3)
    assert np.array_equal(block, expect)
    assert np.array_equal(m.cells[side - 11:side - 8, :6], expect.T)


def test_render_sizes_and_values():
    m = encode("hi", "L")
    assert m.version == 1
    assert render(m, 1, 0).shape == (21, 21)
    img = render(m, 8, 4)
    assert img.shape == (232, 232)
    assert set(np.unique(img)) <= {0.0, 1.0}
    assert np.all(img[:32] == 1.0)


def test_roundtrip_utf8():
    text = "approuvé/JOHN/SMITH/01/01/1980"
    assert decode_image(render(encode(text, "Q"), 4, 4)).text == text.encode("utf-8")


def test_differential_external_decoder():
    zxingcpp = pytest.importorskip("zxingcpp")
    rng = np.random.default_rng(7)
    for i in range(40):
        ec = tables.EC_LEVELS[i % 4]
        version = i % 10 + 1
        n = int(rng.integers(1, tables.byte_capacity(version, ec) + 1))
        text = "".join(chr(c) for c in rng.integers(0x30, 0x7A, n))
        img = (render(encode(text, ec, version=version), 4, 4) * 255).astype(np.uint8)
        found = zxingcpp.read_barcodes(img)
        assert [r.text for r in found] == [text]
