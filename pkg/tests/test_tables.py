import numpy as np
import pytest

from qrlab import tables


def test_capacities():
    assert tables.byte_capacity(1, "L") == 17
    assert tables.byte_capacity(1, "H") == 7
    assert tables.byte_capacity(10, "L") == 271


def test_block_layout_sums_to_total():
    for v in range(1, tables.MAX_VERSION + 1):
        for ec in tables.EC_LEVELS:
            blocks = tables.block_layout(v, ec)
            assert sum(k + e for k, e in blocks) == tables.TOTAL_CODEWORDS[v]
            assert len({e for _, e in blocks}) == 1
            assert sum(k for k, _ in blocks) == tables.data_capacity(v, ec)


def test_known_bch_words():
    assert tables.format_word("M", 0) == 0x5412
    assert tables.version_word(7) == 0x7C94


def test_format_words_pairwise_distance():
    words = list(tables.FORMAT_WORDS)
    assert len(words) == 32
    d = min(bin(a ^ b).count("1") for i, a in enumerate(words) for b in words[i + 1:])
    assert d >= 7


@pytest.mark.parametrize("mask", range(8))
def test_mask_pattern_definitions(mask):
    formulas = [
        lambda r, c: (r + c) % 2 == 0,
        lambda r, c: r % 2 == 0,
        lambda r, c: c % 3 == 0,
        lambda r, c: (r + c) % 3 == 0,
        lambda r, c: (r // 2 + c // 3) % 2 == 0,
        lambda r, c: (r * c) % 2 + (r * c) % 3 == 0,
        lambda r, c: ((r * c) % 2 + (r * c) % 3) % 2 == 0,
        lambda r, c: ((r + c) % 2 + (r * c) % 3) % 2 == 0,
    ]
    expect = np.array([[formulas[mask](r, c) for c in range(21)] for r in range(21)])
    assert np.array_equal(tables.mask_pattern(mask, 21), expect)
