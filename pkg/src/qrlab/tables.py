"""ISO/IEC 18004 constants for QR versions 1-10."""

import numpy as np

MAX_VERSION = 10

EC_LEVELS = ("L", "M", "Q", "H")
EC_RECOVERY = {"L": 0.07, "M": 0.15, "Q": 0.25, "H": 0.30}
# two-bit indicator written into the format information
EC_FORMAT_BITS = {"L": 0b01, "M": 0b00, "Q": 0b11, "H": 0b10}
FORMAT_BITS_EC = {v: k for k, v in EC_FORMAT_BITS.items()}

# version -> level -> (ec codewords per block, [(block count, data codewords), ...])
BLOCKS = {
    1: {"L": (7, [(1, 19)]), "M": (10, [(1, 16)]), "Q": (13, [(1, 13)]), "H": (17, [(1, 9)])},
    2: {"L": (10, [(1, 34)]), "M": (16, [(1, 28)]), "Q": (22, [(1, 22)]), "H": (28, [(1, 16)])},
    3: {"L": (15, [(1, 55)]), "M": (26, [(1, 44)]), "Q": (18, [(2, 17)]), "H": (22, [(2, 13)])},
    4: {"L": (20, [(1, 80)]), "M": (18, [(2, 32)]), "Q": (26, [(2, 24)]), "H": (16, [(4, 9)])},
    5: {"L": (26, [(1, 108)]), "M": (24, [(2, 43)]), "Q": (18, [(2, 15), (2, 16)]),
        "H": (22, [(2, 11), (2, 12)])},
    6: {"L": (18, [(2, 68)]), "M": (16, [(4, 27)]), "Q": (24, [(4, 19)]), "H": (28, [(4, 15)])},
    7: {"L": (20, [(2, 78)]), "M": (18, [(4, 31)]), "Q": (18, [(2, 14), (4, 15)]),
        "H": (26, [(4, 13), (1, 14)])},
    8: {"L": (24, [(2, 97)]), "M": (22, [(2, 38), (2, 39)]), "Q": (22, [(4, 18), (2, 19)]),
        "H": (26, [(4, 14), (2, 15)])},
    9: {"L": (30, [(2, 116)]), "M": (22, [(3, 36), (2, 37)]), "Q": (20, [(4, 16), (4, 17)]),
        "H": (24, [(4, 12), (4, 13)])},
    10: {"L": (18, [(2, 68), (2, 69)]), "M": (26, [(4, 43), (1, 44)]),
         "Q": (24, [(6, 19), (2, 20)]), "H": (28, [(6, 15), (2, 16)])},
}

TOTAL_CODEWORDS = {1: 26, 2: 44, 3: 70, 4: 100, 5: 134, 6: 172, 7: 196, 8: 242, 9: 292, 10: 346}

ALIGNMENT = {
    1: [], 2: [6, 18], 3: [6, 22], 4: [6, 26], 5: [6, 30], 6: [6, 34],
    7: [6, 22, 38], 8: [6, 24, 42], 9: [6, 26, 46], 10: [6, 28, 50],
}

FORMAT_MASK = 0x5412
FORMAT_GEN = 0x537
VERSION_GEN = 0x1F25


def side_for(version):
    return 17 + 4 * version


def version_for_side(side):
    v, r = divmod(side - 17, 4)
    if r or not 1 <= v <= MAX_VERSION:
        raise ValueError(f"no supported version has side {side}")
    return v


def block_layout(version, ec):
    """List of (data codewords, ec codewords) per block, in block order."""
    ecc, groups = BLOCKS[version][ec]
    return [(d, ecc) for count, d in groups for _ in range(count)]


def data_capacity(version, ec):
    return sum(d for d, _ in block_layout(version, ec))


def count_bits(version):
    return 8 if version < 10 else 16


def byte_capacity(version, ec):
    """Maximum payload bytes in byte mode."""
    return (8 * data_capacity(version, ec) - 4 - count_bits(version)) // 8


def _bch(value, gen, nbits):
    glen = gen.bit_length()
    rem = value << (glen - 1)
    for shift in range(nbits + glen - 2, glen - 2, -1):
        if rem >> shift & 1:
            rem ^= gen << (shift - glen + 1)
    return (value << (glen - 1)) | rem


def format_word(ec, mask):
    """15-bit masked format information for (ec level, mask)."""
    return _bch((EC_FORMAT_BITS[ec] << 3) | mask, FORMAT_GEN, 5) ^ FORMAT_MASK


def version_word(version):
    return _bch(version, VERSION_GEN, 6)


FORMAT_WORDS = {format_word(ec, m): (ec, m) for ec in EC_LEVELS for m in range(8)}


def mask_pattern(mask, side):
    """Boolean side x side array, True where the mask flips a data module."""
    r, c = np.indices((side, side))
    if mask == 0:
        m = (r + c) % 2 == 0
    elif mask == 1:
        m = r % 2 == 0
    elif mask == 2:
        m = c % 3 == 0
    elif mask == 3:
        m = (r + c) % 3 == 0
    elif mask == 4:
        m = (r // 2 + c // 3) % 2 == 0
    elif mask == 5:
        m = (r * c) % 2 + (r * c) % 3 == 0
    elif mask == 6:
        m = ((r * c) % 2 + (r * c) % 3) % 2 == 0
    elif mask == 7:
        m = ((r + c) % 2 + (r * c) % 3) % 2 == 0
    else:
        raise ValueError(f"mask must be in 0..7, got {mask}")
    return m
