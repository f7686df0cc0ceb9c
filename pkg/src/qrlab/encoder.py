"""Byte-mode QR symbol encoder (versions 1-10) and renderer."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import tables
from .rs import rs_parity

AUTO = None


class PayloadTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class QrSpec:
    payload: bytes
    ec: str = "M"
    mask: int | None = AUTO
    version: int | None = None

    def __post_init__(self):
        if isinstance(self.payload, str):
            object.__setattr__(self, "payload", self.payload.encode("utf-8"))
        if self.ec not in tables.EC_LEVELS:
            raise ValueError(f"unknown EC level {self.ec!r}")
        if self.mask is not None and not 0 <= self.mask <= 7:
            raise ValueError("mask must be in 0..7 or AUTO")


@dataclass
class ModuleMatrix:
    """Square grid of modules; ``cells`` is a bool array, True = dark."""

    version: int
    cells: np.ndarray

    @property
    def side(self):
        return self.cells.shape[0]

    def copy(self):
        return ModuleMatrix(self.version, self.cells.copy())

    def __eq__(self, other):
        return (isinstance(other, ModuleMatrix) and self.version == other.version
                and np.array_equal(self.cells, other.cells))


def select_version(payload_len, ec):
    if payload_len < 1:
        raise ValueError("payload_len must be >= 1")
    for v in range(1, tables.MAX_VERSION + 1):
        if tables.byte_capacity(v, ec) >= payload_len:
            return v
    raise PayloadTooLarge(f"{payload_len} bytes do not fit version {tables.MAX_VERSION}-{ec}")


def _finder(cells, reserved, row, col):
    side = cells.shape[0]
    for dr in range(-1, 8):
        for dc in range(-1, 8):
            r, c = row + dr, col + dc
            if not (0 <= r < side and 0 <= c < side):
                continue
            ring = max(abs(dr - 3), abs(dc - 3))
            cells[r, c] = ring in (0, 1, 3) if ring < 4 else False
            reserved[r, c] = True


@lru_cache(maxsize=None)
def function_template(version):
    """(dark, reserved) arrays holding every non-data module of a version.

    Format areas are reserved but left light; they are filled per symbol.
    """
    side = tables.side_for(version)
    cells = np.zeros((side, side), dtype=bool)
    reserved = np.zeros((side, side), dtype=bool)
    _finder(cells, reserved, 0, 0)
    _finder(cells, reserved, 0, side - 7)
    _finder(cells, reserved, side - 7, 0)
    for i in range(8, side - 8):
        cells[6, i] = cells[i, 6] = i % 2 == 0
        reserved[6, i] = reserved[i, 6] = True
    pos = tables.ALIGNMENT[version]
    corners = {(pos[0], pos[0]), (pos[0], pos[-1]), (pos[-1], pos[0])} if pos else set()
    for r in pos:
        for c in pos:
            if (r, c) in corners:
                continue
            for dr in range(-2, 3):
                for dc in range(-2, 3):
                    cells[r + dr, c + dc] = max(abs(dr), abs(dc)) != 1
                    reserved[r + dr, c + dc] = True
    reserved[8, :9] = reserved[:9, 8] = True
    reserved[8, side - 8:] = reserved[side - 8:, 8] = True
    cells[side - 8, 8] = True
    if version >= 7:
        word = tables.version_word(version)
        for i in range(18):
            bit = bool(word >> i & 1)
            a, b = i // 3, side - 11 + i % 3
            cells[a, b] = cells[b, a] = bit
            reserved[a, b] = reserved[b, a] = True
    cells.flags.writeable = False
    reserved.flags.writeable = False
    return cells, reserved


@lru_cache(maxsize=None)
def data_positions(version):
    """(rows, cols) of data modules in placement order."""
    side = tables.side_for(version)
    _, reserved = function_template(version)
    rows, cols = [], []
    right = side - 1
    while right >= 1:
        if right == 6:
            right = 5
        upward = (right + 1) & 2 == 0
        for vert in range(side):
            r = side - 1 - vert if upward else vert
            for c in (right, right - 1):
                if not reserved[r, c]:
                    rows.append(r)
                    cols.append(c)
        right -= 2
    return np.array(rows), np.array(cols)


def format_positions(side):
    """Two lists of 15 (row, col) pairs; entry i holds format bit i."""
    first = [(i, 8) for i in range(6)] + [(7, 8), (8, 8), (8, 7)]
    first += [(8, 14 - i) for i in range(9, 15)]
    second = [(8, side - 1 - i) for i in range(8)]
    second += [(side - 15 + i, 8) for i in range(8, 15)]
    return first, second


def _bitstream(payload, version, ec):
    """Data codewords: mode, count, bytes, terminator, 0xEC/0x11 padding."""
    capacity = tables.data_capacity(version, ec)
    cb = tables.count_bits(version)
    n = len(payload)
    head = [0, 1, 0, 0] + [(n >> i) & 1 for i in range(cb - 1, -1, -1)]
    body = np.unpackbits(np.frombuffer(bytes(payload), dtype=np.uint8))
    used = len(head) + len(body)
    term = min(4, capacity * 8 - used)
    bits = np.concatenate([np.array(head, dtype=np.uint8), body,
                           np.zeros(term + (-(used + term) % 8), dtype=np.uint8)])
    words = np.packbits(bits).tolist()
    pad = 0xEC
    while len(words) < capacity:
        words.append(pad)
        pad ^= 0xEC ^ 0x11
    return words


def interleave(words, version, ec):
    """Split data codewords into blocks, add parity, interleave."""
    layout = tables.block_layout(version, ec)
    blocks, parities = [], []
    k = 0
    for nd, ne in layout:
        block = words[k:k + nd]
        k += nd
        blocks.append(block)
        parities.append(rs_parity(block, ne))
    out = []
    for i in range(max(len(b) for b in blocks)):
        out += [b[i] for b in blocks if i < len(b)]
    for i in range(layout[0][1]):
        out += [p[i] for p in parities]
    return out


def codeword_bits(words, n_positions):
    bits = np.unpackbits(np.array(words, dtype=np.uint8))
    out = np.zeros(n_positions, dtype=bool)
    out[:len(bits)] = bits[:n_positions]
    return out


@lru_cache(maxsize=None)
def _mask_stack(side):
    masks = np.stack([tables.mask_pattern(m, side) for m in range(8)])
    masks.flags.writeable = False
    return masks


# 1011101 with four light modules after / before, as 11-bit words
_N3_WORDS = (0b10111010000, 0b00001011101)


def _line_penalties(g):
    """N1 + N3 along the last axis of a (..., side, side) bool stack."""
    eq = g[..., 1:] == g[..., :-1]
    five = eq[..., :-3] & eq[..., 1:-2] & eq[..., 2:-1] & eq[..., 3:]
    # a run of length L holds L - 4 windows of five and scores L - 2
    starts = five.copy()
    starts[..., 1:] &= ~eq[..., :-4]
    n1 = five.sum(axis=(-2, -1)) + 2 * starts.sum(axis=(-2, -1))
    n = g.shape[-1] - 10
    word = g[..., :n].astype(np.int16)
    for k in range(1, 11):
        word <<= 1
        word |= g[..., k:k + n]
    n3 = ((word == _N3_WORDS[0]) | (word == _N3_WORDS[1])).sum(axis=(-2, -1))
    return n1 + 40 * n3


def penalty(cells):
    """Mask penalty (rules N1-N4) of a bool matrix or a stack of them."""
    g = np.asarray(cells, dtype=bool)
    side = g.shape[-1]
    both = np.concatenate([g[None], np.swapaxes(g, -1, -2)[None]])
    score = _line_penalties(both).sum(axis=0)
    a = g[..., :-1, :-1]
    same = (a == g[..., 1:, :-1]) & (a == g[..., :-1, 1:]) & (a == g[..., 1:, 1:])
    score = score + 3 * same.sum(axis=(-2, -1))
    dark = g.sum(axis=(-2, -1)) / (side * side)
    score = score + 10 * np.floor(np.abs(dark * 100 - 50) / 5).astype(np.int64)
    return score


@lru_cache(maxsize=None)
def _format_index(side):
    first, second = format_positions(side)
    rc = np.array(first + second)
    return rc[:, 0], rc[:, 1]


@lru_cache(maxsize=None)
def _placement(version):
    """Flat data indices, per-mask data flips and flat format indices."""
    side = tables.side_for(version)
    rows, cols = data_positions(version)
    fr, fc = _format_index(side)
    return rows * side + cols, _mask_stack(side)[:, rows, cols], fr * side + fc


@lru_cache(maxsize=None)
def _format_bits(ec, masks):
    words = [tables.format_word(ec, m) for m in masks]
    bits = np.array([[w >> i & 1 for i in range(15)] for w in words], dtype=bool)
    return np.concatenate([bits, bits], axis=1)


def encode_matrix(spec):
    """Build the module matrix for a QrSpec."""
    payload = spec.payload
    version = spec.version or select_version(len(payload), spec.ec)
    if not 1 <= version <= tables.MAX_VERSION:
        raise PayloadTooLarge(f"version {version} is not supported")
    if tables.byte_capacity(version, spec.ec) < len(payload):
        raise PayloadTooLarge(f"{len(payload)} bytes do not fit version {version}-{spec.ec}")
    words = interleave(_bitstream(payload, version, spec.ec), version, spec.ec)
    flat_data, data_masks, flat_format = _placement(version)
    bits = codeword_bits(words, len(flat_data))
    base, _ = function_template(version)
    side = base.shape[0]
    masks = [spec.mask] if spec.mask is not None else list(range(8))
    stack = np.repeat(base.reshape(1, -1), len(masks), axis=0)
    stack[:, flat_data] = bits ^ data_masks[masks]
    stack[:, flat_format] = _format_bits(spec.ec, tuple(masks))
    stack = stack.reshape(len(masks), side, side)
    best = 0 if len(masks) == 1 else int(np.argmin(penalty(stack)))
    return ModuleMatrix(version, stack[best].copy())


def encode(text, ec="M", mask=AUTO, version=None):
    return encode_matrix(QrSpec(text, ec, mask, version))


def render(matrix, scale=1, quiet=4):
    """Gray image (dark = 0.0, light = 1.0) with ``quiet`` modules of margin."""
    if scale < 1 or quiet < 0:
        raise ValueError("scale must be >= 1 and quiet >= 0")
    cells = matrix.cells if isinstance(matrix, ModuleMatrix) else np.asarray(matrix, dtype=bool)
    padded = np.pad(~cells, quiet, constant_values=True)
    if scale > 1:
        padded = padded.repeat(scale, axis=0).repeat(scale, axis=1)
    return padded.astype(np.float64)
